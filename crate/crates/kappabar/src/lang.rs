//! The regular languages `L_{n,p}(α)`: words obtained by recursively
//! replacing each `(w+q)`-power by concrete exponents `n+q, n+p+q, ...`.
//! Structured regular expressions, NFA synthesis, intersection emptiness
//! with witnesses, DFA minimization and the counter-freeness check.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::term::{Offset, Term, TermError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("scheme too small: n = {n} must exceed the scale {scale}")]
    SchemeTooSmall { n: usize, scale: u64 },
    #[error("n = {n} must be a positive multiple of p = {p}")]
    NotMultiple { n: usize, p: usize },
    #[error("the empty term denotes no language")]
    EmptyTerm,
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("desk scale exceeded: {0}")]
    DeskScale(String),
}

/// A pair (n, p) with p ≥ 1, n a multiple of p, governing `L_{n,p}`.
/// For the separation results it must also satisfy `n - p > μ` and
/// `p > 2ν` of every governed term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheme {
    pub n: usize,
    pub p: usize,
}

impl Scheme {
    pub fn new(n: usize, p: usize) -> Result<Self, LangError> {
        if p == 0 || n == 0 || n % p != 0 {
            return Err(LangError::NotMultiple { n, p });
        }
        Ok(Scheme { n, p })
    }

    /// Whether the scheme satisfies the separation constraints for `t`.
    pub fn governs(&self, t: &Term) -> bool {
        (self.n as u64).saturating_sub(self.p as u64) > t.crucial_bound()
            && (self.p as u64) > 2 * t.scale()
    }
}

/// The arithmetic progression `{n + jp + q : j >= 0}` as (first, step).
pub fn q_bar(scheme: Scheme, q: Offset) -> Result<(usize, usize), LangError> {
    if (scheme.n as u64) <= q.unsigned_abs() {
        return Err(LangError::SchemeTooSmall {
            n: scheme.n,
            scale: q.unsigned_abs(),
        });
    }
    Ok(((scheme.n as i64 + q) as usize, scheme.p))
}

/// Smallest scheme from the construction `p = 2·max ν + 1`,
/// `T = max(μ, lengths if requested)`, `n = p·ceil((T+p+1)/p)`.
pub fn compute_scheme(terms: &[Term], require_length_bound: bool) -> Scheme {
    let max_scale = terms.iter().map(Term::scale).max().unwrap_or(0);
    let p = (2 * max_scale + 1) as usize;
    let mut bound = terms.iter().map(Term::crucial_bound).max().unwrap_or(0);
    if require_length_bound {
        bound = bound.max(terms.iter().map(|t| t.paren_len() as u64).max().unwrap_or(0));
    }
    let t = bound as usize;
    let n = p * (t + p + 1).div_ceil(p);
    Scheme { n, p }
}

/// Structured regular expression mirroring
/// `L(α) = L(γ0) L(δ1)^(n+q1) (L(δ1)^p)* L(γ1) ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LangSpec {
    Literal(String),
    Concat(Vec<LangSpec>),
    Power(Box<LangSpec>, usize),
    StarPower(Box<LangSpec>, usize),
}

impl LangSpec {
    fn is_single_char(&self) -> bool {
        matches!(self, LangSpec::Literal(s) if s.chars().count() == 1)
    }
}

impl fmt::Display for LangSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn powered(inner: &LangSpec, k: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if inner.is_single_char() {
                write!(f, "{inner}^{k}")
            } else {
                write!(f, "({inner})^{k}")
            }
        }
        match self {
            LangSpec::Literal(s) => f.write_str(s),
            LangSpec::Concat(parts) => {
                for p in parts {
                    write!(f, "{p}")?;
                }
                Ok(())
            }
            LangSpec::Power(inner, k) => powered(inner, *k, f),
            LangSpec::StarPower(inner, p) => {
                f.write_str("(")?;
                powered(inner, *p, f)?;
                f.write_str(")*")
            }
        }
    }
}

/// Recursive synthesis of `L_{n,p}(t)`; requires `n` greater than the scale
/// of the term.
pub fn build_lang(t: &Term, scheme: Scheme) -> Result<LangSpec, LangError> {
    if t.is_empty() {
        return Err(LangError::EmptyTerm);
    }
    if (scheme.n as u64) <= t.scale() {
        return Err(LangError::SchemeTooSmall {
            n: scheme.n,
            scale: t.scale(),
        });
    }
    Ok(build_rec(t, scheme)?)
}

fn build_rec(t: &Term, scheme: Scheme) -> Result<LangSpec, LangError> {
    if t.rank() == 0 {
        let word: String = t
            .atoms()
            .iter()
            .map(|a| match a {
                crate::term::Atom::Letter(l) => l.as_char(),
                _ => unreachable!("rank 0"),
            })
            .collect();
        return Ok(LangSpec::Literal(word));
    }
    let d = t.decompose()?;
    let mut parts = Vec::new();
    if !d.head.is_empty() {
        parts.push(build_rec(&d.head, scheme)?);
    }
    for e in &d.entries {
        let inner = build_rec(&e.base, scheme)?;
        let (first, step) = q_bar(scheme, e.offset)?;
        parts.push(LangSpec::Power(Box::new(inner.clone()), first));
        parts.push(LangSpec::StarPower(Box::new(inner), step));
        if !e.tail.is_empty() {
            parts.push(build_rec(&e.tail, scheme)?);
        }
    }
    Ok(if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        LangSpec::Concat(parts)
    })
}

// ---------------------------------------------------------------------------
// NFA
// ---------------------------------------------------------------------------

/// An ε-free NFA with sparse transitions.
#[derive(Debug, Clone)]
pub struct Nfa {
    pub transitions: Vec<Vec<(char, usize)>>,
    pub initials: Vec<usize>,
    pub accepting: Vec<bool>,
    pub alphabet: Vec<char>,
}

impl Nfa {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn accepts(&self, word: &str) -> bool {
        let mut current: BTreeSet<usize> = self.initials.iter().copied().collect();
        for c in word.chars() {
            let mut next = BTreeSet::new();
            for &s in &current {
                for &(sym, tgt) in &self.transitions[s] {
                    if sym == c {
                        next.insert(tgt);
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            current = next;
        }
        current.iter().any(|&s| self.accepting[s])
    }
}

/// A fragment under construction: edges plus entry/exit interface.
struct Block {
    states: usize,
    edges: Vec<(usize, char, usize)>,
    starts: Vec<usize>,
    finals: Vec<usize>,
    nullable: bool,
}

impl Block {
    fn literal(word: &str) -> Block {
        let chars: Vec<char> = word.chars().collect();
        let states = chars.len() + 1;
        let edges = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, c, i + 1))
            .collect();
        Block {
            states,
            edges,
            starts: vec![0],
            finals: vec![chars.len()],
            nullable: chars.is_empty(),
        }
    }

    fn shift(&self, offset: usize) -> Block {
        Block {
            states: self.states,
            edges: self
                .edges
                .iter()
                .map(|&(a, c, b)| (a + offset, c, b + offset))
                .collect(),
            starts: self.starts.iter().map(|&s| s + offset).collect(),
            finals: self.finals.iter().map(|&s| s + offset).collect(),
            nullable: self.nullable,
        }
    }

    /// ε-free concatenation: each final of `self` inherits the out-edges of
    /// `other`'s start states.
    fn concat(self, other: Block) -> Block {
        let other = other.shift(self.states);
        let mut edges = self.edges;
        let start_edges: Vec<(char, usize)> = other
            .edges
            .iter()
            .filter(|(a, _, _)| other.starts.contains(a))
            .map(|&(_, c, b)| (c, b))
            .collect();
        for &f in &self.finals {
            for &(c, b) in &start_edges {
                edges.push((f, c, b));
            }
        }
        edges.extend(other.edges.iter().copied());
        let mut finals = other.finals.clone();
        if other.nullable {
            finals.extend(self.finals.iter().copied());
        }
        let mut starts = self.starts.clone();
        if self.nullable {
            starts.extend(other.starts.iter().copied());
        }
        Block {
            states: self.states + other.states,
            edges,
            starts,
            finals,
            nullable: self.nullable && other.nullable,
        }
    }

    fn power(self, k: usize) -> Block {
        assert!(k >= 1, "powers in language specs are positive");
        let template = self;
        let mut acc = template.shift(0);
        for _ in 1..k {
            acc = acc.concat(template.shift(0));
        }
        acc
    }

    /// Kleene star: loop the finals back onto the start out-edges.
    fn star(self) -> Block {
        let start_edges: Vec<(char, usize)> = self
            .edges
            .iter()
            .filter(|(a, _, _)| self.starts.contains(a))
            .map(|&(_, c, b)| (c, b))
            .collect();
        let mut edges = self.edges;
        for &f in &self.finals {
            for &(c, b) in &start_edges {
                edges.push((f, c, b));
            }
        }
        let mut finals = self.finals;
        finals.extend(self.starts.iter().copied());
        Block {
            states: self.states,
            edges,
            starts: self.starts,
            finals,
            nullable: true,
        }
    }
}

fn compile(spec: &LangSpec) -> Block {
    match spec {
        LangSpec::Literal(w) => Block::literal(w),
        LangSpec::Concat(parts) => {
            let mut blocks = parts.iter().map(compile);
            let first = blocks.next().expect("concat is nonempty");
            blocks.fold(first, Block::concat)
        }
        LangSpec::Power(inner, k) => compile(inner).power(*k),
        LangSpec::StarPower(inner, p) => compile(inner).power(*p).star(),
    }
}

/// Compile the structured expression into an ε-free NFA.
pub fn to_nfa(spec: &LangSpec) -> Nfa {
    let block = compile(spec);
    let mut transitions = vec![Vec::new(); block.states];
    let mut alphabet = BTreeSet::new();
    for (a, c, b) in block.edges {
        transitions[a].push((c, b));
        alphabet.insert(c);
    }
    for row in &mut transitions {
        row.sort();
        row.dedup();
    }
    let mut accepting = vec![false; transitions.len()];
    let mut finals = block.finals;
    finals.sort_unstable();
    finals.dedup();
    for f in finals {
        accepting[f] = true;
    }
    let mut initials = block.starts;
    initials.sort_unstable();
    initials.dedup();
    Nfa {
        transitions,
        initials,
        accepting,
        alphabet: alphabet.into_iter().collect(),
    }
}

/// Shortest word in the intersection of the two languages (ties broken by
/// symbol order), or `None` when the intersection is empty. Breadth-first
/// search on the reachable part of the product.
pub fn intersection_witness(a: &Nfa, b: &Nfa) -> Option<String> {
    let mut alphabet: Vec<char> = a
        .alphabet
        .iter()
        .filter(|c| b.alphabet.contains(c))
        .copied()
        .collect();
    alphabet.sort_unstable();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    let mut parent: HashMap<(usize, usize), ((usize, usize), char)> = HashMap::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &sa in &a.initials {
        for &sb in &b.initials {
            if seen.insert((sa, sb)) {
                queue.push_back((sa, sb));
            }
        }
    }
    let reconstruct = |end: (usize, usize), parent: &HashMap<_, ((usize, usize), char)>| {
        let mut word = Vec::new();
        let mut cur = end;
        while let Some(&(prev, c)) = parent.get(&cur) {
            word.push(c);
            cur = prev;
        }
        word.reverse();
        word.into_iter().collect::<String>()
    };
    while let Some((sa, sb)) = queue.pop_front() {
        if a.accepting[sa] && b.accepting[sb] {
            return Some(reconstruct((sa, sb), &parent));
        }
        for &c in &alphabet {
            for &(ca, ta) in &a.transitions[sa] {
                if ca != c {
                    continue;
                }
                for &(cb, tb) in &b.transitions[sb] {
                    if cb != c {
                        continue;
                    }
                    if seen.insert((ta, tb)) {
                        parent.insert((ta, tb), ((sa, sb), c));
                        queue.push_back((ta, tb));
                    }
                }
            }
        }
    }
    None
}

/// `true` iff the two NFAs share no word.
pub fn intersect_empty(a: &Nfa, b: &Nfa) -> bool {
    intersection_witness(a, b).is_none()
}

// ---------------------------------------------------------------------------
// DFA, minimization, equivalence, counter-freeness
// ---------------------------------------------------------------------------

/// A complete DFA; the last state may be a sink.
#[derive(Debug, Clone)]
pub struct Dfa {
    pub alphabet: Vec<char>,
    /// `transitions[s][k]` is the successor of s on `alphabet[k]`.
    pub transitions: Vec<Vec<usize>>,
    pub start: usize,
    pub accepting: Vec<bool>,
}

impl Dfa {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn accepts(&self, word: &str) -> bool {
        let mut s = self.start;
        for c in word.chars() {
            let Some(k) = self.alphabet.iter().position(|&a| a == c) else {
                return false;
            };
            s = self.transitions[s][k];
        }
        self.accepting[s]
    }
}

/// Subset construction, capped. The result is complete (a sink is added
/// when needed).
pub fn determinize(nfa: &Nfa, state_cap: usize) -> Result<Dfa, LangError> {
    let alphabet = nfa.alphabet.clone();
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut transitions: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();

    let intern = |set: Vec<usize>,
                      subsets: &mut Vec<Vec<usize>>,
                      queue: &mut VecDeque<usize>,
                      ids: &mut HashMap<Vec<usize>, usize>|
     -> usize {
        if let Some(&id) = ids.get(&set) {
            return id;
        }
        let id = subsets.len();
        ids.insert(set.clone(), id);
        subsets.push(set);
        queue.push_back(id);
        id
    };

    let mut start: Vec<usize> = nfa.initials.clone();
    start.sort_unstable();
    start.dedup();
    let start_id = intern(start, &mut subsets, &mut queue, &mut ids);
    while let Some(id) = queue.pop_front() {
        if subsets.len() > state_cap {
            return Err(LangError::DeskScale(format!(
                "subset construction exceeded {state_cap} states"
            )));
        }
        let subset = subsets[id].clone();
        let mut row = Vec::with_capacity(alphabet.len());
        for &c in &alphabet {
            let mut next: Vec<usize> = Vec::new();
            for &s in &subset {
                for &(sym, tgt) in &nfa.transitions[s] {
                    if sym == c {
                        next.push(tgt);
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            row.push(intern(next, &mut subsets, &mut queue, &mut ids));
        }
        if transitions.len() <= id {
            transitions.resize(subsets.len().max(id + 1), Vec::new());
        }
        transitions[id] = row;
    }
    transitions.resize(subsets.len(), Vec::new());
    let accepting = subsets
        .iter()
        .map(|set| set.iter().any(|&s| nfa.accepting[s]))
        .collect();
    Ok(Dfa {
        alphabet,
        transitions,
        start: start_id,
        accepting,
    })
}

/// Moore partition refinement.
pub fn minimize(dfa: &Dfa) -> Dfa {
    let n = dfa.state_count();
    let mut class: Vec<usize> = dfa.accepting.iter().map(|&a| a as usize).collect();
    loop {
        let mut signature: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut next_class = vec![0usize; n];
        for s in 0..n {
            let sig = (
                class[s],
                dfa.transitions[s].iter().map(|&t| class[t]).collect::<Vec<_>>(),
            );
            let fresh = signature.len();
            let id = *signature.entry(sig).or_insert(fresh);
            next_class[s] = id;
        }
        if next_class == class {
            break;
        }
        class = next_class;
    }
    let classes = class.iter().max().map_or(0, |&m| m + 1);
    let mut transitions = vec![Vec::new(); classes];
    let mut accepting = vec![false; classes];
    for s in 0..n {
        transitions[class[s]] = dfa.transitions[s].iter().map(|&t| class[t]).collect();
        accepting[class[s]] = dfa.accepting[s];
    }
    Dfa {
        alphabet: dfa.alphabet.clone(),
        transitions,
        start: class[dfa.start],
        accepting,
    }
}

/// Language equivalence of two NFAs by product of determinizations;
/// returns a word in the symmetric difference when they differ.
pub fn equivalent(a: &Nfa, b: &Nfa, state_cap: usize) -> Result<Result<(), String>, LangError> {
    let mut alphabet: BTreeSet<char> = a.alphabet.iter().copied().collect();
    alphabet.extend(b.alphabet.iter().copied());
    let alphabet: Vec<char> = alphabet.into_iter().collect();
    let pad = |nfa: &Nfa| -> Nfa {
        let mut n = nfa.clone();
        n.alphabet = alphabet.clone();
        n
    };
    let da = determinize(&pad(a), state_cap)?;
    let db = determinize(&pad(b), state_cap)?;
    let mut queue = VecDeque::new();
    let mut parent: HashMap<(usize, usize), ((usize, usize), char)> = HashMap::new();
    let mut seen = BTreeSet::new();
    queue.push_back((da.start, db.start));
    seen.insert((da.start, db.start));
    while let Some((sa, sb)) = queue.pop_front() {
        if da.accepting[sa] != db.accepting[sb] {
            let mut word = Vec::new();
            let mut cur = (sa, sb);
            while let Some(&(prev, c)) = parent.get(&cur) {
                word.push(c);
                cur = prev;
            }
            word.reverse();
            return Ok(Err(word.into_iter().collect()));
        }
        for (k, &c) in alphabet.iter().enumerate() {
            let next = (da.transitions[sa][k], db.transitions[sb][k]);
            if seen.insert(next) {
                parent.insert(next, ((sa, sb), c));
                queue.push_back(next);
            }
        }
    }
    Ok(Ok(()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CounterFreeness {
    /// The transition monoid is aperiodic.
    CounterFree,
    /// A transformation with a nontrivial cycle exists; the language is not
    /// star-free.
    HasCounter,
    /// The monoid exceeded the cap; no verdict at desk scale.
    Undecided { monoid_size_cap: usize },
}

/// Counter-freeness of a (minimal, complete) DFA: generate the transition
/// monoid and test `m^k = m^(k+1)` for every element. `cap` bounds the
/// monoid exploration; beyond it the check reports `Undecided`, never a
/// silent pass.
pub fn is_counter_free(dfa: &Dfa, cap: usize) -> CounterFreeness {
    let n = dfa.state_count();
    let compose = |f: &[usize], g: &[usize]| -> Vec<usize> { f.iter().map(|&x| g[x]).collect() };
    let generators: Vec<Vec<usize>> = (0..dfa.alphabet.len())
        .map(|k| (0..n).map(|s| dfa.transitions[s][k]).collect())
        .collect();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut queue: VecDeque<Vec<usize>> = VecDeque::new();
    for g in &generators {
        if seen.insert(g.clone()) {
            queue.push_back(g.clone());
        }
    }
    let mut elements: Vec<Vec<usize>> = Vec::new();
    while let Some(m) = queue.pop_front() {
        elements.push(m.clone());
        if elements.len() > cap {
            return CounterFreeness::Undecided {
                monoid_size_cap: cap,
            };
        }
        for g in &generators {
            let next = compose(&m, g);
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    // aperiodicity: the power trajectory of each element must reach a
    // fixed point rather than a nontrivial cycle
    for m in &elements {
        let mut trajectory: Vec<Vec<usize>> = vec![m.clone()];
        loop {
            let next = compose(trajectory.last().unwrap(), m);
            if let Some(pos) = trajectory.iter().position(|x| *x == next) {
                let cycle = trajectory.len() - pos;
                if cycle > 1 {
                    return CounterFreeness::HasCounter;
                }
                break;
            }
            trajectory.push(next);
            if trajectory.len() > cap {
                return CounterFreeness::Undecided {
                    monoid_size_cap: cap,
                };
            }
        }
    }
    CounterFreeness::CounterFree
}
