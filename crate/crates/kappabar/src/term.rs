//! The κ̄-term data model.
//!
//! A term over a finite alphabet is a nonempty sequence of atoms, where an
//! atom is either a letter or a limit power `(base)^(w+q)` for an integer
//! offset `q`. Concatenation is kept flattened, so structural equality of
//! terms coincides with equality of their well-parenthesized words over the
//! extended alphabet `A_Z = A ∪ {<q, >q : q ∈ Z}`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Exponent offset of a limit power. Arithmetic on offsets is always checked;
/// overflow is reported, never wrapped.
pub type Offset = i64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("empty term")]
    Empty,
    #[error("limit power with empty base")]
    EmptyBase,
    #[error("plain power exponent must be at least 2, got {0}")]
    SmallPower(i64),
    #[error("letter out of range: {0:?} (expected 'a'..='z')")]
    BadLetter(char),
    #[error("rank-0 term has no limit-term decomposition")]
    RankZero,
    #[error("mismatched or unbalanced parenthesis at symbol {0}")]
    ParenMismatch(usize),
    #[error("empty parenthesis factor at symbol {0}")]
    EmptyParens(usize),
    #[error("expected a kappa term: offset {0} is not -1")]
    NotKappa(Offset),
    #[error("expansion needs one exponent >= 1 per limit term")]
    BadExpansion,
    #[error("exponent overflow")]
    Overflow,
}

/// Interpretation mode: `S` decides equality over all finite semigroups,
/// `A` over all finite aperiodic semigroups (ω-terms; every offset is 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    S,
    A,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::S => "S",
            Mode::A => "A",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" => Ok(Mode::S),
            "A" | "a" => Ok(Mode::A),
            other => Err(format!("unknown mode {other:?} (expected S or A)")),
        }
    }
}

/// A letter of the alphabet, restricted to `'a'..='z'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(char);

impl Letter {
    pub fn new(c: char) -> Result<Self, TermError> {
        if c.is_ascii_lowercase() {
            Ok(Letter(c))
        } else {
            Err(TermError::BadLetter(c))
        }
    }

    pub fn as_char(self) -> char {
        self.0
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A limit power `(base)^(w+offset)`. The base is always nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LimitPower {
    base: Term,
    offset: Offset,
}

impl LimitPower {
    pub fn new(base: Term, offset: Offset) -> Result<Self, TermError> {
        if base.is_empty() {
            return Err(TermError::EmptyBase);
        }
        Ok(LimitPower { base, offset })
    }

    pub fn base(&self) -> &Term {
        &self.base
    }

    pub fn offset(&self) -> Offset {
        self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Letter(Letter),
    Limit(LimitPower),
}

impl Atom {
    pub fn letter(c: char) -> Result<Self, TermError> {
        Ok(Atom::Letter(Letter::new(c)?))
    }

    pub fn limit(base: Term, offset: Offset) -> Result<Self, TermError> {
        Ok(Atom::Limit(LimitPower::new(base, offset)?))
    }

    pub fn rank(&self) -> usize {
        match self {
            Atom::Letter(_) => 0,
            Atom::Limit(lp) => 1 + lp.base.rank(),
        }
    }
}

/// A κ̄-term: a flattened sequence of atoms. The empty term is allowed as an
/// intermediate value but is rejected at parse/render boundaries and as a
/// limit-power base.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Term {
    atoms: Vec<Atom>,
}

impl Term {
    pub fn empty() -> Self {
        Term { atoms: Vec::new() }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        Term { atoms }
    }

    pub fn letter(c: char) -> Result<Self, TermError> {
        Ok(Term {
            atoms: vec![Atom::letter(c)?],
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> Term {
        Term {
            atoms: self.atoms[start..end].to_vec(),
        }
    }

    /// Concatenation, flattened.
    pub fn concat<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        let mut atoms = Vec::new();
        for p in parts {
            atoms.extend(p.atoms);
        }
        Term { atoms }
    }

    pub fn repeat(&self, n: usize) -> Term {
        let mut atoms = Vec::with_capacity(self.atoms.len() * n);
        for _ in 0..n {
            atoms.extend_from_slice(&self.atoms);
        }
        Term { atoms }
    }

    /// Maximum nesting depth of limit powers.
    pub fn rank(&self) -> usize {
        self.atoms.iter().map(Atom::rank).max().unwrap_or(0)
    }

    /// Number of symbols of the well-parenthesized word.
    pub fn paren_len(&self) -> usize {
        self.atoms
            .iter()
            .map(|a| match a {
                Atom::Letter(_) => 1,
                Atom::Limit(lp) => 2 + lp.base.paren_len(),
            })
            .sum()
    }

    /// Letters occurring anywhere in the term.
    pub fn letters(&self) -> BTreeSet<Letter> {
        let mut out = BTreeSet::new();
        fn walk(t: &Term, out: &mut BTreeSet<Letter>) {
            for a in &t.atoms {
                match a {
                    Atom::Letter(l) => {
                        out.insert(*l);
                    }
                    Atom::Limit(lp) => walk(&lp.base, out),
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// ν: the largest absolute exponent offset occurring in the term
    /// (0 for words, by the empty-max convention).
    pub fn scale(&self) -> u64 {
        self.atoms
            .iter()
            .map(|a| match a {
                Atom::Letter(_) => 0,
                Atom::Limit(lp) => lp.offset.unsigned_abs().max(lp.base.scale()),
            })
            .max()
            .unwrap_or(0)
    }

    /// μ: 2^rank times the longest crucial portion of the square, measured in
    /// paren-word symbols. Zero for rank-0 terms.
    pub fn crucial_bound(&self) -> u64 {
        if self.rank() == 0 {
            return 0;
        }
        let sq = Term::concat([self.clone(), self.clone()]);
        let parts = sq.portions().expect("square of a rank>=1 term has rank>=1");
        let longest = parts
            .crucial
            .iter()
            .map(|p| p.term.paren_len() as u64)
            .max()
            .expect("square has at least one crucial portion");
        let rank = self.rank();
        assert!(rank < 63, "rank out of desk scale");
        (1u64 << rank) * longest
    }

    /// Replace every offset by 0 (the ω-term underlying the term; sound over
    /// aperiodic semigroups, where s^(w+q) = s^w).
    pub fn zero_offsets(&self) -> Term {
        let atoms = self
            .atoms
            .iter()
            .map(|a| match a {
                Atom::Letter(l) => Atom::Letter(*l),
                Atom::Limit(lp) => Atom::Limit(LimitPower {
                    base: lp.base.zero_offsets(),
                    offset: 0,
                }),
            })
            .collect();
        Term { atoms }
    }

    /// Top-level decomposition `γ0 <q1 δ1> γ1 ... <qn δn> γn` of a rank ≥ 1
    /// term, where the `δk` are the bases of the maximal-rank limit powers.
    pub fn decompose(&self) -> Result<Decomposition, TermError> {
        let rank = self.rank();
        if rank == 0 {
            return Err(TermError::RankZero);
        }
        let mut head = Vec::new();
        let mut entries: Vec<LimitEntry> = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            match a {
                Atom::Limit(lp) if a.rank() == rank => {
                    entries.push(LimitEntry {
                        offset: lp.offset,
                        base: lp.base.clone(),
                        tail: Term::empty(),
                        atom_index: i,
                    });
                }
                other => {
                    let slot = match entries.last_mut() {
                        Some(e) => &mut e.tail.atoms,
                        None => &mut head,
                    };
                    slot.push(other.clone());
                }
            }
        }
        Ok(Decomposition {
            head: Term::from_atoms(head),
            entries,
        })
    }

    /// Number of maximal-rank limit terms in the top-level decomposition.
    pub fn lt_length(&self) -> Result<usize, TermError> {
        Ok(self.decompose()?.entries.len())
    }

    /// Initial, final, crucial and circular portions of a rank ≥ 1 term.
    pub fn portions(&self) -> Result<Portions, TermError> {
        let d = self.decompose()?;
        let n = d.entries.len();
        let len = self.atoms.len();
        let first = &d.entries[0];
        let last = &d.entries[n - 1];

        let initial = PortionView {
            kind: PortionKind::Initial,
            term: self.slice(0, first.atom_index + 1),
            range: (0, first.atom_index + 1),
            wrap: None,
        };
        let final_ = PortionView {
            kind: PortionKind::Final,
            term: self.slice(last.atom_index, len),
            range: (last.atom_index, len),
            wrap: None,
        };
        let mut crucial = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let s = d.entries[k].atom_index;
            let e = d.entries[k + 1].atom_index + 1;
            crucial.push(PortionView {
                kind: PortionKind::Crucial,
                term: self.slice(s, e),
                range: (s, e),
                wrap: None,
            });
        }
        let circular = PortionView {
            kind: PortionKind::Circular,
            term: Term::concat([final_.term.clone(), initial.term.clone()]),
            range: (last.atom_index, len),
            wrap: Some((0, first.atom_index + 1)),
        };
        Ok(Portions {
            initial,
            final_,
            crucial,
            circular,
        })
    }

    /// Replace the k-th maximal-rank limit term by `base^exps[k]`.
    /// The result has rank exactly `rank(self) - 1`.
    pub fn expansion(&self, exps: &[usize]) -> Result<Term, TermError> {
        let d = self.decompose()?;
        if exps.len() != d.entries.len() || exps.iter().any(|&j| j == 0) {
            return Err(TermError::BadExpansion);
        }
        let mut parts = vec![d.head.clone()];
        for (e, &j) in d.entries.iter().zip(exps) {
            parts.push(e.base.repeat(j));
            parts.push(e.tail.clone());
        }
        Ok(Term::concat(parts))
    }

    /// The 2-expansion used by condition (cf.1); rank-0 terms are their own
    /// unique expansion.
    pub fn two_expansion(&self) -> Term {
        match self.decompose() {
            Ok(d) => self
                .expansion(&vec![2; d.entries.len()])
                .expect("uniform 2-expansion is valid"),
            Err(_) => self.clone(),
        }
    }

    pub fn to_paren_word(&self) -> ParenWord {
        let mut symbols = Vec::with_capacity(self.paren_len());
        fn walk(t: &Term, out: &mut Vec<Symbol>) {
            for a in &t.atoms {
                match a {
                    Atom::Letter(l) => out.push(Symbol::Letter(*l)),
                    Atom::Limit(lp) => {
                        out.push(Symbol::Open(lp.offset));
                        walk(&lp.base, out);
                        out.push(Symbol::Close(lp.offset));
                    }
                }
            }
        }
        walk(self, &mut symbols);
        ParenWord { symbols }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({self})")
    }
}

/// One maximal-rank limit term of a decomposition, together with the material
/// that follows it (up to the next maximal-rank limit term).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitEntry {
    pub offset: Offset,
    pub base: Term,
    pub tail: Term,
    /// Index of the limit atom in the owner's atom sequence.
    pub atom_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub head: Term,
    pub entries: Vec<LimitEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortionKind {
    Initial,
    Final,
    Crucial,
    Circular,
}

/// A portion of a term: its kind, the materialized factor, and the atom
/// range it occupies in the owner (`wrap` holds the leading range for the
/// circular portion, which spans the end and the beginning).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortionView {
    pub kind: PortionKind,
    pub term: Term,
    pub range: (usize, usize),
    pub wrap: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Portions {
    pub initial: PortionView,
    pub final_: PortionView,
    pub crucial: Vec<PortionView>,
    pub circular: PortionView,
}

// ---------------------------------------------------------------------------
// Paren-word representation
// ---------------------------------------------------------------------------

/// A symbol of the extended alphabet `A_Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Open(Offset),
    Letter(Letter),
    Close(Offset),
}

impl Ord for Symbol {
    /// The total order on A_Z: `<p < <q < letter < >q < >p` whenever `p < q`,
    /// letters in alphabetical order.
    fn cmp(&self, other: &Self) -> Ordering {
        use Symbol::*;
        match (self, other) {
            (Open(p), Open(q)) => p.cmp(q),
            (Open(_), _) => Ordering::Less,
            (_, Open(_)) => Ordering::Greater,
            (Letter(a), Letter(b)) => a.cmp(b),
            (Letter(_), Close(_)) => Ordering::Less,
            (Close(_), Letter(_)) => Ordering::Greater,
            (Close(p), Close(q)) => q.cmp(p),
        }
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Open(q) => write!(f, "<{q}"),
            Symbol::Letter(l) => write!(f, "{l}"),
            Symbol::Close(q) => write!(f, ">{q}"),
        }
    }
}

/// A sequence of symbols over `A_Z`. Words produced from terms are balanced
/// and well-nested; arbitrary fragments (used by prefix/suffix tests) need
/// not be.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ParenWord {
    symbols: Vec<Symbol>,
}

impl ParenWord {
    pub fn from_symbols(symbols: Vec<Symbol>) -> Self {
        ParenWord { symbols }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Parse the space-separated debug format, e.g. `"<5 <-1 a >-1 b a >5"`.
    pub fn parse(text: &str) -> Result<Self, TermError> {
        let mut symbols = Vec::new();
        for tok in text.split_whitespace() {
            let sym = if let Some(rest) = tok.strip_prefix('<') {
                Symbol::Open(rest.parse().map_err(|_| TermError::Syntax {
                    pos: 0,
                    msg: format!("bad open symbol {tok:?}"),
                })?)
            } else if let Some(rest) = tok.strip_prefix('>') {
                Symbol::Close(rest.parse().map_err(|_| TermError::Syntax {
                    pos: 0,
                    msg: format!("bad close symbol {tok:?}"),
                })?)
            } else if tok.len() == 1 {
                Symbol::Letter(Letter::new(tok.chars().next().unwrap())?)
            } else {
                return Err(TermError::Syntax {
                    pos: 0,
                    msg: format!("bad symbol {tok:?}"),
                });
            };
            symbols.push(sym);
        }
        Ok(ParenWord { symbols })
    }
}

impl fmt::Display for ParenWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Rebuild a term from a balanced paren word. Inverse of
/// [`Term::to_paren_word`].
pub fn from_paren_word(w: &ParenWord) -> Result<Term, TermError> {
    let mut stack: Vec<(Offset, usize, Vec<Atom>)> = Vec::new();
    let mut current: Vec<Atom> = Vec::new();
    for (i, s) in w.symbols.iter().enumerate() {
        match s {
            Symbol::Letter(l) => current.push(Atom::Letter(*l)),
            Symbol::Open(q) => {
                stack.push((*q, i, std::mem::take(&mut current)));
            }
            Symbol::Close(q) => {
                let (open_q, _, parent) = stack.pop().ok_or(TermError::ParenMismatch(i))?;
                if open_q != *q {
                    return Err(TermError::ParenMismatch(i));
                }
                if current.is_empty() {
                    return Err(TermError::EmptyParens(i));
                }
                let base = Term::from_atoms(std::mem::replace(&mut current, parent));
                current.push(Atom::limit(base, *q)?);
            }
        }
    }
    if let Some((_, pos, _)) = stack.last() {
        return Err(TermError::ParenMismatch(*pos));
    }
    Ok(Term::from_atoms(current))
}

// ---------------------------------------------------------------------------
// Parsing and rendering of the term grammar
// ---------------------------------------------------------------------------

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TermError> {
        Err(TermError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, b: u8) -> Result<(), TermError> {
        match self.bump() {
            Some(got) if got == b => Ok(()),
            Some(got) => {
                self.pos -= 1;
                self.err(format!("expected {:?}, found {:?}", b as char, got as char))
            }
            None => self.err(format!("expected {:?}, found end of input", b as char)),
        }
    }

    fn nat(&mut self) -> Result<i64, TermError> {
        let start = self.pos;
        let mut val: i64 = 0;
        let mut seen = false;
        while let Some(b @ b'0'..=b'9') = self.bytes.get(self.pos).copied() {
            seen = true;
            val = val
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as i64))
                .ok_or(TermError::Overflow)?;
            self.pos += 1;
        }
        if !seen {
            self.pos = start;
            return self.err("expected a number");
        }
        Ok(val)
    }

    /// exp := 'w' [('+'|'-') nat] | nat(>=2), with optional enclosing parens.
    fn exponent(&mut self) -> Result<Exp, TermError> {
        let parens = self.peek() == Some(b'(');
        if parens {
            self.bump();
        }
        let exp = match self.peek() {
            Some(b'w') => {
                self.bump();
                let off = match self.peek() {
                    Some(b'+') => {
                        self.bump();
                        self.skip_ws();
                        self.nat()?
                    }
                    Some(b'-') => {
                        self.bump();
                        self.skip_ws();
                        self.nat()?.checked_neg().ok_or(TermError::Overflow)?
                    }
                    _ => 0,
                };
                Exp::Limit(off)
            }
            Some(b'0'..=b'9') => {
                self.skip_ws();
                let n = self.nat()?;
                if n < 2 {
                    return Err(TermError::SmallPower(n));
                }
                Exp::Plain(n as usize)
            }
            _ => return self.err("expected exponent ('w', 'w+k', 'w-k' or an integer >= 2)"),
        };
        if parens {
            self.expect(b')')?;
        }
        Ok(exp)
    }

    fn factor(&mut self) -> Result<Option<Term>, TermError> {
        match self.peek() {
            Some(b @ b'a'..=b'z') => {
                self.bump();
                Ok(Some(Term::letter(b as char)?))
            }
            Some(b'(') => {
                self.bump();
                let inner = self.term()?;
                self.expect(b')')?;
                if inner.is_empty() {
                    return Err(TermError::Empty);
                }
                // A '^' exponent makes this a power; a bare "(term)" is
                // redundant grouping.
                if self.peek() == Some(b'^') {
                    self.bump();
                    match self.exponent()? {
                        Exp::Limit(q) => Ok(Some(Term::from_atoms(vec![Atom::limit(inner, q)?]))),
                        Exp::Plain(n) => Ok(Some(inner.repeat(n))),
                    }
                } else {
                    Ok(Some(inner))
                }
            }
            _ => Ok(None),
        }
    }

    fn term(&mut self) -> Result<Term, TermError> {
        let mut parts = Vec::new();
        while let Some(f) = self.factor()? {
            parts.push(f);
        }
        Ok(Term::concat(parts))
    }
}

enum Exp {
    Limit(Offset),
    Plain(usize),
}

/// Parse the term grammar. Plain positive powers `(β)^n` with `n >= 2` are
/// expanded into n-fold concatenation; the AST has no plain-power node.
pub fn parse_term(text: &str) -> Result<Term, TermError> {
    let mut p = Parser::new(text);
    let t = p.term()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return p.err("unexpected input");
    }
    if t.is_empty() {
        return Err(TermError::Empty);
    }
    Ok(t)
}

impl fmt::Display for Term {
    /// Render in the term grammar; output re-parses to an identical term.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.atoms {
            match a {
                Atom::Letter(l) => write!(f, "{l}")?,
                Atom::Limit(lp) => {
                    write!(f, "({})^", lp.base)?;
                    match lp.offset {
                        0 => f.write_str("w")?,
                        q if q > 0 => write!(f, "(w+{q})")?,
                        q => write!(f, "(w-{})", q.unsigned_abs())?,
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// κ ↔ κ̄ conversions
// ---------------------------------------------------------------------------

/// Rewrite every limit power into the κ signature, using
/// `x^(w+q) = x^(w-1) x^(q+1)` for `q >= 0` and `x^(w+q) = (x^(w-1))^(-q)`
/// for `q < 0`. The result is equivalent over every finite semigroup.
pub fn bk_to_kappa(t: &Term) -> Result<Term, TermError> {
    let mut atoms = Vec::new();
    for a in t.atoms() {
        match a {
            Atom::Letter(l) => atoms.push(Atom::Letter(*l)),
            Atom::Limit(lp) => {
                let base = bk_to_kappa(&lp.base)?;
                let q = lp.offset;
                if q >= 0 {
                    atoms.push(Atom::limit(base.clone(), -1)?);
                    let copies = usize::try_from(q + 1).map_err(|_| TermError::Overflow)?;
                    atoms.extend(base.repeat(copies).atoms);
                } else {
                    let copies = usize::try_from(-q).map_err(|_| TermError::Overflow)?;
                    for _ in 0..copies {
                        atoms.push(Atom::limit(base.clone(), -1)?);
                    }
                }
            }
        }
    }
    Ok(Term::from_atoms(atoms))
}

/// Check that the term lies in the κ signature (every offset is -1) and
/// return it unchanged as a κ̄-term.
pub fn kappa_to_bk(t: &Term) -> Result<Term, TermError> {
    fn check(t: &Term) -> Result<(), TermError> {
        for a in t.atoms() {
            if let Atom::Limit(lp) = a {
                if lp.offset != -1 {
                    return Err(TermError::NotKappa(lp.offset));
                }
                check(&lp.base)?;
            }
        }
        Ok(())
    }
    check(t)?;
    Ok(t.clone())
}

/// Every contiguous atom slice of every nested sequence: the balanced
/// factors of the paren word. Used by subterm-closure checks.
pub fn subterm_slices(t: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    fn walk(t: &Term, out: &mut Vec<Term>) {
        let n = t.atoms().len();
        for i in 0..n {
            for j in i + 1..=n {
                out.push(t.slice(i, j));
            }
        }
        for a in t.atoms() {
            if let Atom::Limit(lp) = a {
                walk(&lp.base, out);
            }
        }
    }
    walk(t, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(t("abab").atoms().len(), 4);
        assert_eq!(t("(ab)^2"), t("abab"));
        assert_eq!(t("((a)^(w-1)ba(ab)^w)^(w+5)").rank(), 2);
        // redundant grouping
        assert_eq!(t("((ab))"), t("ab"));
        assert_eq!(t("(a)^(w+0)"), t("(a)^w"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_term(""), Err(TermError::Empty)));
        assert!(matches!(parse_term("()^w"), Err(TermError::Empty)));
        assert!(matches!(parse_term("(a)^1"), Err(TermError::SmallPower(1))));
        assert!(matches!(parse_term("(a)^0"), Err(TermError::SmallPower(0))));
        assert!(matches!(parse_term("aA"), Err(TermError::Syntax { .. })));
        assert!(matches!(parse_term("(a"), Err(TermError::Syntax { .. })));
    }

    #[test]
    fn render_round_trip() {
        for s in [
            "(a)^w(b)^w",
            "((a)^w(b)^w)^w",
            "(a)^(w-1)",
            "((a)^(w-1)ba(ab)^w)^(w+5)",
            "abab",
            "(a)^(w+3)a",
        ] {
            let term = t(s);
            assert_eq!(parse_term(&term.to_string()).unwrap(), term);
        }
        assert_eq!(t("(a)^w(b)^w").to_string(), "(a)^w(b)^w");
        assert_eq!(t("(a)^(w-1)").to_string(), "(a)^(w-1)");
    }

    #[test]
    fn paren_word_golden() {
        let w = t("((a)^(w-1)ba(ab)^w)^(w+5)").to_paren_word();
        assert_eq!(w.to_string(), "<5 <-1 a >-1 b a <0 a b >0 >5");
        assert_eq!(ParenWord::parse("<5 <-1 a >-1 b a <0 a b >0 >5").unwrap(), w);
        assert_eq!(t("aab").to_paren_word().to_string(), "a a b");
    }

    #[test]
    fn paren_word_round_trip() {
        for s in ["((a)^(w-1)ba(ab)^w)^(w+5)", "aab", "((a)^w(b)^w)^w"] {
            let term = t(s);
            assert_eq!(from_paren_word(&term.to_paren_word()).unwrap(), term);
        }
    }

    #[test]
    fn paren_word_errors() {
        let unbalanced = ParenWord::parse("<1 a").unwrap();
        assert!(matches!(
            from_paren_word(&unbalanced),
            Err(TermError::ParenMismatch(_))
        ));
        let mismatch = ParenWord::parse("<1 a >2").unwrap();
        assert!(matches!(
            from_paren_word(&mismatch),
            Err(TermError::ParenMismatch(_))
        ));
        let empty = ParenWord::parse("a <1 >1 b").unwrap();
        assert!(matches!(
            from_paren_word(&empty),
            Err(TermError::EmptyParens(_))
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(t("((a)^(w-1)ba(ab)^w)^(w+5)").rank(), 2);
        assert_eq!(t("abab").rank(), 0);
        assert_eq!(t("((a)^w(b)^w)^w").rank(), 2);
    }

    #[test]
    fn decomposition_examples() {
        let d = t("(a)^wb(a)^(w-2)").decompose().unwrap();
        assert!(d.head.is_empty());
        assert_eq!(d.entries.len(), 2);
        assert_eq!(d.entries[0].offset, 0);
        assert_eq!(d.entries[0].base, t("a"));
        assert_eq!(d.entries[0].tail, t("b"));
        assert_eq!(d.entries[1].offset, -2);
        assert!(d.entries[1].tail.is_empty());

        let d = t("ab(abb)^wab(a)^(w-2)").decompose().unwrap();
        assert_eq!(d.head, t("ab"));
        assert_eq!(d.entries.len(), 2);

        assert_eq!(t("((a)^w(b)^w)^w").lt_length().unwrap(), 1);
        assert!(matches!(t("ab").decompose(), Err(TermError::RankZero)));
    }

    #[test]
    fn decomposition_skips_lower_rank_limits() {
        // (a)^w is rank 1 and lives inside the gamma of this rank-2 term.
        let d = t("(a)^w((b)^w)^w").decompose().unwrap();
        assert_eq!(d.entries.len(), 1);
        assert_eq!(d.head, t("(a)^w"));
        assert_eq!(d.entries[0].base, t("(b)^w"));
    }

    #[test]
    fn portions_examples() {
        let term = t("(a)^wb(a)^(w-2)");
        let p = term.portions().unwrap();
        assert_eq!(p.crucial.len(), 1);
        assert_eq!(p.initial.term, t("(a)^w"));
        assert_eq!(p.final_.term, t("(a)^(w-2)"));
        assert_eq!(p.circular.term, t("(a)^(w-2)(a)^w"));
        assert!(t("ab").portions().is_err());

        // the circular portion is a crucial portion of the square
        let sq = Term::concat([term.clone(), term.clone()]);
        let sq_crucial: Vec<_> = sq.portions().unwrap().crucial;
        assert!(sq_crucial.iter().any(|c| c.term == p.circular.term));
    }

    #[test]
    fn expansion_examples() {
        let term = t("((a)^w(b)^w)^w");
        assert_eq!(term.expansion(&[2]).unwrap(), t("(a)^w(b)^w(a)^w(b)^w"));
        assert_eq!(term.expansion(&[2]).unwrap().rank(), term.rank() - 1);
        assert_eq!(t("(ab)^w").expansion(&[1]).unwrap(), t("ab"));
        assert!(term.expansion(&[0]).is_err());
        assert!(term.expansion(&[]).is_err());
    }

    #[test]
    fn scale_examples() {
        assert_eq!(t("((a)^(w-1)ba(ab)^w)^(w+5)").scale(), 5);
        assert_eq!(t("abab").scale(), 0);
    }

    #[test]
    fn crucial_bound_examples() {
        assert_eq!(t("ab").crucial_bound(), 0);
        // ((a)^w b)^2 has the single crucial portion (a)^w b (a)^w of length 7
        assert_eq!(t("(a)^wb").crucial_bound(), 14);
    }

    #[test]
    fn paren_len_examples() {
        assert_eq!(t("abab").paren_len(), 4);
        assert_eq!(t("((a)^(w-1)b)^w(a)^(w+1)").paren_len(), 9);
        let term = t("(a)^wb");
        let sq = Term::concat([term.clone(), term]);
        assert_eq!(sq.paren_len(), 2 * t("(a)^wb").paren_len());
    }

    #[test]
    fn kappa_conversions() {
        assert_eq!(bk_to_kappa(&t("(a)^w")).unwrap(), t("(a)^(w-1)a"));
        assert_eq!(
            bk_to_kappa(&t("(a)^(w-2)")).unwrap(),
            t("(a)^(w-1)(a)^(w-1)")
        );
        assert_eq!(bk_to_kappa(&t("(a)^(w+1)")).unwrap(), t("(a)^(w-1)aa"));
        assert!(kappa_to_bk(&t("(a)^(w-1)ba")).is_ok());
        assert!(matches!(
            kappa_to_bk(&t("(a)^w")),
            Err(TermError::NotKappa(0))
        ));
    }

    #[test]
    fn symbol_order() {
        use Symbol::*;
        let a = Letter(super::Letter::new('a').unwrap());
        let b = Letter(super::Letter::new('b').unwrap());
        assert!(Open(-1) < Open(2));
        assert!(Open(2) < a);
        assert!(a < b);
        assert!(b < Close(5));
        assert!(Close(5) < Close(-1));
    }

    #[test]
    fn zero_offsets_works() {
        assert_eq!(
            t("((a)^(w-1)b)^(w+2)").zero_offsets(),
            t("((a)^wb)^w")
        );
    }
}
