//! The canonical form algorithm and the equality decision procedure.
//!
//! A rank-(i+1) term is canonical when (cf.1) its 2-expansion is a rank-i
//! canonical form, (cf.2) every base is a Lyndon term, (cf.3) no base is a
//! suffix of the material before its limit term, and (cf.4) no base is a
//! prefix of the material after it extended by powers of the next base.
//!
//! Canonicalization is Step 1 (limit-term restructuring down the ranks)
//! followed by Step 2 (Lyndon rotation and absorption at the top rank).
//! Every transformation is emitted as a Σ rewrite step and replayed through
//! [`apply_rule`], so requested derivation traces are valid by construction.

use thiserror::Error;

use crate::lyndon::{is_lyndon, is_word_prefix, is_word_suffix, minimal_conjugate, primitive_root};
use crate::rewrite::{
    apply_rule, invert_steps, lift_step, DerivationTrace, Direction, Pos, RewriteError,
    RewriteStep, RuleId,
};
use crate::term::{Atom, Mode, Offset, Term, TermError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonError {
    #[error("operation needs a term of rank at least 1")]
    RankZero,
    #[error("step 2 needs a semi-canonical input")]
    NotSemiCanonical,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonReport {
    pub input: Term,
    pub output: Term,
    pub mode: Mode,
    pub trace: Option<DerivationTrace>,
}

/// Outcome of normalizing a crucial portion `<q1 δ1> γ <q2 δ2>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrucialResult {
    /// The portion collapsed to a single limit term (only when δ1 = δ2).
    TypeI { offset: Offset, base: Term },
    /// The portion kept both limit terms, with a new middle.
    TypeII {
        left_offset: Offset,
        left_base: Term,
        middle: Term,
        right_offset: Offset,
        right_base: Term,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSide {
    Initial,
    Final,
}

// ---------------------------------------------------------------------------
// Canonicity predicates
// ---------------------------------------------------------------------------

fn canonical_rec(t: &Term) -> bool {
    if t.rank() == 0 {
        return true;
    }
    let d = t.decompose().expect("rank >= 1");
    // (cf.1)
    if !canonical_rec(&t.two_expansion()) {
        return false;
    }
    // (cf.2)
    if !d.entries.iter().all(|e| is_lyndon(&e.base)) {
        return false;
    }
    // (cf.3)
    for (k, e) in d.entries.iter().enumerate() {
        let before = if k == 0 { &d.head } else { &d.entries[k - 1].tail };
        let bw = e.base.to_paren_word();
        let cw = before.to_paren_word();
        if is_word_suffix(bw.symbols(), cw.symbols()) {
            return false;
        }
    }
    // (cf.4): the window γ_k δ_{k+1}^ℓ with the smallest ℓ reaching |δ_k|
    // settles the verdict for every ℓ; the last limit term is checked
    // against γ_n alone.
    for (k, e) in d.entries.iter().enumerate() {
        let bw = e.base.to_paren_word();
        let mut window = e.tail.to_paren_word().symbols().to_vec();
        if let Some(next) = d.entries.get(k + 1) {
            let nw = next.base.to_paren_word();
            while window.len() < bw.len() {
                window.extend_from_slice(nw.symbols());
            }
        }
        if is_word_prefix(bw.symbols(), &window) {
            return false;
        }
    }
    true
}

/// Conditions (cf.1)-(cf.4); in A-mode the term must also be an ω-term.
pub fn is_canonical(t: &Term, mode: Mode) -> bool {
    if mode == Mode::A && t.scale() != 0 {
        return false;
    }
    canonical_rec(t)
}

/// Condition (cf.1) alone: the 2-expansion is canonical.
pub fn is_semi_canonical(t: &Term) -> bool {
    canonical_rec(&t.two_expansion())
}

/// Whether the square is canonical.
pub fn is_circular_canonical(t: &Term) -> bool {
    canonical_rec(&Term::concat([t.clone(), t.clone()]))
}

// ---------------------------------------------------------------------------
// The rewriting flow: a term plus the steps that produced it
// ---------------------------------------------------------------------------

struct Flow {
    term: Term,
    steps: Vec<RewriteStep>,
    mode: Mode,
}

impl Flow {
    fn new(term: Term, mode: Mode) -> Self {
        Flow {
            term,
            steps: Vec::new(),
            mode,
        }
    }

    fn apply(&mut self, step: RewriteStep) -> Result<(), CanonError> {
        self.term = apply_rule(&self.term, &step, self.mode)?;
        self.steps.push(step);
        Ok(())
    }

    fn step(
        &mut self,
        rule: RuleId,
        direction: Direction,
        pos: Pos,
        params: Vec<i64>,
    ) -> Result<(), CanonError> {
        self.apply(RewriteStep::new(rule, direction, pos, params))
    }

    /// Replay a sub-derivation, re-anchored below `base_path` and shifted by
    /// `offset` within the addressed atom sequence.
    fn splice(
        &mut self,
        base_path: &[usize],
        offset: usize,
        steps: &[RewriteStep],
    ) -> Result<(), CanonError> {
        for s in steps {
            self.apply(lift_step(s, base_path, offset))?;
        }
        Ok(())
    }

    fn atoms(&self) -> &[Atom] {
        self.term.atoms()
    }
}

// ---------------------------------------------------------------------------
// Step 2 phases (shared with the portion normalizers)
// ---------------------------------------------------------------------------

/// 2.1: contract every maximal-rank base to its primitive root.
fn phase21(flow: &mut Flow) -> Result<(), CanonError> {
    let d = flow.term.decompose()?;
    for e in &d.entries {
        let (_, mult) = primitive_root(&e.base);
        if mult >= 2 {
            flow.step(
                RuleId::R2,
                Direction::Contraction,
                Pos::at(e.atom_index),
                vec![mult as i64],
            )?;
        }
    }
    Ok(())
}

/// 2.2: rotate every base to its Lyndon conjugate,
/// `<q γ1γ2> -> γ1 <q-1 γ2γ1> γ2` (a type-4L expansion plus a shift).
fn phase22(flow: &mut Flow) -> Result<(), CanonError> {
    let d = flow.term.decompose()?;
    for e in d.entries.iter().rev() {
        if is_lyndon(&e.base) {
            continue;
        }
        let (_, split) = minimal_conjugate(&e.base)
            .map_err(|_| CanonError::Internal("step 2.2 on a non-primitive base".into()))?;
        let k1 = split.left.atoms().len();
        let k2 = split.right.atoms().len();
        let m = e.base.atoms().len() as i64;
        flow.step(
            RuleId::R4L,
            Direction::Expansion,
            Pos::at(e.atom_index),
            vec![m],
        )?;
        flow.step(
            RuleId::R5,
            Direction::ShiftRight,
            Pos::at(e.atom_index + k1),
            vec![k2 as i64],
        )?;
    }
    Ok(())
}

/// 2.3: absorb every literal base copy adjacent to its limit term, left
/// copies before right copies, scanning limit terms left to right.
fn phase23(flow: &mut Flow) -> Result<bool, CanonError> {
    let mut changed = false;
    loop {
        let mut round = false;
        let n = flow.term.decompose()?.entries.len();
        for ord in 0..n {
            let d = flow.term.decompose()?;
            let e = &d.entries[ord];
            let base = e.base.clone();
            let m = base.atoms().len();
            let mut i = e.atom_index;
            while i >= m && flow.atoms()[i - m..i] == base.atoms()[..] {
                flow.step(RuleId::R4L, Direction::Contraction, Pos::at(i), vec![m as i64])?;
                i -= m;
                round = true;
            }
            while flow.atoms().len() >= i + 1 + m
                && flow.atoms()[i + 1..i + 1 + m] == base.atoms()[..]
            {
                flow.step(RuleId::R4R, Direction::Contraction, Pos::at(i), vec![m as i64])?;
                round = true;
            }
        }
        changed |= round;
        if !round {
            return Ok(changed);
        }
    }
}

/// 2.4: merge adjacent limit terms with equal bases.
fn phase24(flow: &mut Flow) -> Result<bool, CanonError> {
    let mut changed = false;
    loop {
        let d = flow.term.decompose()?;
        let hit = d.entries.windows(2).find_map(|w| {
            (w[0].tail.is_empty() && w[0].base == w[1].base)
                .then(|| (w[0].atom_index, w[0].offset, w[1].offset))
        });
        match hit {
            Some((i, p, q)) => {
                flow.step(RuleId::R3, Direction::Contraction, Pos::at(i), vec![p, q])?;
                changed = true;
            }
            None => return Ok(changed),
        }
    }
}

/// 2.5: fix each crucial portion left to right. With ℓ minimal such that
/// `|γ δ2^ℓ| >= |δ1|`, a portion where δ1 is a prefix of `γ δ2^ℓ` takes ℓ
/// type-4L expansions on the right and all possible type-4R contractions on
/// the left.
fn phase25(flow: &mut Flow) -> Result<bool, CanonError> {
    let mut changed = false;
    let n = flow.term.decompose()?.entries.len();
    if n < 2 {
        return Ok(false);
    }
    for ord in 0..n - 1 {
        let d = flow.term.decompose()?;
        let e1 = &d.entries[ord];
        let e2 = &d.entries[ord + 1];
        let b1 = e1.base.to_paren_word();
        let b2 = e2.base.to_paren_word();
        let mut window = e1.tail.to_paren_word().symbols().to_vec();
        let mut ell = 0usize;
        while window.len() < b1.len() {
            window.extend_from_slice(b2.symbols());
            ell += 1;
        }
        if !is_word_prefix(b1.symbols(), &window) {
            continue;
        }
        if ell == 0 {
            return Err(CanonError::Internal(
                "step 2.5 found a copy that step 2.3 should have absorbed".into(),
            ));
        }
        let m2 = e2.base.atoms().len();
        let mut right = e2.atom_index;
        for _ in 0..ell {
            flow.step(
                RuleId::R4L,
                Direction::Expansion,
                Pos::at(right),
                vec![m2 as i64],
            )?;
            right += m2;
        }
        let m1 = e1.base.atoms().len();
        let base1 = e1.base.clone();
        let i = e1.atom_index;
        let mut absorbed = 0usize;
        while flow.atoms().len() >= i + 1 + m1 && flow.atoms()[i + 1..i + 1 + m1] == base1.atoms()[..]
        {
            flow.step(RuleId::R4R, Direction::Contraction, Pos::at(i), vec![m1 as i64])?;
            absorbed += 1;
        }
        if absorbed == 0 {
            return Err(CanonError::Internal(
                "step 2.5 absorbed no copy after expanding".into(),
            ));
        }
        changed = true;
    }
    Ok(changed)
}

/// Run 2.3-2.5 to a fixed point; the theory says two passes suffice, a
/// third changing pass is an error rather than a guess.
fn stabilize(flow: &mut Flow) -> Result<(), CanonError> {
    for pass in 0..4 {
        let c23 = phase23(flow)?;
        let c24 = phase24(flow)?;
        let c25 = phase25(flow)?;
        if !(c23 || c24 || c25) {
            return Ok(());
        }
        if pass >= 2 {
            return Err(CanonError::Internal(
                "junction normalization did not stabilize within two passes".into(),
            ));
        }
    }
    Ok(())
}

fn step2_flow(flow: &mut Flow) -> Result<(), CanonError> {
    if flow.term.rank() == 0 {
        return Ok(());
    }
    phase21(flow)?;
    phase22(flow)?;
    stabilize(flow)
}

// ---------------------------------------------------------------------------
// Portion normalizers
// ---------------------------------------------------------------------------

/// Canonicalize `<q1 δ1> γ <q2 δ2>`: canonicalize γ, expose one copy of each
/// base, canonicalize the middle product, then run 2.3-2.5. Steps are
/// relative to the portion term.
fn normalize_crucial_flow(
    q1: Offset,
    d1: &Term,
    gamma: &Term,
    q2: Offset,
    d2: &Term,
    mode: Mode,
) -> Result<(CrucialResult, Term, Vec<RewriteStep>), CanonError> {
    let t0 = Term::concat([
        Term::from_atoms(vec![Atom::limit(d1.clone(), q1)?]),
        gamma.clone(),
        Term::from_atoms(vec![Atom::limit(d2.clone(), q2)?]),
    ]);
    let mut flow = Flow::new(t0, mode);
    let (gc, gsteps) = canon_term(gamma, mode)?;
    flow.splice(&[], 1, &gsteps)?;

    let m1 = d1.atoms().len();
    let m2 = d2.atoms().len();
    flow.step(RuleId::R4R, Direction::Expansion, Pos::at(0), vec![m1 as i64])?;
    let right = 1 + m1 + gc.atoms().len();
    flow.step(
        RuleId::R4L,
        Direction::Expansion,
        Pos::at(right),
        vec![m2 as i64],
    )?;

    let (p1, s1) = product_flow(d1, &gc, mode)?;
    flow.splice(&[], 1, &s1)?;
    let (_, s2) = product_flow(&p1, d2, mode)?;
    flow.splice(&[], 1, &s2)?;

    stabilize(&mut flow)?;

    let d = flow.term.decompose()?;
    let result = match d.entries.len() {
        1 => {
            let e = &d.entries[0];
            if !d.head.is_empty() || !e.tail.is_empty() || e.base != *d1 || d1 != d2 {
                return Err(CanonError::Internal(
                    "crucial portion collapsed to an unexpected shape".into(),
                ));
            }
            CrucialResult::TypeI {
                offset: e.offset,
                base: e.base.clone(),
            }
        }
        2 => {
            let (l, r) = (&d.entries[0], &d.entries[1]);
            if !d.head.is_empty() || !r.tail.is_empty() || l.base != *d1 || r.base != *d2 {
                return Err(CanonError::Internal(
                    "crucial portion normalized to an unexpected shape".into(),
                ));
            }
            CrucialResult::TypeII {
                left_offset: l.offset,
                left_base: l.base.clone(),
                middle: l.tail.clone(),
                right_offset: r.offset,
                right_base: r.base.clone(),
            }
        }
        _ => {
            return Err(CanonError::Internal(
                "crucial portion normalization changed the limit-term count".into(),
            ))
        }
    };
    Ok((result, flow.term, flow.steps))
}

/// Canonicalize an initial portion `γ <q δ>` or final portion `<q δ> γ` to
/// `ε <r δ>` respectively `<r δ> ε`. Steps relative to the portion term.
fn normalize_edge_flow(
    gamma: &Term,
    q: Offset,
    delta: &Term,
    side: EdgeSide,
    mode: Mode,
) -> Result<(Term, Offset, Term, Vec<RewriteStep>), CanonError> {
    let m = delta.atoms().len();
    let limit = Term::from_atoms(vec![Atom::limit(delta.clone(), q)?]);
    match side {
        EdgeSide::Initial => {
            let t0 = Term::concat([gamma.clone(), limit]);
            let mut flow = Flow::new(t0, mode);
            let (gc, gsteps) = canon_term(gamma, mode)?;
            flow.splice(&[], 0, &gsteps)?;
            flow.step(
                RuleId::R4L,
                Direction::Expansion,
                Pos::at(gc.atoms().len()),
                vec![m as i64],
            )?;
            let (prod, psteps) = product_flow(&gc, delta, mode)?;
            flow.splice(&[], 0, &psteps)?;
            let mut limit_idx = prod.atoms().len();
            while limit_idx >= m && flow.atoms()[limit_idx - m..limit_idx] == delta.atoms()[..] {
                flow.step(
                    RuleId::R4L,
                    Direction::Contraction,
                    Pos::at(limit_idx),
                    vec![m as i64],
                )?;
                limit_idx -= m;
            }
            let eps = flow.term.slice(0, limit_idx);
            let r = match &flow.atoms()[limit_idx] {
                Atom::Limit(lp) => lp.offset(),
                _ => return Err(CanonError::Internal("edge portion lost its limit".into())),
            };
            Ok((eps, r, flow.term, flow.steps))
        }
        EdgeSide::Final => {
            let t0 = Term::concat([limit, gamma.clone()]);
            let mut flow = Flow::new(t0, mode);
            let (gc, gsteps) = canon_term(gamma, mode)?;
            flow.splice(&[], 1, &gsteps)?;
            flow.step(RuleId::R4R, Direction::Expansion, Pos::at(0), vec![m as i64])?;
            let (_, psteps) = product_flow(delta, &gc, mode)?;
            flow.splice(&[], 1, &psteps)?;
            while flow.atoms().len() >= 1 + m && flow.atoms()[1..1 + m] == delta.atoms()[..] {
                flow.step(RuleId::R4R, Direction::Contraction, Pos::at(0), vec![m as i64])?;
            }
            let eps = flow.term.slice(1, flow.atoms().len());
            let r = match &flow.atoms()[0] {
                Atom::Limit(lp) => lp.offset(),
                _ => return Err(CanonError::Internal("edge portion lost its limit".into())),
            };
            Ok((eps, r, flow.term, flow.steps))
        }
    }
}

/// Canonical form of the product of two canonical forms: only the junction
/// portion is re-normalized. Steps relative to the concatenation.
fn product_flow(a: &Term, b: &Term, mode: Mode) -> Result<(Term, Vec<RewriteStep>), CanonError> {
    if a.is_empty() {
        return Ok((b.clone(), Vec::new()));
    }
    if b.is_empty() {
        return Ok((a.clone(), Vec::new()));
    }
    let (ra, rb) = (a.rank(), b.rank());
    if ra == 0 && rb == 0 {
        return Ok((Term::concat([a.clone(), b.clone()]), Vec::new()));
    }
    let mut flow = Flow::new(Term::concat([a.clone(), b.clone()]), mode);
    if ra < rb {
        let db = b.decompose()?;
        let first = &db.entries[0];
        let edge_gamma = Term::concat([a.clone(), db.head.clone()]);
        let (_, _, _, esteps) =
            normalize_edge_flow(&edge_gamma, first.offset, &first.base, EdgeSide::Initial, mode)?;
        flow.splice(&[], 0, &esteps)?;
    } else if ra > rb {
        let da = a.decompose()?;
        let last = da.entries.last().expect("rank >= 1");
        let edge_gamma = Term::concat([last.tail.clone(), b.clone()]);
        let (_, _, _, esteps) =
            normalize_edge_flow(&edge_gamma, last.offset, &last.base, EdgeSide::Final, mode)?;
        flow.splice(&[], last.atom_index, &esteps)?;
    } else {
        let da = a.decompose()?;
        let db = b.decompose()?;
        let la = da.entries.last().expect("rank >= 1");
        let fb = &db.entries[0];
        let gamma = Term::concat([la.tail.clone(), db.head.clone()]);
        let (_, _, csteps) =
            normalize_crucial_flow(la.offset, &la.base, &gamma, fb.offset, &fb.base, mode)?;
        flow.splice(&[], la.atom_index, &csteps)?;
    }
    Ok((flow.term, flow.steps))
}

// ---------------------------------------------------------------------------
// Step 1: limit-term reduction down the ranks
// ---------------------------------------------------------------------------

struct Reduced {
    /// The replacement occupies `[start, end)` of the top-level sequence.
    end: usize,
    /// Index of the replacement's own maximal-rank limit term, when the
    /// rank did not drop.
    limit: Option<usize>,
}

fn smallest_prime_factor(n: u64) -> u64 {
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return d;
        }
        d += 1;
    }
    n
}

/// Replace the rank-(i+1) limit term at `idx` by an equivalent
/// semi-canonical term, per the limit-term reduction.
fn reduce_limit_at(flow: &mut Flow, idx: usize) -> Result<Reduced, CanonError> {
    let (base, offset) = match &flow.atoms()[idx] {
        Atom::Limit(lp) => (lp.base().clone(), lp.offset()),
        _ => return Err(CanonError::Internal("reduce_limit_at off a limit".into())),
    };
    let d = base.decompose()?;
    let n = d.entries.len();

    if n == 1 && d.head.is_empty() && d.entries[0].tail.is_empty() {
        // <q <q1 δ1>> -> <q q1 δ1>
        flow.step(
            RuleId::R1,
            Direction::Contraction,
            Pos::at(idx),
            vec![d.entries[0].offset, offset],
        )?;
        return Ok(Reduced {
            end: idx + 1,
            limit: None,
        });
    }

    if n == 1 {
        let wrap = Term::concat([d.entries[0].tail.clone(), d.head.clone()]);
        let (cw, wrap_steps) = canon_term(&wrap, flow.mode)?;
        if power_multiplicity(&cw, &d.entries[0].base).is_some() {
            // type I circular portion: the wrap-around is a power of the base
            return rotate_reduce_at(flow, idx, &base, &wrap_steps);
        }
        // type II circular portion
        if offset == 1 || offset == -1 {
            // peel one copy: <q ρ> -> <q-1 ρ> ρ, reduce, then canonicalize
            // the ε1·ρ junction
            let blen = base.atoms().len();
            flow.step(
                RuleId::R4R,
                Direction::Expansion,
                Pos::at(idx),
                vec![blen as i64],
            )?;
            let inner = reduce_limit_at(flow, idx)?;
            let l1 = inner.limit.ok_or_else(|| {
                CanonError::Internal("type-II reduction lost its limit term".into())
            })?;
            let eps1 = flow.term.slice(l1 + 1, inner.end);
            let copy = flow.term.slice(inner.end, inner.end + blen);
            let (prod, psteps) = product_flow(&eps1, &copy, flow.mode)?;
            flow.splice(&[], l1 + 1, &psteps)?;
            return Ok(Reduced {
                end: l1 + 1 + prod.atoms().len(),
                limit: Some(l1),
            });
        }
        // factor a prime out of the exponent: <q ρ> -> <q/p ρ^p> and
        // canonicalize ρ^p inside the base (lt-length becomes p > 1)
        let p = if offset == 0 {
            2
        } else {
            smallest_prime_factor(offset.unsigned_abs())
        };
        flow.step(
            RuleId::R2,
            Direction::Expansion,
            Pos::at(idx),
            vec![p as i64],
        )?;
        let mut acc = base.clone();
        for _ in 1..p {
            let (next, psteps) = product_flow(&acc, &base, flow.mode)?;
            flow.splice(&[idx], 0, &psteps)?;
            acc = next;
        }
        if acc.decompose()?.entries.len() < 2 {
            return Err(CanonError::Internal(
                "power of a type-II term failed to raise the lt-length".into(),
            ));
        }
        return reduce_limit_at(flow, idx);
    }

    // lt-length > 1: the direct derivation.
    let head_len = d.head.atoms().len();
    let i_len = head_len + 1;
    let l0 = base.atoms().len();
    let r_len = l0 - i_len;
    let last = d.entries.last().expect("n > 1");
    let tail_n = last.tail.atoms().len();

    flow.step(
        RuleId::R4L,
        Direction::Expansion,
        Pos::at(idx),
        vec![l0 as i64],
    )?;
    flow.step(
        RuleId::R4R,
        Direction::Expansion,
        Pos::at(idx + l0),
        vec![l0 as i64],
    )?;
    flow.step(
        RuleId::R5,
        Direction::ShiftLeft,
        Pos::at(idx + l0),
        vec![i_len as i64],
    )?;
    // normalize the circular portion, inside the base and in the prefix
    let gamma = Term::concat([last.tail.clone(), d.head.clone()]);
    let first = &d.entries[0];
    let (_, circ_term, circ_steps) = normalize_crucial_flow(
        last.offset,
        &last.base,
        &gamma,
        first.offset,
        &first.base,
        flow.mode,
    )?;
    let limit_pos = idx + l0 + i_len;
    let circ_start_in_base = r_len - tail_n - 1;
    flow.splice(&[limit_pos], circ_start_in_base, &circ_steps)?;
    flow.splice(&[], idx + l0 - tail_n - 1, &circ_steps)?;
    let circ_len = circ_term.atoms().len();
    let nb_len = r_len - tail_n - 1 + circ_len;
    let new_limit_pos = idx + i_len + nb_len;
    flow.step(
        RuleId::R4L,
        Direction::Contraction,
        Pos::at(new_limit_pos),
        vec![nb_len as i64],
    )?;
    Ok(Reduced {
        end: idx + i_len + 1 + r_len,
        limit: Some(idx + i_len),
    })
}

/// Multiplicity p with `t = root^p`, if any.
fn power_multiplicity(t: &Term, root: &Term) -> Option<usize> {
    let (r, m) = (root.atoms().len(), t.atoms().len());
    if r == 0 || m % r != 0 {
        return None;
    }
    t.atoms()
        .chunks(r)
        .all(|c| c == root.atoms())
        .then_some(m / r)
}

/// Reduce `<q γ0 <q1 δ> γ1>` where the circular portion is of type I, i.e.
/// `γ1 γ0 ~ δ^p` for some p >= 0. Rotating the base turns the term into
/// `γ0 <r δ> γ1` with `r = (q1+p)(q-1) + q1`; for p = 1 this is the
/// published `r = q(q1+1) - 1`, for p = 0 the plain nested-power collapse.
fn rotate_reduce_at(
    flow: &mut Flow,
    idx: usize,
    base: &Term,
    wrap_steps: &[RewriteStep],
) -> Result<Reduced, CanonError> {
    let d = base.decompose()?;
    let h = d.head.atoms().len();
    let t_ = d.entries[0].tail.atoms().len();
    let blen = base.atoms().len();
    let k = 1 + t_; // atoms of <q1 δ> γ1, the rotated-out suffix

    // <q ρ> -> ρ <q-1 ρ>
    flow.step(
        RuleId::R4L,
        Direction::Expansion,
        Pos::at(idx),
        vec![blen as i64],
    )?;
    // γ0 (<q1 δ> γ1) <q-1 γ0 <q1 δ> γ1>  ->  γ0 <q-1 (<q1 δ> γ1) γ0> <q1 δ> γ1
    flow.step(
        RuleId::R5,
        Direction::ShiftRight,
        Pos::at(idx + h),
        vec![k as i64],
    )?;
    // inside the rotated base, rewrite γ1 γ0 into δ^p and absorb the copies
    let limit_pos = idx + h;
    flow.splice(&[limit_pos], 1, wrap_steps)?;
    let m = d.entries[0].base.atoms().len();
    loop {
        let inner = match &flow.atoms()[limit_pos] {
            Atom::Limit(lp) => lp.base().clone(),
            _ => unreachable!(),
        };
        if inner.atoms().len() == 1 {
            break;
        }
        flow.step(
            RuleId::R4R,
            Direction::Contraction,
            Pos::nested(vec![limit_pos], 0),
            vec![m as i64],
        )?;
    }
    // <q-1 <q1+p δ>> -> <(q1+p)(q-1) δ>, then merge with the exposed <q1 δ>
    let r1_params = match &flow.atoms()[limit_pos] {
        Atom::Limit(outer) => match outer.base().atoms() {
            [Atom::Limit(inner)] => vec![inner.offset(), outer.offset()],
            _ => unreachable!("base was contracted to a single limit"),
        },
        _ => unreachable!(),
    };
    flow.step(RuleId::R1, Direction::Contraction, Pos::at(limit_pos), r1_params)?;
    let r3_params = match (&flow.atoms()[limit_pos], &flow.atoms()[limit_pos + 1]) {
        (Atom::Limit(l), Atom::Limit(r)) => vec![l.offset(), r.offset()],
        _ => unreachable!("rotation exposed the following limit term"),
    };
    flow.step(RuleId::R3, Direction::Contraction, Pos::at(limit_pos), r3_params)?;
    Ok(Reduced {
        end: idx + h + 1 + t_,
        limit: None,
    })
}

fn step1_flow(flow: &mut Flow) -> Result<(), CanonError> {
    loop {
        let rank = flow.term.rank();
        if rank <= 1 {
            return Ok(());
        }
        // 1.2: canonicalize every base
        let d = flow.term.decompose()?;
        for e in &d.entries {
            let (_, bsteps) = canon_term(&e.base, flow.mode)?;
            flow.splice(&[e.atom_index], 0, &bsteps)?;
        }
        if flow.term.rank() < rank {
            continue;
        }
        // 1.3: replace every maximal-rank limit term
        let mut idx = 0;
        while idx < flow.atoms().len() {
            let is_target =
                matches!(&flow.atoms()[idx], Atom::Limit(lp) if 1 + lp.base().rank() == rank);
            if !is_target {
                idx += 1;
                continue;
            }
            let reduced = reduce_limit_at(flow, idx)?;
            idx = reduced.end;
        }
        if flow.term.rank() < rank {
            continue;
        }
        // 1.4: canonicalize the primary subterms that are not bases
        let d = flow.term.decompose()?;
        let mut slices = vec![(0usize, d.head.clone())];
        for e in &d.entries {
            slices.push((e.atom_index + 1, e.tail.clone()));
        }
        for (start, sub) in slices.into_iter().rev() {
            if sub.is_empty() {
                continue;
            }
            let (_, ssteps) = canon_term(&sub, flow.mode)?;
            flow.splice(&[], start, &ssteps)?;
        }
        return Ok(());
    }
}

/// Canonicalize a term, returning the result and the Σ derivation relative
/// to the input.
pub(crate) fn canon_term(t: &Term, mode: Mode) -> Result<(Term, Vec<RewriteStep>), CanonError> {
    if t.rank() == 0 {
        return Ok((t.clone(), Vec::new()));
    }
    let mut flow = Flow::new(t.clone(), mode);
    step1_flow(&mut flow)?;
    step2_flow(&mut flow)?;
    Ok((flow.term, flow.steps))
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Canonicalize. In A-mode all offsets are zeroed first (sound over
/// aperiodic semigroups); the report and trace start from the zeroed term.
pub fn canonicalize(t: &Term, mode: Mode, want_trace: bool) -> Result<CanonReport, CanonError> {
    let input = match mode {
        Mode::S => t.clone(),
        Mode::A => t.zero_offsets(),
    };
    let (output, steps) = canon_term(&input, mode)?;
    let trace = want_trace.then(|| DerivationTrace {
        mode,
        start: input.clone(),
        steps,
        end: output.clone(),
    });
    Ok(CanonReport {
        input,
        output,
        mode,
        trace,
    })
}

pub fn canonical_form(t: &Term, mode: Mode) -> Result<Term, CanonError> {
    Ok(canonicalize(t, mode, false)?.output)
}

/// Whether the two terms have the same interpretation over all finite
/// semigroups (S-mode) or all finite aperiodic semigroups (A-mode).
pub fn decide_equal(a: &Term, b: &Term, mode: Mode) -> Result<bool, CanonError> {
    Ok(canonical_form(a, mode)? == canonical_form(b, mode)?)
}

/// Step 1 alone: an equivalent semi-canonical form.
pub fn step1(t: &Term, mode: Mode) -> Result<Term, CanonError> {
    if t.rank() == 0 {
        return Err(CanonError::RankZero);
    }
    let start = match mode {
        Mode::S => t.clone(),
        Mode::A => t.zero_offsets(),
    };
    let mut flow = Flow::new(start, mode);
    step1_flow(&mut flow)?;
    Ok(flow.term)
}

/// Step 2 alone: the canonical form of a semi-canonical term.
pub fn step2(t: &Term, mode: Mode) -> Result<Term, CanonError> {
    let start = match mode {
        Mode::S => t.clone(),
        Mode::A => t.zero_offsets(),
    };
    if !is_semi_canonical(&start) {
        return Err(CanonError::NotSemiCanonical);
    }
    let mut flow = Flow::new(start, mode);
    step2_flow(&mut flow)?;
    Ok(flow.term)
}

/// The semi-canonical form equivalent to `(ρ)^(w+q)` for canonical ρ of
/// rank at least 1.
pub fn reduce_limit_term(q: Offset, rho: &Term, mode: Mode) -> Result<Term, CanonError> {
    if rho.rank() == 0 {
        return Err(CanonError::RankZero);
    }
    if !is_canonical(rho, mode) {
        return Err(CanonError::Precondition("base must be canonical".into()));
    }
    let q = if mode == Mode::A { 0 } else { q };
    let start = Term::from_atoms(vec![Atom::limit(rho.clone(), q)?]);
    let mut flow = Flow::new(start, mode);
    reduce_limit_at(&mut flow, 0)?;
    Ok(flow.term)
}

/// Canonicalize a crucial portion `<q1 δ1> γ <q2 δ2>`.
pub fn normalize_crucial_portion(
    q1: Offset,
    d1: &Term,
    gamma: &Term,
    q2: Offset,
    d2: &Term,
    mode: Mode,
) -> Result<CrucialResult, CanonError> {
    for d in [d1, d2] {
        if !is_lyndon(d) || !is_circular_canonical(d) {
            return Err(CanonError::Precondition(
                "bases must be Lyndon terms in circular canonical form".into(),
            ));
        }
    }
    if d1.rank() != d2.rank() || gamma.rank() > d1.rank() {
        return Err(CanonError::Precondition(
            "bases must have equal rank, at least the rank of the middle".into(),
        ));
    }
    let (q1, q2) = if mode == Mode::A { (0, 0) } else { (q1, q2) };
    let (result, _, _) = normalize_crucial_flow(q1, d1, gamma, q2, d2, mode)?;
    Ok(result)
}

/// Canonicalize an initial or final portion, returning the residue ε and the
/// updated exponent r.
pub fn normalize_edge_portion(
    gamma: &Term,
    q: Offset,
    delta: &Term,
    side: EdgeSide,
    mode: Mode,
) -> Result<(Term, Offset), CanonError> {
    if !is_lyndon(delta) || !is_circular_canonical(delta) {
        return Err(CanonError::Precondition(
            "base must be a Lyndon term in circular canonical form".into(),
        ));
    }
    if gamma.rank() > delta.rank() {
        return Err(CanonError::Precondition(
            "the edge material must not outrank the base".into(),
        ));
    }
    let q = if mode == Mode::A { 0 } else { q };
    let (eps, r, _, _) = normalize_edge_flow(gamma, q, delta, side, mode)?;
    Ok((eps, r))
}

/// Canonical form of the product of two canonical forms, computed by
/// re-normalizing only the junction portion.
pub fn product_canonical(a: &Term, b: &Term, mode: Mode) -> Result<Term, CanonError> {
    if !is_canonical(a, mode) || !is_canonical(b, mode) {
        return Err(CanonError::Precondition(
            "product inputs must be canonical".into(),
        ));
    }
    Ok(product_flow(a, b, mode)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::verify_derivation;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn canon_s(s: &str) -> Term {
        canonical_form(&t(s), Mode::S).unwrap()
    }

    fn canon_a(s: &str) -> Term {
        canonical_form(&t(s), Mode::A).unwrap()
    }

    #[test]
    fn canonical_examples() {
        assert!(is_canonical(&t("((a)^w(b)^w)^w"), Mode::S));
        assert!(is_canonical(&t("ab(abb)^wab(a)^(w-2)"), Mode::S));
        assert!(is_canonical(&t("(b)^(w-1)(a)^(w+4)b(ab)^(w+1)"), Mode::S));
        assert!(is_canonical(
            &t("(a)^(w+1)((b)^w(a)^(w+1))^(w-3)(b)^w(a)^(w+2)b"),
            Mode::S
        ));
        assert!(is_canonical(
            &t("((ab)^(w-1)(a)^(w-1)b(a)^wb)^(w+2)((a)^(w-1)b(a)^wb)^w"),
            Mode::S
        ));
    }

    #[test]
    fn semi_canonical_examples() {
        // every rank <= 1 term is semi-canonical
        assert!(is_semi_canonical(&t("(aa)^(w+1)b(ba)^w")));
        assert!(is_semi_canonical(&t("ab")));
        // the rank-2 semi-canonical form that is not canonical
        let alpha1 = t("(a)^w((b)^w(a)^w(b)^w(a)^w)^(w-1)(b)^w(a)^w(b)^w((a)^w(b)^w)^w");
        assert!(is_semi_canonical(&alpha1));
        assert!(!is_canonical(&alpha1, Mode::S));
        // canonical implies semi-canonical
        assert!(is_semi_canonical(&t("((a)^w(b)^w)^w")));
    }

    #[test]
    fn cf4_is_exponent_sensitive_literally() {
        // the base <1 a> ... differs from the following <2 a> block only in
        // offsets, so it is not a literal prefix
        assert!(is_canonical(
            &t("(a)^(w+1)((b)^w(a)^(w+1))^(w-3)(b)^w(a)^(w+2)b"),
            Mode::S
        ));
        // with equal offsets the base becomes a prefix and (cf.4) fails
        assert!(!is_canonical(
            &t("(a)^(w+1)((b)^w(a)^(w+1))^(w-3)(b)^w(a)^(w+1)b"),
            Mode::S
        ));
    }

    #[test]
    fn circular_canonical_examples() {
        assert!(is_circular_canonical(&t("(a)^w(b)^w")));
        assert!(is_circular_canonical(&t("ab")));
        // conjugates of circular canonical terms are circular canonical
        let term = t("(a)^w(b)^w");
        let n = term.atoms().len();
        for k in 0..n {
            let rot = Term::concat([term.slice(k, n), term.slice(0, k)]);
            assert!(is_circular_canonical(&rot));
        }
        // the square a <0 a> a <0 a> violates (cf.3)
        assert!(!is_circular_canonical(&t("a(a)^w")));
    }

    #[test]
    fn step2_examples() {
        assert_eq!(step2(&t("(abab)^(w+1)"), Mode::S).unwrap(), t("(ab)^(w+2)"));
        assert_eq!(step2(&t("(ba)^w"), Mode::S).unwrap(), t("b(ab)^(w-1)a"));
        let alpha1 = t("(a)^w((b)^w(a)^w(b)^w(a)^w)^(w-1)(b)^w(a)^w(b)^w((a)^w(b)^w)^w");
        assert_eq!(step2(&alpha1, Mode::S).unwrap(), t("((a)^w(b)^w)^w"));
        assert!(matches!(
            step2(&t("((ab)^w(ba)^w)^w"), Mode::S),
            Err(CanonError::NotSemiCanonical)
        ));
    }

    #[test]
    fn reduce_limit_examples() {
        // (a)(1): rule-1 collapse
        assert_eq!(
            reduce_limit_term(-2, &t("(a)^(w+3)"), Mode::S).unwrap(),
            t("(a)^(w-6)")
        );
        // (a)(2): the worked example, r = (3+1)(-2) - 1 = -9
        assert_eq!(
            reduce_limit_term(-2, &t("bbbbba((b)^wa)^(w+3)(b)^(w-5)"), Mode::S).unwrap(),
            t("bbbbba((b)^wa)^(w-9)(b)^(w-5)")
        );
        // (b): rank grows a level, shape ε0 <r β> ε1 with rank-1 edges
        let pi1 = reduce_limit_term(0, &t("(a)^w(b)^w"), Mode::S).unwrap();
        let d = pi1.decompose().unwrap();
        assert_eq!(d.entries.len(), 1);
        assert_eq!(pi1.rank(), 2);
        assert_eq!(d.head.rank(), 1);
        assert_eq!(d.entries[0].tail.rank(), 1);
        assert!(is_semi_canonical(&pi1));
        // errors
        assert!(reduce_limit_term(0, &t("ab"), Mode::S).is_err());
        assert!(reduce_limit_term(0, &t("(ba)^w"), Mode::S).is_err());
    }

    #[test]
    fn normalize_crucial_examples() {
        // middle canonicalizes to a^2: type I with r1 = 0 + (-2) + 2
        let r = normalize_crucial_portion(0, &t("a"), &t("aa"), -2, &t("a"), Mode::S).unwrap();
        assert_eq!(
            r,
            CrucialResult::TypeI {
                offset: 0,
                base: t("a")
            }
        );
        // nothing to absorb
        let r = normalize_crucial_portion(0, &t("a"), &t("b"), 0, &t("a"), Mode::S).unwrap();
        assert_eq!(
            r,
            CrucialResult::TypeII {
                left_offset: 0,
                left_base: t("a"),
                middle: t("b"),
                right_offset: 0,
                right_base: t("a"),
            }
        );
        // step 2.5 test window: "ab" is not a prefix of "bb"
        let r = normalize_crucial_portion(0, &t("ab"), &Term::empty(), 0, &t("b"), Mode::S).unwrap();
        assert_eq!(
            r,
            CrucialResult::TypeII {
                left_offset: 0,
                left_base: t("ab"),
                middle: Term::empty(),
                right_offset: 0,
                right_base: t("b"),
            }
        );
        // a genuine 2.5 fix: δ1 = ab eats into the right limit's copies
        let r = normalize_crucial_portion(0, &t("ab"), &t("a"), 0, &t("b"), Mode::S).unwrap();
        assert_eq!(
            r,
            CrucialResult::TypeII {
                left_offset: 1,
                left_base: t("ab"),
                middle: Term::empty(),
                right_offset: -1,
                right_base: t("b"),
            }
        );
    }

    #[test]
    fn normalize_edge_examples() {
        let (eps, r) =
            normalize_edge_portion(&t("aa"), 0, &t("a"), EdgeSide::Initial, Mode::S).unwrap();
        assert!(eps.is_empty());
        assert_eq!(r, 2);
        let (eps, r) =
            normalize_edge_portion(&t("b"), 5, &t("a"), EdgeSide::Initial, Mode::S).unwrap();
        assert_eq!(eps, t("b"));
        assert_eq!(r, 5);
        let (eps, r) =
            normalize_edge_portion(&t("ab"), 0, &t("ab"), EdgeSide::Final, Mode::S).unwrap();
        assert!(eps.is_empty());
        assert_eq!(r, 1);
    }

    #[test]
    fn canonicalize_golden_examples() {
        // the worked rank-3 reduction
        assert_eq!(
            canon_s("((bbbbba((b)^wa)^(w+3)(b)^(w-5)))^(w-2)"),
            t("bbbbba((b)^wa)^(w-9)(b)^(w-5)")
        );
        // the rank-2 semi-canonical form
        assert_eq!(
            canon_s("(a)^w((b)^w(a)^w(b)^w(a)^w)^(w-1)(b)^w(a)^w(b)^w((a)^w(b)^w)^w"),
            t("((a)^w(b)^w)^w")
        );
        // α2 and α1 share the canonical form ((a)^w(b)^w)^w
        assert_eq!(
            canon_s(
                "(a)^(w-1)ab(b)^(w-2)ba((a)^(w-2)ab(b)^(w-2)ba)^(w-2)(a)^(w-2)ab(b)^(w-1)"
            ),
            t("((a)^w(b)^w)^w")
        );
        assert_eq!(canon_s("abab"), t("abab"));
        assert_eq!(canon_s("((abab)^w)^(w-1)"), t("(ab)^w"));
    }

    #[test]
    fn mode_a_examples() {
        assert_eq!(canon_a("(a)^wa(b)^w"), t("(a)^w(b)^w"));
        assert_eq!(canon_a("(a)^wb(b)^w"), t("(a)^w(b)^w"));
        assert_eq!(canon_s("(a)^wa(b)^w"), t("(a)^(w+1)(b)^w"));
        assert_eq!(canon_s("(a)^wb(b)^w"), t("(a)^w(b)^(w+1)"));
        assert!(decide_equal(&t("(a)^wa(b)^w"), &t("(a)^wb(b)^w"), Mode::A).unwrap());
        assert!(!decide_equal(&t("(a)^wa(b)^w"), &t("(a)^wb(b)^w"), Mode::S).unwrap());
        // A-mode outputs carry only offset-0 exponents
        assert_eq!(canon_a("((a)^(w-3)b)^(w+2)a").scale(), 0);
    }

    #[test]
    fn decide_equal_examples() {
        let a1 = t("((a)^w(b)^w)^w");
        let a2 = t("(a)^(w-1)ab(b)^(w-2)ba((a)^(w-2)ab(b)^(w-2)ba)^(w-2)(a)^(w-2)ab(b)^(w-1)");
        assert!(decide_equal(&a1, &a2, Mode::S).unwrap());
        assert!(decide_equal(&a1, &a1, Mode::S).unwrap());
    }

    #[test]
    fn product_examples() {
        // word · word
        assert_eq!(
            product_canonical(&t("ab"), &t("ba"), Mode::S).unwrap(),
            t("abba")
        );
        // type-3 junction: lt-lengths 1 + 1 - 1
        assert_eq!(
            product_canonical(&t("(a)^w"), &t("(a)^(w-1)"), Mode::S).unwrap(),
            t("(a)^(w-1)")
        );
        // rank(α) < rank(β) keeps β's lt-length
        let a = t("ba");
        let b = t("(ab)^w");
        let p = product_canonical(&a, &b, Mode::S).unwrap();
        assert_eq!(p.lt_length().unwrap(), 1);
        assert_eq!(p, t("ba(ab)^w"));
        // a junction that does absorb: ab · (ab)^w
        assert_eq!(
            product_canonical(&t("ab"), &t("(ab)^w"), Mode::S).unwrap(),
            t("(ab)^(w+1)")
        );
        // agreement with full canonicalization
        for (x, y) in [
            ("(a)^wb", "(a)^w(b)^w"),
            ("ab(abb)^w", "(a)^(w-2)"),
            ("((a)^w(b)^w)^w", "(a)^w(b)^w"),
        ] {
            let (cx, cy) = (canon_s(x), canon_s(y));
            let via_product = product_canonical(&cx, &cy, Mode::S).unwrap();
            let direct = canonical_form(&Term::concat([cx, cy]), Mode::S).unwrap();
            assert_eq!(via_product, direct, "{x} · {y}");
        }
    }

    #[test]
    fn traces_verify_and_connect() {
        for s in [
            "((bbbbba((b)^wa)^(w+3)(b)^(w-5)))^(w-2)",
            "(a)^(w-1)ab(b)^(w-2)ba((a)^(w-2)ab(b)^(w-2)ba)^(w-2)(a)^(w-2)ab(b)^(w-1)",
            "((abab)^w)^(w-1)",
            "(ba)^w",
            "abab",
        ] {
            let report = canonicalize(&t(s), Mode::S, true).unwrap();
            let trace = report.trace.unwrap();
            assert_eq!(verify_derivation(&trace), Ok(()), "{s}");
            assert_eq!(trace.start, report.input);
            assert_eq!(trace.end, report.output);
        }
        let report = canonicalize(&t("(a)^wa(b)^w"), Mode::A, true).unwrap();
        let trace = report.trace.unwrap();
        assert_eq!(verify_derivation(&trace), Ok(()));
    }

    #[test]
    fn outputs_are_canonical_and_stable() {
        for s in [
            "((bbbbba((b)^wa)^(w+3)(b)^(w-5)))^(w-2)",
            "(a)^w((b)^w(a)^w(b)^w(a)^w)^(w-1)(b)^w(a)^w(b)^w((a)^w(b)^w)^w",
            "((abab)^w)^(w-1)",
            "(b)^(w-2)bb(a)^(w+1)",
            "(ab(ab)^w)^(w-1)",
        ] {
            let c = canon_s(s);
            assert!(is_canonical(&c, Mode::S), "{s} -> {c}");
            assert_eq!(canonical_form(&c, Mode::S).unwrap(), c, "{s}");
        }
    }

    #[test]
    fn step1_examples() {
        // rank-1 terms are untouched
        let r1 = t("(aa)^(w+1)b");
        assert_eq!(step1(&r1, Mode::S).unwrap(), r1);
        assert!(step1(&t("ab"), Mode::S).is_err());
        // outputs are semi-canonical
        for s in ["((a)^w(b)^w)^(w+1)", "((abab)^w)^(w-1)"] {
            let out = step1(&t(s), Mode::S).unwrap();
            assert!(is_semi_canonical(&out), "{s} -> {out}");
        }
    }
}
