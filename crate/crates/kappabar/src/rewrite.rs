//! The Σ rule set as executable bidirectional rewrites, with positions and
//! machine-checkable derivation traces.
//!
//! Rules (contractions read left to right):
//!
//! ```text
//! 1.  <q <p α> >        ⇄  <pq α>
//! 2.  <q α^n>           ⇄  <nq α>          (n >= 2)
//! 3.  <p α> <q α>       ⇄  <p+q α>
//! 4L. α <q α>           ⇄  <q+1 α>
//! 4R. <q α> α           ⇄  <q+1 α>
//! 5.  <q αβ> α  =  α <q βα>                (shift)
//! ```
//!
//! In A-mode every offset is forced to 0 after each arithmetic step, which
//! turns the table into the ω-term rule set.

use std::fmt;

use thiserror::Error;

use crate::term::{parse_term, Atom, LimitPower, Mode, Offset, Term, TermError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("no atom at position {0}")]
    BadPosition(String),
    #[error("path step {0} does not address a limit power")]
    BadPath(usize),
    #[error("rule pattern does not match at the position: {0}")]
    PatternMismatch(String),
    #[error("rule parameters invalid: {0}")]
    BadParams(String),
    #[error("exponent overflow")]
    Overflow,
    #[error("A-mode rewrite on a term with nonzero offsets")]
    NonZeroOffsetInAMode,
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4L,
    R4R,
    R5,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleId::R1 => "1",
            RuleId::R2 => "2",
            RuleId::R3 => "3",
            RuleId::R4L => "4L",
            RuleId::R4R => "4R",
            RuleId::R5 => "5",
        })
    }
}

impl std::str::FromStr for RuleId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "1" => RuleId::R1,
            "2" => RuleId::R2,
            "3" => RuleId::R3,
            "4L" => RuleId::R4L,
            "4R" => RuleId::R4R,
            "5" => RuleId::R5,
            other => return Err(format!("unknown rule {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Contraction,
    Expansion,
    ShiftLeft,
    ShiftRight,
}

impl Direction {
    pub fn inverse(self) -> Direction {
        match self {
            Direction::Contraction => Direction::Expansion,
            Direction::Expansion => Direction::Contraction,
            Direction::ShiftLeft => Direction::ShiftRight,
            Direction::ShiftRight => Direction::ShiftLeft,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Contraction => "c",
            Direction::Expansion => "e",
            Direction::ShiftLeft => "sl",
            Direction::ShiftRight => "sr",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "c" => Direction::Contraction,
            "e" => Direction::Expansion,
            "sl" => Direction::ShiftLeft,
            "sr" => Direction::ShiftRight,
            other => return Err(format!("unknown direction {other:?}")),
        })
    }
}

/// A position inside a term: `path` descends into limit-power bases by atom
/// index; `index` anchors the pattern inside the addressed atom sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Pos {
    pub path: Vec<usize>,
    pub index: usize,
}

impl Pos {
    pub fn at(index: usize) -> Pos {
        Pos {
            path: Vec::new(),
            index,
        }
    }

    pub fn nested(path: Vec<usize>, index: usize) -> Pos {
        Pos { path, index }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "@{}", self.index)
        } else {
            let segs: Vec<String> = self.path.iter().map(|p| p.to_string()).collect();
            write!(f, "{}@{}", segs.join("."), self.index)
        }
    }
}

impl std::str::FromStr for Pos {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (path_part, idx_part) = s
            .split_once('@')
            .ok_or_else(|| format!("bad position {s:?}"))?;
        let index = idx_part.parse().map_err(|_| format!("bad index {s:?}"))?;
        let path = if path_part.is_empty() {
            Vec::new()
        } else {
            path_part
                .split('.')
                .map(|p| p.parse().map_err(|_| format!("bad path {s:?}")))
                .collect::<Result<_, _>>()?
        };
        Ok(Pos { path, index })
    }
}

/// One elementary change. Parameters per rule:
/// R1 `[p, q]`, R2 `[n]`, R3 `[p, q]`, R4L/R4R `[m]` (atom length of the
/// base), R5 `[k]` (atom length of the moved word).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteStep {
    pub rule: RuleId,
    pub direction: Direction,
    pub pos: Pos,
    pub params: Vec<i64>,
}

impl RewriteStep {
    pub fn new(rule: RuleId, direction: Direction, pos: Pos, params: Vec<i64>) -> Self {
        RewriteStep {
            rule,
            direction,
            pos,
            params,
        }
    }
}

impl fmt::Display for RewriteStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.rule, self.direction, self.pos)?;
        for p in &self.params {
            write!(f, " {p}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for RewriteStep {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut toks = s.split_whitespace();
        let rule = toks.next().ok_or("missing rule")?.parse()?;
        let direction = toks.next().ok_or("missing direction")?.parse()?;
        let pos = toks.next().ok_or("missing position")?.parse()?;
        let params = toks
            .map(|t| t.parse().map_err(|_| format!("bad parameter {t:?}")))
            .collect::<Result<_, _>>()?;
        Ok(RewriteStep {
            rule,
            direction,
            pos,
            params,
        })
    }
}

/// A sequence of steps witnessing `start ~ end` under Σ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationTrace {
    pub mode: Mode,
    pub start: Term,
    pub steps: Vec<RewriteStep>,
    pub end: Term,
}

// ---------------------------------------------------------------------------
// Offset arithmetic (mode aware)
// ---------------------------------------------------------------------------

fn off_add(mode: Mode, a: Offset, b: Offset) -> Result<Offset, RewriteError> {
    match mode {
        Mode::S => a.checked_add(b).ok_or(RewriteError::Overflow),
        Mode::A => Ok(0),
    }
}

fn off_mul(mode: Mode, a: Offset, b: Offset) -> Result<Offset, RewriteError> {
    match mode {
        Mode::S => a.checked_mul(b).ok_or(RewriteError::Overflow),
        Mode::A => Ok(0),
    }
}

fn guard_a_mode(mode: Mode, offsets: &[Offset]) -> Result<(), RewriteError> {
    if mode == Mode::A && offsets.iter().any(|&q| q != 0) {
        return Err(RewriteError::NonZeroOffsetInAMode);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rule application
// ---------------------------------------------------------------------------

fn edit_at_path(
    t: &Term,
    path: &[usize],
    edit: &mut dyn FnMut(&[Atom]) -> Result<Vec<Atom>, RewriteError>,
) -> Result<Term, RewriteError> {
    if path.is_empty() {
        return Ok(Term::from_atoms(edit(t.atoms())?));
    }
    let idx = path[0];
    let mut atoms = t.atoms().to_vec();
    let atom = atoms.get(idx).ok_or(RewriteError::BadPath(idx))?;
    let lp = match atom {
        Atom::Limit(lp) => lp,
        Atom::Letter(_) => return Err(RewriteError::BadPath(idx)),
    };
    let new_base = edit_at_path(lp.base(), &path[1..], edit)?;
    atoms[idx] = Atom::limit(new_base, lp.offset())?;
    Ok(Term::from_atoms(atoms))
}

fn limit_at(atoms: &[Atom], i: usize) -> Result<&LimitPower, RewriteError> {
    match atoms.get(i) {
        Some(Atom::Limit(lp)) => Ok(lp),
        Some(Atom::Letter(_)) => Err(RewriteError::PatternMismatch(format!(
            "expected a limit power at index {i}"
        ))),
        None => Err(RewriteError::BadPosition(format!("index {i}"))),
    }
}

fn param(step: &RewriteStep, k: usize) -> Result<i64, RewriteError> {
    step.params
        .get(k)
        .copied()
        .ok_or_else(|| RewriteError::BadParams(format!("rule {} needs parameter {k}", step.rule)))
}

fn param_usize(step: &RewriteStep, k: usize) -> Result<usize, RewriteError> {
    usize::try_from(param(step, k)?)
        .map_err(|_| RewriteError::BadParams("negative length parameter".into()))
}

/// Apply one Σ step at its position. The pattern (and any recorded
/// parameters) must match exactly.
pub fn apply_rule(t: &Term, step: &RewriteStep, mode: Mode) -> Result<Term, RewriteError> {
    let i = step.pos.index;
    edit_at_path(t, &step.pos.path, &mut |atoms| {
        let mut out = atoms.to_vec();
        match (step.rule, step.direction) {
            (RuleId::R1, Direction::Contraction) => {
                let outer = limit_at(atoms, i)?;
                let inner = match outer.base().atoms() {
                    [Atom::Limit(lp)] => lp,
                    _ => {
                        return Err(RewriteError::PatternMismatch(
                            "rule 1 needs a base that is a single limit power".into(),
                        ))
                    }
                };
                guard_a_mode(mode, &[outer.offset(), inner.offset()])?;
                if !step.params.is_empty()
                    && (param(step, 0)? != inner.offset() || param(step, 1)? != outer.offset())
                {
                    return Err(RewriteError::BadParams("rule 1 parameters disagree".into()));
                }
                let q = off_mul(mode, inner.offset(), outer.offset())?;
                out[i] = Atom::limit(inner.base().clone(), q)?;
            }
            (RuleId::R1, Direction::Expansion) => {
                let lp = limit_at(atoms, i)?;
                let (p, q) = (param(step, 0)?, param(step, 1)?);
                guard_a_mode(mode, &[lp.offset(), p, q])?;
                if off_mul(mode, p, q)? != lp.offset() {
                    return Err(RewriteError::BadParams(
                        "rule 1 expansion needs p*q equal to the offset".into(),
                    ));
                }
                let inner = Term::from_atoms(vec![Atom::limit(lp.base().clone(), p)?]);
                out[i] = Atom::limit(inner, q)?;
            }
            (RuleId::R2, Direction::Contraction) => {
                let lp = limit_at(atoms, i)?;
                guard_a_mode(mode, &[lp.offset()])?;
                let n = param_usize(step, 0)?;
                if n < 2 {
                    return Err(RewriteError::BadParams("rule 2 needs n >= 2".into()));
                }
                let blen = lp.base().atoms().len();
                if blen % n != 0 {
                    return Err(RewriteError::PatternMismatch(
                        "rule 2: base length not divisible by n".into(),
                    ));
                }
                let root = lp.base().slice(0, blen / n);
                if root.repeat(n) != *lp.base() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 2: base is not an n-th power".into(),
                    ));
                }
                let q = off_mul(mode, n as i64, lp.offset())?;
                out[i] = Atom::limit(root, q)?;
            }
            (RuleId::R2, Direction::Expansion) => {
                let lp = limit_at(atoms, i)?;
                guard_a_mode(mode, &[lp.offset()])?;
                let n = param_usize(step, 0)?;
                if n < 2 {
                    return Err(RewriteError::BadParams("rule 2 needs n >= 2".into()));
                }
                let q = match mode {
                    Mode::A => 0,
                    Mode::S => {
                        if lp.offset() % (n as i64) != 0 {
                            return Err(RewriteError::BadParams(
                                "rule 2 expansion needs n dividing the offset".into(),
                            ));
                        }
                        lp.offset() / n as i64
                    }
                };
                out[i] = Atom::limit(lp.base().repeat(n), q)?;
            }
            (RuleId::R3, Direction::Contraction) => {
                let left = limit_at(atoms, i)?.clone();
                let right = limit_at(atoms, i + 1)?;
                guard_a_mode(mode, &[left.offset(), right.offset()])?;
                if left.base() != right.base() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 3 needs equal bases".into(),
                    ));
                }
                if !step.params.is_empty()
                    && (param(step, 0)? != left.offset() || param(step, 1)? != right.offset())
                {
                    return Err(RewriteError::BadParams("rule 3 parameters disagree".into()));
                }
                let q = off_add(mode, left.offset(), right.offset())?;
                out[i] = Atom::limit(left.base().clone(), q)?;
                out.remove(i + 1);
            }
            (RuleId::R3, Direction::Expansion) => {
                let lp = limit_at(atoms, i)?;
                let (p, q) = (param(step, 0)?, param(step, 1)?);
                guard_a_mode(mode, &[lp.offset(), p, q])?;
                if off_add(mode, p, q)? != lp.offset() {
                    return Err(RewriteError::BadParams(
                        "rule 3 expansion needs p+q equal to the offset".into(),
                    ));
                }
                let base = lp.base().clone();
                out[i] = Atom::limit(base.clone(), p)?;
                out.insert(i + 1, Atom::limit(base, q)?);
            }
            (RuleId::R4L, Direction::Contraction) => {
                let lp = limit_at(atoms, i)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let m = param_usize(step, 0)?;
                if m != lp.base().atoms().len() {
                    return Err(RewriteError::BadParams(
                        "rule 4L parameter must equal the base atom length".into(),
                    ));
                }
                if i < m || &atoms[i - m..i] != lp.base().atoms() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 4L: no base copy directly before the limit power".into(),
                    ));
                }
                let q = off_add(mode, lp.offset(), 1)?;
                out.splice(i - m..=i, [Atom::limit(lp.base().clone(), q)?]);
            }
            (RuleId::R4L, Direction::Expansion) => {
                let lp = limit_at(atoms, i)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let m = param_usize(step, 0)?;
                if m != lp.base().atoms().len() {
                    return Err(RewriteError::BadParams(
                        "rule 4L parameter must equal the base atom length".into(),
                    ));
                }
                let q = off_add(mode, lp.offset(), -1)?;
                let mut repl = lp.base().atoms().to_vec();
                repl.push(Atom::limit(lp.base().clone(), q)?);
                out.splice(i..=i, repl);
            }
            (RuleId::R4R, Direction::Contraction) => {
                let lp = limit_at(atoms, i)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let m = param_usize(step, 0)?;
                if m != lp.base().atoms().len() {
                    return Err(RewriteError::BadParams(
                        "rule 4R parameter must equal the base atom length".into(),
                    ));
                }
                if atoms.len() < i + 1 + m || &atoms[i + 1..i + 1 + m] != lp.base().atoms() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 4R: no base copy directly after the limit power".into(),
                    ));
                }
                let q = off_add(mode, lp.offset(), 1)?;
                out.splice(i..i + 1 + m, [Atom::limit(lp.base().clone(), q)?]);
            }
            (RuleId::R4R, Direction::Expansion) => {
                let lp = limit_at(atoms, i)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let m = param_usize(step, 0)?;
                if m != lp.base().atoms().len() {
                    return Err(RewriteError::BadParams(
                        "rule 4R parameter must equal the base atom length".into(),
                    ));
                }
                let q = off_add(mode, lp.offset(), -1)?;
                let mut repl = vec![Atom::limit(lp.base().clone(), q)?];
                repl.extend_from_slice(lp.base().atoms());
                out.splice(i..=i, repl);
            }
            (RuleId::R5, Direction::ShiftLeft) => {
                // <q αβ> α  ->  α <q βα>
                let lp = limit_at(atoms, i)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let k = param_usize(step, 0)?;
                let blen = lp.base().atoms().len();
                if k == 0 || k > blen {
                    return Err(RewriteError::BadParams("rule 5: bad split".into()));
                }
                let alpha = lp.base().slice(0, k);
                let beta = lp.base().slice(k, blen);
                if atoms.len() < i + 1 + k || &atoms[i + 1..i + 1 + k] != alpha.atoms() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 5: no copy of the base prefix after the limit power".into(),
                    ));
                }
                let rotated = Term::concat([beta, alpha.clone()]);
                let mut repl = alpha.atoms().to_vec();
                repl.push(Atom::limit(rotated, lp.offset())?);
                out.splice(i..i + 1 + k, repl);
            }
            (RuleId::R5, Direction::ShiftRight) => {
                // α <q βα>  ->  <q αβ> α
                let k = param_usize(step, 0)?;
                if k == 0 {
                    return Err(RewriteError::BadParams("rule 5: bad split".into()));
                }
                let lp = limit_at(atoms, i + k)?.clone();
                guard_a_mode(mode, &[lp.offset()])?;
                let blen = lp.base().atoms().len();
                if k > blen {
                    return Err(RewriteError::BadParams("rule 5: bad split".into()));
                }
                let alpha = lp.base().slice(blen - k, blen);
                let beta = lp.base().slice(0, blen - k);
                if &atoms[i..i + k] != alpha.atoms() {
                    return Err(RewriteError::PatternMismatch(
                        "rule 5: no copy of the base suffix before the limit power".into(),
                    ));
                }
                let rotated = Term::concat([alpha.clone(), beta]);
                let mut repl = vec![Atom::limit(rotated, lp.offset())?];
                repl.extend_from_slice(alpha.atoms());
                out.splice(i..=i + k, repl);
            }
            (rule, dir) => {
                return Err(RewriteError::BadParams(format!(
                    "rule {rule} has no {dir:?} direction"
                )))
            }
        }
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// Step inversion and position lifting
// ---------------------------------------------------------------------------

/// The exact inverse of a step, valid at the state the step produced.
pub fn invert_step(step: &RewriteStep) -> RewriteStep {
    let mut inv = step.clone();
    inv.direction = step.direction.inverse();
    if step.rule == RuleId::R4L {
        // contraction consumes the copy before the limit, so the limit moves
        let m = step.params[0] as usize;
        match step.direction {
            Direction::Contraction => inv.pos.index -= m,
            Direction::Expansion => inv.pos.index += m,
            _ => {}
        }
    }
    inv
}

/// Reverse a derivation: the returned steps rewrite the old end back to the
/// old start.
pub fn invert_steps(steps: &[RewriteStep]) -> Vec<RewriteStep> {
    steps.iter().rev().map(invert_step).collect()
}

/// Re-anchor a step computed on a slice of a sequence (starting at
/// `offset`), optionally descending through `base_path` first.
pub fn lift_step(step: &RewriteStep, base_path: &[usize], offset: usize) -> RewriteStep {
    let mut lifted = step.clone();
    let mut path = base_path.to_vec();
    if step.pos.path.is_empty() {
        lifted.pos = Pos::nested(path, step.pos.index + offset);
    } else {
        path.push(step.pos.path[0] + offset);
        path.extend_from_slice(&step.pos.path[1..]);
        lifted.pos = Pos::nested(path, step.pos.index);
    }
    lifted
}

// ---------------------------------------------------------------------------
// Pattern search
// ---------------------------------------------------------------------------

/// All positions where the rule matches, leftmost-outermost. Expansions of
/// rules 1-3 carry canonical default parameters (`(q,1)` for rule 1, the
/// smallest valid `n` for rule 2, `(0,q)` for rule 3).
pub fn find_applications(
    t: &Term,
    rule: RuleId,
    direction: Direction,
    mode: Mode,
) -> Vec<RewriteStep> {
    let mut out = Vec::new();
    collect(t, rule, direction, mode, &mut Vec::new(), &mut out);
    out
}

fn collect(
    t: &Term,
    rule: RuleId,
    dir: Direction,
    mode: Mode,
    path: &mut Vec<usize>,
    out: &mut Vec<RewriteStep>,
) {
    let atoms = t.atoms();
    for i in 0..atoms.len() {
        let mut here: Vec<RewriteStep> = Vec::new();
        if let Atom::Limit(lp) = &atoms[i] {
            let q = lp.offset();
            let m = lp.base().atoms().len() as i64;
            match (rule, dir) {
                (RuleId::R1, Direction::Contraction) => {
                    if let [Atom::Limit(inner)] = lp.base().atoms() {
                        here.push(step(rule, dir, path, i, vec![inner.offset(), q]));
                    }
                }
                (RuleId::R1, Direction::Expansion) => {
                    here.push(step(rule, dir, path, i, vec![q, 1]));
                }
                (RuleId::R2, Direction::Contraction) => {
                    let (_, mult) = crate::lyndon::primitive_root(lp.base());
                    for n in 2..=mult {
                        if mult % n == 0 {
                            here.push(step(rule, dir, path, i, vec![n as i64]));
                        }
                    }
                }
                (RuleId::R2, Direction::Expansion) => {
                    let n = match mode {
                        Mode::A => Some(2),
                        Mode::S => (2..=q.unsigned_abs().max(2))
                            .find(|&n| q % (n as i64) == 0)
                            .map(|n| n as i64),
                    };
                    if let Some(n) = n {
                        here.push(step(rule, dir, path, i, vec![n]));
                    }
                }
                (RuleId::R3, Direction::Contraction) => {
                    if let Some(Atom::Limit(next)) = atoms.get(i + 1) {
                        if next.base() == lp.base() {
                            here.push(step(rule, dir, path, i, vec![q, next.offset()]));
                        }
                    }
                }
                (RuleId::R3, Direction::Expansion) => {
                    here.push(step(rule, dir, path, i, vec![0, q]));
                }
                (RuleId::R4L, Direction::Contraction) => {
                    let mu = m as usize;
                    if i >= mu && &atoms[i - mu..i] == lp.base().atoms() {
                        here.push(step(rule, dir, path, i, vec![m]));
                    }
                }
                (RuleId::R4R, Direction::Contraction) => {
                    let mu = m as usize;
                    if atoms.len() >= i + 1 + mu && &atoms[i + 1..i + 1 + mu] == lp.base().atoms() {
                        here.push(step(rule, dir, path, i, vec![m]));
                    }
                }
                (RuleId::R4L | RuleId::R4R, Direction::Expansion) => {
                    here.push(step(rule, dir, path, i, vec![m]));
                }
                (RuleId::R5, Direction::ShiftLeft) => {
                    for k in 1..=m as usize {
                        let alpha = lp.base().slice(0, k);
                        if atoms.len() >= i + 1 + k && &atoms[i + 1..i + 1 + k] == alpha.atoms() {
                            here.push(step(rule, dir, path, i, vec![k as i64]));
                        }
                    }
                }
                (RuleId::R5, Direction::ShiftRight) => {
                    let blen = m as usize;
                    for k in 1..=blen.min(i) {
                        let alpha = lp.base().slice(blen - k, blen);
                        if &atoms[i - k..i] == alpha.atoms() {
                            here.push(step(rule, dir, path, i - k, vec![k as i64]));
                        }
                    }
                }
                _ => {}
            }
        }
        out.extend(here);
        if let Atom::Limit(lp) = &atoms[i] {
            path.push(i);
            collect(lp.base(), rule, dir, mode, path, out);
            path.pop();
        }
    }
}

fn step(rule: RuleId, dir: Direction, path: &[usize], index: usize, params: Vec<i64>) -> RewriteStep {
    RewriteStep::new(rule, dir, Pos::nested(path.to_vec(), index), params)
}

// ---------------------------------------------------------------------------
// Trace verification and serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: RewriteError,
    },
    #[error("replay result differs from the recorded end term")]
    EndMismatch,
    #[error("trace parse error: {0}")]
    Parse(String),
}

/// Replay the trace and check every precondition; `Ok` iff every step is a
/// valid Σ instance and replay of the start yields the end.
pub fn verify_derivation(trace: &DerivationTrace) -> Result<(), TraceError> {
    let mut current = trace.start.clone();
    for (index, s) in trace.steps.iter().enumerate() {
        current = apply_rule(&current, s, trace.mode)
            .map_err(|source| TraceError::StepFailed { index, source })?;
    }
    if current != trace.end {
        return Err(TraceError::EndMismatch);
    }
    Ok(())
}

impl fmt::Display for DerivationTrace {
    /// Line-oriented text: first line the start term, one step per line,
    /// last line the end term. A-mode traces carry a leading `@mode A` line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mode == Mode::A {
            writeln!(f, "@mode A")?;
        }
        writeln!(f, "{}", self.start)?;
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        write!(f, "{}", self.end)
    }
}

pub fn parse_trace(text: &str) -> Result<DerivationTrace, TraceError> {
    let mut lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let mode = if lines.first().is_some_and(|l| l.starts_with("@mode")) {
        let line = lines.remove(0);
        match line.trim_start_matches("@mode").trim() {
            "A" => Mode::A,
            "S" => Mode::S,
            other => return Err(TraceError::Parse(format!("bad mode {other:?}"))),
        }
    } else {
        Mode::S
    };
    if lines.len() < 2 {
        return Err(TraceError::Parse(
            "a trace needs at least a start and an end line".into(),
        ));
    }
    let start = parse_term(lines[0]).map_err(|e| TraceError::Parse(e.to_string()))?;
    let end = parse_term(lines[lines.len() - 1]).map_err(|e| TraceError::Parse(e.to_string()))?;
    let steps = lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.parse().map_err(TraceError::Parse))
        .collect::<Result<_, _>>()?;
    Ok(DerivationTrace {
        mode,
        start,
        steps,
        end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn apply(term: &str, step: RewriteStep) -> Term {
        apply_rule(&t(term), &step, Mode::S).unwrap()
    }

    #[test]
    fn rule_examples() {
        // 4R contraction: (a)^(w+3) a -> (a)^(w+4)
        assert_eq!(
            apply(
                "(a)^(w+3)a",
                RewriteStep::new(RuleId::R4R, Direction::Contraction, Pos::at(0), vec![1])
            ),
            t("(a)^(w+4)")
        );
        // rule 1 contraction: ((a)^(w+3))^(w-2) -> (a)^(w-6)
        assert_eq!(
            apply(
                "((a)^(w+3))^(w-2)",
                RewriteStep::new(RuleId::R1, Direction::Contraction, Pos::at(0), vec![])
            ),
            t("(a)^(w-6)")
        );
        // shift: (ab)^(w+1) a -> a (ba)^(w+1)
        assert_eq!(
            apply(
                "(ab)^(w+1)a",
                RewriteStep::new(RuleId::R5, Direction::ShiftLeft, Pos::at(0), vec![1])
            ),
            t("a(ba)^(w+1)")
        );
        // rule 2 contraction with n = 2: (abab)^(w+1) -> (ab)^(w+2)
        assert_eq!(
            apply(
                "(abab)^(w+1)",
                RewriteStep::new(RuleId::R2, Direction::Contraction, Pos::at(0), vec![2])
            ),
            t("(ab)^(w+2)")
        );
        // rule 3 contraction
        assert_eq!(
            apply(
                "(a)^w(a)^(w-1)",
                RewriteStep::new(RuleId::R3, Direction::Contraction, Pos::at(0), vec![])
            ),
            t("(a)^(w-1)")
        );
    }

    #[test]
    fn nested_position() {
        // rewrite inside the base of the outer limit power
        let step = RewriteStep::new(
            RuleId::R4R,
            Direction::Contraction,
            Pos::nested(vec![0], 0),
            vec![1],
        );
        assert_eq!(apply("((a)^(w+3)ab)^w", step), t("((a)^(w+4)b)^w"));
    }

    #[test]
    fn pattern_mismatch_is_reported() {
        let bad = RewriteStep::new(RuleId::R4R, Direction::Contraction, Pos::at(0), vec![1]);
        assert!(matches!(
            apply_rule(&t("(a)^(w+3)b"), &bad, Mode::S),
            Err(RewriteError::PatternMismatch(_))
        ));
        let r2small = RewriteStep::new(RuleId::R2, Direction::Contraction, Pos::at(0), vec![1]);
        assert!(apply_rule(&t("(aa)^w"), &r2small, Mode::S).is_err());
    }

    #[test]
    fn find_applications_examples() {
        let hits = find_applications(
            &t("(a)^w(a)^(w-1)"),
            RuleId::R3,
            Direction::Contraction,
            Mode::S,
        );
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].pos, Pos::at(0));

        let l = find_applications(&t("a(a)^wa"), RuleId::R4L, Direction::Contraction, Mode::S);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].pos, Pos::at(1));
        let r = find_applications(&t("a(a)^wa"), RuleId::R4R, Direction::Contraction, Mode::S);
        assert_eq!(r.len(), 1);

        let c = find_applications(
            &t("(abab)^(w+1)"),
            RuleId::R2,
            Direction::Contraction,
            Mode::S,
        );
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].params, vec![2]);
    }

    #[test]
    fn contraction_then_expansion_is_identity() {
        let term = t("(ab)^w ab(a)^(w+1)a");
        for rule in [RuleId::R3, RuleId::R4L, RuleId::R4R] {
            for s in find_applications(&term, rule, Direction::Contraction, Mode::S) {
                let mid = apply_rule(&term, &s, Mode::S).unwrap();
                let back = apply_rule(&mid, &invert_step(&s), Mode::S).unwrap();
                assert_eq!(back, term, "rule {rule} at {}", s.pos);
            }
        }
    }

    #[test]
    fn shifts_invert() {
        let term = t("(ab)^(w+1)a");
        let s = RewriteStep::new(RuleId::R5, Direction::ShiftLeft, Pos::at(0), vec![1]);
        let mid = apply_rule(&term, &s, Mode::S).unwrap();
        assert_eq!(mid, t("a(ba)^(w+1)"));
        let back = apply_rule(&mid, &invert_step(&s), Mode::S).unwrap();
        assert_eq!(back, term);
    }

    #[test]
    fn a_mode_forces_zero() {
        let s = RewriteStep::new(RuleId::R4R, Direction::Contraction, Pos::at(0), vec![1]);
        assert_eq!(apply_rule(&t("(a)^wa"), &s, Mode::A).unwrap(), t("(a)^w"));
        assert!(matches!(
            apply_rule(&t("(a)^(w+1)a"), &s, Mode::A),
            Err(RewriteError::NonZeroOffsetInAMode)
        ));
    }

    /// The worked rank-3 derivation: each block of five base copies is five
    /// atomic type-4R steps, the rest matches the published sequence.
    #[test]
    fn example_derivation_verifies() {
        let start = t("(bbbbba((b)^wa)^(w+3)(b)^(w-5))^(w-2)");
        let end = t("bbbbba((b)^wa)^(w-9)(b)^(w-5)");
        let mut steps = Vec::new();
        // inside the base: (b)^w -> (b)^(w-5) b^5, five 4R expansions on the
        // inner limit of ((b)^w a)'s base
        for _ in 0..5 {
            steps.push(RewriteStep::new(
                RuleId::R4R,
                Direction::Expansion,
                Pos::nested(vec![0, 6], 0),
                vec![1],
            ));
        }
        // shift: b^5 a <3 (b)^(w-5) b^5 a> -> <3 b^5 a (b)^(w-5)> b^5 a
        steps.push(RewriteStep::new(
            RuleId::R5,
            Direction::ShiftRight,
            Pos::nested(vec![0], 0),
            vec![6],
        ));
        // 4R contraction absorbs the copy: exponent 3 -> 4
        steps.push(RewriteStep::new(
            RuleId::R4R,
            Direction::Contraction,
            Pos::nested(vec![0], 0),
            vec![7],
        ));
        // rule 1 contraction: < -2 <4 x> > -> < -8 x >
        steps.push(RewriteStep::new(
            RuleId::R1,
            Direction::Contraction,
            Pos::at(0),
            vec![],
        ));
        // 4R expansion: < -8 x > -> < -9 x > x
        steps.push(RewriteStep::new(
            RuleId::R4R,
            Direction::Expansion,
            Pos::at(0),
            vec![7],
        ));
        // shift the leading b^5 a out: < -9 b^5 a (b)^(w-5) > b^5 a ... ->
        // b^5 a < -9 (b)^(w-5) b^5 a > ...
        steps.push(RewriteStep::new(
            RuleId::R5,
            Direction::ShiftLeft,
            Pos::at(0),
            vec![6],
        ));
        // inside the new base: (b)^(w-5) b^5 -> (b)^w, five 4R contractions
        for _ in 0..5 {
            steps.push(RewriteStep::new(
                RuleId::R4R,
                Direction::Contraction,
                Pos::nested(vec![6], 0),
                vec![1],
            ));
        }
        let trace = DerivationTrace {
            mode: Mode::S,
            start,
            steps,
            end,
        };
        assert_eq!(verify_derivation(&trace), Ok(()));
    }

    #[test]
    fn empty_trace_and_corruption() {
        let ok = DerivationTrace {
            mode: Mode::S,
            start: t("ab"),
            steps: vec![],
            end: t("ab"),
        };
        assert!(verify_derivation(&ok).is_ok());

        let bad = DerivationTrace {
            mode: Mode::S,
            start: t("(a)^(w+3)a"),
            steps: vec![RewriteStep::new(
                RuleId::R4R,
                Direction::Contraction,
                Pos::at(1),
                vec![1],
            )],
            end: t("(a)^(w+4)"),
        };
        assert!(matches!(
            verify_derivation(&bad),
            Err(TraceError::StepFailed { index: 0, .. })
        ));
    }

    #[test]
    fn trace_serialization_round_trip() {
        let trace = DerivationTrace {
            mode: Mode::S,
            start: t("(a)^(w+3)a"),
            steps: vec![RewriteStep::new(
                RuleId::R4R,
                Direction::Contraction,
                Pos::at(0),
                vec![1],
            )],
            end: t("(a)^(w+4)"),
        };
        let text = trace.to_string();
        assert_eq!(parse_trace(&text).unwrap(), trace);

        let a_trace = DerivationTrace {
            mode: Mode::A,
            start: t("(a)^wa"),
            steps: vec![RewriteStep::new(
                RuleId::R4R,
                Direction::Contraction,
                Pos::at(0),
                vec![1],
            )],
            end: t("(a)^w"),
        };
        let text = a_trace.to_string();
        assert!(text.starts_with("@mode A"));
        assert_eq!(parse_trace(&text).unwrap(), a_trace);
        assert!(verify_derivation(&a_trace).is_ok());
    }
}
