//! Lexicographic order on paren words, primitive roots, minimal conjugates
//! and Lyndon tests for terms.
//!
//! Conjugacy rotations happen only at top-level atom boundaries: a limit
//! power is never split. Rotations are compared through their paren words
//! under the `A_Z` order.

use std::cmp::Ordering;

use thiserror::Error;

use crate::term::{ParenWord, Symbol, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LyndonError {
    #[error("term is not primitive")]
    NotPrimitive,
}

/// Lexicographic comparison induced by the `A_Z` symbol order; a proper
/// prefix precedes its extensions.
pub fn lex_compare(u: &ParenWord, v: &ParenWord) -> Ordering {
    u.symbols().cmp(v.symbols())
}

pub fn is_word_prefix(u: &[Symbol], v: &[Symbol]) -> bool {
    u.len() <= v.len() && &v[..u.len()] == u
}

pub fn is_word_suffix(u: &[Symbol], v: &[Symbol]) -> bool {
    u.len() <= v.len() && &v[v.len() - u.len()..] == u
}

/// `true` iff some nonempty proper prefix of `w` is also a suffix of `w`.
pub fn is_bordered(w: &ParenWord) -> bool {
    let s = w.symbols();
    (1..s.len()).any(|k| s[..k] == s[s.len() - k..])
}

/// Fine and Wilf commensurability: powers of `u` and `v` sharing a common
/// prefix of length at least `|u| + |v| - gcd(|u|, |v|)` force a common root.
pub fn fine_wilf_commensurable(u: &ParenWord, v: &ParenWord, common_prefix_len: usize) -> bool {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let threshold = u.len() + v.len() - gcd(u.len(), v.len());
    common_prefix_len >= threshold
}

/// The primitive root of the top-level atom sequence: `t = root^multiplicity`
/// with the multiplicity maximal. Atoms are compared structurally.
pub fn primitive_root(t: &Term) -> (Term, usize) {
    let atoms = t.atoms();
    let n = atoms.len();
    if n == 0 {
        return (Term::empty(), 1);
    }
    for d in 1..=n {
        if n % d != 0 {
            continue;
        }
        if (d..n).all(|i| atoms[i] == atoms[i % d]) {
            return (t.slice(0, d), n / d);
        }
    }
    unreachable!("d = n always matches")
}

/// The two sides of a rotation: `original = left · right` and
/// `rotated = right · left`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjugateSplit {
    pub left: Term,
    pub right: Term,
}

/// The lexicographically least rotation of a primitive term, with the split
/// realizing it. Rotation 0 yields the trivial split (empty `left`).
pub fn minimal_conjugate(t: &Term) -> Result<(Term, ConjugateSplit), LyndonError> {
    let (_, mult) = primitive_root(t);
    if mult > 1 {
        return Err(LyndonError::NotPrimitive);
    }
    let n = t.atoms().len();
    let mut best: Option<(ParenWord, usize)> = None;
    for k in 0..n {
        let rotated = Term::concat([t.slice(k, n), t.slice(0, k)]);
        let word = rotated.to_paren_word();
        let better = match &best {
            None => true,
            Some((w, _)) => lex_compare(&word, w) == Ordering::Less,
        };
        if better {
            best = Some((word, k));
        }
    }
    let (_, k) = best.expect("nonempty term has a rotation");
    let split = ConjugateSplit {
        left: t.slice(0, k),
        right: t.slice(k, n),
    };
    let lyndon = Term::concat([split.right.clone(), split.left.clone()]);
    Ok((lyndon, split))
}

/// A Lyndon term: primitive and minimal in its conjugacy class.
pub fn is_lyndon(t: &Term) -> bool {
    if t.is_empty() {
        return false;
    }
    match minimal_conjugate(t) {
        Ok((lyndon, _)) => &lyndon == t,
        Err(_) => false,
    }
}
