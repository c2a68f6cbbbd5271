//! Canonical forms for κ̄-terms.
//!
//! κ̄-terms are expressions over a finite alphabet built from letters,
//! concatenation and `(w+q)`-powers for integer offsets `q`. This crate
//! rewrites every term into a unique canonical form with the same
//! interpretation over all finite semigroups, which decides the word
//! problem; restricting offsets to 0 gives canonical representatives of
//! ω-terms over aperiodic semigroups. Two independent cross checks come
//! along: evaluation in explicit finite semigroups, and the regular
//! languages obtained by substituting concrete exponents for the
//! `(w+q)`-powers, whose intersections witness term equality.

pub mod canon;
pub mod lang;
pub mod lyndon;
pub mod rewrite;
pub mod semigroup;
pub mod term;

pub use canon::{
    canonical_form, canonicalize, decide_equal, is_canonical, is_circular_canonical,
    is_semi_canonical, CanonError, CanonReport, CrucialResult, EdgeSide,
};
pub use rewrite::{
    apply_rule, find_applications, parse_trace, verify_derivation, DerivationTrace, Direction,
    Pos, RewriteStep, RuleId,
};
pub use term::{parse_term, Atom, Letter, Mode, ParenWord, Term, TermError};
