//! Finite-semigroup evaluation of κ̄-terms, identity checking, brute-force
//! enumeration of small multiplication tables, and separating-semigroup
//! search. This module is the independent oracle for the canonicalizer: it
//! never consults canonical forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::term::{Atom, Letter, Offset, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemigroupError {
    #[error("table is not square or entries out of range")]
    Malformed,
    #[error("not associative: ({0} {1}) {2} differs from {0} ({1} {2})")]
    NotAssociative(usize, usize, usize),
    #[error("letter {0} has no assigned element")]
    Unassigned(char),
    #[error("cannot evaluate the empty term in a semigroup")]
    EmptyTerm,
    #[error("enumeration is exhaustive only up to order 3, got {0}")]
    OrderTooLarge(usize),
    #[error("bad semigroup file: {0}")]
    Format(String),
}

/// Assignment of semigroup elements to letters.
pub type Assignment = BTreeMap<Letter, usize>;

/// A finite semigroup given by its multiplication table; `table[i][j]`
/// holds the product i·j. Associativity is certified at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteSemigroup {
    pub order: usize,
    pub table: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// Display label for curated semigroups; not part of the file format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl FiniteSemigroup {
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self, SemigroupError> {
        let order = table.len();
        if order == 0
            || table.len() != order
            || table
                .iter()
                .any(|row| row.len() != order || row.iter().any(|&e| e >= order))
        {
            return Err(SemigroupError::Malformed);
        }
        for a in 0..order {
            for b in 0..order {
                for c in 0..order {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(SemigroupError::NotAssociative(a, b, c));
                    }
                }
            }
        }
        Ok(FiniteSemigroup {
            order,
            table,
            names: None,
            label: None,
        })
    }

    fn labeled(table: Vec<Vec<usize>>, label: &str) -> Self {
        let mut s = FiniteSemigroup::new(table).expect("curated tables are associative");
        s.label = Some(label.to_string());
        s
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    fn pow(&self, s: usize, k: usize) -> usize {
        debug_assert!(k >= 1);
        let mut acc = s;
        for _ in 1..k {
            acc = self.mul(acc, s);
        }
        acc
    }

    /// Minimal (index, period) with `s^index = s^(index+period)`.
    pub fn index_period(&self, s: usize) -> (usize, usize) {
        let mut seen: Vec<usize> = vec![s];
        let mut cur = s;
        loop {
            cur = self.mul(cur, s);
            if let Some(pos) = seen.iter().position(|&x| x == cur) {
                let index = pos + 1;
                let period = seen.len() - pos;
                return (index, period);
            }
            seen.push(cur);
        }
    }

    /// `s^(w+q)`: the element at offset q from the unique idempotent power
    /// of s, computed by cycle arithmetic.
    pub fn omega_power(&self, s: usize, q: Offset) -> usize {
        let (index, period) = self.index_period(s);
        // the unique multiple of the period in [index, index+period)
        let m = index.div_ceil(period) * period;
        let residue = q.rem_euclid(period as i64) as usize;
        self.pow(s, m + residue)
    }

    /// Bottom-up interpretation: letters through the assignment,
    /// concatenation as multiplication, limit powers as ω-powers.
    pub fn eval(&self, t: &Term, asg: &Assignment) -> Result<usize, SemigroupError> {
        let mut acc: Option<usize> = None;
        for atom in t.atoms() {
            let v = match atom {
                Atom::Letter(l) => *asg
                    .get(l)
                    .ok_or(SemigroupError::Unassigned(l.as_char()))?,
                Atom::Limit(lp) => {
                    let base = self.eval(lp.base(), asg)?;
                    self.omega_power(base, lp.offset())
                }
            };
            acc = Some(match acc {
                None => v,
                Some(a) => self.mul(a, v),
            });
        }
        acc.ok_or(SemigroupError::EmptyTerm)
    }

    /// Whether the identity α = β holds under every assignment of the
    /// letters occurring in either side.
    pub fn satisfies(&self, a: &Term, b: &Term) -> bool {
        let mut letters = a.letters();
        letters.extend(b.letters());
        let letters: Vec<Letter> = letters.into_iter().collect();
        every_assignment(self.order, &letters, &mut |asg| {
            self.eval(a, asg).ok() == self.eval(b, asg).ok()
        })
    }

    /// Every element has period 1.
    pub fn is_aperiodic(&self) -> bool {
        (0..self.order).all(|s| self.index_period(s).1 == 1)
    }
}

/// Run `check` on every assignment of the letters; true iff all pass.
fn every_assignment(
    order: usize,
    letters: &[Letter],
    check: &mut dyn FnMut(&Assignment) -> bool,
) -> bool {
    let mut asg = Assignment::new();
    fn rec(
        order: usize,
        letters: &[Letter],
        asg: &mut Assignment,
        check: &mut dyn FnMut(&Assignment) -> bool,
    ) -> bool {
        match letters.first() {
            None => check(asg),
            Some(&l) => (0..order).all(|v| {
                asg.insert(l, v);
                let ok = rec(order, &letters[1..], asg, check);
                asg.remove(&l);
                ok
            }),
        }
    }
    rec(order, letters, &mut asg, check)
}

/// All assignments of the given letters into `0..order`.
pub fn assignments(order: usize, letters: &[Letter]) -> Vec<Assignment> {
    let mut out = Vec::new();
    every_assignment(order, letters, &mut |asg| {
        out.push(asg.clone());
        true
    });
    out
}

/// Load and certify a semigroup from the JSON file format
/// `{"order": n, "table": [[..]], "names": [..]?}`.
pub fn load_semigroup(text: &str) -> Result<FiniteSemigroup, SemigroupError> {
    let raw: FiniteSemigroup =
        serde_json::from_str(text).map_err(|e| SemigroupError::Format(e.to_string()))?;
    if raw.order != raw.table.len() {
        return Err(SemigroupError::Malformed);
    }
    if let Some(names) = &raw.names {
        if names.len() != raw.order {
            return Err(SemigroupError::Malformed);
        }
    }
    let mut checked = FiniteSemigroup::new(raw.table)?;
    checked.names = raw.names;
    checked.label = raw.label;
    Ok(checked)
}

/// All associative multiplication tables of each order up to `max_order`
/// (raw tables, not up to isomorphism). Exhaustive regime: order ≤ 3.
pub fn enumerate_semigroups(
    max_order: usize,
) -> Result<impl Iterator<Item = FiniteSemigroup>, SemigroupError> {
    if max_order > 3 {
        return Err(SemigroupError::OrderTooLarge(max_order));
    }
    let mut all = Vec::new();
    for order in 1..=max_order {
        let cells = order * order;
        let mut assignment = vec![0usize; cells];
        loop {
            let table: Vec<Vec<usize>> = (0..order)
                .map(|i| assignment[i * order..(i + 1) * order].to_vec())
                .collect();
            if let Ok(s) = FiniteSemigroup::new(table) {
                all.push(s);
            }
            // next table in lexicographic order
            let mut k = cells;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                assignment[k] += 1;
                if assignment[k] < order {
                    break;
                }
                assignment[k] = 0;
            }
            if assignment.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    Ok(all.into_iter())
}

fn cyclic_group(k: usize) -> FiniteSemigroup {
    let table = (0..k).map(|i| (0..k).map(|j| (i + j) % k).collect()).collect();
    FiniteSemigroup::labeled(table, &format!("Z_{k}"))
}

fn full_transformation(points: usize) -> FiniteSemigroup {
    // maps [points] -> [points] encoded in base `points`, composition
    // left-to-right: (f·g)(x) = g(f(x))
    let count = points.pow(points as u32);
    let apply = |f: usize, x: usize| f / points.pow(x as u32) % points;
    let encode = |imgs: &[usize]| -> usize {
        imgs.iter()
            .enumerate()
            .map(|(x, &y)| y * points.pow(x as u32))
            .sum()
    };
    let table = (0..count)
        .map(|f| {
            (0..count)
                .map(|g| {
                    let imgs: Vec<usize> = (0..points).map(|x| apply(g, apply(f, x))).collect();
                    encode(&imgs)
                })
                .collect()
        })
        .collect();
    FiniteSemigroup::labeled(table, &format!("T_{points}"))
}

fn brandt_b2() -> FiniteSemigroup {
    // elements: 0 = zero, then the matrix units e11, e12, e21, e22
    let e = |i: usize, j: usize| 1 + 2 * (i - 1) + (j - 1);
    let mut table = vec![vec![0usize; 5]; 5];
    for i in 1..=2 {
        for j in 1..=2 {
            for k in 1..=2 {
                for l in 1..=2 {
                    table[e(i, j)][e(k, l)] = if j == k { e(i, l) } else { 0 };
                }
            }
        }
    }
    FiniteSemigroup::labeled(table, "B_2")
}

fn monogenic(index: usize, period: usize) -> FiniteSemigroup {
    // elements s^1 .. s^(index+period-1), encoded as 0-based exponents
    let order = index + period - 1;
    let reduce = |e: usize| -> usize {
        if e <= order {
            e
        } else {
            index + (e - index) % period
        }
    };
    let table = (1..=order)
        .map(|a| (1..=order).map(|b| reduce(a + b) - 1).collect())
        .collect();
    FiniteSemigroup::labeled(table, &format!("monogenic({index},{period})"))
}

fn flip_flop() -> FiniteSemigroup {
    // {1, z0, z1}: identity plus a right-zero pair
    let table = vec![vec![0, 1, 2], vec![1, 1, 2], vec![2, 1, 2]];
    FiniteSemigroup::labeled(table, "flip-flop")
}

/// The curated test family: cyclic groups up to Z_6, full transformation
/// semigroups on up to 3 points, the Brandt semigroup B_2, monogenic
/// semigroups with index and period up to 3, and the flip-flop monoid.
pub fn curated_family() -> Vec<FiniteSemigroup> {
    let mut out = Vec::new();
    for k in 1..=6 {
        out.push(cyclic_group(k));
    }
    for points in 1..=3 {
        out.push(full_transformation(points));
    }
    out.push(brandt_b2());
    for index in 1..=3 {
        for period in 1..=3 {
            out.push(monogenic(index, period));
        }
    }
    out.push(flip_flop());
    out
}

#[derive(Debug, Clone, Default)]
pub struct SeparatorBudget {
    /// Exhaustive enumeration bound (≤ 3); 0 skips the enumeration.
    pub max_enumerated_order: usize,
    pub include_curated: bool,
    /// Cap on (semigroup, assignment) evaluations; `None` is unbounded.
    pub max_checks: Option<usize>,
}

impl SeparatorBudget {
    pub fn standard() -> Self {
        SeparatorBudget {
            max_enumerated_order: 3,
            include_curated: true,
            max_checks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Separation {
    /// A semigroup and assignment on which the two terms evaluate
    /// differently.
    Separated {
        semigroup: FiniteSemigroup,
        assignment: Assignment,
        lhs: usize,
        rhs: usize,
    },
    /// No separator within the budget; says nothing about equality.
    Inconclusive { examined: usize },
}

/// Search the enumerated and curated semigroups for an assignment telling
/// the two terms apart. Syntactically equal inputs short-circuit.
pub fn find_separator(a: &Term, b: &Term, budget: &SeparatorBudget) -> Separation {
    let mut examined = 0usize;
    if a == b {
        return Separation::Inconclusive { examined };
    }
    let mut letters = a.letters();
    letters.extend(b.letters());
    let letters: Vec<Letter> = letters.into_iter().collect();

    let enumerated = enumerate_semigroups(budget.max_enumerated_order.min(3))
        .expect("bounded order")
        .collect::<Vec<_>>();
    let curated = if budget.include_curated {
        curated_family()
    } else {
        Vec::new()
    };
    for sg in enumerated.into_iter().chain(curated) {
        for asg in assignments(sg.order, &letters) {
            if let Some(cap) = budget.max_checks {
                if examined >= cap {
                    return Separation::Inconclusive { examined };
                }
            }
            examined += 1;
            let (lhs, rhs) = (sg.eval(a, &asg), sg.eval(b, &asg));
            if let (Ok(lhs), Ok(rhs)) = (lhs, rhs) {
                if lhs != rhs {
                    return Separation::Separated {
                        semigroup: sg,
                        assignment: asg,
                        lhs,
                        rhs,
                    };
                }
            }
        }
    }
    Separation::Inconclusive { examined }
}
