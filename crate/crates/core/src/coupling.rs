//! Coupling rules for connections.
//!
//! A *coupling* of a connection imposes a joint law on variables that are
//! never jointly observed: one variable per context containing the content,
//! each with the marginal recorded in that context. A *coupling rule* picks,
//! for every connection it applies to, exactly one such coupling.
//!
//! Two rules are built in:
//!
//! * [`IdentityRule`] — all variables equal with probability 1. Applies only
//!   when all marginals coincide, and is then the unique coupling supported
//!   on the diagonal.
//! * [`ComonotonicRule`] — the quantile coupling: all variables are driven by
//!   one shared uniform draw `U` on `(0, 1]`, each variable taking its `j`-th
//!   outcome when `U` falls in `(F(j-1), F(j)]`, where `F` is its cumulative
//!   distribution in alphabet order. Always applies; reduces to the identity
//!   coupling when the marginals coincide. For two-outcome alphabets it
//!   maximizes every pairwise equality probability, achieving
//!   `sum_a min(p(a), p'(a))`.
//!
//! A rule is *well-fitting* on a class of connections if it picks exactly one
//! coupling for each member and picks the identity coupling whenever the
//! marginals coincide; [`check_well_fitting`] verifies this on a finite class.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Zero;

use crate::linprog::Relation;
use crate::model::{
    Alphabet, Connection, ContentId, ContextId, JointDistribution, Marginal, ModelError,
};
use crate::rational::Rational;
use crate::space::ProductSpace;

/// Errors from coupling computations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CouplingError {
    #[error("variable index {index} out of range for a joint of {rank} variables")]
    IndexError { index: usize, rank: usize },
    #[error("variables `{left}` and `{right}` have different alphabets")]
    AlphabetMismatch { left: String, right: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A deterministic choice of one coupling per connection.
///
/// `apply` returns `None` when the rule does not cover the connection. The
/// returned joint has one variable per context of the connection, labeled by
/// the context, in the connection's (label) order, each over the
/// connection's alphabet.
pub trait CouplingRule {
    /// Stable rule name, as accepted by [`rule_by_name`].
    fn name(&self) -> &str;
    fn apply(&self, conn: &Connection) -> Option<JointDistribution>;
}

/// All variables equal with probability one; applies iff the connection's
/// marginals all coincide.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRule;

/// The quantile coupling (see module docs); applies to every connection.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComonotonicRule;

impl CouplingRule for IdentityRule {
    fn name(&self) -> &str {
        "identity"
    }
    fn apply(&self, conn: &Connection) -> Option<JointDistribution> {
        identity_coupling(conn)
    }
}

impl CouplingRule for ComonotonicRule {
    fn name(&self) -> &str {
        "comonotonic"
    }
    fn apply(&self, conn: &Connection) -> Option<JointDistribution> {
        Some(comonotonic_coupling(conn))
    }
}

/// Looks up a built-in rule by name (`identity` or `comonotonic`).
pub fn rule_by_name(name: &str) -> Option<&'static dyn CouplingRule> {
    match name {
        "identity" => Some(&IdentityRule),
        "comonotonic" => Some(&ComonotonicRule),
        _ => None,
    }
}

fn coupling_variables(conn: &Connection) -> Vec<(String, Alphabet)> {
    conn.marginals
        .iter()
        .map(|(c, _)| (c.to_string(), conn.alphabet.clone()))
        .collect()
}

/// The diagonal coupling, defined iff all marginals of the connection
/// coincide; it is then the unique coupling concentrated on constant tuples.
pub fn identity_coupling(conn: &Connection) -> Option<JointDistribution> {
    if !conn.is_consistent() {
        return None;
    }
    let variables = coupling_variables(conn);
    let m = conn.alphabet.len();
    let k = conn.arity();
    let space = ProductSpace::new(&alloc::vec![m; k]);
    let mut probs = alloc::vec![Rational::zero(); space.len()];
    let shared: &Marginal = &conn.marginals[0].1;
    for j in 0..m {
        let coords = alloc::vec![j; k];
        probs[space.index(&coords)] = shared.prob(j).clone();
    }
    Some(JointDistribution::new(variables, probs).expect("diagonal table is a distribution"))
}

/// The quantile coupling of the connection (always defined).
pub fn comonotonic_coupling(conn: &Connection) -> JointDistribution {
    quantile_coupling_oriented(conn, &alloc::vec![true; conn.arity()])
}

/// Quantile coupling with a per-variable direction: ascending variables read
/// their cumulative distribution in alphabet order, descending ones in
/// reversed order. All-ascending is [`comonotonic_coupling`]; mixed
/// directions are used by the generators to produce anti-correlated
/// couplings with the same marginals.
pub(crate) fn quantile_coupling_oriented(
    conn: &Connection,
    ascending: &[bool],
) -> JointDistribution {
    let k = conn.arity();
    assert_eq!(ascending.len(), k, "one direction per variable");
    let m = conn.alphabet.len();

    // Cumulative sums of each marginal, read in the variable's direction.
    let mut cums: Vec<Vec<Rational>> = Vec::with_capacity(k);
    for (i, (_, marginal)) in conn.marginals.iter().enumerate() {
        let mut acc = Rational::zero();
        let mut cum = Vec::with_capacity(m);
        for j in 0..m {
            let idx = if ascending[i] { j } else { m - 1 - j };
            acc += marginal.prob(idx);
            cum.push(acc.clone());
        }
        cums.push(cum);
    }

    // Cut (0, 1] at every cumulative value; each resulting cell selects one
    // outcome per variable (the smallest index whose cumulative covers it).
    let mut cuts: Vec<Rational> = cums.iter().flatten().cloned().collect();
    cuts.sort();
    cuts.dedup();

    let variables = coupling_variables(conn);
    let space = ProductSpace::new(&alloc::vec![m; k]);
    let mut probs = alloc::vec![Rational::zero(); space.len()];
    let mut ptr = alloc::vec![0usize; k];
    let mut prev = Rational::zero();
    let mut coords = alloc::vec![0usize; k];
    for cut in cuts {
        for i in 0..k {
            while cums[i][ptr[i]] < cut {
                ptr[i] += 1;
            }
            coords[i] = if ascending[i] { ptr[i] } else { m - 1 - ptr[i] };
        }
        let width = &cut - &prev;
        if !width.is_zero() {
            probs[space.index(&coords)] += width;
        }
        prev = cut;
    }

    JointDistribution::new(variables, probs).expect("cell widths form a distribution")
}

/// Probability that variables `i` and `j` of a joint take equal outcomes.
pub fn pairwise_equality_prob(
    joint: &JointDistribution,
    i: usize,
    j: usize,
) -> Result<Rational, CouplingError> {
    let rank = joint.variables().len();
    for idx in [i, j] {
        if idx >= rank {
            return Err(CouplingError::IndexError { index: idx, rank });
        }
    }
    if joint.alphabet(i) != joint.alphabet(j) {
        return Err(CouplingError::AlphabetMismatch {
            left: joint.label(i).to_string(),
            right: joint.label(j).to_string(),
        });
    }
    let space = joint.space();
    let mut total = Rational::zero();
    for (idx, p) in joint.probs().iter().enumerate() {
        if !p.is_zero() {
            let coords = space.coords(idx);
            if coords[i] == coords[j] {
                total += p;
            }
        }
    }
    Ok(total)
}

/// One failed well-fitting requirement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WellFittingViolation {
    /// The coupling's marginal in some context differs from the connection's.
    MarginalNotPreserved {
        content: ContentId,
        context: ContextId,
    },
    /// Marginals coincide but the rule did not return the identity coupling.
    NotIdentityOnConsistent { content: ContentId },
    /// Two applications of the rule to the same connection disagreed.
    NotDeterministic { content: ContentId },
}

/// Outcome of checking a rule against a finite class of connections.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WellFittingReport {
    /// Connections the rule declined (no coupling chosen).
    pub not_applicable: Vec<ContentId>,
    pub violations: Vec<WellFittingViolation>,
}

impl WellFittingReport {
    /// True iff the rule chose exactly one lawful coupling for every
    /// connection in the class and reduced to identity where required.
    pub fn is_well_fitting(&self) -> bool {
        self.not_applicable.is_empty() && self.violations.is_empty()
    }
}

/// Checks that `rule` is well-fitting on the given class of connections:
/// it must apply to each, preserve every per-context marginal, return the
/// identity coupling whenever the marginals coincide, and be deterministic.
pub fn check_well_fitting(rule: &dyn CouplingRule, class: &[Connection]) -> WellFittingReport {
    let mut report = WellFittingReport::default();
    for conn in class {
        let Some(coupling) = rule.apply(conn) else {
            report.not_applicable.push(conn.content.clone());
            continue;
        };
        if rule.apply(conn).as_ref() != Some(&coupling) {
            report
                .violations
                .push(WellFittingViolation::NotDeterministic {
                    content: conn.content.clone(),
                });
            continue;
        }
        for (pos, (context, marginal)) in conn.marginals.iter().enumerate() {
            if coupling.marginal(pos) != *marginal {
                report
                    .violations
                    .push(WellFittingViolation::MarginalNotPreserved {
                        content: conn.content.clone(),
                        context: context.clone(),
                    });
            }
        }
        if conn.is_consistent() {
            let identity = identity_coupling(conn).expect("consistent connection");
            if coupling != identity {
                report
                    .violations
                    .push(WellFittingViolation::NotIdentityOnConsistent {
                        content: conn.content.clone(),
                    });
            }
        }
    }
    report
}

/// One linear constraint on a connection's coupling table.
///
/// `coeffs` is dense over the coupling's cells in canonical order (the
/// connection's contexts in label order, last varying fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionConstraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub bound: Rational,
}

/// A bundle of linear constraints on one connection's coupling, used in
/// place of a pinned coupling by the constrained decision procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionConstraintSet {
    pub content: ContentId,
    pub constraints: Vec<ConnectionConstraint>,
}
