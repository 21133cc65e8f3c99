//! Deciding (non)contextuality by exact LP feasibility.
//!
//! A system is *noncontextual under a coupling rule* if there is a joint
//! distribution over all its variables (an *overall coupling*) whose
//! per-context marginals are the bunches and whose per-content marginals are
//! the couplings the rule prescribes for the connections. The traditional
//! question is the special case of the identity rule on a consistently
//! connected system. Existence is a linear feasibility problem in the
//! probabilities of outcome tuples, decided exactly.
//!
//! Two independent formulations are implemented:
//!
//! * [`decide_contextual`] (and friends) solve a *support-restricted* LP:
//!   columns are only those outcome tuples that restrict into the support of
//!   every bunch and every prescribed coupling, and rows only the nonzero
//!   cells plus normalization. Tuples hitting a zero cell are forced to zero
//!   mass anyway, so restricting changes nothing about feasibility while
//!   shrinking the LP by orders of magnitude. [`build_decision_lp`] exposes
//!   the unrestricted, full-product form of the same problem.
//! * [`hull_oracle`] never builds couplings: it enumerates all deterministic
//!   global assignments and asks whether the stacked vector of bunch and
//!   prescribed-coupling cell probabilities is a convex mixture of the
//!   assignments' deterministic vectors.
//!
//! Every verdict carries its LP together with the solver outcome, so both
//! the semantic witness and the infeasibility certificate can be re-verified
//! from scratch.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::coupling::{ConnectionConstraintSet, CouplingRule};
use crate::linprog::{
    solve_feasibility, verify_result, Constraint, FeasibilityResult, InfeasibilityCertificate,
    LinearSystem, LinprogError, Relation,
};
use crate::model::{
    connection_of, consistency_report, Alphabet, ContentId, ContextId, ModelError, System,
};
use crate::rational::Rational;
use crate::space::{checked_product, ProductSpace};

/// The answer of a decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Noncontextual,
    Contextual,
}

/// A sparse overall coupling: a joint distribution over every (content,
/// context) variable of a system, stored by its nonzero atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coupling {
    /// All system variables in canonical order (content-major, then context).
    pub variables: Vec<(ContentId, ContextId)>,
    /// Alphabet of each variable, parallel to `variables`.
    pub alphabets: Vec<Alphabet>,
    /// Nonzero atoms as (outcome tuple, probability), tuples strictly
    /// increasing.
    pub atoms: Vec<(Vec<usize>, Rational)>,
}

impl Coupling {
    /// Positions of this coupling's variables lying in context `c`, with the
    /// bunch-canonical (content label) order.
    fn context_positions(&self, c: &ContextId) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, (_, vc))| vc == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Positions of this coupling's variables carrying content `q`, in
    /// context label order.
    fn connection_positions(&self, q: &ContentId) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, (vq, _))| vq == q)
            .map(|(i, _)| i)
            .collect()
    }

    /// Dense marginal table over the given positions (canonical cell order).
    pub fn dense_marginal(&self, positions: &[usize]) -> Vec<Rational> {
        let sizes: Vec<usize> = positions.iter().map(|&p| self.alphabets[p].len()).collect();
        let space = ProductSpace::new(&sizes);
        let mut table = alloc::vec![Rational::zero(); space.len()];
        let mut cell = alloc::vec![0usize; positions.len()];
        for (tuple, p) in &self.atoms {
            for (k, &pos) in positions.iter().enumerate() {
                cell[k] = tuple[pos];
            }
            table[space.index(&cell)] += p;
        }
        table
    }

    /// Checks that this is a lawful overall coupling of `system`: variables
    /// match the system's incidence exactly, atoms are sorted, positive, in
    /// range, sum to one, and every context marginal reproduces the bunch.
    pub fn verify_overall(&self, system: &System) -> bool {
        if self.variables != system.overall_variables() {
            return false;
        }
        for (i, (q, _)) in self.variables.iter().enumerate() {
            match system.format.alphabet(q) {
                Some(a) if *a == self.alphabets[i] => {}
                _ => return false,
            }
        }
        let mut total = Rational::zero();
        let mut prev: Option<&Vec<usize>> = None;
        for (tuple, p) in &self.atoms {
            if tuple.len() != self.variables.len() || !p.is_positive() {
                return false;
            }
            if tuple
                .iter()
                .enumerate()
                .any(|(i, &v)| v >= self.alphabets[i].len())
            {
                return false;
            }
            if prev.is_some_and(|t| t >= tuple) {
                return false;
            }
            prev = Some(tuple);
            total += p;
        }
        if !total.is_one() {
            return false;
        }
        for c in system.format.contexts() {
            let Some(bunch) = system.bunch(c) else {
                return false;
            };
            let positions = self.context_positions(c);
            if self.dense_marginal(&positions) != bunch.joint.probs() {
                return false;
            }
        }
        true
    }

    /// Checks that every connection marginal equals the coupling the rule
    /// prescribes for that connection.
    pub fn verify_connections(&self, system: &System, rule: &dyn CouplingRule) -> bool {
        for q in system.format.content_ids() {
            let Ok(conn) = connection_of(system, q) else {
                return false;
            };
            let Some(prescribed) = rule.apply(&conn) else {
                return false;
            };
            let positions = self.connection_positions(q);
            if self.dense_marginal(&positions) != prescribed.probs() {
                return false;
            }
        }
        true
    }

    /// Checks that every connection marginal satisfies its constraint set
    /// (contents without a set are unconstrained).
    pub fn verify_constraint_sets(
        &self,
        system: &System,
        sets: &[ConnectionConstraintSet],
    ) -> bool {
        for set in sets {
            if !system.format.has_content(&set.content) {
                return false;
            }
            let positions = self.connection_positions(&set.content);
            let table = self.dense_marginal(&positions);
            for constraint in &set.constraints {
                if constraint.coeffs.len() != table.len() {
                    return false;
                }
                let mut lhs = Rational::zero();
                for (a, x) in constraint.coeffs.iter().zip(&table) {
                    if !a.is_zero() && !x.is_zero() {
                        lhs += a * x;
                    }
                }
                let ok = match constraint.relation {
                    Relation::Le => lhs <= constraint.bound,
                    Relation::Eq => lhs == constraint.bound,
                    Relation::Ge => lhs >= constraint.bound,
                };
                if !ok {
                    return false;
                }
            }
        }
        true
    }
}

/// Limits and class restrictions for the decision procedures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Hard cap on LP columns (and on enumerated assignments in the oracle).
    pub max_columns: usize,
    /// Reject systems with any non-dichotomous content.
    pub dichotomous_only: bool,
    /// Reject systems with an alphabet larger than this, if set.
    pub max_alphabet: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            max_columns: 1 << 20,
            dichotomous_only: false,
            max_alphabet: None,
        }
    }
}

/// Errors of the decision procedures.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextualityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linprog(#[from] LinprogError),
    #[error("coupling rule `{rule}` does not apply to the connection of content `{content}`")]
    RuleNotApplicable { rule: String, content: String },
    #[error("the traditional decision requires a consistently connected system; content `{content}` differs between contexts `{context_a}` and `{context_b}`")]
    NotConsistentlyConnected {
        content: String,
        context_a: String,
        context_b: String,
    },
    #[error("decision problem needs {needed} columns, exceeding the limit of {limit}")]
    TooLarge { needed: usize, limit: usize },
    #[error("content `{content}` has {size} outcomes, outside the configured class restriction")]
    AlphabetRestriction { content: String, size: usize },
    #[error("unknown coupling rule `{0}`")]
    UnknownRule(String),
    #[error("a solver outcome failed independent re-verification")]
    VerificationFailed,
}

/// The outcome of a decision, carrying everything needed to re-check it:
/// the LP that was solved, the raw solver outcome, and (when feasible) the
/// witness coupling assembled from the solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub status: Status,
    /// Name of the coupling rule that fixed the connection marginals
    /// (`"constrained"` for the constraint-set procedure).
    pub rule_name: String,
    /// The linear system that was decided.
    pub lp: LinearSystem,
    /// Raw solver outcome for `lp`; feasible iff `status` is noncontextual.
    pub feasibility: FeasibilityResult,
    /// Witness overall coupling when noncontextual.
    pub witness: Option<Coupling>,
}

impl Verdict {
    pub fn certificate(&self) -> Option<&InfeasibilityCertificate> {
        match &self.feasibility {
            FeasibilityResult::Infeasible(cert) => Some(cert),
            FeasibilityResult::Feasible(_) => None,
        }
    }

    /// Re-verifies the solver outcome against the stored LP from scratch.
    pub fn reverify(&self) -> bool {
        verify_result(&self.lp, &self.feasibility)
    }

    pub fn lp_columns(&self) -> usize {
        self.lp.num_columns()
    }

    pub fn lp_rows(&self) -> usize {
        self.lp.num_rows()
    }
}

/// One marginal requirement: the variables at `positions` (increasing, in
/// the canonical order of the requirement's own table) must jointly follow
/// `table`.
struct MarginalGroup {
    positions: Vec<usize>,
    sizes: Vec<usize>,
    table: Vec<Rational>,
}

impl MarginalGroup {
    fn space(&self) -> ProductSpace {
        ProductSpace::new(&self.sizes)
    }
}

/// Variables of the decision problem: the system's incidence in canonical
/// order with alphabet sizes.
fn decision_variables(system: &System) -> (Vec<(ContentId, ContextId)>, Vec<usize>, Vec<Alphabet>) {
    let variables = system.overall_variables();
    let mut sizes = Vec::with_capacity(variables.len());
    let mut alphabets = Vec::with_capacity(variables.len());
    for (q, _) in &variables {
        let a = system
            .format
            .alphabet(q)
            .expect("validated system")
            .clone();
        sizes.push(a.len());
        alphabets.push(a);
    }
    (variables, sizes, alphabets)
}

fn positions_of_context(
    variables: &[(ContentId, ContextId)],
    c: &ContextId,
) -> Vec<usize> {
    variables
        .iter()
        .enumerate()
        .filter(|(_, (_, vc))| vc == c)
        .map(|(i, _)| i)
        .collect()
}

fn positions_of_content(
    variables: &[(ContentId, ContextId)],
    q: &ContentId,
) -> Vec<usize> {
    variables
        .iter()
        .enumerate()
        .filter(|(_, (vq, _))| vq == q)
        .map(|(i, _)| i)
        .collect()
}

/// Bunch groups for every context. Positions within a context come out in
/// content label order, matching the canonical bunch table layout.
fn bunch_groups(
    system: &System,
    variables: &[(ContentId, ContextId)],
) -> Vec<MarginalGroup> {
    let mut groups = Vec::new();
    for c in system.format.contexts() {
        let bunch = system.bunch(c).expect("validated system");
        let positions = positions_of_context(variables, c);
        let sizes: Vec<usize> = bunch
            .joint
            .variables()
            .iter()
            .map(|(_, a)| a.len())
            .collect();
        groups.push(MarginalGroup {
            positions,
            sizes,
            table: bunch.joint.probs().to_vec(),
        });
    }
    groups
}

/// Connection groups pinned to the couplings prescribed by `rule`.
fn connection_groups(
    system: &System,
    variables: &[(ContentId, ContextId)],
    rule: &dyn CouplingRule,
) -> Result<Vec<MarginalGroup>, ContextualityError> {
    let mut groups = Vec::new();
    for q in system.format.content_ids() {
        let conn = connection_of(system, q)?;
        let prescribed = rule
            .apply(&conn)
            .ok_or_else(|| ContextualityError::RuleNotApplicable {
                rule: rule.name().to_string(),
                content: q.to_string(),
            })?;
        let positions = positions_of_content(variables, q);
        let sizes: Vec<usize> = prescribed
            .variables()
            .iter()
            .map(|(_, a)| a.len())
            .collect();
        groups.push(MarginalGroup {
            positions,
            sizes,
            table: prescribed.probs().to_vec(),
        });
    }
    Ok(groups)
}

/// Enumerates, by depth-first search with prefix pruning, all outcome tuples
/// whose restriction to every group lies in that group's support.
fn enumerate_support_columns(
    sizes: &[usize],
    groups: &[MarginalGroup],
    max_columns: usize,
) -> Result<Vec<Vec<usize>>, ContextualityError> {
    let n = sizes.len();

    // For each group, the set of valid prefixes of each length.
    struct PrefixCheck {
        /// Positions of the group (increasing).
        positions: Vec<usize>,
        /// prefixes[t] = set of valid value prefixes of length t+1.
        prefixes: Vec<alloc::collections::BTreeSet<Vec<usize>>>,
    }
    let mut checks: Vec<PrefixCheck> = Vec::with_capacity(groups.len());
    for g in groups {
        let space = g.space();
        let mut prefixes =
            alloc::vec![alloc::collections::BTreeSet::new(); g.positions.len()];
        for (i, p) in g.table.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let cell = space.coords(i);
            for t in 0..g.positions.len() {
                prefixes[t].insert(cell[..=t].to_vec());
            }
        }
        checks.push(PrefixCheck {
            positions: g.positions.clone(),
            prefixes,
        });
    }

    // checks_at[v] lists (group, prefix length - 1) to test once variable v
    // is assigned.
    let mut checks_at: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); n];
    for (gi, check) in checks.iter().enumerate() {
        for (t, &pos) in check.positions.iter().enumerate() {
            checks_at[pos].push((gi, t));
        }
    }

    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut current = alloc::vec![0usize; n];
    // Iterative DFS over variable assignments in canonical order.
    let mut depth = 0usize;
    let mut next_val = alloc::vec![0usize; n + 1];
    loop {
        if depth == n {
            if out.len() == max_columns {
                return Err(ContextualityError::TooLarge {
                    needed: out.len() + 1,
                    limit: max_columns,
                });
            }
            out.push(current.clone());
            if n == 0 {
                return Ok(out);
            }
            depth -= 1;
            next_val[depth] = current[depth] + 1;
            continue;
        }
        let v = next_val[depth];
        if v >= sizes[depth] {
            if depth == 0 {
                return Ok(out);
            }
            depth -= 1;
            next_val[depth] = current[depth] + 1;
            continue;
        }
        current[depth] = v;
        let ok = checks_at[depth].iter().all(|&(gi, t)| {
            let check = &checks[gi];
            let prefix: Vec<usize> = check.positions[..=t]
                .iter()
                .map(|&p| current[p])
                .collect();
            check.prefixes[t].contains(&prefix)
        });
        if ok {
            depth += 1;
            next_val[depth] = 0;
        } else {
            next_val[depth] = v + 1;
        }
    }
}

fn tuple_label(alphabets: &[Alphabet], tuple: &[usize]) -> String {
    let mut s = String::new();
    for (i, &v) in tuple.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(alphabets[i].outcome(v));
    }
    s
}

/// Builds the support-restricted feasibility LP: one column per support
/// tuple, a normalization row, and one row per nonzero cell of each group.
fn restricted_lp(
    columns: &[Vec<usize>],
    alphabets: &[Alphabet],
    groups: &[MarginalGroup],
) -> LinearSystem {
    let labels: Vec<String> = columns
        .iter()
        .map(|t| tuple_label(alphabets, t))
        .collect();
    let mut rows = Vec::new();

    // Normalization: total mass one.
    rows.push(Constraint {
        coeffs: (0..columns.len()).map(|j| (j, Rational::one())).collect(),
        relation: Relation::Eq,
        rhs: Rational::one(),
    });

    for g in groups {
        let space = g.space();
        // Map nonzero cell index -> row slot.
        let mut row_of_cell: alloc::collections::BTreeMap<usize, usize> =
            alloc::collections::BTreeMap::new();
        let mut group_rows: Vec<Constraint> = Vec::new();
        for (i, p) in g.table.iter().enumerate() {
            if !p.is_zero() {
                row_of_cell.insert(i, group_rows.len());
                group_rows.push(Constraint {
                    coeffs: Vec::new(),
                    relation: Relation::Eq,
                    rhs: p.clone(),
                });
            }
        }
        let mut cell = alloc::vec![0usize; g.positions.len()];
        for (j, tuple) in columns.iter().enumerate() {
            for (k, &pos) in g.positions.iter().enumerate() {
                cell[k] = tuple[pos];
            }
            let idx = space.index(&cell);
            let slot = row_of_cell
                .get(&idx)
                .expect("support-restricted column hit a zero cell");
            group_rows[*slot].coeffs.push((j, Rational::one()));
        }
        rows.extend(group_rows);
    }

    LinearSystem {
        columns: labels,
        rows,
    }
}

fn enforce_class_restrictions(
    system: &System,
    config: &AnalysisConfig,
) -> Result<(), ContextualityError> {
    for (q, a) in system.format.contents() {
        if config.dichotomous_only && a.len() != 2 {
            return Err(ContextualityError::AlphabetRestriction {
                content: q.to_string(),
                size: a.len(),
            });
        }
        if let Some(max) = config.max_alphabet {
            if a.len() > max {
                return Err(ContextualityError::AlphabetRestriction {
                    content: q.to_string(),
                    size: a.len(),
                });
            }
        }
    }
    Ok(())
}

/// Shared decision core: enumerate support columns, build and solve the LP,
/// re-verify the outcome, and assemble the verdict.
fn decide_with_groups(
    system: &System,
    rule_name: &str,
    groups: Vec<MarginalGroup>,
    extra_rows: Vec<Constraint>,
    config: &AnalysisConfig,
    check_witness: impl Fn(&Coupling) -> bool,
) -> Result<Verdict, ContextualityError> {
    let (variables, sizes, alphabets) = decision_variables(system);
    let columns = enumerate_support_columns(&sizes, &groups, config.max_columns)?;
    let mut lp = restricted_lp(&columns, &alphabets, &groups);
    lp.rows.extend(extra_rows);

    let feasibility = solve_feasibility(&lp)?;
    if !verify_result(&lp, &feasibility) {
        return Err(ContextualityError::VerificationFailed);
    }

    match &feasibility {
        FeasibilityResult::Feasible(x) => {
            let atoms: Vec<(Vec<usize>, Rational)> = columns
                .iter()
                .zip(x)
                .filter(|(_, p)| !p.is_zero())
                .map(|(t, p)| (t.clone(), p.clone()))
                .collect();
            let witness = Coupling {
                variables,
                alphabets,
                atoms,
            };
            if !witness.verify_overall(system) || !check_witness(&witness) {
                return Err(ContextualityError::VerificationFailed);
            }
            Ok(Verdict {
                status: Status::Noncontextual,
                rule_name: rule_name.to_string(),
                lp,
                feasibility,
                witness: Some(witness),
            })
        }
        FeasibilityResult::Infeasible(_) => Ok(Verdict {
            status: Status::Contextual,
            rule_name: rule_name.to_string(),
            lp,
            feasibility,
            witness: None,
        }),
    }
}

/// Decides whether `system` is noncontextual under `rule` (an overall
/// coupling exists whose connection marginals are the rule's couplings).
pub fn decide_contextual(
    system: &System,
    rule: &dyn CouplingRule,
) -> Result<Verdict, ContextualityError> {
    decide_contextual_with(system, rule, &AnalysisConfig::default())
}

/// [`decide_contextual`] with explicit limits and class restrictions.
pub fn decide_contextual_with(
    system: &System,
    rule: &dyn CouplingRule,
    config: &AnalysisConfig,
) -> Result<Verdict, ContextualityError> {
    enforce_class_restrictions(system, config)?;
    let (variables, _, _) = decision_variables(system);
    let mut groups = bunch_groups(system, &variables);
    groups.extend(connection_groups(system, &variables, rule)?);
    let rule_name = rule.name().to_string();
    decide_with_groups(system, &rule_name, groups, Vec::new(), config, |w| {
        w.verify_connections(system, rule)
    })
}

/// Decides traditional (non)contextuality: identity-coupled connections on a
/// consistently connected system. Errors if the system is not consistently
/// connected.
pub fn decide_traditional(system: &System) -> Result<Verdict, ContextualityError> {
    decide_traditional_with(system, &AnalysisConfig::default())
}

/// [`decide_traditional`] with explicit limits.
pub fn decide_traditional_with(
    system: &System,
    config: &AnalysisConfig,
) -> Result<Verdict, ContextualityError> {
    let report = consistency_report(system)?;
    if let Some(v) = report.violations.first() {
        return Err(ContextualityError::NotConsistentlyConnected {
            content: v.content.to_string(),
            context_a: v.context_a.to_string(),
            context_b: v.context_b.to_string(),
        });
    }
    decide_contextual_with(system, &crate::coupling::IdentityRule, config)
}

/// Decides noncontextuality with connection marginals bounded by linear
/// constraint sets instead of pinned couplings: feasible iff some overall
/// coupling satisfies every bunch and every constraint. Contents without a
/// constraint set are unconstrained.
pub fn decide_contextual_constrained(
    system: &System,
    sets: &[ConnectionConstraintSet],
) -> Result<Verdict, ContextualityError> {
    decide_contextual_constrained_with(system, sets, &AnalysisConfig::default())
}

/// [`decide_contextual_constrained`] with explicit limits.
pub fn decide_contextual_constrained_with(
    system: &System,
    sets: &[ConnectionConstraintSet],
    config: &AnalysisConfig,
) -> Result<Verdict, ContextualityError> {
    enforce_class_restrictions(system, config)?;
    let (variables, sizes, _) = decision_variables(system);
    let groups = bunch_groups(system, &variables);

    // Constraint rows must be expressed over the restricted columns, so
    // enumerate them first (restriction comes from bunch supports only).
    let columns = enumerate_support_columns(&sizes, &groups, config.max_columns)?;
    let mut extra_rows = Vec::new();
    for set in sets {
        if !system.format.has_content(&set.content) {
            return Err(ContextualityError::Model(ModelError::UnknownContent {
                content: set.content.to_string(),
            }));
        }
        let positions = positions_of_content(&variables, &set.content);
        let cell_sizes: Vec<usize> = positions.iter().map(|&p| sizes[p]).collect();
        let cell_space = ProductSpace::new(&cell_sizes);
        for constraint in &set.constraints {
            if constraint.coeffs.len() != cell_space.len() {
                return Err(ContextualityError::Linprog(LinprogError::DimensionMismatch {
                    expected: cell_space.len(),
                    got: constraint.coeffs.len(),
                }));
            }
            let mut coeffs: Vec<(usize, Rational)> = Vec::new();
            let mut cell = alloc::vec![0usize; positions.len()];
            for (j, tuple) in columns.iter().enumerate() {
                for (k, &pos) in positions.iter().enumerate() {
                    cell[k] = tuple[pos];
                }
                let a = &constraint.coeffs[cell_space.index(&cell)];
                if !a.is_zero() {
                    coeffs.push((j, a.clone()));
                }
            }
            extra_rows.push(Constraint {
                coeffs,
                relation: constraint.relation,
                rhs: constraint.bound.clone(),
            });
        }
    }

    // Re-run the shared core with the same groups; it re-enumerates the
    // identical column list (deterministic), keeping one code path.
    decide_with_groups(system, "constrained", groups, extra_rows, config, |w| {
        w.verify_constraint_sets(system, sets)
    })
}

/// Feasibility of an overall coupling matching every bunch, with the
/// identity coupling imposed on exactly the `pinned` connections and all
/// others left free. Errors if a pinned connection is not consistent.
/// Used by the hidden-variable obstruction diagnostic.
pub(crate) fn feasible_with_identity_pins(
    system: &System,
    pinned: &[ContentId],
    config: &AnalysisConfig,
) -> Result<bool, ContextualityError> {
    let (variables, sizes, alphabets) = decision_variables(system);
    let mut groups = bunch_groups(system, &variables);
    for q in pinned {
        let conn = connection_of(system, q)?;
        let prescribed = crate::coupling::identity_coupling(&conn).ok_or_else(|| {
            ContextualityError::RuleNotApplicable {
                rule: "identity".to_string(),
                content: q.to_string(),
            }
        })?;
        let positions = positions_of_content(&variables, q);
        let group_sizes: Vec<usize> = prescribed
            .variables()
            .iter()
            .map(|(_, a)| a.len())
            .collect();
        groups.push(MarginalGroup {
            positions,
            sizes: group_sizes,
            table: prescribed.probs().to_vec(),
        });
    }
    let columns = enumerate_support_columns(&sizes, &groups, config.max_columns)?;
    let lp = restricted_lp(&columns, &alphabets, &groups);
    let feasibility = solve_feasibility(&lp)?;
    if !verify_result(&lp, &feasibility) {
        return Err(ContextualityError::VerificationFailed);
    }
    Ok(matches!(feasibility, FeasibilityResult::Feasible(_)))
}

/// Builds the unrestricted decision LP: one column for every outcome tuple
/// of the full product space, a normalization row, and one row for every
/// cell (zero or not) of every bunch and every prescribed coupling.
pub fn build_decision_lp(
    system: &System,
    rule: &dyn CouplingRule,
) -> Result<LinearSystem, ContextualityError> {
    build_decision_lp_with(system, rule, &AnalysisConfig::default())
}

/// [`build_decision_lp`] with an explicit column cap.
pub fn build_decision_lp_with(
    system: &System,
    rule: &dyn CouplingRule,
    config: &AnalysisConfig,
) -> Result<LinearSystem, ContextualityError> {
    let (variables, sizes, alphabets) = decision_variables(system);
    let total = checked_product(&sizes).ok_or(ContextualityError::TooLarge {
        needed: usize::MAX,
        limit: config.max_columns,
    })?;
    if total > config.max_columns {
        return Err(ContextualityError::TooLarge {
            needed: total,
            limit: config.max_columns,
        });
    }
    let mut groups = bunch_groups(system, &variables);
    groups.extend(connection_groups(system, &variables, rule)?);

    let space = ProductSpace::new(&sizes);
    let labels: Vec<String> = space
        .iter()
        .map(|t| tuple_label(&alphabets, &t))
        .collect();

    let mut rows = Vec::new();
    rows.push(Constraint {
        coeffs: (0..total).map(|j| (j, Rational::one())).collect(),
        relation: Relation::Eq,
        rhs: Rational::one(),
    });
    for g in &groups {
        let g_space = g.space();
        let mut coeffs_per_cell: Vec<Vec<(usize, Rational)>> =
            alloc::vec![Vec::new(); g_space.len()];
        let mut cell = alloc::vec![0usize; g.positions.len()];
        for (j, tuple) in space.iter().enumerate() {
            for (k, &pos) in g.positions.iter().enumerate() {
                cell[k] = tuple[pos];
            }
            coeffs_per_cell[g_space.index(&cell)].push((j, Rational::one()));
        }
        for (i, coeffs) in coeffs_per_cell.into_iter().enumerate() {
            rows.push(Constraint {
                coeffs,
                relation: Relation::Eq,
                rhs: g.table[i].clone(),
            });
        }
    }

    Ok(LinearSystem {
        columns: labels,
        rows,
    })
}

/// Independent oracle: enumerates every deterministic global assignment of
/// outcomes to the system's variables and decides, by exact LP, whether the
/// stacked vector of all bunch and prescribed-coupling cell probabilities is
/// a convex combination of the assignments' deterministic vectors.
pub fn hull_oracle(
    system: &System,
    rule: &dyn CouplingRule,
) -> Result<Verdict, ContextualityError> {
    hull_oracle_with(system, rule, &AnalysisConfig::default())
}

/// [`hull_oracle`] with an explicit assignment cap.
pub fn hull_oracle_with(
    system: &System,
    rule: &dyn CouplingRule,
    config: &AnalysisConfig,
) -> Result<Verdict, ContextualityError> {
    enforce_class_restrictions(system, config)?;
    let (variables, sizes, alphabets) = decision_variables(system);
    let total = checked_product(&sizes).ok_or(ContextualityError::TooLarge {
        needed: usize::MAX,
        limit: config.max_columns,
    })?;
    if total > config.max_columns {
        return Err(ContextualityError::TooLarge {
            needed: total,
            limit: config.max_columns,
        });
    }
    let mut groups = bunch_groups(system, &variables);
    groups.extend(connection_groups(system, &variables, rule)?);

    // One column per deterministic assignment; one row per cell of every
    // group (zeros included), plus mixture normalization.
    let space = ProductSpace::new(&sizes);
    let labels: Vec<String> = space
        .iter()
        .map(|t| tuple_label(&alphabets, &t))
        .collect();

    let mut rows: Vec<Constraint> = Vec::new();
    rows.push(Constraint {
        coeffs: (0..total).map(|j| (j, Rational::one())).collect(),
        relation: Relation::Eq,
        rhs: Rational::one(),
    });
    for g in &groups {
        let g_space = g.space();
        let mut coeffs_per_cell: Vec<Vec<(usize, Rational)>> =
            alloc::vec![Vec::new(); g_space.len()];
        let mut cell = alloc::vec![0usize; g.positions.len()];
        for (j, tuple) in space.iter().enumerate() {
            for (k, &pos) in g.positions.iter().enumerate() {
                cell[k] = tuple[pos];
            }
            // The assignment's deterministic vector has a 1 exactly at the
            // cell it induces in this group.
            coeffs_per_cell[g_space.index(&cell)].push((j, Rational::one()));
        }
        for (i, coeffs) in coeffs_per_cell.into_iter().enumerate() {
            rows.push(Constraint {
                coeffs,
                relation: Relation::Eq,
                rhs: g.table[i].clone(),
            });
        }
    }
    let lp = LinearSystem {
        columns: labels,
        rows,
    };

    let feasibility = solve_feasibility(&lp)?;
    if !verify_result(&lp, &feasibility) {
        return Err(ContextualityError::VerificationFailed);
    }
    match &feasibility {
        FeasibilityResult::Feasible(x) => {
            let atoms: Vec<(Vec<usize>, Rational)> = x
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.is_zero())
                .map(|(j, p)| (space.coords(j), p.clone()))
                .collect();
            let witness = Coupling {
                variables,
                alphabets,
                atoms,
            };
            if !witness.verify_overall(system) || !witness.verify_connections(system, rule) {
                return Err(ContextualityError::VerificationFailed);
            }
            Ok(Verdict {
                status: Status::Noncontextual,
                rule_name: rule.name().to_string(),
                lp,
                feasibility,
                witness: Some(witness),
            })
        }
        FeasibilityResult::Infeasible(_) => Ok(Verdict {
            status: Status::Contextual,
            rule_name: rule.name().to_string(),
            lp,
            feasibility,
            witness: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{ComonotonicRule, ConnectionConstraint, IdentityRule};
    use crate::model::{validate_system, Alphabet, BunchDistribution, JointDistribution, SystemFormat};
    use crate::rational::{int, rat};
    use alloc::collections::{BTreeMap, BTreeSet};

    fn binary_bunch(context: &str, contents: &[&str], probs: Vec<Rational>) -> BunchDistribution {
        let joint = JointDistribution::new(
            contents
                .iter()
                .map(|q| (q.to_string(), Alphabet::binary()))
                .collect(),
            probs,
        )
        .unwrap();
        BunchDistribution::new(ContextId::new(context), joint)
    }

    /// Cyclic rank-2 format: q1..q4, contexts c1..c4, ci = {qi, qi+1 mod 4}.
    fn cyclic_format() -> SystemFormat {
        let mut contents = BTreeMap::new();
        for q in ["q1", "q2", "q3", "q4"] {
            contents.insert(ContentId::new(q), Alphabet::binary());
        }
        let contexts: BTreeSet<ContextId> = ["c1", "c2", "c3", "c4"]
            .into_iter()
            .map(ContextId::new)
            .collect();
        let incidence: BTreeSet<(ContentId, ContextId)> = [
            ("q1", "c1"),
            ("q2", "c1"),
            ("q2", "c2"),
            ("q3", "c2"),
            ("q3", "c3"),
            ("q4", "c3"),
            ("q1", "c4"),
            ("q4", "c4"),
        ]
        .into_iter()
        .map(|(q, c)| (ContentId::new(q), ContextId::new(c)))
        .collect();
        SystemFormat::new(contents, contexts, incidence).unwrap()
    }

    /// All four bunches perfectly correlated fair coins.
    fn all_correlated() -> System {
        let eq = alloc::vec![rat(1, 2), int(0), int(0), rat(1, 2)];
        validate_system(System::new(
            cyclic_format(),
            alloc::vec![
                binary_bunch("c1", &["q1", "q2"], eq.clone()),
                binary_bunch("c2", &["q2", "q3"], eq.clone()),
                binary_bunch("c3", &["q3", "q4"], eq.clone()),
                binary_bunch("c4", &["q1", "q4"], eq),
            ],
        ))
        .unwrap()
    }

    /// Three bunches correlated, the fourth anti-correlated: the classic
    /// contextual pattern on the cyclic rank-2 format.
    fn box_system() -> System {
        let eq = alloc::vec![rat(1, 2), int(0), int(0), rat(1, 2)];
        let ne = alloc::vec![int(0), rat(1, 2), rat(1, 2), int(0)];
        validate_system(System::new(
            cyclic_format(),
            alloc::vec![
                binary_bunch("c1", &["q1", "q2"], eq.clone()),
                binary_bunch("c2", &["q2", "q3"], eq.clone()),
                binary_bunch("c3", &["q3", "q4"], eq),
                binary_bunch("c4", &["q1", "q4"], ne),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn correlated_system_is_traditionally_noncontextual() {
        let system = all_correlated();
        let verdict = decide_traditional(&system).unwrap();
        assert_eq!(verdict.status, Status::Noncontextual);
        assert!(verdict.reverify());
        let witness = verdict.witness.as_ref().unwrap();
        assert!(witness.verify_overall(&system));
        assert!(witness.verify_connections(&system, &IdentityRule));
    }

    #[test]
    fn box_system_is_traditionally_contextual() {
        let system = box_system();
        let verdict = decide_traditional(&system).unwrap();
        assert_eq!(verdict.status, Status::Contextual);
        assert!(verdict.certificate().is_some());
        assert!(verdict.reverify());
    }

    #[test]
    fn box_system_under_comonotonic_rule_matches_identity_here() {
        // The box system is consistently connected (all marginals uniform),
        // so the comonotonic rule coincides with identity and must give the
        // same verdict.
        let system = box_system();
        let verdict = decide_contextual(&system, &ComonotonicRule).unwrap();
        assert_eq!(verdict.status, Status::Contextual);
    }

    #[test]
    fn inconsistent_system_decidable_under_comonotonic_only() {
        // One content in two contexts with different marginals: traditional
        // analysis must refuse, identity rule must not apply, comonotonic
        // must decide (trivially noncontextual: the coupling itself works).
        let mut contents = BTreeMap::new();
        contents.insert(ContentId::new("x"), Alphabet::binary());
        let contexts: BTreeSet<ContextId> =
            [ContextId::new("a"), ContextId::new("b")].into_iter().collect();
        let incidence: BTreeSet<(ContentId, ContextId)> = [
            (ContentId::new("x"), ContextId::new("a")),
            (ContentId::new("x"), ContextId::new("b")),
        ]
        .into_iter()
        .collect();
        let format = SystemFormat::new(contents, contexts, incidence).unwrap();
        let system = validate_system(System::new(
            format,
            alloc::vec![
                binary_bunch("a", &["x"], alloc::vec![int(1), int(0)]),
                binary_bunch("b", &["x"], alloc::vec![int(0), int(1)]),
            ],
        ))
        .unwrap();

        assert!(matches!(
            decide_traditional(&system),
            Err(ContextualityError::NotConsistentlyConnected { .. })
        ));
        assert!(matches!(
            decide_contextual(&system, &IdentityRule),
            Err(ContextualityError::RuleNotApplicable { .. })
        ));
        let verdict = decide_contextual(&system, &ComonotonicRule).unwrap();
        assert_eq!(verdict.status, Status::Noncontextual);
        assert!(verdict.reverify());
    }

    #[test]
    fn full_lp_has_product_dimensions() {
        // 8 binary variables: 256 columns; 1 + 16 + 16 rows.
        let system = box_system();
        let lp = build_decision_lp(&system, &IdentityRule).unwrap();
        assert_eq!(lp.num_columns(), 256);
        assert_eq!(lp.num_rows(), 33);
    }

    #[test]
    fn restricted_and_full_formulations_agree() {
        for system in [all_correlated(), box_system()] {
            let restricted = decide_traditional(&system).unwrap();
            let full = build_decision_lp(&system, &IdentityRule).unwrap();
            let full_result = solve_feasibility(&full).unwrap();
            assert!(verify_result(&full, &full_result));
            let full_status = match full_result {
                FeasibilityResult::Feasible(_) => Status::Noncontextual,
                FeasibilityResult::Infeasible(_) => Status::Contextual,
            };
            assert_eq!(restricted.status, full_status);
            // The restriction triples down the column count here: only
            // tuples inside every bunch support survive.
            assert!(restricted.lp_columns() < full.num_columns());
        }
    }

    #[test]
    fn hull_oracle_agrees_on_both_systems() {
        for (system, want) in [
            (all_correlated(), Status::Noncontextual),
            (box_system(), Status::Contextual),
        ] {
            let verdict = hull_oracle(&system, &IdentityRule).unwrap();
            assert_eq!(verdict.status, want);
            assert!(verdict.reverify());
            if let Some(w) = &verdict.witness {
                assert!(w.verify_overall(&system));
            }
        }
    }

    #[test]
    fn constrained_decision_interpolates_between_free_and_pinned() {
        let system = box_system();

        // No constraints at all: some overall coupling always exists.
        let free = decide_contextual_constrained(&system, &[]).unwrap();
        assert_eq!(free.status, Status::Noncontextual);

        // Pin every connection to the identity coupling by linear rows:
        // for each content, P(both contexts equal j) = 1/2 for j = 0, 1.
        let mut sets = Vec::new();
        for q in ["q1", "q2", "q3", "q4"] {
            let mut constraints = Vec::new();
            for j in [0usize, 3usize] {
                let mut coeffs = alloc::vec![int(0); 4];
                coeffs[j] = int(1);
                constraints.push(ConnectionConstraint {
                    coeffs,
                    relation: Relation::Eq,
                    bound: rat(1, 2),
                });
            }
            sets.push(ConnectionConstraintSet {
                content: ContentId::new(q),
                constraints,
            });
        }
        let pinned = decide_contextual_constrained(&system, &sets).unwrap();
        assert_eq!(pinned.status, Status::Contextual);
        assert!(pinned.reverify());
        assert_eq!(pinned.rule_name, "constrained");
    }

    #[test]
    fn guard_rejects_oversized_problems() {
        // The correlated cyclic system has two support columns (all-zero,
        // all-one) and 2^8 deterministic assignments, so a one-column budget
        // trips both paths.
        let system = all_correlated();
        let config = AnalysisConfig {
            max_columns: 1,
            ..AnalysisConfig::default()
        };
        assert!(matches!(
            decide_traditional_with(&system, &config),
            Err(ContextualityError::TooLarge { .. })
        ));
        assert!(matches!(
            hull_oracle_with(&system, &IdentityRule, &config),
            Err(ContextualityError::TooLarge { .. })
        ));
    }

    #[test]
    fn class_restrictions_are_enforced() {
        let system = all_correlated();
        let config = AnalysisConfig {
            dichotomous_only: true,
            ..AnalysisConfig::default()
        };
        // Binary system passes the dichotomous restriction.
        assert!(decide_traditional_with(&system, &config).is_ok());
        let config = AnalysisConfig {
            max_alphabet: Some(1),
            ..AnalysisConfig::default()
        };
        assert!(matches!(
            decide_traditional_with(&system, &config),
            Err(ContextualityError::AlphabetRestriction { .. })
        ));
    }
}
