//! Rewriting an arbitrary system as a consistently connected one.
//!
//! Given a system and a coupling rule, the *consistified* system has
//!
//! * one content per source variable — content `q` in context `c` becomes
//!   the derived content `q@c`;
//! * one *main* context `bunch:c` per source context, whose bunch is the
//!   source bunch (variables renamed), and one *auxiliary* context `conn:q`
//!   per source content, whose bunch is the coupling the rule prescribes for
//!   the source connection of `q`.
//!
//! Every derived content appears in exactly two contexts (its main and its
//! auxiliary one), and both marginals equal the source variable's law — so
//! the derived system is always consistently connected. Its point: the
//! source system admits an overall coupling with rule-prescribed connection
//! couplings **iff** the derived system is traditionally noncontextual. Both
//! witness directions are constructive here ([`consistify_coupling`] and
//! [`deconsistify_coupling`]), and [`verify_equivalence`] machine-checks the
//! equivalence on any given system by deciding both sides and transporting
//! witnesses.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::contextuality::{
    decide_contextual_with, decide_traditional_with, AnalysisConfig, ContextualityError, Coupling,
    Verdict,
};
use crate::coupling::CouplingRule;
use crate::model::{
    connection_of, is_consistently_connected, validate_system, BunchDistribution, ContentId,
    ContextId, JointDistribution, ModelError, System, SystemFormat,
};
use crate::rational::Rational;

/// Errors of the consistification construction.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsistifyError {
    #[error("constructed label `{label}` is ambiguous; rename the source contents or contexts")]
    LabelCollision { label: String },
    #[error("coupling rule `{rule}` does not apply to the connection of content `{content}`")]
    RuleNotApplicable { rule: String, content: String },
    #[error("rule `{rule}` does not preserve the marginal of content `{content}` in context `{context}`")]
    MarginalNotPreserved {
        rule: String,
        content: String,
        context: String,
    },
    #[error("the coupling is not an overall coupling of the given system")]
    NotACoupling,
    #[error("the coupling does not identity-couple derived content `{content}`")]
    NotIdentityCoupled { content: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Contextuality(#[from] ContextualityError),
}

/// Where each derived label came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// Derived content -> source (content, context).
    pub content_of: BTreeMap<ContentId, (ContentId, ContextId)>,
    /// Derived main context -> source context.
    pub main_context_of: BTreeMap<ContextId, ContextId>,
    /// Derived auxiliary context -> source content.
    pub aux_context_of: BTreeMap<ContextId, ContentId>,
}

/// A consistified system together with its label provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistifiedSystem {
    pub system: System,
    pub provenance: Provenance,
    /// Name of the rule whose couplings fill the auxiliary bunches.
    pub rule_name: String,
}

fn derived_content(q: &ContentId, c: &ContextId) -> ContentId {
    ContentId::new(alloc::format!("{q}@{c}"))
}

fn derived_main_context(c: &ContextId) -> ContextId {
    ContextId::new(alloc::format!("bunch:{c}"))
}

fn derived_aux_context(q: &ContentId) -> ContextId {
    ContextId::new(alloc::format!("conn:{q}"))
}

/// Builds the consistified system for `system` under `rule`.
///
/// Fails if constructed labels collide (pathological source labels), if the
/// rule declines some connection, or if a rule coupling does not reproduce
/// the connection's marginals (a lawless rule).
pub fn consistify(
    system: &System,
    rule: &dyn CouplingRule,
) -> Result<ConsistifiedSystem, ConsistifyError> {
    // Derived contents: one per source variable.
    let mut content_of: BTreeMap<ContentId, (ContentId, ContextId)> = BTreeMap::new();
    let mut contents: BTreeMap<ContentId, crate::model::Alphabet> = BTreeMap::new();
    for (q, c) in system.format.incidence() {
        let derived = derived_content(q, c);
        if content_of
            .insert(derived.clone(), (q.clone(), c.clone()))
            .is_some()
        {
            return Err(ConsistifyError::LabelCollision {
                label: derived.to_string(),
            });
        }
        let alphabet = system.format.alphabet(q).expect("validated system").clone();
        contents.insert(derived, alphabet);
    }

    // Derived contexts: mains and auxiliaries, in one shared namespace.
    let mut main_context_of: BTreeMap<ContextId, ContextId> = BTreeMap::new();
    let mut aux_context_of: BTreeMap<ContextId, ContentId> = BTreeMap::new();
    let mut contexts: BTreeSet<ContextId> = BTreeSet::new();
    let mut incidence: BTreeSet<(ContentId, ContextId)> = BTreeSet::new();
    for c in system.format.contexts() {
        let derived = derived_main_context(c);
        if !contexts.insert(derived.clone()) {
            return Err(ConsistifyError::LabelCollision {
                label: derived.to_string(),
            });
        }
        main_context_of.insert(derived.clone(), c.clone());
        for q in system.format.contents_of(c) {
            incidence.insert((derived_content(q, c), derived.clone()));
        }
    }
    for q in system.format.content_ids() {
        let derived = derived_aux_context(q);
        if !contexts.insert(derived.clone()) {
            return Err(ConsistifyError::LabelCollision {
                label: derived.to_string(),
            });
        }
        aux_context_of.insert(derived.clone(), q.clone());
        for c in system.format.contexts_of(q) {
            incidence.insert((derived_content(q, c), derived.clone()));
        }
    }

    let format = SystemFormat::new(contents, contexts, incidence)?;

    // Main bunches: source tables with variables renamed to q@c.
    let mut bunches: Vec<BunchDistribution> = Vec::new();
    for c in system.format.contexts() {
        let bunch = system.bunch(c).expect("validated system");
        let variables: Vec<(String, crate::model::Alphabet)> = bunch
            .joint
            .variables()
            .iter()
            .map(|(label, alphabet)| {
                let q = ContentId::new(label.clone());
                (derived_content(&q, c).to_string(), alphabet.clone())
            })
            .collect();
        let joint = JointDistribution::new(variables, bunch.joint.probs().to_vec())?;
        bunches.push(BunchDistribution::new(derived_main_context(c), joint));
    }

    // Auxiliary bunches: the rule's coupling for each source connection,
    // with variables renamed from context labels to q@c.
    for q in system.format.content_ids() {
        let conn = connection_of(system, q)?;
        let prescribed =
            rule.apply(&conn)
                .ok_or_else(|| ConsistifyError::RuleNotApplicable {
                    rule: rule.name().to_string(),
                    content: q.to_string(),
                })?;
        for (pos, (c, marginal)) in conn.marginals.iter().enumerate() {
            if prescribed.marginal(pos) != *marginal {
                return Err(ConsistifyError::MarginalNotPreserved {
                    rule: rule.name().to_string(),
                    content: q.to_string(),
                    context: c.to_string(),
                });
            }
        }
        let variables: Vec<(String, crate::model::Alphabet)> = conn
            .marginals
            .iter()
            .map(|(c, _)| (derived_content(q, c).to_string(), conn.alphabet.clone()))
            .collect();
        let joint = JointDistribution::new(variables, prescribed.probs().to_vec())?;
        bunches.push(BunchDistribution::new(derived_aux_context(q), joint));
    }

    let derived = validate_system(System::new(format, bunches))?;
    debug_assert!(is_consistently_connected(&derived).unwrap_or(false));

    Ok(ConsistifiedSystem {
        system: derived,
        provenance: Provenance {
            content_of,
            main_context_of,
            aux_context_of,
        },
        rule_name: rule.name().to_string(),
    })
}

/// Canonical variable list of the consistified system derived from `source`:
/// each source variable (q, c) contributes (q@c, bunch:c) and (q@c, conn:q).
fn derived_variables(source: &System) -> Vec<(ContentId, ContextId)> {
    let mut variables: Vec<(ContentId, ContextId)> = Vec::new();
    for (q, c) in source.format.incidence() {
        let d = derived_content(q, c);
        variables.push((d.clone(), derived_main_context(c)));
        variables.push((d, derived_aux_context(q)));
    }
    variables.sort();
    variables
}

/// Lifts an overall coupling of `source` to one of its consistified system:
/// every source atom duplicates each variable's value into the variable's
/// main and auxiliary slot. The result identity-couples every derived
/// connection; its auxiliary-context marginals are the source coupling's
/// connection marginals.
pub fn consistify_coupling(
    coupling: &Coupling,
    source: &System,
) -> Result<Coupling, ConsistifyError> {
    if !coupling.verify_overall(source) {
        return Err(ConsistifyError::NotACoupling);
    }
    let variables = derived_variables(source);

    // Alphabets and, for every derived slot, the source tuple position.
    let mut alphabets = Vec::with_capacity(variables.len());
    let mut source_pos = Vec::with_capacity(variables.len());
    let source_vars = &coupling.variables;
    let mut provenance: BTreeMap<ContentId, usize> = BTreeMap::new();
    for (i, (q, c)) in source_vars.iter().enumerate() {
        provenance.insert(derived_content(q, c), i);
    }
    for (dq, _) in &variables {
        let pos = *provenance.get(dq).expect("derived content has a source");
        source_pos.push(pos);
        alphabets.push(coupling.alphabets[pos].clone());
    }

    let mut atoms: Vec<(Vec<usize>, Rational)> = coupling
        .atoms
        .iter()
        .map(|(tuple, p)| {
            let derived_tuple: Vec<usize> = source_pos.iter().map(|&i| tuple[i]).collect();
            (derived_tuple, p.clone())
        })
        .collect();
    atoms.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(Coupling {
        variables,
        alphabets,
        atoms,
    })
}

/// Projects an overall coupling of the consistified system back onto the
/// source: every derived atom must give each derived content the same value
/// in its main and auxiliary slot (identity-coupled connections); the source
/// atom reads each variable from its main slot.
pub fn deconsistify_coupling(
    coupling: &Coupling,
    source: &System,
) -> Result<Coupling, ConsistifyError> {
    let variables = derived_variables(source);
    if coupling.variables != variables {
        return Err(ConsistifyError::NotACoupling);
    }

    let source_vars: Vec<(ContentId, ContextId)> = source.format.incidence().cloned().collect();
    let mut alphabets = Vec::with_capacity(source_vars.len());
    for (q, _) in &source_vars {
        alphabets.push(source.format.alphabet(q).expect("validated system").clone());
    }

    // Main and auxiliary slot of each source variable.
    let mut slot_of: BTreeMap<(ContentId, ContextId), usize> = BTreeMap::new();
    for (i, v) in coupling.variables.iter().enumerate() {
        slot_of.insert(v.clone(), i);
    }
    let mut main_slot = Vec::with_capacity(source_vars.len());
    let mut aux_slot = Vec::with_capacity(source_vars.len());
    for (q, c) in &source_vars {
        let d = derived_content(q, c);
        main_slot.push(slot_of[&(d.clone(), derived_main_context(c))]);
        aux_slot.push(slot_of[&(d, derived_aux_context(q))]);
    }

    let mut atoms: Vec<(Vec<usize>, Rational)> = Vec::with_capacity(coupling.atoms.len());
    for (tuple, p) in &coupling.atoms {
        let mut source_tuple = Vec::with_capacity(source_vars.len());
        for (k, (q, c)) in source_vars.iter().enumerate() {
            if tuple[main_slot[k]] != tuple[aux_slot[k]] {
                return Err(ConsistifyError::NotIdentityCoupled {
                    content: derived_content(q, c).to_string(),
                });
            }
            source_tuple.push(tuple[main_slot[k]]);
        }
        atoms.push((source_tuple, p.clone()));
    }
    atoms.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(Coupling {
        variables: source_vars,
        alphabets,
        atoms,
    })
}

/// Detailed checks of one equivalence run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceChecks {
    /// The derived system passed the consistency check.
    pub consistified_is_consistent: bool,
    /// Both solver outcomes re-verified against their LPs.
    pub source_reverified: bool,
    pub consistified_reverified: bool,
    /// When noncontextual: the source witness, lifted, is a lawful overall
    /// coupling of the derived system, and the derived witness, projected,
    /// is a lawful rule-coupled witness of the source.
    pub witness_transport_ok: Option<bool>,
}

/// Outcome of machine-checking the equivalence on one system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub source: Verdict,
    pub consistified: Verdict,
    /// Statuses of the two decisions coincide.
    pub agree: bool,
    pub checks: EquivalenceChecks,
}

impl EquivalenceReport {
    /// True iff the equivalence held with every check passing.
    pub fn holds(&self) -> bool {
        self.agree
            && self.checks.consistified_is_consistent
            && self.checks.source_reverified
            && self.checks.consistified_reverified
            && self.checks.witness_transport_ok.unwrap_or(true)
    }
}

/// Decides the extended question on `system` and the traditional question on
/// its consistification, and checks that the verdicts agree — with witness
/// transport in both directions when noncontextual, certificate
/// re-verification always.
pub fn verify_equivalence(
    system: &System,
    rule: &dyn CouplingRule,
) -> Result<EquivalenceReport, ConsistifyError> {
    verify_equivalence_with(system, rule, &AnalysisConfig::default())
}

/// [`verify_equivalence`] with explicit limits.
pub fn verify_equivalence_with(
    system: &System,
    rule: &dyn CouplingRule,
    config: &AnalysisConfig,
) -> Result<EquivalenceReport, ConsistifyError> {
    let source = decide_contextual_with(system, rule, config)?;
    let derived = consistify(system, rule)?;
    let consistified = decide_traditional_with(&derived.system, config)?;

    let consistified_is_consistent = is_consistently_connected(&derived.system)?;
    let source_reverified = source.reverify();
    let consistified_reverified = consistified.reverify();
    let agree = source.status == consistified.status;

    let witness_transport_ok = match (&source.witness, &consistified.witness) {
        (Some(source_witness), Some(derived_witness)) => {
            let lifted_ok = consistify_coupling(source_witness, system)
                .map(|lifted| {
                    lifted.verify_overall(&derived.system)
                        && lifted.verify_connections(&derived.system, &crate::coupling::IdentityRule)
                })
                .unwrap_or(false);
            let projected_ok = deconsistify_coupling(derived_witness, system)
                .map(|projected| {
                    projected.verify_overall(system) && projected.verify_connections(system, rule)
                })
                .unwrap_or(false);
            Some(lifted_ok && projected_ok)
        }
        (None, None) => None,
        // One side found a witness, the other a refutation: the verdicts
        // disagree, so there is nothing valid to transport.
        _ => Some(false),
    };

    Ok(EquivalenceReport {
        source,
        consistified,
        agree,
        checks: EquivalenceChecks {
            consistified_is_consistent,
            source_reverified,
            consistified_reverified,
            witness_transport_ok,
        },
    })
}
