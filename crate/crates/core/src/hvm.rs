//! Hidden-variable models extracted from noncontextuality witnesses.
//!
//! A hidden-variable model explains a system by a finite hidden state
//! `lambda` with fixed distribution and deterministic response functions: in
//! each context every variable's outcome is a function of `lambda`. The
//! model is *context-free* when the response of a content does not depend on
//! the context it is read in, and *context-dependent* otherwise.
//!
//! Any witness coupling yields such a model directly: the hidden states are
//! the witness's support atoms, with the witness probabilities, and the
//! response of a variable is its coordinate in the atom. Witnesses obtained
//! under the identity rule give equal responses for both readings of a
//! content, so the extracted model is context-free; a context-dependent
//! model with the same per-context behavior always exists for any system
//! that admits any witness at all.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::contextuality::{feasible_with_identity_pins, AnalysisConfig, ContextualityError, Verdict};
use crate::model::{connection_of, ContentId, ContextId, ModelError, System};
use crate::rational::Rational;
use crate::space::ProductSpace;

/// Response functions of a hidden-variable model: one outcome label per
/// hidden state, keyed either by content alone or by (content, context).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseTable {
    /// The outcome of a content is the same in every context.
    ContextFree(BTreeMap<ContentId, Vec<String>>),
    /// Outcomes may differ between readings of the same content.
    ContextDependent(BTreeMap<(ContentId, ContextId), Vec<String>>),
}

/// A finite hidden-variable model: a distribution over hidden states plus
/// deterministic responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenVariableModel {
    /// Hidden states as (label, probability); probabilities are positive and
    /// sum to one.
    pub states: Vec<(String, Rational)>,
    pub responses: ResponseTable,
}

impl HiddenVariableModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn is_context_free(&self) -> bool {
        matches!(self.responses, ResponseTable::ContextFree(_))
    }

    /// Response of `(q, c)` across all states, regardless of table kind.
    fn response_of(&self, q: &ContentId, c: &ContextId) -> Option<&Vec<String>> {
        match &self.responses {
            ResponseTable::ContextFree(map) => map.get(q),
            ResponseTable::ContextDependent(map) => map.get(&(q.clone(), c.clone())),
        }
    }
}

/// Errors of hidden-variable model construction and checking.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HvmError {
    #[error("verdict carries no witness coupling to build a model from")]
    NoWitness,
    #[error("model lacks a response for content `{content}` in context `{context}`")]
    CoverageError { content: String, context: String },
    #[error("response for content `{content}` names outcome `{outcome}` outside its alphabet")]
    BadOutcome { content: String, outcome: String },
    #[error("hidden-state probabilities are not a positive distribution")]
    BadStates,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Builds a hidden-variable model from a verdict's witness coupling.
///
/// Hidden states are the witness atoms (labeled `s0`, `s1`, ... in atom
/// order). If every atom gives each content the same outcome in all of its
/// contexts — always the case for identity-rule witnesses — the model is
/// context-free; otherwise it is context-dependent.
pub fn hvm_from_witness(system: &System, verdict: &Verdict) -> Result<HiddenVariableModel, HvmError> {
    let witness = verdict.witness.as_ref().ok_or(HvmError::NoWitness)?;
    let states: Vec<(String, Rational)> = witness
        .atoms
        .iter()
        .enumerate()
        .map(|(i, (_, p))| (alloc::format!("s{i}"), p.clone()))
        .collect();

    // Position of every variable in the witness tuple.
    let position: BTreeMap<&(ContentId, ContextId), usize> = witness
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    // A content answers context-freely iff its coordinates agree within
    // every atom.
    let mut context_free = true;
    'outer: for q in system.format.content_ids() {
        let positions: Vec<usize> = witness
            .variables
            .iter()
            .enumerate()
            .filter(|(_, (vq, _))| vq == q)
            .map(|(i, _)| i)
            .collect();
        for (tuple, _) in &witness.atoms {
            if positions.windows(2).any(|w| tuple[w[0]] != tuple[w[1]]) {
                context_free = false;
                break 'outer;
            }
        }
    }

    let responses = if context_free {
        let mut map: BTreeMap<ContentId, Vec<String>> = BTreeMap::new();
        for q in system.format.content_ids() {
            let alphabet = system.format.alphabet(q).expect("validated system");
            let c = system.format.contexts_of(q)[0];
            let pos = position[&(q.clone(), c.clone())];
            let outcomes = witness
                .atoms
                .iter()
                .map(|(tuple, _)| alphabet.outcome(tuple[pos]).to_string())
                .collect();
            map.insert(q.clone(), outcomes);
        }
        ResponseTable::ContextFree(map)
    } else {
        let mut map: BTreeMap<(ContentId, ContextId), Vec<String>> = BTreeMap::new();
        for (i, (q, c)) in witness.variables.iter().enumerate() {
            let alphabet = system.format.alphabet(q).expect("validated system");
            let outcomes = witness
                .atoms
                .iter()
                .map(|(tuple, _)| alphabet.outcome(tuple[i]).to_string())
                .collect();
            map.insert((q.clone(), c.clone()), outcomes);
        }
        ResponseTable::ContextDependent(map)
    };

    Ok(HiddenVariableModel { states, responses })
}

/// Checks that the model reproduces every bunch of the system exactly.
///
/// Errors on structural defects (missing responses, alien outcomes, bad
/// state distribution); returns `Ok(false)` when the induced tables merely
/// disagree with the system's.
pub fn hvm_reproduces(hvm: &HiddenVariableModel, system: &System) -> Result<bool, HvmError> {
    // The state distribution must be positive and normalized.
    let mut total = Rational::zero();
    for (_, p) in &hvm.states {
        if !p.is_positive() {
            return Err(HvmError::BadStates);
        }
        total += p;
    }
    if !total.is_one() {
        return Err(HvmError::BadStates);
    }

    for c in system.format.contexts() {
        let bunch = system.bunch(c).expect("validated system");
        let contents = bunch.contents();

        // Resolve responses to outcome indices, state by state.
        let mut index_responses: Vec<Vec<usize>> = Vec::with_capacity(contents.len());
        for q in &contents {
            let alphabet = system.format.alphabet(q).expect("validated system");
            let outcomes = hvm
                .response_of(q, c)
                .ok_or_else(|| HvmError::CoverageError {
                    content: q.to_string(),
                    context: c.to_string(),
                })?;
            if outcomes.len() != hvm.states.len() {
                return Err(HvmError::CoverageError {
                    content: q.to_string(),
                    context: c.to_string(),
                });
            }
            let mut indices = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                let idx = alphabet
                    .index_of(o)
                    .ok_or_else(|| HvmError::BadOutcome {
                        content: q.to_string(),
                        outcome: o.clone(),
                    })?;
                indices.push(idx);
            }
            index_responses.push(indices);
        }

        // Induced bunch table: push each state's probability into the cell
        // its responses select.
        let sizes: Vec<usize> = bunch
            .joint
            .variables()
            .iter()
            .map(|(_, a)| a.len())
            .collect();
        let space = ProductSpace::new(&sizes);
        let mut table = alloc::vec![Rational::zero(); space.len()];
        let mut cell = alloc::vec![0usize; contents.len()];
        for (s, (_, p)) in hvm.states.iter().enumerate() {
            for (k, responses) in index_responses.iter().enumerate() {
                cell[k] = responses[s];
            }
            table[space.index(&cell)] += p;
        }
        if table != bunch.joint.probs() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Diagnoses which contents obstruct a context-free explanation.
///
/// Scans contents in label order, greedily accumulating identity pins: for
/// each content it asks (by exact LP) whether some overall coupling matches
/// every bunch while identity-coupling this content *and* all previously
/// accepted ones. Contents whose pin makes the problem infeasible — or whose
/// connection is inconsistent, so the identity coupling does not even exist
/// — are reported as obstructions; the rest stay pinned.
///
/// For a consistently connected system the list is empty iff the system is
/// traditionally noncontextual. A reported content is not obstructed in
/// isolation but in conflict with identity couplings accepted before it.
pub fn hvm_obstructions(system: &System) -> Result<Vec<ContentId>, ContextualityError> {
    hvm_obstructions_with(system, &AnalysisConfig::default())
}

/// [`hvm_obstructions`] with explicit limits.
pub fn hvm_obstructions_with(
    system: &System,
    config: &AnalysisConfig,
) -> Result<Vec<ContentId>, ContextualityError> {
    let mut pinned: Vec<ContentId> = Vec::new();
    let mut obstructed: Vec<ContentId> = Vec::new();
    for q in system.format.content_ids() {
        let conn = connection_of(system, q)?;
        if !conn.is_consistent() {
            obstructed.push(q.clone());
            continue;
        }
        pinned.push(q.clone());
        if !feasible_with_identity_pins(system, &pinned, config)? {
            pinned.pop();
            obstructed.push(q.clone());
        }
    }
    Ok(obstructed)
}
