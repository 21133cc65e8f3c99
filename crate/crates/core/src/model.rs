//! Systems of content/context-indexed random variables.
//!
//! The data model: a [`SystemFormat`] declares contents (with outcome
//! alphabets), contexts, and which contents are recorded in which contexts;
//! a [`System`] pairs a format with one joint distribution per context (its
//! *bunch*). The variables of one content across the contexts containing it
//! form its *connection*; connections carry no joint distribution, only the
//! family of per-context marginals.
//!
//! [`validate_system`] checks every structural invariant and returns a
//! canonicalized system (bunch variables sorted by content label); all other
//! functions in this crate expect validated systems.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::rational::{format_rational, is_probability, Rational};
use crate::space::ProductSpace;

/// Label of a content (the property a variable measures).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(String);

/// Label of a context (the conditions a variable is recorded under).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextId(String);

impl ContentId {
    pub fn new(label: impl Into<String>) -> Self {
        ContentId(label.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl ContextId {
    pub fn new(label: impl Into<String>) -> Self {
        ContextId(label.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered list of distinct outcome labels. The order is positional and
/// meaningful (it fixes table layout and the quantile-coupling order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Alphabet {
    outcomes: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(outcomes: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let outcomes: Vec<String> = outcomes.into_iter().map(Into::into).collect();
        if outcomes.is_empty() {
            return Err(ModelError::EmptyAlphabet);
        }
        let mut seen = BTreeSet::new();
        for o in &outcomes {
            if o.is_empty() {
                return Err(ModelError::EmptyLabel);
            }
            if !seen.insert(o.clone()) {
                return Err(ModelError::DuplicateOutcome { outcome: o.clone() });
            }
        }
        Ok(Alphabet { outcomes })
    }

    /// The two-outcome alphabet `0, 1`.
    pub fn binary() -> Self {
        Alphabet::new(["0", "1"]).expect("binary alphabet is valid")
    }

    /// The `k`-outcome alphabet `0, 1, …, k-1` (k >= 1).
    pub fn decimal(k: usize) -> Result<Self, ModelError> {
        Alphabet::new((0..k).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn outcome(&self, i: usize) -> &str {
        &self.outcomes[i]
    }

    pub fn index_of(&self, outcome: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == outcome)
    }
}

/// A probability distribution on one alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginal {
    alphabet: Alphabet,
    probs: Vec<Rational>,
}

impl Marginal {
    pub fn new(alphabet: Alphabet, probs: Vec<Rational>) -> Result<Self, ModelError> {
        if probs.len() != alphabet.len() {
            return Err(ModelError::TableShape {
                owner: "marginal".to_string(),
                expected: alphabet.len(),
                got: probs.len(),
            });
        }
        check_distribution("marginal", &probs)?;
        Ok(Marginal { alphabet, probs })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> &Rational {
        &self.probs[i]
    }

    /// Point mass on outcome `i`.
    pub fn point(alphabet: Alphabet, i: usize) -> Self {
        let mut probs = alloc::vec![Rational::zero(); alphabet.len()];
        probs[i] = Rational::one();
        Marginal { alphabet, probs }
    }
}

fn check_distribution(owner: &str, probs: &[Rational]) -> Result<(), ModelError> {
    let mut sum = Rational::zero();
    for p in probs {
        if !is_probability(p) {
            return Err(ModelError::ProbabilityRange {
                owner: owner.to_string(),
                value: format_rational(p),
            });
        }
        sum += p;
    }
    if !sum.is_one() {
        return Err(ModelError::ProbabilitySumError {
            owner: owner.to_string(),
            sum: format_rational(&sum),
        });
    }
    Ok(())
}

/// Joint distribution of an ordered list of labeled variables.
///
/// The probability table is flat over the product of the variables'
/// alphabets, last variable fastest (see [`crate::space`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    variables: Vec<(String, Alphabet)>,
    probs: Vec<Rational>,
}

impl JointDistribution {
    pub fn new(
        variables: Vec<(String, Alphabet)>,
        probs: Vec<Rational>,
    ) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for (label, _) in &variables {
            if label.is_empty() {
                return Err(ModelError::EmptyLabel);
            }
            if !seen.insert(label.clone()) {
                return Err(ModelError::DuplicateVariable {
                    label: label.clone(),
                });
            }
        }
        let sizes: Vec<usize> = variables.iter().map(|(_, a)| a.len()).collect();
        let expected = crate::space::checked_product(&sizes).ok_or(ModelError::TableShape {
            owner: "joint".to_string(),
            expected: 0,
            got: probs.len(),
        })?;
        if probs.len() != expected {
            return Err(ModelError::TableShape {
                owner: "joint".to_string(),
                expected,
                got: probs.len(),
            });
        }
        check_distribution("joint", &probs)?;
        Ok(JointDistribution { variables, probs })
    }

    /// Independent product of marginals, in the given order.
    pub fn product(factors: Vec<(String, Marginal)>) -> Result<Self, ModelError> {
        let variables: Vec<(String, Alphabet)> = factors
            .iter()
            .map(|(l, m)| (l.clone(), m.alphabet().clone()))
            .collect();
        let space = ProductSpace::new(
            &variables
                .iter()
                .map(|(_, a)| a.len())
                .collect::<Vec<usize>>(),
        );
        let mut probs = Vec::with_capacity(space.len());
        for coords in space.iter() {
            let mut p = Rational::one();
            for (i, &c) in coords.iter().enumerate() {
                p *= factors[i].1.prob(c);
            }
            probs.push(p);
        }
        JointDistribution::new(variables, probs)
    }

    pub fn variables(&self) -> &[(String, Alphabet)] {
        &self.variables
    }

    pub fn label(&self, i: usize) -> &str {
        &self.variables[i].0
    }

    pub fn alphabet(&self, i: usize) -> &Alphabet {
        &self.variables[i].1
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn space(&self) -> ProductSpace {
        ProductSpace::new(
            &self
                .variables
                .iter()
                .map(|(_, a)| a.len())
                .collect::<Vec<usize>>(),
        )
    }

    pub fn prob(&self, coords: &[usize]) -> &Rational {
        &self.probs[self.space().index(coords)]
    }

    /// Coordinate tuples with nonzero probability, in canonical order.
    pub fn support(&self) -> Vec<Vec<usize>> {
        let space = self.space();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(i, _)| space.coords(i))
            .collect()
    }

    /// Marginal law of the variable at `position`.
    pub fn marginal(&self, position: usize) -> Marginal {
        let space = self.space();
        let alphabet = self.variables[position].1.clone();
        let mut probs = alloc::vec![Rational::zero(); alphabet.len()];
        for (i, p) in self.probs.iter().enumerate() {
            if !p.is_zero() {
                probs[space.coords(i)[position]] += p;
            }
        }
        Marginal { alphabet, probs }
    }

    /// Joint law of the sub-list of variables at `positions` (distinct, in
    /// the order given).
    pub fn marginal_onto(&self, positions: &[usize]) -> Result<JointDistribution, ModelError> {
        let mut seen = BTreeSet::new();
        for &p in positions {
            if p >= self.variables.len() || !seen.insert(p) {
                return Err(ModelError::BadVariableIndex { index: p });
            }
        }
        let variables: Vec<(String, Alphabet)> = positions
            .iter()
            .map(|&p| self.variables[p].clone())
            .collect();
        let sub_space = ProductSpace::new(
            &variables
                .iter()
                .map(|(_, a)| a.len())
                .collect::<Vec<usize>>(),
        );
        let space = self.space();
        let mut probs = alloc::vec![Rational::zero(); sub_space.len()];
        let mut sub_coords = alloc::vec![0usize; positions.len()];
        for (i, p) in self.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let coords = space.coords(i);
            for (k, &pos) in positions.iter().enumerate() {
                sub_coords[k] = coords[pos];
            }
            probs[sub_space.index(&sub_coords)] += p;
        }
        Ok(JointDistribution { variables, probs })
    }

    /// Same law with variables reordered by `perm` (new position `i` holds
    /// old variable `perm[i]`).
    pub fn permute(&self, perm: &[usize]) -> Result<JointDistribution, ModelError> {
        if perm.len() != self.variables.len() {
            return Err(ModelError::BadVariableIndex { index: perm.len() });
        }
        self.marginal_onto(perm)
    }
}

/// Everything in this crate reports failures against this error type when
/// system structure or probability data is malformed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("empty label")]
    EmptyLabel,
    #[error("alphabet has no outcomes")]
    EmptyAlphabet,
    #[error("duplicate outcome `{outcome}` in alphabet")]
    DuplicateOutcome { outcome: String },
    #[error("duplicate variable `{label}` in joint distribution")]
    DuplicateVariable { label: String },
    #[error("duplicate content `{content}` in context `{context}`")]
    DuplicateContentInContext { content: String, context: String },
    #[error("incidence pair ({content}, {context}) references an undeclared content or context")]
    DanglingIncidence { content: String, context: String },
    #[error("content `{content}` appears in no context")]
    OrphanContent { content: String },
    #[error("context `{context}` contains no content")]
    OrphanContext { context: String },
    #[error("no bunch distribution for context `{context}`")]
    MissingBunch { context: String },
    #[error("bunch provided for undeclared context `{context}`")]
    UnknownContext { context: String },
    #[error("unknown content `{content}`")]
    UnknownContent { content: String },
    #[error("bunch for context `{context}` has variables other than the contents recorded there")]
    BunchVariablesMismatch { context: String },
    #[error("content `{content}` carries a different alphabet in context `{context}` than declared")]
    AlphabetMismatch { content: String, context: String },
    #[error("{owner}: probability table has {got} entries, expected {expected}")]
    TableShape {
        owner: String,
        expected: usize,
        got: usize,
    },
    #[error("{owner}: entry {value} is not a probability in [0, 1]")]
    ProbabilityRange { owner: String, value: String },
    #[error("{owner}: probabilities sum to {sum}, expected 1")]
    ProbabilitySumError { owner: String, sum: String },
    #[error("variable index {index} out of range or repeated")]
    BadVariableIndex { index: usize },
}

/// Declares contents (with alphabets), contexts, and incidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemFormat {
    contents: BTreeMap<ContentId, Alphabet>,
    contexts: BTreeSet<ContextId>,
    incidence: BTreeSet<(ContentId, ContextId)>,
}

impl SystemFormat {
    pub fn new(
        contents: BTreeMap<ContentId, Alphabet>,
        contexts: BTreeSet<ContextId>,
        incidence: BTreeSet<(ContentId, ContextId)>,
    ) -> Result<Self, ModelError> {
        for q in contents.keys() {
            if q.as_str().is_empty() {
                return Err(ModelError::EmptyLabel);
            }
        }
        for c in &contexts {
            if c.as_str().is_empty() {
                return Err(ModelError::EmptyLabel);
            }
        }
        for (q, c) in &incidence {
            if !contents.contains_key(q) || !contexts.contains(c) {
                return Err(ModelError::DanglingIncidence {
                    content: q.to_string(),
                    context: c.to_string(),
                });
            }
        }
        for q in contents.keys() {
            if !incidence.iter().any(|(iq, _)| iq == q) {
                return Err(ModelError::OrphanContent {
                    content: q.to_string(),
                });
            }
        }
        for c in &contexts {
            if !incidence.iter().any(|(_, ic)| ic == c) {
                return Err(ModelError::OrphanContext {
                    context: c.to_string(),
                });
            }
        }
        Ok(SystemFormat {
            contents,
            contexts,
            incidence,
        })
    }

    pub fn contents(&self) -> impl Iterator<Item = (&ContentId, &Alphabet)> {
        self.contents.iter()
    }

    pub fn content_ids(&self) -> impl Iterator<Item = &ContentId> {
        self.contents.keys()
    }

    pub fn alphabet(&self, q: &ContentId) -> Option<&Alphabet> {
        self.contents.get(q)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextId> {
        self.contexts.iter()
    }

    pub fn has_content(&self, q: &ContentId) -> bool {
        self.contents.contains_key(q)
    }

    pub fn has_context(&self, c: &ContextId) -> bool {
        self.contexts.contains(c)
    }

    pub fn incident(&self, q: &ContentId, c: &ContextId) -> bool {
        self.incidence.contains(&(q.clone(), c.clone()))
    }

    /// All (content, context) pairs, sorted content-major.
    pub fn incidence(&self) -> impl Iterator<Item = &(ContentId, ContextId)> {
        self.incidence.iter()
    }

    /// Number of (content, context) pairs — the number of variables.
    pub fn incidence_len(&self) -> usize {
        self.incidence.len()
    }

    pub fn num_contents(&self) -> usize {
        self.contents.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// Contexts containing content `q`, in label order.
    pub fn contexts_of(&self, q: &ContentId) -> Vec<&ContextId> {
        self.incidence
            .iter()
            .filter(|(iq, _)| iq == q)
            .map(|(_, c)| c)
            .collect()
    }

    /// Contents recorded in context `c`, in label order.
    pub fn contents_of(&self, c: &ContextId) -> Vec<&ContentId> {
        let mut out: Vec<&ContentId> = self
            .incidence
            .iter()
            .filter(|(_, ic)| ic == c)
            .map(|(q, _)| q)
            .collect();
        out.sort();
        out
    }
}

/// The joint distribution of the variables recorded in one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BunchDistribution {
    pub context: ContextId,
    pub joint: JointDistribution,
}

impl BunchDistribution {
    pub fn new(context: ContextId, joint: JointDistribution) -> Self {
        BunchDistribution { context, joint }
    }

    /// Content labels of the bunch variables, in table order.
    pub fn contents(&self) -> Vec<ContentId> {
        self.joint
            .variables()
            .iter()
            .map(|(l, _)| ContentId::new(l.clone()))
            .collect()
    }

    /// Position of content `q` among the bunch variables.
    pub fn position_of(&self, q: &ContentId) -> Option<usize> {
        self.joint.variables().iter().position(|(l, _)| l == q.as_str())
    }
}

/// A format plus one bunch distribution per context.
///
/// Fields are public so systems can be assembled freely; run
/// [`validate_system`] before handing a system to any analysis function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct System {
    pub format: SystemFormat,
    pub bunches: BTreeMap<ContextId, BunchDistribution>,
}

impl System {
    pub fn new(format: SystemFormat, bunches: Vec<BunchDistribution>) -> Self {
        let bunches = bunches
            .into_iter()
            .map(|b| (b.context.clone(), b))
            .collect();
        System { format, bunches }
    }

    pub fn bunch(&self, c: &ContextId) -> Option<&BunchDistribution> {
        self.bunches.get(c)
    }

    /// All variables of the system as (content, context) pairs, sorted
    /// content-major. This is the canonical variable order for overall
    /// couplings and decision LPs.
    pub fn overall_variables(&self) -> Vec<(ContentId, ContextId)> {
        self.format.incidence().cloned().collect()
    }
}

/// Checks every structural invariant of a system and canonicalizes it.
///
/// On success the returned system satisfies:
/// * every incidence pair references a declared content and context, every
///   content appears somewhere, every context is nonempty;
/// * exactly one bunch per declared context, none for undeclared contexts;
/// * each bunch's variables are exactly the contents incident to its context,
///   reordered here to label order (the probability table is permuted
///   accordingly);
/// * each bunch variable carries the content's declared alphabet;
/// * every probability table has entries in `[0, 1]` summing to exactly 1
///   (already enforced by [`JointDistribution::new`], re-checked here).
pub fn validate_system(raw: System) -> Result<System, ModelError> {
    let format = SystemFormat::new(
        raw.format.contents.clone(),
        raw.format.contexts.clone(),
        raw.format.incidence.clone(),
    )?;

    for c in raw.bunches.keys() {
        if !format.has_context(c) {
            return Err(ModelError::UnknownContext {
                context: c.to_string(),
            });
        }
    }

    let mut bunches = BTreeMap::new();
    for c in format.contexts() {
        let bunch = raw.bunches.get(c).ok_or_else(|| ModelError::MissingBunch {
            context: c.to_string(),
        })?;
        if &bunch.context != c {
            return Err(ModelError::UnknownContext {
                context: bunch.context.to_string(),
            });
        }

        // The bunch must carry exactly the incident contents, each at most once.
        let declared = format.contents_of(c);
        let bunch_contents = bunch.contents();
        {
            let mut seen = BTreeSet::new();
            for q in &bunch_contents {
                if !seen.insert(q.clone()) {
                    return Err(ModelError::DuplicateContentInContext {
                        content: q.to_string(),
                        context: c.to_string(),
                    });
                }
            }
            let declared_set: BTreeSet<&ContentId> = declared.iter().copied().collect();
            let got_set: BTreeSet<&ContentId> = bunch_contents.iter().collect();
            if declared_set != got_set {
                return Err(ModelError::BunchVariablesMismatch {
                    context: c.to_string(),
                });
            }
        }

        // Alphabets must match the declaration content-by-content.
        for (label, alphabet) in bunch.joint.variables() {
            let q = ContentId::new(label.clone());
            let declared_alphabet = format.alphabet(&q).expect("content checked above");
            if alphabet != declared_alphabet {
                return Err(ModelError::AlphabetMismatch {
                    content: q.to_string(),
                    context: c.to_string(),
                });
            }
        }

        check_distribution(&alloc::format!("bunch `{c}`"), bunch.joint.probs())?;

        // Canonicalize: permute variables into label order.
        let perm: Vec<usize> = declared
            .iter()
            .map(|q| bunch.position_of(q).expect("content checked above"))
            .collect();
        let joint = bunch.joint.permute(&perm)?;
        bunches.insert(c.clone(), BunchDistribution::new(c.clone(), joint));
    }

    Ok(System { format, bunches })
}

/// The family of per-context marginal laws of one content's variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub content: ContentId,
    pub alphabet: Alphabet,
    /// One entry per context containing the content, in context label order.
    pub marginals: Vec<(ContextId, Marginal)>,
}

impl Connection {
    /// Number of contexts the content appears in.
    pub fn arity(&self) -> usize {
        self.marginals.len()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextId> {
        self.marginals.iter().map(|(c, _)| c)
    }

    pub fn marginal_in(&self, c: &ContextId) -> Option<&Marginal> {
        self.marginals
            .iter()
            .find(|(mc, _)| mc == c)
            .map(|(_, m)| m)
    }

    /// True iff all per-context marginals coincide.
    pub fn is_consistent(&self) -> bool {
        self.marginals
            .windows(2)
            .all(|w| w[0].1.probs() == w[1].1.probs())
    }
}

/// Extracts the connection of content `q` from a validated system.
pub fn connection_of(system: &System, q: &ContentId) -> Result<Connection, ModelError> {
    let alphabet = system
        .format
        .alphabet(q)
        .ok_or_else(|| ModelError::UnknownContent {
            content: q.to_string(),
        })?
        .clone();
    let mut marginals = Vec::new();
    for c in system.format.contexts_of(q) {
        let bunch = system.bunch(c).ok_or_else(|| ModelError::MissingBunch {
            context: c.to_string(),
        })?;
        let pos = bunch
            .position_of(q)
            .ok_or_else(|| ModelError::BunchVariablesMismatch {
                context: c.to_string(),
            })?;
        marginals.push((c.clone(), bunch.joint.marginal(pos)));
    }
    Ok(Connection {
        content: q.clone(),
        alphabet,
        marginals,
    })
}

/// One witnessed failure of marginal equality inside a connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyViolation {
    pub content: ContentId,
    pub context_a: ContextId,
    pub context_b: ContextId,
}

/// Which connections violate marginal equality, and where.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsistencyReport {
    pub violations: Vec<ConsistencyViolation>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares every connection's marginals pairwise against its first context.
pub fn consistency_report(system: &System) -> Result<ConsistencyReport, ModelError> {
    let mut violations = Vec::new();
    for q in system.format.content_ids() {
        let conn = connection_of(system, q)?;
        if let Some((first_ctx, first)) = conn.marginals.first() {
            for (c, m) in conn.marginals.iter().skip(1) {
                if m.probs() != first.probs() {
                    violations.push(ConsistencyViolation {
                        content: q.clone(),
                        context_a: first_ctx.clone(),
                        context_b: c.clone(),
                    });
                }
            }
        }
    }
    Ok(ConsistencyReport { violations })
}

/// True iff every connection's marginals all coincide.
pub fn is_consistently_connected(system: &System) -> Result<bool, ModelError> {
    Ok(consistency_report(system)?.is_consistent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    /// Two binary contents in two contexts:
    ///   context a records {x, y}, context b records {y}.
    fn small_system() -> System {
        let x = ContentId::new("x");
        let y = ContentId::new("y");
        let ca = ContextId::new("a");
        let cb = ContextId::new("b");
        let mut contents = BTreeMap::new();
        contents.insert(x.clone(), Alphabet::binary());
        contents.insert(y.clone(), Alphabet::binary());
        let contexts: BTreeSet<ContextId> = [ca.clone(), cb.clone()].into_iter().collect();
        let incidence: BTreeSet<(ContentId, ContextId)> = [
            (x.clone(), ca.clone()),
            (y.clone(), ca.clone()),
            (y.clone(), cb.clone()),
        ]
        .into_iter()
        .collect();
        let format = SystemFormat::new(contents, contexts, incidence).unwrap();

        // Bunch a: perfectly correlated fair coins. Bunch b: fair coin.
        let joint_a = JointDistribution::new(
            alloc::vec![
                ("x".to_string(), Alphabet::binary()),
                ("y".to_string(), Alphabet::binary()),
            ],
            alloc::vec![rat(1, 2), int(0), int(0), rat(1, 2)],
        )
        .unwrap();
        let joint_b = JointDistribution::new(
            alloc::vec![("y".to_string(), Alphabet::binary())],
            alloc::vec![rat(1, 2), rat(1, 2)],
        )
        .unwrap();
        System::new(
            format,
            alloc::vec![
                BunchDistribution::new(ca, joint_a),
                BunchDistribution::new(cb, joint_b),
            ],
        )
    }

    #[test]
    fn validate_accepts_and_canonicalizes() {
        let system = validate_system(small_system()).unwrap();
        let a = system.bunch(&ContextId::new("a")).unwrap();
        assert_eq!(a.joint.label(0), "x");
        assert_eq!(a.joint.label(1), "y");
        assert!(is_consistently_connected(&system).unwrap());
    }

    #[test]
    fn validate_canonicalizes_swapped_variable_order() {
        // Same system with bunch a given in (y, x) order and an asymmetric
        // table P(y=0,x=1) = 1: canonicalization must permute to (x, y).
        let mut system = small_system();
        let ca = ContextId::new("a");
        let joint_swapped = JointDistribution::new(
            alloc::vec![
                ("y".to_string(), Alphabet::binary()),
                ("x".to_string(), Alphabet::binary()),
            ],
            alloc::vec![int(0), int(1), int(0), int(0)],
        )
        .unwrap();
        system
            .bunches
            .insert(ca.clone(), BunchDistribution::new(ca.clone(), joint_swapped));
        let system = validate_system(system).unwrap();
        let a = system.bunch(&ca).unwrap();
        assert_eq!(a.joint.label(0), "x");
        // P(x=1, y=0) = 1 in canonical order.
        assert_eq!(*a.joint.prob(&[1, 0]), int(1));
    }

    #[test]
    fn validate_rejects_missing_bunch() {
        let mut system = small_system();
        system.bunches.remove(&ContextId::new("b"));
        assert_eq!(
            validate_system(system),
            Err(ModelError::MissingBunch {
                context: "b".to_string()
            })
        );
    }

    #[test]
    fn validate_rejects_alphabet_mismatch() {
        let mut system = small_system();
        let cb = ContextId::new("b");
        let ternary = Alphabet::decimal(3).unwrap();
        let joint_b = JointDistribution::new(
            alloc::vec![("y".to_string(), ternary)],
            alloc::vec![rat(1, 3), rat(1, 3), rat(1, 3)],
        )
        .unwrap();
        system
            .bunches
            .insert(cb.clone(), BunchDistribution::new(cb, joint_b));
        assert_eq!(
            validate_system(system),
            Err(ModelError::AlphabetMismatch {
                content: "y".to_string(),
                context: "b".to_string()
            })
        );
    }

    #[test]
    fn validate_rejects_unnormalized_table() {
        let mut system = small_system();
        let cb = ContextId::new("b");
        // Build an unnormalized table by mutating a valid joint's probs via
        // struct update (fields are crate-visible here).
        let mut joint_b = system.bunches.get(&cb).unwrap().joint.clone();
        joint_b.probs[0] = rat(1, 4);
        system
            .bunches
            .insert(cb.clone(), BunchDistribution::new(cb, joint_b));
        assert!(matches!(
            validate_system(system),
            Err(ModelError::ProbabilitySumError { .. })
        ));
    }

    #[test]
    fn validate_rejects_dangling_incidence() {
        let system = small_system();
        let mut contents = BTreeMap::new();
        for (q, a) in system.format.contents() {
            contents.insert(q.clone(), a.clone());
        }
        let contexts: BTreeSet<ContextId> = system.format.contexts().cloned().collect();
        let mut incidence: BTreeSet<(ContentId, ContextId)> =
            system.format.incidence().cloned().collect();
        incidence.insert((ContentId::new("ghost"), ContextId::new("a")));
        assert_eq!(
            SystemFormat::new(contents, contexts, incidence),
            Err(ModelError::DanglingIncidence {
                content: "ghost".to_string(),
                context: "a".to_string()
            })
        );
    }

    #[test]
    fn connection_reports_marginals_in_context_order() {
        let system = validate_system(small_system()).unwrap();
        let conn = connection_of(&system, &ContentId::new("y")).unwrap();
        assert_eq!(conn.arity(), 2);
        assert_eq!(conn.marginals[0].0.as_str(), "a");
        assert_eq!(conn.marginals[1].0.as_str(), "b");
        assert!(conn.is_consistent());
        assert_eq!(conn.marginals[0].1.probs(), &[rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn inconsistent_marginals_are_reported() {
        let mut system = small_system();
        let cb = ContextId::new("b");
        let joint_b = JointDistribution::new(
            alloc::vec![("y".to_string(), Alphabet::binary())],
            alloc::vec![rat(1, 3), rat(2, 3)],
        )
        .unwrap();
        system
            .bunches
            .insert(cb.clone(), BunchDistribution::new(cb, joint_b));
        let system = validate_system(system).unwrap();
        let report = consistency_report(&system).unwrap();
        assert!(!report.is_consistent());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].content.as_str(), "y");
        assert_eq!(report.violations[0].context_a.as_str(), "a");
        assert_eq!(report.violations[0].context_b.as_str(), "b");
    }

    #[test]
    fn marginal_onto_and_permute_agree() {
        let joint = JointDistribution::new(
            alloc::vec![
                ("u".to_string(), Alphabet::binary()),
                ("v".to_string(), Alphabet::decimal(3).unwrap()),
            ],
            alloc::vec![rat(1, 6); 6],
        )
        .unwrap();
        let swapped = joint.permute(&[1, 0]).unwrap();
        assert_eq!(swapped.label(0), "v");
        assert_eq!(*swapped.prob(&[2, 1]), *joint.prob(&[1, 2]));
        let back = swapped.permute(&[1, 0]).unwrap();
        assert_eq!(back, joint);
    }
}
