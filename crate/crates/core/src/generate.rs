//! Seeded system generators: random corpora and named reference systems.
//!
//! Everything here is deterministic given the inputs. Random generation uses
//! ChaCha12 seeded from a caller-supplied `u64` and draws via rejection
//! sampling, so the same spec yields the same system on every platform.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::model::{
    is_consistently_connected, validate_system, Alphabet, BunchDistribution, ContentId, ContextId,
    JointDistribution, ModelError, System, SystemFormat,
};
use crate::rational::{int, rat, Rational};

/// Errors of the generators.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("bad generator spec: {reason}")]
    BadSpec { reason: String },
    #[error("unknown named system `{name}`")]
    UnknownName { name: String },
    #[error("requested system is too large to tabulate")]
    TooLarge,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Whether generated systems should have equal connection marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyMode {
    /// Bunches are marginals of one global joint, so all connection
    /// marginals agree (and the system is traditionally noncontextual by
    /// construction).
    Consistent,
    /// Bunches are drawn independently per context and redrawn (up to a
    /// retry bound) until some connection marginal differs. Best effort:
    /// when the incidence admits no shared content the result is trivially
    /// consistent.
    Inconsistent,
    /// A seeded coin picks one of the two modes per system.
    Either,
}

/// Parameters of [`gen_system`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Number of contents is drawn uniformly from `2..=max_contents`.
    pub max_contents: usize,
    /// Number of contexts is drawn uniformly from `2..=max_contexts`.
    pub max_contexts: usize,
    /// Alphabet sizes are drawn uniformly from `min_alphabet..=max_alphabet`.
    pub min_alphabet: usize,
    pub max_alphabet: usize,
    /// Probability that a given (content, context) pair is measured
    /// together; orphans are repaired afterwards.
    pub incidence_density: Rational,
    pub mode: ConsistencyMode,
    /// All generated probabilities are integer multiples of
    /// `1/denominator_bound`.
    pub denominator_bound: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 0,
            max_contents: 4,
            max_contexts: 4,
            min_alphabet: 2,
            max_alphabet: 3,
            incidence_density: rat(1, 2),
            mode: ConsistencyMode::Either,
            denominator_bound: 64,
        }
    }
}

/// Largest probability table the generators will build.
const MAX_TABLE_CELLS: usize = 1 << 16;
/// Redraw attempts in `Inconsistent` mode before giving up.
const INCONSISTENT_RETRIES: usize = 64;

/// Unbiased uniform draw from `0..n`.
fn uniform_below(rng: &mut ChaCha12Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

/// Uniform draw from `lo..=hi`.
fn uniform_range(rng: &mut ChaCha12Rng, lo: usize, hi: usize) -> usize {
    lo + uniform_below(rng, (hi - lo + 1) as u64) as usize
}

/// Exact Bernoulli(num/den) draw.
fn bernoulli(rng: &mut ChaCha12Rng, num: u64, den: u64) -> bool {
    uniform_below(rng, den) < num
}

/// A random composition of `total` into `cells` nonnegative parts, via
/// sorted cut points.
fn composition(rng: &mut ChaCha12Rng, cells: usize, total: u64) -> Vec<u64> {
    if cells == 1 {
        return alloc::vec![total];
    }
    let mut cuts: Vec<u64> = (0..cells - 1).map(|_| uniform_below(rng, total + 1)).collect();
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(cells);
    let mut prev = 0;
    for cut in cuts {
        parts.push(cut - prev);
        prev = cut;
    }
    parts.push(total - prev);
    parts
}

/// A random probability table with `cells` entries, all multiples of
/// `1/total`.
fn random_table(rng: &mut ChaCha12Rng, cells: usize, total: u64) -> Vec<Rational> {
    composition(rng, cells, total)
        .into_iter()
        .map(|units| Rational::new(units.into(), total.into()))
        .collect()
}

fn rational_as_u64_pair(value: &Rational) -> Option<(u64, u64)> {
    let num = u64::try_from(value.numer()).ok()?;
    let den = u64::try_from(value.denom()).ok()?;
    Some((num, den))
}

/// Generates a random system from the spec. Deterministic in the spec.
pub fn gen_system(spec: &GeneratorSpec) -> Result<System, GenerateError> {
    if spec.max_contents < 2 || spec.max_contexts < 2 {
        return Err(GenerateError::BadSpec {
            reason: "need at least two contents and two contexts".to_string(),
        });
    }
    if spec.min_alphabet < 2 || spec.max_alphabet < spec.min_alphabet {
        return Err(GenerateError::BadSpec {
            reason: "alphabet bounds must satisfy 2 <= min <= max".to_string(),
        });
    }
    if spec.denominator_bound == 0 {
        return Err(GenerateError::BadSpec {
            reason: "denominator bound must be positive".to_string(),
        });
    }
    if spec.incidence_density < int(0) || spec.incidence_density > int(1) {
        return Err(GenerateError::BadSpec {
            reason: "incidence density must lie in [0, 1]".to_string(),
        });
    }
    let (density_num, density_den) =
        rational_as_u64_pair(&spec.incidence_density).ok_or_else(|| GenerateError::BadSpec {
            reason: "incidence density numerator and denominator must fit in u64".to_string(),
        })?;

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    let num_contents = uniform_range(&mut rng, 2, spec.max_contents);
    let num_contexts = uniform_range(&mut rng, 2, spec.max_contexts);

    let content_ids: Vec<ContentId> = (1..=num_contents)
        .map(|i| ContentId::new(alloc::format!("q{i}")))
        .collect();
    let context_ids: Vec<ContextId> = (1..=num_contexts)
        .map(|i| ContextId::new(alloc::format!("c{i}")))
        .collect();

    let mut contents: BTreeMap<ContentId, Alphabet> = BTreeMap::new();
    let mut alphabet_size: BTreeMap<ContentId, usize> = BTreeMap::new();
    for q in &content_ids {
        let size = uniform_range(&mut rng, spec.min_alphabet, spec.max_alphabet);
        contents.insert(q.clone(), Alphabet::decimal(size)?);
        alphabet_size.insert(q.clone(), size);
    }

    // Incidence: density draw, then repair so no context or content is
    // orphaned.
    let mut incidence: BTreeSet<(ContentId, ContextId)> = BTreeSet::new();
    for q in &content_ids {
        for c in &context_ids {
            if bernoulli(&mut rng, density_num, density_den) {
                incidence.insert((q.clone(), c.clone()));
            }
        }
    }
    for c in &context_ids {
        if !incidence.iter().any(|(_, ic)| ic == c) {
            let q = &content_ids[uniform_range(&mut rng, 0, content_ids.len() - 1)];
            incidence.insert((q.clone(), c.clone()));
        }
    }
    for q in &content_ids {
        if !incidence.iter().any(|(iq, _)| iq == q) {
            let c = &context_ids[uniform_range(&mut rng, 0, context_ids.len() - 1)];
            incidence.insert((q.clone(), c.clone()));
        }
    }

    let mode = match spec.mode {
        ConsistencyMode::Either => {
            if bernoulli(&mut rng, 1, 2) {
                ConsistencyMode::Consistent
            } else {
                ConsistencyMode::Inconsistent
            }
        }
        other => other,
    };
    // Inconsistency needs a content shared between two contexts.
    if mode == ConsistencyMode::Inconsistent
        && !content_ids
            .iter()
            .any(|q| incidence.iter().filter(|(iq, _)| iq == q).count() >= 2)
    {
        let q = &content_ids[0];
        for c in context_ids.iter().take(2) {
            incidence.insert((q.clone(), c.clone()));
        }
    }

    let format = SystemFormat::new(contents, context_ids.iter().cloned().collect(), incidence)?;

    let bunches = match mode {
        ConsistencyMode::Consistent => {
            consistent_bunches(&mut rng, &format, &content_ids, &alphabet_size, spec)?
        }
        ConsistencyMode::Inconsistent => {
            // Redraw until genuinely inconsistent, within the retry bound.
            let mut best = independent_bunches(&mut rng, &format, spec)?;
            for _ in 0..INCONSISTENT_RETRIES {
                let candidate = validate_system(System::new(format.clone(), best.clone()))?;
                if !is_consistently_connected(&candidate)? {
                    break;
                }
                best = independent_bunches(&mut rng, &format, spec)?;
            }
            best
        }
        ConsistencyMode::Either => unreachable!("resolved above"),
    };

    Ok(validate_system(System::new(format, bunches))?)
}

/// Bunches obtained by marginalizing one global joint over all contents.
fn consistent_bunches(
    rng: &mut ChaCha12Rng,
    format: &SystemFormat,
    content_ids: &[ContentId],
    alphabet_size: &BTreeMap<ContentId, usize>,
    spec: &GeneratorSpec,
) -> Result<Vec<BunchDistribution>, GenerateError> {
    let mut cells = 1usize;
    for q in content_ids {
        cells = cells
            .checked_mul(alphabet_size[q])
            .filter(|&n| n <= MAX_TABLE_CELLS)
            .ok_or(GenerateError::TooLarge)?;
    }
    let variables: Vec<(String, Alphabet)> = content_ids
        .iter()
        .map(|q| (q.to_string(), format.alphabet(q).expect("known content").clone()))
        .collect();
    let global = JointDistribution::new(variables, random_table(rng, cells, spec.denominator_bound))?;

    let mut bunches = Vec::new();
    for c in format.contexts() {
        let positions: Vec<usize> = format
            .contents_of(c)
            .iter()
            .map(|q| content_ids.iter().position(|x| x == *q).expect("known content"))
            .collect();
        bunches.push(BunchDistribution::new(c.clone(), global.marginal_onto(&positions)?));
    }
    Ok(bunches)
}

/// Bunches drawn independently per context.
fn independent_bunches(
    rng: &mut ChaCha12Rng,
    format: &SystemFormat,
    spec: &GeneratorSpec,
) -> Result<Vec<BunchDistribution>, GenerateError> {
    let mut bunches = Vec::new();
    for c in format.contexts() {
        let contents = format.contents_of(c);
        let mut cells = 1usize;
        let mut variables: Vec<(String, Alphabet)> = Vec::with_capacity(contents.len());
        for q in &contents {
            let alphabet = format.alphabet(q).expect("known content").clone();
            cells = cells
                .checked_mul(alphabet.len())
                .filter(|&n| n <= MAX_TABLE_CELLS)
                .ok_or(GenerateError::TooLarge)?;
            variables.push((q.to_string(), alphabet));
        }
        let joint =
            JointDistribution::new(variables, random_table(rng, cells, spec.denominator_bound))?;
        bunches.push(BunchDistribution::new(c.clone(), joint));
    }
    Ok(bunches)
}

/// The cyclic four-content, four-context format: c1 = {q1, q2},
/// c2 = {q2, q3}, c3 = {q3, q4}, c4 = {q1, q4}, all contents binary.
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
    SystemFormat::new(contents, contexts, incidence).expect("well-formed format")
}

fn cyclic_system(tables: [Vec<Rational>; 4]) -> Result<System, GenerateError> {
    let pairs = [["q1", "q2"], ["q2", "q3"], ["q3", "q4"], ["q1", "q4"]];
    let mut bunches = Vec::new();
    for (i, table) in tables.into_iter().enumerate() {
        let variables: Vec<(String, Alphabet)> = pairs[i]
            .iter()
            .map(|q| (q.to_string(), Alphabet::binary()))
            .collect();
        bunches.push(BunchDistribution::new(
            ContextId::new(alloc::format!("c{}", i + 1)),
            JointDistribution::new(variables, table)?,
        ));
    }
    Ok(validate_system(System::new(cyclic_format(), bunches))?)
}

fn correlated_table() -> Vec<Rational> {
    alloc::vec![rat(1, 2), int(0), int(0), rat(1, 2)]
}

fn anticorrelated_table() -> Vec<Rational> {
    alloc::vec![int(0), rat(1, 2), rat(1, 2), int(0)]
}

fn uniform_table(cells: usize) -> Vec<Rational> {
    alloc::vec![Rational::new(1.into(), (cells as u64).into()); cells]
}

/// Mixes each cell of `table` with the uniform table: `level * table +
/// (1 - level) * uniform`.
fn noisy_table(table: Vec<Rational>, level: &Rational) -> Vec<Rational> {
    let cells = table.len();
    let uniform = Rational::new(1.into(), (cells as u64).into());
    table
        .into_iter()
        .map(|p| level * p + (int(1) - level) * &uniform)
        .collect()
}

/// Builds one of the named reference systems:
///
/// * `pr-box` — the cyclic binary system with three perfectly correlated
///   contexts and one perfectly anti-correlated one; consistently connected
///   and contextual.
/// * `classical-corr` — all four contexts perfectly correlated;
///   noncontextual.
/// * `noisy-pr(λ)` — `λ·pr-box + (1−λ)·uniform` per context, `λ` a rational
///   in `[0, 1]` such as `noisy-pr(3/8)`; contextual exactly when
///   `λ > 1/2`.
/// * `eq2-format-demo` — three binary contents, the three pairwise contexts
///   plus one triple context, all bunches uniform.
/// * `epr-format` — the cyclic format with all bunches uniform.
pub fn gen_named(name: &str) -> Result<System, GenerateError> {
    match name {
        "pr-box" => cyclic_system([
            correlated_table(),
            correlated_table(),
            correlated_table(),
            anticorrelated_table(),
        ]),
        "classical-corr" => cyclic_system([
            correlated_table(),
            correlated_table(),
            correlated_table(),
            correlated_table(),
        ]),
        "eq2-format-demo" => {
            let mut contents = BTreeMap::new();
            for q in ["q1", "q2", "q3"] {
                contents.insert(ContentId::new(q), Alphabet::binary());
            }
            let contexts: BTreeSet<ContextId> = ["c1", "c2", "c3", "c4"]
                .into_iter()
                .map(ContextId::new)
                .collect();
            let members: [(&str, &[&str]); 4] = [
                ("c1", &["q1", "q2"]),
                ("c2", &["q2", "q3"]),
                ("c3", &["q1", "q3"]),
                ("c4", &["q1", "q2", "q3"]),
            ];
            let mut incidence: BTreeSet<(ContentId, ContextId)> = BTreeSet::new();
            for (c, qs) in &members {
                for q in *qs {
                    incidence.insert((ContentId::new(*q), ContextId::new(*c)));
                }
            }
            let format = SystemFormat::new(contents, contexts, incidence)?;
            let mut bunches = Vec::new();
            for (c, qs) in &members {
                let variables: Vec<(String, Alphabet)> =
                    qs.iter().map(|q| (q.to_string(), Alphabet::binary())).collect();
                let cells = 1usize << qs.len();
                bunches.push(BunchDistribution::new(
                    ContextId::new(*c),
                    JointDistribution::new(variables, uniform_table(cells))?,
                ));
            }
            Ok(validate_system(System::new(format, bunches))?)
        }
        "epr-format" => cyclic_system([
            uniform_table(4),
            uniform_table(4),
            uniform_table(4),
            uniform_table(4),
        ]),
        other => {
            if let Some(rest) = other.strip_prefix("noisy-pr(") {
                if let Some(arg) = rest.strip_suffix(')') {
                    let level = crate::rational::parse_rational(arg).map_err(|e| {
                        GenerateError::BadSpec {
                            reason: alloc::format!("bad noise level `{arg}`: {e}"),
                        }
                    })?;
                    if level < int(0) || level > int(1) {
                        return Err(GenerateError::BadSpec {
                            reason: alloc::format!("noise level `{arg}` outside [0, 1]"),
                        });
                    }
                    let pr = [
                        correlated_table(),
                        correlated_table(),
                        correlated_table(),
                        anticorrelated_table(),
                    ];
                    return cyclic_system(pr.map(|t| noisy_table(t, &level)));
                }
            }
            Err(GenerateError::UnknownName {
                name: other.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contextuality::{decide_contextual, decide_traditional, Status};
    use crate::coupling::IdentityRule;

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec::default();
        let a = gen_system(&spec).unwrap();
        let b = gen_system(&spec).unwrap();
        assert_eq!(a, b);
        let other = gen_system(&GeneratorSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn consistent_mode_systems_are_consistent_and_noncontextual() {
        for seed in 0..20 {
            let spec = GeneratorSpec {
                seed,
                mode: ConsistencyMode::Consistent,
                ..GeneratorSpec::default()
            };
            let system = gen_system(&spec).unwrap();
            assert!(is_consistently_connected(&system).unwrap(), "seed {seed}");
            let verdict = decide_traditional(&system).unwrap();
            assert_eq!(verdict.status, Status::Noncontextual, "seed {seed}");
        }
    }

    #[test]
    fn inconsistent_mode_usually_differs_across_contexts() {
        let mut inconsistent = 0;
        for seed in 0..20 {
            let spec = GeneratorSpec {
                seed,
                mode: ConsistencyMode::Inconsistent,
                ..GeneratorSpec::default()
            };
            let system = gen_system(&spec).unwrap();
            if !is_consistently_connected(&system).unwrap() {
                inconsistent += 1;
            }
        }
        assert!(inconsistent >= 18, "only {inconsistent}/20 inconsistent");
    }

    #[test]
    fn named_systems_have_the_advertised_verdicts() {
        let pr = gen_named("pr-box").unwrap();
        assert!(is_consistently_connected(&pr).unwrap());
        assert_eq!(decide_traditional(&pr).unwrap().status, Status::Contextual);

        let classical = gen_named("classical-corr").unwrap();
        assert_eq!(
            decide_traditional(&classical).unwrap().status,
            Status::Noncontextual
        );

        let epr = gen_named("epr-format").unwrap();
        assert_eq!(
            decide_traditional(&epr).unwrap().status,
            Status::Noncontextual
        );

        let demo = gen_named("eq2-format-demo").unwrap();
        assert_eq!(
            decide_contextual(&demo, &IdentityRule).unwrap().status,
            Status::Noncontextual
        );
    }

    #[test]
    fn noisy_pr_changes_verdict_exactly_at_one_half() {
        for (level, want) in [
            ("0", Status::Noncontextual),
            ("3/8", Status::Noncontextual),
            ("1/2", Status::Noncontextual),
            ("33/64", Status::Contextual),
            ("3/4", Status::Contextual),
            ("1", Status::Contextual),
        ] {
            let system = gen_named(&alloc::format!("noisy-pr({level})")).unwrap();
            assert_eq!(
                decide_traditional(&system).unwrap().status,
                want,
                "level {level}"
            );
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            gen_named("no-such-system"),
            Err(GenerateError::UnknownName { .. })
        ));
        assert!(matches!(
            gen_named("noisy-pr(3/2)"),
            Err(GenerateError::BadSpec { .. })
        ));
        let spec = GeneratorSpec {
            max_contents: 1,
            ..GeneratorSpec::default()
        };
        assert!(matches!(gen_system(&spec), Err(GenerateError::BadSpec { .. })));
    }

    #[test]
    fn composition_parts_sum_to_total() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for cells in 1..6 {
            let parts = composition(&mut rng, cells, 64);
            assert_eq!(parts.len(), cells);
            assert_eq!(parts.iter().sum::<u64>(), 64);
        }
    }
}
