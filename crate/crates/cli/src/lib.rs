//! `cbd` — exact contextuality analysis from the command line.
//!
//! Exit codes: `0` success (and noncontextual verdicts), `10` contextual
//! verdict, `2` input error, `3` resource guard exceeded, `1` internal
//! error (a solver outcome that failed independent re-verification).

pub mod format;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use cbd_core::contextuality::{hull_oracle, ContextualityError, Verdict};
use cbd_core::coupling::{ComonotonicRule, CouplingRule, IdentityRule};
use cbd_core::generate::{gen_named, gen_system, ConsistencyMode, GenerateError, GeneratorSpec};
use cbd_core::hvm::{hvm_from_witness, hvm_reproduces, HvmError, ResponseTable};
use cbd_core::linprog::LinprogError;
use cbd_core::model::{connection_of, consistency_report, System};
use cbd_core::rational::{format_rational, parse_rational};
use cbd_core::{consistify, decide_contextual, decide_traditional, verify_equivalence};
use cbd_core::consistify::ConsistifyError;
use cbd_core::Status;

use format::{parse_system, serialize_system, FormatError};
use report::{OutputFormat, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTEXTUAL: i32 = 10;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

#[derive(Parser)]
#[command(
    name = "cbd",
    version,
    about = "Exact contextuality analysis of finite systems of random variables",
    after_help = "Reports honor --format; `gen` and `consistify` always emit system files.\n\
                  Exit codes: 0 ok/noncontextual, 10 contextual, 2 input error, 3 guard, 1 internal."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Report rendering
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Write the output to this file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    /// Couple each connection diagonally (requires equal marginals)
    Identity,
    /// Couple each connection through a shared quantile source
    Comonotonic,
}

impl RuleArg {
    fn rule(self) -> &'static dyn CouplingRule {
        match self {
            RuleArg::Identity => &IdentityRule,
            RuleArg::Comonotonic => &ComonotonicRule,
        }
    }
    fn name(self) -> &'static str {
        match self {
            RuleArg::Identity => "identity",
            RuleArg::Comonotonic => "comonotonic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Consistent,
    Inconsistent,
    Either,
}

impl From<ModeArg> for ConsistencyMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Consistent => ConsistencyMode::Consistent,
            ModeArg::Inconsistent => ConsistencyMode::Inconsistent,
            ModeArg::Either => ConsistencyMode::Either,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a system file and report its shape
    Validate { file: PathBuf },
    /// List every variable's marginal distribution, one line per (content, context)
    Marginals { file: PathBuf },
    /// Check whether connection marginals agree across contexts (informational)
    Consistency { file: PathBuf },
    /// Decide contextuality by exact LP feasibility
    Decide {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Identity)]
        rule: RuleArg,
    },
    /// Decide with the independent vertex-mixture oracle (slower cross-check)
    Oracle {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Identity)]
        rule: RuleArg,
    },
    /// Rewrite a system as a consistently connected one and emit its file
    Consistify {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Comonotonic)]
        rule: RuleArg,
    },
    /// Decide a system and its rewrite, checking the verdicts coincide
    VerifyEquivalence {
        /// System file; omit it to check a random batch via --count
        file: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RuleArg::Comonotonic)]
        rule: RuleArg,
        /// Check this many seeded random systems instead of a file
        #[arg(long)]
        count: Option<u64>,
        /// First seed of the random batch
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract a hidden-variable model from a noncontextual system
    Hvm {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Identity)]
        rule: RuleArg,
    },
    /// Generate a system file: a named one, or randomly from a seed
    Gen {
        /// pr-box, classical-corr, noisy-pr(λ), eq2-format-demo, or epr-format
        name: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_contents: usize,
        #[arg(long, default_value_t = 4)]
        max_contexts: usize,
        #[arg(long, default_value_t = 2)]
        min_alphabet: usize,
        #[arg(long, default_value_t = 3)]
        max_alphabet: usize,
        /// Probability that a content is measured in a context (a rational)
        #[arg(long, default_value = "1/2")]
        density: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Either)]
        mode: ModeArg,
        /// Probabilities are multiples of 1/bound
        #[arg(long, default_value_t = 64)]
        denominator_bound: u64,
    },
}

/// An error with its exit code.
#[derive(Debug)]
enum CliError {
    Input(String),
    Guard(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Guard(_) => EXIT_GUARD,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Guard(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<cbd_core::model::ModelError> for CliError {
    fn from(e: cbd_core::model::ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ContextualityError> for CliError {
    fn from(e: ContextualityError) -> Self {
        match &e {
            ContextualityError::TooLarge { .. } => CliError::Guard(e.to_string()),
            ContextualityError::Linprog(LinprogError::IterationLimit) => {
                CliError::Guard(e.to_string())
            }
            ContextualityError::Linprog(_) | ContextualityError::VerificationFailed => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ConsistifyError> for CliError {
    fn from(e: ConsistifyError) -> Self {
        match e {
            ConsistifyError::Contextuality(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<GenerateError> for CliError {
    fn from(e: GenerateError) -> Self {
        match &e {
            GenerateError::TooLarge => CliError::Guard(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<HvmError> for CliError {
    fn from(e: HvmError) -> Self {
        match &e {
            HvmError::Model(_) => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// What a subcommand produced.
enum Output {
    Report(Box<Report>),
    SystemText(String),
}

impl From<Report> for Output {
    fn from(report: Report) -> Self {
        Output::Report(Box::new(report))
    }
}

/// Runs the CLI and prints its output; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (stdout, stderr, code) = run_captured(args);
    print!("{stdout}");
    eprint!("{stderr}");
    code
}

/// [`run`] with output captured: returns (stdout, stderr, exit code).
pub fn run_captured<I, T>(args: I) -> (String, String, i32)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    (rendered, String::new(), EXIT_OK)
                }
                _ => (String::new(), rendered, EXIT_INPUT),
            };
        }
    };

    let started = Instant::now();
    let command_name = command_name(&cli.command);
    let outcome = dispatch(&cli.command);

    match outcome {
        Ok(Output::Report(mut report)) => {
            report.elapsed_ms = started.elapsed().as_millis();
            let rendered = report.render(cli.format);
            match write_out(&cli.out, &rendered) {
                Ok(()) => {
                    let stdout = if cli.out.is_some() { String::new() } else { rendered };
                    (stdout, String::new(), report.exit_code)
                }
                Err(e) => error_outcome(&command_name, &e, cli.format, started),
            }
        }
        Ok(Output::SystemText(text)) => match write_out(&cli.out, &text) {
            Ok(()) => {
                let stdout = if cli.out.is_some() { String::new() } else { text };
                (stdout, String::new(), EXIT_OK)
            }
            Err(e) => error_outcome(&command_name, &e, cli.format, started),
        },
        Err(e) => error_outcome(&command_name, &e, cli.format, started),
    }
}

fn error_outcome(
    command: &str,
    e: &CliError,
    format: OutputFormat,
    started: Instant,
) -> (String, String, i32) {
    let mut report = Report::new(command);
    report.notes.push(e.message().to_string());
    report.exit_code = e.exit_code();
    report.elapsed_ms = started.elapsed().as_millis();
    // Error reports always go to stdout (never to --out files) with a short
    // echo on stderr.
    (
        report.render(format),
        format!("cbd {command}: {}\n", e.message()),
        e.exit_code(),
    )
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        None => Ok(()),
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
    }
}

fn command_name(cmd: &Cmd) -> String {
    match cmd {
        Cmd::Validate { .. } => "validate",
        Cmd::Marginals { .. } => "marginals",
        Cmd::Consistency { .. } => "consistency",
        Cmd::Decide { .. } => "decide",
        Cmd::Oracle { .. } => "oracle",
        Cmd::Consistify { .. } => "consistify",
        Cmd::VerifyEquivalence { .. } => "verify-equivalence",
        Cmd::Hvm { .. } => "hvm",
        Cmd::Gen { .. } => "gen",
    }
    .to_string()
}

fn load(path: &Path) -> Result<System, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_system(&text)?)
}

fn shape(report: &mut Report, system: &System) {
    report.contents = Some(system.format.num_contents());
    report.contexts = Some(system.format.num_contexts());
    report.variables = Some(system.format.incidence_len());
}

fn decide_with_rule(system: &System, rule: RuleArg) -> Result<Verdict, ContextualityError> {
    match rule {
        RuleArg::Identity => decide_traditional(system),
        RuleArg::Comonotonic => decide_contextual(system, &ComonotonicRule),
    }
}

fn fill_verdict(report: &mut Report, verdict: &Verdict) {
    report.status = Some(
        match verdict.status {
            Status::Contextual => "contextual",
            Status::Noncontextual => "noncontextual",
        }
        .to_string(),
    );
    report.lp_columns = Some(verdict.lp_columns());
    report.lp_rows = Some(verdict.lp_rows());
    report.certificate_verified = Some(verdict.reverify());
    report.witness_atoms = verdict.witness.as_ref().map(|w| w.atoms.len());
    report.exit_code = match verdict.status {
        Status::Contextual => EXIT_CONTEXTUAL,
        Status::Noncontextual => EXIT_OK,
    };
}

fn dispatch(cmd: &Cmd) -> Result<Output, CliError> {
    match cmd {
        Cmd::Validate { file } => {
            let system = load(file)?;
            let mut report = Report::new("validate");
            report.input = Some(file.display().to_string());
            shape(&mut report, &system);
            report.consistent = Some(consistency_report(&system)?.is_consistent());
            report.notes.push("system file is valid".to_string());
            Ok(report.into())
        }
        Cmd::Marginals { file } => {
            let system = load(file)?;
            let mut report = Report::new("marginals");
            report.input = Some(file.display().to_string());
            shape(&mut report, &system);
            for q in system.format.content_ids() {
                let conn = connection_of(&system, q).map_err(ContextualityError::from)?;
                for (c, marginal) in &conn.marginals {
                    let probs: Vec<String> =
                        marginal.probs().iter().map(format_rational).collect();
                    report
                        .marginals
                        .push(format!("{q} @ {c} : {}", probs.join(" ")));
                }
            }
            Ok(report.into())
        }
        Cmd::Consistency { file } => {
            let system = load(file)?;
            let mut report = Report::new("consistency");
            report.input = Some(file.display().to_string());
            shape(&mut report, &system);
            let summary = consistency_report(&system).map_err(ContextualityError::from)?;
            report.consistent = Some(summary.is_consistent());
            for v in &summary.violations {
                report.violations.push(format!(
                    "{}: marginals differ between {} and {}",
                    v.content, v.context_a, v.context_b
                ));
            }
            Ok(report.into())
        }
        Cmd::Decide { file, rule } => {
            let system = load(file)?;
            let verdict = decide_with_rule(&system, *rule)?;
            let mut report = Report::new("decide");
            report.input = Some(file.display().to_string());
            report.rule = Some(rule.name().to_string());
            shape(&mut report, &system);
            fill_verdict(&mut report, &verdict);
            Ok(report.into())
        }
        Cmd::Oracle { file, rule } => {
            let system = load(file)?;
            let verdict = hull_oracle(&system, rule.rule())?;
            let mut report = Report::new("oracle");
            report.input = Some(file.display().to_string());
            report.rule = Some(rule.name().to_string());
            shape(&mut report, &system);
            fill_verdict(&mut report, &verdict);
            Ok(report.into())
        }
        Cmd::Consistify { file, rule } => {
            let system = load(file)?;
            let derived = consistify(&system, rule.rule())?;
            Ok(Output::SystemText(serialize_system(&derived.system)?))
        }
        Cmd::VerifyEquivalence {
            file,
            rule,
            count,
            seed,
        } => verify_equivalence_cmd(file.as_deref(), *rule, *count, *seed),
        Cmd::Hvm { file, rule } => {
            let system = load(file)?;
            let verdict = decide_with_rule(&system, *rule)?;
            let mut report = Report::new("hvm");
            report.input = Some(file.display().to_string());
            report.rule = Some(rule.name().to_string());
            shape(&mut report, &system);
            fill_verdict(&mut report, &verdict);
            if verdict.status == Status::Contextual {
                report
                    .notes
                    .push("a contextual system admits no hidden-variable model".to_string());
                return Ok(report.into());
            }
            let model = hvm_from_witness(&system, &verdict)?;
            report.hvm_states = Some(model.num_states());
            report.hvm_context_free = Some(model.is_context_free());
            report.hvm_reproduces = Some(hvm_reproduces(&model, &system)?);
            for (name, prob) in &model.states {
                report
                    .notes
                    .push(format!("state {name}: probability {}", format_rational(prob)));
            }
            match &model.responses {
                ResponseTable::ContextFree(map) => {
                    for (q, outs) in map {
                        report.notes.push(format!("{q} -> {}", outs.join(" ")));
                    }
                }
                ResponseTable::ContextDependent(map) => {
                    for ((q, c), outs) in map {
                        report.notes.push(format!("{q} @ {c} -> {}", outs.join(" ")));
                    }
                }
            }
            Ok(report.into())
        }
        Cmd::Gen {
            name,
            seed,
            max_contents,
            max_contexts,
            min_alphabet,
            max_alphabet,
            density,
            mode,
            denominator_bound,
        } => {
            let system = match name {
                Some(name) => gen_named(name)?,
                None => {
                    let incidence_density = parse_rational(density)
                        .map_err(|e| CliError::Input(format!("bad --density: {e}")))?;
                    gen_system(&GeneratorSpec {
                        seed: *seed,
                        max_contents: *max_contents,
                        max_contexts: *max_contexts,
                        min_alphabet: *min_alphabet,
                        max_alphabet: *max_alphabet,
                        incidence_density,
                        mode: (*mode).into(),
                        denominator_bound: *denominator_bound,
                    })?
                }
            };
            Ok(Output::SystemText(serialize_system(&system)?))
        }
    }
}

fn verify_equivalence_cmd(
    file: Option<&Path>,
    rule: RuleArg,
    count: Option<u64>,
    seed: u64,
) -> Result<Output, CliError> {
    let mut report = Report::new("verify-equivalence");
    report.rule = Some(rule.name().to_string());

    let mut holds = true;
    match (file, count) {
        (Some(_), Some(_)) => {
            return Err(CliError::Input(
                "give either a file or --count, not both".to_string(),
            ))
        }
        (None, None) => {
            return Err(CliError::Input(
                "give a system file, or --count N for a random batch".to_string(),
            ))
        }
        (Some(path), None) => {
            let system = load(path)?;
            report.input = Some(path.display().to_string());
            shape(&mut report, &system);
            let outcome = verify_equivalence(&system, rule.rule())?;
            holds = outcome.holds();
            report.status = Some(
                match outcome.source.status {
                    Status::Contextual => "contextual",
                    Status::Noncontextual => "noncontextual",
                }
                .to_string(),
            );
            report.notes.push(format!(
                "source and rewritten system verdicts {}",
                if outcome.agree { "agree" } else { "DISAGREE" }
            ));
            report.systems_checked = Some(1);
        }
        (None, Some(n)) => {
            report.input = Some(format!("{n} random systems from seed {seed}"));
            for i in 0..n {
                let system = gen_system(&GeneratorSpec {
                    seed: seed + i,
                    max_contents: 3,
                    max_contexts: 4,
                    min_alphabet: 2,
                    max_alphabet: 2,
                    mode: ConsistencyMode::Either,
                    ..GeneratorSpec::default()
                })?;
                let outcome = verify_equivalence(&system, rule.rule())?;
                if !outcome.holds() {
                    holds = false;
                    report
                        .notes
                        .push(format!("seed {}: equivalence check failed", seed + i));
                }
            }
            report.systems_checked = Some(n as usize);
        }
    }

    report.equivalence_holds = Some(holds);
    report.exit_code = if holds { EXIT_OK } else { EXIT_INTERNAL };
    Ok(report.into())
}
