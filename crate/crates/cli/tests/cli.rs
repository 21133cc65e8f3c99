//! End-to-end tests that run the compiled `cbd` binary as a subprocess and
//! check exit codes, report contents, and file handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cbd_cli::format::parse_system;
use cbd_cli::report::Report;
use cbd_cli::{EXIT_CONTEXTUAL, EXIT_GUARD, EXIT_INPUT, EXIT_OK};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbd"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../systems")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("run cbd")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn decide_splits_verdicts_across_exit_codes() {
    let pr = shipped("pr-box.sys");
    let corr = shipped("classical-corr.sys");

    let out = run(&["decide", pr.to_str().unwrap(), "--rule", "identity"]);
    assert_eq!(out.status.code(), Some(EXIT_CONTEXTUAL), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("status: contextual"), "{text}");
    assert!(text.contains("certificate verified: true"), "{text}");

    let out = run(&["decide", corr.to_str().unwrap(), "--rule", "comonotonic"]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("status: noncontextual"), "{text}");
    assert!(text.contains("witness atoms:"), "{text}");
}

#[test]
fn verdicts_match_between_binary_and_library() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems");
    let mut checked = 0usize;
    for entry in std::fs::read_dir(&dir).expect("systems dir") {
        let path = entry.expect("entry").path();
        if path.extension().is_none_or(|e| e != "sys") {
            continue;
        }
        let text = std::fs::read_to_string(&path).expect("read");
        let system = parse_system(&text).expect("parse");
        let verdict =
            cbd_core::contextuality::decide_traditional(&system).expect("decide");
        let expected = match verdict.status {
            cbd_core::contextuality::Status::Contextual => EXIT_CONTEXTUAL,
            cbd_core::contextuality::Status::Noncontextual => EXIT_OK,
        };
        let out = run(&["decide", path.to_str().unwrap(), "--rule", "identity"]);
        assert_eq!(
            out.status.code(),
            Some(expected),
            "{}: binary and library disagree",
            path.display()
        );
        checked += 1;
    }
    assert!(checked >= 5, "expected at least five shipped systems");
}

#[test]
fn input_errors_exit_2_with_location() {
    // Missing file.
    let out = run(&["decide", "/nonexistent/no.sys"]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));

    // Syntax error on a known line.
    let dir = tempfile::tempdir().expect("tempdir");
    let bad = dir.path().join("bad.sys");
    std::fs::write(&bad, "contents\n  a : 0 1\n\ncontexts\n  c1 q1\n").expect("write");
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let err = stderr_of(&out);
    assert!(err.contains("line 5"), "{err}");

    // Distribution that does not sum to one.
    let lopsided = dir.path().join("lopsided.sys");
    std::fs::write(
        &lopsided,
        "contents\n  a : 0 1\n\ncontexts\n  k : a\n\nbunches k\n  0 : 1/3\n",
    )
    .expect("write");
    let out = run(&["validate", lopsided.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}

#[test]
fn oversized_oracle_exits_3() {
    let dir = tempfile::tempdir().expect("tempdir");
    let big = dir.path().join("big.sys");
    // Five ternary contents, full incidence over three contexts: the
    // deterministic-assignment formulation needs 3^15 columns, far over the
    // built-in limit, so the guard must refuse before allocating.
    let out = run(&[
        "gen",
        "--seed",
        "2",
        "--density",
        "1",
        "--max-contents",
        "5",
        "--max-contexts",
        "4",
        "--min-alphabet",
        "3",
        "--max-alphabet",
        "3",
        "--out",
        big.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));

    let out = run(&["oracle", big.to_str().unwrap(), "--rule", "comonotonic"]);
    assert_eq!(out.status.code(), Some(EXIT_GUARD), "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("exceeding"), "{err}");
}

#[test]
fn json_reports_parse_and_agree_with_exit_codes() {
    let pr = shipped("pr-box.sys");
    let out = run(&["--format", "json", "decide", pr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONTEXTUAL));
    let report: Report = serde_json::from_str(&stdout_of(&out)).expect("json report");
    assert_eq!(report.command, "decide");
    assert_eq!(report.status.as_deref(), Some("contextual"));
    assert_eq!(report.exit_code, EXIT_CONTEXTUAL);
    assert_eq!(report.certificate_verified, Some(true));

    let out = run(&["--format", "json", "marginals", pr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let report: Report = serde_json::from_str(&stdout_of(&out)).expect("json report");
    assert!(!report.marginals.is_empty());
}

#[test]
fn out_flag_redirects_the_report() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("report.json");
    let pr = shipped("pr-box.sys");
    let out = run(&[
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
        "decide",
        pr.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_CONTEXTUAL));
    assert!(stdout_of(&out).is_empty(), "stdout should be empty with --out");
    let written = std::fs::read_to_string(&path).expect("report file");
    let report: Report = serde_json::from_str(&written).expect("json report");
    assert_eq!(report.status.as_deref(), Some("contextual"));
}

#[test]
fn gen_is_deterministic_and_self_consistent() {
    let args = [
        "gen",
        "--seed",
        "11",
        "--max-contents",
        "3",
        "--max-contexts",
        "3",
        "--mode",
        "consistent",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(EXIT_OK));
    assert_eq!(first.stdout, second.stdout, "same seed must give same bytes");

    // The emitted text is a valid system file.
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("gen.sys");
    std::fs::write(&path, &first.stdout).expect("write");
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("consistent: true"), "{text}");
}

#[test]
fn consistency_command_reports_marginal_mismatches() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("skewed.sys");
    // One shared content whose marginal is 1/2 in context a but 1/4 in b.
    std::fs::write(
        &path,
        "contents\n  x : 0 1\n\ncontexts\n  a : x\n  b : x\n\n\
         bunches a\n  0 : 1/2\n  1 : 1/2\n\nbunches b\n  0 : 1/4\n  1 : 3/4\n",
    )
    .expect("write");
    let out = run(&["consistency", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("consistent: false"), "{text}");
    assert!(text.contains("x"), "{text}");
}

#[test]
fn consistify_emits_a_parseable_derived_system() {
    let demo = shipped("eq2-format-demo.sys");
    let out = run(&["consistify", demo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let system = parse_system(&stdout_of(&out)).expect("derived system parses");
    assert_eq!(system.format.num_contents(), 9);
    assert_eq!(system.format.num_contexts(), 7);

    let epr = shipped("epr-format.sys");
    let out = run(&["consistify", epr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let system = parse_system(&stdout_of(&out)).expect("derived system parses");
    assert_eq!(system.format.num_contents(), 8);
    assert_eq!(system.format.num_contexts(), 8);
}

#[test]
fn verify_equivalence_passes_on_files_and_batches() {
    let pr = shipped("pr-box.sys");
    let out = run(&["verify-equivalence", pr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("equivalence holds: true"), "{text}");

    let out = run(&["--format", "json", "verify-equivalence", "--count", "8", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let report: Report = serde_json::from_str(&stdout_of(&out)).expect("json report");
    assert_eq!(report.systems_checked, Some(8));
    assert_eq!(report.equivalence_holds, Some(true));
}

#[test]
fn hvm_extraction_depends_on_the_verdict() {
    let corr = shipped("classical-corr.sys");
    let out = run(&["hvm", corr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("model reproduces system: true"), "{text}");
    assert!(text.contains("hidden states:"), "{text}");

    let pr = shipped("pr-box.sys");
    let out = run(&["hvm", pr.to_str().unwrap(), "--rule", "identity"]);
    assert_eq!(out.status.code(), Some(EXIT_CONTEXTUAL), "{}", stderr_of(&out));
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = stdout_of(&out);
    assert!(text.contains("decide"), "{text}");
    assert!(text.contains("consistify"), "{text}");

    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));

    // No arguments at all: usage goes to stderr with the input-error code.
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}
