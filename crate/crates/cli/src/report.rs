//! Machine- and human-readable command reports.
//!
//! Every subcommand fills one [`Report`]; the text and JSON renderings are
//! produced from the same struct, so they always carry the same content,
//! and the JSON form round-trips through serde losslessly.

use serde::{Deserialize, Serialize};

/// How a report is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

/// The result of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    /// Subcommand that produced this report.
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// `contextual` or `noncontextual`, for deciding commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// Whether every connection has equal marginals across its contexts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<usize>,
    /// Number of (content, context) variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_columns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_rows: Option<usize>,
    /// The solver outcome was re-checked against the constraint system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_atoms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_holds: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systems_checked: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvm_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvm_context_free: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvm_reproduces: Option<bool>,
    /// One line per variable: `content @ context : probabilities`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marginals: Vec<String>,
    /// One line per connection whose marginals differ.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub elapsed_ms: u128,
    pub exit_code: i32,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Report {
            command: command.into(),
            ..Report::default()
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.render_text(),
            OutputFormat::Json => {
                let mut json =
                    serde_json::to_string_pretty(self).expect("report serializes");
                json.push('\n');
                json
            }
        }
    }

    fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "command: {}", self.command).unwrap();
        if let Some(v) = &self.input {
            writeln!(out, "input: {v}").unwrap();
        }
        if let Some(v) = &self.rule {
            writeln!(out, "rule: {v}").unwrap();
        }
        if let Some(v) = self.contents {
            writeln!(out, "contents: {v}").unwrap();
        }
        if let Some(v) = self.contexts {
            writeln!(out, "contexts: {v}").unwrap();
        }
        if let Some(v) = self.variables {
            writeln!(out, "variables: {v}").unwrap();
        }
        if let Some(v) = self.consistent {
            writeln!(out, "consistent: {v}").unwrap();
        }
        if let Some(v) = &self.status {
            writeln!(out, "status: {v}").unwrap();
        }
        if let Some(v) = self.lp_columns {
            writeln!(out, "lp columns: {v}").unwrap();
        }
        if let Some(v) = self.lp_rows {
            writeln!(out, "lp rows: {v}").unwrap();
        }
        if let Some(v) = self.certificate_verified {
            writeln!(out, "certificate verified: {v}").unwrap();
        }
        if let Some(v) = self.witness_atoms {
            writeln!(out, "witness atoms: {v}").unwrap();
        }
        if let Some(v) = self.equivalence_holds {
            writeln!(out, "equivalence holds: {v}").unwrap();
        }
        if let Some(v) = self.systems_checked {
            writeln!(out, "systems checked: {v}").unwrap();
        }
        if let Some(v) = self.hvm_states {
            writeln!(out, "hidden states: {v}").unwrap();
        }
        if let Some(v) = self.hvm_context_free {
            writeln!(out, "context-free responses: {v}").unwrap();
        }
        if let Some(v) = self.hvm_reproduces {
            writeln!(out, "model reproduces system: {v}").unwrap();
        }
        if !self.marginals.is_empty() {
            writeln!(out, "marginals:").unwrap();
            for m in &self.marginals {
                writeln!(out, "  {m}").unwrap();
            }
        }
        if !self.violations.is_empty() {
            writeln!(out, "violations:").unwrap();
            for v in &self.violations {
                writeln!(out, "  {v}").unwrap();
            }
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        writeln!(out, "elapsed ms: {}", self.elapsed_ms).unwrap();
        writeln!(out, "exit code: {}", self.exit_code).unwrap();
        out
    }
}
