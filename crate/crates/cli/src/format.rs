//! The system file format: a line-oriented, token-based text grammar.
//!
//! ```text
//! # comment — everything from '#' to end of line is ignored
//! contents
//!   q1 : 0 1
//!   q2 : 0 1
//!
//! contexts
//!   c1 : q1 q2
//!   c2 : q2
//!
//! bunches c1
//!   0 0 : 1/2
//!   1 1 : 1/2
//!
//! bunches c2
//!   0 : 1/2
//!   1 : 1/2
//! ```
//!
//! Rules:
//!
//! * Tokens are whitespace-separated; `:` must stand alone as a token.
//! * A `contents` entry is `label : outcome...`; a `contexts` entry is
//!   `label : content...`. Sections must appear in the order `contents`,
//!   `contexts`, then one `bunches <context>` block per context.
//! * A bunch entry lists one outcome per content of the context — contents
//!   taken in label order — then `:` and a rational probability. Omitted
//!   outcome tuples have probability zero; listing a tuple twice is an
//!   error.
//! * Indentation is not significant. Probabilities are exact rationals
//!   (`1/3`, `0`, `2`).
//!
//! [`serialize_system`] emits a canonical form: sorted labels, only nonzero
//! cells, cells in table order. `parse` then `serialize` reproduces every
//! canonical file byte for byte.

use std::collections::{BTreeMap, BTreeSet};

use cbd_core::model::{
    validate_system, Alphabet, BunchDistribution, ContentId, ContextId, JointDistribution,
    ModelError, System, SystemFormat,
};
use cbd_core::rational::{format_rational, parse_rational};
use num_traits::Zero;
use cbd_core::space::ProductSpace;

/// Errors raised while reading or writing system files.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("label `{label}` cannot be written to a file (empty, whitespace, `#`, or a bare `:`)")]
    Unrepresentable { label: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(PartialEq)]
enum Section {
    Start,
    Contents,
    Contexts,
    Bunches(String),
}

/// Parses the text of a system file into a validated [`System`].
pub fn parse_system(text: &str) -> Result<System, FormatError> {
    let mut section = Section::Start;
    // Declared contents and contexts, with their file line for messages.
    let mut contents: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut contexts: BTreeMap<String, Vec<String>> = BTreeMap::new();
    // Dense probability text per context, plus seen-cell tracking.
    let mut tables: BTreeMap<String, Vec<Option<cbd_core::Rational>>> = BTreeMap::new();
    let mut seen_contents_section = false;
    let mut seen_contexts_section = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = stripped.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }

        match tokens[0] {
            "contents" => {
                if tokens.len() != 1 {
                    return Err(syntax(line, "the `contents` header takes no arguments"));
                }
                if seen_contents_section {
                    return Err(syntax(line, "duplicate `contents` section"));
                }
                if section != Section::Start {
                    return Err(syntax(line, "`contents` must be the first section"));
                }
                seen_contents_section = true;
                section = Section::Contents;
            }
            "contexts" => {
                if tokens.len() != 1 {
                    return Err(syntax(line, "the `contexts` header takes no arguments"));
                }
                if seen_contexts_section {
                    return Err(syntax(line, "duplicate `contexts` section"));
                }
                if section != Section::Contents {
                    return Err(syntax(line, "`contexts` must follow the `contents` section"));
                }
                seen_contexts_section = true;
                section = Section::Contexts;
            }
            "bunches" => {
                if tokens.len() != 2 {
                    return Err(syntax(line, "usage: `bunches <context>`"));
                }
                if !seen_contexts_section {
                    return Err(syntax(line, "`bunches` must follow the `contexts` section"));
                }
                let context = tokens[1].to_string();
                if !contexts.contains_key(&context) {
                    return Err(syntax(line, format!("unknown context `{context}`")));
                }
                if tables.contains_key(&context) {
                    return Err(syntax(line, format!("duplicate `bunches {context}` section")));
                }
                let cells: usize = contexts[&context]
                    .iter()
                    .map(|q| contents[q].len())
                    .product();
                tables.insert(context.clone(), vec![None; cells]);
                section = Section::Bunches(context);
            }
            _ => match &section {
                Section::Start => {
                    return Err(syntax(line, "expected a `contents` section header"));
                }
                Section::Contents => {
                    let (label, items) = split_entry(line, &tokens)?;
                    if items.is_empty() {
                        return Err(syntax(line, "a content needs at least one outcome"));
                    }
                    if contents.contains_key(label) {
                        return Err(syntax(line, format!("duplicate content `{label}`")));
                    }
                    let mut outs: Vec<String> = Vec::new();
                    for o in &items {
                        if outs.iter().any(|x| x == o) {
                            return Err(syntax(line, format!("duplicate outcome `{o}`")));
                        }
                        outs.push((*o).to_string());
                    }
                    contents.insert(label.to_string(), outs);
                }
                Section::Contexts => {
                    let (label, items) = split_entry(line, &tokens)?;
                    if items.is_empty() {
                        return Err(syntax(line, "a context needs at least one content"));
                    }
                    if contexts.contains_key(label) {
                        return Err(syntax(line, format!("duplicate context `{label}`")));
                    }
                    let mut members: Vec<String> = Vec::new();
                    for q in &items {
                        if !contents.contains_key(*q) {
                            return Err(syntax(line, format!("unknown content `{q}`")));
                        }
                        if members.iter().any(|x| x == q) {
                            return Err(syntax(
                                line,
                                format!("content `{q}` listed twice in one context"),
                            ));
                        }
                        members.push((*q).to_string());
                    }
                    members.sort();
                    contexts.insert(label.to_string(), members);
                }
                Section::Bunches(context) => {
                    let members = &contexts[context];
                    if tokens.len() != members.len() + 2 || tokens[members.len()] != ":" {
                        return Err(syntax(
                            line,
                            format!(
                                "expected `{} outcome token(s) : probability`",
                                members.len()
                            ),
                        ));
                    }
                    let sizes: Vec<usize> = members.iter().map(|q| contents[q].len()).collect();
                    let mut coords = Vec::with_capacity(members.len());
                    for (k, q) in members.iter().enumerate() {
                        let token = tokens[k];
                        match contents[q].iter().position(|o| o == token) {
                            Some(j) => coords.push(j),
                            None => {
                                return Err(syntax(
                                    line,
                                    format!("`{token}` is not an outcome of content `{q}`"),
                                ))
                            }
                        }
                    }
                    let prob = parse_rational(tokens[members.len() + 1])
                        .map_err(|e| syntax(line, format!("bad probability: {e}")))?;
                    let index = ProductSpace::new(&sizes).index(&coords);
                    let cell = &mut tables.get_mut(context).expect("open section")[index];
                    if cell.is_some() {
                        return Err(syntax(line, "this outcome tuple was already assigned"));
                    }
                    *cell = Some(prob);
                }
            },
        }
    }

    // Assemble and hand the rest of the checking to the model layer.
    let mut format_contents: BTreeMap<ContentId, Alphabet> = BTreeMap::new();
    for (label, outs) in &contents {
        format_contents.insert(ContentId::new(label.clone()), Alphabet::new(outs.clone())?);
    }
    let format_contexts: BTreeSet<ContextId> =
        contexts.keys().map(|c| ContextId::new(c.clone())).collect();
    let mut incidence: BTreeSet<(ContentId, ContextId)> = BTreeSet::new();
    for (c, members) in &contexts {
        for q in members {
            incidence.insert((ContentId::new(q.clone()), ContextId::new(c.clone())));
        }
    }
    let format = SystemFormat::new(format_contents, format_contexts, incidence)?;

    let mut bunches = Vec::new();
    for (c, table) in tables {
        let members = &contexts[&c];
        let variables: Vec<(String, Alphabet)> = members
            .iter()
            .map(|q| (q.clone(), Alphabet::new(contents[q].clone()).expect("checked")))
            .collect();
        let probs: Vec<cbd_core::Rational> = table
            .into_iter()
            .map(|cell| cell.unwrap_or_else(|| cbd_core::rational::int(0)))
            .collect();
        bunches.push(BunchDistribution::new(
            ContextId::new(c),
            JointDistribution::new(variables, probs)?,
        ));
    }

    Ok(validate_system(System::new(format, bunches))?)
}

/// Splits `label : item...`, requiring the `:` at position 1.
fn split_entry<'a>(
    line: usize,
    tokens: &[&'a str],
) -> Result<(&'a str, Vec<&'a str>), FormatError> {
    if tokens.len() < 2 || tokens[1] != ":" {
        return Err(syntax(line, "expected `label : item...`"));
    }
    Ok((tokens[0], tokens[2..].to_vec()))
}

fn check_token(label: &str) -> Result<(), FormatError> {
    let bad = label.is_empty()
        || label == ":"
        || label.contains(char::is_whitespace)
        || label.contains('#');
    if bad {
        return Err(FormatError::Unrepresentable {
            label: label.to_string(),
        });
    }
    Ok(())
}

/// Serializes a validated system in canonical form.
pub fn serialize_system(system: &System) -> Result<String, FormatError> {
    use std::fmt::Write;

    let mut out = String::new();
    out.push_str("contents\n");
    for q in system.format.content_ids() {
        check_token(q.as_str())?;
        let alphabet = system.format.alphabet(q).expect("validated system");
        for o in alphabet.outcomes() {
            check_token(o)?;
        }
        writeln!(out, "  {} : {}", q, alphabet.outcomes().join(" ")).unwrap();
    }

    out.push('\n');
    out.push_str("contexts\n");
    for c in system.format.contexts() {
        check_token(c.as_str())?;
        let members: Vec<&str> = system
            .format
            .contents_of(c)
            .iter()
            .map(|q| q.as_str())
            .collect();
        writeln!(out, "  {} : {}", c, members.join(" ")).unwrap();
    }

    for c in system.format.contexts() {
        let bunch = system.bunch(c).expect("validated system");
        out.push('\n');
        writeln!(out, "bunches {c}").unwrap();
        let joint = &bunch.joint;
        let space = joint.space();
        for (index, prob) in joint.probs().iter().enumerate() {
            if prob.is_zero() {
                continue;
            }
            let coords = space.coords(index);
            let cells: Vec<&str> = coords
                .iter()
                .enumerate()
                .map(|(k, &j)| joint.variables()[k].1.outcomes()[j].as_str())
                .collect();
            writeln!(out, "  {} : {}", cells.join(" "), format_rational(prob)).unwrap();
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbd_core::gen_named;
    use cbd_core::rational::rat;

    #[test]
    fn canonical_output_round_trips() {
        for name in ["pr-box", "classical-corr", "noisy-pr(3/8)", "eq2-format-demo"] {
            let system = gen_named(name).unwrap();
            let text = serialize_system(&system).unwrap();
            let reparsed = parse_system(&text).unwrap();
            assert_eq!(reparsed, system, "{name}");
            assert_eq!(serialize_system(&reparsed).unwrap(), text, "{name}");
        }
    }

    #[test]
    fn omitted_cells_are_zero_and_comments_are_ignored() {
        let text = "\
# a tiny one-content system
contents
  x : heads tails   # coin outcomes
contexts
  a : x
  b : x
bunches a
  heads : 1/3
  tails : 2/3
bunches b
  tails : 1   # heads omitted, so zero
";
        let system = parse_system(text).unwrap();
        let bunch = system.bunch(&ContextId::new("b")).unwrap();
        assert_eq!(*bunch.joint.prob(&[0]), cbd_core::rational::int(0));
        assert_eq!(*bunch.joint.prob(&[1]), cbd_core::rational::int(1));
        let a = system.bunch(&ContextId::new("a")).unwrap();
        assert_eq!(*a.joint.prob(&[0]), rat(1, 3));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases: &[(&str, usize, &str)] = &[
            ("contents\n x 0 1\n", 2, "expected `label : item"),
            ("contents\n  x : 0 1\ncontexts\n  a : y\n", 4, "unknown content"),
            (
                "contents\n  x : 0 1\ncontexts\n  a : x\nbunches a\n  0 : 1/0\n",
                6,
                "bad probability",
            ),
            (
                "contents\n  x : 0 1\ncontexts\n  a : x\nbunches a\n  0 : 1/2\n  0 : 1/2\n",
                7,
                "already assigned",
            ),
            ("contexts\n", 1, "must follow the `contents` section"),
            (
                "contents\n  x : 0 1\ncontexts\n  a : x\nbunches b\n",
                5,
                "unknown context",
            ),
        ];
        for (text, want_line, want_message) in cases {
            match parse_system(text) {
                Err(FormatError::Syntax { line, message }) => {
                    assert_eq!(line, *want_line, "{text:?}: {message}");
                    assert!(
                        message.contains(want_message),
                        "{text:?}: got message `{message}`"
                    );
                }
                other => panic!("{text:?}: expected a syntax error, got {other:?}"),
            }
        }
    }

    #[test]
    fn distribution_errors_surface_as_model_errors() {
        // Probabilities that do not sum to one.
        let text = "\
contents
  x : 0 1
contexts
  a : x
  b : x
bunches a
  0 : 1/2
bunches b
  0 : 1/2
  1 : 1/2
";
        assert!(matches!(parse_system(text), Err(FormatError::Model(_))));

        // A context with no bunch block at all.
        let text = "\
contents
  x : 0 1
contexts
  a : x
  b : x
bunches a
  0 : 1/2
  1 : 1/2
";
        assert!(matches!(parse_system(text), Err(FormatError::Model(_))));
    }

    #[test]
    fn bunch_rows_use_content_label_order() {
        // Context declared as `b a` must still be keyed in label order a, b.
        let text = "\
contents
  a : 0 1
  b : 0 1
contexts
  c : b a
bunches c
  0 1 : 1
";
        let system = parse_system(text).unwrap();
        let bunch = system.bunch(&ContextId::new("c")).unwrap();
        assert_eq!(bunch.joint.label(0), "a");
        assert_eq!(bunch.joint.label(1), "b");
        assert_eq!(*bunch.joint.prob(&[0, 1]), cbd_core::rational::int(1));
    }
}
