use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GenerateRequest, Oracle, ScoreRequest};
use crate::types::PromptLayout;

/// How an answer is read off the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerMode {
    /// Argmax over the first token of each option label.
    #[default]
    Constrained,
    /// Greedy generation parsed for a label, falling back to constrained
    /// scoring when nothing parses.
    FreeText,
}

/// Picks the option whose label's first token is most probable right after
/// `layout`.
///
/// Returns the label and the option probabilities renormalized over the
/// option tokens, in option order. Ties go to the lexicographically smallest
/// label.
pub fn constrained_answer(layout: &PromptLayout, labels: &[String], oracle: &dyn Oracle) -> Result<(String, Vec<f64>)> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no answer options".into()));
    }
    let context = layout.ids();
    let mut raw = Vec::with_capacity(labels.len());
    for label in labels {
        let first = oracle
            .tokenize(label)?
            .first()
            .map(|t| t.id)
            .ok_or_else(|| Error::InvalidArgument(format!("option label {label:?} has no tokens")))?;
        raw.push(oracle.score(&ScoreRequest::new(context.clone(), vec![first]))?.probs[0]);
    }
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let mut best = 0;
    for i in 1..labels.len() {
        if raw[i] > raw[best] || (raw[i] == raw[best] && labels[i] < labels[best]) {
            best = i;
        }
    }
    Ok((labels[best].clone(), probs))
}

/// Finds an option label in free-form model output: the first `(X)` or
/// `(X` whose `X` is a label, else a bare label at the very start.
pub fn parse_answer(text: &str, labels: &[String]) -> Option<String> {
    let mut rest = text;
    while let Some(i) = rest.find('(') {
        let after = &rest[i + 1..];
        if let Some(l) = labels.iter().find(|l| {
            after.starts_with(l.as_str())
                && after[l.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric())
        }) {
            return Some(l.clone());
        }
        rest = after;
    }
    let head = text.trim_start();
    labels
        .iter()
        .find(|l| head.starts_with(l.as_str()) && head[l.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric()))
        .cloned()
}

/// Answer according to `mode`.
pub fn answer(layout: &PromptLayout, labels: &[String], oracle: &dyn Oracle, mode: AnswerMode) -> Result<String> {
    if mode == AnswerMode::FreeText {
        let gen = oracle.generate(&GenerateRequest::greedy(layout.ids(), 8))?;
        let text: String = gen.iter().map(|t| t.text.as_str()).collect();
        if let Some(l) = parse_answer(&text, labels) {
            return Ok(l);
        }
    }
    Ok(constrained_answer(layout, labels, oracle)?.0)
}
