//! Datasets, prompts, answer scoring and run orchestration.

mod answer;
mod run;
mod synthetic;
mod templates;

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use answer::{answer, constrained_answer, parse_answer, AnswerMode};
pub use run::{
    load_records, run_suite, ArtifactHashes, RecordSink, RunConfig, RunManifest, RunOutcome, SampleError,
    SampleRecord, TestName,
};
pub use synthetic::synthetic_instances;
pub use templates::{
    render_prompts, render_with_suffix, PromptMode, RenderedPrompts, TemplateProfile, TemplateStyle, ANSWER_CUE,
    DEFAULT_SYSTEM_PROMPT,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "esnli")]
    ESNLI,
    #[serde(rename = "comve")]
    ComVE,
    #[serde(rename = "bbh-causal")]
    BBHCausal,
    #[serde(rename = "bbh-disambig")]
    BBHDisambig,
    #[serde(rename = "bbh-logical5")]
    BBHLogical5,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] =
        [TaskKind::ESNLI, TaskKind::ComVE, TaskKind::BBHCausal, TaskKind::BBHDisambig, TaskKind::BBHLogical5];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ESNLI => "esnli",
            TaskKind::ComVE => "comve",
            TaskKind::BBHCausal => "bbh-causal",
            TaskKind::BBHDisambig => "bbh-disambig",
            TaskKind::BBHLogical5 => "bbh-logical5",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSegment {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub text: String,
}

/// One dataset instance in the normalized schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskKind,
    pub segments: Vec<InputSegment>,
    pub options: Vec<AnswerOption>,
    pub gold: String,
}

impl TaskInstance {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::SchemaError("segments".into()));
        }
        if self.options.len() < 2 {
            return Err(Error::SchemaError("options".into()));
        }
        if !self.options.iter().any(|o| o.label == self.gold) {
            return Err(Error::SchemaError("gold".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|o| o.label.clone()).collect()
    }
}

/// Sampling settings for explanations and chains of thought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    /// 0 means greedy.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { max_new_tokens: 32, temperature: 0.0, seed: 0 }
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::SchemaError(name.into()))
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &str) -> Result<String> {
    field(obj, name)?.as_str().map(str::to_string).ok_or_else(|| Error::SchemaError(name.into()))
}

fn pairs(obj: &serde_json::Map<String, Value>, name: &str, a: &str, b: &str) -> Result<Vec<(String, String)>> {
    let arr = field(obj, name)?.as_array().ok_or_else(|| Error::SchemaError(name.into()))?;
    arr.iter()
        .map(|v| {
            let o = v.as_object().ok_or_else(|| Error::SchemaError(name.into()))?;
            Ok((
                string_field(o, a).map_err(|_| Error::SchemaError(format!("{name}.{a}")))?,
                string_field(o, b).map_err(|_| Error::SchemaError(format!("{name}.{b}")))?,
            ))
        })
        .collect()
}

/// Parses one line of the normalized dataset schema.
pub fn parse_instance(line: &str) -> Result<TaskInstance> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::ParseError { line: 0, message: e.to_string() })?;
    let obj = value.as_object().ok_or_else(|| Error::ParseError { line: 0, message: "not a JSON object".into() })?;
    let id = string_field(obj, "id")?;
    let task: TaskKind = string_field(obj, "task")?.parse().map_err(|_| Error::SchemaError("task".into()))?;
    let segments = pairs(obj, "segments", "name", "text")?
        .into_iter()
        .map(|(name, text)| InputSegment { name, text })
        .collect();
    let options = pairs(obj, "options", "label", "text")?
        .into_iter()
        .map(|(label, text)| AnswerOption { label, text })
        .collect();
    let gold = string_field(obj, "gold")?;
    let inst = TaskInstance { id, task, segments, options, gold };
    inst.validate()?;
    Ok(inst)
}

/// Reads a normalized JSONL dataset, keeping file order. Blank lines are
/// skipped; every instance must belong to `task`.
pub fn load_dataset(path: &Path, task: TaskKind) -> Result<Vec<TaskInstance>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instance(&line).map_err(|e| match e {
            Error::ParseError { message, .. } => Error::ParseError { line: i + 1, message },
            other => other,
        })?;
        if inst.task != task {
            return Err(Error::SchemaError("task".into()));
        }
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const COMVE: &str = r#"{"id":"c1","task":"comve","segments":[{"name":"sentence_a","text":"Lobsters live in the ocean"},{"name":"sentence_b","text":"Lobsters live in the mountains"}],"options":[{"label":"A","text":""},{"label":"B","text":""}],"gold":"B"}"#;

    #[test]
    fn comve_line() {
        let inst = parse_instance(COMVE).unwrap();
        assert_eq!(inst.task, TaskKind::ComVE);
        assert_eq!(inst.labels(), vec!["A", "B"]);
        assert_eq!(inst.gold, "B");
    }

    #[test]
    fn missing_gold() {
        let line = COMVE.replace(r#","gold":"B""#, "");
        assert_eq!(parse_instance(&line), Err(Error::SchemaError("gold".into())));
        let bad_gold = COMVE.replace(r#""gold":"B""#, r#""gold":"Z""#);
        assert_eq!(parse_instance(&bad_gold), Err(Error::SchemaError("gold".into())));
    }

    #[test]
    fn file_order_and_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..100 {
            writeln!(f, "{}", COMVE.replace(r#""id":"c1""#, &format!(r#""id":"c{i}""#))).unwrap();
        }
        let all = load_dataset(f.path(), TaskKind::ComVE).unwrap();
        assert_eq!(all.len(), 100);
        assert!(all.iter().enumerate().all(|(i, x)| x.id == format!("c{i}")));
        writeln!(f, "{{not json").unwrap();
        assert!(matches!(load_dataset(f.path(), TaskKind::ComVE), Err(Error::ParseError { line: 101, .. })));
        assert_eq!(load_dataset(f.path(), TaskKind::ESNLI).unwrap_err(), Error::SchemaError("task".into()));
    }

    #[test]
    fn task_names_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(t.as_str().parse::<TaskKind>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
    }
}
