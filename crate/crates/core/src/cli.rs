//! Command-line interface: `run`, `report`, `heatmap` and `verify`.
//!
//! Exit codes: 0 success, 1 failed verification, 2 run finished with sample
//! errors, 64 usage error, 65 malformed input data, 69 oracle unreachable,
//! 74 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::analysis::{accuracy, correlation_matrix, heatmap, render_report, summarize, ReportFormat};
use crate::behavioral::{load_lexicon, load_pairs};
use crate::ccshap::DEFAULT_THRESHOLD;
use crate::error::Error;
use crate::harness::{
    load_dataset, load_records, run_suite, synthetic_instances, AnswerMode, RunConfig, TaskKind, TemplateProfile,
    TemplateStyle, TestName,
};
use crate::oracle::{HttpOracle, Oracle, ToyModel};
use crate::shapley::EstimatorMode;
use crate::verify::{run_properties, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_UNAVAILABLE: i32 = 69;
pub const EXIT_IO: i32 = 74;

/// Environment variable holding the default oracle endpoint.
pub const ENDPOINT_ENV: &str = "CCBANK_ENDPOINT";

const DEFAULT_SAMPLES: usize = 100;

#[derive(Parser, Debug)]
#[command(name = "ccbank", version, about = "Self-consistency tests for language-model explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run tests over a dataset and write per-sample records.
    Run(RunArgs),
    /// Summarize one or more results files.
    Report(ReportArgs),
    /// Render token contribution heatmaps for one sample.
    Heatmap(HeatmapArgs),
    /// Check the Shapley estimators on the toy model.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `toy` for the built-in model, otherwise the oracle server's base URL.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    /// JSON file with any run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    /// Normalized JSONL dataset. Without it, generated instances are used.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated test names; defaults to every applicable test.
    #[arg(long, value_delimiter = ',', value_parser = parse_test)]
    tests: Option<Vec<TestName>>,
    /// Instances to evaluate [default: 100].
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Orderings per explained token for the permutation estimator.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    exact_limit: Option<usize>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long, value_enum)]
    answer_mode: Option<AnswerArg>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Results JSONL path; the manifest goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Record per-sample wall time (makes results differ between reruns).
    #[arg(long)]
    timing: bool,
    /// Word list for counterfactual insertions, one per line.
    #[arg(long)]
    insertion_lexicon: Option<PathBuf>,
    /// Antonym pairs for mistake injection, one `word other` pair per line.
    #[arg(long)]
    antonyms: Option<PathBuf>,
    /// Synonym pairs for paraphrasing, one `word replacement` pair per line.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Phrases acknowledging a suggested answer, one per line.
    #[arg(long)]
    bias_markers: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Results JSONL.
    results: PathBuf,
    /// Further runs of the same setup, for run-to-run standard deviation.
    #[arg(long)]
    repeat: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Add point-biserial correlations between CC-SHAP and the other tests.
    #[arg(long)]
    correlate: bool,
    /// CC-SHAP scores at or above this count as faithful.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    results: PathBuf,
    /// Sample id; defaults to the first sample with a CC-SHAP result.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: HeatFormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Largest player count checked.
    #[arg(long, default_value_t = 8)]
    exact_limit: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Break a property on purpose, to exercise the failure path.
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimatorArg {
    Exact,
    Permutation,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProfileArg {
    Base,
    ChatInstTags,
    ChatUserAssistant,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AnswerArg {
    Constrained,
    FreeText,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Text,
    Csv,
    Html,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum HeatFormatArg {
    Text,
    Html,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    Efficiency,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = TaskKind::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown task {s:?}; valid tasks: {}", names.join(", "))
    })
}

fn parse_test(s: &str) -> Result<TestName, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = TestName::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown test {s:?}; valid tests: {}", names.join(", "))
    })
}

/// Settings file for `run`: the run configuration plus where to read and
/// write.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RunFile {
    endpoint: Option<String>,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(flatten)]
    run: RunConfig,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::OracleUnreachable(_) => EXIT_UNAVAILABLE,
            Error::ParseError { .. } | Error::SchemaError(_) => EXIT_DATA,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Output goes to `out`, diagnostics to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Heatmap(a) => cmd_heatmap(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn connect(endpoint: &str) -> Box<dyn Oracle> {
    if endpoint == "toy" {
        Box::new(ToyModel::new())
    } else {
        Box::new(HttpOracle::new(endpoint))
    }
}

fn build_run(a: &RunArgs) -> Result<(RunConfig, String, Option<PathBuf>, PathBuf), Failure> {
    let file: RunFile = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
        }
        None => RunFile::default(),
    };
    let mut c = file.run;
    if a.config.is_none() || a.task.is_some() {
        c.task = a.task.ok_or_else(|| Failure::usage("--task is required"))?;
    }
    if let Some(t) = &a.tests {
        c.tests = t.clone();
    }
    c.samples = a.samples.or(c.samples).or(Some(DEFAULT_SAMPLES));
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(e) = a.estimator {
        c.estimator.mode = match e {
            EstimatorArg::Exact => EstimatorMode::Exact,
            EstimatorArg::Permutation => EstimatorMode::Permutation,
        };
    }
    if let Some(m) = a.permutations {
        c.estimator.num_permutations = m;
    }
    if let Some(l) = a.exact_limit {
        c.estimator.exact_limit = l;
    }
    if let Some(p) = a.profile {
        c.profile = TemplateProfile::new(match p {
            ProfileArg::Base => TemplateStyle::Base,
            ProfileArg::ChatInstTags => TemplateStyle::ChatInstTags,
            ProfileArg::ChatUserAssistant => TemplateStyle::ChatUserAssistant,
        });
    }
    if let Some(m) = a.answer_mode {
        c.answer_mode = match m {
            AnswerArg::Constrained => AnswerMode::Constrained,
            AnswerArg::FreeText => AnswerMode::FreeText,
        };
    }
    if let Some(n) = a.max_new_tokens {
        c.generation.max_new_tokens = n;
    }
    if let Some(t) = a.temperature {
        c.generation.temperature = t;
    }
    if let Some(w) = a.workers {
        c.workers = w;
    }
    c.record_timing |= a.timing;
    let data = |e: Error| Failure::from(e);
    if let Some(p) = &a.insertion_lexicon {
        c.behavioral.insertion_lexicon = load_lexicon(p).map_err(data)?;
    }
    if let Some(p) = &a.antonyms {
        c.behavioral.corruptor.antonyms = load_pairs(p).map_err(data)?;
    }
    if let Some(p) = &a.synonyms {
        c.behavioral.paraphraser.synonyms = load_pairs(p).map_err(data)?;
    }
    if let Some(p) = &a.bias_markers {
        c.behavioral.bias_markers = load_lexicon(p).map_err(data)?;
    }
    c.validate()?;
    let endpoint = a
        .endpoint
        .clone()
        .or(file.endpoint)
        .ok_or_else(|| Failure::usage(format!("no endpoint: pass --endpoint or set {ENDPOINT_ENV}")))?;
    let out = a.out.clone().or(file.out).ok_or_else(|| Failure::usage("--out is required"))?;
    Ok((c, endpoint, a.dataset.clone().or(file.dataset), out))
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (config, endpoint, dataset, results) = build_run(&a)?;
    let instances = match &dataset {
        Some(p) => load_dataset(p, config.task)?,
        None => synthetic_instances(config.task, config.samples.unwrap_or(DEFAULT_SAMPLES), config.seed),
    };
    let oracle = connect(&endpoint);
    let start = Instant::now();
    let o = run_suite(&instances, oracle.as_ref(), &config, &results)?;
    let _ = writeln!(
        out,
        "run {}: {} records ({} new, {} resumed), {} with errors, {:.1}s\nresults: {}\nmanifest: {}",
        o.manifest.run_id,
        o.written + o.resumed,
        o.written,
        o.resumed,
        o.with_errors,
        start.elapsed().as_secs_f64(),
        o.results_path.display(),
        o.manifest_path.display()
    );
    Ok(if o.with_errors > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::from(Error::from(e))),
        None => out.write_all(text.as_bytes()).map_err(|e| Failure::from(Error::from(e))),
    }
}

fn read_results(path: &Path) -> Result<Vec<crate::harness::SampleRecord>, Failure> {
    load_records(path).map_err(|e| match e {
        Error::Io(m) => Failure { code: EXIT_DATA, message: format!("{}: {m}", path.display()) },
        other => Failure { code: EXIT_DATA, message: format!("{}: {other}", path.display()) },
    })
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let records = read_results(&a.results)?;
    if records.is_empty() {
        return Err(Failure { code: EXIT_DATA, message: format!("{}: no records", a.results.display()) });
    }
    let repeats = a.repeat.iter().map(|p| read_results(p)).collect::<Result<Vec<_>, _>>()?;
    let summaries = summarize(&records, &repeats, a.threshold);
    let matrix = a.correlate.then(|| correlation_matrix(&records));
    let format = match a.format {
        FormatArg::Text => ReportFormat::Text,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Html => ReportFormat::Html,
    };
    let text = render_report(&summaries, accuracy(&records), matrix.as_ref(), format)?;
    emit(out, a.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn cmd_heatmap(a: HeatmapArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let records = read_results(&a.results)?;
    let record = match &a.id {
        Some(id) => records
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| Failure::usage(format!("no sample with id {id:?}")))?,
        None => records
            .iter()
            .find(|r| r.cc_shap_posthoc.is_some() || r.cc_shap_cot.is_some())
            .ok_or_else(|| Failure::from(Error::MissingCCShap))?,
    };
    let format = match a.format {
        HeatFormatArg::Text => ReportFormat::Text,
        HeatFormatArg::Html => ReportFormat::Html,
    };
    emit(out, a.out.as_deref(), &heatmap(record, format)?)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let fault = a.inject_fault.map(|FaultArg::Efficiency| Fault::Efficiency);
    let start = Instant::now();
    let results = run_properties(a.exact_limit, a.seed, fault);
    for r in &results {
        let _ = match &r.failure {
            None => writeln!(out, "ok    {} ({} cases)", r.name, r.cases),
            Some(f) => writeln!(out, "FAIL  {}: {f}", r.name),
        };
    }
    let _ = writeln!(out, "{:.2}s", start.elapsed().as_secs_f64());
    match results.iter().find(|r| !r.passed()) {
        Some(r) => Err(Failure { code: EXIT_VERIFY_FAILED, message: format!("property {} failed", r.name) }),
        None => Ok(EXIT_OK),
    }
}
