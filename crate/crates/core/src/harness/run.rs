//! Running a test suite over a dataset and persisting per-sample records.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{answer, render_prompts, AnswerMode, GenerationConfig, PromptMode, TaskInstance, TaskKind, TemplateProfile, TemplateStyle};
use crate::behavioral::{BehavioralConfig, Probe, TestVerdict};
use crate::ccshap::{run_cot, run_posthoc, CCShapResult};
use crate::error::{Error, Result};
use crate::oracle::{CachedOracle, CountingOracle, Oracle};
use crate::seed;
use crate::shapley::EstimatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestName {
    #[serde(rename = "cc-shap-posthoc")]
    CcShapPosthoc,
    #[serde(rename = "cc-shap-cot")]
    CcShapCot,
    #[serde(rename = "counterfactual-edits")]
    CounterfactualEdits,
    #[serde(rename = "constructing-input")]
    ConstructInput,
    #[serde(rename = "biasing-features")]
    BiasingFeatures,
    #[serde(rename = "early-answering")]
    EarlyAnswering,
    #[serde(rename = "filler-tokens")]
    FillerTokens,
    #[serde(rename = "adding-mistakes")]
    AddingMistakes,
    #[serde(rename = "paraphrasing")]
    Paraphrasing,
}

impl TestName {
    pub const ALL: [TestName; 9] = [
        TestName::CcShapPosthoc,
        TestName::CcShapCot,
        TestName::CounterfactualEdits,
        TestName::ConstructInput,
        TestName::BiasingFeatures,
        TestName::EarlyAnswering,
        TestName::FillerTokens,
        TestName::AddingMistakes,
        TestName::Paraphrasing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestName::CcShapPosthoc => "cc-shap-posthoc",
            TestName::CcShapCot => "cc-shap-cot",
            TestName::CounterfactualEdits => "counterfactual-edits",
            TestName::ConstructInput => "constructing-input",
            TestName::BiasingFeatures => "biasing-features",
            TestName::EarlyAnswering => "early-answering",
            TestName::FillerTokens => "filler-tokens",
            TestName::AddingMistakes => "adding-mistakes",
            TestName::Paraphrasing => "paraphrasing",
        }
    }

    pub fn is_cc_shap(self) -> bool {
        matches!(self, TestName::CcShapPosthoc | TestName::CcShapCot)
    }

    pub fn applies_to(self, task: TaskKind) -> bool {
        self != TestName::ConstructInput || task == TaskKind::ComVE
    }

    /// Every test applicable to `task`, in canonical order.
    pub fn defaults_for(task: TaskKind) -> Vec<TestName> {
        TestName::ALL.into_iter().filter(|t| t.applies_to(task)).collect()
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown test {s:?}")))
    }
}

/// Everything that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: TaskKind,
    /// Empty means every test applicable to the task.
    pub tests: Vec<TestName>,
    /// Evaluate at most this many instances, from the start of the dataset.
    pub samples: Option<usize>,
    pub seed: u64,
    pub profile: TemplateProfile,
    pub estimator: EstimatorConfig,
    pub generation: GenerationConfig,
    pub answer_mode: AnswerMode,
    pub behavioral: BehavioralConfig,
    pub workers: usize,
    pub cache_capacity: usize,
    /// Record per-sample wall time. Off by default so result files are
    /// byte-identical across reruns.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::ComVE,
            tests: Vec::new(),
            samples: None,
            seed: 0,
            profile: TemplateProfile::new(TemplateStyle::Base),
            estimator: EstimatorConfig::default(),
            generation: GenerationConfig::default(),
            answer_mode: AnswerMode::default(),
            behavioral: BehavioralConfig::default(),
            workers: 1,
            cache_capacity: 65_536,
            record_timing: false,
        }
    }
}

impl RunConfig {
    /// Tests this run executes, in canonical order without duplicates.
    pub fn selected_tests(&self) -> Vec<TestName> {
        if self.tests.is_empty() {
            return TestName::defaults_for(self.task);
        }
        let mut t = self.tests.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.estimator.validate()?;
        self.behavioral.validate()?;
        if self.generation.max_new_tokens == 0 {
            return Err(Error::InvalidArgument("max_new_tokens must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if let Some(t) = self.selected_tests().into_iter().find(|t| !t.applies_to(self.task)) {
            return Err(Error::UnsupportedTask(format!("{t} does not apply to {}", self.task)));
        }
        Ok(())
    }

    /// Stable identifier derived from the configuration, model and data.
    fn run_id(&self, model: &str, dataset_sha256: &str) -> String {
        let mut c = self.clone();
        c.workers = 1;
        let key = format!("{}\n{model}\n{dataset_sha256}", serde_json::to_string(&c).unwrap());
        seed::sha256_hex(key.as_bytes())[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleError {
    pub test_name: String,
    pub error: String,
}

/// Everything recorded about one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub task: TaskKind,
    pub gold: String,
    /// The post-hoc prediction prompt.
    pub prompt: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc_shap_posthoc: Option<CCShapResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc_shap_cot: Option<CCShapResult>,
    #[serde(default)]
    pub verdicts: Vec<TestVerdict>,
    #[serde(default)]
    pub errors: Vec<SampleError>,
    /// Score and generate requests issued for this instance, counted before
    /// the cache.
    pub oracle_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl SampleRecord {
    pub fn cc_shap(&self, test: TestName) -> Option<&CCShapResult> {
        match test {
            TestName::CcShapPosthoc => self.cc_shap_posthoc.as_ref(),
            TestName::CcShapCot => self.cc_shap_cot.as_ref(),
            _ => None,
        }
    }

    pub fn verdict(&self, test: TestName) -> Option<&TestVerdict> {
        self.verdicts.iter().find(|v| v.test_name == test.as_str())
    }
}

/// Appends records as JSON lines, flushing after each so an interrupted run
/// leaves at most one partial line.
pub struct RecordSink {
    out: BufWriter<File>,
}

impl RecordSink {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordSink { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &SampleRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record).map_err(|e| Error::Io(e.to_string()))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a results file. Any malformed line is an error carrying its
/// 1-based line number.
pub fn load_records(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::ParseError { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Loads the complete records of an interrupted run, cutting off a trailing
/// partial line.
fn resume_records(path: &Path) -> Result<Vec<SampleRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = std::fs::read(path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
    }
    load_records(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHashes {
    pub dataset_sha256: String,
    pub config_sha256: String,
    pub templates_sha256: String,
    /// Covers every lexicon and marker list of the behavioral tests.
    pub lexicons_sha256: String,
    /// Filled in when the run completes.
    pub results_sha256: Option<String>,
}

/// Sidecar written next to the results as `<run_id>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub model_name: String,
    pub task: TaskKind,
    pub tests: Vec<TestName>,
    pub sample_count: usize,
    pub seed: u64,
    pub config: RunConfig,
    pub hashes: ArtifactHashes,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
    /// Records computed by this invocation.
    pub written: usize,
    /// Records found from an earlier, interrupted invocation.
    pub resumed: usize,
    /// Records with at least one failed test.
    pub with_errors: usize,
}

fn hash_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(seed::sha256_hex(&serde_json::to_vec(v).map_err(|e| Error::Io(e.to_string()))?))
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Only local I/O failures stop a run. Oracle failures after the upfront
/// reachability check belong to the sample that hit them.
fn is_fatal(e: &Error) -> bool {
    matches!(e, Error::Io(_))
}

fn evaluate(inst: &TaskInstance, config: &RunConfig, tests: &[TestName], shared: &dyn Oracle) -> Result<SampleRecord> {
    let start = Instant::now();
    let oracle = CountingOracle::new(shared);
    let s = seed::derive(config.seed, &inst.id);
    let gen = GenerationConfig { seed: s, ..config.generation.clone() };
    let estimator = EstimatorConfig { seed: s, ..config.estimator.clone() };
    let prompts = render_prompts(&oracle, inst, &config.profile, PromptMode::PostHoc)?;
    let label = answer(prompts.prediction(), prompts.labels(), &oracle, config.answer_mode)?;
    let mut record = SampleRecord {
        id: inst.id.clone(),
        task: inst.task,
        gold: inst.gold.clone(),
        prompt: prompts.prediction().text(),
        answer: label,
        cc_shap_posthoc: None,
        cc_shap_cot: None,
        verdicts: Vec::new(),
        errors: Vec::new(),
        oracle_calls: 0,
        wall_time_ms: None,
    };
    let probe = Probe {
        oracle: &oracle,
        profile: &config.profile,
        gen: &gen,
        answer_mode: config.answer_mode,
        config: &config.behavioral,
    };
    for &test in tests {
        let outcome = match test {
            TestName::CcShapPosthoc => run_posthoc(&prompts, &oracle, &estimator, &gen).map(|r| record.cc_shap_posthoc = Some(r)),
            TestName::CcShapCot => render_prompts(&oracle, inst, &config.profile, PromptMode::Cot)
                .and_then(|p| run_cot(&p, &oracle, &estimator, &gen))
                .map(|r| record.cc_shap_cot = Some(r)),
            _ => probe.run(test, inst, s).map(|v| record.verdicts.push(v)),
        };
        match outcome {
            Ok(()) => {}
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => record.errors.push(SampleError { test_name: test.as_str().into(), error: e.to_string() }),
        }
    }
    record.oracle_calls = oracle.calls();
    if config.record_timing {
        record.wall_time_ms = Some(start.elapsed().as_millis() as u64);
    }
    Ok(record)
}

/// Runs the configured tests over `instances`, appending one record per
/// instance to `results_path` in dataset order, and writes the manifest next
/// to it as `<run_id>.manifest.json`.
///
/// Instances are evaluated in parallel on `workers` threads behind a shared
/// response cache. The oracle must answer `info` up front; after that, a
/// failure on one instance is recorded in that instance's `errors` and the
/// run goes on. Rerunning an interrupted run with the same inputs picks up
/// after the last complete record.
pub fn run_suite(
    instances: &[TaskInstance],
    oracle: &dyn Oracle,
    config: &RunConfig,
    results_path: &Path,
) -> Result<RunOutcome> {
    config.validate()?;
    if let Some(i) = instances.iter().find(|i| i.task != config.task) {
        return Err(Error::SchemaError(format!("task of instance {}", i.id)));
    }
    let instances = &instances[..config.samples.unwrap_or(instances.len()).min(instances.len())];
    let tests = config.selected_tests();
    let started_at_unix = unix_now();
    let info = oracle.info()?;
    let dataset_json = serde_json::to_vec(instances).map_err(|e| Error::Io(e.to_string()))?;
    let dataset_sha256 = seed::sha256_hex(&dataset_json);
    let run_id = config.run_id(&info.model_name, &dataset_sha256);
    let out_dir = results_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;
    let results_path = results_path.to_path_buf();
    let manifest_path = out_dir.join(format!("{run_id}.manifest.json"));

    let mut manifest = RunManifest {
        run_id,
        model_name: info.model_name,
        task: config.task,
        tests: tests.clone(),
        sample_count: instances.len(),
        seed: config.seed,
        config: config.clone(),
        hashes: ArtifactHashes {
            dataset_sha256,
            config_sha256: hash_json(config)?,
            templates_sha256: hash_json(&config.profile)?,
            lexicons_sha256: hash_json(&config.behavioral)?,
            results_sha256: None,
        },
        started_at_unix,
        finished_at_unix: None,
    };

    let done = resume_records(&results_path)?;
    let resumed = done.len();
    // Records may only be resumed under the manifest of the run that wrote
    // them; the run id covers config, model and data.
    let mismatch = (resumed > 0 && !manifest_path.exists())
        || resumed > instances.len()
        || done.iter().zip(instances).any(|(r, i)| r.id != i.id);
    if mismatch {
        return Err(Error::SchemaError(format!("{} belongs to a different run", results_path.display())));
    }
    write_manifest(&manifest_path, &manifest)?;
    let mut with_errors = done.iter().filter(|r| !r.errors.is_empty()).count();

    let cached = CachedOracle::new(oracle, config.cache_capacity);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut sink = RecordSink::append(&results_path)?;
    let mut written = 0;
    for batch in instances[resumed..].chunks(config.workers * 4) {
        let results: Vec<Result<SampleRecord>> =
            pool.install(|| batch.par_iter().map(|inst| evaluate(inst, config, &tests, &cached)).collect());
        for (inst, r) in batch.iter().zip(results) {
            let record = match r {
                Ok(rec) => rec,
                Err(e) if is_fatal(&e) => return Err(e),
                // Failed before any test ran, e.g. the prompt is too long.
                Err(e) => SampleRecord {
                    id: inst.id.clone(),
                    task: inst.task,
                    gold: inst.gold.clone(),
                    prompt: String::new(),
                    answer: String::new(),
                    cc_shap_posthoc: None,
                    cc_shap_cot: None,
                    verdicts: Vec::new(),
                    errors: vec![SampleError { test_name: "prompt".into(), error: e.to_string() }],
                    oracle_calls: 0,
                    wall_time_ms: None,
                },
            };
            with_errors += usize::from(!record.errors.is_empty());
            sink.write(&record)?;
            written += 1;
        }
    }
    drop(sink);

    manifest.hashes.results_sha256 = Some(seed::sha256_hex(&std::fs::read(&results_path)?));
    manifest.finished_at_unix = Some(unix_now());
    write_manifest(&manifest_path, &manifest)?;
    Ok(RunOutcome { manifest, results_path, manifest_path, written, resumed, with_errors })
}
