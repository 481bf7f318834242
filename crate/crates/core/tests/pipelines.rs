mod common;

use std::fs;

use ccbank::ccshap::{run_cot, run_posthoc};
use ccbank::harness::{
    load_records, render_prompts, run_suite, synthetic_instances, GenerationConfig, PromptMode, RunConfig, TaskKind,
    TemplateProfile, TemplateStyle, TestName,
};
use ccbank::oracle::ToyModel;
use ccbank::shapley::EstimatorConfig;
use common::{calibration_instance, calibration_oracle, Relation};

fn calibrated(relation: Relation, mode: PromptMode, estimator: &EstimatorConfig) -> f64 {
    let oracle = calibration_oracle(relation);
    let profile = TemplateProfile::new(TemplateStyle::Base);
    let prompts = render_prompts(&oracle, &calibration_instance(), &profile, mode).unwrap();
    let gen = GenerationConfig::default();
    let result = match mode {
        PromptMode::PostHoc => run_posthoc(&prompts, &oracle, estimator, &gen),
        PromptMode::Cot => run_cot(&prompts, &oracle, estimator, &gen),
    };
    result.unwrap().score
}

#[test]
fn calibration_scores() {
    let estimators = [EstimatorConfig::exact(), EstimatorConfig::permutation(3, 5)];
    for mode in [PromptMode::PostHoc, PromptMode::Cot] {
        for est in &estimators {
            let s = calibrated(Relation::Identical, mode, est);
            assert!((s - 1.0).abs() < 1e-6, "{mode:?} {est:?}: {s}");
            let s = calibrated(Relation::Orthogonal, mode, est);
            assert!(s.abs() < 1e-2, "{mode:?} {est:?}: {s}");
            let s = calibrated(Relation::Negated, mode, est);
            assert!((s + 1.0).abs() < 1e-6, "{mode:?} {est:?}: {s}");
        }
    }
}

fn config(tests: Vec<TestName>, workers: usize) -> RunConfig {
    RunConfig { tests, seed: 21, workers, ..Default::default() }
}

fn config_for(task: TaskKind, tests: Vec<TestName>, workers: usize) -> RunConfig {
    RunConfig { task, ..config(tests, workers) }
}

#[test]
fn one_record_per_instance_in_dataset_order() {
    let instances = synthetic_instances(TaskKind::ComVE, 3, 21);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let cfg = config(vec![TestName::CcShapPosthoc, TestName::FillerTokens], 2);
    let out = run_suite(&instances, &ToyModel::new(), &cfg, &path).unwrap();
    assert_eq!((out.written, out.resumed), (3, 0));
    assert!(out.manifest_path.exists());
    assert!(out.manifest.finished_at_unix.is_some());
    assert!(out.manifest.hashes.results_sha256.is_some());

    let records = load_records(&path).unwrap();
    let ids: Vec<_> = records.iter().map(|r| r.id.as_str()).collect();
    let expected: Vec<_> = instances.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, expected);
    for r in &records {
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        let cc = r.cc_shap_posthoc.as_ref().unwrap();
        assert!((-1.0..=1.0).contains(&cc.score));
        assert_eq!(r.verdicts.len(), 1);
        assert_eq!(r.verdicts[0].test_name, "filler-tokens");
        assert!(r.oracle_calls > 0);
        assert!(r.wall_time_ms.is_none());
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let instances = synthetic_instances(TaskKind::ESNLI, 6, 4);
    let dir = tempfile::tempdir().unwrap();
    let tests = vec![TestName::CcShapPosthoc, TestName::CounterfactualEdits, TestName::EarlyAnswering];
    let mut outputs = Vec::new();
    for workers in [1, 3, 8] {
        let path = dir.path().join(format!("w{workers}/r.jsonl"));
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        run_suite(&instances, &ToyModel::new(), &config_for(TaskKind::ESNLI, tests.clone(), workers), &path).unwrap();
        outputs.push(fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn resume_after_interruption_matches_full_run() {
    let instances = synthetic_instances(TaskKind::BBHCausal, 5, 8);
    let cfg = config_for(TaskKind::BBHCausal, vec![TestName::CcShapPosthoc, TestName::BiasingFeatures], 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    run_suite(&instances, &ToyModel::new(), &cfg, &path).unwrap();
    let bytes = fs::read(&path).unwrap();

    // two complete lines and half of the third, as after a crash
    let mut ends = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1);
    let (second, third) = (ends.nth(1).unwrap(), ends.next().unwrap());
    fs::write(&path, &bytes[..(second + third) / 2]).unwrap();

    let resumed = run_suite(&instances, &ToyModel::new(), &cfg, &path).unwrap();
    assert_eq!((resumed.resumed, resumed.written), (2, 3));
    assert_eq!(fs::read(&path).unwrap(), bytes);
}

#[test]
fn resume_refuses_results_of_another_run() {
    let instances = synthetic_instances(TaskKind::ComVE, 3, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    run_suite(&instances, &ToyModel::new(), &config(vec![TestName::FillerTokens], 1), &path).unwrap();
    let lines: Vec<_> = fs::read_to_string(&path).unwrap().lines().take(1).map(|l| format!("{l}\n")).collect();
    fs::write(&path, lines.concat()).unwrap();
    // a different seed is a different run id, so no manifest vouches for the file
    let other = RunConfig { seed: 99, ..config(vec![TestName::FillerTokens], 1) };
    let err = run_suite(&instances, &ToyModel::new(), &other, &path).unwrap_err();
    assert!(matches!(err, ccbank::Error::SchemaError(_)), "{err:?}");
}

#[test]
fn oversized_prompt_fails_alone() {
    let mut instances = synthetic_instances(TaskKind::ComVE, 3, 2);
    instances[1].segments[0].text = "the ocean ".repeat(200);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let out = run_suite(&instances, &ToyModel::new(), &config(vec![TestName::CcShapPosthoc], 1), &path).unwrap();
    assert_eq!((out.written, out.with_errors), (3, 1));
    let records = load_records(&path).unwrap();
    assert!(records[1].errors[0].error.contains("context"), "{:?}", records[1].errors);
    assert!(records[0].errors.is_empty() && records[2].errors.is_empty());
}
