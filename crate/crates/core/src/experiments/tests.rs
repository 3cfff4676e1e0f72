use super::*;
use crate::backend::BackendKind;
use crate::synthetic::SyntheticConfig;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        data: DataConfig::Synthetic {
            synthetic: SyntheticConfig { train_size: 400, validation_size: 120, ..SyntheticConfig::default() },
        },
        epsilons: vec![PrivacyBudget::Finite(0.0), PrivacyBudget::Finite(1.0), PrivacyBudget::Infinite],
        n: 16,
        test_size: 40,
        runs: 3,
        parallelism: 2,
        estimation: EstimationConfig { r: 40, seeds: 3 },
        ..ExperimentConfig::default()
    }
}

fn experiment() -> Experiment {
    Experiment::new(small_config()).unwrap()
}

#[test]
fn sweep_shape_and_baselines() {
    let e = experiment();
    let s = e.run_classification_sweep(16).unwrap();
    // 3 budgets + 3 baselines, 3 runs each.
    assert_eq!(s.rows.len(), 18);
    assert_eq!(s.summary.len(), 6);
    for r in &s.rows {
        assert!((0.0..=1.0).contains(&r.accuracy));
        assert_eq!(r.total, 40);
        assert_eq!(r.failures, 0);
    }
    let inf: Vec<_> = s.rows.iter().filter(|r| r.epsilon == Some(PrivacyBudget::Infinite)).collect();
    let icl: Vec<_> = s.rows.iter().filter(|r| r.setting == Setting::Icl).collect();
    assert_eq!(inf.len(), icl.len());
    for (a, b) in inf.iter().zip(&icl) {
        assert_eq!((a.run, a.seed, a.correct), (b.run, b.seed, b.correct));
    }
}

#[test]
fn summary_matches_rows() {
    let s = experiment().run_classification_sweep(16).unwrap();
    for sum in &s.summary {
        let acc: Vec<f64> = s
            .rows
            .iter()
            .filter(|r| r.setting == sum.setting && r.epsilon == sum.epsilon)
            .map(|r| r.accuracy)
            .collect();
        let m = acc.iter().sum::<f64>() / acc.len() as f64;
        let v = acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (acc.len() - 1) as f64;
        assert!((sum.mean - m).abs() < 1e-12);
        assert!((sum.std - v.sqrt()).abs() < 1e-12);
        assert_eq!(sum.runs, 3);
    }
}

#[test]
fn sweep_is_deterministic() {
    let a = experiment().run_classification_sweep(16).unwrap();
    let b = experiment().run_classification_sweep(16).unwrap();
    assert_eq!(a, b);
    let csv_a = ExperimentOutput::Sweep(a).results_csv().unwrap();
    let csv_b = ExperimentOutput::Sweep(b).results_csv().unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(csv_a.starts_with("setting,epsilon,n,run,seed,accuracy,correct,total,failures\n"));
}

#[test]
fn ablation_keeps_zsl_rows() {
    let e = experiment();
    let a = e.run_ablation(&[8, 16]).unwrap();
    assert_eq!(a.sweeps.len(), 2);
    let zsl = |s: &SweepResult| -> Vec<usize> {
        s.rows.iter().filter(|r| r.setting == Setting::Zsl).map(|r| r.correct).collect()
    };
    assert_eq!(zsl(&a.sweeps[0]), zsl(&a.sweeps[1]));
    assert!(e.run_ablation(&[10_000]).is_err());
}

#[test]
fn estimation_rows() {
    let c = experiment().run_estimation().unwrap();
    // One row per budget, method and seed.
    assert_eq!(c.reports.len(), 3 * 2 * 3);
    for r in c.reports.iter().filter(|r| r.method == crate::estimation::Method::Cf && r.epsilon.is_infinite()) {
        assert_eq!(r.raw_estimate, r.ground_truth);
    }
}

#[test]
fn mia_probe() {
    let e = experiment();
    let m = e.run_mia_probe(&[4, 16], 30).unwrap();
    assert_eq!(m.rows.len(), 60);
    assert!(m.rows.iter().all(|r| r.gap.is_finite() && r.gap.abs() <= 1.0));
    assert!(m.mean_gap(4).unwrap() > m.mean_gap(16).unwrap());
}

struct Fixed(usize);

impl Backend for Fixed {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
    fn classify(&self, _d: &DemonstrationSet, _q: &str) -> Result<PredictionOutcome, BackendError> {
        Ok(PredictionOutcome {
            label: crate::Label(self.0),
            probability: None,
            prompt: Some("p".into()),
            raw_response: Some("r".into()),
            latency: Duration::from_millis(3),
        })
    }
}

#[test]
fn probe_rejects_non_mock_backend() {
    let cfg = small_config();
    let task = TaskData::load(&cfg.task, &cfg.data).unwrap();
    let e = Experiment::with_backend(cfg, task, Box::new(Fixed(0))).unwrap();
    assert!(matches!(e.run_mia_probe(&[4], 10), Err(ExperimentError::Unsupported(_))));
}

#[test]
fn transcripts_recorded_for_prompted_backends() {
    let cfg = ExperimentConfig { runs: 1, ..small_config() };
    let task = TaskData::load(&cfg.task, &cfg.data).unwrap();
    let e = Experiment::with_backend(cfg, task, Box::new(Fixed(1))).unwrap();
    let s = e.run_classification_sweep(16).unwrap();
    assert_eq!(s.transcripts.len(), 6 * 40);
    assert!(s.transcripts.iter().all(|t| t.prompt == "p" && (t.latency_ms - 3.0).abs() < 1e-9));
}

/// Fails with a transport error after a fixed number of calls.
struct Dying {
    calls: AtomicUsize,
    after: usize,
}

impl Backend for Dying {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
    fn classify(&self, _d: &DemonstrationSet, _q: &str) -> Result<PredictionOutcome, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.after {
            return Err(BackendError::Transport("connection reset".into()));
        }
        Ok(PredictionOutcome {
            label: crate::Label(0),
            probability: None,
            prompt: None,
            raw_response: None,
            latency: Duration::ZERO,
        })
    }
}

#[test]
fn failing_sweep_returns_partial_rows() {
    let cfg = ExperimentConfig { parallelism: 1, ..small_config() };
    let task = TaskData::load(&cfg.task, &cfg.data).unwrap();
    let e = Experiment::with_backend(cfg, task, Box::new(Dying { calls: AtomicUsize::new(0), after: 100 })).unwrap();
    match e.run_classification_sweep(16) {
        Err(ExperimentError::Partial { completed, source }) => {
            // Two cells of 40 finished before the third failed.
            assert_eq!(completed.rows.len(), 2);
            assert!(matches!(*source, ExperimentError::Backend(BackendError::Transport(_))));
        }
        other => panic!("expected partial result, got {other:?}"),
    }
}

struct Unparseable;

impl Backend for Unparseable {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
    fn classify(&self, _d: &DemonstrationSet, _q: &str) -> Result<PredictionOutcome, BackendError> {
        Err(BackendError::Unparseable { prompt: "p".into(), response: "maybe".into(), latency: Duration::ZERO })
    }
}

#[test]
fn unparseable_answers_count_as_wrong() {
    let cfg = ExperimentConfig { runs: 1, ..small_config() };
    let task = TaskData::load(&cfg.task, &cfg.data).unwrap();
    let e = Experiment::with_backend(cfg, task, Box::new(Unparseable)).unwrap();
    let s = e.run_classification_sweep(16).unwrap();
    assert!(s.rows.iter().all(|r| r.accuracy == 0.0 && r.failures == 40));
    assert!(s.transcripts.iter().all(|t| t.unparseable && t.response == "maybe"));
}

#[test]
fn tune_seed_rules() {
    let e = experiment();
    let one = e.tune_seed(&[42]).unwrap();
    assert_eq!(one.best, 42);
    let many = e.tune_seed(&[5, 1, 3]).unwrap();
    assert_eq!(many, e.tune_seed(&[5, 1, 3]).unwrap());
    let best = many.scores.iter().map(|s| s.accuracy).fold(f64::MIN, f64::max);
    let smallest = many.scores.iter().filter(|s| s.accuracy == best).map(|s| s.seed).min().unwrap();
    assert_eq!(many.best, smallest);
    assert!(e.tune_seed(&[]).is_err());
}

#[test]
fn tune_seed_ties_go_to_smallest() {
    // A constant backend scores every seed the same.
    let cfg = small_config();
    let task = TaskData::load(&cfg.task, &cfg.data).unwrap();
    let e = Experiment::with_backend(cfg, task, Box::new(Fixed(1))).unwrap();
    assert_eq!(e.tune_seed(&[7, 3]).unwrap().best, 3);
}

#[test]
fn spearman_oracle() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
    // Ties: ranks [1.5, 1.5, 3] vs [1, 2, 3] give 0.866...
    let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, f64::INFINITY], &[0.2, 0.9]), Some(1.0));
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("out");
    let e = experiment();
    let s = e.run_classification_sweep(16).unwrap();
    let output = ExperimentOutput::Sweep(s.clone());
    let written = emit_report(&output, &e.config, &out).unwrap();
    assert_eq!(written.len(), 3);
    assert!(!out.join("transcripts.jsonl").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), s.summary.len());
    let config: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config, e.config);
}
