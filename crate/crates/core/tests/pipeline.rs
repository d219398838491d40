use std::fs;
use std::path::Path;

use qlatent::datagen::{make_blobs, BlobSpec};
use qlatent::persist::ModelDump;
use qlatent::pipeline::{
    self, DataSource, ErrorCategory, ExperimentConfig, LatentTier, RunStatus, SplitSizes, StageThrough, FAILED_MARKER,
};

fn smoke(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 1,
        data: DataSource::Blobs(BlobSpec { n_classes: 3, dim: 6, samples_per_class: 12, seed: 3, ..Default::default() }),
        splits: SplitSizes { train: 6, val: 3, test: 3 },
        d_pca: 4,
        d_out: 2,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    };
    cfg.qka.tier = LatentTier::Pca;
    cfg.qka.spsa.maxiter = 2;
    cfg
}

fn report_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn minimal_run_emits_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline::run(&smoke(dir.path())).unwrap();
    assert_eq!(report.status, RunStatus::Ok);
    let json = report_json(dir.path());
    for key in ["data", "baselines", "qka", "qsvc"] {
        assert!(!json[key].is_null(), "{key} missing");
    }
    assert_eq!(json["baselines"].as_array().unwrap().len(), 4);
    assert_eq!(json["qka"]["iterations"], 2);
    assert_eq!(json["qka"]["kernel_builds"], 1 + 2 * 3);
    for (_, name) in json["artifacts"].as_object().unwrap() {
        let name = name.as_str().expect("every artifact written in a full run");
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(!dir.path().join(FAILED_MARKER).exists());
}

#[test]
fn truncated_stages_leave_nulls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { stage_through: StageThrough::Slr, ..smoke(dir.path()) };
    pipeline::run(&cfg).unwrap();
    let json = report_json(dir.path());
    for key in ["baselines", "qka", "qsvc"] {
        assert!(json[key].is_null(), "{key} should be null");
    }
    assert!(json["leakage"]["scaler_after_fit"].is_null());
    assert!(json["artifacts"]["spsa_trace_jsonl"].is_null());
    assert!(!json["silhouette"]["train"]["lda"].is_null());

    let cfg = ExperimentConfig { stage_through: StageThrough::Qka, ..smoke(dir.path()) };
    pipeline::run(&cfg).unwrap();
    let json = report_json(dir.path());
    assert!(!json["qka"].is_null());
    assert!(json["qsvc"].is_null());
    let dump = ModelDump::load(dir.path().join("model.json")).unwrap();
    assert!(dump.scaler.is_some() && dump.qsvc.is_none());
}

#[test]
fn leakage_audit_and_projection_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline::run(&smoke(dir.path())).unwrap();
    assert_eq!(report.leakage.clean, Some(true));
    assert_eq!(report.leakage.slr_after_fit, report.leakage.slr_after_transform);
    let csv = fs::read_to_string(dir.path().join("projection_lda_train.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,label"));
    assert_eq!(lines.count(), report.data.as_ref().unwrap().train);
}

#[test]
fn saved_model_reproduces_test_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let report = pipeline::run(&cfg).unwrap();
    let dump = ModelDump::load(dir.path().join("model.json")).unwrap();
    let qsvc = dump.qsvc.expect("full run stores the classifier");
    assert_eq!(qsvc.theta, report.qka.as_ref().unwrap().theta);
    assert_eq!(qsvc.svm.pairs[0].model.n_train, report.data.as_ref().unwrap().train);
    // Reloaded kernel on the stored training latents matches the written Gram file.
    let k = qsvc.kernel.train_kernel(&qsvc.train_latents, &qsvc.theta).unwrap();
    let written =
        qlatent::qkernel::read_matrix_csv(&fs::read(dir.path().join("kernel_train.csv")).unwrap()[..]).unwrap();
    assert_eq!(k.values, written);
}

#[test]
fn csv_source_and_failure_reporting() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_blobs(&BlobSpec { n_classes: 3, dim: 5, samples_per_class: 10, seed: 8, ..Default::default() });
    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();

    let out = dir.path().join("ok");
    let mut cfg = ExperimentConfig { data: DataSource::Csv { path: csv.clone() }, ..smoke(&out) };
    cfg.stage_through = StageThrough::Aalr;
    pipeline::run(&cfg).unwrap();

    let bad_out = dir.path().join("bad");
    let bad = ExperimentConfig { d_out: 3, output_dir: bad_out.clone(), ..cfg.clone() };
    let err = pipeline::run(&bad).unwrap_err();
    assert_eq!(err.category, ErrorCategory::Config);
    assert_eq!(err.exit_code(), 2);
    assert!(bad_out.join(FAILED_MARKER).exists());
    let json = report_json(&bad_out);
    assert_eq!(json["status"], "failed");
    assert_eq!(json["failure"]["stage"], "load");

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "a,b\n1,2\n").unwrap();
    let broken = ExperimentConfig { data: DataSource::Csv { path: garbage }, output_dir: dir.path().join("g"), ..cfg };
    let err = pipeline::run(&broken).unwrap_err();
    assert_eq!(err.exit_code(), 3);

    // A clean rerun into the failed directory clears the marker.
    let fixed = ExperimentConfig { d_out: 2, ..bad };
    pipeline::run(&fixed).unwrap();
    assert!(!bad_out.join(FAILED_MARKER).exists());
}

#[test]
fn reruns_are_identical_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let a = pipeline::run(&cfg).unwrap();
    let b = pipeline::run(&cfg).unwrap();
    assert_eq!(a.without_timings().to_json(), b.without_timings().to_json());
    let c = pipeline::run(&ExperimentConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.qka.unwrap().theta, c.qka.unwrap().theta);
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let par = pipeline::run(&cfg).unwrap();
    let seq =
        pipeline::run(&ExperimentConfig { parallelism: qlatent::parallel::Parallelism::Sequential, ..cfg }).unwrap();
    assert_eq!(par.qka, seq.qka);
    assert_eq!(par.qsvc, seq.qsvc);
    assert_eq!(par.silhouette, seq.silhouette);
}
