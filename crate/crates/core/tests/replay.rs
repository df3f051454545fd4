use phasecluster::harness::{
    load_records, read_sweep_json, run_sweep_with, run_trial, save_records, write_sweep_csv,
    write_sweep_json, Execution, MethodSpec, StrengthGrid, SweepSpec, TrialSpec,
};
use phasecluster::metrics::RecoveryNorm;
use phasecluster::model::{ArwParams, NoiseSpec};
use phasecluster::Error;

fn trial(seed: u64) -> TrialSpec {
    TrialSpec {
        params: ArwParams::log_adjusted(600, 0.6, 0.5, 0.6),
        noise: NoiseSpec::White,
        methods: vec![
            MethodSpec::SimpleAgg,
            MethodSpec::IfPca { q: None },
            MethodSpec::SaStar,
            MethodSpec::SignedPca,
            MethodSpec::Hc,
            MethodSpec::ClusterThenRecover { q: Some(0.4) },
        ],
        seed,
        recovery_norm: RecoveryNorm::Calibrated,
    }
}

#[test]
fn saved_records_replay_to_identical_losses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.jsonl");
    let specs: Vec<TrialSpec> = (0..3).map(trial).collect();
    let records: Vec<_> = specs.iter().map(|s| run_trial(s).unwrap()).collect();
    save_records(&path, &records).unwrap();

    let loaded = load_records(&path).unwrap();
    assert_eq!(loaded, records);
    for (spec, rec) in specs.iter().zip(&loaded) {
        assert_eq!(rec.spec_hash, spec.hash());
        let again = run_trial(spec).unwrap();
        for (a, b) in again.outcomes.iter().zip(&rec.outcomes) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.losses, b.losses);
            assert_eq!(a.tests, b.tests);
        }
    }
}

#[test]
fn corrupt_record_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.jsonl");
    let rec = run_trial(&trial(1)).unwrap();
    save_records(&path, &[rec]).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("\n{\"spec_hash\": \"x\"}\n");
    std::fs::write(&path, text).unwrap();
    match load_records(&path) {
        Err(Error::Parse { line, field, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(field, "seed");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn sweep_files_round_trip() {
    let spec = SweepSpec {
        p: 300,
        theta: 0.6,
        betas: vec![0.3, 0.6],
        strengths: StrengthGrid::R { values: vec![0.2, 0.8] },
        sign_mix: 0.0,
        reps: 2,
        methods: vec![MethodSpec::IfPca { q: None }, MethodSpec::TestSimpleAgg],
        master_seed: 4,
        noise: NoiseSpec::White,
        recovery_norm: RecoveryNorm::Calibrated,
        max_trials: 100,
        output: None,
    };
    let out = run_sweep_with(&spec, Execution::Serial).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("s.json");
    write_sweep_json(&json, &out).unwrap();
    assert_eq!(read_sweep_json(&json).unwrap(), out);

    let csv = dir.path().join("s.csv");
    write_sweep_csv(&csv, &out.results).unwrap();
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(reader.records().count(), spec.cell_count());
}

#[test]
fn sweep_over_budget_is_rejected() {
    let spec = SweepSpec {
        p: 300,
        theta: 0.6,
        betas: vec![0.3; 10],
        strengths: StrengthGrid::Alpha { values: vec![0.1; 10] },
        sign_mix: 0.0,
        reps: 10,
        methods: vec![MethodSpec::SimpleAgg],
        master_seed: 0,
        noise: NoiseSpec::White,
        recovery_norm: RecoveryNorm::Calibrated,
        max_trials: 999,
        output: None,
    };
    assert!(matches!(run_sweep_with(&spec, Execution::Serial), Err(Error::InvalidArgument(_))));
}
