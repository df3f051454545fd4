use nalgebra::DMatrix;
use phasecluster::prelude::*;
use phasecluster::spectral::{chi2_scores, select_columns};

#[test]
fn leading_vector_matches_nalgebra_svd_on_screened_data() {
    let params = ArwParams::log_adjusted(2000, 0.6, 0.5, 0.8);
    let data = gen_dataset(&params, &NoiseSpec::White, 21).unwrap();
    let screen = select_features(&chi2_scores(data.x.view()), 2000, 0.3).unwrap();
    let sub = select_columns(data.x.view(), &screen.selected);
    let pair = leading_left_singular(sub.view(), 1e-12, 5000).unwrap();

    let dm = DMatrix::from_fn(sub.nrows(), sub.ncols(), |i, j| sub[[i, j]]);
    let svd = dm.svd(true, false);
    let top = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    let u = svd.u.unwrap().column(top).into_owned();
    assert!((pair.value - svd.singular_values[top]).abs() < 1e-8 * pair.value);
    let dot: f64 = pair.vector.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    assert!(dot.abs() > 1.0 - 1e-8);
}

#[test]
fn noiseless_data_is_solved_by_every_clusterer() {
    let params = ArwParams::new(500, 0.6, 0.5, Strength::Fixed { tau: 3.0 });
    let data = gen_dataset(&params, &NoiseSpec::Noiseless, 2).unwrap();
    let truth = data.labels.as_ref().unwrap();
    let x = data.x.view();
    let labels = [
        simple_aggregation(x).labels,
        classical_pca(x).unwrap().labels,
        if_pca(x, 0.5).unwrap().labels,
    ];
    for est in labels {
        assert_eq!(hamming_clustering(&est, truth).unwrap(), 0.0);
    }
    let support = data.support.as_ref().unwrap();
    assert_eq!(&recover_sa_star(x).support, support);
}

#[test]
fn dataset_files_round_trip() {
    let params = ArwParams::alpha(200, 0.6, 0.4, 0.1).with_sign_mix(0.3);
    let data = gen_dataset(&params, &NoiseSpec::White, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let side = dir.path().join("d.json");
    data.write_csv(&csv).unwrap();
    data.write_sidecar(&side).unwrap();
    let back = phasecluster::model::Dataset::read(&csv, Some(&side)).unwrap();
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.support, data.support);
    assert_eq!(back.x, data.x);
}

#[test]
fn sweep_cells_carry_phase_labels_from_the_boundary() {
    let spec = SweepSpec {
        p: 300,
        theta: 0.6,
        betas: vec![0.2, 0.7],
        strengths: StrengthGrid::Relative {
            problem: Problem::HypothesisTesting,
            bound_kind: BoundKind::Statistical,
            variant: Variant::OneSided,
            multiples: vec![0.5, 1.5],
        },
        sign_mix: 0.0,
        reps: 1,
        methods: vec![MethodSpec::Hc],
        master_seed: 3,
        noise: NoiseSpec::White,
        recovery_norm: Default::default(),
        max_trials: 100,
        output: None,
    };
    let out = run_sweep(&spec).unwrap();
    for cell in &out.results.cells {
        let expected = if cell.strength_index == 0 { Region::Possible } else { Region::Impossible };
        assert_eq!(cell.region(Problem::HypothesisTesting, BoundKind::Statistical), Some(expected));
    }
}
