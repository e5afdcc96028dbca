use conehull::dca::{self, BasisAccess, Ensemble, Mode, SolveConfig};
use conehull::matstore::SampledMatrix;
use conehull::snmf::{self, BenchConfig, NnlsConfig, SweepGrid};
use conehull::Error;
use nalgebra::DMatrix;

#[test]
fn noiseless_reconstruction_is_tight() {
    let inst = snmf::generate_synthetic(120, 80, 6, 0.0, 21).unwrap();
    let err = snmf::reconstruction_error(&inst.x, &inst.true_anchors, &NnlsConfig::default()).unwrap();
    assert!(err / inst.x.norm() < 1e-5, "{err}");
    let missing = &inst.true_anchors[1..];
    let worse = snmf::reconstruction_error(&inst.x, missing, &NnlsConfig::default()).unwrap();
    assert!(worse > err);
    let f = snmf::nnls_encode(&inst.x, &inst.true_anchors, &NnlsConfig::default()).unwrap();
    assert!(f.iter().all(|v| *v >= 0.0));
}

#[test]
fn exact_mode_finds_every_anchor_without_noise() {
    for seed in 0..3 {
        let inst = snmf::generate_synthetic(200, 100, 8, 0.0, seed).unwrap();
        let mut cfg = SolveConfig::new(8, Mode::Exact);
        cfg.p = Some(100);
        let set = dca::solve(&inst.store(), None, &cfg).unwrap();
        assert_eq!(set.sorted_indices(), inst.true_anchors);
        let total: f64 = set.scores.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn approximate_mode_finds_anchors_on_a_small_instance() {
    let inst = snmf::generate_synthetic(150, 100, 5, 0.0, 3).unwrap();
    let mut cfg = SolveConfig::new(5, Mode::Approx);
    cfg.p = Some(60);
    cfg.s = 4000;
    let set = dca::solve(&inst.store(), None, &cfg).unwrap();
    assert!(snmf::recovery_rate(&inst.true_anchors, &set.indices) >= 0.8);
    // Every vote went to a sampled Y index.
    for o in set.outcomes.iter().filter(|o| !o.degenerate) {
        assert!(o.y_counts.iter().any(|&(z, _)| z == o.anchor));
    }
}

#[test]
fn implicit_basis_access_agrees_in_distribution() {
    let inst = snmf::generate_synthetic(80, 60, 3, 0.0, 5).unwrap();
    let mut cfg = SolveConfig::new(3, Mode::Approx);
    cfg.p = Some(20);
    cfg.s = 2000;
    cfg.subproblem.post_select = conehull::sampler::PostSelectConfig::with_draws(1024, 1024);
    cfg.subproblem.estimator = conehull::estimators::EstimatorConfig::with_group_size(300, 0.05);
    cfg.basis_access = BasisAccess::Implicit;
    let implicit = dca::solve(&inst.store(), None, &cfg).unwrap();
    cfg.basis_access = BasisAccess::Materialized;
    let dense = dca::solve(&inst.store(), None, &cfg).unwrap();
    assert!(snmf::recovery_rate(&inst.true_anchors, &implicit.indices) >= 2.0 / 3.0);
    assert!(snmf::recovery_rate(&inst.true_anchors, &dense.indices) >= 2.0 / 3.0);
}

#[test]
fn separate_candidate_matrix() {
    // Y holds the anchors plus distractors inside their hull; X mixes anchors.
    let anchors = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 0.2, 0.0, 1.0, 0.0, 0.2, 0.0, 0.0, 1.0, 0.2]);
    let mut y = DMatrix::zeros(6, 4);
    y.view_mut((0, 0), (3, 4)).copy_from(&anchors);
    for r in 3..6 {
        let w = [0.2 * r as f64 / 6.0, 0.5, 0.5 - 0.2 * r as f64 / 6.0];
        for c in 0..4 {
            y[(r, c)] = (0..3).map(|a| w[a] * anchors[(a, c)]).sum();
        }
    }
    let x = DMatrix::from_row_slice(2, 4, &[0.5, 0.5, 0.0, 0.2, 0.0, 0.3, 0.7, 0.2]);
    let mut cfg = SolveConfig::new(3, Mode::Exact);
    cfg.p = Some(200);
    let set = dca::solve(&SampledMatrix::from_dense(&x), Some(&SampledMatrix::from_dense(&y)), &cfg).unwrap();
    assert_eq!(set.sorted_indices(), vec![0, 1, 2]);

    let narrow = SampledMatrix::from_dense(&DMatrix::zeros(2, 3));
    assert!(matches!(
        dca::solve(&narrow, Some(&SampledMatrix::from_dense(&y)), &cfg),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn solve_is_reproducible_across_worker_counts() {
    let inst = snmf::generate_synthetic(100, 60, 4, 0.1, 9).unwrap();
    let mut cfg = SolveConfig::new(4, Mode::Approx);
    cfg.p = Some(16);
    cfg.s = 1000;
    cfg.subproblem.estimator = conehull::estimators::EstimatorConfig::with_group_size(200, 0.05);
    cfg.workers = Some(1);
    let a = dca::solve(&inst.store(), None, &cfg).unwrap();
    cfg.workers = Some(3);
    let b = dca::solve(&inst.store(), None, &cfg).unwrap();
    assert_eq!(a.indices, b.indices);
    assert_eq!(a.outcomes, b.outcomes);
}

#[test]
fn every_ensemble_runs() {
    let inst = snmf::generate_synthetic(60, 30, 3, 0.0, 2).unwrap();
    for ens in [Ensemble::Gaussian, Ensemble::UnitBasis, Ensemble::DataRow, Ensemble::UniformNonneg] {
        let mut cfg = SolveConfig::new(3, Mode::Exact);
        cfg.ensemble = ens;
        cfg.p = Some(200);
        match dca::solve(&inst.store(), None, &cfg) {
            Ok(set) => assert_eq!(set.indices.len(), 3),
            // Nonnegative directions on nonnegative data can concentrate the votes.
            Err(Error::VoteShortfall { .. }) => assert_ne!(ens, Ensemble::Gaussian),
            Err(e) => panic!("{ens:?}: {e}"),
        }
    }
}

#[test]
fn sweep_summary_has_one_cell_per_grid_point() {
    let base = BenchConfig {
        n: 40,
        m: 20,
        k: 3,
        p: 20,
        mode: Mode::Exact,
        ..BenchConfig::default()
    };
    let grid = SweepGrid { s: vec![100, 200], mu: vec![0.0, 0.5, 2.0], seeds: 3 };
    let recs = snmf::sweep(&base, &grid).unwrap();
    assert_eq!(recs.len(), 18);
    let cells = snmf::summarize(&recs);
    assert_eq!(cells.len(), 6);
    assert!(cells.iter().all(|c| c.runs == 3));
    assert!(recs.iter().all(|r| (0.0..=1.0).contains(&r.rho)));
    // Replicate seeds are shared across cells.
    assert_eq!(recs[0].config.seed, recs[3].config.seed);
    assert!(snmf::sweep(&base, &SweepGrid { s: vec![], mu: vec![0.0], seeds: 1 }).is_err());
}
