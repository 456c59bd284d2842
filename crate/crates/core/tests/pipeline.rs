use gmcs::compose::{parallel_build, CoresetTree, ParallelMode, TreeParams};
use gmcs::coreset::build_coreset_with_report;
use gmcs::dataset::{generate_gmm_sample, preset, Preset};
use gmcs::eval::{rows_to_csv, run_eval, EvalConfig, Method, CSV_HEADER};
use gmcs::gmm::{fit_best_of, negative_log_likelihood, relative_error_eta, theorem14_check};
use gmcs::seeding::{adaptive_bicriteria_traced, adaptive_sample_size};
use gmcs::{rng, CoresetParams, EmConfig, PointSet, SeedingMode};

fn sample(n: usize, seed: u64) -> gmcs::DataSet {
    let theta = preset(Preset::SphericalK3, 0, None, 0.001).unwrap();
    generate_gmm_sample(&theta, n, seed).unwrap()
}

#[test]
fn coreset_fit_is_close_to_full_fit() {
    let x = sample(20_000, 1);
    let params = CoresetParams::new(3, 1000);
    let (c, report) = build_coreset_with_report(&x, &params, &mut rng::from_seed(1)).unwrap();
    assert!(report.identity_residual < 1e-9);
    let cfg = EmConfig::new(3, 0.001);
    let full = fit_best_of(&x, &cfg, 3, 2).unwrap();
    let small = fit_best_of(&c, &cfg, 3, 2).unwrap();
    let base = negative_log_likelihood(&x, &full.theta).unwrap();
    let cand = negative_log_likelihood(&x, &small.theta).unwrap();
    let eta = relative_error_eta(cand, base).unwrap();
    assert!(eta < 0.01, "eta {eta}");

    let check = theorem14_check(&x, &c, &full.theta).unwrap();
    assert!(check.ratio < 0.05, "{check:?}");
}

#[test]
fn adaptive_seeding_feeds_a_valid_coreset() {
    let x = sample(5000, 2);
    let (b, steps) = adaptive_bicriteria_traced(&x, 3, 0.1, None, &mut rng::from_seed(3)).unwrap();
    let bound = (x.len() as f64 / adaptive_sample_size(2, 3, 0.1).unwrap() as f64)
        .log2()
        .ceil() as usize
        + 1;
    assert!(steps.len() <= bound, "{} > {bound}", steps.len());
    for s in &steps {
        assert!(s.max_removed_dist <= s.min_retained_dist);
    }
    assert!(b.cost > 0.0);

    let mut params = CoresetParams::new(3, 400);
    params.seeding = SeedingMode::Adaptive;
    let (c, _) = build_coreset_with_report(&x, &params, &mut rng::from_seed(3)).unwrap();
    let total = c.weights().iter().sum::<f64>();
    assert!(
        (total / x.len() as f64 - 1.0).abs() < 0.2,
        "total weight {total}"
    );
}

#[test]
fn stream_and_parallel_agree_on_totals() {
    let x = sample(1 << 13, 4);
    let mut tree = CoresetTree::new(TreeParams::new(3, 256, 4), 2).unwrap();
    tree.extend(&x).unwrap();
    let (streamed, report) = tree.finalize(256).unwrap();
    assert!(streamed.len() <= 256);
    assert_eq!(streamed.meta.source_n, x.len() as u64);
    assert!(report.epsilon > 0.0);

    for mode in [ParallelMode::Tree, ParallelMode::UnionThenCompress] {
        let (c, rep) = parallel_build(&x, 4, &CoresetParams::new(3, 256), 4, mode).unwrap();
        assert_eq!(rep.partitions, 4);
        assert!(c.len() <= 256);
        assert_eq!(c.meta.source_n, x.len() as u64);
    }
}

#[test]
fn eval_table_has_both_arms() {
    let x = sample(4000, 5);
    let mut cfg = EvalConfig::new(3, vec![200, 400], 5);
    cfg.trials = 4;
    cfg.baseline_restarts = 2;
    cfg.probe_thetas = 5;
    let out = run_eval(&x, &cfg).unwrap();
    assert_eq!(out.rows.len(), 4);
    assert_eq!(out.trials.len(), 16);
    assert_eq!(out.n_train + out.n_holdout, x.len());
    for m in [200, 400] {
        for method in [Method::Coreset, Method::Uniform] {
            let row = out
                .rows
                .iter()
                .find(|r| r.m == m && r.method == method)
                .unwrap();
            assert!(row.median_eta.is_finite() && row.median_eta >= 0.0);
            assert!(row.p90_eta >= row.median_eta);
        }
    }
    let csv = rows_to_csv(&out.rows);
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn full_size_sample_matches_baseline() {
    let x = sample(1000, 6);
    let mut cfg = EvalConfig::new(3, vec![800], 6);
    cfg.trials = 2;
    cfg.baseline_restarts = 3;
    cfg.fit_restarts = 3;
    cfg.probe_thetas = 0;
    let out = run_eval(&x, &cfg).unwrap();
    let u = out
        .rows
        .iter()
        .find(|r| r.method == Method::Uniform)
        .unwrap();
    assert!(u.median_eta < 1e-3, "{}", u.median_eta);
}
