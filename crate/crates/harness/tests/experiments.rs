use std::collections::BTreeSet;
use std::time::Instant;

use miis_harness::bundle::{csv_string, read_csv, MethodRecord};
use miis_harness::run::{config_hash, resolve_threads};
use miis_harness::seeds::replication_seed;
use miis_harness::setup::estimand_catalogue;
use miis_harness::{parse_config, run_experiment, write_outputs, ExperimentConfig};

fn oracle_config(methods: &str, reps: usize, m: usize) -> ExperimentConfig {
    parse_config(&format!(
        r#"{{"experiment": "oracle", "M": {m}, "burn_in": 10, "replications": {reps}, "base_seed": 42,
            "methods": [{methods}], "output_dir": "unused"}}"#
    ))
    .unwrap()
}

fn without_timings(methods: &[MethodRecord]) -> Vec<MethodRecord> {
    let mut out = methods.to_vec();
    for rec in out.iter_mut().flat_map(|m| m.replications.iter_mut()) {
        if let Some(r) = rec.report.as_mut() {
            r.diagnostics.wall_time_secs = 0.0;
        }
    }
    out
}

const ONE: &str = r#"{"label": "miis", "sampler": {"kind": "miis-gibbs", "n": 3}, "reference": true}"#;

#[test]
fn oracle_smoke_run() {
    let cfg = oracle_config(ONE, 2, 100);
    let t = Instant::now();
    let bundle = run_experiment(&cfg, 1).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0);
    assert!(bundle.failures.is_empty());
    let estimands = estimand_catalogue(cfg.experiment);
    // mc, miis, rb, cv for one method
    assert_eq!(bundle.mse_table.len(), estimands.len() * 4);
    for q in &estimands {
        assert!(bundle
            .mse_table
            .iter()
            .any(|r| r.functional == q.name && r.method == "miis-cv"));
        let reference = bundle
            .mse_table
            .iter()
            .find(|r| r.functional == q.name && r.method == "miis-mc")
            .unwrap();
        assert!((reference.relative_mse - 1.0).abs() < 1e-12);
    }
    assert_eq!(bundle.methods[0].replications.len(), 2);
    for rec in &bundle.methods[0].replications {
        let report = rec.report.as_ref().unwrap();
        // N evals per block, two blocks
        assert_eq!(report.diagnostics.density_evals, (100 + 10) * 2 * 3);
        assert_eq!(rec.cost, report.diagnostics.density_evals as f64);
    }
}

#[test]
fn results_do_not_depend_on_threads() {
    let methods = format!(r#"{ONE}, {{"label": "mwg", "sampler": {{"kind": "mwg", "inner_repeats": 2}}}}"#);
    let cfg = oracle_config(&methods, 4, 300);
    let a = run_experiment(&cfg, 1).unwrap();
    let b = run_experiment(&cfg, 3).unwrap();
    assert_eq!(csv_string(&a.mse_table).unwrap(), csv_string(&b.mse_table).unwrap());
    assert_eq!(without_timings(&a.methods), without_timings(&b.methods));
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn seeds_are_distinct_and_init_is_shared() {
    let methods = format!(r#"{ONE}, {{"label": "mwg", "sampler": {{"kind": "mwg", "inner_repeats": 2}}}}"#);
    let cfg = oracle_config(&methods, 5, 50);
    let b = run_experiment(&cfg, 1).unwrap();
    let seeds: BTreeSet<u64> = b
        .methods
        .iter()
        .flat_map(|m| m.replications.iter().map(|r| r.seed))
        .collect();
    assert_eq!(seeds.len(), 10);
    for (r, rec) in b.methods[0].replications.iter().enumerate() {
        assert_eq!(rec.seed, replication_seed(42, "miis", r as u64));
        assert_eq!(rec.init, b.methods[1].replications[r].init);
    }
}

#[test]
fn config_hash_ignores_threads_only() {
    let mut a = oracle_config(ONE, 2, 100);
    let h = config_hash(&a);
    a.threads = Some(7);
    assert_eq!(config_hash(&a), h);
    a.base_seed += 1;
    assert_ne!(config_hash(&a), h);
    assert_eq!(h.len(), 64);
}

#[test]
fn thread_precedence() {
    std::env::remove_var("MIIS_THREADS");
    assert_eq!(resolve_threads(None, None).unwrap(), 1);
    assert_eq!(resolve_threads(Some(3), None).unwrap(), 3);
    assert_eq!(resolve_threads(Some(3), Some(5)).unwrap(), 5);
    assert!(resolve_threads(Some(0), None).is_err());
}

#[test]
fn written_outputs_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = oracle_config(ONE, 2, 100);
    let bundle = run_experiment(&cfg, 1).unwrap();
    write_outputs(&bundle, dir.path()).unwrap();
    assert_eq!(read_csv(&dir.path().join("mse_table.csv")).unwrap(), bundle.mse_table);
    let back = miis_harness::bundle::read_bundle(&dir.path().join("bundle.json")).unwrap();
    assert_eq!(back, bundle);
}

#[test]
fn bvn_truth_and_costs() {
    let cfg = parse_config(
        r#"{"experiment": "bvn", "model": {"rho": 0.5}, "M": 200, "burn_in": 20, "replications": 3,
            "base_seed": 9, "functionals": ["mean", "covariance"],
            "methods": [
              {"label": "gibbs", "sampler": {"kind": "gibbs-exact", "inner_repeats": 4}},
              {"label": "mwg", "sampler": {"kind": "mwg", "inner_repeats": 4}, "reference": true},
              {"label": "miis", "sampler": {"kind": "miis-gibbs", "n": 5}}
            ],
            "output_dir": "unused"}"#,
    )
    .unwrap();
    let b = run_experiment(&cfg, 1).unwrap();
    assert_eq!(b.truth[0]["mean"], 0.0);
    assert!((b.truth[0]["covariance"] - 0.5).abs() < 1e-15);
    let steps = 220.0 * 2.0;
    assert_eq!(b.methods[0].replications[0].cost, steps * 4.0);
    assert_eq!(b.methods[1].replications[0].cost, steps * 5.0);
    assert_eq!(b.methods[2].replications[0].cost, steps * 5.0);
    let rows: Vec<&str> = b
        .mse_table
        .iter()
        .filter(|r| r.functional == "mean")
        .map(|r| r.method.as_str())
        .collect();
    assert_eq!(
        rows,
        [
            "gibbs-mc",
            "gibbs-rb",
            "gibbs-cv",
            "mwg-mc",
            "miis-mc",
            "miis-miis",
            "miis-rb",
            "miis-cv"
        ]
    );
}

#[test]
fn mmpp_sim_small_run() {
    let cfg = parse_config(
        r#"{"experiment": "mmpp-sim", "model": {"psi": [10, 17], "q": [1, 1], "window": 20, "datasets": 2, "data_seed": 1},
            "M": 150, "burn_in": 20, "replications": 2, "base_seed": 4,
            "pilot": {"iterations": 400},
            "cost": {"model": "parallel-rounds", "workers": 4},
            "methods": [
              {"label": "rwm", "sampler": {"kind": "rwm"}, "reference": true},
              {"label": "miis-rw", "sampler": {"kind": "miis-random-walk", "n": 8}}
            ],
            "output_dir": "unused"}"#,
    )
    .unwrap();
    let b = run_experiment(&cfg, 2).unwrap();
    assert!(b.failures.is_empty(), "{:?}", b.failures);
    assert_eq!(b.datasets.len(), 2);
    assert_eq!(b.truth.len(), 2);
    for ds in &b.datasets {
        assert!(ds.analytic_truth.is_none());
        assert_eq!(ds.pilot_covariance.as_ref().unwrap().len(), 16);
    }
    assert_eq!(b.methods[1].replications.len(), 4);
    // seven new evals per step on four workers: two rounds
    assert_eq!(b.methods[1].replications[0].cost, 170.0 * 2.0);
    // one per step plus the starting point
    assert_eq!(b.methods[0].replications[0].cost, 171.0);
}
