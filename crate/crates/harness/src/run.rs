//! Replication engine.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use miis_core::estimators::estimate_report;
use miis_core::samplers::{run_chain, SamplerKind};
use miis_core::Stream;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bundle::{
    aggregate, replication_cost, write_bundle, write_csv, DatasetRecord, Failure, MethodRecord, ReplicationRecord,
    ResultBundle,
};
use crate::config::{ExperimentConfig, ExperimentKind, InitConfig, InitKind};
use crate::pilot::{adaptive_pilot, read_pilot_file, rw_scale_factor};
use crate::seeds::{derive_seed, replication_seed};
use crate::setup::{base_functionals, build_datasets, build_sampler, resolve_method, selected_estimands, Dataset};
use crate::HarnessError;

/// Threads for a run: config, then the command line, then `MIIS_THREADS`.
pub fn resolve_threads(config: Option<usize>, cli: Option<usize>) -> Result<usize, HarnessError> {
    let env = match std::env::var("MIIS_THREADS") {
        Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
            HarnessError::Config(crate::config::ConfigError::new(
                "MIIS_THREADS",
                format!("not a thread count: `{v}`"),
            ))
        })?),
        _ => None,
    };
    let n = env.or(cli).or(config).unwrap_or(1);
    if n == 0 {
        return Err(HarnessError::Config(crate::config::ConfigError::new(
            "threads",
            "must be at least 1",
        )));
    }
    Ok(n)
}

/// Hex SHA-256 of the canonical JSON form of the config, ignoring the thread count
/// (which does not affect results).
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.threads = None;
    let text = serde_json::to_string(&c).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn init_point(cfg: &ExperimentConfig, ds: &Dataset, global_r: u64) -> Result<Vec<f64>, HarnessError> {
    let dim = ds.target.dim();
    let kind = cfg.init.clone().unwrap_or(InitConfig::Named(match cfg.experiment {
        ExperimentKind::Bvn => InitKind::Origin,
        ExperimentKind::MmppSim => InitKind::Truth,
        ExperimentKind::MmppData | ExperimentKind::Oracle => InitKind::PriorDraw,
    }));
    let point = match kind {
        InitConfig::Vector(v) => v,
        InitConfig::Named(InitKind::Origin) => vec![0.0; dim],
        InitConfig::Named(InitKind::Truth) => ds
            .truth_point
            .clone()
            .ok_or_else(|| HarnessError::Runtime("no true parameter for truth initialization".into()))?,
        InitConfig::Named(InitKind::PriorDraw) => {
            // the same draw for every method at a given replication
            let mut rng = Stream::new(derive_seed(cfg.base_seed, "init", global_r)).rng();
            if let Some(post) = &ds.posterior {
                post.sample_prior(&mut rng)
            } else {
                ds.target.sample_exact(&mut rng).ok_or_else(|| {
                    HarnessError::Runtime("target has no sampler for prior-draw initialization".into())
                })?
            }
        }
    };
    if point.len() != dim {
        return Err(HarnessError::Config(crate::config::ConfigError::new(
            "init",
            format!("initial vector has dimension {} but the target has {dim}", point.len()),
        )));
    }
    Ok(point)
}

fn pilot_covariance(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<f64>, HarnessError> {
    let dim = ds.target.dim();
    if let Some(file) = &cfg.pilot.file {
        return read_pilot_file(file, dim);
    }
    let start = match (&ds.truth_point, &cfg.init) {
        (_, Some(InitConfig::Vector(v))) => v.clone(),
        (Some(t), _) => t.clone(),
        (None, _) => init_point(cfg, ds, u64::MAX)?,
    };
    let stream = Stream::new(derive_seed(cfg.base_seed, "pilot", ds.index as u64));
    adaptive_pilot(ds.target.as_ref(), &start, cfg.pilot.iterations, stream)
}

struct Task {
    method: usize,
    dataset: usize,
    replication: usize,
}

/// Runs every method on every dataset for the configured number of replications,
/// on a pool of `threads` workers, and aggregates the MSE table.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ResultBundle, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let estimands = selected_estimands(cfg)?;
    let resolved = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| resolve_method(cfg, i, m, &estimands))
        .collect::<Result<Vec<_>, _>>()?;
    let functionals = base_functionals(cfg.experiment);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;

    pool.install(|| {
        let datasets = build_datasets(cfg, &estimands)?;
        let needs_pilot = cfg.methods.iter().any(|m| {
            matches!(m.sampler.kind, SamplerKind::Rwm | SamplerKind::MiisRandomWalk) && m.sampler.rw_scale.is_none()
        });
        let pilots: Vec<Option<Vec<f64>>> = if needs_pilot {
            datasets
                .par_iter()
                .map(|ds| pilot_covariance(cfg, ds).map(Some))
                .collect::<Result<_, _>>()?
        } else {
            vec![None; datasets.len()]
        };

        // samplers per (dataset, method)
        let mut samplers = Vec::with_capacity(datasets.len());
        for (ds, pilot) in datasets.iter().zip(&pilots) {
            let dim = ds.target.dim();
            let mut row = Vec::with_capacity(cfg.methods.len());
            for (i, m) in cfg.methods.iter().enumerate() {
                let cov: Option<Vec<f64>> = match (&m.sampler.rw_scale, pilot) {
                    (Some(rows), _) => {
                        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                            return Err(HarnessError::Config(crate::config::ConfigError::new(
                                format!("methods[{i}].sampler.rw_scale"),
                                format!("must be a {dim}x{dim} matrix"),
                            )));
                        }
                        Some(rows.iter().flatten().copied().collect())
                    }
                    (None, Some(p)) => Some(p.iter().map(|v| v * rw_scale_factor(dim)).collect()),
                    (None, None) => None,
                };
                row.push(build_sampler(cfg, i, ds, cov.as_deref())?);
            }
            samplers.push(row);
        }

        let tasks: Vec<Task> = (0..cfg.methods.len())
            .flat_map(|method| {
                (0..datasets.len()).flat_map(move |dataset| {
                    (0..cfg.replications).map(move |replication| Task {
                        method,
                        dataset,
                        replication,
                    })
                })
            })
            .collect();

        let records: Vec<(usize, ReplicationRecord)> = tasks
            .par_iter()
            .map(|t| {
                let ds = &datasets[t.dataset];
                let method = &resolved[t.method];
                let global_r = (t.dataset * cfg.replications + t.replication) as u64;
                let seed = replication_seed(cfg.base_seed, &method.label, global_r);
                let mut rec = ReplicationRecord {
                    dataset: t.dataset,
                    replication: t.replication,
                    seed,
                    init: Vec::new(),
                    cost: 0.0,
                    report: None,
                    error: None,
                };
                let outcome = (|| -> Result<_, HarnessError> {
                    rec.init = init_point(cfg, ds, global_r)?;
                    let clock = Instant::now();
                    let trace = run_chain(
                        &samplers[t.dataset][t.method],
                        ds.target.as_ref(),
                        &functionals,
                        &rec.init,
                        cfg.m,
                        cfg.burn_in,
                        Stream::new(seed),
                    )?;
                    let report = estimate_report(
                        &trace,
                        &functionals,
                        &method.cv_sets,
                        cfg.obm_batch,
                        clock.elapsed().as_secs_f64(),
                    )?;
                    let blocks = trace.num_blocks().unwrap_or(1) as u64;
                    let steps = (cfg.m + cfg.burn_in) as u64 * blocks;
                    let draws = cfg.methods[t.method].sampler.inner_repeats.unwrap_or(1) as u64;
                    Ok((replication_cost(cfg.cost, method.kind, &report, steps, draws), report))
                })();
                match outcome {
                    Ok((cost, report)) => {
                        rec.cost = cost;
                        rec.report = Some(report);
                    }
                    Err(e) => rec.error = Some(e.to_string()),
                }
                (t.method, rec)
            })
            .collect();

        let mut methods: Vec<MethodRecord> = resolved
            .iter()
            .map(|m| MethodRecord {
                label: m.label.clone(),
                kind: m.kind,
                estimators: m.estimators.clone(),
                replications: Vec::with_capacity(cfg.replications * datasets.len()),
            })
            .collect();
        let mut failures = Vec::new();
        for (mi, rec) in records {
            if let Some(msg) = &rec.error {
                failures.push(Failure {
                    method: methods[mi].label.clone(),
                    dataset: rec.dataset,
                    replication: rec.replication,
                    message: msg.clone(),
                });
            }
            methods[mi].replications.push(rec);
        }

        let dataset_records: Vec<DatasetRecord> = datasets
            .iter()
            .zip(&pilots)
            .map(|(ds, p)| DatasetRecord {
                index: ds.index,
                events: ds.events,
                analytic_truth: ds.analytic.clone(),
                pilot_covariance: p.clone(),
            })
            .collect();
        let (truth, mse_table) = if failures.is_empty() {
            aggregate(cfg, &dataset_records, &methods)?
        } else {
            // score what succeeded when possible; the run still fails
            aggregate(cfg, &dataset_records, &methods).unwrap_or_else(|_| (Vec::new(), Vec::new()))
        };
        Ok(ResultBundle {
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            threads,
            wall_time_secs: started.elapsed().as_secs_f64(),
            datasets: dataset_records,
            methods,
            truth,
            mse_table,
            failures,
        })
    })
}

/// Writes `bundle.json` and `mse_table.csv` into the config's output directory.
pub fn write_outputs(bundle: &ResultBundle, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("{}: {e}", dir.display())))?;
    write_bundle(bundle, &dir.join("bundle.json"))?;
    write_csv(&bundle.mse_table, &dir.join("mse_table.csv"))
}

/// Per-method diagnostics averaged over successful replications.
pub fn diagnostics_summary(bundle: &ResultBundle) -> BTreeMap<String, (Option<f64>, f64, f64, f64)> {
    let mut out = BTreeMap::new();
    for m in &bundle.methods {
        let ok: Vec<_> = m.replications.iter().filter_map(|r| r.report.as_ref()).collect();
        let n = ok.len().max(1) as f64;
        let iacts: Vec<f64> = ok.iter().filter_map(|r| r.diagnostics.mean_iact).collect();
        let iact = (!iacts.is_empty()).then(|| iacts.iter().sum::<f64>() / iacts.len() as f64);
        let acc = ok.iter().map(|r| r.diagnostics.acceptance).sum::<f64>() / n;
        let evals = ok.iter().map(|r| r.diagnostics.density_evals as f64).sum::<f64>() / n;
        let wall = ok.iter().map(|r| r.diagnostics.wall_time_secs).sum::<f64>() / n;
        out.insert(m.label.clone(), (iact, acc, evals, wall));
    }
    out
}
