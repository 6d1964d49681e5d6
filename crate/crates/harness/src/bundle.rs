//! Result bundle, MSE table aggregation and the CSV format.

use std::collections::BTreeMap;
use std::path::Path;

use miis_core::estimators::{mse_table, EstimateReport, MethodEstimates};
use miis_core::samplers::SamplerKind;
use serde::{Deserialize, Serialize};

use crate::config::{CostModel, EstimatorKind, ExperimentConfig};
use crate::setup::{selected_estimands, Estimand};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub dataset: usize,
    pub replication: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    /// Cost under the configured cost model.
    pub cost: f64,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub label: String,
    pub kind: SamplerKind,
    pub estimators: Vec<EstimatorKind>,
    pub replications: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    /// Analytic estimand values; absent when the truth is pooled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_truth: Option<BTreeMap<String, f64>>,
    /// Covariance estimate the random-walk proposals were scaled from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_covariance: Option<Vec<f64>>,
}

/// One line of `mse_table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub functional: String,
    pub method: String,
    pub mse: f64,
    pub relative_mse: f64,
    pub time_adjusted_relative_mse: f64,
    pub mean_iact: Option<f64>,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub dataset: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub datasets: Vec<DatasetRecord>,
    pub methods: Vec<MethodRecord>,
    /// Per dataset, the truth each estimand was scored against.
    pub truth: Vec<BTreeMap<String, f64>>,
    pub mse_table: Vec<TableRow>,
    pub failures: Vec<Failure>,
}

/// Name of a table row: `<label>-<estimator>`.
pub fn row_name(label: &str, e: EstimatorKind) -> String {
    format!("{label}-{}", e.name())
}

fn estimator_value(report: &EstimateReport, base: &str, e: EstimatorKind) -> Option<f64> {
    let f = report.estimates.get(base)?;
    match e {
        EstimatorKind::Mc => Some(f.mc),
        EstimatorKind::Miis => f.miis,
        EstimatorKind::Rb => f.rb,
        EstimatorKind::Cv => f.cv,
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Replication cost under a cost model. `steps` counts block updates (iterations
/// times blocks). Exact Gibbs evaluates no densities; each of its `exact_draws` per
/// step is charged like one evaluation.
pub fn replication_cost(
    model: CostModel,
    kind: SamplerKind,
    report: &EstimateReport,
    steps: u64,
    exact_draws: u64,
) -> f64 {
    if kind == SamplerKind::GibbsExact {
        return (steps * exact_draws) as f64;
    }
    let evals = report.diagnostics.density_evals;
    match model {
        CostModel::DensityEvals => evals as f64,
        CostModel::ParallelRounds { workers } => {
            if !kind.is_miis() || steps == 0 {
                return evals as f64;
            }
            let per_step = (evals / steps).max(1);
            (steps * per_step.div_ceil(workers as u64)) as f64
        }
    }
}

/// Per-dataset truths and the aggregated table rows.
pub type Scored = (Vec<BTreeMap<String, f64>>, Vec<TableRow>);

/// Scores every (method, estimator) pair against the analytic or pooled truth.
/// Relative MSEs are computed per dataset and then averaged over datasets.
pub fn aggregate(
    config: &ExperimentConfig,
    datasets: &[DatasetRecord],
    methods: &[MethodRecord],
) -> Result<Scored, HarnessError> {
    let estimands = selected_estimands(config)?;
    let reference = config.reference_method();
    let reference_record = methods
        .iter()
        .find(|m| m.label == reference.label)
        .ok_or_else(|| HarnessError::Runtime("reference method missing from results".into()))?;
    let reference_row = row_name(&reference.label, reference_record.estimators[0]);

    let mut truths = Vec::with_capacity(datasets.len());
    // per estimand, per row: accumulated (mse, rel, time-adjusted) over datasets
    let mut sums: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); estimands.len()];
    for ds in datasets {
        let mut truth = BTreeMap::new();
        for (qi, q) in estimands.iter().enumerate() {
            let rows = values_for(q, ds.index, methods)?;
            let t = match &ds.analytic_truth {
                Some(a) => *a
                    .get(q.name)
                    .ok_or_else(|| HarnessError::Runtime(format!("no analytic truth for `{}`", q.name)))?,
                None => mean(rows.iter().flat_map(|r| r.values.iter().copied()))
                    .ok_or_else(|| HarnessError::Runtime("no estimates to pool".into()))?,
            };
            truth.insert(q.name.to_string(), t);
            let table = mse_table(&rows, t, &reference_row)?;
            if sums[qi].is_empty() {
                sums[qi] = vec![(0.0, 0.0, 0.0); table.len()];
            }
            for (acc, row) in sums[qi].iter_mut().zip(&table) {
                acc.0 += row.mse;
                acc.1 += row.relative_mse;
                acc.2 += row.time_adjusted_relative_mse;
            }
        }
        truths.push(truth);
    }

    let nd = datasets.len() as f64;
    let mut out = Vec::new();
    for (qi, q) in estimands.iter().enumerate() {
        let mut k = 0;
        for m in methods {
            let ok: Vec<&EstimateReport> = m.replications.iter().filter_map(|r| r.report.as_ref()).collect();
            let iact = mean(ok.iter().filter_map(|r| r.diagnostics.mean_iact));
            let acceptance = mean(ok.iter().map(|r| r.diagnostics.acceptance)).unwrap_or(f64::NAN);
            for e in &m.estimators {
                let (mse, rel, adj) = sums[qi][k];
                k += 1;
                out.push(TableRow {
                    functional: q.name.to_string(),
                    method: row_name(&m.label, *e),
                    mse: mse / nd,
                    relative_mse: rel / nd,
                    time_adjusted_relative_mse: adj / nd,
                    mean_iact: iact,
                    acceptance,
                });
            }
        }
    }
    Ok((truths, out))
}

fn values_for(q: &Estimand, dataset: usize, methods: &[MethodRecord]) -> Result<Vec<MethodEstimates>, HarnessError> {
    let mut rows = Vec::new();
    for m in methods {
        let reps: Vec<&ReplicationRecord> = m
            .replications
            .iter()
            .filter(|r| r.dataset == dataset && r.report.is_some())
            .collect();
        let cost = mean(reps.iter().map(|r| r.cost)).unwrap_or(f64::NAN);
        for e in &m.estimators {
            let values = reps
                .iter()
                .map(|r| {
                    let report = r.report.as_ref().expect("filtered");
                    q.combine(|b| estimator_value(report, b, *e)).ok_or_else(|| {
                        HarnessError::Runtime(format!(
                            "method `{}` has no `{}` estimate for `{}`",
                            m.label,
                            e.name(),
                            q.name
                        ))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(MethodEstimates {
                method: row_name(&m.label, *e),
                values,
                cost,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[TableRow], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, csv_string(rows)?).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

pub fn csv_string(rows: &[TableRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Runtime(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_csv(path: &Path) -> Result<Vec<TableRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<TableRow>, _>>()
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_bundle(bundle: &ResultBundle, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(bundle).map_err(|e| HarnessError::Runtime(format!("bundle: {e}")))?;
    std::fs::write(path, text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

pub fn read_bundle(path: &Path) -> Result<ResultBundle, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}
