//! Estimators computed from a [`ChainTrace`]: plain MC, the particle-reusing MIIS
//! estimator, Rao-Blackwellised block estimators and control variates, plus
//! diagnostics.

mod cv;
mod iact;
mod mse;
mod obm;

use std::collections::BTreeMap;

pub use cv::{
    control_variate_series, cv_estimate, cv_estimate_with_kappa, ControlVariate, ControlVariateSet, CvFit, CvSource,
    RIDGE_CONDITION,
};
pub use iact::{autocovariance, iact, IACT_FLOOR};
pub use mse::{mse_table, MethodEstimates, MseRow};
pub use obm::{default_batch_len, obm_covariance};

use crate::error::{Error, Result};
use crate::model::Functional;
use crate::samplers::ChainTrace;

/// `(1/M) sum_t f(y^(t))`.
pub fn mc_estimate(trace: &ChainTrace, f: &Functional) -> f64 {
    let m = trace.len() as f64;
    match trace.functional_index(f.name()) {
        Some(i) => trace.point_values[i].iter().sum::<f64>() / m,
        None => trace.states.iter().map(|y| f.eval(y)).sum::<f64>() / m,
    }
}

fn lookup(trace: &ChainTrace, name: &str) -> Result<usize> {
    trace
        .functional_index(name)
        .ok_or_else(|| Error::MissingEstimates(format!("functional `{name}` was not recorded")))
}

/// `(1/M) sum_t E_t(f)` over the per-iteration CIS estimates.
pub fn miis_estimate(trace: &ChainTrace, f: &Functional) -> Result<f64> {
    let i = lookup(trace, f.name())?;
    let est = trace
        .cis_estimates
        .as_ref()
        .ok_or_else(|| Error::MissingEstimates(format!("{:?} trace has no CIS estimates", trace.kind)))?;
    Ok(mean(&est[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSel {
    Block(usize),
    All,
}

/// Rao-Blackwellised estimate from block `s`, or the average over all blocks.
pub fn rb_estimate(trace: &ChainTrace, f: &Functional, sel: BlockSel) -> Result<f64> {
    let i = lookup(trace, f.name())?;
    let rb = trace
        .rb_estimates
        .as_ref()
        .ok_or_else(|| Error::MissingEstimates(format!("{:?} trace has no block estimates", trace.kind)))?;
    match sel {
        BlockSel::Block(s) => rb
            .get(s)
            .map(|b| mean(&b[i]))
            .ok_or_else(|| Error::InvalidInput(format!("block {s} does not exist"))),
        BlockSel::All => Ok(rb.iter().map(|b| mean(&b[i])).sum::<f64>() / rb.len() as f64),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FunctionalEstimates {
    pub mc: f64,
    pub miis: Option<f64>,
    pub rb_blocks: Option<Vec<f64>>,
    pub rb: Option<f64>,
    pub cv: Option<f64>,
    pub kappa: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostics {
    /// IACT of every state coordinate; `None` for a coordinate that never moved.
    pub iact: Vec<Option<f64>>,
    pub mean_iact: Option<f64>,
    pub acceptance: f64,
    pub density_evals: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimateReport {
    pub estimates: BTreeMap<String, FunctionalEstimates>,
    pub diagnostics: Diagnostics,
}

/// Every applicable estimator for every functional, plus diagnostics. Control
/// variates are fitted for the functionals named in `cv_sets`.
pub fn estimate_report(
    trace: &ChainTrace,
    functionals: &[Functional],
    cv_sets: &BTreeMap<String, ControlVariateSet>,
    batch_len: Option<usize>,
    wall_time_secs: f64,
) -> Result<EstimateReport> {
    let mut estimates = BTreeMap::new();
    for f in functionals {
        let miis = trace
            .cis_estimates
            .as_ref()
            .map(|_| miis_estimate(trace, f))
            .transpose()?;
        let rb_blocks = trace
            .num_blocks()
            .map(|d| {
                (0..d)
                    .map(|s| rb_estimate(trace, f, BlockSel::Block(s)))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let rb = rb_blocks.as_ref().map(|b| b.iter().sum::<f64>() / b.len() as f64);
        let (cv, kappa) = match cv_sets.get(f.name()) {
            Some(set) => {
                let fit = cv_estimate(trace, f, set, batch_len)?;
                (Some(fit.estimate), Some(fit.kappa))
            }
            None => (None, None),
        };
        estimates.insert(
            f.name().to_string(),
            FunctionalEstimates {
                mc: mc_estimate(trace, f),
                miis,
                rb_blocks,
                rb,
                cv,
                kappa,
            },
        );
    }
    let dim = trace.states.first().map_or(0, Vec::len);
    let iact_values: Vec<Option<f64>> = (0..dim)
        .map(|c| {
            let series = trace.coordinate(c);
            match iact(&series) {
                Ok(v) => Ok(Some(v)),
                Err(Error::DegenerateChain) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = iact_values.iter().flatten().copied().collect();
    let mean_iact = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    Ok(EstimateReport {
        estimates,
        diagnostics: Diagnostics {
            iact: iact_values,
            mean_iact,
            acceptance: trace.acceptance_rate(),
            density_evals: trace.density_evals,
            wall_time_secs,
        },
    })
}
