//! Proposal covariance for the random-walk samplers: a pilot file or a short
//! adaptive random-walk warm phase whose draws are discarded.

use std::path::Path;
use std::sync::Arc;

use miis_core::proposals::GaussianRandomWalk;
use miis_core::samplers::{run_chain, SamplerSpec};
use miis_core::{Stream, TargetDensity};

use crate::HarnessError;

/// Scale applied to the covariance estimate: `2.38^2 / d`.
pub fn rw_scale_factor(dim: usize) -> f64 {
    2.38 * 2.38 / dim as f64
}

const BATCH: usize = 100;
const TARGET_ACCEPTANCE: f64 = 0.234;

fn diagonal(var: &[f64]) -> Vec<f64> {
    let d = var.len();
    let mut out = vec![0.0; d * d];
    for (i, v) in var.iter().enumerate() {
        out[i * d + i] = *v;
    }
    out
}

fn variances(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    (0..d)
        .map(|c| {
            let mean = samples.iter().map(|s| s[c]).sum::<f64>() / n;
            samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Diagonal covariance estimate (row-major) from an adaptive random-walk run of
/// `iterations` steps started at `start`. The step scale is tuned towards an
/// acceptance rate of 0.234 and the per-coordinate variances are re-estimated from
/// the second half of the draws so far; the returned estimate uses the second half
/// of the whole run.
pub fn adaptive_pilot(
    target: &dyn TargetDensity,
    start: &[f64],
    iterations: usize,
    stream: Stream,
) -> Result<Vec<f64>, HarnessError> {
    let d = target.dim();
    if iterations < 4 * BATCH {
        return Err(HarnessError::Runtime(format!(
            "pilot needs at least {} iterations (got {iterations})",
            4 * BATCH
        )));
    }
    let mut var = vec![0.01; d];
    let mut lambda = rw_scale_factor(d);
    let mut y = start.to_vec();
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(iterations);
    let batches = iterations.div_ceil(BATCH);
    for b in 0..batches {
        let len = BATCH.min(iterations - b * BATCH);
        let cov: Vec<f64> = diagonal(&var).iter().map(|v| v * lambda).collect();
        let kernel = GaussianRandomWalk::new(d, cov)?;
        let trace = run_chain(
            &SamplerSpec::Rwm(Arc::new(kernel)),
            target,
            &[],
            &y,
            len,
            0,
            stream.child(b as u64),
        )
        .map_err(|e| HarnessError::Runtime(format!("pilot run failed: {e}")))?;
        let acc = trace.acceptance_rate();
        y = trace.states.last().expect("nonempty batch").clone();
        samples.extend(trace.states);
        lambda *= (3.0 * (acc - TARGET_ACCEPTANCE)).exp();
        let half = &samples[samples.len() / 2..];
        if half.len() >= 2 * BATCH {
            let v = variances(half);
            if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
                // the scale was tuned for the old variances; carry it over relatively
                let ratio = var.iter().zip(&v).map(|(a, b)| b / a).sum::<f64>() / d as f64;
                var = v;
                lambda /= ratio;
                lambda = lambda.clamp(1e-3, 1e3);
            }
        }
    }
    let v = variances(&samples[samples.len() / 2..]);
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(HarnessError::Runtime(format!(
            "pilot chain did not move in every coordinate (variances {v:?})"
        )));
    }
    Ok(diagonal(&v))
}

/// Reads a `d x d` covariance estimate stored as a JSON array of rows.
pub fn read_pilot_file(path: &Path, dim: usize) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Runtime(format!("cannot read pilot file {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Runtime(format!("pilot file {}: {e}", path.display())))?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(HarnessError::Runtime(format!(
            "pilot file {} must hold a {dim}x{dim} matrix",
            path.display()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    // validates symmetry and positive definiteness
    GaussianRandomWalk::new(dim, flat.clone())?;
    Ok(flat)
}
