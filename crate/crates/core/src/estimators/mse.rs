use crate::error::{Error, Result};

/// Replicated estimates of one functional by one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimates {
    pub method: String,
    pub values: Vec<f64>,
    /// Cost per replication used for the time adjustment.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MseRow {
    pub method: String,
    pub mse: f64,
    pub relative_mse: f64,
    pub time_adjusted_relative_mse: f64,
}

/// Mean squared error of each method against `truth`, relative to `reference`.
/// The time-adjusted column multiplies by `cost / cost_reference`.
pub fn mse_table(estimates: &[MethodEstimates], truth: f64, reference: &str) -> Result<Vec<MseRow>> {
    let reference_row = estimates
        .iter()
        .find(|e| e.method == reference)
        .ok_or_else(|| Error::InvalidInput(format!("reference method `{reference}` is missing")))?;
    for e in estimates {
        if e.values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "method `{}` has {} replications; at least 2 are needed",
                e.method,
                e.values.len()
            )));
        }
    }
    let mse = |v: &[f64]| v.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / v.len() as f64;
    let ref_mse = mse(&reference_row.values);
    let ref_cost = reference_row.cost;
    Ok(estimates
        .iter()
        .map(|e| {
            let m = mse(&e.values);
            let rel = m / ref_mse;
            MseRow {
                method: e.method.clone(),
                mse: m,
                relative_mse: rel,
                time_adjusted_relative_mse: rel * e.cost / ref_cost,
            }
        })
        .collect())
}
