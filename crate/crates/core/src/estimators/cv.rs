use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Functional;
use crate::samplers::ChainTrace;

use super::obm::{default_batch_len, obm_covariance};

/// Condition number above which the ridge is added.
pub const RIDGE_CONDITION: f64 = 1e12;

/// Where the conditional estimate of a control variate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvSource {
    /// The full-target CIS estimate (for MIIS within Gibbs, the block average).
    Full,
    /// The block-`s` conditional estimate.
    Block(usize),
}

/// One control variate `U_t(g) = g(y^(t)) - E_t(g)`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ControlVariate {
    pub g: String,
    pub source: CvSource,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlVariateSet {
    pub pairs: Vec<ControlVariate>,
}

impl ControlVariateSet {
    pub fn new(pairs: Vec<ControlVariate>) -> Self {
        ControlVariateSet { pairs }
    }

    pub fn single(g: impl Into<String>, source: CvSource) -> Self {
        ControlVariateSet {
            pairs: vec![ControlVariate { g: g.into(), source }],
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Fitted control-variate estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CvFit {
    pub estimate: f64,
    pub kappa: Vec<f64>,
    /// Whether the ridge was needed.
    pub ridged: bool,
}

/// The per-iteration control variates, one column per pair (`M x p`).
pub fn control_variate_series(trace: &ChainTrace, cvs: &ControlVariateSet) -> Result<DMatrix<f64>> {
    if cvs.is_empty() {
        return Err(Error::InvalidInput("empty control-variate set".into()));
    }
    let m = trace.len();
    let mut u = DMatrix::zeros(m, cvs.len());
    for (j, cv) in cvs.pairs.iter().enumerate() {
        let gi = trace
            .functional_index(&cv.g)
            .ok_or_else(|| Error::MissingEstimates(format!("functional `{}` is not registered", cv.g)))?;
        let cond: &[f64] = match cv.source {
            CvSource::Full => &trace
                .cis_estimates
                .as_ref()
                .ok_or_else(|| Error::MissingEstimates(format!("{:?} trace has no CIS estimates", trace.kind)))?[gi],
            CvSource::Block(s) => {
                let rb = trace
                    .rb_estimates
                    .as_ref()
                    .ok_or_else(|| Error::MissingEstimates(format!("{:?} trace has no block estimates", trace.kind)))?;
                &rb.get(s)
                    .ok_or_else(|| Error::MissingEstimates(format!("block {s} does not exist")))?[gi]
            }
        };
        for t in 0..m {
            u[(t, j)] = trace.point_values[gi][t] - cond[t];
        }
    }
    Ok(u)
}

fn f_series(trace: &ChainTrace, f: &Functional) -> Vec<f64> {
    match trace.functional_index(f.name()) {
        Some(i) => trace.point_values[i].clone(),
        None => trace.states.iter().map(|y| f.eval(y)).collect(),
    }
}

fn column_means(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(u.ncols(), (0..u.ncols()).map(|j| u.column(j).mean()))
}

/// `mc(f) - kappa^T mean(U)` with a given coefficient vector.
pub fn cv_estimate_with_kappa(
    trace: &ChainTrace,
    f: &Functional,
    cvs: &ControlVariateSet,
    kappa: &[f64],
) -> Result<f64> {
    let u = control_variate_series(trace, cvs)?;
    if kappa.len() != cvs.len() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients for {} control variates",
            kappa.len(),
            cvs.len()
        )));
    }
    let fs = f_series(trace, f);
    let mc = fs.iter().sum::<f64>() / fs.len() as f64;
    let ubar = column_means(&u);
    Ok(mc - kappa.iter().zip(ubar.iter()).map(|(k, u)| k * u).sum::<f64>())
}

/// Control-variate estimate with `kappa = Sigma_UU^{-1} Sigma_Uf` fitted from the
/// overlapping batch means covariance of `(U_1..U_p, f)`. A ridge of
/// `1e-8 tr(Sigma_UU) / p` is added when the condition number exceeds `1e12`.
pub fn cv_estimate(
    trace: &ChainTrace,
    f: &Functional,
    cvs: &ControlVariateSet,
    batch_len: Option<usize>,
) -> Result<CvFit> {
    let u = control_variate_series(trace, cvs)?;
    let m = u.nrows();
    let p = u.ncols();
    let fs = f_series(trace, f);
    let mut stacked = DMatrix::zeros(m, p + 1);
    stacked.view_mut((0, 0), (m, p)).copy_from(&u);
    for t in 0..m {
        stacked[(t, p)] = fs[t];
    }
    let b = batch_len.unwrap_or_else(|| default_batch_len(m));
    let sigma = obm_covariance(&stacked, b)?;
    let mut suu = sigma.view((0, 0), (p, p)).into_owned();
    let suf = sigma.view((0, p), (p, 1)).into_owned();
    let trace_uu = suu.trace();
    if !(trace_uu > 0.0) || !trace_uu.is_finite() {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let condition = |s: &DMatrix<f64>| {
        let ev = s.clone().symmetric_eigen().eigenvalues;
        let max = ev.max();
        let min = ev.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    };
    let mut ridged = false;
    if condition(&suu) > RIDGE_CONDITION {
        let ridge = 1e-8 * trace_uu / p as f64;
        for i in 0..p {
            suu[(i, i)] += ridge;
        }
        ridged = true;
        let c = condition(&suu);
        if c > RIDGE_CONDITION {
            return Err(Error::Singular { condition: c });
        }
    }
    let kappa = suu.cholesky().map(|ch| ch.solve(&suf)).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let kappa: Vec<f64> = kappa.iter().copied().collect();
    let mc = fs.iter().sum::<f64>() / m as f64;
    let ubar = column_means(&u);
    let estimate = mc - kappa.iter().zip(ubar.iter()).map(|(k, u)| k * u).sum::<f64>();
    Ok(CvFit {
        estimate,
        kappa,
        ridged,
    })
}
