//! Exact stationarity suite over enumerated discrete kernels.

use miis_core::models::{discrete_oracle_kernel, DiscreteOracleTarget, OracleSpec};
use miis_core::proposals::DiscreteProposal;

use crate::setup::default_oracle_target;
use crate::HarnessError;

pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub name: String,
    pub states: usize,
    /// Largest absolute deviation of the stationary law from `pi / N^d`.
    pub max_deviation: f64,
    pub max_row_defect: f64,
}

impl OracleCase {
    pub fn passed(&self) -> bool {
        self.max_deviation <= ORACLE_TOLERANCE && self.max_row_defect <= 1e-12
    }
}

fn check(name: &str, spec: &OracleSpec, target: &DiscreteOracleTarget) -> Result<OracleCase, HarnessError> {
    let kernel = discrete_oracle_kernel(spec, target)?;
    let p = kernel.stationary()?;
    let expected = kernel.expected_stationary(target);
    let max_deviation = p.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(OracleCase {
        name: name.to_string(),
        states: kernel.dim(),
        max_deviation,
        max_row_defect: kernel.max_row_defect(),
    })
}

/// Full-target simple-IS MIIS on a three-atom target with N = 2 and N = 3, and
/// MIIS within Gibbs on a 2 x 3-atom target with N = 3.
pub fn oracle_suite() -> Result<Vec<OracleCase>, HarnessError> {
    let scalar = DiscreteOracleTarget::scalar(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3])?;
    let skewed = DiscreteProposal::scalar(&[-1.0, 0.5, 2.0], vec![0.6, 0.1, 0.3])?;
    let flat = DiscreteProposal::scalar(&[-1.0, 0.5, 2.0], vec![1.0 / 3.0; 3])?;
    let gibbs_target = default_oracle_target();
    let gibbs_props = vec![
        DiscreteProposal::scalar(&[0.0, 1.0, 2.0], vec![0.5, 0.25, 0.25])?,
        DiscreteProposal::scalar(&[-1.0, 0.0, 3.0], vec![0.2, 0.3, 0.5])?,
    ];
    let mut out = Vec::new();
    for (name, n, prop) in [
        ("simple N=2 uniform proposal", 2, &flat),
        ("simple N=2 skewed proposal", 2, &skewed),
        ("simple N=3 uniform proposal", 3, &flat),
        ("simple N=3 skewed proposal", 3, &skewed),
    ] {
        let spec = OracleSpec {
            n,
            proposals: vec![prop.clone()],
            allow_small_n: true,
        };
        out.push(check(name, &spec, &scalar)?);
    }
    let spec = OracleSpec {
        n: 3,
        proposals: gibbs_props,
        allow_small_n: false,
    };
    out.push(check("gibbs 2 blocks x 3 atoms N=3", &spec, &gibbs_target)?);
    Ok(out)
}
