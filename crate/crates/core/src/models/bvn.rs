//! Bivariate Gaussian target with unit variances and correlation `rho`.

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{BlockStructure, Functional, Point, ProposalFamily, TargetDensity};
use crate::proposals::Marginal;
use crate::rng::ChainRng;

/// Threshold of the tail-probability functional `P(X(1) < -2.32)`.
pub const TAIL_THRESHOLD: f64 = -2.32;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF through the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone)]
pub struct BivariateGaussian {
    rho: f64,
    blocks: BlockStructure,
}

impl BivariateGaussian {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::Config(format!("correlation must lie in (-1, 1), got {rho}")));
        }
        Ok(BivariateGaussian {
            rho,
            blocks: BlockStructure::singletons(2),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Mean and variance of block `block` given the other coordinate.
    pub fn conditional_moments(&self, block: usize, y: &[f64]) -> (f64, f64) {
        (self.rho * y[1 - block], 1.0 - self.rho * self.rho)
    }
}

/// Log density of `N(rho * x_other, 1 - rho^2)` at `x_s`.
pub fn bvn_log_conditional(_block: usize, x_s: f64, x_other: f64, rho: f64) -> f64 {
    let var = 1.0 - rho * rho;
    let z = x_s - rho * x_other;
    -0.5 * z * z / var - 0.5 * (LN_2PI + var.ln())
}

impl TargetDensity for BivariateGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let r = self.rho;
        -0.5 * (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / (1.0 - r * r)
    }

    fn block_structure(&self) -> Option<&BlockStructure> {
        Some(&self.blocks)
    }

    fn log_conditional(&self, block: usize, x_block: &[f64], y: &[f64]) -> f64 {
        bvn_log_conditional(block, x_block[0], y[1 - block], self.rho)
    }

    fn sample_exact(&self, rng: &mut ChainRng) -> Option<Point> {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        Some(vec![z1, self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2])
    }

    fn sample_conditional(&self, block: usize, y: &[f64], rng: &mut ChainRng) -> Option<Vec<f64>> {
        let (mean, var) = self.conditional_moments(block, y);
        let z: f64 = StandardNormal.sample(rng);
        Some(vec![mean + var.sqrt() * z])
    }

    fn conditional_expectation(&self, block: usize, f: &Functional, y: &[f64]) -> Option<f64> {
        let (mu, var) = self.conditional_moments(block, y);
        let other = y[1 - block];
        // moments of the updated coordinate `u` and the fixed one `o`
        let (e_x1, e_x2, e_x1sq, e_x2sq) = if block == 0 {
            (mu, other, mu * mu + var, other * other)
        } else {
            (other, mu, other * other, mu * mu + var)
        };
        match f.name() {
            "x1" => Some(e_x1),
            "x2" => Some(e_x2),
            "x1sq" => Some(e_x1sq),
            "x2sq" => Some(e_x2sq),
            "x1x2" => Some(other * mu),
            "tail" => Some(if block == 0 {
                std_normal_cdf((TAIL_THRESHOLD - mu) / var.sqrt())
            } else if other < TAIL_THRESHOLD {
                1.0
            } else {
                0.0
            }),
            _ => None,
        }
    }
}

/// The base functionals of the bivariate Gaussian experiment.
pub fn bvn_functionals() -> Vec<Functional> {
    vec![
        Functional::coordinate("x1", 0),
        Functional::coordinate("x2", 1),
        Functional::new("x1sq", |x| x[0] * x[0]),
        Functional::new("x2sq", |x| x[1] * x[1]),
        Functional::new("x1x2", |x| x[0] * x[1]),
        Functional::new("tail", |x| if x[0] < TAIL_THRESHOLD { 1.0 } else { 0.0 }),
    ]
}

/// Analytic value of the named estimand.
pub fn bvn_truth(name: &str, rho: f64) -> Result<f64> {
    match name {
        "mean" => Ok(0.0),
        "variance" => Ok(1.0),
        "covariance" => Ok(rho),
        "tail" => Ok(std_normal_cdf(TAIL_THRESHOLD)),
        other => Err(Error::InvalidInput(format!(
            "unknown bivariate Gaussian estimand `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalFamily {
    /// Student t with the given degrees of freedom, matched in mean and variance.
    StudentT { df: f64 },
    /// The exact Gaussian conditional.
    Exact,
}

/// Proposal for one block of the bivariate Gaussian: a location-scale family matched
/// to the conditional mean `rho * y_other` and variance `1 - rho^2`.
#[derive(Debug, Clone)]
pub struct BvnConditionalProposal {
    rho: f64,
    block: usize,
    family: ConditionalFamily,
}

impl BvnConditionalProposal {
    pub fn new(rho: f64, block: usize, family: ConditionalFamily) -> Result<Self> {
        if block > 1 {
            return Err(Error::Config(format!("bivariate Gaussian has no block {block}")));
        }
        if let ConditionalFamily::StudentT { df } = family {
            if !(df > 2.0) {
                return Err(Error::Config(format!("variance matching needs df > 2 (got {df})")));
            }
        }
        Ok(BvnConditionalProposal { rho, block, family })
    }

    pub fn marginal(&self, cond: &[f64]) -> Marginal {
        let mean = self.rho * cond[1 - self.block];
        let var = 1.0 - self.rho * self.rho;
        match self.family {
            ConditionalFamily::StudentT { df } => Marginal::student_t_matching(mean, var, df),
            ConditionalFamily::Exact => Marginal::normal(mean, var.sqrt()),
        }
    }
}

impl ProposalFamily for BvnConditionalProposal {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, _index: usize, _xi: Option<&[f64]>, cond: &[f64], rng: &mut ChainRng) -> Point {
        vec![self.marginal(cond).sample(rng)]
    }

    fn log_density(&self, _index: usize, x: &[f64], _xi: Option<&[f64]>, cond: &[f64]) -> f64 {
        self.marginal(cond).ln_pdf(x[0])
    }

    fn cdf(&self, _index: usize, _coord: usize, value: f64, cond: &[f64]) -> Option<f64> {
        Some(self.marginal(cond).cdf(value))
    }

    fn inverse_cdf(&self, _index: usize, _coord: usize, u: f64, cond: &[f64]) -> Option<f64> {
        Some(self.marginal(cond).inverse_cdf(u))
    }

    fn has_cdf(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn independent_case_is_standard_normal() {
        for x in [-2.0, -0.3, 0.0, 1.7] {
            let expected = -0.5 * x * x - 0.5 * LN_2PI;
            assert!((bvn_log_conditional(0, x, 0.8, 0.0) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_is_maximised_at_zero_when_other_is_zero() {
        let at0 = bvn_log_conditional(1, 0.0, 0.0, 0.7);
        for x in [-0.5, -1e-3, 1e-3, 0.5] {
            assert!(bvn_log_conditional(1, x, 0.0, 0.7) < at0);
        }
    }

    #[test]
    fn conditional_mode_value_at_high_correlation() {
        // N(0.99, 0.0199) at its mode: -0.5 * ln(2 pi 0.0199)
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 0.0199f64).ln();
        assert!((bvn_log_conditional(0, 0.99, 1.0, 0.99) - expected).abs() < 1e-12);
    }

    #[test]
    fn joint_and_conditional_are_consistent() {
        let t = BivariateGaussian::new(0.6).unwrap();
        let mut rng = Stream::new(4).rng();
        let mut constant = None;
        for _ in 0..200 {
            let x = t.sample_exact(&mut rng).unwrap();
            // log m(x) - log N(x2; 0, 1) - log cond(x1 | x2) is constant
            let marginal = -0.5 * x[1] * x[1];
            let c = t.log_density(&x) - marginal - bvn_log_conditional(0, x[0], x[1], 0.6);
            match constant {
                None => constant = Some(c),
                Some(c0) => assert!((c - c0).abs() < 1e-10),
            }
        }
    }

    #[test]
    fn truths() {
        assert_eq!(bvn_truth("mean", 0.3).unwrap(), 0.0);
        assert_eq!(bvn_truth("covariance", 0.5).unwrap(), 0.5);
        assert!((bvn_truth("tail", 0.5).unwrap() - 0.010_170_438_668_719_69).abs() < 1e-12);
        assert!(bvn_truth("kurtosis", 0.5).is_err());
    }

    #[test]
    fn rejects_invalid_rho() {
        assert!(BivariateGaussian::new(1.0).is_err());
        assert!(BivariateGaussian::new(f64::NAN).is_err());
    }

    #[test]
    fn analytic_conditional_expectations_match_quadrature() {
        let t = BivariateGaussian::new(0.8).unwrap();
        let y = [0.4, -1.1];
        for f in bvn_functionals() {
            for block in 0..2 {
                let (mu, var) = t.conditional_moments(block, &y);
                let sd = var.sqrt();
                let h = 1e-4 * sd;
                let mut acc = 0.0;
                for i in -100_000..100_000 {
                    let u = mu + (i as f64 + 0.5) * h;
                    let mut z = y.to_vec();
                    z[block] = u;
                    let dens = (-0.5 * ((u - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                    acc += f.eval(&z) * dens * h;
                }
                let exact = t.conditional_expectation(block, &f, &y).unwrap();
                assert!(
                    (acc - exact).abs() < 1e-6,
                    "{} block {block}: {acc} vs {exact}",
                    f.name()
                );
            }
        }
    }
}
