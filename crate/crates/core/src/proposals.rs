//! Concrete proposal families and the Gaussian random-walk kernel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{AuxKind, AuxiliaryKernel, Point, ProposalFamily};
use crate::rng::ChainRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Location-scale univariate distribution used as a proposal marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Normal { loc: f64, scale: f64 },
    StudentT { loc: f64, scale: f64, df: f64 },
}

impl Marginal {
    pub fn normal(loc: f64, scale: f64) -> Self {
        Marginal::Normal { loc, scale }
    }

    pub fn student_t(loc: f64, scale: f64, df: f64) -> Self {
        Marginal::StudentT { loc, scale, df }
    }

    /// Student t with `df > 2` degrees of freedom rescaled to the given mean and variance.
    pub fn student_t_matching(mean: f64, variance: f64, df: f64) -> Self {
        debug_assert!(df > 2.0);
        Marginal::StudentT {
            loc: mean,
            scale: (variance * (df - 2.0) / df).sqrt(),
            df,
        }
    }

    pub fn loc(&self) -> f64 {
        match *self {
            Marginal::Normal { loc, .. } | Marginal::StudentT { loc, .. } => loc,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { loc, scale } => {
                let z = (x - loc) / scale;
                -0.5 * z * z - scale.ln() - 0.5 * LN_2PI
            }
            Marginal::StudentT { loc, scale, df } => {
                let z = (x - loc) / scale;
                ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln()
                    - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
            }
        }
    }

    pub fn sample(&self, rng: &mut ChainRng) -> f64 {
        match *self {
            Marginal::Normal { loc, scale } => {
                let z: f64 = StandardNormal.sample(rng);
                loc + scale * z
            }
            Marginal::StudentT { loc, scale, df } => {
                let t = StudentT::new(df).expect("df > 0").sample(rng);
                loc + scale * t
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { loc, scale } => Normal::new(loc, scale).expect("scale > 0").cdf(x),
            Marginal::StudentT { loc, scale, df } => StudentsT::new(loc, scale, df).expect("valid t").cdf(x),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            Marginal::Normal { loc, scale } => {
                let n = Normal::new(loc, scale).expect("scale > 0");
                // statrs' normal quantile is only accurate to ~1e-4; polish with Newton
                let mut x = n.inverse_cdf(u);
                if x.is_finite() {
                    for _ in 0..3 {
                        let d = n.pdf(x);
                        if d <= 0.0 {
                            break;
                        }
                        let step = (n.cdf(x) - u) / d;
                        x -= step;
                        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                            break;
                        }
                    }
                }
                x
            }
            Marginal::StudentT { loc, scale, df } => StudentsT::new(loc, scale, df).expect("valid t").inverse_cdf(u),
        }
    }

    /// `Q^{-1}(1 - Q(x))`, the antithetic partner of `x`.
    pub fn antithetic(&self, x: f64) -> f64 {
        self.inverse_cdf(1.0 - self.cdf(x))
    }
}

/// Independent proposal: every particle is drawn from the same product of
/// univariate marginals.
#[derive(Debug, Clone)]
pub struct ProductProposal {
    marginals: Vec<Marginal>,
}

impl ProductProposal {
    pub fn new(marginals: Vec<Marginal>) -> Self {
        ProductProposal { marginals }
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }
}

impl ProposalFamily for ProductProposal {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn sample(&self, _index: usize, _xi: Option<&[f64]>, _cond: &[f64], rng: &mut ChainRng) -> Point {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    fn log_density(&self, _index: usize, x: &[f64], _xi: Option<&[f64]>, _cond: &[f64]) -> f64 {
        self.marginals.iter().zip(x).map(|(m, &v)| m.ln_pdf(v)).sum()
    }

    fn cdf(&self, _index: usize, coord: usize, value: f64, _cond: &[f64]) -> Option<f64> {
        Some(self.marginals[coord].cdf(value))
    }

    fn inverse_cdf(&self, _index: usize, coord: usize, u: f64, _cond: &[f64]) -> Option<f64> {
        Some(self.marginals[coord].inverse_cdf(u))
    }

    fn has_cdf(&self) -> bool {
        true
    }
}

/// Gaussian random-walk density `phi(x - c)` with covariance `Sigma`.
///
/// Serves both as the auxiliary kernel `eta(xi | y) = phi(xi - y)` and as the
/// particle proposal `q(x | xi) = phi(x - xi)`.
#[derive(Debug, Clone)]
pub struct GaussianRandomWalk {
    dim: usize,
    /// Row-major lower Cholesky factor of the covariance.
    chol: Vec<f64>,
    log_norm: f64,
    covariance: Vec<f64>,
}

impl GaussianRandomWalk {
    /// `covariance` is a row-major `dim x dim` symmetric positive definite matrix.
    pub fn new(dim: usize, covariance: Vec<f64>) -> Result<Self> {
        if covariance.len() != dim * dim || dim == 0 {
            return Err(Error::Config(format!("random-walk covariance must be {dim}x{dim}")));
        }
        let m = nalgebra::DMatrix::from_row_slice(dim, dim, &covariance);
        if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
            return Err(Error::Config("random-walk covariance is not symmetric".into()));
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Config("random-walk covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut flat = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for r in 0..dim {
            for c in 0..=r {
                flat[r * dim + c] = l[(r, c)];
            }
            log_det += 2.0 * l[(r, r)].ln();
        }
        Ok(GaussianRandomWalk {
            dim,
            chol: flat,
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
            covariance,
        })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = variance;
        }
        Self::new(dim, cov)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn draw_around(&self, center: &[f64], rng: &mut ChainRng) -> Point {
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = center.to_vec();
        for r in 0..self.dim {
            let row = &self.chol[r * self.dim..r * self.dim + r + 1];
            x[r] += row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
        x
    }

    /// `log phi(x - center)`; symmetric in its two arguments.
    pub fn ln_density(&self, x: &[f64], center: &[f64]) -> f64 {
        let d = self.dim;
        let mut w = vec![0.0; d];
        let mut q = 0.0;
        for r in 0..d {
            let mut s = x[r] - center[r];
            for c in 0..r {
                s -= self.chol[r * d + c] * w[c];
            }
            w[r] = s / self.chol[r * d + r];
            q += w[r] * w[r];
        }
        self.log_norm - 0.5 * q
    }
}

impl AuxiliaryKernel for GaussianRandomWalk {
    fn kind(&self) -> AuxKind {
        AuxKind::RandomWalk
    }

    fn sample(&self, y: &[f64], rng: &mut ChainRng) -> Option<Point> {
        Some(self.draw_around(y, rng))
    }

    fn log_eta(&self, xi: Option<&[f64]>, y: &[f64]) -> f64 {
        self.ln_density(xi.expect("random-walk kernel needs xi"), y)
    }
}

impl ProposalFamily for GaussianRandomWalk {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, _index: usize, xi: Option<&[f64]>, _cond: &[f64], rng: &mut ChainRng) -> Point {
        self.draw_around(xi.expect("random-walk proposal needs xi"), rng)
    }

    fn log_density(&self, _index: usize, x: &[f64], xi: Option<&[f64]>, _cond: &[f64]) -> f64 {
        self.ln_density(x, xi.expect("random-walk proposal needs xi"))
    }

    fn is_xi_dependent(&self) -> bool {
        true
    }
}

/// Categorical proposal over a finite atom set (discrete oracle targets).
#[derive(Debug, Clone)]
pub struct DiscreteProposal {
    atoms: Vec<Point>,
    probs: Vec<f64>,
}

impl DiscreteProposal {
    pub fn new(atoms: Vec<Point>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::Config("discrete proposal needs one probability per atom".into()));
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::Config("discrete proposal atoms differ in dimension".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "discrete proposal probabilities must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Ok(DiscreteProposal { atoms, probs })
    }

    /// Scalar atoms.
    pub fn scalar(values: &[f64], probs: Vec<f64>) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), probs)
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mass(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .position(|a| a.as_slice() == x)
            .map_or(0.0, |i| self.probs[i])
    }
}

impl ProposalFamily for DiscreteProposal {
    fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    fn sample(&self, _index: usize, _xi: Option<&[f64]>, _cond: &[f64], rng: &mut ChainRng) -> Point {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (a, &p) in self.atoms.iter().zip(&self.probs) {
            cum += p;
            if u < cum {
                return a.clone();
            }
        }
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        self.atoms[last].clone()
    }

    fn log_density(&self, _index: usize, x: &[f64], _xi: Option<&[f64]>, _cond: &[f64]) -> f64 {
        self.mass(x).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn antithetic_partner_of_gaussian_is_reflection() {
        let m = Marginal::normal(1.5, 0.8);
        for delta in [0.0, 0.1, 0.7, 1.9, 3.2] {
            assert!((m.antithetic(1.5 + delta) - (1.5 - delta)).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_cdf_round_trips() {
        for m in [Marginal::normal(-0.3, 2.0), Marginal::student_t(0.4, 0.6, 5.0)] {
            for i in 0..200 {
                let x = m.loc() - 4.0 + 0.04 * i as f64;
                assert!((m.inverse_cdf(m.cdf(x)) - x).abs() < 1e-10, "{m:?} at {x}");
            }
        }
    }

    #[test]
    fn antithetic_is_an_involution() {
        let m = Marginal::student_t(0.2, 0.9, 5.0);
        for i in 0..100 {
            let x = -3.0 + 0.06 * i as f64;
            let p = m.antithetic(x);
            assert!((m.antithetic(p) - x).abs() < 1e-10);
            assert!((m.cdf(x) + m.cdf(p) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matched_student_t_has_requested_variance() {
        let m = Marginal::student_t_matching(0.0, 0.0199, 5.0);
        if let Marginal::StudentT { scale, df, .. } = m {
            assert!((scale * scale * df / (df - 2.0) - 0.0199).abs() < 1e-15);
        }
    }

    #[test]
    fn student_t_density_integrates_to_one() {
        let m = Marginal::student_t(0.5, 0.7, 5.0);
        let h = 1e-3;
        let total: f64 = (-200_000..200_000)
            .map(|i| m.ln_pdf(0.5 + (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn random_walk_density_is_symmetric_and_normalized() {
        let rw = GaussianRandomWalk::new(2, vec![1.0, 0.3, 0.3, 0.5]).unwrap();
        let a = [0.3, -1.2];
        let b = [1.1, 0.4];
        assert!((rw.ln_density(&a, &b) - rw.ln_density(&b, &a)).abs() < 1e-12);
        assert!((rw.log_eta(Some(&a), &b) - rw.log_eta(Some(&b), &a)).abs() < 1e-12);
        // closed form for the bivariate normal at the origin offset
        let det: f64 = 1.0 * 0.5 - 0.09;
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        assert!((rw.ln_density(&a, &a) - expected).abs() < 1e-12);
    }

    #[test]
    fn random_walk_draws_have_requested_covariance() {
        let rw = GaussianRandomWalk::new(2, vec![1.0, 0.3, 0.3, 0.5]).unwrap();
        let mut rng = Stream::new(5).rng();
        let n = 200_000;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = rw.draw_around(&[0.0, 0.0], &mut rng);
            sxx += x[0] * x[0];
            sxy += x[0] * x[1];
            syy += x[1] * x[1];
        }
        let n = n as f64;
        assert!((sxx / n - 1.0).abs() < 0.02);
        assert!((sxy / n - 0.3).abs() < 0.02);
        assert!((syy / n - 0.5).abs() < 0.02);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        assert!(GaussianRandomWalk::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn discrete_proposal_masses() {
        let q = DiscreteProposal::scalar(&[0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(q.mass(&[1.0]), 0.3);
        assert_eq!(q.log_density(0, &[5.0], None, &[]), f64::NEG_INFINITY);
        assert!(DiscreteProposal::scalar(&[0.0, 1.0], vec![0.2, 0.3]).is_err());
    }
}
