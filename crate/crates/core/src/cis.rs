//! The conditional importance sampler.
//!
//! Given the previous state `y` and retained index `k`, one step draws the auxiliary
//! point `xi`, pins particle `k` to `y` (identity transition kernel) and draws the
//! remaining particles from the proposal. Weights are
//!
//! ```text
//! log w_i = log m(x_i) - log q_i(x_i | xi) + log eta(xi | x_i)
//! ```
//!
//! which for the random-walk variant reduces to `log w_i = log m(x_i)`.
//!
//! Particle `i` always draws from the substream `stream.child(i)`, so results do not
//! depend on whether particles are evaluated in parallel.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    AuxKind, AuxiliaryKernel, BlockStructure, Functional, NoAuxiliary, ParticleSystem, Point, ProposalFamily,
    TargetDensity,
};
use crate::proposals::GaussianRandomWalk;
use crate::rng::{Stream, AUX_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CisVariant {
    Simple,
    Antithetic,
    RandomWalk,
}

/// A validated CIS configuration. Build with [`CisConfig::builder`] or one of the
/// shorthand constructors.
#[derive(Clone)]
pub struct CisConfig {
    n: usize,
    variant: CisVariant,
    proposal: Arc<dyn ProposalFamily>,
    aux: Arc<dyn AuxiliaryKernel>,
    weight_bound: Option<f64>,
    parallel: bool,
}

impl std::fmt::Debug for CisConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CisConfig")
            .field("n", &self.n)
            .field("variant", &self.variant)
            .field("aux", &self.aux.kind())
            .field("weight_bound", &self.weight_bound)
            .field("parallel", &self.parallel)
            .finish()
    }
}

pub struct CisBuilder {
    n: usize,
    variant: CisVariant,
    proposal: Arc<dyn ProposalFamily>,
    aux: Arc<dyn AuxiliaryKernel>,
    weight_bound: Option<f64>,
    parallel: bool,
    allow_small_n: bool,
}

impl CisBuilder {
    /// Skip the minimum particle-count rules (oracle tests with N = 1 or 2).
    pub fn allow_small_n(mut self, allow: bool) -> Self {
        self.allow_small_n = allow;
        self
    }

    /// Declared bound `C` on the raw weights; every step checks `w_i <= C`.
    pub fn weight_bound(mut self, bound: f64) -> Self {
        self.weight_bound = Some(bound);
        self
    }

    /// Evaluate particles on the rayon pool. Results are identical either way.
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn build(self) -> Result<CisConfig> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        match self.variant {
            CisVariant::Simple | CisVariant::RandomWalk => {
                if n < 3 && !self.allow_small_n {
                    return Err(Error::Config(format!(
                        "{:?} CIS needs N >= 3 for uniform ergodicity (got {n})",
                        self.variant
                    )));
                }
            }
            CisVariant::Antithetic => {
                if !n.is_multiple_of(2) {
                    return Err(Error::Config(format!("antithetic CIS needs even N (got {n})")));
                }
                if n / 2 < 3 && !self.allow_small_n {
                    return Err(Error::Config(format!("antithetic CIS needs N/2 >= 3 (got N = {n})")));
                }
                if !self.proposal.has_cdf() {
                    return Err(Error::Config(
                        "antithetic CIS needs a proposal with cdf and inverse cdf".into(),
                    ));
                }
            }
        }
        match (self.variant, self.aux.kind()) {
            (CisVariant::RandomWalk, AuxKind::RandomWalk) => {
                check_random_walk_shape(self.proposal.as_ref(), self.aux.as_ref())?
            }
            (CisVariant::RandomWalk, AuxKind::None) => {
                return Err(Error::Config(
                    "random-walk CIS needs a random-walk auxiliary kernel".into(),
                ))
            }
            (_, AuxKind::RandomWalk) => {
                return Err(Error::Config(format!(
                    "{:?} CIS does not use an auxiliary point",
                    self.variant
                )))
            }
            _ => {}
        }
        if let Some(c) = self.weight_bound {
            if !(c > 0.0) {
                return Err(Error::Config(format!("weight bound must be positive (got {c})")));
            }
        }
        Ok(CisConfig {
            n,
            variant: self.variant,
            proposal: self.proposal,
            aux: self.aux,
            weight_bound: self.weight_bound,
            parallel: self.parallel,
        })
    }
}

/// The random-walk variant needs `q(. | xi) = eta(. | xi)`; checked at a few probe points.
fn check_random_walk_shape(proposal: &dyn ProposalFamily, aux: &dyn AuxiliaryKernel) -> Result<()> {
    let d = proposal.dim();
    for probe in 0..3 {
        let center: Vec<f64> = (0..d).map(|c| 0.3 * probe as f64 - 0.1 * c as f64).collect();
        let x: Vec<f64> = (0..d).map(|c| 0.5 + 0.25 * (probe + c) as f64).collect();
        let q = proposal.log_density(0, &x, Some(&center), &[]);
        let eta = aux.log_eta(Some(&x), &center);
        if (q - eta).abs() > 1e-10 * (1.0 + q.abs()) {
            return Err(Error::Config(
                "random-walk CIS needs the proposal and auxiliary density to share one shape".into(),
            ));
        }
    }
    Ok(())
}

impl CisConfig {
    pub fn builder(
        variant: CisVariant,
        n: usize,
        proposal: Arc<dyn ProposalFamily>,
        aux: Arc<dyn AuxiliaryKernel>,
    ) -> CisBuilder {
        CisBuilder {
            n,
            variant,
            proposal,
            aux,
            weight_bound: None,
            parallel: false,
            allow_small_n: false,
        }
    }

    pub fn simple(n: usize, proposal: Arc<dyn ProposalFamily>) -> Result<Self> {
        Self::builder(CisVariant::Simple, n, proposal, Arc::new(NoAuxiliary)).build()
    }

    pub fn antithetic(n: usize, proposal: Arc<dyn ProposalFamily>) -> Result<Self> {
        Self::builder(CisVariant::Antithetic, n, proposal, Arc::new(NoAuxiliary)).build()
    }

    pub fn random_walk(n: usize, kernel: Arc<GaussianRandomWalk>) -> Result<Self> {
        Self::random_walk_builder(n, kernel).build()
    }

    pub fn random_walk_builder(n: usize, kernel: Arc<GaussianRandomWalk>) -> CisBuilder {
        Self::builder(CisVariant::RandomWalk, n, kernel.clone(), kernel)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> CisVariant {
        self.variant
    }

    pub fn proposal(&self) -> &dyn ProposalFamily {
        self.proposal.as_ref()
    }

    pub fn aux(&self) -> &dyn AuxiliaryKernel {
        self.aux.as_ref()
    }

    pub fn weight_bound(&self) -> Option<f64> {
        self.weight_bound
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    /// Unnormalised log-weight of particle `index` given its log target value.
    ///
    /// The random-walk variant uses the reduced form `log m(x)`.
    pub fn log_weight(&self, index: usize, x: &[f64], log_m: f64, xi: Option<&[f64]>, cond: &[f64]) -> f64 {
        match self.variant {
            CisVariant::RandomWalk => log_m,
            _ => {
                if log_m == f64::NEG_INFINITY {
                    return log_m;
                }
                log_m - self.proposal.log_density(index, x, xi, cond) + self.aux.log_eta(xi, x)
            }
        }
    }

    /// The general weight formula, used to cross-check the reduced random-walk form.
    pub fn log_weight_general(&self, index: usize, x: &[f64], log_m: f64, xi: Option<&[f64]>, cond: &[f64]) -> f64 {
        log_m - self.proposal.log_density(index, x, xi, cond) + self.aux.log_eta(xi, x)
    }

    /// Antithetic partner of `x` through the marginal CDFs of pair `pair`, coordinatewise.
    pub fn antithetic_partner(&self, pair: usize, x: &[f64], cond: &[f64]) -> Point {
        x.iter()
            .enumerate()
            .map(|(c, &v)| {
                let u = self.proposal.cdf(pair, c, v, cond).expect("validated cdf");
                self.proposal
                    .inverse_cdf(pair, c, 1.0 - u, cond)
                    .expect("validated cdf")
            })
            .collect()
    }
}

/// Output of one CIS step with bookkeeping for the samplers.
#[derive(Debug, Clone)]
pub(crate) struct StepOutput {
    pub system: ParticleSystem,
    /// `log m` (or `log m_s`) at every particle.
    pub log_target: Vec<f64>,
    pub density_evals: u64,
}

/// Shared body of [`cis_step`] and [`cis_step_conditional`].
///
/// `y_local` is the retained point in the coordinates the particles live in, `cond`
/// the full chain state and `log_m` the density the weights use. When the caller
/// already knows `log m(y_local)` it passes it as `retained_log_m`.
pub(crate) fn step_local<F>(
    cfg: &CisConfig,
    y_local: &[f64],
    k: usize,
    cond: &[f64],
    log_m: F,
    retained_log_m: Option<f64>,
    stream: Stream,
) -> Result<StepOutput>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = cfg.n;
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "retained index {k} out of range for N = {n}"
        )));
    }
    if y_local.len() != cfg.proposal.dim() {
        return Err(Error::InvalidInput(format!(
            "state has dimension {} but the proposal has {}",
            y_local.len(),
            cfg.proposal.dim()
        )));
    }
    let xi = cfg.aux.sample(y_local, &mut stream.child(AUX_STREAM).rng());
    let xi_ref = xi.as_deref();

    let particles: Vec<Point> = match cfg.variant {
        CisVariant::Simple | CisVariant::RandomWalk => {
            let draw = |i: usize| {
                if i == k {
                    y_local.to_vec()
                } else {
                    cfg.proposal.sample(i, xi_ref, cond, &mut stream.child(i as u64).rng())
                }
            };
            if cfg.parallel {
                (0..n).into_par_iter().map(draw).collect()
            } else {
                (0..n).map(draw).collect()
            }
        }
        CisVariant::Antithetic => {
            let half = n / 2;
            let kept_pair = k % half;
            let draw_pair = |j: usize| -> (Point, Point) {
                if j == kept_pair {
                    let partner = cfg.antithetic_partner(j, y_local, cond);
                    if k < half {
                        (y_local.to_vec(), partner)
                    } else {
                        (partner, y_local.to_vec())
                    }
                } else {
                    let x = cfg.proposal.sample(j, None, cond, &mut stream.child(j as u64).rng());
                    let partner = cfg.antithetic_partner(j, &x, cond);
                    (x, partner)
                }
            };
            let pairs: Vec<(Point, Point)> = if cfg.parallel {
                (0..half).into_par_iter().map(draw_pair).collect()
            } else {
                (0..half).map(draw_pair).collect()
            };
            let mut lower = Vec::with_capacity(n);
            let mut upper = Vec::with_capacity(half);
            for (a, b) in pairs {
                lower.push(a);
                upper.push(b);
            }
            lower.extend(upper);
            lower
        }
    };

    let eval = |i: usize| -> (f64, f64) {
        let lm = match retained_log_m {
            Some(v) if i == k => v,
            _ => log_m(&particles[i]),
        };
        (lm, cfg.log_weight(i, &particles[i], lm, xi_ref, cond))
    };
    let evaluated: Vec<(f64, f64)> = if cfg.parallel {
        (0..n).into_par_iter().map(eval).collect()
    } else {
        (0..n).map(eval).collect()
    };
    let density_evals = n as u64 - u64::from(retained_log_m.is_some());
    let (log_target, log_w): (Vec<f64>, Vec<f64>) = evaluated.into_iter().unzip();

    if log_target[k] == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(
            "retained state lies outside the target support".into(),
        ));
    }
    for (i, &lw) in log_w.iter().enumerate() {
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::SupportMismatch(format!(
                "proposal density vanishes where the target is positive (particle {i})"
            )));
        }
    }
    if log_w[k] == f64::NEG_INFINITY {
        return Err(Error::DegenerateParticleSystem(
            "retained particle has zero weight".into(),
        ));
    }
    if let Some(bound) = cfg.weight_bound {
        let limit = bound.ln() + 1e-9f64.ln_1p();
        if let Some((i, &lw)) = log_w.iter().enumerate().find(|(_, &lw)| lw > limit) {
            return Err(Error::WeightBound {
                index: i,
                weight: lw.exp(),
                bound,
            });
        }
    }
    let system = ParticleSystem::new(particles, xi, log_w, k).map_err(|e| match e {
        Error::DegenerateWeights => Error::DegenerateParticleSystem("all weights are zero".into()),
        other => other,
    })?;
    Ok(StepOutput {
        system,
        log_target,
        density_evals,
    })
}

/// One CIS step targeting the full density.
pub fn cis_step(
    y: &[f64],
    k: usize,
    cfg: &CisConfig,
    target: &dyn TargetDensity,
    stream: Stream,
) -> Result<ParticleSystem> {
    if y.len() != target.dim() {
        return Err(Error::InvalidInput(format!(
            "state has dimension {} but the target has {}",
            y.len(),
            target.dim()
        )));
    }
    step_local(cfg, y, k, y, |x| target.log_density(x), None, stream).map(|o| o.system)
}

pub(crate) fn blocks_of(target: &dyn TargetDensity) -> Result<&BlockStructure> {
    target
        .block_structure()
        .ok_or_else(|| Error::Config("target has no block structure".into()))
}

pub(crate) fn step_conditional_impl(
    block: usize,
    y: &[f64],
    k: usize,
    cfg: &CisConfig,
    target: &dyn TargetDensity,
    stream: Stream,
) -> Result<StepOutput> {
    let blocks = blocks_of(target)?;
    if block >= blocks.num_blocks() {
        return Err(Error::InvalidInput(format!("block {block} does not exist")));
    }
    if y.len() != target.dim() {
        return Err(Error::InvalidInput("state dimension does not match the target".into()));
    }
    let y_block = blocks.extract(block, y);
    step_local(
        cfg,
        &y_block,
        k,
        y,
        |xs| target.log_conditional(block, xs, y),
        None,
        stream,
    )
}

/// One CIS step targeting the block-`block` conditional given the other blocks of `y`.
/// Particles live in block coordinates.
pub fn cis_step_conditional(
    block: usize,
    y: &[f64],
    k: usize,
    cfg: &CisConfig,
    target: &dyn TargetDensity,
    stream: Stream,
) -> Result<ParticleSystem> {
    step_conditional_impl(block, y, k, cfg, target, stream).map(|o| o.system)
}

fn weighted_sum<'a>(weights: &[f64], values: impl Iterator<Item = f64> + 'a, name: &str) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (w, v)) in weights.iter().zip(values).enumerate() {
        if !v.is_finite() {
            if *w > 1e-300 {
                return Err(Error::NonFiniteFunctional {
                    name: name.to_string(),
                    index: i,
                });
            }
            continue;
        }
        acc += w * v;
    }
    Ok(acc)
}

/// `sum_i W_i f(x_i)` for a full-target particle system.
pub fn cis_estimate(ps: &ParticleSystem, f: &Functional) -> Result<f64> {
    weighted_sum(&ps.weights, ps.particles.iter().map(|x| f.eval(x)), f.name())
}

/// `sum_i W_i f(x_i(s), y(-s))` for a block particle system.
pub fn cis_estimate_conditional(
    ps: &ParticleSystem,
    f: &Functional,
    blocks: &BlockStructure,
    block: usize,
    y: &[f64],
) -> Result<f64> {
    let mut z = y.to_vec();
    let values = ps.particles.iter().map(move |xs| {
        blocks.insert(block, &mut z, xs);
        f.eval(&z)
    });
    weighted_sum(&ps.weights, values, f.name())
}

/// Monte Carlo check of CIS unbiasedness: draws `(y, k)` from `N^{-1} pi`, runs one
/// step and averages the CIS estimate. Returns `(mean, standard error)`.
pub fn unbiasedness_check(
    cfg: &CisConfig,
    target: &dyn TargetDensity,
    f: &Functional,
    replications: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    if replications < 1000 {
        return Err(Error::InvalidInput(format!(
            "unbiasedness check needs at least 1000 replications (got {replications})"
        )));
    }
    let estimates: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep = stream.child(r as u64);
            let mut rng = rep.child(AUX_STREAM).rng();
            let y = target
                .sample_exact(&mut rng)
                .ok_or_else(|| Error::Config("target has no exact sampler".into()))?;
            let k = rng.random_range(0..cfg.n());
            let ps = cis_step(&y, k, cfg, target, rep.child(0))?;
            cis_estimate(&ps, f)
        })
        .collect::<Result<_>>()?;
    let m = replications as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
