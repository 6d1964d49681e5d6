//! Shared interfaces and data types: targets, proposals, auxiliary kernels,
//! functionals, particle systems and chain states.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::ChainRng;

/// A point of the sample space. Discrete supports are encoded as real vectors.
pub type Point = Vec<f64>;

/// A partition of the coordinates `0..dim` into `d` contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    ranges: Vec<Range<usize>>,
    dim: usize,
}

impl BlockStructure {
    /// Blocks must be non-empty, non-overlapping and cover `0..dim` exactly.
    pub fn new(dim: usize, ranges: Vec<Range<usize>>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::Config("block structure has no blocks".into()));
        }
        let mut covered = vec![false; dim];
        for r in &ranges {
            if r.start >= r.end || r.end > dim {
                return Err(Error::Config(format!("block {r:?} is empty or outside 0..{dim}")));
            }
            for c in r.clone() {
                if covered[c] {
                    return Err(Error::Config(format!("coordinate {c} is in two blocks")));
                }
                covered[c] = true;
            }
        }
        if let Some(c) = covered.iter().position(|c| !c) {
            return Err(Error::Config(format!("coordinate {c} is in no block")));
        }
        Ok(BlockStructure { ranges, dim })
    }

    /// One block per coordinate.
    pub fn singletons(dim: usize) -> Self {
        BlockStructure {
            ranges: (0..dim).map(|c| c..c + 1).collect(),
            dim,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.ranges[block].clone()
    }

    pub fn block_dim(&self, block: usize) -> usize {
        self.ranges[block].len()
    }

    pub fn extract(&self, block: usize, y: &[f64]) -> Vec<f64> {
        y[self.range(block)].to_vec()
    }

    pub fn insert(&self, block: usize, y: &mut [f64], x_block: &[f64]) {
        y[self.range(block)].copy_from_slice(x_block);
    }
}

/// Unnormalised target density `m`, evaluated in the log domain.
///
/// `log_density` must return a finite value or `-inf`, never NaN.
pub trait TargetDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn block_structure(&self) -> Option<&BlockStructure> {
        None
    }

    /// Log of the block-`block` conditional, up to a constant that may depend on the
    /// other blocks. `y` is a full point; its block `block` coordinates are ignored.
    ///
    /// The default evaluates the joint density with the block replaced.
    fn log_conditional(&self, block: usize, x_block: &[f64], y: &[f64]) -> f64 {
        let blocks = self
            .block_structure()
            .expect("log_conditional requires a block structure");
        let mut z = y.to_vec();
        blocks.insert(block, &mut z, x_block);
        self.log_density(&z)
    }

    /// Exact draw from the normalised target, for analytic models.
    fn sample_exact(&self, _rng: &mut ChainRng) -> Option<Point> {
        None
    }

    /// Exact draw from the block conditional given the other blocks of `y`.
    fn sample_conditional(&self, _block: usize, _y: &[f64], _rng: &mut ChainRng) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form conditional expectation of `f` over block `block` given the other
    /// blocks of `y`, where the model knows it.
    fn conditional_expectation(&self, _block: usize, _f: &Functional, _y: &[f64]) -> Option<f64> {
        None
    }
}

/// Importance proposal with per-particle marginals `q_i(x | xi)`.
///
/// `cond` is the current full chain state. Full-target proposals ignore it;
/// proposals for a block conditional use it for the off-block coordinates.
pub trait ProposalFamily: Send + Sync {
    /// Dimension of the proposed points.
    fn dim(&self) -> usize;

    fn sample(&self, index: usize, xi: Option<&[f64]>, cond: &[f64], rng: &mut ChainRng) -> Point;

    fn log_density(&self, index: usize, x: &[f64], xi: Option<&[f64]>, cond: &[f64]) -> f64;

    /// Marginal CDF of one coordinate, when available (antithetic sampling).
    fn cdf(&self, _index: usize, _coord: usize, _value: f64, _cond: &[f64]) -> Option<f64> {
        None
    }

    fn inverse_cdf(&self, _index: usize, _coord: usize, _u: f64, _cond: &[f64]) -> Option<f64> {
        None
    }

    fn has_cdf(&self) -> bool {
        false
    }

    fn is_xi_dependent(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    None,
    RandomWalk,
}

/// Density `eta(xi | y)` of the auxiliary point.
pub trait AuxiliaryKernel: Send + Sync {
    fn kind(&self) -> AuxKind;

    /// `None` when the kernel carries no auxiliary point.
    fn sample(&self, y: &[f64], rng: &mut ChainRng) -> Option<Point>;

    fn log_eta(&self, xi: Option<&[f64]>, y: &[f64]) -> f64;
}

/// The auxiliary-free case: `eta` is constant and contributes nothing to the weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAuxiliary;

impl AuxiliaryKernel for NoAuxiliary {
    fn kind(&self) -> AuxKind {
        AuxKind::None
    }

    fn sample(&self, _y: &[f64], _rng: &mut ChainRng) -> Option<Point> {
        None
    }

    fn log_eta(&self, _xi: Option<&[f64]>, _y: &[f64]) -> f64 {
        0.0
    }
}

type FunctionalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A named real function of a (full) point whose expectation is estimated.
#[derive(Clone)]
pub struct Functional {
    name: String,
    f: Arc<FunctionalFn>,
}

impl Functional {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Functional {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Coordinate projection `x -> x[coord]`.
    pub fn coordinate(name: impl Into<String>, coord: usize) -> Self {
        Functional::new(name, move |x| x[coord])
    }

    pub fn constant(name: impl Into<String>, c: f64) -> Self {
        Functional::new(name, move |_| c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional").field("name", &self.name).finish()
    }
}

/// Weighted particle approximation produced by one CIS step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub particles: Vec<Point>,
    pub xi: Option<Point>,
    pub log_w: Vec<f64>,
    pub weights: Vec<f64>,
    /// Index of the particle pinned to the previous state (0-based).
    pub retained: usize,
}

impl ParticleSystem {
    pub fn new(particles: Vec<Point>, xi: Option<Point>, log_w: Vec<f64>, retained: usize) -> Result<Self> {
        if particles.len() != log_w.len() || particles.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} particles but {} log-weights",
                particles.len(),
                log_w.len()
            )));
        }
        if retained >= particles.len() {
            return Err(Error::InvalidInput(format!(
                "retained index {retained} out of range for {} particles",
                particles.len()
            )));
        }
        let weights = normalize_log_weights(&log_w)?;
        Ok(ParticleSystem {
            particles,
            xi,
            log_w,
            weights,
            retained,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// State `(y, k)` of the marginal chain. `k` has one entry for full-target samplers
/// and one per block for the Gibbs variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub y: Point,
    pub k: Vec<usize>,
}

/// Softmax of `log_w` computed with log-sum-exp.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for &l in log_w {
        if l.is_nan() || l == f64::INFINITY {
            return Err(Error::InvalidInput(format!("log-weight {l} is not allowed")));
        }
        if l > max {
            max = l;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    Ok(w)
}

/// Draws index `i` with probability `weights[i]` by inverting the cumulative sum
/// in stored order.
pub fn categorical_draw(weights: &[f64], rng: &mut ChainRng) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid probability {w}")));
        }
        total += w;
    }
    if weights.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { sum: total });
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the last partial sum
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}
