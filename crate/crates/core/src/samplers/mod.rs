//! Full chains: MIIS (simple, antithetic, random walk), MIIS within Gibbs and the
//! exact Gibbs, Metropolis-within-Gibbs and random-walk Metropolis baselines.
//!
//! All samplers share one random-stream layout. Iteration `t` uses `chain.child(t)`;
//! within it, block `s` uses `.child(s)` (full-target samplers use block 0). Every
//! chain starts from `k = 0`.

mod baseline;
mod gibbs;
mod miis;

use std::sync::Arc;

pub use baseline::baseline_run;
pub use gibbs::miis_gibbs_run;
pub use miis::miis_run;

use crate::cis::{CisConfig, CisVariant};
use crate::error::{Error, Result};
use crate::model::{Functional, Point, ProposalFamily, TargetDensity};
use crate::proposals::GaussianRandomWalk;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    MiisSimple,
    MiisAntithetic,
    MiisRandomWalk,
    MiisGibbs,
    GibbsExact,
    Mwg,
    Rwm,
}

impl SamplerKind {
    pub fn is_miis(self) -> bool {
        matches!(
            self,
            SamplerKind::MiisSimple
                | SamplerKind::MiisAntithetic
                | SamplerKind::MiisRandomWalk
                | SamplerKind::MiisGibbs
        )
    }

    pub fn is_gibbs(self) -> bool {
        matches!(
            self,
            SamplerKind::MiisGibbs | SamplerKind::GibbsExact | SamplerKind::Mwg
        )
    }
}

/// A fully specified sampler.
#[derive(Clone)]
pub enum SamplerSpec {
    /// Full-target MIIS; the variant is taken from the CIS configuration.
    Miis(CisConfig),
    /// One CIS configuration per block.
    MiisGibbs(Vec<CisConfig>),
    GibbsExact {
        inner_repeats: usize,
    },
    /// Independence Metropolis-Hastings updates of each block, proposals given the
    /// other blocks.
    Mwg {
        proposals: Vec<Arc<dyn ProposalFamily>>,
        inner_repeats: usize,
    },
    Rwm(Arc<GaussianRandomWalk>),
}

impl std::fmt::Debug for SamplerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SamplerSpec::Miis(c) => f.debug_tuple("Miis").field(c).finish(),
            SamplerSpec::MiisGibbs(c) => f.debug_tuple("MiisGibbs").field(c).finish(),
            SamplerSpec::GibbsExact { inner_repeats } => f
                .debug_struct("GibbsExact")
                .field("inner_repeats", inner_repeats)
                .finish(),
            SamplerSpec::Mwg {
                proposals,
                inner_repeats,
            } => f
                .debug_struct("Mwg")
                .field("blocks", &proposals.len())
                .field("inner_repeats", inner_repeats)
                .finish(),
            SamplerSpec::Rwm(k) => f.debug_tuple("Rwm").field(k).finish(),
        }
    }
}

impl SamplerSpec {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerSpec::Miis(c) => match c.variant() {
                CisVariant::Simple => SamplerKind::MiisSimple,
                CisVariant::Antithetic => SamplerKind::MiisAntithetic,
                CisVariant::RandomWalk => SamplerKind::MiisRandomWalk,
            },
            SamplerSpec::MiisGibbs(_) => SamplerKind::MiisGibbs,
            SamplerSpec::GibbsExact { .. } => SamplerKind::GibbsExact,
            SamplerSpec::Mwg { .. } => SamplerKind::Mwg,
            SamplerSpec::Rwm(_) => SamplerKind::Rwm,
        }
    }
}

/// Post-burn-in record of a chain. Every per-iteration array has length `M`.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub kind: SamplerKind,
    pub functional_names: Vec<String>,
    pub states: Vec<Point>,
    /// Retained index per iteration: one entry for full-target MIIS, one per block for
    /// MIIS within Gibbs, none for the baselines.
    pub retained_indices: Vec<Vec<usize>>,
    /// `f(y^(t))` for every registered functional, `[functional][t]`.
    pub point_values: Vec<Vec<f64>>,
    /// Per-iteration CIS estimates `[functional][t]` (MIIS samplers). For the Gibbs
    /// variant this is the average of the block estimates.
    pub cis_estimates: Option<Vec<Vec<f64>>>,
    /// Per-block conditional estimates `[block][functional][t]` (Gibbs samplers with
    /// a conditional estimate of every functional).
    pub rb_estimates: Option<Vec<Vec<Vec<f64>>>>,
    pub moved: Vec<bool>,
    /// Target (or conditional) density evaluations, burn-in included.
    pub density_evals: u64,
}

impl ChainTrace {
    pub(crate) fn new(kind: SamplerKind, functionals: &[Functional], m: usize, blocks: Option<usize>) -> Self {
        let p = functionals.len();
        ChainTrace {
            kind,
            functional_names: functionals.iter().map(|f| f.name().to_string()).collect(),
            states: Vec::with_capacity(m),
            retained_indices: Vec::with_capacity(m),
            point_values: vec![Vec::with_capacity(m); p],
            cis_estimates: kind.is_miis().then(|| vec![Vec::with_capacity(m); p]),
            rb_estimates: blocks.map(|d| vec![vec![Vec::with_capacity(m); p]; d]),
            moved: Vec::with_capacity(m),
            density_evals: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn functional_index(&self, name: &str) -> Option<usize> {
        self.functional_names.iter().position(|n| n == name)
    }

    pub fn num_blocks(&self) -> Option<usize> {
        self.rb_estimates.as_ref().map(Vec::len)
    }

    /// Fraction of recorded iterations in which the state changed.
    pub fn acceptance_rate(&self) -> f64 {
        if self.moved.is_empty() {
            return 0.0;
        }
        self.moved.iter().filter(|&&m| m).count() as f64 / self.moved.len() as f64
    }

    /// Coordinate `c` of the recorded states.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        self.states.iter().map(|y| y[c]).collect()
    }

    pub(crate) fn record_point(&mut self, y: &[f64], functionals: &[Functional], moved: bool) {
        self.states.push(y.to_vec());
        self.moved.push(moved);
        for (col, f) in self.point_values.iter_mut().zip(functionals) {
            col.push(f.eval(y));
        }
    }
}

/// Runs any sampler.
pub fn run_chain(
    spec: &SamplerSpec,
    target: &dyn TargetDensity,
    functionals: &[Functional],
    y0: &[f64],
    m: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<ChainTrace> {
    match spec.kind() {
        SamplerKind::MiisSimple | SamplerKind::MiisAntithetic | SamplerKind::MiisRandomWalk => {
            miis_run(spec, target, functionals, y0, m, burn_in, stream)
        }
        SamplerKind::MiisGibbs => miis_gibbs_run(spec, target, functionals, y0, m, burn_in, stream),
        _ => baseline_run(spec, target, functionals, y0, m, burn_in, stream),
    }
}

pub(crate) fn check_common(target: &dyn TargetDensity, functionals: &[Functional], y0: &[f64], m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("chain length M must be at least 1".into()));
    }
    if y0.len() != target.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has dimension {} but the target has {}",
            y0.len(),
            target.dim()
        )));
    }
    for (i, f) in functionals.iter().enumerate() {
        if functionals[..i].iter().any(|g| g.name() == f.name()) {
            return Err(Error::InvalidInput(format!(
                "functional `{}` registered twice",
                f.name()
            )));
        }
    }
    Ok(())
}
