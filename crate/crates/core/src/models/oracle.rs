//! Discrete targets small enough to enumerate the MIIS transition kernel exactly.
//!
//! The kernel acts on the extended state `(y, k)` (one `(atom, k)` pair per block for
//! the Gibbs variant). Weights come from [`CisConfig::log_weight`], so the matrix is
//! built from the same code the samplers run.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cis::{CisConfig, CisVariant};
use crate::error::{Error, Result};
use crate::model::{normalize_log_weights, BlockStructure, NoAuxiliary, Point, ProposalFamily, TargetDensity};
use crate::proposals::DiscreteProposal;
use crate::rng::ChainRng;

const MAX_ATOMS: usize = 5;
const MAX_PARTICLES: usize = 3;
const MAX_STATES: usize = 4096;

/// A distribution on a product of finite scalar atom sets, one set per block.
#[derive(Debug, Clone)]
pub struct DiscreteOracleTarget {
    atoms: Vec<Vec<f64>>,
    /// Joint probabilities in row-major order over the blocks' atom indices.
    probs: Vec<f64>,
    blocks: BlockStructure,
}

impl DiscreteOracleTarget {
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.iter().any(|a| a.is_empty()) {
            return Err(Error::Config("every block needs at least one atom".into()));
        }
        for a in &atoms {
            for (i, x) in a.iter().enumerate() {
                if a[..i].contains(x) {
                    return Err(Error::Config(format!("duplicate atom {x}")));
                }
            }
        }
        let size: usize = atoms.iter().map(Vec::len).product();
        if probs.len() != size {
            return Err(Error::Config(format!(
                "{size} joint atoms but {} probabilities",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("oracle probabilities must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("oracle probabilities sum to {total}")));
        }
        let blocks = BlockStructure::singletons(atoms.len());
        Ok(DiscreteOracleTarget { atoms, probs, blocks })
    }

    /// One block with the given atoms.
    pub fn scalar(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::new(vec![atoms], probs)
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_blocks(&self) -> usize {
        self.atoms.len()
    }

    /// Flat index of a joint atom-index tuple.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.atoms).fold(0, |acc, (&i, a)| acc * a.len() + i)
    }

    fn atom_index(&self, block: usize, value: f64) -> Option<usize> {
        self.atoms[block].iter().position(|&a| a == value)
    }

    pub fn point(&self, idx: &[usize]) -> Point {
        idx.iter().enumerate().map(|(s, &i)| self.atoms[s][i]).collect()
    }

    /// Exact expectation of `f`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut idx = vec![0; self.num_blocks()];
        let mut acc = 0.0;
        loop {
            acc += self.probs[self.flat_index(&idx)] * f(&self.point(&idx));
            if !advance(&mut idx, |s| self.atoms[s].len()) {
                return acc;
            }
        }
    }
}

/// Odometer increment; false once every combination has been visited.
fn advance(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for pos in (0..idx.len()).rev() {
        idx[pos] += 1;
        if idx[pos] < radix(pos) {
            return true;
        }
        idx[pos] = 0;
    }
    false
}

impl TargetDensity for DiscreteOracleTarget {
    fn dim(&self) -> usize {
        self.atoms.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut idx = Vec::with_capacity(x.len());
        for (s, &v) in x.iter().enumerate() {
            match self.atom_index(s, v) {
                Some(i) => idx.push(i),
                None => return f64::NEG_INFINITY,
            }
        }
        self.probs[self.flat_index(&idx)].ln()
    }

    fn block_structure(&self) -> Option<&BlockStructure> {
        Some(&self.blocks)
    }

    fn sample_exact(&self, rng: &mut ChainRng) -> Option<Point> {
        let flat = crate::model::categorical_draw(&self.probs, rng).ok()?;
        let mut idx = vec![0; self.num_blocks()];
        let mut rest = flat;
        for s in (0..self.num_blocks()).rev() {
            idx[s] = rest % self.atoms[s].len();
            rest /= self.atoms[s].len();
        }
        Some(self.point(&idx))
    }
}

/// Sampler whose kernel is enumerated: simple-IS CIS with `n` particles and one
/// discrete proposal per block (a single block for the full-target sampler).
#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub n: usize,
    pub proposals: Vec<DiscreteProposal>,
    /// Permit `n < 3`.
    pub allow_small_n: bool,
}

/// Exact transition matrix over extended states.
#[derive(Debug, Clone)]
pub struct OracleKernel {
    /// Per state: atom index and retained index for every block.
    pub states: Vec<(Vec<usize>, Vec<usize>)>,
    pub matrix: DMatrix<f64>,
    n: usize,
}

impl OracleKernel {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.matrix.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Stationary distribution: solves `p P = p`, `sum p = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut a = self.matrix.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let p = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("kernel has no unique stationary law".into()))?;
        Ok(p.iter().copied().collect())
    }

    /// The law the extended chain should leave invariant: `pi(y) / N^d` on every
    /// `(y, k)`.
    pub fn expected_stationary(&self, target: &DiscreteOracleTarget) -> Vec<f64> {
        let scale = (self.n as f64).powi(target.num_blocks() as i32);
        self.states
            .iter()
            .map(|(atoms, _)| target.probs()[target.flat_index(atoms)] / scale)
            .collect()
    }
}

/// Enumerates the exact transition kernel of full-target MIIS (one block) or
/// MIIS-within-Gibbs (one proposal per block, blocks updated in order).
pub fn discrete_oracle_kernel(spec: &OracleSpec, target: &DiscreteOracleTarget) -> Result<OracleKernel> {
    let d = target.num_blocks();
    let n = spec.n;
    if spec.proposals.len() != d {
        return Err(Error::Config(format!(
            "{d} blocks but {} proposals",
            spec.proposals.len()
        )));
    }
    if target.atoms.iter().any(|a| a.len() > MAX_ATOMS) || n > MAX_PARTICLES || n == 0 {
        return Err(Error::TooLarge(format!(
            "oracle enumeration needs <= {MAX_ATOMS} atoms per block and 1 <= N <= {MAX_PARTICLES}"
        )));
    }
    let states_per_block: Vec<usize> = target.atoms.iter().map(|a| a.len() * n).collect();
    let total: usize = states_per_block.iter().product();
    if total > MAX_STATES {
        return Err(Error::TooLarge(format!("{total} extended states exceed {MAX_STATES}")));
    }
    let configs: Vec<CisConfig> = spec
        .proposals
        .iter()
        .map(|p| {
            CisConfig::builder(CisVariant::Simple, n, Arc::new(p.clone()), Arc::new(NoAuxiliary))
                .allow_small_n(spec.allow_small_n)
                .build()
        })
        .collect::<Result<_>>()?;

    // support check: every atom with conditional mass needs proposal mass
    for (s, prop) in spec.proposals.iter().enumerate() {
        if prop.dim() != 1 {
            return Err(Error::Config("oracle proposals must be scalar".into()));
        }
        for &a in &target.atoms[s] {
            if prop.mass(&[a]) <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "block {s} atom {a} has target mass but zero proposal mass"
                )));
            }
        }
    }

    let mut states = Vec::with_capacity(total);
    let mut atom_idx = vec![0usize; d];
    loop {
        let mut ks = vec![0usize; d];
        loop {
            states.push((atom_idx.clone(), ks.clone()));
            if !advance(&mut ks, |_| n) {
                break;
            }
        }
        if !advance(&mut atom_idx, |s| target.atoms[s].len()) {
            break;
        }
    }
    let index_of = |atoms: &[usize], ks: &[usize]| -> usize {
        let mut idx = 0;
        for s in 0..d {
            idx = idx * target.atoms[s].len() + atoms[s];
        }
        for &k in ks {
            idx = idx * n + k;
        }
        idx
    };
    // states were pushed in atoms-major, then k order; check the indexing agrees
    debug_assert!(states.iter().enumerate().all(|(i, (a, k))| index_of(a, k) == i));

    let mut matrix = DMatrix::<f64>::identity(total, total);
    for s in 0..d {
        let mut block_matrix = DMatrix::<f64>::zeros(total, total);
        for (from, (atoms, ks)) in states.iter().enumerate() {
            let y = target.point(atoms);
            let moves = block_moves(&configs[s], &spec.proposals[s], target, s, &y, atoms[s], ks[s])?;
            for ((to_atom, to_k), p) in moves {
                let mut a2 = atoms.clone();
                a2[s] = to_atom;
                let mut k2 = ks.clone();
                k2[s] = to_k;
                block_matrix[(from, index_of(&a2, &k2))] += p;
            }
        }
        matrix = &matrix * &block_matrix;
    }
    Ok(OracleKernel { states, matrix, n })
}

/// Transition probabilities of one block update from `(atom, k)`, as
/// `((new atom, new k), probability)` pairs.
fn block_moves(
    cfg: &CisConfig,
    proposal: &DiscreteProposal,
    target: &DiscreteOracleTarget,
    block: usize,
    y: &[f64],
    atom: usize,
    k: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    let n = cfg.n();
    let atoms = &target.atoms[block];
    let na = atoms.len();
    let mut out = Vec::new();
    // odometer over the atoms of the N - 1 free particles
    let mut free = vec![0usize; n - 1];
    loop {
        let mut chosen = Vec::with_capacity(n);
        let mut prob = 1.0;
        let mut f = free.iter();
        for i in 0..n {
            if i == k {
                chosen.push(atom);
            } else {
                let a = *f.next().expect("n - 1 free particles");
                prob *= proposal.mass(&[atoms[a]]);
                chosen.push(a);
            }
        }
        if prob > 0.0 {
            let log_w: Vec<f64> = chosen
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let x = [atoms[a]];
                    let lm = target.log_conditional(block, &x, y);
                    cfg.log_weight(i, &x, lm, None, y)
                })
                .collect();
            let w = normalize_log_weights(&log_w)?;
            for (i, &wi) in w.iter().enumerate() {
                if wi > 0.0 {
                    out.push(((chosen[i], i), prob * wi));
                }
            }
        }
        if !advance(&mut free, |_| na) {
            break;
        }
    }
    Ok(out)
}
