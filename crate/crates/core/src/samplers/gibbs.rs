use crate::cis::{blocks_of, cis_estimate_conditional, step_conditional_impl};
use crate::error::{Error, Result};
use crate::model::{categorical_draw, Functional, TargetDensity};
use crate::rng::{Stream, SELECT_STREAM};

use super::{check_common, ChainTrace, SamplerSpec};

/// MIIS within Gibbs. Blocks are swept in order; block `s` runs a CIS step on its
/// conditional given the already updated blocks `< s` and the stale blocks `> s`,
/// selects `k_s` and sets `y(s) = x_{k_s}(s)`.
///
/// The per-block estimates `sum_i W_{s,i} f(x_i(s), y(-s))` are recorded for every
/// functional; the trace's CIS estimates are their average over blocks, so a
/// single-block target reproduces [`super::miis_run`].
pub fn miis_gibbs_run(
    spec: &SamplerSpec,
    target: &dyn TargetDensity,
    functionals: &[Functional],
    y0: &[f64],
    m: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<ChainTrace> {
    let SamplerSpec::MiisGibbs(cfgs) = spec else {
        return Err(Error::Config(format!("{:?} is not MIIS within Gibbs", spec.kind())));
    };
    check_common(target, functionals, y0, m)?;
    let blocks = blocks_of(target)?;
    let d = blocks.num_blocks();
    if cfgs.len() != d {
        return Err(Error::Config(format!(
            "target has {d} blocks but {} CIS configurations were given",
            cfgs.len()
        )));
    }
    for (s, cfg) in cfgs.iter().enumerate() {
        if cfg.proposal().dim() != blocks.block_dim(s) {
            return Err(Error::Config(format!(
                "block {s} has dimension {} but its proposal has {}",
                blocks.block_dim(s),
                cfg.proposal().dim()
            )));
        }
    }
    if target.log_density(y0) == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(
            "initial state lies outside the target support".into(),
        ));
    }
    let mut trace = ChainTrace::new(spec.kind(), functionals, m, Some(d));
    let mut y = y0.to_vec();
    let mut ks = vec![0usize; d];
    let mut block_est = vec![vec![0.0; functionals.len()]; d];
    for t in 0..burn_in + m {
        let iter = stream.child(t as u64);
        let start = y.clone();
        let record = t >= burn_in;
        for s in 0..d {
            let bs = iter.child(s as u64);
            let out = step_conditional_impl(s, &y, ks[s], &cfgs[s], target, bs).map_err(|e| e.at_iteration(t))?;
            trace.density_evals += out.density_evals;
            let ps = out.system;
            if record {
                for (slot, f) in block_est[s].iter_mut().zip(functionals) {
                    *slot = cis_estimate_conditional(&ps, f, blocks, s, &y).map_err(|e| e.at_iteration(t))?;
                }
            }
            let knew =
                categorical_draw(&ps.weights, &mut bs.child(SELECT_STREAM).rng()).map_err(|e| e.at_iteration(t))?;
            blocks.insert(s, &mut y, &ps.particles[knew]);
            ks[s] = knew;
        }
        if record {
            let moved = y != start;
            trace.record_point(&y, functionals, moved);
            trace.retained_indices.push(ks.clone());
            let rb = trace.rb_estimates.as_mut().expect("Gibbs trace has block estimates");
            for (s, per_block) in rb.iter_mut().enumerate() {
                for (col, &v) in per_block.iter_mut().zip(&block_est[s]) {
                    col.push(v);
                }
            }
            let cis = trace.cis_estimates.as_mut().expect("MIIS trace has CIS estimates");
            for (j, col) in cis.iter_mut().enumerate() {
                col.push(block_est.iter().map(|b| b[j]).sum::<f64>() / d as f64);
            }
        }
    }
    Ok(trace)
}
