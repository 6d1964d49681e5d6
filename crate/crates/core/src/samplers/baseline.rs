use rand::Rng;

use crate::cis::blocks_of;
use crate::error::{Error, Result};
use crate::model::{Functional, TargetDensity};
use crate::rng::{Stream, ACCEPT_STREAM};

use super::{check_common, ChainTrace, SamplerSpec};

/// Exact Gibbs, Metropolis-within-Gibbs and random-walk Metropolis.
///
/// The Gibbs baselines perform `inner_repeats` successive updates of each block per
/// sweep. Exact Gibbs records the analytic conditional expectations of block `s`
/// (given the blocks as they stand when `s` is reached) as its per-block estimates,
/// when the target provides them for every functional.
pub fn baseline_run(
    spec: &SamplerSpec,
    target: &dyn TargetDensity,
    functionals: &[Functional],
    y0: &[f64],
    m: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<ChainTrace> {
    check_common(target, functionals, y0, m)?;
    let log_m0 = target.log_density(y0);
    if log_m0 == f64::NEG_INFINITY || log_m0.is_nan() {
        return Err(Error::InvalidInput(
            "initial state lies outside the target support".into(),
        ));
    }
    match spec {
        SamplerSpec::GibbsExact { inner_repeats } => {
            gibbs_exact(spec, *inner_repeats, target, functionals, y0, m, burn_in, stream)
        }
        SamplerSpec::Mwg {
            proposals,
            inner_repeats,
        } => {
            let blocks = blocks_of(target)?;
            if proposals.len() != blocks.num_blocks() {
                return Err(Error::Config(format!(
                    "target has {} blocks but {} proposals were given",
                    blocks.num_blocks(),
                    proposals.len()
                )));
            }
            check_repeats(*inner_repeats)?;
            let mut trace = ChainTrace::new(spec.kind(), functionals, m, None);
            let mut y = y0.to_vec();
            for t in 0..burn_in + m {
                let iter = stream.child(t as u64);
                let start = y.clone();
                for (s, q) in proposals.iter().enumerate() {
                    let mut current = blocks.extract(s, &y);
                    let mut lm_cur = target.log_conditional(s, &current, &y);
                    trace.density_evals += 1;
                    // the proposal depends only on the other blocks, fixed within the update
                    let mut lq_cur = q.log_density(0, &current, None, &y);
                    for r in 0..*inner_repeats {
                        let mut rng = iter.child(s as u64).child(r as u64).rng();
                        let prop = q.sample(0, None, &y, &mut rng);
                        let lm_prop = target.log_conditional(s, &prop, &y);
                        trace.density_evals += 1;
                        let lq_prop = q.log_density(0, &prop, None, &y);
                        let log_alpha = lm_prop - lm_cur + lq_cur - lq_prop;
                        let u: f64 = rng.random();
                        if log_alpha >= 0.0 || u.ln() < log_alpha {
                            current = prop;
                            lm_cur = lm_prop;
                            lq_cur = lq_prop;
                        }
                    }
                    blocks.insert(s, &mut y, &current);
                }
                if t >= burn_in {
                    let moved = y != start;
                    trace.record_point(&y, functionals, moved);
                    trace.retained_indices.push(Vec::new());
                }
            }
            Ok(trace)
        }
        SamplerSpec::Rwm(kernel) => {
            if kernel.dim() != target.dim() {
                return Err(Error::Config(format!(
                    "random-walk covariance is {0}x{0} but the target has dimension {1}",
                    kernel.dim(),
                    target.dim()
                )));
            }
            let mut trace = ChainTrace::new(spec.kind(), functionals, m, None);
            trace.density_evals += 1;
            let mut y = y0.to_vec();
            let mut lm_cur = log_m0;
            for t in 0..burn_in + m {
                let block = stream.child(t as u64).child(0);
                let prop = kernel.draw_around(&y, &mut block.child(0).rng());
                let lm_prop = target.log_density(&prop);
                trace.density_evals += 1;
                let u: f64 = block.child(ACCEPT_STREAM).rng().random();
                let log_alpha = lm_prop - lm_cur;
                let accept = !log_alpha.is_nan() && (log_alpha >= 0.0 || u.ln() < log_alpha);
                let moved = accept && prop != y;
                if accept {
                    y = prop;
                    lm_cur = lm_prop;
                }
                if t >= burn_in {
                    trace.record_point(&y, functionals, moved);
                    trace.retained_indices.push(Vec::new());
                }
            }
            Ok(trace)
        }
        _ => Err(Error::Config(format!("{:?} is not a baseline sampler", spec.kind()))),
    }
}

fn check_repeats(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::Config("inner_repeats must be at least 1".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gibbs_exact(
    spec: &SamplerSpec,
    inner_repeats: usize,
    target: &dyn TargetDensity,
    functionals: &[Functional],
    y0: &[f64],
    m: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<ChainTrace> {
    check_repeats(inner_repeats)?;
    let blocks = blocks_of(target)?;
    let d = blocks.num_blocks();
    let mut probe_rng = stream.child(u64::MAX).rng();
    if target.sample_conditional(0, y0, &mut probe_rng).is_none() {
        return Err(Error::Config("exact Gibbs needs analytic conditional samplers".into()));
    }
    let has_rb = functionals
        .iter()
        .all(|f| (0..d).all(|s| target.conditional_expectation(s, f, y0).is_some()));
    let mut trace = ChainTrace::new(spec.kind(), functionals, m, has_rb.then_some(d));
    let mut y = y0.to_vec();
    let mut block_est = vec![vec![0.0; functionals.len()]; d];
    for t in 0..burn_in + m {
        let iter = stream.child(t as u64);
        let start = y.clone();
        for s in 0..d {
            if has_rb && t >= burn_in {
                for (slot, f) in block_est[s].iter_mut().zip(functionals) {
                    *slot = target.conditional_expectation(s, f, &y).expect("checked above");
                }
            }
            for r in 0..inner_repeats {
                let mut rng = iter.child(s as u64).child(r as u64).rng();
                let draw = target
                    .sample_conditional(s, &y, &mut rng)
                    .ok_or_else(|| Error::Config("exact Gibbs needs analytic conditional samplers".into()))?;
                blocks.insert(s, &mut y, &draw);
            }
        }
        if t >= burn_in {
            let moved = y != start;
            trace.record_point(&y, functionals, moved);
            trace.retained_indices.push(Vec::new());
            if let Some(rb) = trace.rb_estimates.as_mut() {
                for (s, per_block) in rb.iter_mut().enumerate() {
                    for (col, &v) in per_block.iter_mut().zip(&block_est[s]) {
                        col.push(v);
                    }
                }
            }
        }
    }
    Ok(trace)
}
