use crate::cis::{cis_estimate, step_local};
use crate::error::{Error, Result};
use crate::model::{categorical_draw, Functional, TargetDensity};
use crate::rng::{Stream, SELECT_STREAM};

use super::{check_common, ChainTrace, SamplerSpec};

/// Full-target MIIS. Each iteration runs one CIS step around the current state,
/// selects `k ~ W` and moves to `x_k` (the transition kernel is the identity, so no
/// further redraw is needed). The CIS estimates come from the same particle system
/// used for selection.
///
/// `log m` of the retained particle is carried over from the previous iteration, so
/// one step costs `N - 1` density evaluations.
pub fn miis_run(
    spec: &SamplerSpec,
    target: &dyn TargetDensity,
    functionals: &[Functional],
    y0: &[f64],
    m: usize,
    burn_in: usize,
    stream: Stream,
) -> Result<ChainTrace> {
    let SamplerSpec::Miis(cfg) = spec else {
        return Err(Error::Config(format!(
            "{:?} is not a full-target MIIS sampler",
            spec.kind()
        )));
    };
    check_common(target, functionals, y0, m)?;
    let mut trace = ChainTrace::new(spec.kind(), functionals, m, None);
    let mut y = y0.to_vec();
    let mut k = 0usize;
    let mut log_m_y = target.log_density(&y);
    trace.density_evals += 1;
    if log_m_y == f64::NEG_INFINITY || log_m_y.is_nan() {
        return Err(Error::InvalidInput(
            "initial state lies outside the target support".into(),
        ));
    }
    for t in 0..burn_in + m {
        let block = stream.child(t as u64).child(0);
        let out = step_local(cfg, &y, k, &y, |x| target.log_density(x), Some(log_m_y), block)
            .map_err(|e| e.at_iteration(t))?;
        trace.density_evals += out.density_evals;
        let ps = out.system;
        let knew =
            categorical_draw(&ps.weights, &mut block.child(SELECT_STREAM).rng()).map_err(|e| e.at_iteration(t))?;
        let moved = ps.particles[knew] != y;
        y.clone_from(&ps.particles[knew]);
        k = knew;
        log_m_y = out.log_target[knew];
        if t >= burn_in {
            trace.record_point(&y, functionals, moved);
            trace.retained_indices.push(vec![k]);
            let est = trace.cis_estimates.as_mut().expect("MIIS trace has CIS estimates");
            for (col, f) in est.iter_mut().zip(functionals) {
                col.push(cis_estimate(&ps, f).map_err(|e| e.at_iteration(t))?);
            }
        }
    }
    Ok(trace)
}
