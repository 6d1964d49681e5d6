use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Lower bound on the reported IACT.
pub const IACT_FLOOR: f64 = 1e-3;

/// Sample autocovariances at lags `0..M` (biased, divided by `M`) via zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let m = series.len();
    let mean = series.iter().sum::<f64>() / m as f64;
    let len = (2 * m).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..m].iter().map(|z| z.re / (len as f64 * m as f64)).collect()
}

/// Integrated autocorrelation time `1 + 2 sum_l rho(l)`, truncated by Geyer's initial
/// positive sequence: pair sums `rho(2j) + rho(2j+1)` are accumulated while positive.
pub fn iact(series: &[f64]) -> Result<f64> {
    if series.len() < 100 {
        return Err(Error::InvalidInput(format!(
            "IACT needs at least 100 values (got {})",
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("IACT of a non-finite series".into()));
    }
    let acov = autocovariance(series);
    let c0 = acov[0];
    let scale = series.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(c0 > 1e-28 * scale * scale) {
        return Err(Error::DegenerateChain);
    }
    let rho = |l: usize| acov[l] / c0;
    // tau = -1 + 2 sum_{j} Gamma_j, Gamma_j = rho(2j) + rho(2j+1)
    let mut sum = 0.0;
    let mut j = 0;
    while 2 * j + 1 < acov.len() {
        let g = rho(2 * j) + rho(2 * j + 1);
        if g <= 0.0 {
            break;
        }
        sum += g;
        j += 1;
    }
    Ok((2.0 * sum - 1.0).max(IACT_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = Stream::new(seed).rng();
        let mut x = 0.0;
        let burn = 1000;
        let mut out = Vec::with_capacity(m);
        for t in 0..m + burn {
            let z: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + z;
            if t >= burn {
                out.push(x);
            }
        }
        out
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let s = ar1(0.5, 300, 4);
        let ac = autocovariance(&s);
        let mean = s.iter().sum::<f64>() / 300.0;
        for lag in [0, 1, 5, 40] {
            let direct: f64 = (0..300 - lag).map(|t| (s[t] - mean) * (s[t + lag] - mean)).sum::<f64>() / 300.0;
            assert!((ac[lag] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_has_unit_iact() {
        let tau = iact(&ar1(0.0, 100_000, 1)).unwrap();
        assert!((tau - 1.0).abs() < 0.1, "{tau}");
    }

    #[test]
    fn ar1_iact() {
        let tau = iact(&ar1(0.9, 1_000_000, 2)).unwrap();
        assert!((tau - 19.0).abs() < 1.9, "{tau}");
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(iact(&[2.0; 500]), Err(Error::DegenerateChain)));
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(iact(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn antithetic_series_hits_the_floor() {
        let s: Vec<f64> = (0..1000).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let tau = iact(&s).unwrap();
        assert!(tau >= IACT_FLOOR);
    }
}
