use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default batch length `floor(sqrt(M))`.
pub fn default_batch_len(m: usize) -> usize {
    ((m as f64).sqrt().floor() as usize).max(1)
}

/// Overlapping batch means estimate of the covariance matrix of the column means of
/// `series` (`M x p`).
///
/// With batch length `b`, batch means `Y_j` over windows `[j, j + b)` for
/// `j = 0..=M-b` and grand mean `Y`, the long-run covariance is
/// `S = M b / ((M - b)(M - b + 1)) sum_j (Y_j - Y)(Y_j - Y)^T`, and the covariance of
/// the mean is `S / M`.
pub fn obm_covariance(series: &DMatrix<f64>, batch_len: usize) -> Result<DMatrix<f64>> {
    let m = series.nrows();
    let p = series.ncols();
    if batch_len == 0 || batch_len >= m {
        return Err(Error::InvalidInput(format!(
            "batch length must satisfy 1 <= b < M (b = {batch_len}, M = {m})"
        )));
    }
    let b = batch_len;
    let grand: Vec<f64> = (0..p).map(|c| series.column(c).mean()).collect();
    // centred prefix sums keep the batch means accurate for series with large offsets
    let mut prefix = DMatrix::<f64>::zeros(m + 1, p);
    for c in 0..p {
        let mut acc = 0.0;
        for t in 0..m {
            acc += series[(t, c)] - grand[c];
            prefix[(t + 1, c)] = acc;
        }
    }
    let nb = m - b + 1;
    let mut dev = DMatrix::<f64>::zeros(nb, p);
    for j in 0..nb {
        for c in 0..p {
            dev[(j, c)] = (prefix[(j + b, c)] - prefix[(j, c)]) / b as f64;
        }
    }
    let scale = (m * b) as f64 / (((m - b) * (m - b + 1)) as f64) / m as f64;
    let mut cov = dev.transpose() * &dev * scale;
    // exact symmetry
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_series_gives_zero() {
        let s = DMatrix::from_element(100, 2, 3.5);
        let c = obm_covariance(&s, 10).unwrap();
        assert!(c.iter().all(|&v| v.abs() < 1e-20));
    }

    #[test]
    fn iid_normal_mean_variance() {
        let m = 100_000;
        let mut rng = Stream::new(21).rng();
        let s = DMatrix::from_fn(m, 1, |_, _| StandardNormal.sample(&mut rng));
        let c = obm_covariance(&s, default_batch_len(m)).unwrap();
        let ratio = c[(0, 0)] * m as f64;
        assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn negated_column_is_perfectly_anticorrelated() {
        let mut rng = Stream::new(3).rng();
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = DMatrix::from_fn(500, 2, |r, c| if c == 0 { x[r] } else { -x[r] });
        let cov = obm_covariance(&s, 22).unwrap();
        assert!((cov[(0, 1)] + cov[(0, 0)]).abs() < 1e-12 * cov[(0, 0)].abs().max(1e-300));
        assert!((cov[(1, 1)] - cov[(0, 0)]).abs() < 1e-12 * cov[(0, 0)]);
    }

    #[test]
    fn batch_length_must_be_below_m() {
        let s = DMatrix::from_element(10, 1, 1.0);
        assert!(obm_covariance(&s, 10).is_err());
        assert!(obm_covariance(&s, 0).is_err());
    }

    #[test]
    fn matches_a_direct_loop() {
        let mut rng = Stream::new(9).rng();
        let (m, b) = (57, 7);
        let s = DMatrix::from_fn(m, 2, |_, _| StandardNormal.sample(&mut rng));
        let cov = obm_covariance(&s, b).unwrap();
        let gm: Vec<f64> = (0..2)
            .map(|c| (0..m).map(|t| s[(t, c)]).sum::<f64>() / m as f64)
            .collect();
        let mut acc = [[0.0; 2]; 2];
        for j in 0..=m - b {
            let bm: Vec<f64> = (0..2)
                .map(|c| (j..j + b).map(|t| s[(t, c)]).sum::<f64>() / b as f64)
                .collect();
            for i in 0..2 {
                for k in 0..2 {
                    acc[i][k] += (bm[i] - gm[i]) * (bm[k] - gm[k]);
                }
            }
        }
        let scale = (m * b) as f64 / ((m - b) * (m - b + 1)) as f64 / m as f64;
        for i in 0..2 {
            for k in 0..2 {
                assert!((cov[(i, k)] - scale * acc[i][k]).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn output_is_symmetric_psd(seed in 0u64..1000, m in 20usize..200, p in 1usize..4) {
            let mut rng = Stream::new(seed).rng();
            let s = DMatrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng));
            let cov = obm_covariance(&s, default_batch_len(m)).unwrap();
            prop_assert_eq!(&cov, &cov.transpose());
            let eig = cov.symmetric_eigen();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));
        }
    }
}
