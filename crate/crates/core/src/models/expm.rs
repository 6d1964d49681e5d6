//! Matrix exponentials for the MMPP likelihood.

use nalgebra::DMatrix;

/// `exp(A t)` for a 2x2 matrix `a = [[a11, a12], [a21, a22]]` with real eigenvalues
/// (true for `Q - Psi`).
///
/// Uses `exp(At) = C I + S (A - m I)` with `m = tr(A)/2`, `delta` the eigenvalue
/// half-gap, `S = e^{lambda_2 t} expm1(2 delta t) / (2 delta)` and `C = e^{lambda_2 t} +
/// delta S`. Everything is expressed through the smaller eigenvalue so no large
/// exponentials cancel. The `expm1(x)/x` factor switches to its series near zero.
#[inline]
pub fn expm_2x2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let h = 0.5 * (a[0][0] - a[1][1]);
    let disc = h * h + a[0][1] * a[1][0];
    let delta = disc.max(0.0).sqrt();
    let x = 2.0 * delta * t;
    let g = if x < 1e-5 {
        1.0 + x * (0.5 + x / 6.0)
    } else {
        x.exp_m1() / x
    };
    let e2 = ((m - delta) * t).exp();
    let s = e2 * t * g;
    let c = e2 + delta * s;
    [[c + s * h, s * a[0][1]], [s * a[1][0], c - s * h]]
}

/// Matrix exponential by scaling and squaring with a degree-6 diagonal Pade
/// approximant.
pub fn expm_pade6(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix exponential of a non-square matrix");
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15_840.0,
        1.0 / 665_280.0,
    ];
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let id = DMatrix::<f64>::identity(n, n);
    let mut power = id.clone();
    let mut num = id.clone() * C[0];
    let mut den = id.clone() * C[0];
    for (j, &c) in C.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * c;
        if j % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is nonsingular for a scaled matrix");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}
