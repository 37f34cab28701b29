//! Dense helpers shared by the analysis modules: the shifted complex solve
//! behind frequency responses and a Padé matrix exponential used as an
//! independent reference for the integrator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `(jωI - A) x = b` by complex LU. A pivot below `1e-13·‖A‖₁`
/// is treated as singularity at this ω.
pub fn solve_shifted(a: &DMatrix<f64>, omega: f64, b: &DVector<f64>) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let mut m = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(-a[(i, j)], 0.0));
    for i in 0..n {
        m[(i, i)] += Complex64::new(0.0, omega);
    }
    let scale = norm1(a).max(omega.abs()).max(1.0);
    let lu = m.lu();
    let u = lu.u();
    let tiny = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if n > 0 && tiny < 1e-13 * scale {
        return Err(Error::Singular { omega });
    }
    let rhs = b.map(|v| Complex64::new(v, 0.0));
    lu.solve(&rhs).ok_or(Error::Singular { omega })
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (Higham 2005 without the low-degree shortcuts).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let nrm = norm1(a);
    let s = if nrm > theta13 {
        (nrm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Exact response of `ẋ = A x + b` from `x(0) = 0` at time `t`, through the
/// augmented exponential `exp([[A, b], [0, 0]] t)`.
pub fn forced_response(a: &DMatrix<f64>, b: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    m.view_mut((0, n), (n, 1)).copy_from(&(b * t));
    let e = expm(&m);
    e.view((0, n), (n, 1)).into_owned().column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_of_rotation_generator() {
        let t = 2.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)], t.cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(0, 1)], t.sin(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 0)], -t.sin(), epsilon = 1e-13);
    }

    #[test]
    fn expm_of_large_diagonal_scales() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-40.0, 3.0, 0.0]));
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)], (-40f64).exp(), max_relative = 1e-11);
        assert_relative_eq!(e[(1, 1)], 3f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(2, 2)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn forced_first_order_lag() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let b = DVector::from_element(1, 4.0);
        let x = forced_response(&a, &b, 0.7);
        assert_relative_eq!(x[0], 2.0 * (1.0 - (-1.4f64).exp()), epsilon = 1e-13);
    }

    #[test]
    fn shifted_solve_matches_first_order_formula() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DVector::from_element(1, 1.0);
        let x = solve_shifted(&a, 1.0, &b).unwrap();
        let expect = Complex64::new(1.0, 0.0) / Complex64::new(1.0, 1.0);
        assert_relative_eq!(x[0].re, expect.re, epsilon = 1e-15);
        assert_relative_eq!(x[0].im, expect.im, epsilon = 1e-15);
    }

    #[test]
    fn shifted_solve_reports_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = DVector::from_element(2, 1.0);
        assert!(matches!(solve_shifted(&a, 1.0, &b), Err(Error::Singular { .. })));
    }
}
