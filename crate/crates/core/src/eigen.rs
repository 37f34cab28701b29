//! Dense nonsymmetric eigenvalue solver.
//!
//! Balancing, Householder reduction to upper Hessenberg form and the
//! Francis double-shift QR iteration with exceptional shifts. Eigenvectors
//! are recovered on demand by inverse iteration against the original
//! matrix, which doubles as the residual check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::norm1;

/// Eigenvalues found by the QR sweep. `unconverged` counts the leading
/// block that failed to deflate within the iteration budget; in that case
/// `values` holds only the deflated part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<Complex64>,
    pub unconverged: usize,
}

const MAX_ITS_PER_EIGENVALUE: usize = 60;

pub fn eig(a: &DMatrix<f64>) -> Spectrum {
    assert!(a.is_square(), "eigenvalues need a square matrix");
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(h)
}

/// Diagonal similarity scaling by powers of two so that row and column
/// norms are comparable. Eigenvalues are unchanged.
pub fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= ginv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// In-place orthogonal reduction to upper Hessenberg form.
pub fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let alpha = if v[0] > 0.0 { -alpha } else { alpha };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        // Left: rows k+1.., all columns from k.
        for j in k..n {
            let dot: f64 = (0..len).map(|i| v[i] * a[(k + 1 + i, j)]).sum();
            for i in 0..len {
                a[(k + 1 + i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // Right: all rows, columns k+1..
        for i in 0..n {
            let dot: f64 = (0..len).map(|j| a[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..len {
                a[(i, k + 1 + j)] -= 2.0 * dot * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hqr(mut a: DMatrix<f64>) -> Spectrum {
    let n = a.nrows();
    let mut wr = vec![Complex64::new(0.0, 0.0); n];
    let mut found = vec![false; n];
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let ix = |i: isize| i as usize;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = a[(ix(l - 1), ix(l - 1))].abs() + a[(ix(l), ix(l))].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(ix(l), ix(l - 1))].abs() <= eps * s {
                    a[(ix(l), ix(l - 1))] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(ix(nn), ix(nn))];
            if l == nn {
                wr[ix(nn)] = Complex64::new(x + t, 0.0);
                found[ix(nn)] = true;
                nn -= 1;
            } else {
                let mut y = a[(ix(nn - 1), ix(nn - 1))];
                let mut w = a[(ix(nn), ix(nn - 1))] * a[(ix(nn - 1), ix(nn))];
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[ix(nn - 1)] = Complex64::new(x + z, 0.0);
                        wr[ix(nn)] = Complex64::new(x + z, 0.0);
                        if z != 0.0 {
                            wr[ix(nn)] = Complex64::new(x - w / z, 0.0);
                        }
                    } else {
                        wr[ix(nn)] = Complex64::new(x + p, -z);
                        wr[ix(nn - 1)] = Complex64::new(x + p, z);
                    }
                    found[ix(nn)] = true;
                    found[ix(nn - 1)] = true;
                    nn -= 2;
                } else {
                    if its == MAX_ITS_PER_EIGENVALUE {
                        let values = (0..n).filter(|&i| found[i]).map(|i| wr[i]).collect();
                        return Spectrum {
                            values,
                            unconverged: ix(nn) + 1,
                        };
                    }
                    if its % 10 == 0 && its > 0 {
                        // Exceptional shift to break cycling.
                        t += x;
                        for i in 0..=ix(nn) {
                            a[(i, i)] -= x;
                        }
                        let s = a[(ix(nn), ix(nn - 1))].abs() + a[(ix(nn - 1), ix(nn - 2))].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r, mut z);
                    let mut m = nn - 2;
                    loop {
                        let mm = ix(m);
                        z = a[(mm, mm)];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[(mm + 1, mm)] + a[(mm, mm + 1)];
                        q = a[(mm + 1, mm + 1)] - z - rr - ss;
                        r = a[(mm + 2, mm + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[(mm, mm - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[(mm - 1, mm - 1)].abs() + z.abs() + a[(mm + 1, mm + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in ix(m)..ix(nn - 1) {
                        a[(i + 2, i)] = 0.0;
                        if i != ix(m) {
                            a[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        let kk = ix(k);
                        if k != m {
                            p = a[(kk, kk - 1)];
                            q = a[(kk + 1, kk - 1)];
                            r = 0.0;
                            if k + 1 != nn {
                                r = a[(kk + 2, kk - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[(kk, kk - 1)] = -a[(kk, kk - 1)];
                                }
                            } else {
                                a[(kk, kk - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in kk..=ix(nn) {
                                p = a[(kk, j)] + q * a[(kk + 1, j)];
                                if k + 1 != nn {
                                    p += r * a[(kk + 2, j)];
                                    a[(kk + 2, j)] -= p * z;
                                }
                                a[(kk + 1, j)] -= p * y;
                                a[(kk, j)] -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in ix(l)..=ix(mmin) {
                                p = x * a[(i, kk)] + y * a[(i, kk + 1)];
                                if k + 1 != nn {
                                    p += z * a[(i, kk + 2)];
                                    a[(i, kk + 2)] -= p * r;
                                }
                                a[(i, kk + 1)] -= p * q;
                                a[(i, kk)] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Spectrum {
        values: wr,
        unconverged: 0,
    }
}

/// Right eigenvector for `lambda` by inverse iteration on `a`, together
/// with the relative residual `‖A v - λ v‖ / ‖A‖₁` for unit `v`.
pub fn eigenvector(a: &DMatrix<f64>, lambda: Complex64) -> (DVector<Complex64>, f64) {
    let n = a.nrows();
    let anorm = norm1(a).max(f64::MIN_POSITIVE);
    let ac = a.map(|v| Complex64::new(v, 0.0));
    // A tiny offset keeps the shifted matrix invertible while leaving it
    // close enough to singular for fast convergence.
    let shift = lambda + Complex64::new(1e-10 * anorm, 1e-10 * anorm);
    let mut m = ac.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    let mut v = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
    for _ in 0..4 {
        match lu.solve(&v) {
            Some(w) => {
                let nrm = w.norm();
                if !nrm.is_finite() || nrm == 0.0 {
                    break;
                }
                v = w.unscale(nrm);
            }
            None => break,
        }
    }
    let nrm = v.norm();
    v.unscale_mut(nrm);
    let res = (&ac * &v - v.scale(1.0) * lambda).norm() / anorm;
    (v, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn harmonic_oscillator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0]);
        let s = sorted(eig(&a).values);
        assert_relative_eq!(s[0].im, -2.0, epsilon = 1e-14);
        assert_relative_eq!(s[1].im, 2.0, epsilon = 1e-14);
        assert!(s[0].re.abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_exact() {
        let d = [3.0, -1.5, 0.25, 7.0];
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&d));
        let s = sorted(eig(&a).values);
        let mut e = d.to_vec();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in s.iter().zip(e) {
            assert_eq!(x.re, y);
            assert_eq!(x.im, 0.0);
        }
    }

    #[test]
    fn companion_matrix_roots() {
        // (s+1)(s+2)(s^2+2s+5): roots -1, -2, -1±2j
        let c = [1.0, 5.0, 13.0, 19.0, 10.0];
        let n = 4;
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -c[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let s = sorted(eig(&a).values);
        assert_relative_eq!(s[0].re, -2.0, epsilon = 1e-10);
        assert_relative_eq!(s[1].re, -1.0, epsilon = 1e-10);
        assert_relative_eq!(s[1].im, -2.0, epsilon = 1e-10);
        assert_relative_eq!(s[2].re, -1.0, epsilon = 1e-10);
        assert_relative_eq!(s[3].im, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn hessenberg_preserves_spectrum_and_shape() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 1.0 } else { 0.0 });
        let mut h = a.clone();
        hessenberg(&mut h);
        for i in 2..6 {
            for j in 0..i - 1 {
                assert_eq!(h[(i, j)], 0.0);
            }
        }
        assert_relative_eq!(h.trace(), a.trace(), epsilon = 1e-12);
    }

    #[test]
    fn inverse_iteration_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, -1.0]);
        for lam in eig(&a).values {
            let (_, res) = eigenvector(&a, lam);
            assert!(res < 1e-10, "residual {res} for {lam}");
        }
    }
}
