//! Eigenvalues of small real matrices by balancing, Householder reduction to
//! upper Hessenberg form and Francis double-shift QR sweeps.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;

/// Hard cap on the total number of QR sweeps for one matrix.
pub const MAX_QR_SWEEPS: usize = 500;

/// One eigenvalue `re + j*im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Eigenvalue<T> {
    /// Distance to the point `re + j*im` in the complex plane.
    pub fn distance_to(&self, re: T, im: T) -> T {
        (self.re - re).hypot(self.im - im)
    }
}

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Vec<Eigenvalue<T>>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    if !m.is_finite() {
        return Err(Error::dim("matrix has non-finite entries".to_string()));
    }
    let mut h = Hessenberg::new(m);
    h.balance();
    h.reduce();
    h.eigenvalues()
}

/// Largest real part over the spectrum of `m`.
pub fn max_real_eig<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.rows() == 0 && m.is_square() {
        return Err(Error::dim("spectrum of an empty matrix".to_string()));
    }
    Ok(eigenvalues(m)?
        .iter()
        .map(|e| e.re)
        .fold(T::neg_infinity(), T::max))
}

/// Working copy stored with 1-based indices (row/column 0 unused), which keeps
/// the sweep bookkeeping below close to the classical formulation.
struct Hessenberg<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Hessenberg<T> {
    fn new(m: &Matrix<T>) -> Self {
        let n = m.rows();
        let mut a = vec![T::zero(); (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Self { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.a[i * (self.n + 1) + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.a[i * (self.n + 1) + j]
    }

    /// Diagonal similarity by powers of two so rows and columns have
    /// comparable norms.
    fn balance(&mut self) {
        let n = self.n;
        let radix = T::two();
        let sqrdx = radix * radix;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let mut r = T::zero();
                let mut c = T::zero();
                for j in 1..=n {
                    if j != i {
                        c = c + self.at(j, i).abs();
                        r = r + self.at(i, j).abs();
                    }
                }
                if c == T::zero() || r == T::zero() {
                    continue;
                }
                let s = c + r;
                let mut f = T::one();
                let mut g = r / radix;
                while c < g {
                    f = f * radix;
                    c = c * sqrdx;
                }
                g = r * radix;
                while c > g {
                    f = f / radix;
                    c = c / sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 1..=n {
                        *self.at_mut(i, j) = self.at(i, j) * g;
                    }
                    for j in 1..=n {
                        *self.at_mut(j, i) = self.at(j, i) * f;
                    }
                }
            }
        }
    }

    /// Householder reduction to upper Hessenberg form.
    fn reduce(&mut self) {
        let n = self.n;
        let mut ort = vec![T::zero(); n + 1];
        for m in 2..n {
            let scale = (m..=n).fold(T::zero(), |acc, i| acc + self.at(i, m - 1).abs());
            if scale == T::zero() {
                continue;
            }
            let mut h = T::zero();
            for i in (m..=n).rev() {
                ort[i] = self.at(i, m - 1) / scale;
                h = h + ort[i] * ort[i];
            }
            let mut g = h.sqrt();
            if ort[m] > T::zero() {
                g = -g;
            }
            h = h - ort[m] * g;
            ort[m] = ort[m] - g;

            for j in m..=n {
                let f = (m..=n)
                    .rev()
                    .fold(T::zero(), |acc, i| acc + ort[i] * self.at(i, j))
                    / h;
                for i in m..=n {
                    *self.at_mut(i, j) = self.at(i, j) - f * ort[i];
                }
            }
            for i in 1..=n {
                let f = (m..=n)
                    .rev()
                    .fold(T::zero(), |acc, j| acc + ort[j] * self.at(i, j))
                    / h;
                for j in m..=n {
                    *self.at_mut(i, j) = self.at(i, j) - f * ort[j];
                }
            }
            *self.at_mut(m, m - 1) = scale * g;
            for i in (m + 1)..=n {
                *self.at_mut(i, m - 1) = T::zero();
            }
        }
    }

    /// Francis double-shift QR on the Hessenberg matrix, deflating one or two
    /// eigenvalues at a time from the bottom.
    fn eigenvalues(mut self) -> Result<Vec<Eigenvalue<T>>> {
        let n = self.n;
        let mut wr = vec![T::zero(); n + 1];
        let mut wi = vec![T::zero(); n + 1];

        let mut anorm = T::zero();
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm = anorm + self.at(i, j).abs();
            }
        }

        let mut nn = n;
        let mut shift = T::zero();
        let mut sweeps = 0usize;
        while nn >= 1 {
            let mut its = 0usize;
            loop {
                // Look for a negligible subdiagonal element.
                let mut l = nn;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == T::zero() {
                        s = anorm;
                    }
                    if self.at(l, l - 1).abs() + s == s {
                        *self.at_mut(l, l - 1) = T::zero();
                        break;
                    }
                    l -= 1;
                }
                let l = l.max(1);

                let mut x = self.at(nn, nn);
                if l == nn {
                    wr[nn] = x + shift;
                    wi[nn] = T::zero();
                    nn -= 1;
                    break;
                }
                let mut y = self.at(nn - 1, nn - 1);
                let mut w = self.at(nn, nn - 1) * self.at(nn - 1, nn);
                if l == nn - 1 {
                    let p = T::half() * (y - x);
                    let q = p * p + w;
                    let z = q.abs().sqrt();
                    x = x + shift;
                    if q >= T::zero() {
                        let z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != T::zero() {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = T::zero();
                        wi[nn] = T::zero();
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                    break;
                }

                if sweeps >= MAX_QR_SWEEPS {
                    return Err(Error::NoConvergence {
                        iterations: sweeps,
                        unconverged: nn,
                        order: n,
                    });
                }
                if its == 10 || its == 20 {
                    // Exceptional shift.
                    shift = shift + x;
                    for i in 1..=nn {
                        *self.at_mut(i, i) = self.at(i, i) - x;
                    }
                    let s = self.at(nn, nn - 1).abs() + self.at(nn - 1, nn - 2).abs();
                    x = T::lit(0.75) * s;
                    y = x;
                    w = T::lit(-0.4375) * s * s;
                }
                its += 1;
                sweeps += 1;
                self.double_shift_sweep(l, nn, x, y, w);
            }
        }

        Ok((1..=n)
            .map(|i| Eigenvalue {
                re: wr[i],
                im: wi[i],
            })
            .collect())
    }

    fn double_shift_sweep(&mut self, l: usize, nn: usize, x: T, y: T, w: T) {
        // Form the shift and look for two consecutive small subdiagonals.
        let (mut p, mut q, mut r): (T, T, T);
        let mut m = nn - 2;
        loop {
            let z = self.at(m, m);
            let rr = x - z;
            let ss = y - z;
            p = (rr * ss - w) / self.at(m + 1, m) + self.at(m, m + 1);
            q = self.at(m + 1, m + 1) - z - rr - ss;
            r = self.at(m + 2, m + 1);
            let s = p.abs() + q.abs() + r.abs();
            p = p / s;
            q = q / s;
            r = r / s;
            if m == l {
                break;
            }
            let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
            let v = p.abs() * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
            if u + v == v {
                break;
            }
            m -= 1;
        }
        for i in (m + 2)..=nn {
            *self.at_mut(i, i - 2) = T::zero();
            if i != m + 2 {
                *self.at_mut(i, i - 3) = T::zero();
            }
        }

        let mut xk = T::zero();
        for k in m..nn {
            if k != m {
                p = self.at(k, k - 1);
                q = self.at(k + 1, k - 1);
                r = if k != nn - 1 {
                    self.at(k + 2, k - 1)
                } else {
                    T::zero()
                };
                xk = p.abs() + q.abs() + r.abs();
                if xk != T::zero() {
                    p = p / xk;
                    q = q / xk;
                    r = r / xk;
                }
            }
            let s = (p * p + q * q + r * r).sqrt().copysign(p);
            if s == T::zero() {
                continue;
            }
            if k == m {
                if l != m {
                    *self.at_mut(k, k - 1) = -self.at(k, k - 1);
                }
            } else {
                *self.at_mut(k, k - 1) = -s * xk;
            }
            p = p + s;
            let xx = p / s;
            let yy = q / s;
            let zz = r / s;
            q = q / p;
            r = r / p;
            for j in k..=nn {
                let mut pp = self.at(k, j) + q * self.at(k + 1, j);
                if k != nn - 1 {
                    pp = pp + r * self.at(k + 2, j);
                    *self.at_mut(k + 2, j) = self.at(k + 2, j) - pp * zz;
                }
                *self.at_mut(k + 1, j) = self.at(k + 1, j) - pp * yy;
                *self.at_mut(k, j) = self.at(k, j) - pp * xx;
            }
            let mmin = nn.min(k + 3);
            for i in l..=mmin {
                let mut pp = xx * self.at(i, k) + yy * self.at(i, k + 1);
                if k != nn - 1 {
                    pp = pp + zz * self.at(i, k + 2);
                    *self.at_mut(i, k + 2) = self.at(i, k + 2) - pp * r;
                }
                *self.at_mut(i, k + 1) = self.at(i, k + 1) - pp * q;
                *self.at_mut(i, k) = self.at(i, k) - pp;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    fn sorted(mut e: Vec<Eigenvalue<f64>>) -> Vec<(f64, f64)> {
        e.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        e.into_iter().map(|e| (e.re, e.im)).collect()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        assert_abs_diff_eq!(
            max_real_eig(&Matrix::<f64>::identity(2)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotation_generator_is_purely_imaginary() {
        let s = m(&[&[0.0, 2.0], &[-2.0, 0.0]]);
        let e = sorted(eigenvalues(&s).unwrap());
        assert_abs_diff_eq!(e[0].0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[0].1, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1].1, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max_real_eig(&s).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn triangular_matrix_reads_off_diagonal() {
        let t = m(&[&[-3.0, 1.0, 7.0], &[0.0, 2.0, -4.0], &[0.0, 0.0, 0.5]]);
        let e = sorted(eigenvalues(&t).unwrap());
        let re: Vec<f64> = e.iter().map(|e| e.0).collect();
        assert_abs_diff_eq!(re.as_slice(), [-3.0, 0.5, 2.0].as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn companion_matrix_recovers_polynomial_roots() {
        // (s + 1)(s + 2)(s^2 + 2s + 5): roots -1, -2, -1 +- 2j
        // s^4 + 5 s^3 + 13 s^2 + 19 s + 10
        let c = m(&[
            &[-5.0, -13.0, -19.0, -10.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let e = sorted(eigenvalues(&c).unwrap());
        let expected = [(-2.0, 0.0), (-1.0, -2.0), (-1.0, 0.0), (-1.0, 2.0)];
        for (got, want) in e.iter().zip(expected) {
            assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-9);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn non_square_is_a_dimension_error() {
        let r = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(max_real_eig(&r), Err(Error::Dimension(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let s = Matrix::<f32>::from_rows(&[[-1.0f32, 3.0], [-3.0, -1.0]]).unwrap();
        assert!((max_real_eig(&s).unwrap() + 1.0).abs() < 1e-5);
    }
}
