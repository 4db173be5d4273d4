//! Additive state decomposition of the compensated TORA loop into an LTI
//! primary system carrying every external signal and a nonlinear secondary
//! system with a zero equilibrium.
//!
//! With the zero term `eps D (C + aB)^T x - eps (y + a y')` added to the
//! compensated plant, the loop reads
//!
//! ```text
//! x'  = A x + B v + phi(y, y') + D F_d + varphi
//! A   = A0 + B K^T + eps D (C + aB)^T
//! phi = (0, eps sin y - eps (y + a y'), 0, 0)
//! ```
//!
//! and splits into `x_p' = A x_p + B v_p + d + varphi` with
//! `d = phi(r, 0) + D F_d`, plus the secondary remainder
//! `x_s' = A x_s + B v_s + phi(y_p + y_s, y_p' + y_s') - phi(r, 0)`, `x_s(0) = 0`.

use crate::error::{Error, Result};
use crate::numerics::{max_real_eig, Matrix, OdeFunction, Rk4};
use crate::plant::{coupling_coefficient, PlantParams};
use crate::scalar::{dot4, norm2, Real, Vec4};

/// Input direction `B = e4`.
pub fn input_vector<T: Real>() -> Vec4<T> {
    [T::zero(), T::zero(), T::zero(), T::one()]
}

/// Output direction `C = e3`, so `y = x3`.
pub fn output_vector<T: Real>() -> Vec4<T> {
    [T::zero(), T::zero(), T::one(), T::zero()]
}

/// Disturbance direction `D = e2`.
pub fn disturbance_vector<T: Real>() -> Vec4<T> {
    [T::zero(), T::one(), T::zero(), T::zero()]
}

/// `H = (0, eps, 0, 1)`.
pub fn h_vector<T: Real>(eps: T) -> Vec4<T> {
    [T::zero(), eps, T::zero(), T::one()]
}

/// Uncontrolled skeleton: a unit oscillator and a double integrator.
pub fn skeleton<T: Real>() -> Matrix<T> {
    let (o, l) = (T::zero(), T::one());
    Matrix::from_rows(&[[o, l, o, o], [-l, o, o, o], [o, o, o, l], [o, o, o, o]])
        .expect("constant 4x4 layout")
}

fn check_filter<T: Real>(a: T) -> Result<()> {
    if a > T::zero() && a.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "a",
            format!("filter constant must be positive, got {a}"),
        ))
    }
}

/// `A = A0 + B K^T + eps D (C + aB)^T`.
pub fn build_a<T: Real>(k: &Vec4<T>, eps: T, a: T) -> Result<Matrix<T>> {
    PlantParams::new(eps)?;
    check_filter(a)?;
    let b = input_vector::<T>();
    let filt = filtered_output_vector(a);
    let eps_d: Vec4<T> = disturbance_vector::<T>().map(|x| x * eps);
    skeleton::<T>()
        .add(&Matrix::outer(&b, k))?
        .add(&Matrix::outer(&eps_d, &filt))
}

/// `C + aB = (0, 0, 1, a)`.
pub fn filtered_output_vector<T: Real>(a: T) -> Vec4<T> {
    [T::zero(), T::zero(), T::one(), a]
}

/// `phi(y, y') = (0, eps sin y - eps (y + a y'), 0, 0)`.
#[inline]
pub fn phi<T: Real>(y: T, ydot: T, eps: T, a: T) -> Vec4<T> {
    [
        T::zero(),
        eps * y.sin() - eps * (y + a * ydot),
        T::zero(),
        T::zero(),
    ]
}

/// LTI skeleton of the decomposition together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices<T> {
    a: Matrix<T>,
    k: Vec4<T>,
    plant: PlantParams<T>,
    filter: T,
}

impl<T: Real> SystemMatrices<T> {
    /// Assembles `A` from the feedback gain `k`, the plant coupling and the
    /// filter constant `a > 0`. Stability of `A` is checked separately by
    /// [`SystemMatrices::ensure_stable`].
    pub fn new(k: Vec4<T>, plant: PlantParams<T>, filter: T) -> Result<Self> {
        let a = build_a(&k, plant.epsilon(), filter)?;
        Ok(Self {
            a,
            k,
            plant,
            filter,
        })
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn k(&self) -> &Vec4<T> {
        &self.k
    }

    pub fn plant(&self) -> &PlantParams<T> {
        &self.plant
    }

    pub fn epsilon(&self) -> T {
        self.plant.epsilon()
    }

    /// Filter constant `a` of `e_p = y~ + a y~'`.
    pub fn filter(&self) -> T {
        self.filter
    }

    pub fn h(&self) -> Vec4<T> {
        h_vector(self.epsilon())
    }

    /// `max Re eig(A)`.
    pub fn margin(&self) -> Result<T> {
        max_real_eig(&self.a)
    }

    /// Returns the margin, or [`Error::UnstableA`] when `A` is not Hurwitz.
    pub fn ensure_stable(&self) -> Result<T> {
        let margin = self.margin()?;
        if margin < T::zero() {
            Ok(margin)
        } else {
            Err(Error::UnstableA {
                margin: margin.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    #[inline]
    pub fn phi(&self, y: T, ydot: T) -> Vec4<T> {
        phi(y, ydot, self.epsilon(), self.filter)
    }

    #[inline]
    pub(crate) fn a_times(&self, x: &Vec4<T>) -> Vec4<T> {
        let mut out = [T::zero(); 4];
        self.a.mul_vec_into(x, &mut out);
        out
    }
}

/// External signals entering the primary system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualInput<T> {
    /// `(0, 0, 0, c(x3) (F^_d - F_d))`: residual of the disturbance compensation.
    pub varphi: Vec4<T>,
    /// `phi(r, 0) + D F_d`.
    pub d: Vec4<T>,
}

impl<T: Real> ResidualInput<T> {
    pub fn new(x3: T, f_d: T, f_d_hat: T, r: T, mats: &SystemMatrices<T>) -> Self {
        let c = coupling_coefficient(x3, mats.plant());
        let mut d = mats.phi(r, T::zero());
        d[1] = d[1] + f_d;
        Self {
            varphi: [T::zero(), T::zero(), T::zero(), c * (f_d_hat - f_d)],
            d,
        }
    }

    pub fn zero() -> Self {
        Self {
            varphi: [T::zero(); 4],
            d: [T::zero(); 4],
        }
    }
}

/// Primary system: `A x_p + B v_p + d + varphi`.
#[inline]
pub fn primary_dynamics<T: Real>(
    x_p: &Vec4<T>,
    v_p: T,
    residual: &ResidualInput<T>,
    mats: &SystemMatrices<T>,
) -> Vec4<T> {
    let ax = mats.a_times(x_p);
    let mut out = [T::zero(); 4];
    for i in 0..4 {
        out[i] = ax[i] + residual.d[i] + residual.varphi[i];
    }
    out[3] = out[3] + v_p;
    out
}

/// Secondary system: `A x_s + B v_s + phi(y_p + y_s, y_p' + y_s') - phi(r, 0)`
/// with `y_s = x_s3`, `y_s' = x_s4`.
#[inline]
pub fn secondary_dynamics<T: Real>(
    x_s: &Vec4<T>,
    v_s: T,
    y_p: T,
    ydot_p: T,
    mats: &SystemMatrices<T>,
    r: T,
) -> Vec4<T> {
    let ax = mats.a_times(x_s);
    let phi_y = mats.phi(y_p + x_s[2], ydot_p + x_s[3]);
    let phi_r = mats.phi(r, T::zero());
    let mut out = [T::zero(); 4];
    for i in 0..4 {
        out[i] = ax[i] + phi_y[i] - phi_r[i];
    }
    out[3] = out[3] + v_s;
    out
}

/// Compensated plant after the zero-term transformation:
/// `A x + B v + phi(x3, x4) + D F_d + varphi`.
pub fn transformed_dynamics<T: Real>(
    x: &Vec4<T>,
    v: T,
    f_d: T,
    varphi: &Vec4<T>,
    mats: &SystemMatrices<T>,
) -> Vec4<T> {
    let ax = mats.a_times(x);
    let phi_y = mats.phi(x[2], x[3]);
    let mut out = [T::zero(); 4];
    for i in 0..4 {
        out[i] = ax[i] + phi_y[i] + varphi[i];
    }
    out[1] = out[1] + f_d;
    out[3] = out[3] + v;
    out
}

/// Primary and secondary states of one decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionState<T> {
    pub x_p: Vec4<T>,
    pub x_s: Vec4<T>,
}

impl<T: Real> DecompositionState<T> {
    /// Initial split: everything in the primary system, `x_s(0) = 0`.
    pub fn initial(x0: Vec4<T>) -> Self {
        Self {
            x_p: x0,
            x_s: [T::zero(); 4],
        }
    }

    pub fn y_p(&self) -> T {
        dot4(&output_vector(), &self.x_p)
    }

    pub fn y_s(&self) -> T {
        dot4(&output_vector(), &self.x_s)
    }

    /// `x_p + x_s`.
    pub fn combined(&self) -> Vec4<T> {
        let mut x = self.x_p;
        for i in 0..4 {
            x[i] = x[i] + self.x_s[i];
        }
        x
    }
}

/// Integrates an original system, a chosen primary system and the derived
/// secondary system `x_s' = f(t, x_p + x_s) - f_p(t, x_p)`,
/// `x_s(0) = x0 - x_p0`, and returns the largest `||x - (x_p + x_s)||` seen
/// on the grid `t = 0, h, ..., horizon`.
pub fn verify_additive_decomposition<T, F, P>(
    original: &F,
    primary: &P,
    x0: &[T],
    x_p0: &[T],
    horizon: T,
    step: T,
) -> Result<T>
where
    T: Real,
    F: OdeFunction<T> + ?Sized,
    P: OdeFunction<T> + ?Sized,
{
    let n = x0.len();
    if x_p0.len() != n {
        return Err(Error::dim(format!(
            "original has dimension {n}, primary {}",
            x_p0.len()
        )));
    }
    if !(step > T::zero()) || horizon < T::zero() {
        return Err(Error::param("step", "need step > 0 and horizon >= 0"));
    }

    let joint = |t: T, z: &[T], dz: &mut [T]| {
        let (x, rest) = z.split_at(n);
        let (xp, xs) = rest.split_at(n);
        let (dx, drest) = dz.split_at_mut(n);
        let (dxp, dxs) = drest.split_at_mut(n);
        original.eval(t, x, dx);
        primary.eval(t, xp, dxp);
        let sum: Vec<T> = xp.iter().zip(xs).map(|(&a, &b)| a + b).collect();
        original.eval(t, &sum, dxs);
        for (s, &p) in dxs.iter_mut().zip(dxp.iter()) {
            *s = *s - p;
        }
    };

    let mut z: Vec<T> = Vec::with_capacity(3 * n);
    z.extend_from_slice(x0);
    z.extend_from_slice(x_p0);
    z.extend(x0.iter().zip(x_p0).map(|(&a, &b)| a - b));

    let deviation = |z: &[T]| {
        let diff: Vec<T> = (0..n).map(|i| z[i] - (z[n + i] + z[2 * n + i])).collect();
        norm2(&diff)
    };

    let steps = (horizon / step).round().to_usize().unwrap_or(0);
    let mut rk = Rk4::new(3 * n);
    let mut worst = deviation(&z);
    for i in 0..steps {
        rk.step(&joint, T::from_count(i) * step, &mut z, step)?;
        worst = worst.max(deviation(&z));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EPS: f64 = 0.2;
    const K: Vec4<f64> = [0.0, -0.2, -1.0, -2.0];

    fn mats() -> SystemMatrices<f64> {
        SystemMatrices::new(K, PlantParams::new(EPS).unwrap(), 1.0).unwrap()
    }

    /// Expanded form of the secondary system written out state by state.
    fn secondary_expanded(
        x_s: &Vec4<f64>,
        v_s: f64,
        y_p: f64,
        ydot_p: f64,
        r: f64,
        a: f64,
    ) -> Vec4<f64> {
        let g =
            EPS * (y_p + x_s[2]).sin() - EPS * (r + x_s[2]).sin() - EPS * (y_p + a * ydot_p - r);
        [
            x_s[1],
            -x_s[0] + EPS * (x_s[2] + r).sin() - EPS * r.sin() + g,
            x_s[3],
            dot4(&K, x_s) + v_s,
        ]
    }

    #[test]
    fn assembled_a_matches_hand_sum() {
        let a = build_a(&K, EPS, 1.0).unwrap();
        let expected = [
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.2, 0.2],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, -0.2, -1.0, -2.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_abs_diff_eq!(a.row(i), row.as_slice(), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_gain_keeps_only_the_zero_term() {
        let a = build_a(&[0.0; 4], EPS, 1.0).unwrap();
        assert_abs_diff_eq!(a.row(1), [-1.0, 0.0, 0.2, 0.2].as_slice(), epsilon = 1e-15);
        assert_abs_diff_eq!(a.row(3), [0.0; 4].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn parameters_validated() {
        assert!(build_a(&K, EPS, 0.0).is_err());
        assert!(build_a(&K, 1.0, 1.0).is_err());
    }

    #[test]
    fn scenario_a_margin() {
        let margin = mats().ensure_stable().unwrap();
        assert!((margin + 0.01).abs() < 5e-3, "margin {margin}");
    }

    #[test]
    fn unstable_a_is_reported() {
        let m = SystemMatrices::new([0.0; 4], PlantParams::new(EPS).unwrap(), 1.0).unwrap();
        assert!(matches!(m.ensure_stable(), Err(Error::UnstableA { .. })));
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.0, 0.0, EPS, 1.0), [0.0; 4]);
        assert_abs_diff_eq!(
            phi(0.5, 0.0, EPS, 1.0)[1],
            0.2 * (0.5f64.sin() - 0.5),
            epsilon = 1e-16
        );
        assert_abs_diff_eq!(phi(0.5, 0.0, EPS, 1.0)[1], -0.004_114_89, epsilon = 1e-8);
        let diff = phi(0.3, 0.7, EPS, 1.0)[1] - phi(0.3, 0.0, EPS, 1.0)[1];
        assert_abs_diff_eq!(diff, -EPS * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn primary_examples() {
        let m = mats();
        assert_eq!(
            primary_dynamics(
                &[0.0; 4],
                0.0,
                &ResidualInput::new(0.0, 0.0, 0.0, 0.0, &m),
                &m
            ),
            [0.0; 4]
        );
        assert_eq!(
            primary_dynamics(
                &[0.0; 4],
                1.0,
                &ResidualInput::new(0.0, 0.0, 0.0, 0.0, &m),
                &m
            ),
            [0.0, 0.0, 0.0, 1.0]
        );
        // F_d = 0.02 with a perfect estimate, so varphi = 0.
        let res = ResidualInput::new(0.5, 0.02, 0.02, 0.5, &m);
        let d = primary_dynamics(&[0.0; 4], 0.0, &res, &m);
        assert_abs_diff_eq!(
            d.as_slice(),
            [0.0, 0.02 - 0.004_114_892, 0.0, 0.0].as_slice(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn residual_layout() {
        let m = mats();
        let res = ResidualInput::new(0.0, 0.02, 0.05, 0.5, &m);
        assert_eq!(&res.varphi[..3], &[0.0; 3]);
        assert_abs_diff_eq!(res.varphi[3], 0.2 / 0.96 * 0.03, epsilon = 1e-15);
        assert_eq!(res.d[0], 0.0);
        assert_eq!(&res.d[2..], &[0.0; 2]);
    }

    #[test]
    fn secondary_examples() {
        let m = mats();
        assert_eq!(
            secondary_dynamics(&[0.0; 4], 0.0, 0.5, 0.0, &m, 0.5),
            [0.0; 4]
        );
        assert_eq!(
            secondary_dynamics(&[0.0; 4], 1.0, 0.5, 0.0, &m, 0.5),
            [0.0, 0.0, 0.0, 1.0]
        );

        // x_s = (0, 0, 0.1, 0), y_p = r = 0.5: row 2 of A gives 0.02, the phi
        // difference gives 0.2 (sin 0.6 - 0.6) - 0.2 (sin 0.5 - 0.5); row 4 is K^T x_s.
        let x_s = [0.0, 0.0, 0.1, 0.0];
        let got = secondary_dynamics(&x_s, 0.0, 0.5, 0.0, &m, 0.5);
        let slot2 = 0.2 * (0.6f64.sin() - 0.5f64.sin());
        assert_abs_diff_eq!(
            got.as_slice(),
            [0.0, slot2, 0.0, -0.1].as_slice(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(slot2, 0.017_043_387, epsilon = 1e-9);
        assert_abs_diff_eq!(
            got.as_slice(),
            secondary_expanded(&x_s, 0.0, 0.5, 0.0, 0.5, 1.0).as_slice(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn decomposition_state_combines() {
        let mut s = DecompositionState::initial([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.x_s, [0.0; 4]);
        s.x_s = [0.5, 0.0, -1.0, 0.0];
        assert_eq!(s.combined(), [1.5, 2.0, 2.0, 4.0]);
        assert_eq!(s.y_p(), 3.0);
        assert_eq!(s.y_s(), -1.0);
    }

    #[test]
    fn identical_split_has_no_secondary() {
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0].sin() - 0.1 * x[1];
        };
        let dev =
            verify_additive_decomposition(&f, &f, &[1.0, 0.0], &[1.0, 0.0], 10.0, 1e-2).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn linear_superposition() {
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -2.0 * x[0] - 0.3 * x[1];
        };
        let dev =
            verify_additive_decomposition(&f, &f, &[1.0, -0.5], &[0.2, 0.7], 10.0, 1e-3).unwrap();
        assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn nonlinear_split_against_linear_primary() {
        let f = |t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0] + 0.2 * x[0].sin() + 0.1 * t.cos();
        };
        let fp = |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
        };
        let dev =
            verify_additive_decomposition(&f, &fp, &[0.3, 0.0], &[0.1, 0.1], 10.0, 1e-3).unwrap();
        assert!(dev < 1e-8, "deviation {dev}");
        assert!(verify_additive_decomposition(&f, &fp, &[0.3, 0.0], &[0.1], 1.0, 1e-3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn compact_and_expanded_secondary_agree(
            x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, x3 in -2.0f64..2.0, x4 in -2.0f64..2.0,
            v_s in -2.0f64..2.0, y_p in -1.5f64..1.5, ydot_p in -2.0f64..2.0, r in -1.5f64..1.5,
        ) {
            let x_s = [x1, x2, x3, x4];
            let compact = secondary_dynamics(&x_s, v_s, y_p, ydot_p, &mats(), r);
            let expanded = secondary_expanded(&x_s, v_s, y_p, ydot_p, r, 1.0);
            for i in 0..4 {
                prop_assert!((compact[i] - expanded[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn zero_term_is_exact(x in proptest::array::uniform4(-5.0f64..5.0), a in 0.1f64..3.0, eps in 0.01f64..0.99) {
            let lhs: Vec4<f64> = disturbance_vector::<f64>()
                .map(|di| eps * di * dot4(&filtered_output_vector(a), &x));
            let rhs = [0.0, eps * (x[2] + a * x[3]), 0.0, 0.0];
            for i in 0..4 {
                prop_assert!((lhs[i] - rhs[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn primary_plus_secondary_is_transformed_plant(
            xp in proptest::array::uniform4(-2.0f64..2.0),
            xs in proptest::array::uniform4(-2.0f64..2.0),
            v_p in -2.0f64..2.0, v_s in -2.0f64..2.0,
            f_d in -0.5f64..0.5, f_d_hat in -0.5f64..0.5, r in -1.5f64..1.5,
        ) {
            let m = mats();
            let x: Vec4<f64> = std::array::from_fn(|i| xp[i] + xs[i]);
            let res = ResidualInput::new(x[2], f_d, f_d_hat, r, &m);
            let p = primary_dynamics(&xp, v_p, &res, &m);
            let s = secondary_dynamics(&xs, v_s, xp[2], xp[3], &m, r);
            let full = transformed_dynamics(&x, v_p + v_s, f_d, &res.varphi, &m);
            for i in 0..4 {
                prop_assert!((p[i] + s[i] - full[i]).abs() < 1e-12);
            }
        }
    }
}
