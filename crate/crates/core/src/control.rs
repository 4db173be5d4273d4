//! Internal-model tracking controller for the primary system, backstepping
//! stabilizer for the secondary system, and the composite torque law.

use crate::decomposition::{filtered_output_vector, input_vector, SystemMatrices};
use crate::error::{Error, Result};
use crate::numerics::{max_real_eig, Matrix};
use crate::plant::{
    coupling_coefficient, ExoSystem, PlantState, ReferenceParams, SKEW_TOL, UNIT_FREQUENCY_TOL,
};
use crate::scalar::{dot, dot4, Real, Vec4};

/// Filtered tracking error `e_p = (C + aB)^T x_p - r = x_p3 + a x_p4 - r`.
#[inline]
pub fn filtered_error<T: Real>(x_p: &Vec4<T>, r: T, a: T) -> T {
    x_p[2] + a * x_p[3] - r
}

/// Internal-model controller gains and the resulting closed-loop matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryGains<T> {
    /// `diag(0, S)`: an integrator for the constant reference plus a copy of
    /// the exosystem.
    pub s_a: Matrix<T>,
    pub l1: Vec<T>,
    pub l2: Vec4<T>,
    pub l3: Vec<T>,
    /// `[[S_a, L1 (C + aB)^T], [B L3^T, A + B L2^T]]`.
    pub a_aug: Matrix<T>,
    /// `max Re eig(A_a)`; negative for an admissible design.
    pub margin: T,
}

impl<T: Real> PrimaryGains<T> {
    /// Dimension `m + 1` of the internal-model state.
    pub fn order(&self) -> usize {
        self.l1.len()
    }
}

/// `diag(0, S)`.
pub fn internal_model_drift<T: Real>(drift: &Matrix<T>) -> Matrix<T> {
    Matrix::block_diag(&[&Matrix::zeros(1, 1), drift])
}

/// Closed-loop matrix of the primary system under the internal-model controller.
pub fn augmented_matrix<T: Real>(
    s_a: &Matrix<T>,
    l1: &[T],
    l2: &Vec4<T>,
    l3: &[T],
    mats: &SystemMatrices<T>,
) -> Result<Matrix<T>> {
    let n = s_a.rows();
    if !s_a.is_square() || l1.len() != n || l3.len() != n {
        return Err(Error::dim(format!(
            "S_a is {}x{}, L1 has {}, L3 has {} entries",
            s_a.rows(),
            s_a.cols(),
            l1.len(),
            l3.len()
        )));
    }
    let b = input_vector::<T>();
    let upper_right = Matrix::outer(l1, &filtered_output_vector(mats.filter()));
    let lower_left = Matrix::outer(&b, l3);
    let lower_right = mats.a().add(&Matrix::outer(&b, l2))?;
    Matrix::from_blocks(s_a, &upper_right, &lower_left, &lower_right)
}

/// Gain family that makes `A_a` Hurwitz for any skew-symmetric exosystem
/// without modes at `+-j`:
///
/// ```text
/// L1 = (1, C_d),  L2 = -(1/a) C - B - (1/a) H - (1/a) K,  L3 = -(1/a) L1
/// ```
///
/// The assembled `A_a` is checked and [`Error::SynthesisFailed`] is returned
/// with the computed margin when it is not Hurwitz.
pub fn proposition1_gains<T: Real>(
    internal_model: &ExoSystem<T>,
    mats: &SystemMatrices<T>,
) -> Result<PrimaryGains<T>> {
    let skew = internal_model.skew_residual();
    if !(skew < T::lit(SKEW_TOL)) {
        return Err(Error::ConfigRejected {
            check: "skew_symmetry",
            reason: format!("internal-model drift is not skew-symmetric: ||S + S^T|| = {skew:e}"),
        });
    }
    if internal_model.dim() > 0 {
        let dist = internal_model.unit_frequency_distance()?;
        if dist < T::lit(UNIT_FREQUENCY_TOL) {
            return Err(Error::ConfigRejected {
                check: "unit_frequency",
                reason: format!(
                    "internal model has a mode at frequency +-1 (distance {dist:e}); a disturbance \
                     like sin t cannot be dealt with"
                ),
            });
        }
    }

    let a = mats.filter();
    let inv_a = T::one() / a;
    let h = mats.h();
    let k = mats.k();
    let l1: Vec<T> = std::iter::once(T::one())
        .chain(internal_model.readout().iter().copied())
        .collect();
    // C = e3, B = e4
    let l2: Vec4<T> = std::array::from_fn(|i| {
        let c_i = if i == 2 { T::one() } else { T::zero() };
        let b_i = if i == 3 { T::one() } else { T::zero() };
        -inv_a * c_i - b_i - inv_a * h[i] - inv_a * k[i]
    });
    let l3: Vec<T> = l1.iter().map(|&v| -inv_a * v).collect();
    let s_a = internal_model_drift(internal_model.drift());
    let a_aug = augmented_matrix(&s_a, &l1, &l2, &l3, mats)?;
    let margin = max_real_eig(&a_aug)?;
    if !(margin < T::zero()) {
        return Err(Error::SynthesisFailed {
            margin: margin.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(PrimaryGains {
        s_a,
        l1,
        l2,
        l3,
        a_aug,
        margin,
    })
}

/// Writes `xi' = S_a xi + L1 e_p` into `xi_dot` and returns
/// `v_p = L2^T x^_p + L3^T xi`.
#[inline]
pub fn primary_controller_into<T: Real>(
    xi: &[T],
    x_p_hat: &Vec4<T>,
    r: T,
    gains: &PrimaryGains<T>,
    a: T,
    xi_dot: &mut [T],
) -> T {
    let e_p = filtered_error(x_p_hat, r, a);
    gains.s_a.mul_vec_into(xi, xi_dot);
    for (d, &l) in xi_dot.iter_mut().zip(&gains.l1) {
        *d = *d + l * e_p;
    }
    dot4(&gains.l2, x_p_hat) + dot(&gains.l3, xi)
}

/// Returns `(xi', v_p)`.
pub fn primary_controller<T: Real>(
    xi: &[T],
    x_p_hat: &Vec4<T>,
    r: T,
    gains: &PrimaryGains<T>,
    a: T,
) -> Result<(Vec<T>, T)> {
    if xi.len() != gains.order() {
        return Err(Error::dim(format!(
            "internal-model state of length {} for gains of order {}",
            xi.len(),
            gains.order()
        )));
    }
    let mut xi_dot = vec![T::zero(); xi.len()];
    let v_p = primary_controller_into(xi, x_p_hat, r, gains, a, &mut xi_dot);
    Ok((xi_dot, v_p))
}

/// Upper limit `2 (1 - 2|r|/pi)` on the arctangent gain.
pub fn b_upper_bound<T: Real>(r: T) -> T {
    T::two() * (T::one() - T::two() * r.abs() / T::PI())
}

pub fn validate_b<T: Real>(b: T, r: T) -> Result<()> {
    let bound = b_upper_bound(r);
    if b > T::zero() && b < bound {
        Ok(())
    } else {
        Err(Error::param(
            "b",
            format!("must lie in (0, {bound}) for r = {r}, got {b}"),
        ))
    }
}

/// How the time derivative of `psi` is evaluated inside `v_s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PsiRateForm {
    /// Full time derivative along the secondary dynamics, including the
    /// coupling residual `g` (which needs the primary-output estimate). With
    /// this form the `(x3s', x4s')` subsystem is exactly
    /// `x3' = -x3' + x4' + b g / (1 + x2s^2)`, `x4' = -x4' + b g / (1 + x2s^2)`.
    #[default]
    Exact,
    /// `-2 b x2s / (1 + x2s^2)^2 * q + b / (1 + x2s^2) * (-x2s + eps cos(x3s + r) x4s)`
    /// with `q = -x1s + eps sin(x3s + r) - eps sin r`; drops the `x2s'` factor of
    /// the first term.
    Printed,
}

/// Arctangent gain `b` and the `psi'` evaluation form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacksteppingParams<T> {
    b: T,
    form: PsiRateForm,
}

impl<T: Real> BacksteppingParams<T> {
    pub fn new(b: T, r: T, form: PsiRateForm) -> Result<Self> {
        validate_b(b, r)?;
        Ok(Self { b, form })
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn form(&self) -> PsiRateForm {
        self.form
    }
}

/// Change-of-variables quantities used by the secondary stabilizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacksteppingIntermediates<T> {
    /// `x3s + b atan x2s`
    pub x3s_prime: T,
    /// `x3s' + x4s + psi`
    pub x4s_prime: T,
    /// `b / (1 + x2s^2) * (-x1s + eps sin(x3s + r) - eps sin r)`
    pub psi: T,
    pub psi_dot: T,
    /// `eps sin(y_p + x3s) - eps sin(r + x3s) - eps (y_p + a y_p' - r)`
    pub g: T,
    /// `eps sin(r - b atan x2s + x3s') - eps sin(r - b atan x2s) + g`
    pub g_prime: T,
}

/// Coupling residual `g` between the primary output and the secondary system.
#[inline]
pub fn coupling_residual<T: Real>(x3s: T, y_p: T, ydot_p: T, r: T, eps: T, a: T) -> T {
    eps * (y_p + x3s).sin() - eps * (r + x3s).sin() - eps * (y_p + a * ydot_p - r)
}

pub fn backstepping_intermediates<T: Real>(
    x_s: &Vec4<T>,
    y_p: T,
    ydot_p: T,
    r: T,
    params: &BacksteppingParams<T>,
    mats: &SystemMatrices<T>,
) -> BacksteppingIntermediates<T> {
    let eps = mats.epsilon();
    let b = params.b;
    let [x1, x2, x3, x4] = *x_s;

    let q = -x1 + eps * (x3 + r).sin() - eps * r.sin();
    let den = T::one() + x2 * x2;
    let b_atan = b * x2.atan();
    let x3s_prime = x3 + b_atan;
    let psi = b / den * q;
    let x4s_prime = x3s_prime + x4 + psi;
    let g = coupling_residual(x3, y_p, ydot_p, r, eps, mats.filter());
    let g_prime = eps * (r - b_atan + x3s_prime).sin() - eps * (r - b_atan).sin() + g;

    let x2_rate = match params.form {
        PsiRateForm::Exact => q + g,
        PsiRateForm::Printed => T::one(),
    };
    let psi_dot = -T::two() * b * x2 * x2_rate / (den * den) * q
        + b / den * (-x2 + eps * (x3 + r).cos() * x4);

    BacksteppingIntermediates {
        x3s_prime,
        x4s_prime,
        psi,
        psi_dot,
        g,
        g_prime,
    }
}

/// Secondary stabilizer `v_s = x3s' - 2 x4s' - K^T x^_s - psi'`.
///
/// `x_p_hat` supplies `y_p`, `y_p'` for the exact `psi'`; the printed form
/// ignores it.
pub fn backstepping_vs<T: Real>(
    x_s_hat: &Vec4<T>,
    x_p_hat: &Vec4<T>,
    r: T,
    params: &BacksteppingParams<T>,
    mats: &SystemMatrices<T>,
) -> T {
    let im = backstepping_intermediates(x_s_hat, x_p_hat[2], x_p_hat[3], r, params, mats);
    im.x3s_prime - T::two() * im.x4s_prime - dot4(mats.k(), x_s_hat) - im.psi_dot
}

/// Signals produced by one evaluation of the composite law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput<T> {
    pub u: T,
    pub v_p: T,
    pub v_s: T,
    pub e_p: T,
    pub x_p_hat: Vec4<T>,
}

/// Composite torque `u = K^T x + v_p(xi, x^_p, r) + v_s(x^_p, x^_s, r) + c(x3) F^_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeController<T> {
    mats: SystemMatrices<T>,
    gains: PrimaryGains<T>,
    backstepping: BacksteppingParams<T>,
    reference: ReferenceParams<T>,
}

impl<T: Real> CompositeController<T> {
    /// Synthesizes the primary gains for `internal_model` and checks that
    /// `A` is Hurwitz.
    pub fn synthesize(
        mats: SystemMatrices<T>,
        internal_model: &ExoSystem<T>,
        backstepping: BacksteppingParams<T>,
        reference: ReferenceParams<T>,
    ) -> Result<Self> {
        mats.ensure_stable()?;
        validate_b(backstepping.b, reference.value())?;
        let gains = proposition1_gains(internal_model, &mats)?;
        Ok(Self {
            mats,
            gains,
            backstepping,
            reference,
        })
    }

    pub fn matrices(&self) -> &SystemMatrices<T> {
        &self.mats
    }

    pub fn gains(&self) -> &PrimaryGains<T> {
        &self.gains
    }

    pub fn backstepping(&self) -> &BacksteppingParams<T> {
        &self.backstepping
    }

    pub fn reference(&self) -> T {
        self.reference.value()
    }

    /// Evaluates the composite law and writes `xi'` into `xi_dot`.
    #[inline]
    pub fn control_into(
        &self,
        x: &PlantState<T>,
        xi: &[T],
        x_s_hat: &Vec4<T>,
        f_d_hat: T,
        xi_dot: &mut [T],
    ) -> ControlOutput<T> {
        let r = self.reference.value();
        let a = self.mats.filter();
        let x_p_hat: Vec4<T> = std::array::from_fn(|i| x[i] - x_s_hat[i]);
        let e_p = filtered_error(&x_p_hat, r, a);
        let v_p = primary_controller_into(xi, &x_p_hat, r, &self.gains, a, xi_dot);
        let v_s = backstepping_vs(x_s_hat, &x_p_hat, r, &self.backstepping, &self.mats);
        let c = coupling_coefficient(x[2], self.mats.plant());
        let u = dot4(self.mats.k(), x) + v_p + v_s + c * f_d_hat;
        ControlOutput {
            u,
            v_p,
            v_s,
            e_p,
            x_p_hat,
        }
    }

    /// Composite torque only.
    pub fn composite_control(
        &self,
        x: &PlantState<T>,
        xi: &[T],
        x_s_hat: &Vec4<T>,
        f_d_hat: T,
    ) -> Result<T> {
        if xi.len() != self.gains.order() {
            return Err(Error::dim(format!(
                "internal-model state of length {} for gains of order {}",
                xi.len(),
                self.gains.order()
            )));
        }
        let mut xi_dot = vec![T::zero(); xi.len()];
        Ok(self.control_into(x, xi, x_s_hat, f_d_hat, &mut xi_dot).u)
    }
}
