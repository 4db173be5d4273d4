//! Disturbance observer and the decomposition observer.

use crate::decomposition::SystemMatrices;
use crate::error::{Error, Result};
use crate::plant::{coupling_coefficient, ExoSystem, PlantParams, PlantState};
use crate::scalar::{dot, Real, Vec4};

/// Observer gains `l1, l2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceObserverParams<T> {
    l1: T,
    l2: T,
}

impl<T: Real> DisturbanceObserverParams<T> {
    pub fn new(l1: T, l2: T) -> Result<Self> {
        if !(l1 > T::zero() && l1.is_finite()) {
            return Err(Error::param("l1", format!("must be positive, got {l1}")));
        }
        if !(l2 > T::zero() && l2.is_finite()) {
            return Err(Error::param("l2", format!("must be positive, got {l2}")));
        }
        Ok(Self { l1, l2 })
    }

    pub fn l1(&self) -> T {
        self.l1
    }

    pub fn l2(&self) -> T {
        self.l2
    }
}

/// Observer state `(w^, x^4)`, started at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceObserverState<T> {
    pub w_hat: Vec<T>,
    pub x4_hat: T,
}

impl<T: Real> DisturbanceObserverState<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            w_hat: vec![T::zero(); m],
            x4_hat: T::zero(),
        }
    }
}

/// Time derivatives of the observer together with its disturbance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceObserverRates<T> {
    pub w_hat_dot: Vec<T>,
    pub x4_hat_dot: T,
    pub f_d_hat: T,
}

/// `F^_d = l1 C_d^T w^`.
#[inline]
pub fn disturbance_estimate<T: Real>(
    w_hat: &[T],
    exo: &ExoSystem<T>,
    params: &DisturbanceObserverParams<T>,
) -> T {
    params.l1 * dot(exo.readout(), w_hat)
}

/// Writes `w^'` into `w_hat_dot` and returns `x^4'`.
///
/// ```text
/// w^'  = S w^ + l1 c(x3) C_d (x^4 - x4)
/// x^4' = -l2 (x^4 - x4) - l1 c(x3) C_d^T w^ + u
/// ```
#[inline]
pub(crate) fn observer_rates_into<T: Real>(
    w_hat: &[T],
    x4_hat: T,
    x: &PlantState<T>,
    u: T,
    exo: &ExoSystem<T>,
    params: &DisturbanceObserverParams<T>,
    plant: &PlantParams<T>,
    w_hat_dot: &mut [T],
) -> T {
    let c = coupling_coefficient(x[2], plant);
    let x4_err = x4_hat - x[3];
    exo.derivative_into(w_hat, w_hat_dot);
    let gain = params.l1 * c * x4_err;
    for (d, &cd) in w_hat_dot.iter_mut().zip(exo.readout()) {
        *d = *d + gain * cd;
    }
    -params.l2 * x4_err - params.l1 * c * dot(exo.readout(), w_hat) + u
}

/// Disturbance observer right-hand side and read-out.
pub fn disturbance_observer_dynamics<T: Real>(
    obs: &DisturbanceObserverState<T>,
    x: &PlantState<T>,
    u: T,
    exo: &ExoSystem<T>,
    params: &DisturbanceObserverParams<T>,
    plant: &PlantParams<T>,
) -> Result<DisturbanceObserverRates<T>> {
    if obs.w_hat.len() != exo.dim() {
        return Err(Error::dim(format!(
            "observer state of length {} for an exosystem of order {}",
            obs.w_hat.len(),
            exo.dim()
        )));
    }
    let mut w_hat_dot = vec![T::zero(); exo.dim()];
    let x4_hat_dot = observer_rates_into(
        &obs.w_hat,
        obs.x4_hat,
        x,
        u,
        exo,
        params,
        plant,
        &mut w_hat_dot,
    );
    Ok(DisturbanceObserverRates {
        w_hat_dot,
        x4_hat_dot,
        f_d_hat: disturbance_estimate(&obs.w_hat, exo, params),
    })
}

/// `V1 = |w~|^2 / 2 + x~4^2 / 2`, with `w~ = w^ - w / l1` measured against the
/// exostate rescaled by `1 / l1`.
pub fn observer_lyapunov<T: Real>(w_tilde: &[T], x4_tilde: T) -> T {
    T::half() * (dot(w_tilde, w_tilde) + x4_tilde * x4_tilde)
}

/// Observer Lyapunov function evaluated from raw observer and true states.
pub fn observer_lyapunov_from_states<T: Real>(
    w_hat: &[T],
    x4_hat: T,
    w: &[T],
    x4: T,
    params: &DisturbanceObserverParams<T>,
) -> T {
    let inv = T::one() / params.l1;
    let sq = w_hat.iter().zip(w).fold(T::zero(), |acc, (&h, &t)| {
        let e = h - t * inv;
        acc + e * e
    });
    let e4 = x4_hat - x4;
    T::half() * (sq + e4 * e4)
}

/// Decomposition observer state `x^_s`; the primary estimate is `x - x^_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompObserverState<T> {
    pub x_s_hat: Vec4<T>,
}

impl<T: Real> DecompObserverState<T> {
    pub fn zero() -> Self {
        Self {
            x_s_hat: [T::zero(); 4],
        }
    }

    /// `x^_p = x - x^_s`.
    pub fn primary_estimate(&self, x: &PlantState<T>) -> Vec4<T> {
        std::array::from_fn(|i| x[i] - self.x_s_hat[i])
    }
}

/// `x^_s' = A x^_s + B v_s + phi(y, y') - phi(r, 0)` with `y = x3`, `y' = x4`
/// taken from the measured plant state.
#[inline]
pub fn decomposition_observer_dynamics<T: Real>(
    obs: &DecompObserverState<T>,
    v_s: T,
    x: &PlantState<T>,
    mats: &SystemMatrices<T>,
    r: T,
) -> Vec4<T> {
    let ax = mats.a_times(&obs.x_s_hat);
    let phi_y = mats.phi(x[2], x[3]);
    let phi_r = mats.phi(r, T::zero());
    let mut out = [T::zero(); 4];
    for i in 0..4 {
        out[i] = ax[i] + phi_y[i] - phi_r[i];
    }
    out[3] = out[3] + v_s;
    out
}
