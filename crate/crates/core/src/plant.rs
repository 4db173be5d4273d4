//! Normalized TORA dynamics, the disturbance exosystem and configuration checks.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, observability_rank, Matrix};
use crate::scalar::{all_finite, dot, Real, Vec4};

/// Tolerance on `||S + S^T||` for the skew-symmetry check.
pub const SKEW_TOL: f64 = 1e-12;
/// Distance from `+-j` below which an exosystem mode counts as unit frequency.
pub const UNIT_FREQUENCY_TOL: f64 = 1e-6;

/// Plant state `(x1, x2, x3, x4)`: cart position and rate, rotor angle and rate.
/// The rotor angle is never wrapped.
pub type PlantState<T> = Vec4<T>;

/// Coupling parameter `eps` of the normalized model, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams<T> {
    epsilon: T,
}

impl<T: Real> PlantParams<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::param(
                "epsilon",
                format!("must lie in (0, 1), got {epsilon}"),
            ));
        }
        Ok(Self { epsilon })
    }

    #[inline]
    pub fn epsilon(&self) -> T {
        self.epsilon
    }
}

/// Constant rotor-angle reference, strictly inside `(-pi/2, pi/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceParams<T> {
    r: T,
}

impl<T: Real> ReferenceParams<T> {
    pub fn new(r: T) -> Result<Self> {
        if !(r.abs() < T::FRAC_PI_2()) {
            return Err(Error::param(
                "r",
                format!("reference must lie in (-pi/2, pi/2), got {r}"),
            ));
        }
        Ok(Self { r })
    }

    #[inline]
    pub fn value(&self) -> T {
        self.r
    }
}

/// Multiplier of `F_d` in the rotor equation: `eps cos x3 / (1 - eps^2 cos^2 x3)`.
#[inline]
pub fn coupling_coefficient<T: Real>(x3: T, params: &PlantParams<T>) -> T {
    let eps = params.epsilon;
    let c = x3.cos();
    eps * c / (T::one() - eps * eps * c * c)
}

/// Right-hand side of the normalized TORA model driven by torque `u` and
/// disturbance `f_d`.
pub fn tora_dynamics<T: Real>(
    x: &PlantState<T>,
    u: T,
    f_d: T,
    params: &PlantParams<T>,
) -> Result<Vec4<T>> {
    if !all_finite(x) || !u.is_finite() || !f_d.is_finite() {
        return Err(Error::Blowup { t: f64::NAN });
    }
    Ok(tora_rhs(x, u, f_d, params))
}

#[inline]
pub(crate) fn tora_rhs<T: Real>(
    x: &PlantState<T>,
    u: T,
    f_d: T,
    params: &PlantParams<T>,
) -> Vec4<T> {
    let eps = params.epsilon;
    [
        x[1],
        -x[0] + eps * x[2].sin() + f_d,
        x[3],
        u - coupling_coefficient(x[2], params) * f_d,
    ]
}

/// Autonomous disturbance generator `w' = S w`, `F_d = C_d^T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoSystem<T> {
    drift: Matrix<T>,
    readout: Vec<T>,
    initial: Vec<T>,
}

impl<T: Real> ExoSystem<T> {
    /// Checks shapes only; the structural assumptions are verified by
    /// [`validate_configuration`].
    pub fn new(drift: Matrix<T>, readout: Vec<T>, initial: Vec<T>) -> Result<Self> {
        let m = readout.len();
        if !drift.is_square() || drift.rows() != m || initial.len() != m {
            return Err(Error::dim(format!(
                "exosystem drift {}x{}, read-out {}, initial state {}",
                drift.rows(),
                drift.cols(),
                m,
                initial.len()
            )));
        }
        Ok(Self {
            drift,
            readout,
            initial,
        })
    }

    /// Order `m` of the exosystem.
    pub fn dim(&self) -> usize {
        self.readout.len()
    }

    pub fn drift(&self) -> &Matrix<T> {
        &self.drift
    }

    pub fn readout(&self) -> &[T] {
        &self.readout
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    /// `S w`, written into `out`.
    #[inline]
    pub fn derivative_into(&self, w: &[T], out: &mut [T]) {
        self.drift.mul_vec_into(w, out);
    }

    pub fn derivative(&self, w: &[T]) -> Result<Vec<T>> {
        self.drift.mul_vec(w)
    }

    /// `C_d^T w`.
    #[inline]
    pub fn output(&self, w: &[T]) -> T {
        dot(&self.readout, w)
    }

    pub fn skew_residual(&self) -> T {
        self.drift
            .add(&self.drift.transpose())
            .map(|m| m.frobenius_norm())
            .unwrap_or(T::infinity())
    }

    /// Smallest distance from an eigenvalue of `S` to `+j` or `-j`.
    pub fn unit_frequency_distance(&self) -> Result<T> {
        Ok(eigenvalues(&self.drift)?
            .iter()
            .map(|e| {
                e.distance_to(T::zero(), T::one())
                    .min(e.distance_to(T::zero(), -T::one()))
            })
            .fold(T::infinity(), T::min))
    }

    /// Restriction of the exosystem to the invariant subspace orthogonal to
    /// its `+-j` modes. Used to build an internal model that leaves a unit
    /// frequency component uncompensated. Requires a skew-symmetric drift.
    pub fn without_unit_frequency(&self) -> Result<Self> {
        let m = self.dim();
        // For skew S, S^2 + I is symmetric and its null space is the +-j
        // eigenspace, so its range is the complementary invariant subspace.
        let s2 = self.drift.matmul(&self.drift)?;
        let projector = s2.add(&Matrix::identity(m))?;
        let tol = T::lit(UNIT_FREQUENCY_TOL) * projector.max_abs().max(T::one());
        let mut basis: Vec<Vec<T>> = Vec::new();
        for j in 0..m {
            let mut v: Vec<T> = (0..m).map(|i| projector[(i, j)]).collect();
            for q in &basis {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(vi, &qi)| *vi = *vi - c * qi);
            }
            let n = dot(&v, &v).sqrt();
            if n > tol {
                v.iter_mut().for_each(|vi| *vi = *vi / n);
                basis.push(v);
            }
        }
        let mut q = Matrix::zeros(m, basis.len());
        for (j, col) in basis.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                q[(i, j)] = v;
            }
        }
        let reduced = q.transpose().matmul(&self.drift)?.matmul(&q)?;
        let readout = q.vec_mul(&self.readout)?;
        let initial = q.vec_mul(&self.initial)?;
        ExoSystem::new(reduced, readout, initial)
    }
}

/// Which structural check a [`CheckOutcome`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    SkewSymmetry,
    Observability,
    UnitFrequency,
    EpsilonRange,
    ReferenceRange,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::SkewSymmetry => "skew_symmetry",
            Check::Observability => "observability",
            Check::UnitFrequency => "unit_frequency",
            Check::EpsilonRange => "epsilon_range",
            Check::ReferenceRange => "reference_range",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail for every structural check, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|o| !o.passed)
    }

    pub fn outcome(&self, check: Check) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|o| o.check == check)
    }

    /// Converts the first failed check into [`Error::ConfigRejected`].
    pub fn into_result(self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some(o) => Err(Error::ConfigRejected {
                check: o.check.name(),
                reason: o.detail.clone(),
            }),
        }
    }
}

/// Options for [`validate_configuration`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Accept exosystems with modes at `+-j`; such components are then left
    /// out of the internal model.
    pub allow_unit_frequency: bool,
}

/// Checks the exosystem and plant/reference ranges. Takes raw `epsilon` and
/// `r` so that out-of-range values can be reported rather than rejected early.
pub fn validate_configuration<T: Real>(
    exo: &ExoSystem<T>,
    epsilon: T,
    r: T,
    options: ValidationOptions,
) -> ValidationReport {
    let m = exo.dim();
    let mut outcomes = Vec::with_capacity(5);

    let skew = exo.skew_residual();
    let skew_ok = skew < T::lit(SKEW_TOL);
    outcomes.push(CheckOutcome {
        check: Check::SkewSymmetry,
        passed: skew_ok,
        detail: if skew_ok {
            format!("||S + S^T|| = {skew:e}")
        } else {
            format!("S is not skew-symmetric: ||S + S^T|| = {skew:e}")
        },
    });

    let (obs_ok, obs_detail) = match observability_rank(exo.readout(), exo.drift()) {
        Ok(rank) if rank == m => (true, format!("rank {rank} of {m}")),
        Ok(rank) => (
            false,
            format!("(C_d^T, S) is not observable: rank {rank} of {m}"),
        ),
        Err(e) => (false, e.to_string()),
    };
    outcomes.push(CheckOutcome {
        check: Check::Observability,
        passed: obs_ok,
        detail: obs_detail,
    });

    let (unit_ok, unit_detail) = match exo.unit_frequency_distance() {
        Ok(d) if d >= T::lit(UNIT_FREQUENCY_TOL) => {
            (true, format!("closest mode is {d:e} away from +-j"))
        }
        Ok(d) if options.allow_unit_frequency => (
            true,
            format!("mode within {d:e} of +-j left uncompensated by override"),
        ),
        Ok(d) => (
            false,
            format!(
                "exosystem has a mode at frequency +-1 (distance {d:e}); a disturbance like \
                 sin t cannot be dealt with. Pass the unit-frequency override to leave that \
                 component uncompensated"
            ),
        ),
        Err(e) => (false, e.to_string()),
    };
    outcomes.push(CheckOutcome {
        check: Check::UnitFrequency,
        passed: unit_ok,
        detail: unit_detail,
    });

    let eps_ok = PlantParams::new(epsilon).is_ok();
    outcomes.push(CheckOutcome {
        check: Check::EpsilonRange,
        passed: eps_ok,
        detail: format!("epsilon = {epsilon}, required in (0, 1)"),
    });

    let r_ok = ReferenceParams::new(r).is_ok();
    outcomes.push(CheckOutcome {
        check: Check::ReferenceRange,
        passed: r_ok,
        detail: format!("r = {r}, required in (-pi/2, pi/2)"),
    });

    ValidationReport { outcomes }
}
