use crate::error::{Error, Result};
use crate::scalar::Real;

/// Right-hand side of an autonomous or time-varying ODE `x' = f(t, x)`.
///
/// Implementations write the derivative into `out`, which has the same
/// length as `state`, and must be deterministic.
pub trait OdeFunction<T> {
    fn eval(&self, t: T, state: &[T], out: &mut [T]);
}

impl<T, F> OdeFunction<T> for F
where
    F: Fn(T, &[T], &mut [T]),
{
    #[inline]
    fn eval(&self, t: T, state: &[T], out: &mut [T]) {
        self(t, state, out)
    }
}

/// Classic fourth-order Runge-Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            tmp: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `state` from `t` to `t + h` in place.
    pub fn step<F: OdeFunction<T> + ?Sized>(
        &mut self,
        f: &F,
        t: T,
        state: &mut [T],
        h: T,
    ) -> Result<()> {
        let n = state.len();
        if n != self.dim() {
            return Err(Error::dim(format!(
                "state of length {n} for a stepper of dimension {}",
                self.dim()
            )));
        }
        let half = h * T::half();

        f.eval(t, state, &mut self.k1);
        check_finite(&self.k1, t)?;
        for i in 0..n {
            self.tmp[i] = state[i] + half * self.k1[i];
        }
        f.eval(t + half, &self.tmp, &mut self.k2);
        check_finite(&self.k2, t + half)?;
        for i in 0..n {
            self.tmp[i] = state[i] + half * self.k2[i];
        }
        f.eval(t + half, &self.tmp, &mut self.k3);
        check_finite(&self.k3, t + half)?;
        for i in 0..n {
            self.tmp[i] = state[i] + h * self.k3[i];
        }
        f.eval(t + h, &self.tmp, &mut self.k4);
        check_finite(&self.k4, t + h)?;

        let sixth = h / T::lit(6.0);
        for i in 0..n {
            state[i] =
                state[i] + sixth * (self.k1[i] + T::two() * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        check_finite(state, t + h)
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<T: Real, F: OdeFunction<T> + ?Sized>(
    f: &F,
    t: T,
    state: &[T],
    h: T,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::param("h", format!("step must be positive, got {h}")));
    }
    let mut next = state.to_vec();
    Rk4::new(state.len()).step(f, t, &mut next, h)?;
    Ok(next)
}

/// Integrates `n_steps` fixed steps from `t0`, returning the final state.
pub fn integrate<T: Real, F: OdeFunction<T> + ?Sized>(
    f: &F,
    t0: T,
    state: &[T],
    h: T,
    n_steps: usize,
) -> Result<Vec<T>> {
    let mut x = state.to_vec();
    let mut rk = Rk4::new(x.len());
    for i in 0..n_steps {
        rk.step(f, t0 + T::from_count(i) * h, &mut x, h)?;
    }
    Ok(x)
}

#[inline]
fn check_finite<T: Real>(v: &[T], t: T) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Blowup {
            t: t.to_f64().unwrap_or(f64::NAN),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_decay_one_step() {
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| dx[0] = -x[0];
        let x = rk4_step(&f, 0.0, &[1.0], 0.1).unwrap();
        // exp(-0.1) = 0.904837418...
        assert_abs_diff_eq!(x[0], 0.9048375, epsilon = 1e-7);
        assert_abs_diff_eq!(x[0], (-0.1f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn zero_field_keeps_state() {
        let f = |_t: f64, _x: &[f64], dx: &mut [f64]| dx.fill(0.0);
        let x0 = [1.5, -2.0, 3.25];
        assert_eq!(rk4_step(&f, 7.0, &x0, 0.3).unwrap(), x0.to_vec());
    }

    #[test]
    fn rotation_preserves_norm() {
        let f = |_t: f64, w: &[f64], dw: &mut [f64]| {
            dw[0] = 2.0 * w[1];
            dw[1] = -2.0 * w[0];
        };
        let w = integrate(&f, 0.0, &[0.0, 0.02], 1e-3, 1000).unwrap();
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!((norm - 0.02).abs() < 1e-9);
    }

    #[test]
    fn blowup_reports_time() {
        let f = |t: f64, _x: &[f64], dx: &mut [f64]| dx[0] = if t > 0.25 { f64::NAN } else { 1.0 };
        let err = integrate(&f, 0.0, &[0.0], 0.1, 10).unwrap_err();
        match err {
            Error::Blowup { t } => assert!(t > 0.25 && t <= 0.35, "t = {t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_step_rejected() {
        let f = |_t: f64, _x: &[f64], dx: &mut [f64]| dx.fill(0.0);
        assert!(rk4_step(&f, 0.0, &[1.0], 0.0).is_err());
    }
}
