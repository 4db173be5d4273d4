//! Closed-loop assembly (plant, exosystem, disturbance observer, internal
//! model, decomposition observer), fixed-step integration, recording and
//! run diagnostics.

use std::ops::Range;

use crate::control::{
    validate_b, BacksteppingParams, CompositeController, ControlOutput, PsiRateForm,
};
use crate::decomposition::{primary_dynamics, secondary_dynamics, ResidualInput, SystemMatrices};
use crate::error::{Error, Result};
use crate::estimators::{
    decomposition_observer_dynamics, disturbance_estimate, observer_lyapunov_from_states,
    observer_rates_into, DecompObserverState, DisturbanceObserverParams,
};
use crate::numerics::{Matrix, OdeFunction, Rk4};
use crate::plant::{
    coupling_coefficient, tora_rhs, validate_configuration, ExoSystem, PlantParams,
    ReferenceParams, ValidationOptions,
};
use crate::scalar::{norm2, Real, Vec4};

/// Time after which the disturbance-compensation residual is tracked.
pub const COMPENSATION_WINDOW_START: f64 = 50.0;
/// Window length for the exosystem norm drift diagnostic.
pub const EXO_DRIFT_WINDOW: f64 = 200.0;
/// Default band for the settling-time diagnostic.
pub const DEFAULT_SETTLING_TOLERANCE: f64 = 0.02;

/// Everything needed to build and run one closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub epsilon: T,
    pub reference: T,
    /// Filter constant `a > 0` of the tracking error `y~ + a y~'`.
    pub filter: T,
    pub k: Vec4<T>,
    pub l1: T,
    pub l2: T,
    pub b: T,
    pub psi_rate: PsiRateForm,
    pub exo: ExoSystem<T>,
    pub x0: Vec4<T>,
    /// Initial decomposition-observer state; zero in nominal runs.
    pub xs_hat0: Vec4<T>,
    pub duration: T,
    pub step: T,
    pub record_stride: usize,
    pub settling_tolerance: T,
    /// Leave `+-j` exosystem modes out of the internal model instead of rejecting them.
    pub allow_unit_frequency: bool,
}

fn rot<T: Real>(w: f64) -> [[T; 2]; 2] {
    [[T::zero(), T::lit(w)], [T::lit(-w), T::zero()]]
}

impl<T: Real> ScenarioConfig<T> {
    /// Single-tone disturbance at frequency 2.
    pub fn paper_1() -> Self {
        let exo = ExoSystem::new(
            Matrix::from_rows(&rot::<T>(2.0)).expect("2x2"),
            vec![T::one(), T::zero()],
            vec![T::zero(), T::lit(0.02)],
        )
        .expect("consistent shapes");
        Self::with_exosystem(exo)
    }

    /// Two-tone disturbance at frequencies 2 and 1.5.
    pub fn paper_2() -> Self {
        let s1 = Matrix::from_rows(&rot::<T>(2.0)).expect("2x2");
        let s2 = Matrix::from_rows(&rot::<T>(1.5)).expect("2x2");
        let exo = ExoSystem::new(
            Matrix::block_diag(&[&s1, &s2]),
            vec![T::one(), T::zero(), T::one(), T::zero()],
            vec![T::zero(), T::lit(0.02), T::zero(), T::lit(0.02)],
        )
        .expect("consistent shapes");
        Self::with_exosystem(exo)
    }

    /// Built-in scenario by name (`paper-1`, `paper-2`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "paper-1" => Some(Self::paper_1()),
            "paper-2" => Some(Self::paper_2()),
            _ => None,
        }
    }

    /// Scenario-1 plant, reference and controller with the given exosystem.
    pub fn with_exosystem(exo: ExoSystem<T>) -> Self {
        let eps = T::lit(0.2);
        Self {
            epsilon: eps,
            reference: T::lit(0.5),
            filter: T::one(),
            k: [T::zero(), -eps, -T::one(), -T::two()],
            l1: T::lit(10.0),
            l2: T::lit(10.0),
            b: T::lit(1.5) * (T::one() - T::FRAC_1_PI()),
            psi_rate: PsiRateForm::default(),
            exo,
            x0: [T::zero(); 4],
            xs_hat0: [T::zero(); 4],
            duration: T::lit(1500.0),
            step: T::lit(1e-3),
            record_stride: 100,
            settling_tolerance: T::lit(DEFAULT_SETTLING_TOLERANCE),
            allow_unit_frequency: false,
        }
    }

    /// Number of integration steps, `round(duration / step)`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > T::zero() && self.step.is_finite()) {
            return Err(Error::param(
                "step",
                format!("must be positive, got {}", self.step),
            ));
        }
        if !(self.duration >= T::zero() && self.duration.is_finite()) {
            return Err(Error::param(
                "duration",
                format!("must be nonnegative, got {}", self.duration),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::param("record_stride", "must be at least 1"));
        }
        (self.duration / self.step)
            .round()
            .to_usize()
            .ok_or_else(|| Error::param("duration", "too many steps"))
    }

    /// Internal model used by the primary controller.
    pub fn internal_model(&self) -> Result<ExoSystem<T>> {
        if self.allow_unit_frequency {
            self.exo.without_unit_frequency()
        } else {
            Ok(self.exo.clone())
        }
    }
}

/// One named gate of [`check_configuration`].
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of every configuration gate plus the computed eigenvalue margins.
#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub gates: Vec<GateOutcome>,
    pub margin_a: Option<f64>,
    pub margin_a_aug: Option<f64>,
}

impl GateReport {
    pub fn all_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn first_failure(&self) -> Option<&GateOutcome> {
        self.gates.iter().find(|g| !g.passed)
    }

    pub fn gate(&self, name: &str) -> Option<&GateOutcome> {
        self.gates.iter().find(|g| g.name == name)
    }
}

fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Runs every gate without stopping at the first failure.
pub fn check_configuration<T: Real>(cfg: &ScenarioConfig<T>) -> GateReport {
    let mut gates = Vec::new();
    let options = ValidationOptions {
        allow_unit_frequency: cfg.allow_unit_frequency,
    };
    for o in validate_configuration(&cfg.exo, cfg.epsilon, cfg.reference, options).outcomes {
        gates.push(GateOutcome {
            name: o.check.name(),
            passed: o.passed,
            detail: o.detail,
        });
    }

    let filter_ok = cfg.filter > T::zero() && cfg.filter.is_finite();
    gates.push(GateOutcome {
        name: "filter_constant",
        passed: filter_ok,
        detail: format!("a = {}, required > 0", cfg.filter),
    });

    let obs = DisturbanceObserverParams::new(cfg.l1, cfg.l2);
    gates.push(GateOutcome {
        name: "observer_gains",
        passed: obs.is_ok(),
        detail: match &obs {
            Ok(_) => format!("l1 = {}, l2 = {}", cfg.l1, cfg.l2),
            Err(e) => e.to_string(),
        },
    });

    let b_check = validate_b(cfg.b, cfg.reference);
    gates.push(GateOutcome {
        name: "b_range",
        passed: b_check.is_ok(),
        detail: match b_check {
            Ok(()) => format!("b = {}", cfg.b),
            Err(e) => e.to_string(),
        },
    });

    let steps = cfg.steps();
    gates.push(GateOutcome {
        name: "time_grid",
        passed: steps.is_ok(),
        detail: match &steps {
            Ok(n) => format!(
                "{n} steps of {}, record stride {}",
                cfg.step, cfg.record_stride
            ),
            Err(e) => e.to_string(),
        },
    });

    let mut margin_a = None;
    let mut margin_a_aug = None;
    let mats =
        PlantParams::new(cfg.epsilon).and_then(|p| SystemMatrices::new(cfg.k, p, cfg.filter));
    match &mats {
        Ok(m) => match m.margin() {
            Ok(v) => {
                margin_a = Some(to_f64(v));
                gates.push(GateOutcome {
                    name: "a_hurwitz",
                    passed: v < T::zero(),
                    detail: format!("max Re eig(A) = {v:.6e}"),
                });
            }
            Err(e) => gates.push(GateOutcome {
                name: "a_hurwitz",
                passed: false,
                detail: e.to_string(),
            }),
        },
        Err(e) => gates.push(GateOutcome {
            name: "a_hurwitz",
            passed: false,
            detail: e.to_string(),
        }),
    }

    let gains = mats.and_then(|m| {
        let im = cfg.internal_model()?;
        crate::control::proposition1_gains(&im, &m)
    });
    match gains {
        Ok(g) => {
            margin_a_aug = Some(to_f64(g.margin));
            gates.push(GateOutcome {
                name: "a_aug_hurwitz",
                passed: true,
                detail: format!("max Re eig(A_a) = {:.6e}", g.margin),
            });
        }
        Err(e) => {
            if let Error::SynthesisFailed { margin } = e {
                margin_a_aug = Some(margin);
            }
            gates.push(GateOutcome {
                name: "a_aug_hurwitz",
                passed: false,
                detail: e.to_string(),
            });
        }
    }

    GateReport {
        gates,
        margin_a,
        margin_a_aug,
    }
}

/// Offsets of each block inside the flat closed-loop state
/// `(x, w, w^, x^4, xi, x^_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopLayout {
    /// Exosystem order.
    pub m: usize,
    /// Internal-model order (`m + 1` unless unit-frequency modes are dropped).
    pub q: usize,
}

impl LoopLayout {
    pub fn x(&self) -> Range<usize> {
        0..4
    }
    pub fn w(&self) -> Range<usize> {
        4..4 + self.m
    }
    pub fn w_hat(&self) -> Range<usize> {
        4 + self.m..4 + 2 * self.m
    }
    pub fn x4_hat(&self) -> usize {
        4 + 2 * self.m
    }
    pub fn xi(&self) -> Range<usize> {
        5 + 2 * self.m..5 + 2 * self.m + self.q
    }
    pub fn xs_hat(&self) -> Range<usize> {
        let s = 5 + 2 * self.m + self.q;
        s..s + 4
    }
    /// `10 + 3m` for a full internal model.
    pub fn len(&self) -> usize {
        9 + 2 * self.m + self.q
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Structured view of one closed-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState<T> {
    pub x: Vec4<T>,
    pub w: Vec<T>,
    pub w_hat: Vec<T>,
    pub x4_hat: T,
    pub xi: Vec<T>,
    pub xs_hat: Vec4<T>,
}

fn vec4<T: Real>(s: &[T]) -> Vec4<T> {
    [s[0], s[1], s[2], s[3]]
}

impl<T: Real> LoopState<T> {
    pub fn from_slice(layout: &LoopLayout, z: &[T]) -> Self {
        Self {
            x: vec4(&z[layout.x()]),
            w: z[layout.w()].to_vec(),
            w_hat: z[layout.w_hat()].to_vec(),
            x4_hat: z[layout.x4_hat()],
            xi: z[layout.xi()].to_vec(),
            xs_hat: vec4(&z[layout.xs_hat()]),
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut z = Vec::with_capacity(10 + self.w.len() * 2 + self.xi.len());
        z.extend_from_slice(&self.x);
        z.extend_from_slice(&self.w);
        z.extend_from_slice(&self.w_hat);
        z.push(self.x4_hat);
        z.extend_from_slice(&self.xi);
        z.extend_from_slice(&self.xs_hat);
        z
    }
}

/// Derived channels at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSignals<T> {
    pub u: T,
    pub f_d: T,
    pub f_d_hat: T,
    pub y: T,
    /// `y - r`.
    pub e: T,
    pub v_p: T,
    pub v_s: T,
    pub e_p: T,
    pub xp_hat: Vec4<T>,
}

/// Augmented closed-loop vector field.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T> {
    layout: LoopLayout,
    exo: ExoSystem<T>,
    observer: DisturbanceObserverParams<T>,
    controller: CompositeController<T>,
}

/// Validates `cfg` and wires the closed loop.
pub fn build_loop_dynamics<T: Real>(cfg: &ScenarioConfig<T>) -> Result<ClosedLoop<T>> {
    let options = ValidationOptions {
        allow_unit_frequency: cfg.allow_unit_frequency,
    };
    validate_configuration(&cfg.exo, cfg.epsilon, cfg.reference, options).into_result()?;
    if !(cfg.filter > T::zero() && cfg.filter.is_finite()) {
        return Err(Error::param(
            "a",
            format!("must be positive, got {}", cfg.filter),
        ));
    }
    cfg.steps()?;
    let plant = PlantParams::new(cfg.epsilon)?;
    let reference = ReferenceParams::new(cfg.reference)?;
    let observer = DisturbanceObserverParams::new(cfg.l1, cfg.l2)?;
    let mats = SystemMatrices::new(cfg.k, plant, cfg.filter)?;
    let backstepping = BacksteppingParams::new(cfg.b, cfg.reference, cfg.psi_rate)?;
    let internal_model = cfg.internal_model()?;
    let controller =
        CompositeController::synthesize(mats, &internal_model, backstepping, reference)?;
    let layout = LoopLayout {
        m: cfg.exo.dim(),
        q: controller.gains().order(),
    };
    Ok(ClosedLoop {
        layout,
        exo: cfg.exo.clone(),
        observer,
        controller,
    })
}

impl<T: Real> ClosedLoop<T> {
    pub fn layout(&self) -> &LoopLayout {
        &self.layout
    }

    pub fn controller(&self) -> &CompositeController<T> {
        &self.controller
    }

    pub fn exosystem(&self) -> &ExoSystem<T> {
        &self.exo
    }

    pub fn observer(&self) -> &DisturbanceObserverParams<T> {
        &self.observer
    }

    /// Initial state: plant at `x0`, exosystem at `w0`, observer and internal
    /// model at zero, decomposition observer at `xs_hat0`.
    pub fn initial_state(&self, cfg: &ScenarioConfig<T>) -> Vec<T> {
        let l = &self.layout;
        let mut z = vec![T::zero(); l.len()];
        z[l.x()].copy_from_slice(&cfg.x0);
        z[l.w()].copy_from_slice(self.exo.initial());
        z[l.xs_hat()].copy_from_slice(&cfg.xs_hat0);
        z
    }

    #[inline]
    fn control(&self, z: &[T], xi_dot: &mut [T]) -> (ControlOutput<T>, T, T) {
        let l = &self.layout;
        let x = vec4(&z[l.x()]);
        let f_d = self.exo.output(&z[l.w()]);
        let f_d_hat = disturbance_estimate(&z[l.w_hat()], &self.exo, &self.observer);
        let xs_hat = vec4(&z[l.xs_hat()]);
        let out = self
            .controller
            .control_into(&x, &z[l.xi()], &xs_hat, f_d_hat, xi_dot);
        (out, f_d, f_d_hat)
    }

    /// Derived channels at state `z`.
    pub fn signals(&self, z: &[T]) -> LoopSignals<T> {
        let mut scratch = vec![T::zero(); self.layout.q];
        let (out, f_d, f_d_hat) = self.control(z, &mut scratch);
        let y = z[2];
        LoopSignals {
            u: out.u,
            f_d,
            f_d_hat,
            y,
            e: y - self.controller.reference(),
            v_p: out.v_p,
            v_s: out.v_s,
            e_p: out.e_p,
            xp_hat: out.x_p_hat,
        }
    }

    /// Disturbance-observer Lyapunov function at state `z`.
    pub fn observer_lyapunov(&self, z: &[T]) -> T {
        let l = &self.layout;
        observer_lyapunov_from_states(
            &z[l.w_hat()],
            z[l.x4_hat()],
            &z[l.w()],
            z[3],
            &self.observer,
        )
    }

    /// `|c(x3) (F^_d - F_d)|` at state `z`.
    pub fn compensation_residual(&self, z: &[T]) -> T {
        let l = &self.layout;
        let f_d = self.exo.output(&z[l.w()]);
        let f_d_hat = disturbance_estimate(&z[l.w_hat()], &self.exo, &self.observer);
        (coupling_coefficient(z[2], self.controller.matrices().plant()) * (f_d_hat - f_d)).abs()
    }
}

impl<T: Real> OdeFunction<T> for ClosedLoop<T> {
    fn eval(&self, _t: T, z: &[T], dz: &mut [T]) {
        let l = self.layout;
        let mats = self.controller.matrices();
        let r = self.controller.reference();
        let x = vec4(&z[l.x()]);

        let (out, f_d, _) = self.control(z, &mut dz[l.xi()]);

        let x4_hat_dot = observer_rates_into(
            &z[l.w_hat()],
            z[l.x4_hat()],
            &x,
            out.u,
            &self.exo,
            &self.observer,
            mats.plant(),
            &mut dz[l.w_hat()],
        );
        dz[l.x4_hat()] = x4_hat_dot;

        dz[l.x()].copy_from_slice(&tora_rhs(&x, out.u, f_d, mats.plant()));
        self.exo.derivative_into(&z[l.w()], &mut dz[l.w()]);

        let obs = DecompObserverState {
            x_s_hat: vec4(&z[l.xs_hat()]),
        };
        dz[l.xs_hat()]
            .copy_from_slice(&decomposition_observer_dynamics(&obs, out.v_s, &x, mats, r));
    }
}

/// Recorded closed-loop run on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub layout: LoopLayout,
    pub reference: T,
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub signals: Vec<LoopSignals<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample(&self, i: usize) -> LoopState<T> {
        LoopState::from_slice(&self.layout, &self.states[i])
    }

    pub fn x(&self, i: usize) -> Vec4<T> {
        vec4(&self.states[i][self.layout.x()])
    }

    pub fn xs_hat(&self, i: usize) -> Vec4<T> {
        vec4(&self.states[i][self.layout.xs_hat()])
    }

    /// Sample spacing, zero for a single sample.
    pub fn spacing(&self) -> T {
        if self.times.len() < 2 {
            T::zero()
        } else {
            self.times[1] - self.times[0]
        }
    }

    /// `max |y - r|` over samples with `t >= from`; `None` if there are none.
    pub fn max_tracking_error_after(&self, from: T) -> Option<T> {
        self.times
            .iter()
            .zip(&self.signals)
            .filter(|(&t, _)| t >= from)
            .map(|(_, s)| s.e.abs())
            .fold(None, |acc: Option<T>, e| Some(acc.map_or(e, |a| a.max(e))))
    }

    /// First sample time after which `|y - r| < tol` holds for the rest of the record.
    pub fn settling_time(&self, tol: T) -> Option<T> {
        let mut settled = None;
        for (&t, s) in self.times.iter().zip(&self.signals).rev() {
            if s.e.abs() < tol {
                settled = Some(t);
            } else {
                break;
            }
        }
        settled
    }
}

/// Summary diagnostics of a run. All values are finite unless stated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: usize,
    pub samples: usize,
    pub final_time: f64,
    pub final_output: f64,
    /// `|y(T) - r|`.
    pub final_tracking_error: f64,
    pub settling_tolerance: f64,
    pub settling_time: Option<f64>,
    /// Set when the run is degenerate or never settles inside the record.
    pub horizon_too_short: bool,
    /// `max ||x||_inf` over recorded samples.
    pub max_plant_norm: f64,
    pub max_xs_hat_norm: f64,
    pub max_xi_norm: f64,
    pub margin_a: f64,
    pub margin_a_aug: f64,
    /// Largest single-step increase of the observer Lyapunov function.
    pub lyapunov_max_increase: f64,
    /// Largest spread of `||w||` inside any window of [`EXO_DRIFT_WINDOW`] units.
    pub exo_norm_window_drift: f64,
    /// `max |c(x3) (F^_d - F_d)|` for `t >= 50`; `None` for shorter runs.
    pub compensation_residual: Option<f64>,
    /// `max ||x^_p + x^_s - x||_inf` over recorded samples.
    pub decomposition_identity: f64,
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

/// Integrates `cfg` with RK4 and records every `record_stride` steps plus the
/// final step.
pub fn run<T: Real>(cfg: &ScenarioConfig<T>) -> Result<(Trajectory<T>, RunReport)> {
    let system = build_loop_dynamics(cfg)?;
    run_with(&system, cfg)
}

/// As [`run`], with an already built loop.
pub fn run_with<T: Real>(
    system: &ClosedLoop<T>,
    cfg: &ScenarioConfig<T>,
) -> Result<(Trajectory<T>, RunReport)> {
    let n_steps = cfg.steps()?;
    let h = cfg.step;
    let stride = cfg.record_stride;
    let layout = *system.layout();
    let mut z = system.initial_state(cfg);
    let mut rk = Rk4::new(z.len());

    let capacity = n_steps / stride + 2;
    let mut traj = Trajectory {
        layout,
        reference: cfg.reference,
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        signals: Vec::with_capacity(capacity),
    };
    let record = |traj: &mut Trajectory<T>, t: T, z: &[T]| {
        traj.times.push(t);
        traj.states.push(z.to_vec());
        traj.signals.push(system.signals(z));
    };
    record(&mut traj, T::zero(), &z);

    let window = T::lit(EXO_DRIFT_WINDOW);
    let comp_start = T::lit(COMPENSATION_WINDOW_START);
    let mut v_prev = system.observer_lyapunov(&z);
    let mut v_increase = T::zero();
    let w_norm0 = norm2(&z[layout.w()]);
    let (mut win_idx, mut win_min, mut win_max) = (0usize, w_norm0, w_norm0);
    let mut exo_drift = T::zero();
    let mut comp: Option<T> = None;

    for i in 0..n_steps {
        let t = T::from_count(i) * h;
        rk.step(system, t, &mut z, h)?;
        let t_next = T::from_count(i + 1) * h;

        let v = system.observer_lyapunov(&z);
        v_increase = v_increase.max(v - v_prev);
        v_prev = v;

        let wn = norm2(&z[layout.w()]);
        let idx = (t_next / window).floor().to_usize().unwrap_or(usize::MAX);
        if idx != win_idx {
            exo_drift = exo_drift.max(win_max - win_min);
            win_idx = idx;
            win_min = wn;
            win_max = wn;
        } else {
            win_min = win_min.min(wn);
            win_max = win_max.max(wn);
        }

        if t_next >= comp_start {
            let c = system.compensation_residual(&z);
            comp = Some(comp.map_or(c, |m| m.max(c)));
        }

        if (i + 1) % stride == 0 || i + 1 == n_steps {
            record(&mut traj, t_next, &z);
        }
    }
    exo_drift = exo_drift.max(win_max - win_min);

    let last = traj.len() - 1;
    let final_sig = traj.signals[last];
    let settling_time = traj.settling_time(cfg.settling_tolerance);
    let mut max_plant = T::zero();
    let mut max_xs = T::zero();
    let mut max_xi = T::zero();
    let mut identity = T::zero();
    for (s, sig) in traj.states.iter().zip(&traj.signals) {
        max_plant = max_plant.max(inf_norm(&s[layout.x()]));
        max_xs = max_xs.max(inf_norm(&s[layout.xs_hat()]));
        max_xi = max_xi.max(inf_norm(&s[layout.xi()]));
        let xs = &s[layout.xs_hat()];
        for j in 0..4 {
            identity = identity.max((sig.xp_hat[j] + xs[j] - s[j]).abs());
        }
    }

    let report = RunReport {
        steps: n_steps,
        samples: traj.len(),
        final_time: to_f64(traj.times[last]),
        final_output: to_f64(final_sig.y),
        final_tracking_error: to_f64(final_sig.e.abs()),
        settling_tolerance: to_f64(cfg.settling_tolerance),
        settling_time: settling_time.map(to_f64),
        horizon_too_short: n_steps == 0 || settling_time.is_none(),
        max_plant_norm: to_f64(max_plant),
        max_xs_hat_norm: to_f64(max_xs),
        max_xi_norm: to_f64(max_xi),
        margin_a: to_f64(system.controller().matrices().margin()?),
        margin_a_aug: to_f64(system.controller().gains().margin),
        lyapunov_max_increase: to_f64(v_increase),
        exo_norm_window_drift: to_f64(exo_drift),
        compensation_residual: comp.map(to_f64),
        decomposition_identity: to_f64(identity),
    };
    Ok((traj, report))
}

/// Rebuilds the primary and secondary systems from the recorded inputs
/// (`v_p`, `v_s`, `F_d`, `F^_d`, `x3`), starting from `x_p(0) = x(0)` and
/// `x_s(0) = 0`, and returns `||x^_s - x_s||` at every even-indexed sample.
///
/// The rebuild uses RK4 with twice the sample spacing, reading the midpoint
/// stages from the odd samples, so it needs a uniform record.
pub fn secondary_oracle_deviation<T: Real>(
    traj: &Trajectory<T>,
    cfg: &ScenarioConfig<T>,
) -> Result<Vec<(T, T)>> {
    if traj.is_empty() {
        return Ok(Vec::new());
    }
    let plant = PlantParams::new(cfg.epsilon)?;
    let mats = SystemMatrices::new(cfg.k, plant, cfg.filter)?;
    let r = cfg.reference;
    let dt = traj.spacing();

    let inputs = |k: usize| {
        let s = &traj.signals[k];
        let x3 = traj.states[k][2];
        (
            s.v_p,
            s.v_s,
            ResidualInput::new(x3, s.f_d, s.f_d_hat, r, &mats),
        )
    };
    let field = |t: T, z: &[T], dz: &mut [T]| {
        let k = (t / dt).round().to_usize().unwrap_or(0);
        let (v_p, v_s, residual) = inputs(k);
        let xp = vec4(&z[..4]);
        let xs = vec4(&z[4..]);
        dz[..4].copy_from_slice(&primary_dynamics(&xp, v_p, &residual, &mats));
        dz[4..].copy_from_slice(&secondary_dynamics(&xs, v_s, xp[2], xp[3], &mats, r));
    };

    let mut z = vec![T::zero(); 8];
    z[..4].copy_from_slice(&cfg.x0);
    let mut rk = Rk4::new(8);
    let dev = |z: &[T], k: usize| {
        let xs_hat = traj.xs_hat(k);
        let d: Vec<T> = (0..4).map(|i| xs_hat[i] - z[4 + i]).collect();
        (traj.times[k], norm2(&d))
    };
    let mut out = vec![dev(&z, 0)];
    let mut k = 0;
    while k + 2 < traj.len() {
        rk.step(&field, T::from_count(k) * dt, &mut z, dt + dt)?;
        k += 2;
        out.push(dev(&z, k));
    }
    Ok(out)
}

/// Largest `||x^_s - x_s||` against the independently rebuilt secondary state.
pub fn independent_secondary_oracle<T: Real>(
    traj: &Trajectory<T>,
    cfg: &ScenarioConfig<T>,
) -> Result<T> {
    Ok(secondary_oracle_deviation(traj, cfg)?
        .into_iter()
        .fold(T::zero(), |m, (_, d)| m.max(d)))
}
