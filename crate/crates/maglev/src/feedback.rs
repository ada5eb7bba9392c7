//! Feedback controllers and Lyapunov stability certificates.
//!
//! Two controller families: a per-coordinate discrete PID with filtered
//! derivative for the tracking experiments, and a proportional law (with
//! optional rate feedback) for the stability analysis. The Lyapunov side
//! evaluates the closed-loop energy function, its pinned derivative form,
//! and searches for the largest energy-mixing parameter epsilon whose
//! positive-definiteness certificates hold on every sample of a run.
//!
//! All error vectors here follow the servo convention (reference minus
//! measurement); the quadratic forms are sign-symmetric, so certificates
//! are unaffected by the convention.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GeneralizedState, PlantParams};
use crate::linalg;
use crate::{Error, GeneralizedForces, Matrix6, Result, Vector6};

/// Upper end of the epsilon search interval.
pub const EPSILON_MAX: f64 = 1e3;
/// Relative width at which the epsilon bisection stops.
pub const EPSILON_BISECT_REL_TOL: f64 = 1e-3;

/// Per-coordinate PID gains with a first-order derivative filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: [f64; 6],
    pub ki: [f64; 6],
    pub kd: [f64; 6],
    /// Derivative filter cutoff [rad/s].
    pub derivative_cutoff: f64,
}

impl PidGains {
    /// Loop-shaping rule of thumb: per channel `kp = J w_c^2`,
    /// `kd = 2 * 0.7 * J w_c`, `ki = kp w_c / 10`, derivative filter a
    /// decade above crossover.
    pub fn loop_shaped(params: &PlantParams, crossover: f64) -> Self {
        let j = params.inertia_vector();
        let mut kp = [0.0; 6];
        let mut ki = [0.0; 6];
        let mut kd = [0.0; 6];
        for i in 0..6 {
            kp[i] = j[i] * crossover * crossover;
            kd[i] = 2.0 * 0.7 * j[i] * crossover;
            ki[i] = kp[i] * crossover / 10.0;
        }
        Self { kp, ki, kd, derivative_cutoff: 10.0 * crossover }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: &[f64; 6]| v.iter().all(|&x| x >= 0.0 && x.is_finite());
        if !nonneg(&self.kp) || !nonneg(&self.ki) || !nonneg(&self.kd) {
            return Err(Error::Config("PID gains must be finite and non-negative".into()));
        }
        if !(self.derivative_cutoff > 0.0) {
            return Err(Error::Config("derivative filter cutoff must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::loop_shaped(&PlantParams::default(), 2.0 * std::f64::consts::PI * 50.0)
    }
}

/// Discrete PID with trapezoidal integrator and filtered derivative.
///
/// One instance per simulation run; the first step primes the previous
/// error so no derivative kick occurs at start-up.
#[derive(Clone, Debug)]
pub struct PidController {
    gains: PidGains,
    integral: Vector6,
    filtered_rate: Vector6,
    prev_error: Option<Vector6>,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        Self { gains, integral: Vector6::zeros(), filtered_rate: Vector6::zeros(), prev_error: None }
    }

    pub fn gains(&self) -> &PidGains {
        &self.gains
    }

    pub fn reset(&mut self) {
        self.integral = Vector6::zeros();
        self.filtered_rate = Vector6::zeros();
        self.prev_error = None;
    }

    /// Advances the controller one sample and returns the actuation
    /// wrench. `e` is the servo error (reference minus measurement).
    pub fn step(&mut self, e: &Vector6, dt: f64) -> GeneralizedForces {
        assert!(dt > 0.0, "controller sample time must be positive");
        let prev = self.prev_error.unwrap_or(*e);
        self.integral += (*e + prev) * (dt / 2.0);
        let raw = (*e - prev) / dt;
        // One-pole low-pass at the cutoff, discretized implicitly.
        let alpha = dt * self.gains.derivative_cutoff / (1.0 + dt * self.gains.derivative_cutoff);
        self.filtered_rate += (raw - self.filtered_rate) * alpha;
        self.prev_error = Some(*e);
        Vector6::from_fn(|i, _| {
            self.gains.kp[i] * e[i]
                + self.gains.ki[i] * self.integral[i]
                + self.gains.kd[i] * self.filtered_rate[i]
        })
    }
}

/// Proportional stability-analysis controller `u = Kp e + Kv edot`.
///
/// The rate gain covers the zero-friction configuration, where some
/// physical or artificial damping is required for the certificates to
/// close; it defaults to off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Symmetric positive definite proportional gain.
    pub kp: Matrix6,
    /// Energy-mixing parameter of the Lyapunov candidate.
    pub epsilon: f64,
    /// Optional symmetric rate-feedback gain.
    pub kv: Option<Matrix6>,
}

impl LyapunovConfig {
    /// Diagonal gains from the same loop-shaping rule as the PID, at a
    /// (typically lower) analysis crossover.
    pub fn loop_shaped(params: &PlantParams, crossover: f64, rate_feedback: bool) -> Self {
        let j = params.inertia_vector();
        let kp = Matrix6::from_diagonal(&Vector6::from_fn(|i, _| j[i] * crossover * crossover));
        let kv = rate_feedback.then(|| {
            Matrix6::from_diagonal(&Vector6::from_fn(|i, _| 2.0 * 0.7 * j[i] * crossover))
        });
        Self { kp, epsilon: 1e-2, kv }
    }

    pub fn validate(&self) -> Result<()> {
        validate_gain(&self.kp, "Kp")?;
        if let Some(kv) = &self.kv {
            validate_gain(kv, "Kv")?;
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Feedback wrench on the servo error and its rate.
    pub fn control(&self, e: &Vector6, edot: &Vector6) -> GeneralizedForces {
        let mut u = self.kp * e;
        if let Some(kv) = &self.kv {
            u += kv * edot;
        }
        u
    }

    /// Closed-loop damping seen by the certificates: plant friction plus
    /// any rate feedback.
    pub fn effective_damping(&self, params: &PlantParams) -> Matrix6 {
        let mut d = params.damping();
        if let Some(kv) = &self.kv {
            d += kv;
        }
        d
    }
}

fn validate_gain(m: &Matrix6, name: &str) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-9 * (1.0 + m.amax()) {
        return Err(Error::Config(format!("{name} must be symmetric")));
    }
    if !is_pd6(m) {
        return Err(Error::Config(format!("{name} must be positive definite")));
    }
    Ok(())
}

fn is_pd6(m: &Matrix6) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

/// Lyapunov candidate
/// `V = 1/2 e' Kp e + eps e' M(q) edot + 1/2 edot' M(q) edot`.
pub fn lyapunov_value(
    e: &Vector6,
    edot: &Vector6,
    q: &Vector6,
    cfg: &LyapunovConfig,
    params: &PlantParams,
) -> Result<f64> {
    let (pd, minors) = dynamics::is_mass_pd(q, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let m = dynamics::mass_matrix(q, params);
    Ok(0.5 * e.dot(&(cfg.kp * e)) + cfg.epsilon * e.dot(&(m * edot)) + 0.5 * edot.dot(&(m * edot)))
}

/// Pinned derivative form
/// `Vdot = [e; edot]' [-eps Kp, eps/2 (Mdot/2 - D~); *, eps M - D~] [e; edot]`
/// with `D~` the closed-loop damping and the off-diagonal block
/// symmetrized.
pub fn lyapunov_rate(
    e: &Vector6,
    edot: &Vector6,
    state: &GeneralizedState,
    cfg: &LyapunovConfig,
    params: &PlantParams,
) -> Result<f64> {
    let (pd, minors) = dynamics::is_mass_pd(&state.q, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let (q11, q12, q22) = rate_blocks(state, cfg, params);
    Ok(e.dot(&(q11 * e)) + 2.0 * e.dot(&(q12 * edot)) + edot.dot(&(q22 * edot)))
}

fn rate_blocks(
    state: &GeneralizedState,
    cfg: &LyapunovConfig,
    params: &PlantParams,
) -> (Matrix6, Matrix6, Matrix6) {
    let m = dynamics::mass_matrix(&state.q, params);
    let mdot = dynamics::mass_matrix_rate(&state.q, &state.qd, params);
    let d = cfg.effective_damping(params);
    let q11 = -cfg.epsilon * cfg.kp;
    let q12 = (mdot * 0.5 - d) * (0.5 * cfg.epsilon);
    let q22 = m * cfg.epsilon - d;
    (q11, q12, q22)
}

/// Block matrix of the Lyapunov candidate, `[[Kp, eps M], [eps M, M]]`.
pub fn lyapunov_matrix(q: &Vector6, cfg: &LyapunovConfig, params: &PlantParams) -> DMatrix<f64> {
    let m = dynamics::mass_matrix(q, params);
    let mut n = DMatrix::zeros(12, 12);
    for i in 0..6 {
        for j in 0..6 {
            n[(i, j)] = cfg.kp[(i, j)];
            n[(i, 6 + j)] = cfg.epsilon * m[(i, j)];
            n[(6 + i, j)] = cfg.epsilon * m[(i, j)];
            n[(6 + i, 6 + j)] = m[(i, j)];
        }
    }
    n
}

/// Block matrix of the pinned derivative form (so that
/// `Vdot = [e; edot]' N [e; edot]`).
pub fn lyapunov_rate_matrix(
    state: &GeneralizedState,
    cfg: &LyapunovConfig,
    params: &PlantParams,
) -> DMatrix<f64> {
    let (q11, q12, q22) = rate_blocks(state, cfg, params);
    let mut n = DMatrix::zeros(12, 12);
    for i in 0..6 {
        for j in 0..6 {
            n[(i, j)] = q11[(i, j)];
            n[(i, 6 + j)] = q12[(i, j)];
            n[(6 + i, j)] = q12[(j, i)];
            n[(6 + i, 6 + j)] = q22[(i, j)];
        }
    }
    n
}

/// Schur-complement positive-definiteness test for the block matrix
/// `N(eps) = [[eps A, eps B], [eps B', C - eps D]]`:
/// `N(eps)` is PD iff `eps A` is PD and `C - eps (D + B' A^-1 B)` is PD.
/// Both conditions are checked through symmetric eigenvalue tests.
pub fn schur_pd_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    epsilon: f64,
) -> Result<bool> {
    let n = a.nrows();
    for (m, name) in [(a, "A"), (b, "B"), (c, "C"), (d, "D")] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::ShapeMismatch {
                context: format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()),
            });
        }
    }
    if !linalg::is_pd_sym(&(a * epsilon)) {
        return Ok(false);
    }
    let a_inv = a.clone().try_inverse().ok_or_else(|| Error::Simulation(
        "Schur test: block A passed the eigenvalue test but failed to invert".into(),
    ))?;
    let complement = c - (d + b.transpose() * a_inv * b) * epsilon;
    Ok(linalg::is_pd_sym(&complement))
}

/// One record of a closed-loop run, as consumed by the epsilon search.
#[derive(Clone, Copy, Debug)]
pub struct StabilitySample {
    pub q: Vector6,
    pub qd: Vector6,
}

impl StabilitySample {
    pub fn new(q: Vector6, qd: Vector6) -> Self {
        Self { q, qd }
    }
}

fn to_dyn(m: &Matrix6) -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| m[(i, j)])
}

/// Whether both Lyapunov certificates hold at one sample for a given
/// epsilon: the candidate's block matrix is PD, and the negated derivative
/// block matrix is PD.
pub fn certificates_hold(
    sample: &StabilitySample,
    kp: &Matrix6,
    params: &PlantParams,
    epsilon: f64,
) -> Result<(bool, bool)> {
    let (pd, minors) = dynamics::is_mass_pd(&sample.q, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let m = dynamics::mass_matrix(&sample.q, params);
    let mdot = dynamics::mass_matrix_rate(&sample.q, &sample.qd, params);
    let d_tilde = params.damping();
    let md = to_dyn(&m);
    let zero = DMatrix::zeros(6, 6);
    // Candidate: [[Kp, eps M], [eps M, M]] = [[eps(Kp/eps), eps M], [eps M, M - eps*0]].
    let value_pd = schur_pd_check(&to_dyn(&(kp / epsilon)), &md, &md, &zero, epsilon)?;
    // Negated rate form: [[eps Kp, -eps/2 (Mdot/2 - D~)], [*, D~ - eps M]].
    let b = to_dyn(&((mdot * 0.5 - d_tilde) * -0.5));
    let rate_pd = schur_pd_check(&to_dyn(kp), &b, &to_dyn(&d_tilde), &md, epsilon)?;
    Ok((value_pd, rate_pd))
}

fn feasible(
    samples: &[StabilitySample],
    kp: &Matrix6,
    params: &PlantParams,
    epsilon: f64,
) -> Result<bool> {
    for sample in samples {
        let (value_pd, rate_pd) = certificates_hold(sample, kp, params, epsilon)?;
        if !(value_pd && rate_pd) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest epsilon in `(0, EPSILON_MAX]` for which both certificates hold
/// at every sample, found by bisection.
///
/// Both certificate violations grow monotonically with epsilon, so the
/// feasible set is an interval anchored at zero and bisection is exact up
/// to the stopping tolerance. The closed-loop damping must be folded into
/// `params` (see [`LyapunovConfig::effective_damping`]); with no damping
/// at all the rate certificate fails for every epsilon and the search
/// reports [`Error::NoFeasibleEpsilon`].
pub fn find_epsilon(samples: &[StabilitySample], kp: &Matrix6, params: &PlantParams) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyRecord);
    }
    validate_gain(kp, "Kp")?;
    // Seed: walk down from the top until a feasible epsilon appears.
    let mut hi = EPSILON_MAX;
    let mut lo = 0.0;
    let mut probe = EPSILON_MAX;
    let mut found = false;
    for _ in 0..64 {
        if feasible(samples, kp, params, probe)? {
            lo = probe;
            found = true;
            break;
        }
        hi = probe;
        probe /= 2.0;
    }
    if !found {
        return Err(Error::NoFeasibleEpsilon { epsilon_max: EPSILON_MAX, samples: samples.len() });
    }
    if lo == EPSILON_MAX {
        return Ok(lo);
    }
    while (hi - lo) > EPSILON_BISECT_REL_TOL * lo {
        let mid = 0.5 * (hi + lo);
        if feasible(samples, kp, params, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
