//! Fixed-step simulation of the nonlinear plant in open and closed loop.
//!
//! The plant integrates with the classical fourth-order Runge-Kutta scheme
//! at `Ts / substeps`; feedback acts on the sampled error with zero-order
//! hold at `Ts`, while feedforward and disturbance signals are evaluated
//! continuously at the integrator stages. Model-inversion feedforward
//! carries its own reference state, co-integrated with the plant.
//!
//! Everything is deterministic: fixed step counts, no randomness, and a
//! single evaluation order, so identical configurations reproduce
//! bit-identical records.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GeneralizedState, PlantParams};
use crate::feedback::{LyapunovConfig, PidController, StabilitySample};
use crate::feedforward::{
    self, ff_annihilation, ff_global_lpv_ic, ff_mass, ff_nonlinear, AnnihilationMode,
    FeedforwardInput, InverseSystemRealization, MethodKind,
};
use crate::lpv::{self, LocalLpvModel, SchedulingStrategy};
use crate::trajectory::{
    sample_disturbance, sample_reference, DisturbanceProfile, MotionProfile, ReferenceSample,
};
use crate::{Error, Result, Vector12, Vector6};

/// Integration and sampling setup shared by every run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Controller/recording sample period [s].
    pub sample_time: f64,
    /// Integrator substeps per sample (plant step h = sample_time / substeps).
    pub substeps: u32,
    /// Total simulated time [s].
    pub horizon: f64,
    /// Initial-condition offset added to the reference start in mismatch
    /// scenarios [m, rad].
    pub mismatch: [f64; 6],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_time: 65e-6,
            substeps: 10,
            horizon: 1.0,
            mismatch: [0.0, 0.0, 0.0, 5e-6, 0.0, 0.0],
        }
    }
}

impl SimConfig {
    pub fn step_size(&self) -> f64 {
        self.sample_time / self.substeps as f64
    }

    pub fn samples(&self) -> usize {
        (self.horizon / self.sample_time).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_time > 0.0) || !self.sample_time.is_finite() {
            return Err(Error::Config("sample_time must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.mismatch.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("mismatch entries must be finite".into()));
        }
        Ok(())
    }

    /// The horizon must cover the motion so every run ends at rest.
    pub fn validate_against(&self, profile: &MotionProfile) -> Result<()> {
        self.validate()?;
        if self.horizon < profile.end_time() {
            return Err(Error::Config(format!(
                "horizon {} s ends before the motion profile ({} s)",
                self.horizon,
                profile.end_time()
            )));
        }
        Ok(())
    }
}

/// The six experiment scenarios: loop topology x initial-condition match
/// x disturbance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "ol-match")]
    OlMatch,
    #[serde(rename = "ol-mismatch")]
    OlMismatch,
    #[serde(rename = "cl-match")]
    ClMatch,
    #[serde(rename = "cl-mismatch")]
    ClMismatch,
    #[serde(rename = "cl-match-dist")]
    ClMatchDist,
    #[serde(rename = "cl-mismatch-dist")]
    ClMismatchDist,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::OlMatch,
        Scenario::OlMismatch,
        Scenario::ClMatch,
        Scenario::ClMismatch,
        Scenario::ClMatchDist,
        Scenario::ClMismatchDist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::OlMatch => "ol-match",
            Scenario::OlMismatch => "ol-mismatch",
            Scenario::ClMatch => "cl-match",
            Scenario::ClMismatch => "cl-mismatch",
            Scenario::ClMatchDist => "cl-match-dist",
            Scenario::ClMismatchDist => "cl-mismatch-dist",
        }
    }

    pub fn closed_loop(self) -> bool {
        !matches!(self, Scenario::OlMatch | Scenario::OlMismatch)
    }

    pub fn mismatched(self) -> bool {
        matches!(self, Scenario::OlMismatch | Scenario::ClMismatch | Scenario::ClMismatchDist)
    }

    pub fn disturbed(self) -> bool {
        matches!(self, Scenario::ClMatchDist | Scenario::ClMismatchDist)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial plant state for a run: the reference start, optionally offset
/// by the configured mismatch.
pub fn initial_state(cfg: &SimConfig, profile: &MotionProfile, mismatched: bool) -> GeneralizedState {
    let r0 = sample_reference(profile, 0.0);
    let mut state = GeneralizedState::new(r0.pos, r0.vel);
    if mismatched {
        state.q += Vector6::from_row_slice(&cfg.mismatch);
    }
    state
}

/// Sampled time series of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRecord {
    pub method: MethodKind,
    pub scenario: Scenario,
    pub sample_time: f64,
    pub t: Vec<f64>,
    pub q: Vec<Vector6>,
    pub qd: Vec<Vector6>,
    pub r: Vec<Vector6>,
    pub rd: Vec<Vector6>,
    /// Tracking error, identically `q - r` at each sample.
    pub e: Vec<Vector6>,
    pub u_ff: Vec<Vector6>,
    pub u_fb: Vec<Vector6>,
    pub d: Vec<Vector6>,
}

impl SimulationRecord {
    fn with_capacity(method: MethodKind, scenario: Scenario, sample_time: f64, n: usize) -> Self {
        Self {
            method,
            scenario,
            sample_time,
            t: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            qd: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            rd: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            u_ff: Vec::with_capacity(n),
            u_fb: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Per-sample (q, qd) pairs for the stability machinery.
    pub fn stability_samples(&self) -> Vec<StabilitySample> {
        self.q
            .iter()
            .zip(&self.qd)
            .map(|(q, qd)| StabilitySample::new(*q, *qd))
            .collect()
    }
}

/// Per-coordinate norms of the sampled error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// Unnormalized root-sum-square over samples.
    pub l2: Vector6,
    /// Maximum absolute value over samples.
    pub linf: Vector6,
}

/// Computes the sampled-error norms of a record.
pub fn error_metrics(record: &SimulationRecord) -> Result<ErrorMetrics> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let mut sumsq = Vector6::zeros();
    let mut linf = Vector6::zeros();
    for e in &record.e {
        for i in 0..6 {
            sumsq[i] += e[i] * e[i];
            linf[i] = linf[i].max(e[i].abs());
        }
    }
    Ok(ErrorMetrics { l2: sumsq.map(f64::sqrt), linf })
}

/// One classical Runge-Kutta step of the plant under a constant wrench.
pub fn integrate_step(
    state: &GeneralizedState,
    wrench: &Vector6,
    params: &PlantParams,
    h: f64,
) -> Result<GeneralizedState> {
    assert!(h > 0.0, "step size must be positive");
    let f = |s: &GeneralizedState| -> Result<(Vector6, Vector6)> {
        Ok((s.qd, dynamics::forward_dynamics(s, wrench, params)?))
    };
    let k1 = f(state)?;
    let k2 = f(&offset_state(state, &k1, h / 2.0))?;
    let k3 = f(&offset_state(state, &k2, h / 2.0))?;
    let k4 = f(&offset_state(state, &k3, h))?;
    Ok(GeneralizedState::new(
        state.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
        state.qd + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
    ))
}

fn offset_state(state: &GeneralizedState, k: &(Vector6, Vector6), s: f64) -> GeneralizedState {
    GeneralizedState::new(state.q + k.0 * s, state.qd + k.1 * s)
}

/// A feedforward method bound to a plant, ready to evaluate along a run.
///
/// Stateless strategies evaluate pointwise; the inversion strategies hold
/// a model and co-integrate an auxiliary reference state with the plant.
pub struct FeedforwardEngine {
    kind: MethodKind,
    params: PlantParams,
    imp: EngineImpl,
}

enum EngineImpl {
    Stateless,
    LocalModel(LocalLpvModel),
    Realization(InverseSystemRealization),
}

impl FeedforwardEngine {
    pub fn new(kind: MethodKind, params: &PlantParams) -> Result<Self> {
        let imp = match kind {
            MethodKind::Mass
            | MethodKind::AnnihilateGlobal
            | MethodKind::Nonlinear
            | MethodKind::LpvGlobalIc => EngineImpl::Stateless,
            MethodKind::AnnihilateLocal => EngineImpl::LocalModel(lpv::build_local_model(params)?),
            MethodKind::LpvLocal => {
                let model = lpv::build_local_model(params)?;
                EngineImpl::Realization(feedforward::build_local_lpv_inverse(model, 2)?)
            }
            MethodKind::LpvGlobalInv => {
                let model = lpv::build_global_descriptor(params, SchedulingStrategy::TrigProducts)?;
                EngineImpl::Realization(feedforward::build_global_lpv_inverse(model, 2)?)
            }
        };
        Ok(Self { kind, params: params.clone(), imp })
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    /// Auxiliary state at the start of a run: the inversion strategies
    /// start from the plant state, everything else carries none.
    pub fn initial_aux(&self, state: &GeneralizedState) -> Vector12 {
        match &self.imp {
            EngineImpl::Realization(_) => {
                let mut x = Vector12::zeros();
                for i in 0..6 {
                    x[i] = state.q[i];
                    x[6 + i] = state.qd[i];
                }
                x
            }
            _ => Vector12::zeros(),
        }
    }

    /// Feedforward wrench and auxiliary-state derivative at one instant.
    pub fn eval(
        &self,
        reference: &ReferenceSample,
        state: &GeneralizedState,
        aux: &Vector12,
    ) -> Result<(Vector6, Vector12)> {
        match (&self.imp, self.kind) {
            (EngineImpl::Stateless, MethodKind::Mass) => {
                Ok((ff_mass(reference, &self.params), Vector12::zeros()))
            }
            (EngineImpl::Stateless, MethodKind::AnnihilateGlobal) => {
                let input =
                    FeedforwardInput { reference, measured: Some(state), scheduling: None };
                Ok((ff_annihilation(&input, AnnihilationMode::Global, &self.params)?, Vector12::zeros()))
            }
            (EngineImpl::Stateless, MethodKind::Nonlinear) => {
                Ok((ff_nonlinear(reference, &self.params)?, Vector12::zeros()))
            }
            (EngineImpl::Stateless, MethodKind::LpvGlobalIc) => {
                let input =
                    FeedforwardInput { reference, measured: Some(state), scheduling: None };
                Ok((ff_global_lpv_ic(&input, &self.params)?, Vector12::zeros()))
            }
            (EngineImpl::LocalModel(model), _) => {
                let pt = model.scheduling(state, None);
                let input =
                    FeedforwardInput { reference, measured: Some(state), scheduling: Some(&pt) };
                Ok((ff_annihilation(&input, AnnihilationMode::Local, &self.params)?, Vector12::zeros()))
            }
            (EngineImpl::Realization(real), _) => {
                let pt = real.scheduling(state, None);
                let (aux_dot, u) = real.eval(aux, &pt, &reference.acc)?;
                Ok((u, aux_dot))
            }
            _ => unreachable!("engine kind and implementation always match"),
        }
    }
}

/// Feedback law applied at the sample rate.
pub enum FeedbackLaw {
    Pid(PidController),
    /// Proportional (optionally plus rate) stability-analysis controller.
    Proportional(LyapunovConfig),
}

impl FeedbackLaw {
    /// Actuation from the servo error (reference minus measurement) and
    /// its rate.
    pub fn step(&mut self, e: &Vector6, edot: &Vector6, dt: f64) -> Vector6 {
        match self {
            FeedbackLaw::Pid(pid) => pid.step(e, dt),
            FeedbackLaw::Proportional(cfg) => cfg.control(e, edot),
        }
    }
}

/// Open-loop run: the plant sees feedforward only.
pub fn run_open_loop(
    cfg: &SimConfig,
    plant: &PlantParams,
    ff: &mut FeedforwardEngine,
    traj: &MotionProfile,
    scenario: Scenario,
) -> Result<SimulationRecord> {
    run_core(cfg, plant, ff, None, traj, None, scenario)
}

/// Closed-loop run: feedforward plus sampled feedback, optionally with an
/// input disturbance.
pub fn run_closed_loop(
    cfg: &SimConfig,
    plant: &PlantParams,
    ff: &mut FeedforwardEngine,
    fb: &mut FeedbackLaw,
    traj: &MotionProfile,
    dist: Option<&DisturbanceProfile>,
    scenario: Scenario,
) -> Result<SimulationRecord> {
    run_core(cfg, plant, ff, Some(fb), traj, dist, scenario)
}

fn run_core(
    cfg: &SimConfig,
    plant: &PlantParams,
    ff: &mut FeedforwardEngine,
    mut fb: Option<&mut FeedbackLaw>,
    traj: &MotionProfile,
    dist: Option<&DisturbanceProfile>,
    scenario: Scenario,
) -> Result<SimulationRecord> {
    cfg.validate_against(traj)?;
    if let Some(d) = dist {
        d.validate()?;
    }
    let n = cfg.samples() - 1;
    let h = cfg.step_size();
    let mut record =
        SimulationRecord::with_capacity(ff.kind(), scenario, cfg.sample_time, n + 1);

    // Steps split on reference and disturbance breakpoints: an RK4 step
    // across a jerk or ramp kink would otherwise pick up an
    // O(|jump| h^2) local error, far above the smooth-case truncation.
    let mut marks: Vec<f64> = traj.breakpoints();
    if let Some(dp) = dist {
        marks.extend(dp.breakpoints());
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let mut state = initial_state(cfg, traj, scenario.mismatched());
    let mut aux = ff.initial_aux(&state);

    for k in 0..=n {
        let t = k as f64 * cfg.sample_time;
        let r = sample_reference(traj, t);
        // Sampled feedback with zero-order hold over the coming interval.
        let u_fb = match fb.as_deref_mut() {
            Some(law) => law.step(&(r.pos - state.q), &(r.vel - state.qd), cfg.sample_time),
            None => Vector6::zeros(),
        };
        let d_now = dist.map_or(Vector6::zeros(), |dp| sample_disturbance(dp, t));
        let (u_ff, _) = ff.eval(&r, &state, &aux)?;

        record.t.push(t);
        record.q.push(state.q);
        record.qd.push(state.qd);
        record.r.push(r.pos);
        record.rd.push(r.vel);
        record.e.push(state.q - r.pos);
        record.u_ff.push(u_ff);
        record.u_fb.push(u_fb);
        record.d.push(d_now);

        if k == n {
            break;
        }
        let stage = |tau: f64, st: &GeneralizedState, ax: &Vector12| -> Result<StageDeriv> {
            let r = sample_reference(traj, tau);
            let (u_ff, aux_dot) = ff.eval(&r, st, ax)?;
            let mut w = u_ff + u_fb;
            if let Some(dp) = dist {
                w += sample_disturbance(dp, tau);
            }
            let qdd = dynamics::forward_dynamics(st, &w, plant)?;
            Ok(StageDeriv { qd: st.qd, qdd, aux: aux_dot })
        };
        for j in 0..cfg.substeps {
            let t0 = t + j as f64 * h;
            let t1 = t + (j + 1) as f64 * h;
            // Marks within a relative sliver of the endpoints already
            // coincide with step boundaries and would only produce
            // degenerate segments.
            let lo = marks.partition_point(|&m| m <= t0 + 1e-9 * h);
            let hi = marks.partition_point(|&m| m < t1 - 1e-9 * h);
            let mut a = t0;
            for &m in &marks[lo..hi] {
                rk4_step(&stage, a, m, &mut state, &mut aux)?;
                a = m;
            }
            rk4_step(&stage, a, t1, &mut state, &mut aux)?;
        }
    }
    Ok(record)
}

fn rk4_step<F>(
    stage: &F,
    a: f64,
    b: f64,
    state: &mut GeneralizedState,
    aux: &mut Vector12,
) -> Result<()>
where
    F: Fn(f64, &GeneralizedState, &Vector12) -> Result<StageDeriv>,
{
    let h = b - a;
    let k1 = stage(a, state, aux)?;
    let (s2, a2) = offset(state, aux, &k1, h / 2.0);
    let k2 = stage(a + h / 2.0, &s2, &a2)?;
    let (s3, a3) = offset(state, aux, &k2, h / 2.0);
    let k3 = stage(a + h / 2.0, &s3, &a3)?;
    let (s4, a4) = offset(state, aux, &k3, h);
    let k4 = stage(b, &s4, &a4)?;
    *state = GeneralizedState::new(
        state.q + (k1.qd + k2.qd * 2.0 + k3.qd * 2.0 + k4.qd) * (h / 6.0),
        state.qd + (k1.qdd + k2.qdd * 2.0 + k3.qdd * 2.0 + k4.qdd) * (h / 6.0),
    );
    *aux += (k1.aux + k2.aux * 2.0 + k3.aux * 2.0 + k4.aux) * (h / 6.0);
    Ok(())
}

struct StageDeriv {
    qd: Vector6,
    qdd: Vector6,
    aux: Vector12,
}

fn offset(
    state: &GeneralizedState,
    aux: &Vector12,
    k: &StageDeriv,
    s: f64,
) -> (GeneralizedState, Vector12) {
    (GeneralizedState::new(state.q + k.qd * s, state.qd + k.qdd * s), aux + k.aux * s)
}
