//! Feedforward strategies.
//!
//! Six ways to turn a reference trajectory into an input wrench, from the
//! rigid-body mass baseline up to exact inversion of the parameter-varying
//! models. All strategies share [`FeedforwardInput`]; each declares which
//! optional fields it needs. The two model-inversion strategies carry
//! internal state ([`InverseSystemRealization`]) and are advanced with the
//! same integrator the simulator uses.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GeneralizedState, PlantParams};
use crate::linalg::{self, RANK_RTOL};
use crate::lpv::{self, DescriptorLpvModel, LocalLpvModel, NU, NY};
use crate::sched::SchedulingPoint;
use crate::trajectory::ReferenceSample;
use crate::{Error, GeneralizedForces, Result, Vector12, Vector6};

/// Strategy selector; the names are the config and CLI spellings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    /// Nominal diagonal inertia times reference acceleration.
    #[serde(rename = "mass")]
    Mass,
    /// Input-map annihilation using the measured configuration, Q1 = M(q).
    #[serde(rename = "annihilate-global")]
    AnnihilateGlobal,
    /// Input-map annihilation on the local model, Q1 = B(p)+ applied to
    /// the nominal input selection.
    #[serde(rename = "annihilate-local")]
    AnnihilateLocal,
    /// Full nonlinear inverse dynamics along the reference.
    #[serde(rename = "nonlinear")]
    Nonlinear,
    /// Exact inversion of the local LPV model.
    #[serde(rename = "lpv-local")]
    LpvLocal,
    /// Exact inversion of the global descriptor LPV model.
    #[serde(rename = "lpv-global-inv")]
    LpvGlobalInv,
    /// Input computation on the global model: mass and Coriolis terms at
    /// the measured state, reference rates elsewhere.
    #[serde(rename = "lpv-global-ic")]
    LpvGlobalIc,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Mass,
        MethodKind::AnnihilateGlobal,
        MethodKind::AnnihilateLocal,
        MethodKind::Nonlinear,
        MethodKind::LpvLocal,
        MethodKind::LpvGlobalInv,
        MethodKind::LpvGlobalIc,
    ];

    /// The five strategies compared in the default experiment, in report
    /// order.
    pub const COMPARISON: [MethodKind; 5] = [
        MethodKind::Mass,
        MethodKind::AnnihilateGlobal,
        MethodKind::Nonlinear,
        MethodKind::LpvLocal,
        MethodKind::LpvGlobalIc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Mass => "mass",
            MethodKind::AnnihilateGlobal => "annihilate-global",
            MethodKind::AnnihilateLocal => "annihilate-local",
            MethodKind::Nonlinear => "nonlinear",
            MethodKind::LpvLocal => "lpv-local",
            MethodKind::LpvGlobalInv => "lpv-global-inv",
            MethodKind::LpvGlobalIc => "lpv-global-ic",
        }
    }

    /// Whether the method reads the measured plant state (as opposed to
    /// reference signals only).
    pub fn needs_measured_state(self) -> bool {
        matches!(
            self,
            MethodKind::AnnihilateGlobal
                | MethodKind::AnnihilateLocal
                | MethodKind::LpvGlobalInv
                | MethodKind::LpvGlobalIc
        )
    }

    /// Whether the method carries an internal inverse-system state.
    pub fn is_realization(self) -> bool {
        matches!(self, MethodKind::LpvLocal | MethodKind::LpvGlobalInv)
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feedforward method '{s}'")))
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a stateless strategy may consume at one instant.
#[derive(Clone, Copy, Debug)]
pub struct FeedforwardInput<'a> {
    pub reference: &'a ReferenceSample,
    pub measured: Option<&'a GeneralizedState>,
    pub scheduling: Option<&'a SchedulingPoint>,
}

impl<'a> FeedforwardInput<'a> {
    pub fn reference_only(reference: &'a ReferenceSample) -> Self {
        Self { reference, measured: None, scheduling: None }
    }

    fn measured(&self) -> Result<&'a GeneralizedState> {
        self.measured.ok_or(Error::MissingInput("measured state"))
    }

    fn scheduling(&self) -> Result<&'a SchedulingPoint> {
        self.scheduling.ok_or(Error::MissingInput("scheduling point"))
    }
}

/// Which input-map annihilation to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnihilationMode {
    /// Q1 = M(q) from the measured configuration.
    Global,
    /// Q1 = B(p)+ B~ on the local model.
    Local,
}

/// Baseline: nominal rigid-body inertia times reference acceleration.
pub fn ff_mass(reference: &ReferenceSample, params: &PlantParams) -> GeneralizedForces {
    let m0 = params.inertia_vector();
    Vector6::from_fn(|i, _| m0[i] * reference.acc[i])
}

/// Annihilation feedforward `u = Q1 Q2 F rdd` with `Q2 = F = I`.
///
/// Global mode cancels the configuration-dependent input map with the
/// measured mass matrix; local mode uses the pseudo-inverse of the local
/// model's input map, reduced to the nominal input directions.
pub fn ff_annihilation(
    input: &FeedforwardInput,
    mode: AnnihilationMode,
    params: &PlantParams,
) -> Result<GeneralizedForces> {
    let rdd = input.reference.acc;
    match mode {
        AnnihilationMode::Global => {
            let q = input.measured()?.q;
            let (pd, minors) = dynamics::is_mass_pd(&q, params);
            if !pd {
                return Err(Error::SingularMass { minors });
            }
            Ok(dynamics::mass_matrix(&q, params) * rdd)
        }
        AnnihilationMode::Local => {
            let pt = input.scheduling()?;
            let model = lpv::build_local_model(params)?;
            let b = model.b.eval(&pt.values);
            let b_pinv = linalg::pinv_full_rank(&b, RANK_RTOL)?;
            // B~ selects the physical input rows, so Q1 = B+ B~ is the
            // trailing column block of the pseudo-inverse.
            let q1 = b_pinv.columns(NY, NU).into_owned();
            let u = q1 * DVector::from_fn(NU, |i, _| rdd[i]);
            Ok(Vector6::from_fn(|i, _| u[i]))
        }
    }
}

/// Steady-state decoupler `Q2 = G0+` (right pseudo-inverse).
pub fn steady_state_decoupler(g0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::pinv_full_rank(g0, RANK_RTOL)
}

/// Inverse dynamics along the reference:
/// `W = M(r) rdd + C(r, rd) rd + D rd`.
pub fn ff_nonlinear(reference: &ReferenceSample, params: &PlantParams) -> Result<GeneralizedForces> {
    let (pd, minors) = dynamics::is_mass_pd(&reference.pos, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let state = GeneralizedState::new(reference.pos, reference.vel);
    Ok(dynamics::inverse_dynamics(&state, &reference.acc, params))
}

/// Input computation on the measured state:
/// `W = M(q) rdd + C(q, qd) rd + D rd`.
pub fn ff_global_lpv_ic(input: &FeedforwardInput, params: &PlantParams) -> Result<GeneralizedForces> {
    let state = input.measured()?;
    let (pd, minors) = dynamics::is_mass_pd(&state.q, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let m = dynamics::mass_matrix(&state.q, params);
    let c = dynamics::coriolis_matrix(&state.q, &state.qd, params);
    // Grouped exactly like the inverse dynamics so a run from matching
    // initial conditions reproduces ff_nonlinear bit for bit.
    Ok(m * input.reference.acc + (c + params.damping()) * input.reference.vel)
}

/// Which LPV model an inverse realization wraps.
#[derive(Clone, Debug)]
pub enum InversePlant {
    Local(LocalLpvModel),
    Global(DescriptorLpvModel),
}

/// Realization matrices of the inverse system at one scheduling point, in
/// descriptor form `E xd = A x + B v`, `u = C x + D v` with `v` the highest
/// reference derivative. `e` is `None` when the descriptor matrix is the
/// identity.
#[derive(Clone, Debug)]
pub struct RealizationMatrices {
    pub e: Option<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Stateful inverse of an LPV model with relative degree two.
///
/// The internal reference state must be initialized to the plant state at
/// the start of a run; the output then drives the modeled plant exactly
/// along the reference.
#[derive(Clone, Debug)]
pub struct InverseSystemRealization {
    plant: InversePlant,
    order: usize,
    x_ref: Vector12,
}

/// Inverse of the local model. The relative degree is fixed at two and
/// asserted, not searched.
pub fn build_local_lpv_inverse(model: LocalLpvModel, order: usize) -> Result<InverseSystemRealization> {
    assert_eq!(order, 2, "relative degree is fixed at 2");
    let real = InverseSystemRealization {
        plant: InversePlant::Local(model),
        order,
        x_ref: Vector12::zeros(),
    };
    real.validate_relative_degree()?;
    Ok(real)
}

/// Inverse of the global descriptor model; same fixed relative degree.
pub fn build_global_lpv_inverse(
    model: DescriptorLpvModel,
    order: usize,
) -> Result<InverseSystemRealization> {
    assert_eq!(order, 2, "relative degree is fixed at 2");
    let real = InverseSystemRealization {
        plant: InversePlant::Global(model),
        order,
        x_ref: Vector12::zeros(),
    };
    real.validate_relative_degree()?;
    Ok(real)
}

impl InverseSystemRealization {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn plant(&self) -> &InversePlant {
        &self.plant
    }

    pub fn state(&self) -> &Vector12 {
        &self.x_ref
    }

    /// Sets the internal state to the plant state at the start of a run.
    pub fn init(&mut self, state: &GeneralizedState) {
        for i in 0..6 {
            self.x_ref[i] = state.q[i];
            self.x_ref[NY + i] = state.qd[i];
        }
    }

    pub fn set_state(&mut self, x: Vector12) {
        self.x_ref = x;
    }

    /// Scheduling point of a plant state in the wrapped model's basis.
    pub fn scheduling(&self, state: &GeneralizedState, qdd: Option<&Vector6>) -> SchedulingPoint {
        match &self.plant {
            InversePlant::Local(m) => m.scheduling(state, qdd),
            InversePlant::Global(m) => m.scheduling(state, qdd),
        }
    }

    /// Checks that no direct feedthrough appears below the assumed
    /// relative degree: the first Markov-type product `C E^-1 B` must be
    /// zero at every probe point.
    fn validate_relative_degree(&self) -> Result<()> {
        for state in probe_states() {
            let pt = self.scheduling(&state, None);
            let cb = match &self.plant {
                InversePlant::Local(m) => m.c.eval(&pt.values) * m.b.eval(&pt.values),
                InversePlant::Global(m) => {
                    let e = m.e.eval(&pt.values);
                    let ei = e.try_inverse().ok_or(Error::SingularMass {
                        minors: [f64::NAN; 6],
                    })?;
                    m.c.eval(&pt.values) * ei * m.b.eval(&pt.values)
                }
            };
            let magnitude = cb.amax();
            if magnitude > 1e-9 {
                return Err(Error::RelativeDegreeViolation { order: 1, magnitude });
            }
            // F must be invertible wherever we may evaluate.
            self.matrices_at(&pt)?;
        }
        Ok(())
    }

    /// Realization matrices at a scheduling point.
    ///
    /// The derivative stack for order two comes from the Leibniz rule on
    /// the output derivatives. Writing `Z = E^-1` (identity for the local
    /// model) and using a constant output map:
    ///
    /// `y'' = C (Z' A + Z A' + Z A Z A) x + C (Z' B + Z A Z B + Z B') u + C Z B u'`
    ///
    /// The bracket on `x` is the collected matrix and the two input
    /// brackets stack into `F`; the input is recovered through the
    /// least-norm inverse of `F`, keeping its first block row.
    pub fn matrices_at(&self, pt: &SchedulingPoint) -> Result<RealizationMatrices> {
        let pdot = pt.deriv(1)?;
        match &self.plant {
            InversePlant::Local(model) => {
                let a = model.a.eval(&pt.values);
                let b = model.b.eval(&pt.values);
                let b_dot = model.b.eval_rate(pdot);
                let c = model.c.eval(&pt.values);
                let collected = &c * (&a * &a);
                let f0 = &c * (&a * &b) + &c * &b_dot;
                let f1 = &c * &b;
                let k = input_extraction(&f0, &f1)?;
                Ok(RealizationMatrices {
                    e: None,
                    a: &a - &b * &k * &collected,
                    b: &b * &k,
                    c: -(&k * &collected),
                    d: k,
                })
            }
            InversePlant::Global(model) => {
                let e = model.e.eval(&pt.values);
                let minors = lpv::check_block_minors(&e)?;
                let e_inv = e.clone().try_inverse().ok_or(Error::SingularMass { minors })?;
                let e_dot = model.e.eval_rate(pdot);
                let e_inv_dot = -(&e_inv * &e_dot * &e_inv);
                let a = model.a.eval(&pt.values);
                let a_dot = model.a.eval_rate(pdot);
                let b = model.b.eval(&pt.values);
                let b_dot = model.b.eval_rate(pdot);
                let c = model.c.eval(&pt.values);
                let za = &e_inv * &a;
                let collected = &c * (&e_inv_dot * &a + &e_inv * &a_dot + &za * &za);
                let f0 = &c * (&e_inv_dot * &b + &za * (&e_inv * &b) + &e_inv * &b_dot);
                let f1 = &c * (&e_inv * &b);
                let k = input_extraction(&f0, &f1)?;
                Ok(RealizationMatrices {
                    e: Some(e),
                    a: &a - &b * &k * &collected,
                    b: &b * &k,
                    c: -(&k * &collected),
                    d: k,
                })
            }
        }
    }

    /// State derivative and output at the current internal state.
    pub fn eval(
        &self,
        x: &Vector12,
        pt: &SchedulingPoint,
        highest_deriv: &Vector6,
    ) -> Result<(Vector12, GeneralizedForces)> {
        let mats = self.matrices_at(pt)?;
        eval_with(&mats, x, highest_deriv)
    }

    /// Feedforward output at the current internal state.
    pub fn output(&self, pt: &SchedulingPoint, highest_deriv: &Vector6) -> Result<GeneralizedForces> {
        let (_, u) = self.eval(&self.x_ref, pt, highest_deriv)?;
        Ok(u)
    }
}

/// Applies fixed realization matrices at one state.
pub(crate) fn eval_with(
    mats: &RealizationMatrices,
    x: &Vector12,
    highest_deriv: &Vector6,
) -> Result<(Vector12, GeneralizedForces)> {
    let xd = DVector::from_column_slice(x.as_slice());
    let vd = DVector::from_column_slice(highest_deriv.as_slice());
    let mut rhs = &mats.a * &xd + &mats.b * &vd;
    if let Some(e) = &mats.e {
        rhs = e
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Simulation("descriptor matrix not invertible".into()))?;
    }
    let u = &mats.c * &xd + &mats.d * &vd;
    Ok((
        Vector12::from_fn(|i, _| rhs[i]),
        Vector6::from_fn(|i, _| u[i]),
    ))
}

/// One fixed-step advance of the inverse system with the scheduling point
/// and reference derivative frozen over the step; returns the output at
/// the step's start. Same integrator as the simulator.
pub fn ff_step(
    realization: &mut InverseSystemRealization,
    ref_highest_deriv: &Vector6,
    scheduling: &SchedulingPoint,
    dt: f64,
) -> Result<GeneralizedForces> {
    let mats = realization.matrices_at(scheduling)?;
    let flow = |x: &Vector12| -> Result<Vector12> {
        Ok(eval_with(&mats, x, ref_highest_deriv)?.0)
    };
    let x0 = realization.x_ref;
    let (_, u) = eval_with(&mats, &x0, ref_highest_deriv)?;
    let k1 = flow(&x0)?;
    let k2 = flow(&(x0 + k1 * (dt / 2.0)))?;
    let k3 = flow(&(x0 + k2 * (dt / 2.0)))?;
    let k4 = flow(&(x0 + k3 * dt))?;
    realization.x_ref = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Ok(u)
}

/// Least-norm input extraction: pseudo-inverts the stacked `F = [f0 f1]`
/// and keeps the block row that multiplies onto the physical input.
fn input_extraction(f0: &DMatrix<f64>, f1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut f = DMatrix::zeros(NY, 2 * NU);
    f.view_mut((0, 0), (NY, NU)).copy_from(f0);
    f.view_mut((0, NU), (NY, NU)).copy_from(f1);
    let f_pinv = linalg::pinv_full_rank(&f, RANK_RTOL)?;
    Ok(f_pinv.rows(0, NU).into_owned())
}

/// Probe states for build-time validation, spanning the tilt range used by
/// the experiments.
fn probe_states() -> Vec<GeneralizedState> {
    let mut states = vec![GeneralizedState::default()];
    for (chi, psi, chid, psid, zetad) in [
        (2e-3, -1e-3, 0.01, -0.02, 0.03),
        (0.3, 0.2, 1.0, -1.0, 0.5),
        (-0.2, 0.4, -2.0, 0.7, -1.5),
    ] {
        let mut st = GeneralizedState::default();
        st.q[3] = chi;
        st.q[4] = psi;
        st.qd[3] = chid;
        st.qd[4] = psid;
        st.qd[5] = zetad;
        states.push(st);
    }
    states
}
