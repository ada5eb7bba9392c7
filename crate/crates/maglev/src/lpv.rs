//! Parameter-varying embeddings of the rigid-body model.
//!
//! Two representations are built here:
//!
//! * a global descriptor form `E(p) xd = A(p) x + B u`, `y = C x`, where
//!   `E(p)` carries the mass matrix (so no inversion is baked into the
//!   model) and `A(p)` carries the damping and Coriolis terms, and
//! * a local form `xd = A x + B(p) u`, `y = C x`, the first-order expansion
//!   of the acceleration response around zero angles, with all parameter
//!   dependence pushed into the input map.
//!
//! Both are affine in their scheduling vector by construction: every matrix
//! entry is decomposed symbolically over products of the primitive factors
//! in [`crate::sched`], and each product that appears becomes its own
//! scheduling variable. The builder then verifies, at a set of probe
//! states, that evaluating the family reproduces the dynamics-core matrices
//! to near machine precision; a scheduling strategy that cannot represent
//! the model (for example the strict seven-variable basis, kept as a
//! comparison hook) fails that check with [`Error::AffinityViolation`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, GeneralizedState, PlantParams};
use crate::sched::{Factor, Monomial, SchedulingBasis, SchedulingPoint};
use crate::{Error, Result, Vector6};

/// State dimension of the first-order form (positions stacked on rates).
pub const NX: usize = 12;
/// Input dimension (one generalized force per coordinate).
pub const NU: usize = 6;
/// Output dimension (positions).
pub const NY: usize = 6;

/// Matrix family `M(p) = base + sum_i p_i * terms_i`.
///
/// The term index refers into the owning model's [`SchedulingBasis`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrixFamily {
    base: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMatrixFamily {
    pub fn constant(base: DMatrix<f64>) -> Self {
        Self { base, terms: Vec::new() }
    }

    pub fn new(base: DMatrix<f64>, terms: Vec<(usize, DMatrix<f64>)>) -> Self {
        for (_, t) in &terms {
            assert_eq!((t.nrows(), t.ncols()), (base.nrows(), base.ncols()), "term shape");
        }
        Self { base, terms }
    }

    pub fn nrows(&self) -> usize {
        self.base.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.base.ncols()
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    pub fn has_terms(&self) -> bool {
        !self.terms.is_empty()
    }

    /// Evaluates the family at scheduling values `p`.
    pub fn eval(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (i, t) in &self.terms {
            m += t * p[*i];
        }
        m
    }

    /// Time derivative of the family along scheduling rates `pdot`
    /// (the base drops out; affine dependence makes this exact).
    pub fn eval_rate(&self, pdot: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.base.nrows(), self.base.ncols());
        for (i, t) in &self.terms {
            m += t * pdot[*i];
        }
        m
    }
}

/// How scheduling variables are chosen when decomposing the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulingStrategy {
    /// Seven primitive variables plus every product the decomposition
    /// needs, interned on demand. Exactly affine by construction.
    #[default]
    #[serde(rename = "trig-products")]
    TrigProducts,
    /// Strictly the seven primitive variables. The rotational couplings
    /// need products of them, so building the descriptor model under this
    /// strategy fails the affinity check; kept to make the factorization
    /// choice comparable and testable.
    #[serde(rename = "trig7")]
    Trig7,
}

impl std::str::FromStr for SchedulingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trig-products" => Ok(Self::TrigProducts),
            "trig7" => Ok(Self::Trig7),
            other => Err(Error::Config(format!("unknown scheduling strategy '{other}'"))),
        }
    }
}

/// Global descriptor model `E(p) xd = A(p) x + B u`, `y = C x`.
///
/// `B = [0; I]` and `C = [I 0]` are constant; `E` embeds the mass matrix
/// and `A` embeds `-D - C(q, qd)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorLpvModel {
    pub params: PlantParams,
    pub basis: SchedulingBasis,
    pub e: AffineMatrixFamily,
    pub a: AffineMatrixFamily,
    pub b: AffineMatrixFamily,
    pub c: AffineMatrixFamily,
}

impl DescriptorLpvModel {
    /// Scheduling point of a state in this model's basis.
    pub fn scheduling(&self, state: &GeneralizedState, qdd: Option<&Vector6>) -> SchedulingPoint {
        self.basis.evaluate(state, qdd)
    }

    /// Frozen LTI snapshot `(E^-1 A, E^-1 B, C)` at fixed scheduling values.
    pub fn frozen_lti(&self, p: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let e = self.e.eval(p);
        let minors = check_block_minors(&e)?;
        let ei = e.try_inverse().ok_or(Error::SingularMass { minors })?;
        Ok((&ei * self.a.eval(p), &ei * self.b.eval(p), self.c.eval(p)))
    }
}

/// Local model `xd = A x + B(p) u`, `y = C x` with constant `A` and the
/// input map affine in the raw tilt angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLpvModel {
    pub params: PlantParams,
    pub basis: SchedulingBasis,
    pub a: AffineMatrixFamily,
    pub b: AffineMatrixFamily,
    pub c: AffineMatrixFamily,
}

impl LocalLpvModel {
    pub fn scheduling(&self, state: &GeneralizedState, qdd: Option<&Vector6>) -> SchedulingPoint {
        self.basis.evaluate(state, qdd)
    }

    /// Frozen LTI snapshot; the descriptor matrix is the identity here, so
    /// the matrices come back unchanged apart from evaluating `B(p)`.
    pub fn frozen_lti(&self, p: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.a.eval(p), self.b.eval(p), self.c.eval(p)))
    }
}

/// Leading principal minors of the lower-right 6x6 block of a 12x12
/// descriptor matrix (the embedded mass matrix).
pub(crate) fn leading_minors_of_block(e: &DMatrix<f64>) -> [f64; 6] {
    let mut minors = [0.0; 6];
    for k in 1..=6 {
        let block = DMatrix::from_fn(k, k, |i, j| e[(NY + i, NY + j)]);
        minors[k - 1] = block.determinant();
    }
    minors
}

/// Definiteness gate on the embedded mass block, mirroring the relative
/// threshold of the dynamics module.
pub(crate) fn check_block_minors(e: &DMatrix<f64>) -> Result<[f64; 6]> {
    let minors = leading_minors_of_block(e);
    let mut scale = 1.0;
    for k in 0..6 {
        scale *= e[(NY + k, NY + k)];
        if !(minors[k] > 1e-12 * scale) {
            return Err(Error::SingularMass { minors });
        }
    }
    Ok(minors)
}

fn constant_b() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(NX, NU);
    for i in 0..NU {
        b[(NY + i, i)] = 1.0;
    }
    b
}

fn constant_c() -> DMatrix<f64> {
    let mut c = DMatrix::zeros(NY, NX);
    for i in 0..NY {
        c[(i, i)] = 1.0;
    }
    c
}

/// Sparse linear combination of monomials per rotational matrix entry.
type EntryLin = BTreeMap<(usize, usize), Vec<(f64, Monomial)>>;

fn mass_partial_chi_lin(params: &PlantParams) -> EntryLin {
    let (i_psi, i_zeta) = (params.inertia_psi, params.inertia_zeta);
    let sc = Factor::SinChi;
    let cc = Factor::CosChi;
    let cp = Factor::CosPsi;
    let mut map = EntryLin::new();
    map.insert((4, 4), vec![(2.0 * (i_zeta - i_psi), Monomial::product(&[(sc, 1), (cc, 1)]))]);
    let off = vec![
        ((i_psi - i_zeta), Monomial::product(&[(cc, 2), (cp, 1)])),
        (-(i_psi - i_zeta), Monomial::product(&[(sc, 2), (cp, 1)])),
    ];
    map.insert((4, 5), off.clone());
    map.insert((5, 4), off);
    map.insert(
        (5, 5),
        vec![(2.0 * (i_psi - i_zeta), Monomial::product(&[(sc, 1), (cc, 1), (cp, 2)]))],
    );
    map
}

fn mass_partial_psi_lin(params: &PlantParams) -> EntryLin {
    let (i_chi, i_psi, i_zeta) = (params.inertia_chi, params.inertia_psi, params.inertia_zeta);
    let sc = Factor::SinChi;
    let cc = Factor::CosChi;
    let sp = Factor::SinPsi;
    let cp = Factor::CosPsi;
    let mut map = EntryLin::new();
    let roll_yaw = vec![(-i_chi, Monomial::factor(cp))];
    map.insert((3, 5), roll_yaw.clone());
    map.insert((5, 3), roll_yaw);
    let off = vec![(-(i_psi - i_zeta), Monomial::product(&[(sc, 1), (cc, 1), (sp, 1)]))];
    map.insert((4, 5), off.clone());
    map.insert((5, 4), off);
    map.insert(
        (5, 5),
        vec![
            (2.0 * (i_chi - i_zeta), Monomial::product(&[(sp, 1), (cp, 1)])),
            (-2.0 * (i_psi - i_zeta), Monomial::product(&[(sp, 1), (cp, 1), (sc, 2)])),
        ],
    );
    map
}

/// Builds the global descriptor model and verifies exact affinity at probe
/// states.
///
/// The Coriolis block of `A(p)` is assembled symbolically: each Christoffel
/// symbol is a linear combination of trigonometric monomials, and its
/// contraction with a rate multiplies those monomials by the corresponding
/// rate factor. Under [`SchedulingStrategy::TrigProducts`] every product is
/// interned as a scheduling variable and the decomposition is exact; under
/// [`SchedulingStrategy::Trig7`] products are not representable, the
/// affected terms are dropped, and validation reports the residual.
pub fn build_global_descriptor(
    params: &PlantParams,
    strategy: SchedulingStrategy,
) -> Result<DescriptorLpvModel> {
    params.validate()?;
    let mut basis = SchedulingBasis::base7();
    let strict = matches!(strategy, SchedulingStrategy::Trig7);
    let (i_chi, i_psi, i_zeta) = (params.inertia_chi, params.inertia_psi, params.inertia_zeta);

    // E family: blkdiag(I, M0) plus the trigonometric corrections of M(q).
    let mut e_base = DMatrix::identity(NX, NX);
    let m0 = params.inertia_vector();
    for i in 0..6 {
        e_base[(NY + i, NY + i)] = m0[i];
    }
    let sc = Factor::SinChi;
    let cc = Factor::CosChi;
    let sp = Factor::SinPsi;
    let cp = Factor::CosPsi;
    let e_corrections: [(Monomial, Vec<(usize, usize, f64)>); 5] = [
        (Monomial::factor(sp), vec![(9, 11, -i_chi), (11, 9, -i_chi)]),
        (Monomial::product(&[(sc, 2)]), vec![(10, 10, i_zeta - i_psi)]),
        (
            Monomial::product(&[(sc, 1), (cc, 1), (cp, 1)]),
            vec![(10, 11, i_psi - i_zeta), (11, 10, i_psi - i_zeta)],
        ),
        (Monomial::product(&[(sp, 2)]), vec![(11, 11, i_chi - i_zeta)]),
        (Monomial::product(&[(sc, 2), (cp, 2)]), vec![(11, 11, i_psi - i_zeta)]),
    ];
    let mut e_terms: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    for (mono, entries) in e_corrections {
        let id = if strict { basis.position(&mono) } else { Some(basis.intern(mono)) };
        let Some(id) = id else { continue };
        let t = e_terms.entry(id).or_insert_with(|| DMatrix::zeros(NX, NX));
        for (r, c, v) in entries {
            t[(r, c)] += v;
        }
    }

    // A family: [[0, I], [0, -D]] plus the Coriolis block (with a minus
    // sign, since the model keeps -C(q, qd) on the right-hand side).
    let mut a_base = DMatrix::zeros(NX, NX);
    for i in 0..6 {
        a_base[(i, NY + i)] = 1.0;
        a_base[(NY + i, NY + i)] = -params.friction[i];
    }
    let p_chi = mass_partial_chi_lin(params);
    let p_psi = mass_partial_psi_lin(params);
    let empty = EntryLin::new();
    let partial_of = |k: usize| -> &EntryLin {
        match k {
            3 => &p_chi,
            4 => &p_psi,
            _ => &empty,
        }
    };
    let rate_of = |k: usize| -> Factor {
        match k {
            3 => Factor::RateChi,
            4 => Factor::RatePsi,
            5 => Factor::RateZeta,
            _ => unreachable!("translational rates never appear"),
        }
    };
    let mut a_terms: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    for i in 3..6 {
        for j in 3..6 {
            for k in 3..6 {
                let pieces: [(f64, &EntryLin, (usize, usize)); 3] = [
                    (0.5, partial_of(k), (i, j)),
                    (0.5, partial_of(j), (i, k)),
                    (-0.5, partial_of(i), (k, j)),
                ];
                for (sign, lin, idx) in pieces {
                    let Some(entry) = lin.get(&idx) else { continue };
                    for (coeff, mono) in entry {
                        let ext = mono.times(rate_of(k));
                        let id =
                            if strict { basis.position(&ext) } else { Some(basis.intern(ext)) };
                        let Some(id) = id else { continue };
                        let t = a_terms.entry(id).or_insert_with(|| DMatrix::zeros(NX, NX));
                        // A carries -C in the rate block.
                        t[(NY + i, NY + j)] -= sign * coeff;
                    }
                }
            }
        }
    }

    let model = DescriptorLpvModel {
        params: params.clone(),
        basis,
        e: AffineMatrixFamily::new(e_base, e_terms.into_iter().collect()),
        a: AffineMatrixFamily::new(a_base, a_terms.into_iter().collect()),
        b: AffineMatrixFamily::constant(constant_b()),
        c: AffineMatrixFamily::constant(constant_c()),
    };
    validate_descriptor_affinity(&model)?;
    Ok(model)
}

/// Probe states exercising angles, rates, and their products.
fn affinity_probe_states() -> Vec<GeneralizedState> {
    let mk = |chi: f64, psi: f64, chid: f64, psid: f64, zetad: f64| {
        let mut st = GeneralizedState::default();
        st.q[3] = chi;
        st.q[4] = psi;
        st.qd[3] = chid;
        st.qd[4] = psid;
        st.qd[5] = zetad;
        st
    };
    let mut states = vec![
        GeneralizedState::default(),
        mk(0.3, 0.0, 0.0, 0.0, 0.0),
        mk(0.0, -0.4, 0.0, 0.0, 0.0),
        mk(0.25, 0.35, 0.7, -1.3, 2.1),
        mk(-0.45, 0.2, -2.0, 1.5, -0.5),
        mk(1e-3, -1e-3, 0.01, 0.02, -0.03),
        mk(0.6, -0.6, 3.0, 3.0, 3.0),
    ];
    // Translations and their rates must be irrelevant to the scheduling.
    let mut moving = mk(0.2, -0.1, 1.0, -1.0, 0.5);
    moving.q[0] = 0.5;
    moving.q[1] = -0.25;
    moving.q[2] = 0.1;
    moving.qd[0] = 2.0;
    moving.qd[1] = -1.0;
    moving.qd[2] = 0.4;
    states.push(moving);
    states
}

fn validate_descriptor_affinity(model: &DescriptorLpvModel) -> Result<()> {
    let mut worst: f64 = 0.0;
    for state in affinity_probe_states() {
        let pt = model.scheduling(&state, None);
        let e = model.e.eval(&pt.values);
        let a = model.a.eval(&pt.values);
        let m = dynamics::mass_matrix(&state.q, &model.params);
        let c = dynamics::coriolis_matrix(&state.q, &state.qd, &model.params);
        let d = model.params.damping();
        let mut scale: f64 = 1.0;
        for i in 0..6 {
            for j in 0..6 {
                let e_err = (e[(NY + i, NY + j)] - m[(i, j)]).abs();
                let a_err = (a[(NY + i, NY + j)] - (-d[(i, j)] - c[(i, j)])).abs();
                worst = worst.max(e_err).max(a_err);
                scale = scale.max(m[(i, j)].abs()).max(c[(i, j)].abs());
            }
        }
        if worst > 1e-12 * scale {
            return Err(Error::AffinityViolation { residual: worst });
        }
    }
    Ok(())
}

/// Builds the local model: constant `A` (double integrator with nominal
/// damping) and the input map expanded to first order in the tilt angles.
///
/// The expansion coefficients come from the closed-form mass-matrix
/// partials at zero: `d(M^-1)/dq_a = -M0^-1 P_a(0) M0^-1`.
pub fn build_local_model(params: &PlantParams) -> Result<LocalLpvModel> {
    params.validate()?;
    let m0 = params.inertia_vector();

    let mut a = DMatrix::zeros(NX, NX);
    for i in 0..6 {
        a[(i, NY + i)] = 1.0;
        a[(NY + i, NY + i)] = -params.friction[i] / m0[i];
    }

    let mut b_base = DMatrix::zeros(NX, NU);
    for i in 0..6 {
        b_base[(NY + i, i)] = 1.0 / m0[i];
    }
    // -M0^-1 P_chi(0) M0^-1: P_chi(0) has (4,5) and (5,4) = I_psi - I_zeta.
    let g_chi = -(params.inertia_psi - params.inertia_zeta)
        / (params.inertia_psi * params.inertia_zeta);
    let mut b_chi = DMatrix::zeros(NX, NU);
    b_chi[(NY + 4, 5)] = g_chi;
    b_chi[(NY + 5, 4)] = g_chi;
    // -M0^-1 P_psi(0) M0^-1: P_psi(0) has (3,5) and (5,3) = -I_chi.
    let g_psi = 1.0 / params.inertia_zeta;
    let mut b_psi = DMatrix::zeros(NX, NU);
    b_psi[(NY + 3, 5)] = g_psi;
    b_psi[(NY + 5, 3)] = g_psi;

    Ok(LocalLpvModel {
        params: params.clone(),
        basis: SchedulingBasis::angles(),
        a: AffineMatrixFamily::constant(a),
        b: AffineMatrixFamily::new(b_base, vec![(0, b_chi), (1, b_psi)]),
        c: AffineMatrixFamily::constant(constant_c()),
    })
}
