//! Rigid-body equations of motion for the levitated plate.
//!
//! Generalized coordinates are ordered `q = (x, y, z, chi, psi, zeta)`:
//! three translations of the center of mass followed by the three Euler
//! angles of the attitude parameterization (chi roll, psi pitch, zeta yaw).
//! The motion model is the standard Euler-Lagrange form
//!
//! ```text
//! M(q) qdd + C(q, qd) qd = W - D qd
//! ```
//!
//! with `W` the generalized actuation forces, `D` a constant diagonal
//! viscous-damping matrix and no gravity term (the levitated plate is
//! weight-compensated by the bias field; a constant disturbance offset can
//! emulate residual gravity if needed).
//!
//! The kinetic-energy metric `M(q)` is block diagonal between translations
//! and rotations. The translational block is `m I`. The rotational block
//! depends on chi and psi only and is implemented from its closed-form
//! entries; its positive definiteness holds exactly for `|psi| < pi/2`,
//! which is the validity domain of the parameterization. All routines here
//! are allocation free and operate on fixed-size matrices.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix6, Result, Vector6};

/// Coordinate indices into the generalized vectors.
pub mod coord {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const CHI: usize = 3;
    pub const PSI: usize = 4;
    pub const ZETA: usize = 5;
}

/// Physical parameters of the plate.
///
/// `friction` holds the per-coordinate viscous damping coefficients, i.e.
/// the diagonal of `D`. The default plate is the 10 kg lab stage with
/// principal inertias (0.1, 0.1, 0.2) kg m^2 and no damping; magnetic
/// levitation has no mechanical contact, so zero viscous friction is the
/// physically faithful default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    pub mass: f64,
    pub inertia_chi: f64,
    pub inertia_psi: f64,
    pub inertia_zeta: f64,
    pub friction: [f64; 6],
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 10.0,
            inertia_chi: 0.1,
            inertia_psi: 0.1,
            inertia_zeta: 0.2,
            friction: [0.0; 6],
        }
    }
}

impl PlantParams {
    /// Rejects non-physical parameters (non-positive mass or inertias,
    /// negative damping).
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::Config(format!("mass must be positive, got {}", self.mass)));
        }
        for (name, v) in [
            ("inertia_chi", self.inertia_chi),
            ("inertia_psi", self.inertia_psi),
            ("inertia_zeta", self.inertia_zeta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (i, &c) in self.friction.iter().enumerate() {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::Config(format!(
                    "friction[{i}] must be non-negative, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Mass matrix at the origin: `diag(m, m, m, I_chi, I_psi, I_zeta)`.
    pub fn mass_diag(&self) -> Matrix6 {
        Matrix6::from_diagonal(&self.inertia_vector())
    }

    /// Diagonal of `mass_diag` as a vector (handy for per-axis gain rules).
    pub fn inertia_vector(&self) -> Vector6 {
        Vector6::new(
            self.mass,
            self.mass,
            self.mass,
            self.inertia_chi,
            self.inertia_psi,
            self.inertia_zeta,
        )
    }

    /// Viscous damping matrix `D`.
    pub fn damping(&self) -> Matrix6 {
        Matrix6::from_diagonal(&Vector6::from_row_slice(&self.friction))
    }
}

/// Positions and velocities of the plate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedState {
    pub q: Vector6,
    pub qd: Vector6,
}

impl GeneralizedState {
    pub fn new(q: Vector6, qd: Vector6) -> Self {
        Self { q, qd }
    }
}

/// Configuration-dependent mass matrix `M(q)`.
///
/// Only chi and psi enter. The rotational block couples roll to yaw through
/// the pitch angle and pitch to yaw through roll, which is exactly the
/// coupling the feedforward comparison in this crate is about.
pub fn mass_matrix(q: &Vector6, params: &PlantParams) -> Matrix6 {
    let (s_chi, c_chi) = q[coord::CHI].sin_cos();
    let (s_psi, c_psi) = q[coord::PSI].sin_cos();
    let (i_chi, i_psi, i_zeta) = (params.inertia_chi, params.inertia_psi, params.inertia_zeta);

    let alpha1 = (i_psi - i_zeta) * s_chi * c_chi * c_psi;
    let alpha2 = -i_chi * s_psi;
    let alpha3 = i_zeta
        + (i_chi - i_zeta) * s_psi * s_psi
        + (i_psi - i_zeta) * s_chi * s_chi * c_psi * c_psi;

    let mut m = Matrix6::zeros();
    m[(0, 0)] = params.mass;
    m[(1, 1)] = params.mass;
    m[(2, 2)] = params.mass;
    m[(3, 3)] = i_chi;
    m[(3, 5)] = alpha2;
    m[(5, 3)] = alpha2;
    m[(4, 4)] = i_psi + (i_zeta - i_psi) * s_chi * s_chi;
    m[(4, 5)] = alpha1;
    m[(5, 4)] = alpha1;
    m[(5, 5)] = alpha3;
    m
}

/// Partial derivatives of the mass matrix with respect to chi and psi,
/// in that order. These are the only nonzero partials.
pub fn mass_matrix_partials(q: &Vector6, params: &PlantParams) -> (Matrix6, Matrix6) {
    let (s_chi, c_chi) = q[coord::CHI].sin_cos();
    let (s_psi, c_psi) = q[coord::PSI].sin_cos();
    let (i_chi, i_psi, i_zeta) = (params.inertia_chi, params.inertia_psi, params.inertia_zeta);

    let mut p_chi = Matrix6::zeros();
    p_chi[(4, 4)] = 2.0 * (i_zeta - i_psi) * s_chi * c_chi;
    let d_alpha1_chi = (i_psi - i_zeta) * (c_chi * c_chi - s_chi * s_chi) * c_psi;
    p_chi[(4, 5)] = d_alpha1_chi;
    p_chi[(5, 4)] = d_alpha1_chi;
    p_chi[(5, 5)] = 2.0 * (i_psi - i_zeta) * s_chi * c_chi * c_psi * c_psi;

    let mut p_psi = Matrix6::zeros();
    p_psi[(3, 5)] = -i_chi * c_psi;
    p_psi[(5, 3)] = -i_chi * c_psi;
    let d_alpha1_psi = -(i_psi - i_zeta) * s_chi * c_chi * s_psi;
    p_psi[(4, 5)] = d_alpha1_psi;
    p_psi[(5, 4)] = d_alpha1_psi;
    p_psi[(5, 5)] = 2.0 * (i_chi - i_zeta) * s_psi * c_psi
        - 2.0 * (i_psi - i_zeta) * s_psi * c_psi * s_chi * s_chi;

    (p_chi, p_psi)
}

/// Time derivative of the mass matrix along a trajectory,
/// `Mdot = dM/dchi * chid + dM/dpsi * psid`.
pub fn mass_matrix_rate(q: &Vector6, qd: &Vector6, params: &PlantParams) -> Matrix6 {
    let (p_chi, p_psi) = mass_matrix_partials(q, params);
    p_chi * qd[coord::CHI] + p_psi * qd[coord::PSI]
}

/// Christoffel symbols of the first kind,
/// `Gamma[k][(i, j)] = (dM_ij/dq_k + dM_ik/dq_j - dM_kj/dq_i) / 2`,
/// indexed by the differentiation coordinate `k`.
///
/// Invariant: every `Gamma[k]` vanishes for k outside {chi, psi, zeta} rows
/// and is symmetric under exchange of j and k; all entries with a
/// translational i or j are zero.
pub fn christoffel(q: &Vector6, params: &PlantParams) -> [Matrix6; 6] {
    let (p_chi, p_psi) = mass_matrix_partials(q, params);
    let partial = |k: usize| -> Matrix6 {
        match k {
            coord::CHI => p_chi,
            coord::PSI => p_psi,
            _ => Matrix6::zeros(),
        }
    };
    let mut gamma = [Matrix6::zeros(); 6];
    for k in 0..6 {
        let p_k = partial(k);
        for i in 0..6 {
            for j in 0..6 {
                gamma[k][(i, j)] =
                    0.5 * (p_k[(i, j)] + partial(j)[(i, k)] - partial(i)[(k, j)]);
            }
        }
    }
    gamma
}

/// Coriolis/centrifugal matrix built from the Christoffel symbols,
/// `C_ij = sum_k Gamma[k][(i, j)] qd_k`, evaluated without materializing the
/// full tensor.
///
/// The matrix satisfies the passivity identity: `Mdot - 2 C` is
/// skew-symmetric for every `(q, qd)`.
pub fn coriolis_matrix(q: &Vector6, qd: &Vector6, params: &PlantParams) -> Matrix6 {
    let (p_chi, p_psi) = mass_matrix_partials(q, params);
    let mdot = p_chi * qd[coord::CHI] + p_psi * qd[coord::PSI];

    // T has columns chi, psi equal to P_chi qd, P_psi qd; U is its transpose
    // pattern on rows. All other columns/rows of the correction vanish.
    let t_chi = p_chi * qd;
    let t_psi = p_psi * qd;
    let mut c = mdot;
    for i in 0..6 {
        c[(i, coord::CHI)] += t_chi[i];
        c[(i, coord::PSI)] += t_psi[i];
        c[(coord::CHI, i)] -= t_chi[i];
        c[(coord::PSI, i)] -= t_psi[i];
    }
    c * 0.5
}

/// The six leading principal minors of `M(q)` in closed form.
///
/// The first three are powers of the mass; the last,
/// `m^3 I_chi I_psi I_zeta cos^2(psi)`, is the determinant and shows the
/// loss of definiteness exactly at `|psi| = pi/2`.
pub fn leading_minors(q: &Vector6, params: &PlantParams) -> [f64; 6] {
    let m = params.mass;
    let (i_chi, i_psi, i_zeta) = (params.inertia_chi, params.inertia_psi, params.inertia_zeta);
    let (s_chi, c_chi) = q[coord::CHI].sin_cos();
    let c_psi = q[coord::PSI].cos();
    let m3 = m * m * m;
    [
        m,
        m * m,
        m3,
        m3 * i_chi,
        m3 * i_chi * (i_psi * c_chi * c_chi + i_zeta * s_chi * s_chi),
        m3 * i_chi * i_psi * i_zeta * c_psi * c_psi,
    ]
}

/// Relative floor below which a leading minor counts as numerically zero.
const PD_REL_TOL: f64 = 1e-12;

/// Positive-definiteness test for the mass matrix via the leading principal
/// minors. Returns the flag together with the minors themselves.
///
/// Each minor is compared against the product of the corresponding diagonal
/// entries, so the test detects the `cos psi -> 0` degeneration at the
/// quarter turn instead of accepting a positive but vanishing determinant.
pub fn is_mass_pd(q: &Vector6, params: &PlantParams) -> (bool, [f64; 6]) {
    let minors = leading_minors(q, params);
    let m = mass_matrix(q, params);
    let mut scale = 1.0;
    let mut pd = true;
    for k in 0..6 {
        scale *= m[(k, k)];
        pd &= minors[k] > PD_REL_TOL * scale;
    }
    (pd, minors)
}

/// Forward dynamics: solves `M(q) qdd = W - (C(q, qd) + D) qd` for the
/// generalized accelerations.
///
/// Fails with [`Error::SingularMass`] when the configuration reaches the
/// `|psi| = pi/2` singularity, where the tilt and yaw rates become
/// indistinguishable.
pub fn forward_dynamics(
    state: &GeneralizedState,
    w: &Vector6,
    params: &PlantParams,
) -> Result<Vector6> {
    let (pd, minors) = is_mass_pd(&state.q, params);
    if !pd {
        return Err(Error::SingularMass { minors });
    }
    let m = mass_matrix(&state.q, params);
    let c = coriolis_matrix(&state.q, &state.qd, params);
    let rhs = w - (c + params.damping()) * state.qd;
    let chol = nalgebra::Cholesky::new(m).ok_or(Error::SingularMass { minors })?;
    Ok(chol.solve(&rhs))
}

/// Inverse dynamics: the actuation `W` that realizes acceleration `qdd` at
/// the given state, `W = M qdd + C qd + D qd`.
pub fn inverse_dynamics(
    state: &GeneralizedState,
    qdd: &Vector6,
    params: &PlantParams,
) -> Vector6 {
    let m = mass_matrix(&state.q, params);
    let c = coriolis_matrix(&state.q, &state.qd, params);
    m * qdd + (c + params.damping()) * state.qd
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_params() -> PlantParams {
        PlantParams::default()
    }

    fn damped_params() -> PlantParams {
        PlantParams {
            friction: [5.0, 5.0, 5.0, 0.1, 0.1, 0.1],
            ..PlantParams::default()
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, angle_box: f64, rate_box: f64) -> GeneralizedState {
        let mut q = Vector6::zeros();
        let mut qd = Vector6::zeros();
        for i in 0..6 {
            q[i] = rng.random_range(-angle_box..angle_box);
            if rate_box > 0.0 {
                qd[i] = rng.random_range(-rate_box..rate_box);
            }
        }
        GeneralizedState::new(q, qd)
    }

    // Entries at chi = 3e-3, psi = -2e-3, checked against values computed
    // symbolically at 30 digits by an independent derivation.
    #[test]
    fn mass_matrix_entries_at_small_tilt() {
        let p = default_params();
        let mut q = Vector6::zeros();
        q[coord::CHI] = 0.003;
        q[coord::PSI] = -0.002;
        let m = mass_matrix(&q, &p);

        assert_relative_eq!(m[(4, 5)], -0.00029999760000703998952, max_relative = 1e-14);
        assert_relative_eq!(m[(3, 5)], 0.00019999986666669333333, max_relative = 1e-14);
        assert_relative_eq!(m[(5, 5)], 0.19999870000683331421, max_relative = 1e-14);
        assert_relative_eq!(m[(4, 4)], 0.10000089999730000324, max_relative = 1e-14);
        // Symmetry and the constant blocks.
        assert_eq!(m[(5, 4)], m[(4, 5)]);
        assert_eq!(m[(5, 3)], m[(3, 5)]);
        assert_eq!(m[(3, 3)], 0.1);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 10.0);
        }
        assert_eq!(m.fixed_view::<3, 3>(0, 3), nalgebra::Matrix3::zeros());
    }

    #[test]
    fn mass_matrix_column_zeta_at_micro_tilt() {
        let p = default_params();
        let mut q = Vector6::zeros();
        q[coord::CHI] = 2e-3;
        q[coord::PSI] = -1e-3;
        let m = mass_matrix(&q, &p);
        let expected = [
            0.0,
            0.0,
            0.0,
            0.000099999983333334166667,
            -0.00019999936666736833293,
            0.19999950000096666571,
        ];
        for i in 0..6 {
            assert_relative_eq!(m[(i, coord::ZETA)], expected[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn leading_minors_match_closed_forms_at_large_tilt() {
        let p = default_params();
        let mut q = Vector6::zeros();
        q[coord::CHI] = 0.5;
        q[coord::PSI] = 1.0;
        let minors = leading_minors(&q, &p);
        let expected = [
            10.0,
            100.0,
            1000.0,
            100.0,
            12.298488470659301413,
            0.58385316345285761300,
        ];
        for i in 0..6 {
            assert_relative_eq!(minors[i], expected[i], max_relative = 1e-14);
        }
        // Cross-check against direct determinants of the leading blocks.
        let m = mass_matrix(&q, &p);
        for k in 1..=6 {
            let det = nalgebra::DMatrix::from_fn(k, k, |i, j| m[(i, j)]).determinant();
            assert_relative_eq!(minors[k - 1], det, max_relative = 1e-12);
        }
        let (pd, _) = is_mass_pd(&q, &p);
        assert!(pd);
    }

    #[test]
    fn definiteness_lost_at_quarter_turn() {
        let p = default_params();
        let mut q = Vector6::zeros();
        q[coord::PSI] = std::f64::consts::FRAC_PI_2;
        let (pd, minors) = is_mass_pd(&q, &p);
        assert!(!pd);
        // det M collapses with cos^2 psi while the smaller minors stay
        // O(1): the quarter turn is a rank drop, not a sign flip.
        assert!(minors[5].abs() < 1e-30);
        assert!(minors[4] > 0.0);
        let state = GeneralizedState::new(q, Vector6::zeros());
        match forward_dynamics(&state, &Vector6::zeros(), &p) {
            Err(Error::SingularMass { minors }) => assert!(minors[5].abs() < 1e-30),
            other => panic!("expected SingularMass, got {other:?}"),
        }
        // Just inside the envelope the matrix is honestly definite.
        q[coord::PSI] = 1.57;
        assert!(is_mass_pd(&q, &p).0);
    }

    #[test]
    fn partials_match_finite_differences() {
        let p = default_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..20 {
            let st = random_state(&mut rng, 1.2, 0.0);
            let (p_chi, p_psi) = mass_matrix_partials(&st.q, &p);
            for (axis, analytic) in [(coord::CHI, p_chi), (coord::PSI, p_psi)] {
                let mut qp = st.q;
                let mut qm = st.q;
                qp[axis] += h;
                qm[axis] -= h;
                let fd = (mass_matrix(&qp, &p) - mass_matrix(&qm, &p)) / (2.0 * h);
                assert_abs_diff_eq!(analytic, fd, epsilon = 5e-9);
            }
        }
    }

    #[test]
    fn christoffel_structure() {
        let p = default_params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let st = random_state(&mut rng, 1.2, 3.0);
            let gamma = christoffel(&st.q, &p);
            for k in 0..6 {
                for i in 0..6 {
                    for j in 0..6 {
                        // Translational indices never participate.
                        if i < 3 || j < 3 || k < 3 {
                            assert_eq!(gamma[k][(i, j)], 0.0, "Gamma[{k}][({i},{j})]");
                        }
                        // Symmetry in the last two indices.
                        assert_relative_eq!(
                            gamma[k][(i, j)],
                            gamma[j][(i, k)],
                            epsilon = 1e-16,
                            max_relative = 1e-13
                        );
                    }
                }
            }
            // The contracted tensor reproduces the Coriolis matrix.
            let mut c_from_gamma = Matrix6::zeros();
            for k in 0..6 {
                c_from_gamma += gamma[k] * st.qd[k];
            }
            let c = coriolis_matrix(&st.q, &st.qd, &p);
            assert_abs_diff_eq!(c, c_from_gamma, epsilon = 1e-15);
        }
    }

    // Row zeta of C at the workspace probe point, frozen from the symbolic
    // derivation (q, qd as in `inverse_dynamics_round_trip`).
    #[test]
    fn coriolis_row_zeta_frozen() {
        let p = default_params();
        let q = Vector6::new(0.001, -0.002, 0.0005, 0.0015, -0.001, 0.002);
        let qd = Vector6::new(0.01, 0.02, -0.01, 0.005, -0.004, 0.006);
        let c = coriolis_matrix(&q, &qd, &p);
        let expected = [
            0.0,
            0.0,
            0.0,
            0.00039909890225113940859,
            -0.00049939802675242508955,
            -1.1499969583365429149e-6,
        ];
        for j in 0..6 {
            if expected[j] == 0.0 {
                assert_eq!(c[(coord::ZETA, j)], 0.0);
            } else {
                assert_relative_eq!(c[(coord::ZETA, j)], expected[j], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mdot_minus_2c_is_skew() {
        let p = default_params();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let st = random_state(&mut rng, 1.3, 4.0);
            let s = mass_matrix_rate(&st.q, &st.qd, &p) - 2.0 * coriolis_matrix(&st.q, &st.qd, &p);
            assert_abs_diff_eq!(s + s.transpose(), Matrix6::zeros(), epsilon = 1e-14);
        }
    }

    #[test]
    fn mass_rate_matches_finite_difference_along_flow() {
        let p = default_params();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = 1e-6;
        for _ in 0..10 {
            let st = random_state(&mut rng, 1.0, 2.0);
            let qp = st.q + st.qd * h;
            let qm = st.q - st.qd * h;
            let fd = (mass_matrix(&qp, &p) - mass_matrix(&qm, &p)) / (2.0 * h);
            assert_abs_diff_eq!(mass_matrix_rate(&st.q, &st.qd, &p), fd, epsilon = 5e-8);
        }
    }

    #[test]
    fn inverse_dynamics_round_trip() {
        let p = damped_params();
        let q = Vector6::new(0.001, -0.002, 0.0005, 0.0015, -0.001, 0.002);
        let qd = Vector6::new(0.01, 0.02, -0.01, 0.005, -0.004, 0.006);
        let qdd = Vector6::new(0.1, -0.2, 0.15, 0.5, -0.4, 0.3);
        let st = GeneralizedState::new(q, qd);
        let w = inverse_dynamics(&st, &qdd, &p);
        let back = forward_dynamics(&st, &w, &p).unwrap();
        assert_abs_diff_eq!(back, qdd, epsilon = 1e-12);
    }

    // Power balance: d/dt (qd' M qd / 2) = qd' (W - D qd), which is exactly
    // the skew-symmetry of Mdot - 2C expressed through the dynamics.
    #[test]
    fn energy_rate_identity() {
        let p = damped_params();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let st = random_state(&mut rng, 1.0, 2.0);
            let mut w = Vector6::zeros();
            for i in 0..6 {
                w[i] = rng.random_range(-5.0..5.0);
            }
            let qdd = forward_dynamics(&st, &w, &p).unwrap();
            let m = mass_matrix(&st.q, &p);
            let mdot = mass_matrix_rate(&st.q, &st.qd, &p);
            let kinetic_rate = st.qd.dot(&(m * qdd)) + 0.5 * st.qd.dot(&(mdot * st.qd));
            let injected = st.qd.dot(&(w - p.damping() * st.qd));
            assert_relative_eq!(kinetic_rate, injected, epsilon = 1e-10, max_relative = 1e-9);
        }
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let mut p = PlantParams::default();
        p.mass = 0.0;
        assert!(p.validate().is_err());
        let mut p = PlantParams::default();
        p.inertia_psi = -0.1;
        assert!(p.validate().is_err());
        let mut p = PlantParams::default();
        p.friction[2] = -1.0;
        assert!(p.validate().is_err());
        assert!(PlantParams::default().validate().is_ok());
    }
}
