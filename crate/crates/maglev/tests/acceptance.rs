//! Acceptance checklist for the toolkit: eight end-to-end criteria covering
//! the structural dynamics identities, exact-tracking reproduction, the
//! held initial-condition mismatch, inverse-realization equivalence, the
//! comparison-table error orderings, Lyapunov stability verification,
//! integrator accuracy, and byte-level determinism.
//!
//! Each test prints one `ACCEPTANCE <n> (<name>): PASS|FAIL` line (shown
//! with `--nocapture`, and always shown on failure together with the
//! measured margins). Full-length simulation records are shared between
//! tests through a process-wide cache keyed by scenario and method, so the
//! suite performs each expensive run exactly once.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maglev::cli::{cmd_simulate, cmd_stability, run_one};
use maglev::config::{ExperimentConfig, COORDINATE_NAMES};
use maglev::dynamics::{self, coord, GeneralizedState, PlantParams};
use maglev::feedback;
use maglev::feedforward::MethodKind;
use maglev::linalg;
use maglev::report::{self, MetricsRow};
use maglev::sim::{error_metrics, integrate_step, Scenario, SimulationRecord};
use maglev::trajectory::{AxisMove, AxisPlan, DisturbanceProfile, MotionProfile, MoveShape};
use maglev::{Matrix6, Vector6};

// Pinned tolerances, grouped by criterion.
const SKEW_ABS_TOL: f64 = 1e-12; // times (1 + |qd|)
const DET_REL_TOL: f64 = 1e-10;
const CHRISTOFFEL_REL_TOL: f64 = 1e-6; // guarded relative, floor 1

const TRACKING_REL_TOL: f64 = 1e-10; // of the coordinate stroke

const MISMATCH: f64 = 5e-6; // [rad], chi(0) offset of the default config
const MISMATCH_REL_TOL: f64 = 1e-2;
const PEAK_AT_START_SLACK: f64 = 1e-3; // of the linf value
const HELD_RESIDUAL_FLOOR: f64 = 1e-9; // [rad], psi/zeta under the hold

const EQUIVALENCE_REL_TOL: f64 = 1e-9; // of the per-channel signal peak
const TRACE_REL_TOL: f64 = 1e-3; // of each coordinate's own error peak
const TRACE_ABS_FLOOR: f64 = 1e-13;

const DISTURBANCE_SEPARATION: f64 = 100.0;
const COMPARABLE_FACTOR: f64 = 2.0;

const ORDER_WINDOW: (f64, f64) = (3.8, 4.2);
const ENERGY_SLACK: f64 = 1e-12;

fn verdict(index: usize, name: &str, failures: &[String]) {
    let pass = failures.is_empty();
    println!("ACCEPTANCE {index} ({name}): {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {index} ({name}):\n{}", failures.join("\n"));
}

fn experiment() -> &'static ExperimentConfig {
    static CFG: OnceLock<ExperimentConfig> = OnceLock::new();
    CFG.get_or_init(ExperimentConfig::default)
}

/// Full-length record of one scenario/method pair of the default
/// experiment, computed once per process.
fn run(scenario: Scenario, method: MethodKind) -> Arc<SimulationRecord> {
    type Slot = Arc<OnceLock<Arc<SimulationRecord>>>;
    static CACHE: OnceLock<Mutex<HashMap<(Scenario, MethodKind), Slot>>> = OnceLock::new();
    let map = CACHE.get_or_init(Default::default);
    let slot = map.lock().unwrap().entry((scenario, method)).or_default().clone();
    // Initialization happens outside the map lock so unrelated runs can
    // proceed in parallel; concurrent requests for the same pair block on
    // the slot instead of duplicating the run.
    slot.get_or_init(|| {
        Arc::new(run_one(experiment(), scenario, method).expect("default experiment run"))
    })
    .clone()
}

/// Largest commanded displacement per coordinate in the default profile.
fn strokes() -> [f64; 6] {
    let profile = &experiment().trajectory;
    let mut s = [0.0f64; 6];
    for i in 0..6 {
        for mv in &profile.axes[i].moves {
            s[i] = s[i].max(mv.delta.abs());
        }
    }
    s
}

#[test]
fn criterion_1_structural_properties() {
    let params = PlantParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let (mut worst_skew, mut worst_det, mut worst_gamma) = (0.0f64, 0.0f64, 0.0f64);
    let fd_step = 1e-5;
    for trial in 0..1000 {
        let mut q = Vector6::zeros();
        let mut qd = Vector6::zeros();
        for i in 0..6 {
            q[i] = rng.random_range(-5e-3..5e-3);
            qd[i] = rng.random_range(-1.0..1.0);
        }

        let s = dynamics::mass_matrix_rate(&q, &qd, &params)
            - 2.0 * dynamics::coriolis_matrix(&q, &qd, &params);
        let skew = (s + s.transpose()).amax() / (1.0 + qd.norm());
        worst_skew = worst_skew.max(skew);
        if skew >= SKEW_ABS_TOL {
            failures.push(format!("trial {trial}: skew residual {skew:.3e}"));
        }

        let det = dynamics::mass_matrix(&q, &params).determinant();
        let closed = params.mass.powi(3)
            * params.inertia_chi
            * params.inertia_psi
            * params.inertia_zeta
            * q[coord::PSI].cos().powi(2);
        let det_rel = (det - closed).abs() / closed;
        worst_det = worst_det.max(det_rel);
        if det_rel > DET_REL_TOL {
            failures.push(format!("trial {trial}: determinant off by {det_rel:.3e}"));
        }

        // Central-difference partials of M assemble the same half-sum as
        // the analytic Christoffel symbols.
        let mut fd_partials = [Matrix6::zeros(); 6];
        for (k, partial) in fd_partials.iter_mut().enumerate() {
            let (mut qp, mut qm) = (q, q);
            qp[k] += fd_step;
            qm[k] -= fd_step;
            *partial =
                (dynamics::mass_matrix(&qp, &params) - dynamics::mass_matrix(&qm, &params))
                    / (2.0 * fd_step);
        }
        let gamma = dynamics::christoffel(&q, &params);
        for k in 0..6 {
            for i in 0..6 {
                for j in 0..6 {
                    let fd = 0.5
                        * (fd_partials[k][(i, j)] + fd_partials[j][(i, k)]
                            - fd_partials[i][(k, j)]);
                    let err = (gamma[k][(i, j)] - fd).abs() / (1.0 + gamma[k][(i, j)].abs());
                    worst_gamma = worst_gamma.max(err);
                    if err >= CHRISTOFFEL_REL_TOL {
                        failures.push(format!(
                            "trial {trial}: Gamma[{k}][({i},{j})] off by {err:.3e}"
                        ));
                    }
                }
            }
        }
    }
    println!(
        "  worst margins over 1000 states: skew {worst_skew:.2e} (tol {SKEW_ABS_TOL:.0e}), \
         det {worst_det:.2e} (tol {DET_REL_TOL:.0e}), \
         christoffel {worst_gamma:.2e} (tol {CHRISTOFFEL_REL_TOL:.0e})"
    );
    verdict(1, "structural properties", &failures);
}

#[test]
fn criterion_2_exact_tracking() {
    let strokes = strokes();
    let mut failures = Vec::new();
    for scenario in [Scenario::OlMatch, Scenario::ClMatch] {
        for method in [MethodKind::Nonlinear, MethodKind::LpvGlobalIc] {
            let record = run(scenario, method);
            let metrics = error_metrics(&record).unwrap();
            for i in 0..6 {
                let bound = TRACKING_REL_TOL * strokes[i];
                if !(metrics.linf[i] < bound) {
                    failures.push(format!(
                        "{scenario}/{}: linf[{}] = {:.3e} >= {bound:.3e}",
                        method.name(),
                        COORDINATE_NAMES[i],
                        metrics.linf[i]
                    ));
                }
            }
            let worst = (0..6).map(|i| metrics.linf[i] / strokes[i]).fold(0.0, f64::max);
            println!(
                "  {scenario}/{}: worst linf/stroke = {worst:.2e} (tol {TRACKING_REL_TOL:.0e})",
                method.name()
            );
        }
    }
    verdict(2, "exact tracking with matching initial conditions", &failures);
}

#[test]
fn criterion_3_held_mismatch() {
    let mut failures = Vec::new();
    let nonlinear = error_metrics(&run(Scenario::OlMismatch, MethodKind::Nonlinear)).unwrap();
    let ic_record = run(Scenario::OlMismatch, MethodKind::LpvGlobalIc);
    let ic = error_metrics(&ic_record).unwrap();

    for (name, metrics, record) in [
        ("nonlinear", &nonlinear, &run(Scenario::OlMismatch, MethodKind::Nonlinear)),
        ("lpv-global-ic", &ic, &ic_record),
    ] {
        let linf_chi = metrics.linf[coord::CHI];
        if (linf_chi - MISMATCH).abs() > MISMATCH_REL_TOL * MISMATCH {
            failures.push(format!("{name}: linf(chi) = {linf_chi:.6e}, not {MISMATCH:.1e} +- 1%"));
        }
        let at_start = record.e[0][coord::CHI].abs();
        if at_start < (1.0 - PEAK_AT_START_SLACK) * linf_chi {
            failures.push(format!(
                "{name}: |e_chi(0)| = {at_start:.6e} below the peak {linf_chi:.6e}"
            ));
        }
        println!("  {name}: linf(chi) = {linf_chi:.6e}, |e_chi(0)|/peak = {:.9}", at_start / linf_chi);
    }

    for axis in [coord::PSI, coord::ZETA] {
        let held = ic.linf[axis];
        let leaked = nonlinear.linf[axis];
        if !(held < HELD_RESIDUAL_FLOOR) {
            failures.push(format!(
                "lpv-global-ic: linf({}) = {held:.3e} >= {HELD_RESIDUAL_FLOOR:.0e}",
                COORDINATE_NAMES[axis]
            ));
        }
        if !(leaked > held) {
            failures.push(format!(
                "nonlinear linf({}) = {leaked:.3e} not strictly above lpv-global-ic's {held:.3e}",
                COORDINATE_NAMES[axis]
            ));
        }
        println!(
            "  {}: lpv-global-ic {held:.3e} vs nonlinear {leaked:.3e}",
            COORDINATE_NAMES[axis]
        );
    }
    verdict(3, "mismatch held invariant", &failures);
}

#[test]
fn criterion_4_realization_equivalence() {
    let mut failures = Vec::new();
    let inv = run(Scenario::ClMismatch, MethodKind::LpvGlobalInv);
    let ic = run(Scenario::ClMismatch, MethodKind::LpvGlobalIc);
    assert_eq!(inv.len(), ic.len());

    // Pointwise feedforward agreement, relative to each channel's peak.
    let mut scale = [0.0f64; 6];
    for k in 0..ic.len() {
        for i in 0..6 {
            scale[i] = scale[i].max(ic.u_ff[k][i].abs());
        }
    }
    let mut worst_u = 0.0f64;
    for k in 0..ic.len() {
        for i in 0..6 {
            let rel = (inv.u_ff[k][i] - ic.u_ff[k][i]).abs() / scale[i];
            worst_u = worst_u.max(rel);
            if rel >= EQUIVALENCE_REL_TOL {
                failures.push(format!(
                    "u_ff[{i}] at t = {:.6}: relative gap {rel:.3e}",
                    ic.t[k]
                ));
            }
        }
    }

    // The error traces coincide well below any visible plotting scale.
    let ic_metrics = error_metrics(&ic).unwrap();
    let mut worst_e = [0.0f64; 6];
    for k in 0..ic.len() {
        for i in 0..6 {
            worst_e[i] = worst_e[i].max((inv.e[k][i] - ic.e[k][i]).abs());
        }
    }
    for i in 0..6 {
        let bound = TRACE_REL_TOL * ic_metrics.linf[i] + TRACE_ABS_FLOOR;
        if !(worst_e[i] < bound) {
            failures.push(format!(
                "error trace {}: gap {:.3e} >= {bound:.3e}",
                COORDINATE_NAMES[i], worst_e[i]
            ));
        }
    }
    println!(
        "  worst u_ff gap {worst_u:.2e} (tol {EQUIVALENCE_REL_TOL:.0e}); worst error-trace gap {:.2e}",
        worst_e.iter().fold(0.0f64, |a, &b| a.max(b))
    );
    verdict(4, "inverse realization matches input computation", &failures);
}

/// Key: (scenario name, method name, coordinate name) -> (l2, linf).
type MetricsMap = HashMap<(String, String, String), (f64, f64)>;

/// Runs the grid the ordering claims refer to and reads the values back the
/// same way a user would: out of the rendered metrics.csv artifact.
fn metrics_from_csv(scenarios: &[Scenario]) -> MetricsMap {
    let mut rows = Vec::new();
    for &scenario in scenarios {
        for method in MethodKind::COMPARISON {
            let record = run(scenario, method);
            rows.push(MetricsRow { scenario, method, metrics: error_metrics(&record).unwrap() });
        }
    }
    let csv = report::metrics_csv(&rows);
    let mut map = MetricsMap::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5, "metrics.csv row: {line}");
        map.insert(
            (fields[0].to_string(), fields[1].to_string(), fields[2].to_string()),
            (fields[3].parse().unwrap(), fields[4].parse().unwrap()),
        );
    }
    map
}

#[test]
fn criterion_5_error_orderings() {
    let mut failures = Vec::new();
    let map = metrics_from_csv(&[Scenario::OlMatch, Scenario::ClMatch, Scenario::ClMatchDist]);
    let l2 = |scenario: Scenario, method: MethodKind, coordinate: &str| -> f64 {
        map[&(scenario.to_string(), method.name().to_string(), coordinate.to_string())].0
    };
    let mut expect = |claim: String, holds: bool| {
        if !holds {
            failures.push(claim);
        }
    };

    use MethodKind::{AnnihilateGlobal, LpvGlobalIc, LpvLocal, Mass, Nonlinear};
    for scenario in [Scenario::OlMatch, Scenario::ClMatch] {
        let baseline_chi = l2(scenario, Mass, "chi");
        let baseline_psi = l2(scenario, Mass, "psi");
        for method in [AnnihilateGlobal, Nonlinear, LpvLocal, LpvGlobalIc] {
            expect(
                format!("{scenario}: {} does not beat mass on chi", method.name()),
                l2(scenario, method, "chi") < baseline_chi,
            );
            expect(
                format!("{scenario}: {} does not beat mass on psi", method.name()),
                l2(scenario, method, "psi") < baseline_psi,
            );
        }
        for exact in [Nonlinear, LpvGlobalIc] {
            for other in [Mass, AnnihilateGlobal, LpvLocal] {
                expect(
                    format!("{scenario}: {} does not beat {} on zeta", exact.name(), other.name()),
                    l2(scenario, exact, "zeta") < l2(scenario, other, "zeta"),
                );
            }
        }
        println!(
            "  {scenario} zeta l2 by method: {}",
            MethodKind::COMPARISON
                .map(|m| format!("{}={:.2e}", m.name(), l2(scenario, m, "zeta")))
                .join(" ")
        );
    }

    // The mass-versus-annihilation ordering on zeta is intrinsic only in
    // open loop, where the annihilation methods leave a net-impulse Coriolis
    // residual that integrates into a drift while the mass method's extra
    // inertia-coupling residual stays bounded. A servo collapses both to
    // their force residuals, whose comparison depends on the loop shape
    // rather than on the feedforward, so only the open loop carries a claim.
    let baseline_zeta = l2(Scenario::OlMatch, Mass, "zeta");
    for method in [AnnihilateGlobal, LpvLocal] {
        expect(
            format!("ol-match: mass does not beat {} on zeta", method.name()),
            baseline_zeta < l2(Scenario::OlMatch, method, "zeta"),
        );
    }

    // Under the torque disturbance every method is equally exposed on psi,
    // while the best inversion keeps the coupled axes two orders cleaner.
    let dist = Scenario::ClMatchDist;
    let psi: Vec<f64> = MethodKind::COMPARISON.iter().map(|&m| l2(dist, m, "psi")).collect();
    let (lo, hi) = (psi.iter().cloned().fold(f64::MAX, f64::min), psi.iter().cloned().fold(0.0, f64::max));
    expect(
        format!("{dist}: psi errors not comparable (spread factor {:.3})", hi / lo),
        hi / lo <= COMPARABLE_FACTOR,
    );
    for coordinate in ["chi", "zeta"] {
        let best = l2(dist, LpvGlobalIc, coordinate);
        let baseline = l2(dist, Mass, coordinate);
        expect(
            format!(
                "{dist}: lpv-global-ic {coordinate} = {best:.3e} not {DISTURBANCE_SEPARATION}x \
                 below mass {baseline:.3e}"
            ),
            best * DISTURBANCE_SEPARATION <= baseline,
        );
        println!("  {dist} {coordinate}: mass/lpv-global-ic = {:.1}", baseline / best);
    }
    println!("  {dist} psi spread factor = {:.3}", hi / lo);
    verdict(5, "comparison-table orderings", &failures);
}

#[test]
fn criterion_6_stability_verification() {
    let mut failures = Vec::new();
    let mut cfg = experiment().clone();
    cfg.run.out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_stability");
    let outcome = cmd_stability(&cfg).expect("stability command");
    if !(outcome.epsilon > 0.0) {
        failures.push(format!("epsilon* = {} not positive", outcome.epsilon));
    }
    if !outcome.value_positive {
        failures.push("V not positive away from equilibrium".into());
    }
    if !outcome.rate_nonpositive {
        failures.push("Vdot > 0 at some sample".into());
    }
    for file in &outcome.files {
        if !file.exists() {
            failures.push(format!("missing artifact {}", file.display()));
        }
    }
    println!("  {}", outcome.verdict);

    // The Schur-complement test agrees with a dense eigenvalue oracle on
    // random block matrices spanning both verdicts.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut positives = 0;
    for trial in 0..1000 {
        let rand_sym = |rng: &mut ChaCha8Rng, shift: f64| {
            let r = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            &r * r.transpose() / 6.0 + DMatrix::identity(6, 6) * shift
        };
        let a = rand_sym(&mut rng, 0.3);
        let c = rand_sym(&mut rng, 0.3);
        let d = rand_sym(&mut rng, 0.0);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let eps = [1e-3, 0.02, 0.1, 0.5, 1.0, 2.0, 5.0][trial % 7];
        let fast = feedback::schur_pd_check(&a, &b, &c, &d, eps).unwrap();
        let mut n = DMatrix::zeros(12, 12);
        n.view_mut((0, 0), (6, 6)).copy_from(&(&a * eps));
        n.view_mut((0, 6), (6, 6)).copy_from(&(&b * eps));
        n.view_mut((6, 0), (6, 6)).copy_from(&(b.transpose() * eps));
        n.view_mut((6, 6), (6, 6)).copy_from(&(&c - &d * eps));
        let oracle = linalg::is_pd_sym(&n);
        if fast != oracle {
            failures.push(format!("trial {trial}: schur {fast} vs eigen oracle {oracle}"));
        }
        positives += usize::from(oracle);
    }
    println!("  schur vs eigen oracle: 1000 trials, {positives} definite");
    if positives == 0 || positives == 1000 {
        failures.push(format!("oracle sweep degenerate: {positives}/1000 definite"));
    }
    verdict(6, "stability certificates", &failures);
}

#[test]
fn criterion_7_integrator_accuracy() {
    let mut failures = Vec::new();
    let params = PlantParams { friction: [5.0, 5.0, 5.0, 0.1, 0.1, 0.1], ..Default::default() };

    // Observed order against the analytic exponential of the damped
    // translation, between steps h and h/2.
    let err_at = |h: f64| {
        let mut s = GeneralizedState::default();
        s.qd[coord::X] = 1.0;
        for _ in 0..(1.0 / h).round() as usize {
            s = integrate_step(&s, &Vector6::zeros(), &params, h).unwrap();
        }
        (s.qd[coord::X] - (-params.friction[0] / params.mass).exp()).abs()
    };
    let order = (err_at(1e-2) / err_at(5e-3)).log2();
    if !(ORDER_WINDOW.0..ORDER_WINDOW.1).contains(&order) {
        failures.push(format!("observed order {order:.3} outside {ORDER_WINDOW:?}"));
    }
    println!("  observed RK4 order {order:.3}");

    // Free damped motion never gains kinetic energy.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let energy = |s: &GeneralizedState| {
        0.5 * s.qd.dot(&(dynamics::mass_matrix(&s.q, &params) * s.qd))
    };
    for trial in 0..100 {
        let mut state = GeneralizedState::default();
        for i in 0..6 {
            state.q[i] = rng.random_range(-0.3..0.3);
            state.qd[i] = rng.random_range(-2.0..2.0);
        }
        let mut prev = energy(&state);
        for step in 0..200 {
            state = integrate_step(&state, &Vector6::zeros(), &params, 1e-4).unwrap();
            let now = energy(&state);
            if now > prev * (1.0 + ENERGY_SLACK) {
                failures.push(format!(
                    "trial {trial} step {step}: energy {prev:.6e} -> {now:.6e}"
                ));
                break;
            }
            prev = now;
        }
    }
    verdict(7, "integrator order and dissipativity", &failures);
}

#[test]
fn criterion_8_byte_identical_reruns() {
    let mut failures = Vec::new();
    // A compact configuration that still exercises every moving part:
    // trapezoidal and out-and-back strokes, the torque disturbance, PID
    // feedback, and both stateful inverse realizations.
    let mut cfg = ExperimentConfig::default();
    let mut axes: [AxisPlan; 6] = Default::default();
    axes[coord::X] =
        AxisPlan { start: 0.0, moves: vec![AxisMove::new(0.0, 0.1, 2e-3, MoveShape::TrapAcc)] };
    axes[coord::CHI] = AxisPlan {
        start: 0.0,
        moves: vec![
            AxisMove::new(0.0, 0.05, 5e-4, MoveShape::TrapAcc),
            AxisMove::new(0.05, 0.05, -5e-4, MoveShape::TrapAcc),
        ],
    };
    cfg.trajectory = MotionProfile::new(axes).unwrap();
    cfg.disturbance = DisturbanceProfile { onset: 0.11, duration: 0.02, ramp: 2e-3, ..Default::default() };
    cfg.sim.horizon = 0.15;
    cfg.run.methods = vec![MethodKind::Mass, MethodKind::LpvLocal, MethodKind::LpvGlobalInv];
    cfg.run.scenarios = vec![Scenario::OlMismatch, Scenario::ClMismatchDist];
    cfg.run.out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    cfg.validate().unwrap();

    let first = cmd_simulate(&cfg).expect("first run");
    let snapshot: Vec<(String, Vec<u8>)> = first
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
        .collect();
    let second = cmd_simulate(&cfg).expect("second run");
    assert_eq!(
        first, second,
        "the two runs must emit the same artifact list"
    );
    for (path, (name, bytes)) in second.iter().zip(&snapshot) {
        if std::fs::read(path).unwrap() != *bytes {
            failures.push(format!("{name} differs between reruns"));
        }
    }
    println!("  {} artifacts byte-identical across reruns", snapshot.len());
    verdict(8, "byte-identical reruns", &failures);
}
