//! Seeded property suites behind `mcbf check`.
//!
//! Each suite draws random states or problems, compares the library against
//! an oracle that does not share its code path, and reports the worst
//! residual. Relative residuals are `|a − b| / max(1, |b|)`.

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barriers::{
    barrier_rate, constraint_rows, h0_v, h1_zb, h_omega, h_p, h_v, k0_p, k0_p_rate, k0_v, k0_v_rate, k1_p,
    k1_p_rate, k1_v, k2_p, position_backstepping_input, snapshot, velocity_backstepping_input, AffineConstraintRow,
    BarrierFamily, SafetyConfig,
};
use crate::dual::{Dual, Real};
use crate::dynamics::{rotation_from_euler_zyx, state_derivative, AugmentedState, VehicleParams, WrenchRateInput};
use crate::error::Result;
use crate::qp_filter::{solve_qp, QpProblem, QpStatus};
use crate::sim::rk4;

/// Deliberate defects for exercising the suites themselves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// The first tracking residual of the velocity barrier is added instead
    /// of subtracted.
    VelocityResidualSign,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Extra failures that are not captured by the residual.
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str, samples: usize, worst: f64, tolerance: f64, notes: Vec<String>) -> Self {
        let passed = worst <= tolerance && worst.is_finite() && notes.is_empty();
        Self { name: name.into(), samples, worst, tolerance, passed, notes }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn rel_err3(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

// ---------------------------------------------------------------------------
// samplers

fn uniform3(rng: &mut impl Rng, half_width: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.gen_range(-half_width..half_width))
}

/// A generic state: any attitude, moderate rates and speeds, `T ∈ [0.2mg, 2mg]`.
pub fn random_state(rng: &mut impl Rng, cfg: &SafetyConfig, params: &VehicleParams) -> AugmentedState {
    let r = rotation_from_euler_zyx(rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0));
    AugmentedState::new(
        cfg.p_center + uniform3(rng, 3.0),
        uniform3(rng, 2.5),
        r,
        uniform3(rng, 3.0),
        rng.gen_range(0.2..2.0) * params.weight(),
    )
}

pub fn random_input(rng: &mut impl Rng, params: &VehicleParams) -> WrenchRateInput {
    WrenchRateInput::new(rng.gen_range(-50.0..50.0), uniform3(rng, 2.0) * params.mass.sqrt())
}

/// Rejection-sample a state whose safe-set barriers (`h_ω`, `h₀_zB`, `h₁_zB`,
/// `h_v`, `h_p`) are all at least `margin`.
pub fn sample_safe_state(
    rng: &mut impl Rng,
    cfg: &SafetyConfig,
    params: &VehicleParams,
    margin: f64,
) -> Option<AugmentedState> {
    let max_tilt = cfg.max_tilt;
    for _ in 0..100_000 {
        let extent = Vector3::from_fn(|i, _| 1.0 / cfg.p_p[i].max(1e-12).sqrt());
        let p = cfg.p_center + uniform3(rng, 1.0).component_mul(&extent);
        let v = uniform3(rng, 1.0) * 1.2;
        let r = rotation_from_euler_zyx(
            rng.gen_range(-max_tilt..max_tilt) * 0.7,
            rng.gen_range(-max_tilt..max_tilt) * 0.7,
            rng.gen_range(-3.0..3.0),
        );
        let omega = uniform3(rng, 0.6);
        let thrust = rng.gen_range(0.7..1.3) * params.weight();
        let x = AugmentedState::new(p, v, r, omega, thrust);
        if let Ok(s) = snapshot(&x, cfg, params) {
            if s.min_safe_set_margin() >= margin {
                return Some(x);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// barriers under test

fn h_v_under_test<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams, fault: Fault) -> Result<S> {
    let h = h_v(x, cfg, params)?;
    Ok(match fault {
        Fault::None => h,
        Fault::VelocityResidualSign => {
            let e = x.force() - k0_v(x, cfg, params);
            h + e.dot(&e) * S::from(1.0 / cfg.mu_v[0])
        }
    })
}

type Quantity<'a> = Box<dyn Fn(&AugmentedState<Dual<f64>>) -> Result<Dual<f64>> + 'a>;
type VectorField<'a> = dyn Fn(&AugmentedState) -> Result<Vector3<f64>> + 'a;

/// The scalar barriers whose time derivatives the filter relies on.
fn scalar_barriers<'a>(cfg: &'a SafetyConfig, params: &'a VehicleParams, fault: Fault) -> Vec<(&'static str, Quantity<'a>)> {
    vec![
        ("h_omega", Box::new(move |x| Ok(h_omega(x, cfg)))),
        ("h1_zb", Box::new(move |x| Ok(h1_zb(x, cfg)))),
        ("h_v", Box::new(move |x| h_v_under_test(x, cfg, params, fault))),
        ("h_p", Box::new(move |x| h_p(x, cfg, params))),
    ]
}

// ---------------------------------------------------------------------------
// suites

/// Central difference along the integrated flow, Richardson-extrapolated.
fn flow_derivative(
    x: &AugmentedState,
    nu: &WrenchRateInput,
    params: &VehicleParams,
    f: &dyn Fn(&AugmentedState) -> Result<Vector3<f64>>,
) -> Result<Vector3<f64>> {
    let central = |eps: f64| -> Result<Vector3<f64>> {
        let fwd = f(&rk4(x, nu, eps, params))?;
        let bwd = f(&rk4(x, nu, -eps, params))?;
        Ok((fwd - bwd) / (2.0 * eps))
    };
    let eps = 2e-3;
    Ok((central(eps / 2.0)? * 4.0 - central(eps)?) / 3.0)
}

pub fn derivative_suite(seed: u64, samples: usize, cfg: &SafetyConfig, params: &VehicleParams, fault: Fault) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = random_state(&mut rng, cfg, params);
        let nu = random_input(&mut rng, params);
        for (_, h) in scalar_barriers(cfg, params, fault) {
            let forward = barrier_rate(&x, &nu, params, &h)?;
            let fd = flow_derivative(&x, &nu, params, &|y| Ok(Vector3::new(h(&y.cast())?.re, 0.0, 0.0)))?;
            worst = worst.max(rel_err(forward, fd.x));
        }
        let vectors: [(Vector3<f64>, &VectorField<'_>); 3] = [
            (k0_v_rate(&x, cfg, params), &|y| Ok(k0_v(y, cfg, params))),
            (k0_p_rate(&x, cfg, params), &|y| Ok(k0_p(y, cfg))),
            (k1_p_rate(&x, cfg, params), &|y| Ok(k1_p(y, cfg, params))),
        ];
        for (forward, f) in vectors {
            worst = worst.max(rel_err3(&forward, &flow_derivative(&x, &nu, params, f)?));
        }
    }
    Ok(SuiteReport::new("derivatives", samples, worst, 1e-5, Vec::new()))
}

fn slope_of(family: BarrierFamily, cfg: &SafetyConfig) -> f64 {
    match family {
        BarrierFamily::AngularVelocity => cfg.a_omega,
        BarrierFamily::ThrustDirection => cfg.a2_zb,
        BarrierFamily::Velocity => cfg.a0_v,
        BarrierFamily::Position => cfg.a0_p,
    }
}

/// `cᵀν + d` against `ḣ + a·h` with `ḣ` taken along the full vector field.
pub fn affinity_suite(
    seed: u64,
    states: usize,
    inputs: usize,
    cfg: &SafetyConfig,
    params: &VehicleParams,
) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..states {
        let x = random_state(&mut rng, cfg, params);
        let rows = constraint_rows(&x, cfg, params)?;
        let barriers = scalar_barriers(cfg, params, Fault::None);
        for _ in 0..inputs {
            let nu = random_input(&mut rng, params);
            let lifted = x.lift(&state_derivative(&x, &nu, params));
            for (row, (_, h)) in rows.iter().zip(&barriers) {
                let value = h(&lifted)?;
                let expected = value.eps + slope_of(row.family, cfg) * value.re;
                worst = worst.max(rel_err(row.evaluate(&nu.to_vector()), expected));
            }
        }
    }
    Ok(SuiteReport::new("affinity", states * inputs, worst, 1e-8, Vec::new()))
}

fn random_row(rng: &mut impl Rng, feasible: &Vector4<f64>) -> AffineConstraintRow {
    let c = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let d = -c.dot(feasible) + rng.gen_range(0.01..0.5);
    AffineConstraintRow { coeffs: c, offset: d, family: BarrierFamily::Position }
}

/// Random 4-row problem together with a point strictly inside its feasible set.
pub fn random_qp(rng: &mut impl Rng) -> (QpProblem, Vector4<f64>) {
    let y0 = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let rows = (0..4).map(|_| random_row(rng, &y0)).collect();
    (QpProblem { target: Vector4::from_fn(|_, _| rng.gen_range(-3.0..3.0)), rows }, y0)
}

/// `count` feasible points scattered around `near`.
///
/// Candidates that violate a row are pulled back along the segment towards
/// `interior`, which must satisfy every row strictly, so the count is always
/// reached.
pub fn random_feasible_points(
    rng: &mut impl Rng,
    problem: &QpProblem,
    interior: &Vector4<f64>,
    near: &Vector4<f64>,
    count: usize,
) -> Vec<Vector4<f64>> {
    let feasible = |y: &Vector4<f64>| problem.rows.iter().all(|r| r.evaluate(y) >= 0.0);
    assert!(feasible(interior), "interior point violates a row");
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let scale = [0.001, 0.01, 0.1, 1.0, 3.0][k % 5];
        let candidate = near + Vector4::from_fn(|_, _| rng.gen_range(-scale..scale));
        let mut t = 1.0f64;
        for r in &problem.rows {
            let (g0, g1) = (r.evaluate(interior), r.evaluate(&candidate));
            if g1 < 0.0 {
                t = t.min(g0 / (g0 - g1));
            }
        }
        // roundoff can leave a clipped point just outside
        let mut y = interior + (candidate - interior) * t;
        while !feasible(&y) {
            t *= 1.0 - 1e-9;
            y = interior + (candidate - interior) * t;
        }
        points.push(y);
    }
    points
}

pub fn qp_suite(seed: u64, problems: usize, competitors: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for k in 0..problems {
        let (p, interior) = random_qp(&mut rng);
        let s = solve_qp(&p)?;
        if s.status != QpStatus::Optimal {
            notes.push(format!("problem {k}: status {:?}", s.status));
            continue;
        }
        worst = worst.max(s.kkt_residual);
        let best = s.objective(&p.target);
        for y in random_feasible_points(&mut rng, &p, &interior, &s.nu, competitors) {
            let other = 0.5 * (y - p.target).norm_squared();
            if other < best - 1e-12 * (1.0 + best.abs()) {
                notes.push(format!("problem {k}: feasible point beats solver ({other} < {best})"));
                break;
            }
        }
        // single-row closed form
        let row = p.rows[0];
        let single = solve_qp(&QpProblem { target: p.target, rows: vec![row] })?;
        let c = row.coeffs;
        let violation = (c.dot(&p.target) + row.offset).min(0.0);
        let expected = p.target - c * (violation / c.norm_squared());
        worst = worst.max((single.nu - expected).norm() * 10.0);
    }
    // closed-form error is scaled by 10 so its 1e-10 bound maps onto the 1e-9 KKT bound
    Ok(SuiteReport::new("qp", problems, worst, 1e-9, notes))
}

/// `ḣ₀_v + a₀ h₀_v` when the force equals the virtual controller.
pub fn certificate_suite(seed: u64, samples: usize, cfg: &SafetyConfig, params: &VehicleParams) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for _ in 0..samples {
        let v = uniform3(&mut rng, 3.0);
        let mut x = AugmentedState::new(Vector3::zeros(), v, Matrix3::identity(), Vector3::zeros(), 0.0);
        let k0 = k0_v(&x, cfg, params);
        x.thrust = k0.norm();
        x.r = frame_with_axis(&(-k0 / x.thrust));
        let rate = barrier_rate(&x, &WrenchRateInput::ZERO, params, |y| Ok(h0_v(y, cfg)))?;
        let lhs = rate + cfg.a0_v * h0_v(&x, cfg);
        let quad = v.dot(&cfg.p_v.component_mul(&v));
        let rhs = cfg.a0_v + (cfg.c_v - cfg.a0_v) * quad;
        worst = worst.max(rel_err(lhs, rhs));
        if cfg.c_v >= cfg.a0_v && !(lhs > 0.0) {
            notes.push(format!("certificate not positive at v = {v:?}"));
        }
    }
    Ok(SuiteReport::new("certificate", samples, worst, 1e-10, notes))
}

/// Rotation whose third column is `axis`.
pub fn frame_with_axis(axis: &Vector3<f64>) -> Matrix3<f64> {
    let z = axis.normalize();
    let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let y = z.cross(&helper).normalize();
    let x = y.cross(&z);
    Matrix3::from_columns(&[x, y, z])
}

/// Closed-loop identities of the full backstepping controllers:
/// `ḣ + a₀h = a₀ + (c − a₀) eᵀPe + Σ (λᵢ − a₀)/(2μᵢ) ‖eᵢ‖²`.
pub fn witness_suite(seed: u64, samples: usize, cfg: &SafetyConfig, params: &VehicleParams, fault: Fault) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = random_state(&mut rng, cfg, params);

        let nu = velocity_backstepping_input(&x, cfg, params)?;
        let rate = barrier_rate(&x, &nu, params, |y| h_v_under_test(y, cfg, params, fault))?;
        let lhs = rate + cfg.a0_v * h_v_under_test(&x, cfg, params, fault)?;
        let e1 = x.force() - k0_v(&x, cfg, params);
        let e2 = x.omega_xy() - k1_v(&x, cfg, params)?.omega_xy;
        let rhs = cfg.a0_v
            + (cfg.c_v - cfg.a0_v) * x.v.dot(&cfg.p_v.component_mul(&x.v))
            + (cfg.lambda_v[0] - cfg.a0_v) / (2.0 * cfg.mu_v[0]) * e1.norm_squared()
            + (cfg.lambda_v[1] - cfg.a0_v) / (2.0 * cfg.mu_v[1]) * e2.norm_squared();
        worst = worst.max(rel_err(lhs, rhs));

        let nu = position_backstepping_input(&x, cfg, params)?;
        let rate = barrier_rate(&x, &nu, params, |y| h_p(y, cfg, params))?;
        let lhs = rate + cfg.a0_p * h_p(&x, cfg, params)?;
        let dp = x.p - cfg.p_center;
        let e1 = x.v - k0_p(&x, cfg);
        let e2 = x.force() - k1_p(&x, cfg, params);
        let e3 = x.omega_xy() - k2_p(&x, cfg, params)?.omega_xy;
        let rhs = cfg.a0_p
            + (cfg.c_p - cfg.a0_p) * dp.dot(&cfg.p_p.component_mul(&dp))
            + (cfg.lambda_p[0] - cfg.a0_p) / (2.0 * cfg.mu_p[0]) * e1.norm_squared()
            + (cfg.lambda_p[1] - cfg.a0_p) / (2.0 * cfg.mu_p[1]) * e2.norm_squared()
            + (cfg.lambda_p[2] - cfg.a0_p) / (2.0 * cfg.mu_p[2]) * e3.norm_squared();
        worst = worst.max(rel_err(lhs, rhs));
    }
    Ok(SuiteReport::new("witness", samples, worst, 1e-8, Vec::new()))
}

/// All suites with the sample counts used by `mcbf check`.
pub fn run_all(seed: u64, cfg: &SafetyConfig, params: &VehicleParams, fault: Fault) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        derivative_suite(seed, 100, cfg, params, fault)?,
        affinity_suite(seed.wrapping_add(1), 200, 20, cfg, params)?,
        qp_suite(seed.wrapping_add(2), 500, 1000)?,
        certificate_suite(seed.wrapping_add(3), 100, cfg, params)?,
        witness_suite(seed.wrapping_add(4), 100, cfg, params, fault)?,
    ])
}
