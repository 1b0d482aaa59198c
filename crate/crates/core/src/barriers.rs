//! Safety barriers and their affine constraint rows.
//!
//! Four families are enforced simultaneously:
//!
//! * angular velocity: `h_ω = 1 − ωᵀP_ω ω`, relative degree one;
//! * thrust direction: `h₀ = z_Bᵀz_Bd − cos θ̄` with the second-order cascade
//!   `h₁ = ḣ₀ + a₁ h₀`, constraint `ḣ₁ + a₂ h₁ ≥ 0`;
//! * velocity: safe backstepping over the chain `v → f → ω_xy`;
//! * position: safe backstepping over the chain `p → v → f → ω_xy`.
//!
//! Every barrier and virtual controller is a function of the full augmented
//! state with no explicit time argument. Time derivatives are directional
//! derivatives along [`state_derivative`], evaluated exactly by lifting the
//! state onto [`Dual`] numbers. The position barrier contains `k̇₁`, so its
//! constraint row differentiates through one nested derivative.
//!
//! Backstepping convention: step `i` pairs `μ_i` with the residual
//! `ξ_i − k_{i−1}` and damps it with `λ_i / 2`.

use nalgebra::{Matrix3, Matrix3x2, SVector, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::dynamics::{state_derivative, tilt_map, AugmentedState, AugmentedStateRate, VehicleParams, WrenchRateInput};
use crate::error::{Error, Result};

/// Barrier parameters. Class-K functions are linear with the given slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyConfig {
    /// Diagonal of `P_ω`, 1/(rad/s)².
    pub p_omega: Vector3<f64>,
    /// Diagonal of `P_v`, 1/(m/s)².
    pub p_v: Vector3<f64>,
    /// Diagonal of `P_p`, 1/m².
    pub p_p: Vector3<f64>,
    /// Geofence center, m.
    pub p_center: Vector3<f64>,
    /// Desired body z-axis in the inertial frame (unit).
    pub z_b_desired: Vector3<f64>,
    /// Maximum deviation of the body z-axis, rad.
    pub max_tilt: f64,
    pub a_omega: f64,
    pub a1_zb: f64,
    pub a2_zb: f64,
    pub a0_v: f64,
    pub a0_p: f64,
    pub mu_v: [f64; 2],
    pub mu_p: [f64; 3],
    /// `λ₁` enters the barrier; `λ₂` only the full backstepping controller.
    pub lambda_v: [f64; 2],
    /// `λ₁, λ₂` enter the barrier; `λ₃` only the full backstepping controller.
    pub lambda_p: [f64; 3],
    pub c_v: f64,
    pub c_p: f64,
    /// Thrust below which the backstepping input map is treated as singular, N.
    pub thrust_floor: f64,
}

impl SafetyConfig {
    /// Isotropic limits with unit slopes and gains; `μ` values are left at one.
    pub fn isotropic(
        max_rate: f64,
        max_speed: f64,
        max_distance: f64,
        center: Vector3<f64>,
        max_tilt: f64,
        thrust_floor: f64,
    ) -> Self {
        let diag = |r: f64| Vector3::repeat(1.0 / (r * r));
        Self {
            p_omega: diag(max_rate),
            p_v: diag(max_speed),
            p_p: diag(max_distance),
            p_center: center,
            z_b_desired: Vector3::z(),
            max_tilt,
            a_omega: 1.0,
            a1_zb: 1.0,
            a2_zb: 1.0,
            a0_v: 1.0,
            a0_p: 1.0,
            mu_v: [1.0; 2],
            mu_p: [1.0; 3],
            lambda_v: [1.0; 2],
            lambda_p: [1.0; 3],
            c_v: 1.0,
            c_p: 1.0,
            thrust_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, d) in [("P_omega", &self.p_omega), ("P_v", &self.p_v), ("P_p", &self.p_p)] {
            if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad(format!("{name} must be positive semi-definite"));
            }
        }
        if ((self.z_b_desired.norm()) - 1.0).abs() > 1e-9 {
            return bad("desired thrust axis must be a unit vector".into());
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < std::f64::consts::PI) {
            return bad(format!("max tilt must lie in (0, π), got {}", self.max_tilt));
        }
        let positives = [
            ("a_omega", self.a_omega),
            ("a1_zb", self.a1_zb),
            ("a2_zb", self.a2_zb),
            ("a0_v", self.a0_v),
            ("a0_p", self.a0_p),
            ("c_v", self.c_v),
            ("c_p", self.c_p),
            ("thrust_floor", self.thrust_floor),
        ];
        let gains = self.mu_v.iter().chain(&self.mu_p).chain(&self.lambda_v).chain(&self.lambda_p);
        if positives.iter().any(|(_, x)| !(*x > 0.0 && x.is_finite())) || gains.clone().any(|x| !(*x > 0.0)) {
            return bad("class-K slopes, μ, λ, c and the thrust floor must be strictly positive".into());
        }
        if self.c_v < self.a0_v || self.c_p < self.a0_p {
            return bad("virtual-controller gains must satisfy c_v ≥ a0_v and c_p ≥ a0_p".into());
        }
        Ok(())
    }
}

/// Which safety condition a constraint row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierFamily {
    AngularVelocity,
    ThrustDirection,
    Velocity,
    Position,
}

impl BarrierFamily {
    pub const ALL: [BarrierFamily; 4] = [
        BarrierFamily::AngularVelocity,
        BarrierFamily::ThrustDirection,
        BarrierFamily::Velocity,
        BarrierFamily::Position,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BarrierFamily::AngularVelocity => "angular_velocity",
            BarrierFamily::ThrustDirection => "thrust_direction",
            BarrierFamily::Velocity => "velocity",
            BarrierFamily::Position => "position",
        }
    }
}

/// One inequality `cᵀν_a + d ≥ 0`, with `ν_a` ordered `[Ṫ, M_x, M_y, M_z]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineConstraintRow {
    pub coeffs: Vector4<f64>,
    pub offset: f64,
    pub family: BarrierFamily,
}

impl AffineConstraintRow {
    pub fn evaluate(&self, nu: &Vector4<f64>) -> f64 {
        self.coeffs.dot(nu) + self.offset
    }

    pub fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// All barrier values at one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSnapshot {
    pub h_omega: f64,
    pub h0_zb: f64,
    pub h1_zb: f64,
    pub h0_v: f64,
    pub h_v: f64,
    pub h0_p: f64,
    pub h_p: f64,
}

impl BarrierSnapshot {
    /// Smallest value among the barriers that define the safe sets.
    pub fn min_safe_set_margin(&self) -> f64 {
        [self.h_omega, self.h0_zb, self.h1_zb, self.h_v, self.h_p]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// helpers

fn e3<S: Real>() -> Vector3<S> {
    Vector3::new(S::zero(), S::zero(), S::one())
}

fn c<S: Real>(v: f64) -> S {
    S::from(v)
}

fn quad<S: Real>(diag: &Vector3<f64>, v: &Vector3<S>) -> S {
    v.x * v.x * c::<S>(diag.x) + v.y * v.y * c::<S>(diag.y) + v.z * v.z * c::<S>(diag.z)
}

fn diag_mul<S: Real>(diag: &Vector3<f64>, v: &Vector3<S>) -> Vector3<S> {
    Vector3::new(v.x * c::<S>(diag.x), v.y * c::<S>(diag.y), v.z * c::<S>(diag.z))
}

fn drift<S: Real>(x: &AugmentedState<S>, params: &VehicleParams) -> AugmentedStateRate<S> {
    state_derivative(x, &WrenchRateInput::ZERO, params)
}

/// Tangent part of a vector-valued function evaluated on `x + ε dx`.
fn rate_of<S: Real, const N: usize>(
    x: &AugmentedState<S>,
    dx: &AugmentedStateRate<S>,
    f: impl FnOnce(&AugmentedState<Dual<S>>) -> Result<SVector<Dual<S>, N>>,
) -> Result<SVector<S, N>> {
    Ok(f(&x.lift(dx))?.map(|d| d.eps))
}

/// Solve `G y = b` for 3 × 3 `G` by Cramer's rule (generic over the scalar).
fn solve3<S: Real>(g: &Matrix3<S>, b: &Vector3<S>) -> Vector3<S> {
    let (c0, c1, c2) = (g.column(0).into_owned(), g.column(1).into_owned(), g.column(2).into_owned());
    let det = c0.dot(&c1.cross(&c2));
    Vector3::new(
        b.dot(&c1.cross(&c2)) / det,
        c0.dot(&b.cross(&c2)) / det,
        c0.dot(&c1.cross(b)) / det,
    )
}

fn check_thrust<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> Result<()> {
    let t = x.thrust.re();
    if !(t.abs() >= cfg.thrust_floor) {
        return Err(Error::SingularThrust { thrust: t, floor: cfg.thrust_floor });
    }
    Ok(())
}

/// Input map `[-T R A, -z_B]` of the force dynamics for `y = [ω_xy, Ṫ]`.
pub fn force_input_map<S: Real>(x: &AugmentedState<S>) -> Matrix3<S> {
    let a: Matrix3x2<S> = tilt_map();
    let ra = x.r * a * (-x.thrust);
    let zb = -x.z_body();
    Matrix3::from_columns(&[ra.column(0).into_owned(), ra.column(1).into_owned(), zb])
}

/// `(ω_xy, Ṫ)` with `force_input_map(x) · [ω_xy; Ṫ] = rhs`.
fn invert_force_map<S: Real>(x: &AugmentedState<S>, rhs: &Vector3<S>, cfg: &SafetyConfig) -> Result<RateCommand<S>> {
    check_thrust(x, cfg)?;
    let y = solve3(&force_input_map(x), rhs);
    Ok(RateCommand { omega_xy: Vector2::new(y.x, y.y), thrust_rate: y.z })
}

/// Output of a backstepping step whose next state is `ω_xy` and whose input is `Ṫ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCommand<S: Real = f64> {
    pub omega_xy: Vector2<S>,
    pub thrust_rate: S,
}

impl<S: Real> RateCommand<S> {
    fn to_vector(self) -> Vector3<S> {
        Vector3::new(self.omega_xy.x, self.omega_xy.y, self.thrust_rate)
    }
}

// ---------------------------------------------------------------------------
// angular velocity

pub fn h_omega<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> S {
    S::one() - quad(&cfg.p_omega, &x.omega)
}

// ---------------------------------------------------------------------------
// thrust direction

pub fn h0_zb<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> S {
    x.z_body().dot(&cfg.z_b_desired.map(S::from)) - c::<S>(cfg.max_tilt.cos())
}

/// `ḣ₀ + a₁ h₀` with `ż_B = R A ω_xy`.
pub fn h1_zb<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> S {
    let a: Matrix3x2<S> = tilt_map();
    let zb_rate = x.r * (a * x.omega_xy());
    zb_rate.dot(&cfg.z_b_desired.map(S::from)) + h0_zb(x, cfg) * c::<S>(cfg.a1_zb)
}

// ---------------------------------------------------------------------------
// velocity chain: ξ₀ = v, ξ₁ = f, ξ₂ = ω_xy

pub fn h0_v<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> S {
    S::one() - quad(&cfg.p_v, &x.v)
}

/// Desired force `k₀ = −m (g e3 + ½ c_v v)`.
pub fn k0_v<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Vector3<S> {
    (e3::<S>() * c::<S>(params.gravity) + x.v * c::<S>(0.5 * cfg.c_v)) * c::<S>(-params.mass)
}

/// `k̇₀` along the flow.
pub fn k0_v_rate<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Vector3<S> {
    rate_of(x, &drift(x, params), |xd| Ok(k0_v(xd, cfg, params))).expect("infallible")
}

/// Desired `(ω_xy, Ṫ)` rendering the force residual `f − k₀` barrier-compatible.
pub fn k1_v<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Result<RateCommand<S>> {
    let m = c::<S>(params.mass);
    let grad_term = diag_mul(&cfg.p_v, &x.v) * (c::<S>(-2.0 * cfg.mu_v[0]) / m);
    let residual = x.force() - k0_v(x, cfg, params);
    let rhs = grad_term + k0_v_rate(x, cfg, params) - residual * c::<S>(0.5 * cfg.lambda_v[0]);
    invert_force_map(x, &rhs, cfg)
}

/// Composite velocity barrier `h₀ − ‖f − k₀‖²/(2μ₁) − ‖ω_xy − k₁‖²/(2μ₂)`.
pub fn h_v<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Result<S> {
    let e1 = x.force() - k0_v(x, cfg, params);
    let e2 = x.omega_xy() - k1_v(x, cfg, params)?.omega_xy;
    Ok(h0_v(x, cfg) - e1.dot(&e1) * c::<S>(0.5 / cfg.mu_v[0]) - e2.dot(&e2) * c::<S>(0.5 / cfg.mu_v[1]))
}

// ---------------------------------------------------------------------------
// position chain: ξ₀ = p, ξ₁ = v, ξ₂ = f, ξ₃ = ω_xy

pub fn h0_p<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> S {
    S::one() - quad(&cfg.p_p, &(x.p - cfg.p_center.map(S::from)))
}

/// Desired velocity `k₀ = −½ c_p (p − p_d)`.
pub fn k0_p<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig) -> Vector3<S> {
    (x.p - cfg.p_center.map(S::from)) * c::<S>(-0.5 * cfg.c_p)
}

pub fn k0_p_rate<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Vector3<S> {
    rate_of(x, &drift(x, params), |xd| Ok(k0_p(xd, cfg))).expect("infallible")
}

/// Desired force for the velocity residual; `g₁ = I/m` is inverted in closed form.
pub fn k1_p<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Vector3<S> {
    let dp = x.p - cfg.p_center.map(S::from);
    let grad_term = diag_mul(&cfg.p_p, &dp) * c::<S>(-2.0 * cfg.mu_p[0]);
    let residual = x.v - k0_p(x, cfg);
    let inner = -e3::<S>() * c::<S>(params.gravity) + grad_term + k0_p_rate(x, cfg, params)
        - residual * c::<S>(0.5 * cfg.lambda_p[0]);
    inner * c::<S>(params.mass)
}

/// `k̇₁` along the flow. `k₁` depends on `(p, v)` only, so no input enters.
pub fn k1_p_rate<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Vector3<S> {
    rate_of(x, &drift(x, params), |xd| Ok(k1_p(xd, cfg, params))).expect("infallible")
}

pub fn k2_p<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Result<RateCommand<S>> {
    let m = c::<S>(params.mass);
    let e1 = x.v - k0_p(x, cfg);
    let e2 = x.force() - k1_p(x, cfg, params);
    let rhs = e1 * (c::<S>(-cfg.mu_p[1] / cfg.mu_p[0]) / m) + k1_p_rate(x, cfg, params) - e2 * c::<S>(0.5 * cfg.lambda_p[1]);
    invert_force_map(x, &rhs, cfg)
}

/// Composite position barrier with three residual terms.
pub fn h_p<S: Real>(x: &AugmentedState<S>, cfg: &SafetyConfig, params: &VehicleParams) -> Result<S> {
    let e1 = x.v - k0_p(x, cfg);
    let e2 = x.force() - k1_p(x, cfg, params);
    let e3 = x.omega_xy() - k2_p(x, cfg, params)?.omega_xy;
    Ok(h0_p(x, cfg)
        - e1.dot(&e1) * c::<S>(0.5 / cfg.mu_p[0])
        - e2.dot(&e2) * c::<S>(0.5 / cfg.mu_p[1])
        - e3.dot(&e3) * c::<S>(0.5 / cfg.mu_p[2]))
}

// ---------------------------------------------------------------------------
// constraint rows

/// `∂ẋ/∂ν_i`: the state directions spanned by each input channel.
fn input_directions(params: &VehicleParams) -> [AugmentedStateRate<f64>; 4] {
    std::array::from_fn(|i| {
        let mut d = AugmentedStateRate {
            p_dot: Vector3::zeros(),
            v_dot: Vector3::zeros(),
            r_dot: Matrix3::zeros(),
            omega_dot: Vector3::zeros(),
            thrust_dot: 0.0,
        };
        if i == 0 {
            d.thrust_dot = 1.0;
        } else {
            d.omega_dot = params.inertia_inv.column(i - 1).into_owned();
        }
        d
    })
}

/// `ḣ` along `ẋ(x, ν)`.
pub fn barrier_rate(
    x: &AugmentedState,
    nu: &WrenchRateInput,
    params: &VehicleParams,
    h: impl Fn(&AugmentedState<Dual<f64>>) -> Result<Dual<f64>>,
) -> Result<f64> {
    Ok(h(&x.lift(&state_derivative(x, nu, params)))?.eps)
}

/// Row `cᵀν + d` equal to `ḣ(x, ν) + slope · h(x)`.
///
/// `ḣ` is linear in `ẋ` and `ẋ` is affine in `ν`, so `d` is the drift term and
/// each `c_i` is the derivative along the state direction driven by `ν_i`.
fn extract_row(
    x: &AugmentedState,
    params: &VehicleParams,
    family: BarrierFamily,
    slope: f64,
    h: impl Fn(&AugmentedState<Dual<f64>>) -> Result<Dual<f64>>,
) -> Result<AffineConstraintRow> {
    let at_drift = h(&x.lift(&drift(x, params)))?;
    let dirs = input_directions(params);
    let mut coeffs = Vector4::zeros();
    for (i, dir) in dirs.iter().enumerate() {
        coeffs[i] = h(&x.lift(dir))?.eps;
    }
    Ok(AffineConstraintRow { coeffs, offset: at_drift.eps + slope * at_drift.re, family })
}

pub fn row_omega(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> AffineConstraintRow {
    extract_row(x, params, BarrierFamily::AngularVelocity, cfg.a_omega, |xd| Ok(h_omega(xd, cfg)))
        .expect("infallible")
}

/// Second-order cascade row `ḣ₁ + a₂ h₁ ≥ 0`.
pub fn row_zb(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> AffineConstraintRow {
    extract_row(x, params, BarrierFamily::ThrustDirection, cfg.a2_zb, |xd| Ok(h1_zb(xd, cfg)))
        .expect("infallible")
}

pub fn row_v(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> Result<AffineConstraintRow> {
    extract_row(x, params, BarrierFamily::Velocity, cfg.a0_v, |xd| h_v(xd, cfg, params))
}

pub fn row_p(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> Result<AffineConstraintRow> {
    extract_row(x, params, BarrierFamily::Position, cfg.a0_p, |xd| h_p(xd, cfg, params))
}

/// All four rows in [`BarrierFamily::ALL`] order.
pub fn constraint_rows(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> Result<[AffineConstraintRow; 4]> {
    Ok([row_omega(x, cfg, params), row_zb(x, cfg, params), row_v(x, cfg, params)?, row_p(x, cfg, params)?])
}

pub fn snapshot(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> Result<BarrierSnapshot> {
    Ok(BarrierSnapshot {
        h_omega: h_omega(x, cfg),
        h0_zb: h0_zb(x, cfg),
        h1_zb: h1_zb(x, cfg),
        h0_v: h0_v(x, cfg),
        h_v: h_v(x, cfg, params)?,
        h0_p: h0_p(x, cfg),
        h_p: h_p(x, cfg, params)?,
    })
}

// ---------------------------------------------------------------------------
// full backstepping controllers (feasibility witnesses)

/// Torque making `ω̇_xy` equal `target`, with `ω̇_z = 0`.
fn torque_for_rate(x: &AugmentedState, target: &Vector2<f64>, params: &VehicleParams) -> Vector3<f64> {
    let omega_dot = Vector3::new(target.x, target.y, 0.0);
    params.inertia * omega_dot + x.omega.cross(&(params.inertia * x.omega))
}

/// Final-step input of the velocity backstepping design.
///
/// Under this input `ḣ_v + a₀ h_v = a₀ + (c_v − a₀) vᵀP_v v + Σ (λ_i − a₀)/(2μ_i) ‖e_i‖²`.
pub fn velocity_backstepping_input(
    x: &AugmentedState,
    cfg: &SafetyConfig,
    params: &VehicleParams,
) -> Result<WrenchRateInput> {
    let k1 = k1_v(x, cfg, params)?;
    let nu_partial = WrenchRateInput::new(k1.thrust_rate, Vector3::zeros());
    // k₁ depends on (v, T, R); M does not enter its derivative
    let k1_rate = rate_of(x, &state_derivative(x, &nu_partial, params), |xd| {
        Ok(k1_v(xd, cfg, params)?.omega_xy)
    })?;
    let e1 = x.force() - k0_v(x, cfg, params);
    let e2 = x.omega_xy() - k1.omega_xy;
    let a: Matrix3x2<f64> = tilt_map();
    let g1_xi = x.r * a * (-x.thrust);
    let target = -(g1_xi.transpose() * e1) * (cfg.mu_v[1] / cfg.mu_v[0]) + k1_rate - e2 * (0.5 * cfg.lambda_v[1]);
    Ok(WrenchRateInput::new(k1.thrust_rate, torque_for_rate(x, &target, params)))
}

/// Final-step input of the position backstepping design.
pub fn position_backstepping_input(
    x: &AugmentedState,
    cfg: &SafetyConfig,
    params: &VehicleParams,
) -> Result<WrenchRateInput> {
    let k2 = k2_p(x, cfg, params)?;
    let nu_partial = WrenchRateInput::new(k2.thrust_rate, Vector3::zeros());
    let k2_rate = rate_of(x, &state_derivative(x, &nu_partial, params), |xd| {
        Ok(k2_p(xd, cfg, params)?.omega_xy)
    })?;
    let e2 = x.force() - k1_p(x, cfg, params);
    let e3 = x.omega_xy() - k2.omega_xy;
    let a: Matrix3x2<f64> = tilt_map();
    let g2_xi = x.r * a * (-x.thrust);
    let target = -(g2_xi.transpose() * e2) * (cfg.mu_p[2] / cfg.mu_p[1]) + k2_rate - e3 * (0.5 * cfg.lambda_p[2]);
    Ok(WrenchRateInput::new(k2.thrust_rate, torque_for_rate(x, &target, params)))
}

/// Closed-form right-hand sides used by residual checks: `(G, rhs)` with `G y = rhs`.
pub fn k1_v_system(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> (Matrix3<f64>, Vector3<f64>) {
    let m = params.mass;
    let f = x.force();
    let k0 = k0_v(x, cfg, params);
    let k0_rate = (Vector3::z() * params.gravity + f / m) * (-0.5 * m * cfg.c_v);
    let rhs = cfg.mu_v[0] * (-2.0 * diag_mul(&cfg.p_v, &x.v) / m) + k0_rate - (f - k0) * (0.5 * cfg.lambda_v[0]);
    (force_input_map(x), rhs)
}

pub fn k2_p_system(x: &AugmentedState, cfg: &SafetyConfig, params: &VehicleParams) -> (Matrix3<f64>, Vector3<f64>) {
    let m = params.mass;
    let e1 = x.v - k0_p(x, cfg);
    let e2 = x.force() - k1_p(x, cfg, params);
    let rhs = -(cfg.mu_p[1] / cfg.mu_p[0]) / m * e1 + k1_p_rate(x, cfg, params) - e2 * (0.5 * cfg.lambda_p[1]);
    (force_input_map(x), rhs)
}

impl RateCommand<f64> {
    pub fn as_vector(&self) -> Vector3<f64> {
        self.to_vector()
    }
}
