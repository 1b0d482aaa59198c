//! Multicopter rigid-body dynamics on the thrust-augmented state.
//!
//! Frames: inertial NED (`e3` points down), body FRD. `R` maps body vectors
//! into the inertial frame, so `z_B = R e3` is the body z-axis expressed in
//! the inertial frame and the thrust force is `f = -T z_B`.
//!
//! Augmenting the total thrust `T` as a state and taking `(Ṫ, M)` as the input
//! puts the translational dynamics in strict-feedback form:
//!
//! ```text
//! ṗ = v
//! v̇ = g e3 + f / m
//! ḟ = -T R A ω_xy - Ṫ z_B,      A = [0 1; -1 0; 0 0]
//! Ṙ = R ω^×
//! ω̇ = J⁻¹ (M - ω × J ω)
//! ```

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x2, SVector, Vector2, Vector3, Vector4};

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};

/// Length of the vectorized augmented state `[p, v, vec(R), ω, T]`.
pub const STATE_DIM: usize = 19;

pub type StateVector = SVector<f64, STATE_DIM>;

/// Multicopter state `(p, v, R, ω)` plus total thrust `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentedState<S: Real = f64> {
    /// Position in the inertial frame, m.
    pub p: Vector3<S>,
    /// Velocity in the inertial frame, m/s.
    pub v: Vector3<S>,
    /// Body-to-inertial rotation.
    pub r: Matrix3<S>,
    /// Body angular velocity, rad/s.
    pub omega: Vector3<S>,
    /// Total thrust, N.
    pub thrust: S,
}

/// Time derivative of an [`AugmentedState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentedStateRate<S: Real = f64> {
    pub p_dot: Vector3<S>,
    pub v_dot: Vector3<S>,
    pub r_dot: Matrix3<S>,
    pub omega_dot: Vector3<S>,
    pub thrust_dot: S,
}

/// Input of the augmented system: thrust rate and body torque.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrenchRateInput {
    /// Total-thrust rate, N/s.
    pub thrust_rate: f64,
    /// Body torque, N·m.
    pub torque: Vector3<f64>,
}

impl WrenchRateInput {
    pub const ZERO: WrenchRateInput = WrenchRateInput {
        thrust_rate: 0.0,
        torque: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(thrust_rate: f64, torque: Vector3<f64>) -> Self {
        Self { thrust_rate, torque }
    }

    /// Ordered as `[Ṫ, M_x, M_y, M_z]`.
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust_rate, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], Vector3::new(v[1], v[2], v[3]))
    }

    pub fn is_finite(&self) -> bool {
        self.thrust_rate.is_finite() && self.torque.iter().all(|x| x.is_finite())
    }
}

/// Physical vehicle description.
#[derive(Clone, Debug)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub inertia_inv: Matrix3<f64>,
    pub gravity: f64,
    /// 4 × n_rotor map from rotor thrusts to `[T, M]`.
    pub effectiveness: DMatrix<f64>,
    /// Minimum-norm right inverse of `effectiveness`.
    pub allocation: DMatrix<f64>,
    /// Upper rotor-thrust bound, N (lower bound is zero).
    pub rotor_max: f64,
}

impl VehicleParams {
    pub fn new(
        mass: f64,
        inertia: Matrix3<f64>,
        gravity: f64,
        effectiveness: DMatrix<f64>,
        rotor_max: f64,
    ) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("mass must be positive, got {mass}")));
        }
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(Error::Config(format!("gravity must be positive, got {gravity}")));
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max() {
            return Err(Error::Config("inertia matrix is not symmetric".into()));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::Config("inertia matrix is not positive definite".into()));
        }
        if !(rotor_max > 0.0) {
            return Err(Error::Config(format!("rotor thrust bound must be positive, got {rotor_max}")));
        }
        if effectiveness.nrows() != 4 {
            return Err(Error::Config(format!(
                "effectiveness matrix must have 4 rows, got {}",
                effectiveness.nrows()
            )));
        }
        let allocation = pseudo_inverse(&effectiveness)?;
        let inertia_inv = inertia.try_inverse().expect("positive definite");
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
            gravity,
            effectiveness,
            allocation,
            rotor_max,
        })
    }

    pub fn rotor_count(&self) -> usize {
        self.effectiveness.ncols()
    }

    /// Hover thrust `m g`.
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// `B† = Bᵀ (B Bᵀ)⁻¹` for a 4 × n matrix of full row rank.
fn pseudo_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rank = b.rank(1e-9 * b.abs().max().max(1.0));
    if rank < 4 {
        return Err(Error::RankDeficientAllocation { rank });
    }
    let gram = b * b.transpose();
    let inv = gram
        .cholesky()
        .ok_or(Error::RankDeficientAllocation { rank })?
        .inverse();
    Ok(b.transpose() * inv)
}

/// Effectiveness matrix for a planar multirotor with rotors at `angles_deg`
/// (measured from body x toward body y) on arms of length `arm_length`.
///
/// Row 0 sums thrusts, rows 1–2 are roll and pitch moments of upward thrust,
/// row 3 is the reaction yaw torque `spin_i * torque_coeff * u_i`.
pub fn planar_effectiveness(
    angles_deg: &[f64],
    spins: &[f64],
    arm_length: f64,
    torque_coeff: f64,
) -> DMatrix<f64> {
    assert_eq!(angles_deg.len(), spins.len());
    DMatrix::from_fn(4, angles_deg.len(), |row, k| {
        let a = angles_deg[k].to_radians();
        match row {
            0 => 1.0,
            1 => -arm_length * a.sin(),
            2 => arm_length * a.cos(),
            _ => spins[k] * torque_coeff,
        }
    })
}

/// Hexacopter in X configuration: rotors at 30° + k·60°, alternating spin.
pub fn hexacopter_x_effectiveness(arm_length: f64, torque_coeff: f64) -> DMatrix<f64> {
    let angles: Vec<f64> = (0..6).map(|k| 30.0 + 60.0 * k as f64).collect();
    let spins: Vec<f64> = (0..6).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    planar_effectiveness(&angles, &spins, arm_length, torque_coeff)
}

pub fn skew<S: Real>(w: &Vector3<S>) -> Matrix3<S> {
    let z = S::zero();
    Matrix3::new(z, -w.z, w.y, w.z, z, -w.x, -w.y, w.x, z)
}

/// The auxiliary matrix `A` with `ω × e3 = A ω_xy`.
pub fn tilt_map<S: Real>() -> Matrix3x2<S> {
    let (z, o) = (S::zero(), S::one());
    Matrix3x2::new(z, o, -o, z, z, z)
}

fn cvt<S: Real>(m: &Matrix3<f64>) -> Matrix3<S> {
    m.map(S::from)
}

impl<S: Real> AugmentedState<S> {
    /// Body z-axis in the inertial frame, `R e3`.
    pub fn z_body(&self) -> Vector3<S> {
        self.r.column(2).into_owned()
    }

    /// Thrust force `f = -T z_B`.
    pub fn force(&self) -> Vector3<S> {
        self.z_body() * (-self.thrust)
    }

    pub fn omega_xy(&self) -> Vector2<S> {
        Vector2::new(self.omega.x, self.omega.y)
    }

    /// `x + ε dx` for forward-mode differentiation along `dx`.
    pub fn lift(&self, dx: &AugmentedStateRate<S>) -> AugmentedState<Dual<S>> {
        AugmentedState {
            p: self.p.zip_map(&dx.p_dot, Dual::new),
            v: self.v.zip_map(&dx.v_dot, Dual::new),
            r: self.r.zip_map(&dx.r_dot, Dual::new),
            omega: self.omega.zip_map(&dx.omega_dot, Dual::new),
            thrust: Dual::new(self.thrust, dx.thrust_dot),
        }
    }
}

impl AugmentedState<f64> {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>, r: Matrix3<f64>, omega: Vector3<f64>, thrust: f64) -> Self {
        Self { p, v, r, omega, thrust }
    }

    /// Level hover at `p` with `T = m g`.
    pub fn hover(p: Vector3<f64>, params: &VehicleParams) -> Self {
        Self::new(p, Vector3::zeros(), Matrix3::identity(), Vector3::zeros(), params.weight())
    }

    /// Lift a plain state to any scalar type with zero tangents.
    pub fn cast<S: Real>(&self) -> AugmentedState<S> {
        AugmentedState {
            p: self.p.map(S::from),
            v: self.v.map(S::from),
            r: self.r.map(S::from),
            omega: self.omega.map(S::from),
            thrust: S::from(self.thrust),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<9>(6).copy_from_slice(self.r.as_slice());
        x.fixed_rows_mut::<3>(15).copy_from(&self.omega);
        x[18] = self.thrust;
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            r: Matrix3::from_column_slice(x.fixed_rows::<9>(6).as_slice()),
            omega: x.fixed_rows::<3>(15).into_owned(),
            thrust: x[18],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.r.transpose() * self.r - Matrix3::identity()).norm()
    }
}

impl AugmentedStateRate<f64> {
    pub fn to_vector(&self) -> StateVector {
        AugmentedState::new(self.p_dot, self.v_dot, self.r_dot, self.omega_dot, self.thrust_dot).to_vector()
    }
}

/// Full vector field of the augmented system; affine in `nu`.
pub fn state_derivative<S: Real>(
    x: &AugmentedState<S>,
    nu: &WrenchRateInput,
    params: &VehicleParams,
) -> AugmentedStateRate<S> {
    let m = S::from(params.mass);
    let e3 = Vector3::new(S::zero(), S::zero(), S::one());
    let j: Matrix3<S> = cvt(&params.inertia);
    let j_inv: Matrix3<S> = cvt(&params.inertia_inv);
    let torque = nu.torque.map(S::from);
    AugmentedStateRate {
        p_dot: x.v,
        v_dot: e3 * S::from(params.gravity) + x.force() / m,
        r_dot: x.r * skew(&x.omega),
        omega_dot: j_inv * (torque - x.omega.cross(&(j * x.omega))),
        thrust_dot: S::from(nu.thrust_rate),
    }
}

/// `ḟ = -T R A ω_xy - Ṫ z_B`.
pub fn reformulated_force_rate<S: Real>(x: &AugmentedState<S>, thrust_rate: S) -> Vector3<S> {
    let a: Matrix3x2<S> = tilt_map();
    x.r * (a * x.omega_xy()) * (-x.thrust) - x.z_body() * thrust_rate
}

/// Minimum-norm rotor thrusts producing the wrench `[T, M]`.
pub fn allocate(wrench: &Vector4<f64>, params: &VehicleParams) -> DVector<f64> {
    &params.allocation * DVector::from_column_slice(wrench.as_slice())
}

pub fn effective_wrench(rotor_thrusts: &DVector<f64>, params: &VehicleParams) -> Vector4<f64> {
    let w = &params.effectiveness * rotor_thrusts;
    Vector4::new(w[0], w[1], w[2], w[3])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Saturation {
    pub rotor_thrusts: DVector<f64>,
    /// `B u_sat`.
    pub wrench: Vector4<f64>,
    pub saturated: bool,
}

/// Clamp every rotor thrust to `[0, rotor_max]`.
pub fn saturate(u: &DVector<f64>, params: &VehicleParams) -> Saturation {
    let clamped = u.map(|ui| ui.clamp(0.0, params.rotor_max));
    let saturated = clamped.iter().zip(u.iter()).any(|(a, b)| a != b);
    Saturation {
        wrench: effective_wrench(&clamped, params),
        rotor_thrusts: clamped,
        saturated,
    }
}

/// Rotation `Rz(ψ) Ry(θ) Rx(φ)` from roll, pitch, yaw in radians.
pub fn rotation_from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// Inverse of [`rotation_from_euler_zyx`]; returns `(roll, pitch, yaw)`.
pub fn euler_zyx_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

/// Nearest rotation matrix in the Frobenius sense (polar factor `U Vᵀ`).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut q = u * v_t;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * v_t;
    }
    q
}
