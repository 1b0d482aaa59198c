//! Nominal position tracking controller producing `(Ṫ, M)`.
//!
//! Backstepping-style chain: position/velocity errors give a desired force,
//! the force gives a desired thrust magnitude and body z-axis, the axis error
//! gives desired body rates, and a rate loop gives the torque. The thrust
//! channel tracks the desired magnitude with a first-order law plus its
//! analytic rate. Yaw is only rate-regulated.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AugmentedState, VehicleParams, WrenchRateInput};

/// Reference position with analytic derivatives up to jerk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceTrajectory {
    Hover {
        position: [f64; 3],
        #[serde(default)]
        yaw_rate: f64,
    },
    /// Horizontal circle with a sinusoidal vertical component:
    /// `center + [r cos(ω t), r sin(ω t), A sin(ω_z t)]`.
    Orbit {
        center: [f64; 3],
        radius: f64,
        rate: f64,
        vertical_amplitude: f64,
        vertical_rate: f64,
        #[serde(default)]
        yaw_rate: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw_rate: f64,
}

impl ReferenceTrajectory {
    pub fn sample(&self, t: f64) -> ReferenceSample {
        match *self {
            ReferenceTrajectory::Hover { position, yaw_rate } => ReferenceSample {
                position: Vector3::from(position),
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
                jerk: Vector3::zeros(),
                yaw_rate,
            },
            ReferenceTrajectory::Orbit { center, radius, rate, vertical_amplitude, vertical_rate, yaw_rate } => {
                let (s, c) = (rate * t).sin_cos();
                let (sz, cz) = (vertical_rate * t).sin_cos();
                let (r, w, a, wz) = (radius, rate, vertical_amplitude, vertical_rate);
                ReferenceSample {
                    position: Vector3::from(center) + Vector3::new(r * c, r * s, a * sz),
                    velocity: Vector3::new(-r * w * s, r * w * c, a * wz * cz),
                    acceleration: Vector3::new(-r * w * w * c, -r * w * w * s, -a * wz * wz * sz),
                    jerk: Vector3::new(r * w.powi(3) * s, -r * w.powi(3) * c, -a * wz.powi(3) * cz),
                    yaw_rate,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalGains {
    /// Position gain, 1/s².
    pub k_p: f64,
    /// Velocity gain, 1/s.
    pub k_v: f64,
    /// Thrust tracking gain, 1/s.
    pub k_thrust: f64,
    /// Axis-to-rate gain, 1/s.
    pub k_attitude: f64,
    /// Roll/pitch rate gain, 1/s.
    pub k_rate: f64,
    /// Yaw-rate gain, 1/s.
    pub k_yaw: f64,
    /// Desired forces smaller than this keep the previous axis, N.
    #[serde(default = "default_force_floor")]
    pub force_floor: f64,
}

fn default_force_floor() -> f64 {
    1e-6
}

impl NominalGains {
    pub fn is_valid(&self) -> bool {
        [self.k_p, self.k_v, self.k_thrust, self.k_attitude, self.k_rate, self.k_yaw, self.force_floor]
            .iter()
            .all(|g| *g > 0.0 && g.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NominalOutput {
    pub input: WrenchRateInput,
    /// Desired body z-axis used this step.
    pub desired_axis: Vector3<f64>,
    pub desired_thrust: f64,
    pub desired_thrust_rate: f64,
}

/// One evaluation of the nominal law. `fallback_axis` is used when the
/// desired force is degenerate.
pub fn nominal_input(
    x: &AugmentedState,
    t: f64,
    reference: &ReferenceTrajectory,
    gains: &NominalGains,
    params: &VehicleParams,
    fallback_axis: &Vector3<f64>,
) -> NominalOutput {
    let m = params.mass;
    let e3 = Vector3::z();
    let r = reference.sample(t);

    let e_p = x.p - r.position;
    let e_v = x.v - r.velocity;
    let force_d = m * (r.acceleration - gains.k_p * e_p - gains.k_v * e_v - params.gravity * e3);
    let v_dot = params.gravity * e3 + x.force() / m;
    let force_d_rate = m * (r.jerk - gains.k_p * e_v - gains.k_v * (v_dot - r.acceleration));

    let thrust_d = force_d.norm();
    let (axis_d, axis_d_rate, thrust_d_rate) = if thrust_d >= gains.force_floor {
        let n = force_d / thrust_d;
        let along = n.dot(&force_d_rate);
        (-n, -(force_d_rate - n * along) / thrust_d, along)
    } else {
        (*fallback_axis, Vector3::zeros(), 0.0)
    };

    let thrust_rate = -gains.k_thrust * (x.thrust - thrust_d) + thrust_d_rate;

    // desired axis and its rate seen from the body frame
    let rt = x.r.transpose();
    let b = rt * axis_d;
    let b_rate = rt * axis_d_rate;
    let omega_d = gains.k_attitude * e3.cross(&b) + e3.cross(&b_rate);
    let omega_d_xy = Vector2::new(omega_d.x, omega_d.y);

    let rate_err_xy = x.omega_xy() - omega_d_xy;
    let omega_dot = Vector3::new(
        -gains.k_rate * rate_err_xy.x,
        -gains.k_rate * rate_err_xy.y,
        -gains.k_yaw * (x.omega.z - r.yaw_rate),
    );
    let torque = params.inertia * omega_dot + x.omega.cross(&(params.inertia * x.omega));

    NominalOutput {
        input: WrenchRateInput::new(thrust_rate, torque),
        desired_axis: axis_d,
        desired_thrust: thrust_d,
        desired_thrust_rate: thrust_d_rate,
    }
}

/// Stateful wrapper remembering the last valid desired axis.
#[derive(Clone, Debug)]
pub struct NominalController {
    pub reference: ReferenceTrajectory,
    pub gains: NominalGains,
    last_axis: Vector3<f64>,
}

impl NominalController {
    pub fn new(reference: ReferenceTrajectory, gains: NominalGains) -> Self {
        Self { reference, gains, last_axis: Vector3::z() }
    }

    pub fn command(&mut self, x: &AugmentedState, t: f64, params: &VehicleParams) -> NominalOutput {
        let out = nominal_input(x, t, &self.reference, &self.gains, params, &self.last_axis);
        self.last_axis = out.desired_axis;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::test_params;
    use crate::dynamics::rotation_from_euler_zyx;
    use nalgebra::Matrix3;

    fn gains() -> NominalGains {
        NominalGains { k_p: 4.0, k_v: 4.0, k_thrust: 10.0, k_attitude: 8.0, k_rate: 30.0, k_yaw: 5.0, force_floor: 1e-6 }
    }

    fn paper_reference() -> ReferenceTrajectory {
        ReferenceTrajectory::Orbit {
            center: [0.0, 0.0, -5.0],
            radius: 2.5,
            rate: 0.5,
            vertical_amplitude: 2.5,
            vertical_rate: 0.25,
            yaw_rate: 0.0,
        }
    }

    #[test]
    fn reference_derivatives_match_finite_differences() {
        let r = paper_reference();
        let h = 1e-4;
        for &t in &[0.0, 0.7, 3.3, 11.1, 19.9] {
            let (a, b) = (r.sample(t - h), r.sample(t + h));
            let s = r.sample(t);
            assert!(((b.position - a.position) / (2.0 * h) - s.velocity).norm() < 1e-6);
            assert!(((b.velocity - a.velocity) / (2.0 * h) - s.acceleration).norm() < 1e-6);
            assert!(((b.acceleration - a.acceleration) / (2.0 * h) - s.jerk).norm() < 1e-6);
        }
        let s0 = r.sample(0.0);
        assert_eq!(s0.position, Vector3::new(2.5, 0.0, -5.0));
    }

    #[test]
    fn hover_on_reference_commands_nothing() {
        let params = test_params();
        let p = Vector3::new(1.0, 2.0, -3.0);
        let reference = ReferenceTrajectory::Hover { position: p.into(), yaw_rate: 0.0 };
        let x = AugmentedState::hover(p, &params);
        let out = nominal_input(&x, 0.0, &reference, &gains(), &params, &Vector3::z());
        assert!(out.input.to_vector().norm() < 1e-12);
        assert!((out.desired_axis - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn zero_tracking_error_gives_feedforward_thrust_rate() {
        let params = test_params();
        let reference = paper_reference();
        let g = gains();
        let t = 1.3;
        let s = reference.sample(t);
        // build a state sitting exactly on the reference with matched thrust and axis
        let force = params.mass * (s.acceleration - params.gravity * Vector3::z());
        let axis = -force.normalize();
        let y = Vector3::x().cross(&axis).normalize();
        let xb = y.cross(&axis);
        let r = Matrix3::from_columns(&[xb, y, axis]);
        let x = AugmentedState::new(s.position, s.velocity, r, Vector3::zeros(), force.norm());
        let out = nominal_input(&x, t, &reference, &g, &params, &Vector3::z());
        // analytic rate of ‖m(p̈_ref − g e3)‖
        let expected = force.normalize().dot(&(params.mass * s.jerk));
        assert!((out.input.thrust_rate - expected).abs() < 1e-9);
        assert!((out.desired_thrust - x.thrust).abs() < 1e-12);
        assert!(out.input.is_finite());
    }

    #[test]
    fn degenerate_force_holds_previous_axis() {
        let params = test_params();
        // velocity chosen so the commanded acceleration is exactly g e3
        let g = gains();
        let x = AugmentedState::hover(Vector3::zeros(), &params);
        let mut ctl = NominalController::new(ReferenceTrajectory::Hover { position: [0.0; 3], yaw_rate: 0.0 }, g);
        ctl.last_axis = rotation_from_euler_zyx(0.1, 0.0, 0.0).column(2).into_owned();
        let mut xs = x;
        xs.v = Vector3::new(0.0, 0.0, -params.gravity / g.k_v);
        let out = ctl.command(&xs, 0.0, &params);
        assert!(out.desired_thrust < 1e-9);
        assert!((out.desired_axis - rotation_from_euler_zyx(0.1, 0.0, 0.0).column(2)).norm() < 1e-15);
        assert!(out.input.is_finite());
    }
}
