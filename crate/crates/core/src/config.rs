//! TOML scenario files.
//!
//! SI units throughout, except that attitude angles, body rates, the rate
//! limit and the tilt limit are written in degrees. Every table except
//! `[simulation]` fields and `[reference]` has defaults, so a minimal file
//! only needs to name a reference trajectory.
//!
//! ```toml
//! name = "hover_demo"
//! [simulation]
//! duration = 5.0
//! [reference]
//! kind = "hover"
//! position = [0.0, 0.0, -5.0]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::barriers::SafetyConfig;
use crate::dynamics::{hexacopter_x_effectiveness, planar_effectiveness, rotation_from_euler_zyx, AugmentedState, VehicleParams};
use crate::error::{Error, Result};
use crate::nominal::{NominalGains, ReferenceTrajectory};
use crate::sim::Scenario;

/// The shipped default scenario, embedded so it is always available.
pub const PAPER_SCENARIO_TOML: &str = include_str!("../../../scenarios/scenario_paper.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub safety: SafetyFile,
    #[serde(default)]
    pub nominal: NominalFile,
    pub reference: ReferenceTrajectory,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "yes")]
    pub safety_filter: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt() -> f64 {
    0.005
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Six rotors at 30° + k·60°, alternating spin direction.
    HexacopterX { arm_length: f64, torque_coefficient: f64 },
    /// Planar rotors at arbitrary angles (degrees from body x toward body y).
    Planar { angles_deg: Vec<f64>, spins: Vec<f64>, arm_length: f64, torque_coefficient: f64 },
    /// Explicit 4 × n effectiveness matrix, one inner array per wrench row.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass: f64,
    /// Diagonal of the body inertia, kg·m².
    pub inertia: [f64; 3],
    pub gravity: f64,
    /// Rotor thrust upper bound as a fraction of the vehicle weight.
    pub rotor_max_weight_fraction: f64,
    pub geometry: Geometry,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            mass: 4.34,
            inertia: [0.0820, 0.0845, 0.1377],
            gravity: 9.81,
            rotor_max_weight_fraction: 0.6371,
            geometry: Geometry::HexacopterX { arm_length: 0.315, torque_coefficient: 8.004e-4 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw (ZYX), degrees.
    pub euler_deg: [f64; 3],
    pub body_rates_deg: [f64; 3],
    /// Initial collective thrust, N; the vehicle weight when omitted.
    pub thrust: Option<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { position: [0.0; 3], velocity: [0.0; 3], euler_deg: [0.0; 3], body_rates_deg: [0.0; 3], thrust: None }
    }
}

/// Safety limits plus the tuning of the composite barriers.
///
/// The default slopes, `μ`, `λ` and `c` values were tuned on the orbit
/// scenario: large `μ` keep the tracking-residual penalties of the composite
/// barriers small relative to the base barrier at a tumbling initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyFile {
    pub max_body_rate_deg: f64,
    pub max_tilt_deg: f64,
    pub max_speed: f64,
    pub max_distance: f64,
    pub center: [f64; 3],
    pub desired_axis: [f64; 3],
    /// Optional diagonal overrides of `P_ω` (1/(rad/s)²), `P_v`, `P_p`.
    pub p_omega: Option<[f64; 3]>,
    pub p_v: Option<[f64; 3]>,
    pub p_p: Option<[f64; 3]>,
    pub a_omega: f64,
    pub a1_zb: f64,
    pub a2_zb: f64,
    pub a0_v: f64,
    pub a0_p: f64,
    pub c_v: f64,
    pub c_p: f64,
    pub mu_v: [f64; 2],
    pub mu_p: [f64; 3],
    pub lambda_v: [f64; 2],
    pub lambda_p: [f64; 3],
    /// Singularity floor of the thrust, as a fraction of the vehicle weight.
    pub thrust_floor_weight_fraction: f64,
}

impl Default for SafetyFile {
    fn default() -> Self {
        Self {
            max_body_rate_deg: 360.0,
            max_tilt_deg: 30.0,
            max_speed: 2.0,
            max_distance: 3.0,
            center: [0.0, 0.0, -5.0],
            desired_axis: [0.0, 0.0, 1.0],
            p_omega: None,
            p_v: None,
            p_p: None,
            a_omega: 20.0,
            a1_zb: 2.5,
            a2_zb: 5.0,
            a0_v: 1.0,
            a0_p: 0.7,
            c_v: 3.0,
            c_p: 1.3,
            mu_v: [250.0, 20000.0],
            mu_p: [20.0, 2000.0, 3000.0],
            lambda_v: [15.0, 15.0],
            lambda_p: [10.0, 10.0, 10.0],
            thrust_floor_weight_fraction: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NominalFile {
    pub k_p: f64,
    pub k_v: f64,
    pub k_thrust: f64,
    pub k_attitude: f64,
    pub k_rate: f64,
    pub k_yaw: f64,
}

impl Default for NominalFile {
    fn default() -> Self {
        Self { k_p: 1.5, k_v: 2.0, k_thrust: 5.0, k_attitude: 4.0, k_rate: 13.0, k_yaw: 0.1 }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The shipped orbit scenario.
    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_SCENARIO_TOML).expect("embedded scenario parses")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn vehicle_params(&self) -> Result<VehicleParams> {
        let v = &self.vehicle;
        let b = match &v.geometry {
            Geometry::HexacopterX { arm_length, torque_coefficient } => {
                hexacopter_x_effectiveness(*arm_length, *torque_coefficient)
            }
            Geometry::Planar { angles_deg, spins, arm_length, torque_coefficient } => {
                if angles_deg.len() != spins.len() || angles_deg.is_empty() {
                    return Err(Error::Config("planar geometry needs one spin per rotor angle".into()));
                }
                planar_effectiveness(angles_deg, spins, *arm_length, *torque_coefficient)
            }
            Geometry::Matrix { rows } => {
                let n = rows.first().map_or(0, Vec::len);
                if rows.len() != 4 || n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("effectiveness matrix must be 4 rows of equal, non-zero length".into()));
                }
                DMatrix::from_fn(4, n, |i, j| rows[i][j])
            }
        };
        if !(v.rotor_max_weight_fraction > 0.0) {
            return Err(Error::Config("rotor_max_weight_fraction must be positive".into()));
        }
        let inertia = Matrix3::from_diagonal(&Vector3::from(v.inertia));
        let rotor_max = v.rotor_max_weight_fraction * v.mass * v.gravity;
        VehicleParams::new(v.mass, inertia, v.gravity, b, rotor_max)
    }

    pub fn safety_config(&self, params: &VehicleParams) -> Result<SafetyConfig> {
        let s = &self.safety;
        for (name, x) in [
            ("max_body_rate_deg", s.max_body_rate_deg),
            ("max_speed", s.max_speed),
            ("max_distance", s.max_distance),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        let axis = Vector3::from(s.desired_axis);
        if !(axis.norm() > 0.0) {
            return Err(Error::Config("desired_axis must be non-zero".into()));
        }
        let mut cfg = SafetyConfig::isotropic(
            s.max_body_rate_deg.to_radians(),
            s.max_speed,
            s.max_distance,
            Vector3::from(s.center),
            s.max_tilt_deg.to_radians(),
            s.thrust_floor_weight_fraction * params.weight(),
        );
        cfg.z_b_desired = axis.normalize();
        if let Some(d) = s.p_omega {
            cfg.p_omega = Vector3::from(d);
        }
        if let Some(d) = s.p_v {
            cfg.p_v = Vector3::from(d);
        }
        if let Some(d) = s.p_p {
            cfg.p_p = Vector3::from(d);
        }
        cfg.a_omega = s.a_omega;
        cfg.a1_zb = s.a1_zb;
        cfg.a2_zb = s.a2_zb;
        cfg.a0_v = s.a0_v;
        cfg.a0_p = s.a0_p;
        cfg.c_v = s.c_v;
        cfg.c_p = s.c_p;
        cfg.mu_v = s.mu_v;
        cfg.mu_p = s.mu_p;
        cfg.lambda_v = s.lambda_v;
        cfg.lambda_p = s.lambda_p;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn nominal_gains(&self) -> NominalGains {
        let n = &self.nominal;
        NominalGains {
            k_p: n.k_p,
            k_v: n.k_v,
            k_thrust: n.k_thrust,
            k_attitude: n.k_attitude,
            k_rate: n.k_rate,
            k_yaw: n.k_yaw,
            force_floor: 1e-6,
        }
    }

    pub fn initial_state(&self, params: &VehicleParams) -> Result<AugmentedState> {
        let i = &self.initial;
        let [roll, pitch, yaw] = i.euler_deg.map(f64::to_radians);
        let x = AugmentedState::new(
            Vector3::from(i.position),
            Vector3::from(i.velocity),
            rotation_from_euler_zyx(roll, pitch, yaw),
            Vector3::from(i.body_rates_deg.map(f64::to_radians)),
            i.thrust.unwrap_or_else(|| params.weight()),
        );
        if !x.is_finite() {
            return Err(Error::Config("initial state must be finite".into()));
        }
        Ok(x)
    }

    /// Build and validate the simulation scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let params = self.vehicle_params()?;
        let safety = self.safety_config(&params)?;
        let scenario = Scenario {
            name: self.name.clone(),
            initial: self.initial_state(&params)?,
            duration: self.simulation.duration,
            dt: self.simulation.dt,
            safety,
            gains: self.nominal_gains(),
            reference: self.reference,
            filter_enabled: self.simulation.safety_filter,
            seed: self.simulation.seed,
            params,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run;

    #[test]
    fn shipped_scenario_matches_published_setup() {
        let c = ScenarioConfig::paper();
        let s = c.to_scenario().unwrap();
        assert_eq!(s.dt, 0.005);
        assert_eq!(s.initial.p, Vector3::new(0.0, 0.0, -5.0));
        assert_eq!(s.initial.v, Vector3::new(0.0, 1.25, 0.625));
        assert!((s.initial.omega - Vector3::new(15.0, 15.0, 0.0).map(f64::to_radians)).norm() < 1e-15);
        assert!((s.params.rotor_max - 0.6371 * 4.34 * 9.81).abs() < 1e-12);
        assert_eq!(s.params.rotor_count(), 6);
        assert!((1.0 / s.safety.p_omega.x.sqrt() - std::f64::consts::TAU).abs() < 1e-12);
        assert!((s.safety.max_tilt - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.safety.p_center, Vector3::new(0.0, 0.0, -5.0));
        match s.reference {
            ReferenceTrajectory::Orbit { radius, rate, vertical_amplitude, vertical_rate, .. } => {
                assert_eq!((radius, rate, vertical_amplitude, vertical_rate), (2.5, 0.5, 2.5, 0.25));
            }
            _ => panic!("orbit reference expected"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::paper();
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let c = ScenarioConfig::from_toml_str(
            "[simulation]\nduration = 0.5\n[reference]\nkind = \"hover\"\nposition = [0.0, 0.0, -5.0]\n[initial]\nposition = [0.0, 0.0, -5.0]\n",
        )
        .unwrap();
        let s = c.to_scenario().unwrap();
        assert!(s.filter_enabled);
        let out = run(&s).unwrap();
        assert_eq!(out.records.len(), 101);
        assert!(!out.report.violated());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(ScenarioConfig::from_toml_str("nonsense = ["), Err(Error::Config(_))));
        let unknown = "[simulation]\nduration = 1.0\nbogus = 2\n[reference]\nkind = \"hover\"\nposition = [0.0, 0.0, 0.0]\n";
        assert!(matches!(ScenarioConfig::from_toml_str(unknown), Err(Error::Config(_))));
        let mut c = ScenarioConfig::paper();
        c.vehicle.geometry = Geometry::Matrix { rows: vec![vec![1.0; 6]; 3] };
        assert!(matches!(c.to_scenario(), Err(Error::Config(_))));
        let mut c = ScenarioConfig::paper();
        c.simulation.dt = 0.0;
        assert!(matches!(c.to_scenario(), Err(Error::Config(_))));
        let mut c = ScenarioConfig::paper();
        c.initial.position = [10.0, 0.0, -5.0];
        assert!(matches!(c.to_scenario(), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::load("/nonexistent/scenario.toml"), Err(Error::Config(_))));
    }

    #[test]
    fn explicit_matrix_equals_built_in_geometry() {
        let c = ScenarioConfig::paper();
        let b = c.vehicle_params().unwrap().effectiveness;
        let mut m = c.clone();
        m.vehicle.geometry = Geometry::Matrix { rows: (0..4).map(|i| b.row(i).iter().copied().collect()).collect() };
        assert_eq!(m.vehicle_params().unwrap().effectiveness, b);
    }
}
