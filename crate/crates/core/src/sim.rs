//! Fixed-step closed-loop simulation.
//!
//! Each control period: nominal command → optional safety filter →
//! allocation of `[T, M]` to rotors → clamp to `[0, u_max]` → integrate the
//! augmented state over `Δt` with the input held. The effective wrench
//! `B u_sat` drives the plant over the step: the force uses the delivered
//! thrust and the delivered torque replaces the commanded one. The thrust
//! state itself keeps integrating the commanded `Ṫ`, so a clipped step
//! does not make the thrust state jump.

use std::time::Instant;

use nalgebra::{DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::barriers::{snapshot, BarrierFamily, BarrierSnapshot, SafetyConfig};
use crate::dynamics::{
    allocate, euler_zyx_from_rotation, orthonormalize, saturate, state_derivative, AugmentedState, StateVector,
    VehicleParams, WrenchRateInput,
};
use crate::error::{Error, Result};
use crate::nominal::{NominalController, NominalGains, ReferenceTrajectory};
use crate::qp_filter::{filter, QpStatus};

/// Barrier values above this count as safe.
pub const VIOLATION_TOLERANCE: f64 = -1e-6;

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub initial: AugmentedState,
    pub duration: f64,
    pub dt: f64,
    pub params: VehicleParams,
    pub safety: SafetyConfig,
    pub gains: NominalGains,
    pub reference: ReferenceTrajectory,
    pub filter_enabled: bool,
    pub seed: u64,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be non-negative, got {}", self.duration)));
        }
        if self.duration > 0.0 && self.duration < self.dt {
            return Err(Error::Config("duration must be at least one time step".into()));
        }
        if !self.gains.is_valid() {
            return Err(Error::Config("nominal gains must be positive".into()));
        }
        self.safety.validate()?;
        if !self.initial.is_finite() || self.initial.orthonormality_error() > 1e-9 || self.initial.r.determinant() < 0.0 {
            return Err(Error::Config("initial attitude must be a rotation matrix".into()));
        }
        if self.filter_enabled {
            let s = snapshot(&self.initial, &self.safety, &self.params)?;
            let checks = [
                ("h_omega", s.h_omega),
                ("h0_zB", s.h0_zb),
                ("h1_zB", s.h1_zb),
                ("h_v", s.h_v),
                ("h_p", s.h_p),
            ];
            if let Some((name, value)) = checks.iter().find(|(_, v)| *v < 0.0) {
                return Err(Error::Config(format!(
                    "initial state is outside the safe set: {name} = {value:.6}"
                )));
            }
        }
        Ok(())
    }
}

/// One control step of the log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Roll, pitch, yaw (ZYX), rad.
    pub euler: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub thrust: f64,
    pub nominal: WrenchRateInput,
    /// Input after the filter (equal to `nominal` when the filter is off).
    pub command: WrenchRateInput,
    pub rotor_thrusts: DVector<f64>,
    pub barriers: BarrierSnapshot,
    pub qp_status: Option<QpStatus>,
    pub active_set: Vec<BarrierFamily>,
    /// Filter construction plus QP solve, seconds.
    pub solve_time: f64,
    pub saturated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: BarrierFamily,
    /// Minimum over the run of the constraint-level barrier.
    pub min_h: f64,
    pub min_time: f64,
    pub violations: Vec<Interval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub max_ms: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub scenario: String,
    pub filter_enabled: bool,
    pub steps: usize,
    pub duration: f64,
    pub dt: f64,
    pub tolerance: f64,
    pub families: Vec<FamilyReport>,
    pub min_h1_zb: f64,
    pub min_h_v: f64,
    pub min_h_p: f64,
    pub relaxed_steps: usize,
    pub saturated_steps: usize,
    pub first_saturation_time: Option<f64>,
    pub solve_time: TimingStats,
}

impl SafetyReport {
    pub fn family(&self, family: BarrierFamily) -> &FamilyReport {
        self.families.iter().find(|f| f.family == family).expect("all families reported")
    }

    pub fn violated(&self) -> bool {
        self.families.iter().any(|f| !f.violations.is_empty())
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub records: Vec<TrajectoryRecord>,
    pub report: SafetyReport,
}

/// One RK4 step with `nu` held, followed by projection of `R` onto SO(3).
pub fn step(x: &AugmentedState, nu: &WrenchRateInput, dt: f64, params: &VehicleParams) -> Result<AugmentedState> {
    let mut next = rk4(x, nu, dt, params);
    next.r = orthonormalize(&next.r);
    if !next.is_finite() {
        return Err(Error::IntegrationDiverged);
    }
    Ok(next)
}

/// Classic RK4 on the vectorized state, without re-orthonormalization.
pub fn rk4(x: &AugmentedState, nu: &WrenchRateInput, dt: f64, params: &VehicleParams) -> AugmentedState {
    let f = |y: &StateVector| state_derivative(&AugmentedState::from_vector(y), nu, params).to_vector();
    let y0 = x.to_vector();
    let k1 = f(&y0);
    let k2 = f(&(y0 + k1 * (0.5 * dt)));
    let k3 = f(&(y0 + k2 * (0.5 * dt)));
    let k4 = f(&(y0 + k3 * dt));
    AugmentedState::from_vector(&(y0 + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)))
}

/// Run the closed loop; records exist for `t = 0, Δt, …, N Δt`.
pub fn run(scenario: &Scenario) -> Result<SimulationOutput> {
    scenario.validate()?;
    let params = &scenario.params;
    let n = scenario.steps();
    let mut nominal = NominalController::new(scenario.reference, scenario.gains);
    let mut x = scenario.initial;
    let mut records = Vec::with_capacity(n + 1);

    for k in 0..=n {
        let t = k as f64 * scenario.dt;
        let at = |e: Error| Error::AtStep { step: k, time: t, source: Box::new(e) };
        if !x.is_finite() {
            return Err(at(Error::IntegrationDiverged));
        }
        let nominal_cmd = nominal.command(&x, t, params).input;

        let (command, barriers, qp_status, active_set, solve_time) = if scenario.filter_enabled {
            let started = Instant::now();
            let out = filter(&x, &nominal_cmd, &scenario.safety, params).map_err(at)?;
            let elapsed = started.elapsed().as_secs_f64();
            let active = out.solution.active_set.iter().map(|&i| out.rows[i].family).collect();
            (out.input, out.barriers, Some(out.solution.status), active, elapsed)
        } else {
            let b = snapshot(&x, &scenario.safety, params).map_err(at)?;
            (nominal_cmd, b, None, Vec::new(), 0.0)
        };

        let wrench = Vector4::new(x.thrust, command.torque.x, command.torque.y, command.torque.z);
        let sat = saturate(&allocate(&wrench, params), params);
        let (roll, pitch, yaw) = euler_zyx_from_rotation(&x.r);
        records.push(TrajectoryRecord {
            step: k,
            t,
            p: x.p,
            v: x.v,
            euler: Vector3::new(roll, pitch, yaw),
            omega: x.omega,
            thrust: x.thrust,
            nominal: nominal_cmd,
            command,
            rotor_thrusts: sat.rotor_thrusts.clone(),
            barriers,
            qp_status,
            active_set,
            solve_time,
            saturated: sat.saturated,
        });

        if k == n {
            break;
        }
        // integrate with the delivered thrust, then remove the held shortfall
        let shortfall = sat.wrench[0] - x.thrust;
        let mut plant = x;
        plant.thrust = sat.wrench[0];
        let applied = WrenchRateInput::new(command.thrust_rate, Vector3::new(sat.wrench[1], sat.wrench[2], sat.wrench[3]));
        x = step(&plant, &applied, scenario.dt, params).map_err(at)?;
        x.thrust -= shortfall;
    }

    let report = summarize(scenario, &records);
    Ok(SimulationOutput { records, report })
}

fn family_value(b: &BarrierSnapshot, family: BarrierFamily) -> f64 {
    match family {
        BarrierFamily::AngularVelocity => b.h_omega,
        BarrierFamily::ThrustDirection => b.h0_zb,
        BarrierFamily::Velocity => b.h0_v,
        BarrierFamily::Position => b.h0_p,
    }
}

/// Maximal runs of consecutive records with the barrier below tolerance.
fn violation_intervals(records: &[TrajectoryRecord], family: BarrierFamily) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let mut last_t = 0.0;
    for r in records {
        let bad = family_value(&r.barriers, family) < VIOLATION_TOLERANCE;
        match (bad, open) {
            (true, None) => open = Some(r.t),
            (false, Some(start)) => {
                out.push(Interval { start, end: last_t });
                open = None;
            }
            _ => {}
        }
        last_t = r.t;
    }
    if let Some(start) = open {
        out.push(Interval { start, end: last_t });
    }
    out
}

pub fn summarize(scenario: &Scenario, records: &[TrajectoryRecord]) -> SafetyReport {
    let families = BarrierFamily::ALL
        .iter()
        .map(|&family| {
            let (min_h, min_time) = records
                .iter()
                .map(|r| (family_value(&r.barriers, family), r.t))
                .fold((f64::INFINITY, 0.0), |acc, (h, t)| if h < acc.0 { (h, t) } else { acc });
            FamilyReport { family, min_h, min_time, violations: violation_intervals(records, family) }
        })
        .collect();
    let min_of = |f: fn(&BarrierSnapshot) -> f64| records.iter().map(|r| f(&r.barriers)).fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = records.iter().filter(|r| r.qp_status.is_some()).map(|r| r.solve_time).collect();
    let total: f64 = times.iter().sum();
    SafetyReport {
        scenario: scenario.name.clone(),
        filter_enabled: scenario.filter_enabled,
        steps: records.len(),
        duration: scenario.steps() as f64 * scenario.dt,
        dt: scenario.dt,
        tolerance: VIOLATION_TOLERANCE,
        families,
        min_h1_zb: min_of(|b| b.h1_zb),
        min_h_v: min_of(|b| b.h_v),
        min_h_p: min_of(|b| b.h_p),
        relaxed_steps: records.iter().filter(|r| r.qp_status == Some(QpStatus::Relaxed)).count(),
        saturated_steps: records.iter().filter(|r| r.saturated).count(),
        first_saturation_time: records.iter().find(|r| r.saturated).map(|r| r.t),
        solve_time: TimingStats {
            mean_ms: if times.is_empty() { 0.0 } else { 1e3 * total / times.len() as f64 },
            max_ms: 1e3 * times.iter().copied().fold(0.0, f64::max),
            total_s: total,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::test_params;

    #[test]
    fn hover_is_a_fixed_point_of_the_integrator() {
        let params = test_params();
        let x = AugmentedState::hover(Vector3::new(0.0, 0.0, -5.0), &params);
        let next = step(&x, &WrenchRateInput::ZERO, 0.005, &params).unwrap();
        assert!((next.to_vector() - x.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let params = test_params();
        let mut x = AugmentedState::hover(Vector3::zeros(), &params);
        x.thrust = 0.0;
        x.omega = Vector3::new(0.0, 0.0, 2.0);
        let mut y = x;
        for _ in 0..200 {
            y = step(&y, &WrenchRateInput::ZERO, 0.005, &params).unwrap();
        }
        assert!((y.omega - x.omega).norm() < 1e-12);
        assert!(y.orthonormality_error() < 1e-9);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let params = test_params();
        let mut x = AugmentedState::hover(Vector3::zeros(), &params);
        x.v.x = f64::NAN;
        assert!(matches!(step(&x, &WrenchRateInput::ZERO, 0.01, &params), Err(Error::IntegrationDiverged)));
    }

    #[test]
    fn intervals_group_consecutive_violations() {
        let params = test_params();
        let base = AugmentedState::hover(Vector3::zeros(), &params);
        let mk = |t: f64, h: f64| TrajectoryRecord {
            step: 0,
            t,
            p: base.p,
            v: base.v,
            euler: Vector3::zeros(),
            omega: base.omega,
            thrust: base.thrust,
            nominal: WrenchRateInput::ZERO,
            command: WrenchRateInput::ZERO,
            rotor_thrusts: DVector::zeros(6),
            barriers: BarrierSnapshot { h_omega: 1.0, h0_zb: 1.0, h1_zb: 1.0, h0_v: 1.0, h_v: 1.0, h0_p: h, h_p: h },
            qp_status: None,
            active_set: Vec::new(),
            solve_time: 0.0,
            saturated: false,
        };
        let recs: Vec<_> = [0.5, -0.1, -0.2, 0.3, -1e-7, -0.4]
            .iter()
            .enumerate()
            .map(|(i, &h)| mk(i as f64, h))
            .collect();
        let v = violation_intervals(&recs, BarrierFamily::Position);
        assert_eq!(v, vec![Interval { start: 1.0, end: 2.0 }, Interval { start: 5.0, end: 5.0 }]);
        assert!(violation_intervals(&recs, BarrierFamily::Velocity).is_empty());
    }
}
