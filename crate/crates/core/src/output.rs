//! Files written by the command-line tool.
//!
//! `trajectory.csv` has one row per control step. Columns, in order:
//!
//! | columns | meaning |
//! |---|---|
//! | `step`, `t` | step index, time (s) |
//! | `p_x..p_z`, `v_x..v_z` | position (m), velocity (m/s), NED |
//! | `roll`, `pitch`, `yaw` | ZYX Euler angles (rad) |
//! | `omega_x..omega_z` | body rates (rad/s) |
//! | `thrust` | collective thrust state (N) |
//! | `nom_thrust_rate`, `nom_m_x..nom_m_z` | nominal input (N/s, N·m) |
//! | `cmd_thrust_rate`, `cmd_m_x..cmd_m_z` | applied input after the filter |
//! | `u_1..u_n` | rotor thrusts after saturation (N) |
//! | `h_omega`, `h0_zb`, `h1_zb`, `h0_v`, `h_v`, `h0_p`, `h_p` | barrier values |
//! | `qp_status` | `optimal`, `relaxed`, `infeasible`, or `off` |
//! | `active_set` | active families joined by `|` |
//! | `solve_time_us` | filter construction + QP time (µs) |
//! | `saturated` | `1` if any rotor was clipped |

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::barriers::BarrierFamily;
use crate::qp_filter::QpStatus;
use crate::sim::{SafetyReport, TrajectoryRecord};

pub fn csv_header(rotors: usize) -> String {
    let mut cols: Vec<String> = [
        "step", "t", "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "roll", "pitch", "yaw", "omega_x", "omega_y",
        "omega_z", "thrust", "nom_thrust_rate", "nom_m_x", "nom_m_y", "nom_m_z", "cmd_thrust_rate", "cmd_m_x",
        "cmd_m_y", "cmd_m_z",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=rotors).map(|i| format!("u_{i}")));
    cols.extend(
        ["h_omega", "h0_zb", "h1_zb", "h0_v", "h_v", "h0_p", "h_p", "qp_status", "active_set", "solve_time_us", "saturated"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

fn status_name(s: Option<QpStatus>) -> &'static str {
    match s {
        None => "off",
        Some(QpStatus::Optimal) => "optimal",
        Some(QpStatus::Relaxed) => "relaxed",
        Some(QpStatus::Infeasible) => "infeasible",
    }
}

pub fn write_csv(mut out: impl Write, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    let rotors = records.first().map_or(0, |r| r.rotor_thrusts.len());
    writeln!(out, "{}", csv_header(rotors))?;
    for r in records {
        let mut fields: Vec<String> = vec![r.step.to_string(), r.t.to_string()];
        let (nominal, command) = (r.nominal.to_vector(), r.command.to_vector());
        let nums = r.p.iter().chain(r.v.iter()).chain(r.euler.iter()).chain(r.omega.iter()).copied()
            .chain(std::iter::once(r.thrust))
            .chain(nominal.iter().copied())
            .chain(command.iter().copied())
            .chain(r.rotor_thrusts.iter().copied());
        fields.extend(nums.map(|x| x.to_string()));
        let b = &r.barriers;
        fields.extend([b.h_omega, b.h0_zb, b.h1_zb, b.h0_v, b.h_v, b.h0_p, b.h_p].iter().map(|x| x.to_string()));
        fields.push(status_name(r.qp_status).into());
        fields.push(r.active_set.iter().map(|f| f.name()).collect::<Vec<_>>().join("|"));
        fields.push(format!("{:.3}", r.solve_time * 1e6));
        fields.push(u8::from(r.saturated).to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDelta {
    pub family: BarrierFamily,
    pub filtered_min_h: f64,
    pub nominal_min_h: f64,
    /// `filtered − nominal`.
    pub delta: f64,
}

/// Side-by-side summary of a filtered and an unfiltered run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub filtered: SafetyReport,
    pub nominal: SafetyReport,
    pub deltas: Vec<FamilyDelta>,
}

impl Comparison {
    pub fn new(filtered: SafetyReport, nominal: SafetyReport) -> Self {
        let deltas = BarrierFamily::ALL
            .iter()
            .map(|&family| {
                let (a, b) = (filtered.family(family).min_h, nominal.family(family).min_h);
                FamilyDelta { family, filtered_min_h: a, nominal_min_h: b, delta: a - b }
            })
            .collect();
        Self { filtered, nominal, deltas }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::sim::run;

    #[test]
    fn csv_rows_match_header() {
        let mut c = ScenarioConfig::paper();
        c.simulation.duration = 0.05;
        let out = run(&c.to_scenario().unwrap()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &out.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), out.records.len() + 1);
        let width = lines[0].split(',').count();
        assert_eq!(width, 23 + 6 + 11);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == width));
        assert!(lines[1].starts_with("0,0,0,0,-5,"));
    }
}
