//! Minimal-deviation safety filter.
//!
//! ```text
//! ν* = argmin ½‖ν − k_d‖²   s.t.  cᵢᵀν + dᵢ ≥ 0
//! ```
//!
//! With four decision variables and a handful of rows the exact optimum is
//! found by enumerating candidate active sets and keeping the feasible KKT
//! point of least objective. Enumeration runs in order of set size, then
//! lexicographically, and a later candidate only replaces the incumbent on a
//! strict improvement; the result is deterministic.
//!
//! If no feasible point exists the problem is re-solved with one shared slack
//! `s ≥ 0` added to every row and penalized by `½ W s²`.

use nalgebra::{DMatrix, DVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::barriers::{constraint_rows, snapshot, AffineConstraintRow, BarrierSnapshot, SafetyConfig};
use crate::dynamics::{AugmentedState, VehicleParams, WrenchRateInput};
use crate::error::{Error, Result};

/// Default enumeration bound on the number of rows.
pub const MAX_ROWS: usize = 16;

/// Penalty on the shared slack of the relaxed problem.
pub const SLACK_WEIGHT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub target: Vector4<f64>,
    pub rows: Vec<AffineConstraintRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Relaxed,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub nu: Vector4<f64>,
    /// Rows in the optimal active set, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per row; zero outside the active set.
    pub multipliers: Vec<f64>,
    pub status: QpStatus,
    pub slack: f64,
    /// Max of stationarity, primal, dual and complementarity residuals.
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn objective(&self, target: &Vector4<f64>) -> f64 {
        0.5 * (self.nu - target).norm_squared()
    }
}

/// A KKT point of the dense problem `min ½‖y − t‖² s.t. a_iᵀy + b_i ≥ 0`.
struct KktPoint {
    y: DVector<f64>,
    active: Vec<usize>,
    lambda: Vec<f64>,
    objective: f64,
}

fn primal_tol(a: &DVector<f64>, b: f64, y: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + b.abs() + a.norm() * y.norm())
}

/// Visit every `k`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact minimizer by active-set enumeration, or `None` when infeasible.
fn enumerate(target: &DVector<f64>, a: &[DVector<f64>], b: &[f64]) -> Option<KktPoint> {
    let n = target.len();
    let m = a.len();
    let mut best: Option<KktPoint> = None;
    for k in 0..=m.min(n) {
        for_each_subset(m, k, |set| {
            let Some((y, lam)) = solve_equality(target, a, b, set) else {
                return;
            };
            let lam_scale = 1.0 + lam.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
            if lam.iter().any(|&l| l < -1e-12 * lam_scale) {
                return;
            }
            let feasible = (0..m).all(|i| a[i].dot(&y) + b[i] >= -primal_tol(&a[i], b[i], &y));
            if !feasible {
                return;
            }
            let objective = 0.5 * (&y - target).norm_squared();
            let better = match &best {
                None => true,
                Some(inc) => objective < inc.objective - 1e-14 * (1.0 + inc.objective),
            };
            if better {
                let mut lambda = vec![0.0; m];
                for (slot, &i) in set.iter().enumerate() {
                    lambda[i] = lam[slot].max(0.0);
                }
                best = Some(KktPoint { y, active: set.to_vec(), lambda, objective });
            }
        });
    }
    best
}

/// Minimizer with the rows in `set` held at equality; `None` if degenerate.
fn solve_equality(
    target: &DVector<f64>,
    a: &[DVector<f64>],
    b: &[f64],
    set: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    if set.is_empty() {
        return Some((target.clone(), Vec::new()));
    }
    let k = set.len();
    let gram = DMatrix::from_fn(k, k, |i, j| a[set[i]].dot(&a[set[j]]));
    let rhs = DVector::from_fn(k, |i, _| -(a[set[i]].dot(target) + b[set[i]]));
    let max_diag = (0..k).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let chol = gram.clone().cholesky()?;
    let l = chol.l();
    if (0..k).any(|i| l[(i, i)] * l[(i, i)] < 1e-12 * max_diag) {
        return None;
    }
    let lam = chol.solve(&rhs);
    let mut y = target.clone();
    for (slot, &i) in set.iter().enumerate() {
        y.axpy(lam[slot], &a[i], 1.0);
    }
    Some((y, lam.iter().copied().collect()))
}

fn kkt_residual(target: &DVector<f64>, a: &[DVector<f64>], b: &[f64], y: &DVector<f64>, lambda: &[f64]) -> f64 {
    let mut stationarity = y - target;
    for (ai, &li) in a.iter().zip(lambda) {
        stationarity.axpy(-li, ai, 1.0);
    }
    let mut worst = stationarity.norm();
    for ((ai, &bi), &li) in a.iter().zip(b).zip(lambda) {
        let g = ai.dot(y) + bi;
        worst = worst.max((-g).max(0.0)).max((-li).max(0.0)).max((li * g).abs());
    }
    worst
}

/// Solve with the default row bound.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution> {
    solve_qp_bounded(problem, MAX_ROWS)
}

pub fn solve_qp_bounded(problem: &QpProblem, max_rows: usize) -> Result<QpSolution> {
    let m = problem.rows.len();
    if m > max_rows {
        return Err(Error::Config(format!("QP has {m} rows; enumeration is limited to {max_rows}")));
    }
    if problem.rows.iter().any(|r| !r.is_finite()) || problem.target.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("QP data must be finite".into()));
    }
    let target = DVector::from_column_slice(problem.target.as_slice());
    let a: Vec<DVector<f64>> = problem.rows.iter().map(|r| DVector::from_column_slice(r.coeffs.as_slice())).collect();
    let b: Vec<f64> = problem.rows.iter().map(|r| r.offset).collect();

    if let Some(kkt) = enumerate(&target, &a, &b) {
        let residual = kkt_residual(&target, &a, &b, &kkt.y, &kkt.lambda);
        return Ok(QpSolution {
            nu: Vector4::from_column_slice(kkt.y.as_slice()),
            active_set: kkt.active,
            multipliers: kkt.lambda,
            status: QpStatus::Optimal,
            slack: 0.0,
            kkt_residual: residual,
        });
    }

    // scaled slack σ = √W s turns the penalty into a unit-metric term
    let root_w = SLACK_WEIGHT.sqrt();
    let target5 = DVector::from_fn(5, |i, _| if i < 4 { problem.target[i] } else { 0.0 });
    let mut a5: Vec<DVector<f64>> = a
        .iter()
        .map(|ai| DVector::from_fn(5, |i, _| if i < 4 { ai[i] } else { 1.0 / root_w }))
        .collect();
    let mut b5 = b.clone();
    a5.push(DVector::from_fn(5, |i, _| if i == 4 { 1.0 } else { 0.0 }));
    b5.push(0.0);
    match enumerate(&target5, &a5, &b5) {
        Some(kkt) => {
            let residual = kkt_residual(&target5, &a5, &b5, &kkt.y, &kkt.lambda);
            Ok(QpSolution {
                nu: Vector4::new(kkt.y[0], kkt.y[1], kkt.y[2], kkt.y[3]),
                active_set: kkt.active.into_iter().filter(|&i| i < m).collect(),
                multipliers: kkt.lambda[..m].to_vec(),
                status: QpStatus::Relaxed,
                slack: kkt.y[4] / root_w,
                kkt_residual: residual,
            })
        }
        None => Ok(QpSolution {
            nu: problem.target,
            active_set: Vec::new(),
            multipliers: vec![0.0; m],
            status: QpStatus::Infeasible,
            slack: f64::INFINITY,
            kkt_residual: f64::INFINITY,
        }),
    }
}

/// Output of one filter evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub input: WrenchRateInput,
    pub solution: QpSolution,
    pub barriers: BarrierSnapshot,
    pub rows: [AffineConstraintRow; 4],
}

/// Assemble the four safety rows at `x` and project `nominal` onto them.
pub fn filter(
    x: &AugmentedState,
    nominal: &WrenchRateInput,
    cfg: &SafetyConfig,
    params: &VehicleParams,
) -> Result<FilterOutput> {
    let rows = constraint_rows(x, cfg, params)?;
    let barriers = snapshot(x, cfg, params)?;
    let solution = solve_qp(&QpProblem { target: nominal.to_vector(), rows: rows.to_vec() })?;
    Ok(FilterOutput { input: WrenchRateInput::from_vector(&solution.nu), solution, barriers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::BarrierFamily;

    fn row(c: [f64; 4], d: f64) -> AffineConstraintRow {
        AffineConstraintRow { coeffs: Vector4::from(c), offset: d, family: BarrierFamily::Position }
    }

    #[test]
    fn subsets_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut count = 0;
        for_each_subset(4, 0, |_| count += 1);
        assert_eq!(count, 1);
        for_each_subset(2, 3, |_| panic!("no subsets"));
    }

    #[test]
    fn feasible_target_is_returned_unchanged() {
        let t = Vector4::new(1.0, -2.0, 0.5, 0.0);
        let p = QpProblem { target: t, rows: vec![row([1.0, 0.0, 0.0, 0.0], 0.0), row([0.0, -1.0, 0.0, 0.0], 5.0)] };
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.nu, t);
        assert!(s.active_set.is_empty());
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn single_violated_row_is_a_projection() {
        let t = Vector4::new(1.0, 2.0, -1.0, 0.5);
        let c = Vector4::new(0.3, -1.0, 2.0, 0.1);
        let d = -1.0;
        let s = solve_qp(&QpProblem { target: t, rows: vec![row(c.into(), d)] }).unwrap();
        let expected = t - c * ((c.dot(&t) + d) / c.norm_squared());
        assert!((s.nu - expected).norm() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn contradictory_rows_are_relaxed() {
        // ν₀ ≥ 1 and ν₀ ≤ −1
        let p = QpProblem {
            target: Vector4::zeros(),
            rows: vec![row([1.0, 0.0, 0.0, 0.0], -1.0), row([-1.0, 0.0, 0.0, 0.0], -1.0)],
        };
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!((s.slack - 1.0).abs() < 1e-4, "{}", s.slack);
        assert!(s.nu.norm() < 1e-6);
    }

    #[test]
    fn too_many_rows_is_an_error() {
        let p = QpProblem { target: Vector4::zeros(), rows: vec![row([1.0, 0.0, 0.0, 0.0], 1.0); 3] };
        assert!(solve_qp_bounded(&p, 2).is_err());
    }

    #[test]
    fn duplicate_rows_are_handled() {
        let r = row([1.0, 1.0, 0.0, 0.0], -3.0);
        let p = QpProblem { target: Vector4::zeros(), rows: vec![r, r, r] };
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.nu - Vector4::new(1.5, 1.5, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
    }
}
