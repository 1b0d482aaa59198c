use nalgebra::{DVector, Matrix3, Vector3, Vector4};
use proptest::prelude::*;

use multicopter_cbf::barriers::*;
use multicopter_cbf::config::ScenarioConfig;
use multicopter_cbf::dynamics::*;
use multicopter_cbf::qp_filter::{solve_qp, QpProblem, QpStatus};

fn setup() -> (SafetyConfig, VehicleParams) {
    let c = ScenarioConfig::paper();
    let params = c.vehicle_params().unwrap();
    (c.safety_config(&params).unwrap(), params)
}

fn vec3(s: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-s..s, -s..s, -s..s).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn vec4(s: f64) -> impl Strategy<Value = Vector4<f64>> {
    (-s..s, -s..s, -s..s, -s..s).prop_map(|(a, b, c, d)| Vector4::new(a, b, c, d))
}

prop_compose! {
    fn state()(p in vec3(3.0), v in vec3(2.5), w in vec3(3.0),
               roll in -1.5..1.5f64, pitch in -1.4..1.4f64, yaw in -3.0..3.0f64,
               thrust in 0.3..2.0f64) -> AugmentedState {
        let (cfg, params) = setup();
        AugmentedState::new(cfg.p_center + p, v, rotation_from_euler_zyx(roll, pitch, yaw), w, thrust * params.weight())
    }
}

prop_compose! {
    fn problem()(y0 in vec4(1.0), target in vec4(3.0),
                 rows in prop::collection::vec((vec4(1.0), 0.01..0.5f64), 1..=4)) -> QpProblem {
        let rows = rows
            .into_iter()
            .map(|(c, slack)| AffineConstraintRow { coeffs: c, offset: -c.dot(&y0) + slack, family: BarrierFamily::Velocity })
            .collect();
        QpProblem { target, rows }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn qp_solution_is_feasible_and_stationary(p in problem()) {
        let s = solve_qp(&p).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!(s.kkt_residual <= 1e-9);
        for r in &p.rows {
            prop_assert!(r.evaluate(&s.nu) >= -1e-9);
        }
        // stationarity: ν − ν_nom = Σ λ_i c_i with λ ≥ 0
        let mut grad = s.nu - p.target;
        for (r, l) in p.rows.iter().zip(&s.multipliers) {
            prop_assert!(*l >= 0.0);
            grad -= r.coeffs * *l;
        }
        prop_assert!(grad.norm() <= 1e-9);
    }

    #[test]
    fn unconstrained_target_is_returned(target in vec4(3.0)) {
        let row = AffineConstraintRow { coeffs: Vector4::x(), offset: 10.0, family: BarrierFamily::AngularVelocity };
        let s = solve_qp(&QpProblem { target, rows: vec![row] }).unwrap();
        prop_assert!(s.active_set.is_empty());
        prop_assert!((s.nu - target).norm() <= 1e-12);
    }

    #[test]
    fn allocation_round_trips(thrust in 0.0..80.0f64, m in vec3(2.0)) {
        let (_, params) = setup();
        let w = Vector4::new(thrust, m.x, m.y, m.z);
        let back = effective_wrench(&allocate(&w, &params), &params);
        prop_assert!((back - w).norm() <= 1e-9 * (1.0 + w.norm()));
    }

    #[test]
    fn saturation_stays_in_bounds(u in prop::collection::vec(-20.0..40.0f64, 6)) {
        let (_, params) = setup();
        let sat = saturate(&DVector::from_vec(u.clone()), &params);
        prop_assert!(sat.rotor_thrusts.iter().all(|&t| (0.0..=params.rotor_max).contains(&t)));
        prop_assert_eq!(sat.saturated, u.iter().any(|&t| t < 0.0 || t > params.rotor_max));
    }

    #[test]
    fn orthonormalize_returns_nearby_rotation(roll in -3.0..3.0f64, pitch in -1.5..1.5f64, yaw in -3.0..3.0f64,
                                              noise in prop::array::uniform9(-1e-3..1e-3f64)) {
        let r = rotation_from_euler_zyx(roll, pitch, yaw);
        let q = orthonormalize(&(r + Matrix3::from_row_slice(&noise)));
        prop_assert!((q.transpose() * q - Matrix3::identity()).norm() <= 1e-12);
        prop_assert!((q.determinant() - 1.0).abs() <= 1e-12);
        prop_assert!((q - r).norm() <= 1e-2);
        prop_assert!((orthonormalize(&r) - r).norm() <= 1e-12);
    }

    #[test]
    fn euler_angles_round_trip(roll in -3.0..3.0f64, pitch in -1.5..1.5f64, yaw in -3.0..3.0f64) {
        let (a, b, c) = euler_zyx_from_rotation(&rotation_from_euler_zyx(roll, pitch, yaw));
        prop_assert!((a - roll).abs() < 1e-9 && (b - pitch).abs() < 1e-9 && (c - yaw).abs() < 1e-9);
    }

    #[test]
    fn composite_barriers_are_tighter(x in state()) {
        let (cfg, params) = setup();
        let hv = h_v(&x, &cfg, &params).unwrap();
        let hp = h_p(&x, &cfg, &params).unwrap();
        prop_assert!(hv <= h0_v(&x, &cfg) + 1e-12);
        prop_assert!(hp <= h0_p(&x, &cfg) + 1e-12);
    }

    #[test]
    fn rows_are_affine_in_the_input(x in state(), a in vec4(20.0), b in vec4(20.0), s in -2.0..2.0f64) {
        let (cfg, params) = setup();
        for row in constraint_rows(&x, &cfg, &params).unwrap() {
            let mixed = row.evaluate(&(a * s + b * (1.0 - s)));
            let blend = s * row.evaluate(&a) + (1.0 - s) * row.evaluate(&b);
            prop_assert!((mixed - blend).abs() <= 1e-9 * (1.0 + mixed.abs()));
        }
    }

    #[test]
    fn force_rate_matches_rotation_kinematics(x in state(), thrust_rate in -50.0..50.0f64) {
        // d/dt(−T R e3) with Ṙ = R [ω]ₓ
        let rdot = x.r * skew(&x.omega);
        let direct = -(rdot * Vector3::z()) * x.thrust - x.r * Vector3::z() * thrust_rate;
        let reformulated = reformulated_force_rate(&x, thrust_rate);
        prop_assert!((direct - reformulated).norm() <= 1e-9 * (1.0 + direct.norm()));
    }
}
