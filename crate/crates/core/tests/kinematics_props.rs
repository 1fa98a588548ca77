use proptest::prelude::*;
use veloq_core::kinematics::{make_rest_to_rest_move, rest_to_rest_jerk, zone_transfer_cost, Trajectory};
use veloq_core::vec2::Vec2;

#[derive(Debug, Clone)]
enum Piece {
    Cruise(f64),
    Ramp(f64, f64),
    Move(f64, f64, f64),
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        (1e-6..5e-5f64).prop_map(Piece::Cruise),
        (-0.3..0.3f64, -0.3..0.3f64).prop_map(|(x, y)| Piece::Ramp(x, y)),
        (-2e-5..2e-5f64, -2e-5..2e-5f64, 5e-6..1e-4f64).prop_map(|(x, y, t)| Piece::Move(x, y, t)),
    ]
}

fn build(pieces: &[Piece], jerk: f64) -> Trajectory<f64> {
    let mut t = Trajectory::at_rest("p", 0.0, Vec2::new(1e-6, -2e-6));
    for p in pieces {
        match *p {
            Piece::Cruise(d) => t.append_cruise(d).unwrap(),
            Piece::Ramp(x, y) => t.append_velocity_ramp(Vec2::new(x, y), jerk).unwrap(),
            Piece::Move(x, y, d) => t.append_move(Vec2::new(x, y), d).unwrap(),
        };
    }
    t
}

proptest! {
    #[test]
    fn segments_join_continuously(pieces in prop::collection::vec(piece(), 1..8), jerk in 1e7..1e9f64) {
        let t = build(&pieces, jerk);
        for w in t.segments.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!((a.end_time() - b.t0).abs() <= 1e-15);
            let (xa, xb) = (a.position(a.duration), b.position(0.0));
            let (va, vb) = (a.velocity(a.duration), b.velocity(0.0));
            prop_assert!((xa - xb).norm() <= 1e-15 + 1e-12 * xa.norm());
            prop_assert!((va - vb).norm() <= 1e-12 * (1.0 + va.norm()));
        }
    }

    #[test]
    fn ramps_respect_their_jerk(dx in -0.5..0.5f64, dy in -0.5..0.5f64, jerk in 1e7..1e9f64) {
        prop_assume!(dx.hypot(dy) > 1e-6);
        let mut t = Trajectory::at_rest("r", 0.0, Vec2::zero());
        t.append_velocity_ramp(Vec2::new(dx, dy), jerk).unwrap();
        let seg = t.segments.last().unwrap();
        prop_assert!((seg.jerk().norm() / jerk - 1.0).abs() < 1e-9);
        // ends on the new velocity with zero acceleration
        prop_assert!((seg.velocity(seg.duration) - Vec2::new(dx, dy)).norm() < 1e-12);
        prop_assert!(seg.acceleration(seg.duration).norm() < 1e-9 * jerk * seg.duration);
    }

    #[test]
    fn rest_to_rest_move_is_time_symmetric(d in -1e-4..1e-4f64, dur in 1e-6..1e-3f64, s in 0.0..1.0f64) {
        let t = make_rest_to_rest_move(d, dur).unwrap();
        let fwd = t.sample(s * dur);
        let back = t.sample((1.0 - s) * dur);
        prop_assert!((fwd.x.x + back.x.x - d).abs() <= 1e-12 * d.abs().max(1e-12));
        prop_assert!((fwd.v.x - back.v.x).abs() <= 1e-9 * (d / dur).abs().max(1e-12));
    }

    #[test]
    fn jerk_and_transfer_scaling(d in 1e-7..1e-4f64, dur in 1e-6..1e-3f64, k in 0.1..10.0f64) {
        let j = rest_to_rest_jerk(d, dur).unwrap();
        prop_assert!((rest_to_rest_jerk(k * d, dur).unwrap() / (k * j) - 1.0).abs() < 1e-12);
        prop_assert!((rest_to_rest_jerk(d, k * dur).unwrap() * k.powi(3) / j - 1.0).abs() < 1e-12);
        // transfer time ∝ √dv, distance ∝ dv^{3/2}
        let (t1, x1) = zone_transfer_cost(d * 1e3, 1.5e8).unwrap();
        let (t2, x2) = zone_transfer_cost(k * d * 1e3, 1.5e8).unwrap();
        prop_assert!((t2 / t1 - k.sqrt()).abs() < 1e-9 * k.sqrt());
        prop_assert!((x2 / x1 - k.powf(1.5)).abs() < 1e-9 * k.powf(1.5));
    }
}

#[test]
fn single_precision_trajectory_agrees() {
    let t32 = make_rest_to_rest_move(4.3e-6f32, 2e-5).unwrap();
    let t64 = make_rest_to_rest_move(4.3e-6f64, 2e-5).unwrap();
    for i in 0..=10 {
        let s = 2e-5 * i as f64 / 10.0;
        let a = t32.sample(s as f32).x.x as f64;
        let b = t64.sample(s).x.x;
        assert!((a - b).abs() < 1e-11, "{a} vs {b}");
    }
}
