use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use veloq_core::pulsephysics::{
    evolve_two_level_with, excitation_probability, spectator_pi_pulse_infidelity, two_level_propagator, EvolveOptions, TwoLevelState,
};
use veloq_core::{LaserField, Mat2, Trajectory, Vec2};

fn rabi_oracle(rabi: f64, t: f64, delta: f64) -> f64 {
    let w = (rabi * rabi + delta * delta).sqrt();
    (rabi / w).powi(2) * (w * t / 2.0).sin().powi(2)
}

fn field(rabi_khz: f64, angle: f64, detuning_khz: f64) -> LaserField {
    let rabi = TAU * 1e3 * rabi_khz;
    LaserField::new(698e-9, Vec2::new(angle.cos(), angle.sin()), rabi)
        .unwrap()
        .with_detuning(TAU * 1e3 * detuning_khz)
        .with_envelope(0.0, PI / rabi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagators_are_unitary(rabi in 5.0..200.0f64, angle in 0.0..TAU, det in -300.0..300.0f64, d in -5e-6..5e-6f64) {
        let f = field(rabi, angle, det);
        let end = f.envelope.end();
        let mut traj = Trajectory::at_rest("a", 0.0, Vec2::zero());
        traj.append_move(Vec2::new(d, 0.5 * d), end).unwrap();
        let u = two_level_propagator(&f, &traj, 0.0, end, EvolveOptions::default()).unwrap();
        prop_assert!((u.adjoint() * u).max_abs_diff(&Mat2::identity()) < 1e-10);
    }

    /// A moving atom sees the lab detuning shifted by the Doppler term.
    #[test]
    fn moving_frame_matches_doppler_shifted_lineshape(rabi in 5.0..100.0f64, angle in 0.0..TAU, det in -100.0..100.0f64, vx in -0.1..0.1f64, vy in -0.1..0.1f64) {
        let f = field(rabi, angle, det);
        let v = Vec2::new(vx, vy);
        let p = excitation_probability(&f, v).unwrap();
        let delta = f.detuning - f.k.dot(v);
        let oracle = rabi_oracle(f.rabi, f.envelope.duration, delta);
        prop_assert!((p - oracle).abs() < 1e-6, "{} vs {}", p, oracle);
    }

    #[test]
    fn spectator_law_matches_oracle(x in 0.0..10.0f64) {
        let s = (1.0 + 4.0 * x * x).sqrt();
        let oracle = (PI / 2.0 * s).sin().powi(2) / (s * s);
        prop_assert!((spectator_pi_pulse_infidelity(x).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn step_halving_converges(rabi in 5.0..100.0f64, det in -50.0..50.0f64, d in 1e-7..2e-6f64) {
        let f = field(rabi, 0.0, det);
        let end = f.envelope.end();
        let mut traj = Trajectory::at_rest("a", 0.0, Vec2::zero());
        traj.append_move(Vec2::new(d, 0.0), end).unwrap();
        let run = |refine: f64| evolve_two_level_with(&f, &traj, TwoLevelState::ground(), 0.0, end, EvolveOptions { refine }).unwrap();
        let dist = |a: &TwoLevelState<f64>, b: &TwoLevelState<f64>| (a.g - b.g).norm().max((a.e - b.e).norm());
        let reference = run(8.0);
        let (coarse, fine) = (dist(&run(1.0), &reference), dist(&run(2.0), &reference));
        prop_assert!(coarse < 1e-7, "default-step error {}", coarse);
        // fourth order: halving the step cuts the error about 16×
        prop_assert!(coarse < 1e-12 || coarse / fine > 8.0, "ratio {}", coarse / fine);
        prop_assert!((reference.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn resonant_pi_pulse_inverts() {
    let f = field(40.0, 0.0, 0.0);
    let p = excitation_probability(&f, Vec2::zero()).unwrap();
    assert!((p - 1.0).abs() < 1e-12);
}
