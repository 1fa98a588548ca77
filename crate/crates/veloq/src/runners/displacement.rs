use std::f64::consts::{FRAC_PI_2, TAU};

use anyhow::Result;
use serde_json::json;
use veloq_core::fit::{fit, fit_sinusoid_fixed_frequency, FitModel};
use veloq_core::pulsephysics::{raman_pulse_unitary, SnapshotPolicy};
use veloq_core::qmath::c;
use veloq_core::{LaserField, Mat2, Trajectory, Vec2};

use super::Context;
use crate::report::{num, Check, FigureOutput, Table};

const MOVE_TIME: f64 = 20e-6;
const JERK: f64 = 1.5e8;

fn scan_phases(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

fn excited(u: &Mat2) -> f64 {
    let zero = c(0.0, 0.0);
    u.apply([c(1.0, 0.0), zero])[1].norm_sqr()
}

/// Ramsey fringe: π/2, trajectory in between, π/2 with a scanned phase
/// starting at `t2`. Returns the excited population per scan phase.
fn ramsey(raman: &LaserField, traj: &Trajectory, t2: f64, phases: &[f64], policy: SnapshotPolicy) -> Result<Vec<f64>> {
    let first = raman_pulse_unitary(&raman.with_envelope(0.0, 0.0), traj, FRAC_PI_2, SnapshotPolicy::FullIntegration)?;
    phases
        .iter()
        .map(|&phi| {
            let f = raman.with_phase(phi).with_envelope(t2, 0.0);
            let second = raman_pulse_unitary(&f, traj, FRAC_PI_2, policy)?;
            Ok(excited(&(second * first)))
        })
        .collect()
}

/// Fringe phase and contrast from a fixed-frequency sinusoid fit.
fn fringe(phases: &[f64], pops: &[f64]) -> Result<(f64, f64)> {
    let r = fit_sinusoid_fixed_frequency(phases, pops, 1.0)?;
    Ok((r.params[2], 2.0 * r.params[0]))
}

fn unwrap(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let d = phases[i] - phases[i - 1];
        phases[i] -= TAU * (d / TAU).round();
    }
}

/// Phase imprinted by a rest-to-rest displacement between two Raman pulses.
pub fn fig3a(ctx: &Context) -> Result<FigureOutput> {
    let p = &ctx.cfg.physics;
    let rabi = TAU * p.rabi_raman_hz;
    let raman = LaserField::new(p.lambda_fs, Vec2::unit_x(), rabi)?;
    let t_half = FRAC_PI_2 / rabi;
    let phases = scan_phases(24);
    let displacements: Vec<f64> = (0..=16).map(|i| p.lambda_fs * 1.5 * i as f64 / 16.0).collect();

    let measure = |axis: Vec2| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(displacements.len());
        for &d in &displacements {
            let mut traj = Trajectory::at_rest("atom", 0.0, Vec2::zero());
            traj.append_cruise(t_half)?;
            if d > 0.0 {
                traj.append_move(axis * d, MOVE_TIME)?;
            } else {
                traj.append_cruise(MOVE_TIME)?;
            }
            traj.append_cruise(t_half)?;
            let pops = ramsey(&raman, &traj, t_half + MOVE_TIME, &phases, SnapshotPolicy::FullIntegration)?;
            out.push(fringe(&phases, &pops)?.0);
        }
        unwrap(&mut out);
        let first = out[0];
        out.iter_mut().for_each(|x| *x -= first);
        Ok(out)
    };
    let axial = measure(Vec2::unit_x())?;
    let perpendicular = measure(Vec2::unit_y())?;

    let k = TAU / p.lambda_fs;
    let slope = fit(FitModel::Linear, &displacements, &axial)?.params[0];
    let perp_slope = fit(FitModel::Linear, &displacements, &perpendicular)?.params[0];

    let mut t = Table::new(&["displacement_m", "phase_axial_rad", "phase_perpendicular_rad", "expected_rad"])?;
    for i in 0..displacements.len() {
        t.row([num(displacements[i]), num(axial[i]), num(perpendicular[i]), num(k * displacements[i])])?;
    }
    let mut out = FigureOutput::new("fig3a");
    out.tables.push(("fig3a.csv".into(), t.finish()?));
    out.summary = json!({
        "slope_rad_per_m": slope,
        "expected_rad_per_m": k,
        "perpendicular_slope_rad_per_m": perp_slope,
        "local_z_displacement_m": p.lambda_fs / 8.0,
    });
    out.checks.push(Check::relative("phase_slope", slope, k, 1e-3));
    out.checks.push(Check::within("perpendicular_phase", perp_slope / k, 0.0, 1e-4));
    Ok(out)
}

/// Ramsey contrast when the second pulse hits a moving atom.
pub fn fig3c(ctx: &Context) -> Result<FigureOutput> {
    let p = &ctx.cfg.physics;
    let rabi = TAU * p.rabi_raman_hz;
    let raman = LaserField::new(p.lambda_fs, Vec2::unit_x(), rabi)?;
    let t_half = FRAC_PI_2 / rabi;
    let phases = scan_phases(24);

    // π/2 at rest, ramp to v, cruise, π/2 while moving
    let moving = |v: f64| -> Result<(Trajectory, f64)> {
        let mut traj = Trajectory::at_rest("atom", 0.0, Vec2::zero());
        traj.append_cruise(t_half)?;
        traj.append_velocity_ramp(Vec2::new(v, 0.0), JERK)?;
        traj.append_cruise(5e-6)?;
        let t2 = traj.end_time();
        traj.append_cruise(2.0 * t_half)?;
        Ok((traj, t2))
    };

    let (static_traj, t_static) = moving(0.0)?;
    let stat = ramsey(&raman, &static_traj, t_static, &phases, SnapshotPolicy::FullIntegration)?;
    let (traj, t2) = moving(p.flyby_velocity)?;
    let full = ramsey(&raman, &traj, t2, &phases, SnapshotPolicy::FullIntegration)?;
    let frozen = ramsey(&raman, &traj, t2, &phases, SnapshotPolicy::Frozen)?;
    let (_, c_static) = fringe(&phases, &stat)?;
    let (_, c_full) = fringe(&phases, &full)?;
    let (_, c_frozen) = fringe(&phases, &frozen)?;
    let ratio = c_full / c_static;
    let frozen_gap = full.iter().zip(&frozen).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut t = Table::new(&["scan_phase_rad", "static", "moving_full", "moving_frozen"])?;
    for i in 0..phases.len() {
        t.row([num(phases[i]), num(stat[i]), num(full[i]), num(frozen[i])])?;
    }
    let mut sweep = Table::new(&["velocity_mps", "contrast"])?;
    for v in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
        let (tr, t2) = moving(v)?;
        let pops = ramsey(&raman, &tr, t2, &phases, SnapshotPolicy::FullIntegration)?;
        sweep.row([num(v), num(fringe(&phases, &pops)?.1)])?;
    }

    let mut out = FigureOutput::new("fig3c");
    out.tables.push(("fig3c.csv".into(), t.finish()?));
    out.tables.push(("fig3c_contrast.csv".into(), sweep.finish()?));
    out.summary = json!({
        "velocity_mps": p.flyby_velocity,
        "doppler_over_rabi": TAU / p.lambda_fs * p.flyby_velocity / rabi,
        "contrast_static": c_static,
        "contrast_moving": c_full,
        "contrast_frozen": c_frozen,
        "contrast_ratio": ratio,
        "max_frozen_vs_full": frozen_gap,
    });
    out.checks.push(Check::new("contrast_ratio", ratio >= 0.99, format!("moving/static contrast {ratio:.5} (need ≥ 0.99)")));
    out.checks.push(Check::within("frozen_vs_full", frozen_gap, 0.0, 0.01));
    Ok(out)
}
