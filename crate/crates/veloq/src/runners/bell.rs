use anyhow::{bail, Result};
use serde_json::json;
use veloq_core::rydberg::{ideal_infidelity, simulate_cz};
use veloq_core::{PulseProfile, RydbergParams, Vec2};

use super::Context;
use crate::report::{num, Check, FigureOutput, Table};

const V_MAX: f64 = 1.2;
/// Velocity grid points per m/s.
const PER_MPS: f64 = 50.0;
const V_STEP: f64 = 1.0 / PER_MPS;

fn static_bell(profile: &PulseProfile, params: &RydbergParams) -> Result<f64> {
    Ok(simulate_cz(profile, params, Vec2::zero(), Vec2::zero())?.bell_fidelity)
}

/// Rydberg decay rate at which the static Bell fidelity equals `target`.
fn calibrate_decay(profile: &PulseProfile, params: &RydbergParams, target: f64) -> Result<f64> {
    let with = |g: f64| static_bell(profile, &RydbergParams { rydberg_decay: g, ..*params });
    if with(0.0)? < target {
        bail!("decay-free Bell fidelity is already below the target {target}");
    }
    let mut hi = 1e3;
    while with(hi)? > target {
        hi *= 2.0;
        if hi > 1e9 {
            bail!("no decay rate reaches the Bell target {target}");
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if with(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Index range of the first lobe on one branch: from v = 0 up to the first
/// local minimum of the fidelity.
fn first_lobe(f: &[f64]) -> usize {
    (1..f.len() - 1).find(|&i| f[i] <= f[i - 1] && f[i] < f[i + 1]).unwrap_or(f.len() - 1)
}

/// Time-optimal CZ: synthesis, fly-by Bell fidelity vs velocity and the
/// Rydberg decay calibration.
pub fn fig_s2(ctx: &Context) -> Result<FigureOutput> {
    let base = ctx.cfg.physics.rydberg();
    let profile = ctx.profile()?;
    let ideal = ideal_infidelity(profile, &base);
    let at_rest = simulate_cz(profile, &base, Vec2::zero(), Vec2::zero())?;
    let decay = calibrate_decay(profile, &base, ctx.cfg.noise.bell_target)?;
    let params = RydbergParams { rydberg_decay: decay, ..base };

    let n = (V_MAX * PER_MPS).round() as usize;
    let axis = base.k_uv.normalized();
    let fidelity = |v: f64| -> Result<f64> { Ok(simulate_cz(profile, &params, axis * v, Vec2::zero())?.bell_fidelity) };
    let pos: Vec<f64> = (0..=n).map(|i| fidelity(i as f64 / PER_MPS)).collect::<Result<_>>()?;
    let neg: Vec<f64> = (0..=n).map(|i| fidelity(-(i as f64) / PER_MPS)).collect::<Result<_>>()?;

    let mut t = Table::new(&["velocity_mps", "doppler_over_rabi", "bell_fidelity"])?;
    let k = base.k_uv.norm();
    for i in (1..=n).rev() {
        let v = -(i as f64) / PER_MPS;
        t.row([num(v), num(k * v / base.rabi), num(neg[i])])?;
    }
    for (i, f) in pos.iter().enumerate() {
        let v = i as f64 / PER_MPS;
        t.row([num(v), num(k * v / base.rabi), num(*f)])?;
    }

    let (lobe_p, lobe_n) = (first_lobe(&pos), first_lobe(&neg));
    let monotone = pos[..=lobe_p].windows(2).all(|w| w[1] <= w[0] + 1e-12) && neg[..=lobe_n].windows(2).all(|w| w[1] <= w[0] + 1e-12);
    // evenness on the slow part of the lobe, |k v|/Ω ≤ 0.1
    let slow = ((0.1 * base.rabi / k) / V_STEP).floor() as usize;
    let mut worst_even: f64 = 0.0;
    for i in 1..=slow.min(lobe_p).min(lobe_n) {
        let (a, b) = (1.0 - pos[i], 1.0 - neg[i]);
        worst_even = worst_even.max((a - b).abs() / a.max(b));
    }
    let v0 = fidelity(0.0)?;
    let flyby = fidelity(ctx.cfg.physics.flyby_velocity)?;

    let mut out = FigureOutput::new("figS2");
    out.tables.push(("figS2.csv".into(), t.finish()?));
    out.summary = json!({
        "duration_s": profile.duration_s,
        "duration_rabi_units": profile.duration_s * base.rabi,
        "phase_coeffs": profile.phase_coeffs,
        "z_correction_rad": profile.z_correction_rad,
        "ideal_infidelity": ideal,
        "static_gate_infidelity": at_rest.gate_infidelity,
        "rydberg_decay_per_s": decay,
        "static_bell_fidelity": v0,
        "flyby_bell_fidelity": flyby,
        "first_lobe_edge_mps": [-(lobe_n as f64) * V_STEP, lobe_p as f64 * V_STEP],
        "worst_evenness": worst_even,
    });
    out.checks.push(Check::new("ideal_infidelity", ideal < 1e-4 && 1.0 - at_rest.bell_fidelity < 1e-4, format!("ideal {ideal:.2e}, simulated {:.2e}", 1.0 - at_rest.bell_fidelity)));
    out.checks.push(Check::within("rest_equals_static", at_rest.gate_infidelity, ideal, 1e-6));
    out.checks.push(Check::within("decay_calibrated", v0, ctx.cfg.noise.bell_target, 1e-6));
    out.checks.push(Check::new("even_in_velocity", worst_even <= 0.1, format!("worst relative asymmetry {worst_even:.3} for |kv|/Ω ≤ 0.1")));
    out.checks.push(Check::new("first_lobe_monotone", monotone, format!("non-increasing on [{:.2}, {:.2}] m/s", -(lobe_n as f64) * V_STEP, lobe_p as f64 * V_STEP)));
    Ok(out)
}
