//! Single-atom light–matter dynamics for moving atoms.
//!
//! Conventions used throughout the crate:
//!
//! * In the laser's rotating frame a two-level atom at position `x(t)` sees
//!   `H/ħ = −δ_L |e⟩⟨e| + (Ω/2)(e^{+i(k·x + φ₀)} |e⟩⟨g| + h.c.)`.
//! * An atom moving with velocity `v` therefore sees the laser shifted by
//!   `−k·v` ([`doppler_detuning`]) and is resonant when `δ_L = k·v`.
//! * A resonant pulse of area `θ` on an atom at `x` is the rotation
//!   `R(θ, φ₀ + k·x) = exp(−iθ/2 (cos φ X + sin φ Y))` with `|g⟩ = |0⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kinematics::{MotionState, Trajectory};
use crate::qmath::{c, cis, Mat2, C};
use crate::scalar::{sinc, Real};
use crate::vec2::Vec2;

/// Clock transition wavelength (¹S₀ → ³P₀).
pub const LAMBDA_CLOCK: f64 = 698e-9;
/// Ytterbium clock wavelength, used for comparison curves.
pub const LAMBDA_YB_CLOCK: f64 = 578e-9;
/// Effective wavelength of the fine-structure Raman drive.
pub const LAMBDA_FS: f64 = 17.2e-6;
/// Default single-photon UV wavelength for Rydberg excitation from ³P₀.
pub const LAMBDA_UV: f64 = 317e-9;

/// Rectangular pulse window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Envelope<T> {
    pub start: T,
    pub duration: T,
}

impl<T: Real> Envelope<T> {
    pub fn end(&self) -> T {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LaserField<T> {
    /// Wavevector in rad/m.
    pub k: Vec2<T>,
    /// Rabi frequency Ω in rad/s.
    pub rabi: T,
    /// Lab-frame detuning δ_L from the stationary resonance, rad/s.
    pub detuning: T,
    pub phase0: T,
    pub envelope: Envelope<T>,
}

impl<T: Real> LaserField<T> {
    /// Field of wavelength `lambda` propagating along `direction`, resonant,
    /// with a π-pulse envelope starting at `t = 0`.
    pub fn new(lambda: T, direction: Vec2<T>, rabi: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(invalid("wavelength must be positive"));
        }
        if rabi < T::zero() {
            return Err(invalid("Rabi frequency must be non-negative"));
        }
        let dir = direction.normalized();
        if dir.norm() == T::zero() {
            return Err(invalid("propagation direction must be non-zero"));
        }
        let duration = if rabi > T::zero() { T::PI() / rabi } else { T::zero() };
        Ok(Self {
            k: dir * (T::two_pi() / lambda),
            rabi,
            detuning: T::zero(),
            phase0: T::zero(),
            envelope: Envelope { start: T::zero(), duration },
        })
    }

    /// Field with an explicit wavevector (used for effective multi-photon k).
    pub fn from_k(k: Vec2<T>, rabi: T) -> Self {
        let duration = if rabi > T::zero() { T::PI() / rabi } else { T::zero() };
        Self { k, rabi, detuning: T::zero(), phase0: T::zero(), envelope: Envelope { start: T::zero(), duration } }
    }

    pub fn with_detuning(mut self, detuning: T) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_phase(mut self, phase0: T) -> Self {
        self.phase0 = phase0;
        self
    }

    pub fn with_envelope(mut self, start: T, duration: T) -> Self {
        self.envelope = Envelope { start, duration };
        self
    }

    /// Envelope holding a pulse of area `angle` starting at `start`.
    pub fn with_area(mut self, start: T, angle: T) -> Self {
        let duration = if self.rabi > T::zero() { angle / self.rabi } else { T::zero() };
        self.envelope = Envelope { start, duration };
        self
    }

    pub fn wavelength(&self) -> T {
        T::two_pi() / self.k.norm()
    }

    /// Lab detuning that puts an atom with velocity `v` on resonance.
    pub fn resonant_detuning(&self, v: Vec2<T>) -> T {
        -doppler_detuning(self, v)
    }
}

/// One beam of a multi-photon transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamComponent {
    pub wavelength: f64,
    pub direction: Vec2<f64>,
    /// +1 for absorption, −1 for stimulated emission.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveKGeometry {
    pub components: Vec<BeamComponent>,
}

impl EffectiveKGeometry {
    /// ³P₀ → ¹S₀ readout/prep path: 689 nm (absorb) and 679 nm (emit) along
    /// the Raman axis x, 688 nm (absorb) launched along y.
    pub fn strontium_three_photon() -> Self {
        Self {
            components: vec![
                BeamComponent { wavelength: 689.4e-9, direction: Vec2::unit_x(), sign: 1 },
                BeamComponent { wavelength: 688.0e-9, direction: Vec2::unit_y(), sign: 1 },
                BeamComponent { wavelength: 679.3e-9, direction: Vec2::unit_x(), sign: -1 },
            ],
        }
    }

    pub fn k_eff(&self) -> Vec2<f64> {
        self.components.iter().fold(Vec2::zero(), |acc, b| {
            acc + b.direction.normalized() * (b.sign as f64 * std::f64::consts::TAU / b.wavelength)
        })
    }

    pub fn effective_wavelength(&self) -> f64 {
        std::f64::consts::TAU / self.k_eff().norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TwoLevelState<T> {
    pub g: C<T>,
    pub e: C<T>,
}

impl<T: Real> TwoLevelState<T> {
    pub fn ground() -> Self {
        Self { g: c(T::one(), T::zero()), e: c(T::zero(), T::zero()) }
    }

    pub fn excited() -> Self {
        Self { g: c(T::zero(), T::zero()), e: c(T::one(), T::zero()) }
    }

    pub fn excited_population(&self) -> T {
        self.e.norm_sqr()
    }

    pub fn norm(&self) -> T {
        (self.g.norm_sqr() + self.e.norm_sqr()).sqrt()
    }

    fn apply(self, u: &Mat2<T>) -> Self {
        let [g, e] = u.apply([self.g, self.e]);
        Self { g, e }
    }
}

/// Atom-frame frequency shift of the laser, `−k·v`.
pub fn doppler_detuning<T: Real>(field: &LaserField<T>, v: Vec2<T>) -> T {
    -field.k.dot(v)
}

/// Probability that a stationary atom is flipped by a π-pulse addressed to a
/// target that travels `d` relative to it during the pulse:
/// `I = π²/4 · sinc²((π/2)√(1 + (2d/λ)²))`.
pub fn spectator_pi_pulse_infidelity<T: Real>(d_over_lambda: T) -> Result<T> {
    if !(d_over_lambda >= T::zero()) {
        return Err(invalid("d/λ must be non-negative"));
    }
    let x = T::lit(2.0) * d_over_lambda;
    let s = sinc(T::FRAC_PI_2() * (T::one() + x * x).sqrt());
    Ok(T::PI() * T::PI() / T::lit(4.0) * s * s)
}

/// The `k`-th velocity at which a π-pulse of Rabi frequency `rabi` leaves
/// stationary atoms exactly unrotated: `√(4k²−1)·Ωλ/(2π)`.
pub fn zero_infidelity_velocity<T: Real>(rabi: T, lambda: T, order: u32) -> Result<T> {
    if order < 1 {
        return Err(invalid("zero order must be at least 1"));
    }
    if rabi < T::zero() || !(lambda > T::zero()) {
        return Err(invalid("Rabi frequency must be non-negative and wavelength positive"));
    }
    let k = T::lit(order as f64);
    Ok((T::lit(4.0) * k * k - T::one()).sqrt() * rabi * lambda / T::two_pi())
}

/// d/λ values of the spectator-infidelity zeros, `√(4k²−1)/2`.
pub fn spectator_zero(order: u32) -> f64 {
    let k = order as f64;
    (4.0 * k * k - 1.0).sqrt() / 2.0
}

/// Controls for [`evolve_two_level_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions<T> {
    /// Divides the default step; values above 1 refine the grid.
    pub refine: T,
}

impl<T: Real> Default for EvolveOptions<T> {
    fn default() -> Self {
        Self { refine: T::one() }
    }
}

/// Evolves `state` from `t0` to `t1` under `field` for an atom following `traj`.
pub fn evolve_two_level<T: Real>(
    field: &LaserField<T>,
    traj: &Trajectory<T>,
    state: TwoLevelState<T>,
    t0: T,
    t1: T,
) -> Result<TwoLevelState<T>> {
    evolve_two_level_with(field, traj, state, t0, t1, EvolveOptions::default())
}

/// Propagator of the same evolution, as a 2×2 unitary on (g, e).
pub fn two_level_propagator<T: Real>(
    field: &LaserField<T>,
    traj: &Trajectory<T>,
    t0: T,
    t1: T,
    opts: EvolveOptions<T>,
) -> Result<Mat2<T>> {
    if t1 < t0 {
        return Err(invalid("t1 must not precede t0"));
    }
    if !(opts.refine >= T::one()) {
        return Err(invalid("refinement factor must be at least 1"));
    }
    let mut u = Mat2::identity();
    let env = field.envelope;
    let on_start = env.start.max(t0);
    let on_end = env.end().min(t1);

    // free precession before, driven window, free precession after
    let free = |a: T, b: T| -> Mat2<T> {
        let dt = (b - a).max(T::zero());
        Mat2::diag(c(T::one(), T::zero()), cis(field.detuning * dt))
    };
    if on_end > on_start && field.rabi > T::zero() {
        u = free(t0, on_start);
        u = driven(field, traj, on_start, on_end, opts)? * u;
        u = free(on_end, t1) * u;
    } else {
        u = free(t0, t1) * u;
    }
    Ok(u)
}

/// Like [`evolve_two_level`] with explicit integrator options.
pub fn evolve_two_level_with<T: Real>(
    field: &LaserField<T>,
    traj: &Trajectory<T>,
    state: TwoLevelState<T>,
    t0: T,
    t1: T,
    opts: EvolveOptions<T>,
) -> Result<TwoLevelState<T>> {
    let u = two_level_propagator(field, traj, t0, t1, opts)?;
    Ok(state.apply(&u))
}

fn hamiltonian<T: Real>(field: &LaserField<T>, x: Vec2<T>) -> Mat2<T> {
    let half = field.rabi / T::lit(2.0);
    let psi = field.k.dot(x) + field.phase0;
    let up = cis(-psi) * half;
    Mat2::new(c(T::zero(), T::zero()), up, up.conj(), c(-field.detuning, T::zero()))
}

/// Fourth-order Magnus integration over the driven window.
fn driven<T: Real>(field: &LaserField<T>, traj: &Trajectory<T>, a: T, b: T, opts: EvolveOptions<T>) -> Result<Mat2<T>> {
    let duration = b - a;
    if duration < T::lit(1e-12) {
        return Err(Error::Numeric(format!("pulse window of {} s is below the integrator resolution", duration)));
    }
    // Largest atom-frame detuning over the window, from a coarse velocity scan.
    let kmag = field.k.norm();
    let mut vmax = T::zero();
    for i in 0..=32 {
        let t = a + duration * T::lit(i as f64 / 32.0);
        vmax = vmax.max(traj.sample(t).v.norm());
    }
    let dmax = field.detuning.abs() + kmag * vmax;
    let omega_gen = (field.rabi * field.rabi + dmax * dmax).sqrt();
    let h_max = (T::two_pi() / (T::lit(50.0) * omega_gen)).min(duration / T::lit(100.0)) / opts.refine;
    let n = (duration / h_max).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    if n > 200_000_000 {
        return Err(Error::Numeric("too many integration steps".into()));
    }
    let h = duration / T::from_usize_lossy(n);
    let g = T::lit(3f64.sqrt() / 6.0);
    let comm_coef = T::lit(3f64.sqrt() / 12.0);
    let mut u = Mat2::identity();
    for i in 0..n {
        let tm = a + h * (T::from_usize_lossy(i) + T::lit(0.5));
        let h1 = hamiltonian(field, traj.sample(tm - g * h).x);
        let h2 = hamiltonian(field, traj.sample(tm + g * h).x);
        // K = h/2 (H1 + H2) − i (√3/12) h² [H2, H1]
        let comm = (h2 * h1).sub(&(h1 * h2));
        let k = h1
            .add(&h2)
            .scale(c(h / T::lit(2.0), T::zero()))
            .add(&comm.scale(c(T::zero(), -comm_coef * h * h)));
        u = Mat2::exp_minus_i_hermitian(&k) * u;
    }
    Ok(u)
}

/// Trajectory of an atom at `x0` moving with constant `v` from `t = 0`.
pub fn constant_velocity<T: Real>(x0: Vec2<T>, v: Vec2<T>, until: T) -> Trajectory<T> {
    let mut traj = Trajectory::starting_at("atom", T::zero(), x0, v);
    traj.append_cruise(until).expect("non-negative cruise");
    traj
}

/// Excited population after the template pulse for an atom at constant `velocity`.
pub fn excitation_probability<T: Real>(field: &LaserField<T>, velocity: Vec2<T>) -> Result<T> {
    let env = field.envelope;
    let traj = constant_velocity(Vec2::zero(), velocity, env.end());
    let out = evolve_two_level(field, &traj, TwoLevelState::ground(), env.start, env.end())?;
    Ok(out.excited_population())
}

/// Rabi lineshape of a square pulse of length `t`, centred at `center`.
pub fn rabi_lineshape(rabi: f64, t: f64, delta: f64) -> f64 {
    let w = (rabi * rabi + delta * delta).sqrt();
    if w == 0.0 {
        return 0.0;
    }
    rabi * rabi / (w * w) * (w * t / 2.0).sin().powi(2)
}

/// Simulates excitation spectra over `detunings` for an atom at `velocity`
/// and returns the fitted line centre (rad/s, lab detuning).
pub fn spectroscopy_scan(template: &LaserField<f64>, velocity: Vec2<f64>, detunings: &[f64]) -> Result<f64> {
    if detunings.len() < 5 {
        return Err(invalid("spectroscopy scan needs at least 5 detunings"));
    }
    let pops: Vec<f64> = detunings
        .iter()
        .map(|d| excitation_probability(&template.with_detuning(*d), velocity))
        .collect::<Result<_>>()?;
    fit_line_center(template.rabi, template.envelope.duration, detunings, &pops)
}

/// Fits `A·L(δ − c)` with the square-pulse Rabi lineshape `L` and returns `c`.
pub fn fit_line_center(rabi: f64, t: f64, detunings: &[f64], pops: &[f64]) -> Result<f64> {
    let (imax, pmax) = pops
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, p)| if *p > bp { (i, *p) } else { (bi, bp) });
    if pmax < 0.1 || imax == 0 || imax == pops.len() - 1 {
        return Err(Error::FitFailure("no resonance inside the scanned range".into()));
    }
    // Gauss-Newton on (A, c) started from the grid maximum.
    let mut center = detunings[imax];
    let mut amp = pmax.max(1e-3);
    for _ in 0..100 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (d, p) in detunings.iter().zip(pops) {
            let l = rabi_lineshape(rabi, t, d - center);
            let hstep = 1e-6 * rabi;
            let dl = (rabi_lineshape(rabi, t, d - center - hstep) - rabi_lineshape(rabi, t, d - center + hstep)) / (2.0 * hstep);
            let jac = [l, amp * dl];
            let r = p - amp * l;
            for i in 0..2 {
                jtr[i] += jac[i] * r;
                for j in 0..2 {
                    jtj[i][j] += jac[i] * jac[j];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::FitFailure("degenerate lineshape fit".into()));
        }
        let da = (jtr[0] * jtj[1][1] - jtr[1] * jtj[0][1]) / det;
        let dc = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        amp += da;
        center += dc;
        if dc.abs() < 1e-12 * rabi && da.abs() < 1e-12 {
            break;
        }
    }
    if !center.is_finite() || center < detunings[0].min(detunings[detunings.len() - 1]) || center > detunings[0].max(detunings[detunings.len() - 1]) {
        return Err(Error::FitFailure("fitted centre outside the scan".into()));
    }
    Ok(center)
}

/// Phase `k_eff·dx` imprinted by displacing an atom by `dx`.
pub fn displacement_phase<T: Real>(k_eff: Vec2<T>, dx: Vec2<T>) -> T {
    k_eff.dot(dx)
}

/// Wavevector of the fine-structure Raman drive along the Raman axis x.
pub fn fs_raman_k() -> Vec2<f64> {
    Vec2::new(std::f64::consts::TAU / LAMBDA_FS, 0.0)
}

/// How atomic motion is treated when building a Raman pulse unitary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    /// Axis phase fixed by the position at the pulse centre.
    Frozen,
    /// Time-dependent integration over the pulse.
    FullIntegration,
}

/// Qubit rotation produced by a pulse of area `angle` starting at
/// `field.envelope.start` on an atom following `traj`.
pub fn raman_pulse_unitary<T: Real>(
    field: &LaserField<T>,
    traj: &Trajectory<T>,
    angle: T,
    policy: SnapshotPolicy,
) -> Result<Mat2<T>> {
    if !(angle > T::zero()) || angle > T::two_pi() + T::lit(1e-12) {
        return Err(invalid("pulse area must lie in (0, 2π]"));
    }
    if !(field.rabi > T::zero()) {
        return Err(invalid("Raman pulse needs a positive Rabi frequency"));
    }
    let duration = angle / field.rabi;
    let start = field.envelope.start;
    match policy {
        SnapshotPolicy::Frozen => {
            let centre: MotionState<T> = traj.sample(start + duration / T::lit(2.0));
            Ok(Mat2::rotation(angle, field.phase0 + field.k.dot(centre.x)))
        }
        SnapshotPolicy::FullIntegration => {
            let f = field.with_envelope(start, duration);
            two_level_propagator(&f, traj, start, start + duration, EvolveOptions::default())
        }
    }
}

/// Closed-form three-photon transfer with optional intermediate-state dephasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePhotonModel {
    pub geometry: EffectiveKGeometry,
    pub rabi: f64,
    /// Coherence decay rate (1/s) standing in for intermediate-state scattering.
    pub dephasing_rate: f64,
}

impl ThreePhotonModel {
    pub fn strontium(rabi: f64) -> Self {
        Self { geometry: EffectiveKGeometry::strontium_three_photon(), rabi, dephasing_rate: 0.0 }
    }

    pub fn field(&self) -> LaserField<f64> {
        LaserField::from_k(self.geometry.k_eff(), self.rabi)
    }

    /// Transfer probability of a π-pulse tuned to `detuning` for an atom at
    /// `velocity`. With dephasing, the coherent result relaxes towards half of
    /// the power-broadened Lorentzian weight.
    pub fn transfer_probability(&self, velocity: Vec2<f64>, detuning: f64) -> Result<f64> {
        let field = self.field().with_detuning(detuning);
        let coherent = excitation_probability(&field, velocity)?;
        if self.dephasing_rate == 0.0 {
            return Ok(coherent);
        }
        let t = field.envelope.duration;
        let delta = detuning + doppler_detuning(&field, velocity);
        let weight = self.rabi * self.rabi / (self.rabi * self.rabi + delta * delta);
        let keep = (-self.dephasing_rate * t).exp();
        Ok(keep * coherent + (1.0 - keep) * 0.5 * weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetParams {
    pub transfer_prob_per_pulse: f64,
    pub n_pulses: u32,
    /// Wait after each pulse, seconds (long compared with the decay time).
    pub wait: f64,
    pub decay_branching_to_ground: f64,
}

/// Ground-state transfer probability of the pulsed optical-pumping reset:
/// `1 − (1 − p·b)^n`.
pub fn dissipative_reset(params: &ResetParams) -> Result<f64> {
    let (p, b) = (params.transfer_prob_per_pulse, params.decay_branching_to_ground);
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&b) {
        return Err(invalid("reset probabilities must lie in [0, 1]"));
    }
    Ok(1.0 - (1.0 - p * b).powi(params.n_pulses as i32))
}

/// Sampled spectator curve over `[0, max]` (inclusive, `n ≥ 2` points).
pub fn spectator_curve(max_d_over_lambda: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 {
        return Err(invalid("curve needs at least two points"));
    }
    (0..n)
        .map(|i| {
            let x = max_d_over_lambda * i as f64 / (n - 1) as f64;
            Ok((x, spectator_pi_pulse_infidelity(x)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn clock(rabi: f64) -> LaserField<f64> {
        LaserField::new(LAMBDA_CLOCK, Vec2::unit_x(), rabi).unwrap()
    }

    #[test]
    fn doppler_shift_magnitudes() {
        let f = clock(TAU * 40e3);
        let shift = doppler_detuning(&f, Vec2::new(0.03, 0.0));
        assert_relative_eq!(shift.abs() / TAU, 0.03 / 698e-9, max_relative = 1e-12);
        assert_relative_eq!(shift.abs() / TAU, 42.98e3, max_relative = 1e-3);
        assert!(shift < 0.0, "moving away from the source is red shifted");
        assert_eq!(doppler_detuning(&f, Vec2::new(0.0, 0.5)), 0.0);
    }

    #[test]
    fn three_photon_shift_at_fine_tuned_velocity() {
        let geo = EffectiveKGeometry::strontium_three_photon();
        let f = LaserField::from_k(geo.k_eff(), TAU * 40e3);
        let shift = doppler_detuning(&f, Vec2::new(0.0, 0.052));
        assert_relative_eq!(shift.abs() / TAU, 75.6e3, max_relative = 2e-3);
        // the residual 689/679 wavevector along x stays small
        assert!(geo.k_eff().x.abs() < 0.03 * geo.k_eff().y.abs());
    }

    #[test]
    fn spectator_law_special_points() {
        assert_eq!(spectator_pi_pulse_infidelity(0.0).unwrap(), 1.0);
        assert!(spectator_pi_pulse_infidelity(3f64.sqrt() / 2.0).unwrap() < 1e-30);
        assert!(spectator_pi_pulse_infidelity(15f64.sqrt() / 2.0).unwrap() < 1e-30);
        assert!(spectator_pi_pulse_infidelity(-0.1).is_err());
        for i in 0..300 {
            let x = i as f64 * 0.01;
            let bound = 1.0 / (1.0 + 4.0 * x * x);
            assert!(spectator_pi_pulse_infidelity(x).unwrap() <= bound + 1e-15);
        }
    }

    #[test]
    fn first_zero_velocities() {
        let sr = zero_infidelity_velocity(TAU * 40e3, LAMBDA_CLOCK, 1).unwrap();
        assert_relative_eq!(sr, 0.0484, max_relative = 1e-3);
        let yb = zero_infidelity_velocity(TAU * 40e3, LAMBDA_YB_CLOCK, 1).unwrap();
        assert_relative_eq!(yb, 0.0400, max_relative = 2e-3);
        assert_eq!(zero_infidelity_velocity(0.0, LAMBDA_CLOCK, 1).unwrap(), 0.0);
        assert!(zero_infidelity_velocity(1.0, LAMBDA_CLOCK, 0).is_err());
    }

    #[test]
    fn resonant_pi_pulses() {
        let rabi = TAU * 40e3;
        let f = clock(rabi);
        assert!((excitation_probability(&f, Vec2::zero()).unwrap() - 1.0).abs() < 1e-6);
        let v = Vec2::new(0.03, 0.0);
        let moving = f.with_detuning(f.resonant_detuning(v));
        assert!((excitation_probability(&moving, v).unwrap() - 1.0).abs() < 1e-4);
        let detuned = f.with_detuning(3f64.sqrt() * rabi);
        assert!(excitation_probability(&detuned, Vec2::zero()).unwrap() < 1e-4);
    }

    #[test]
    fn short_window_is_numeric_error() {
        let f = clock(TAU * 40e3).with_envelope(0.0, 1e-13);
        let traj = constant_velocity(Vec2::zero(), Vec2::zero(), 1e-6);
        assert!(matches!(evolve_two_level(&f, &traj, TwoLevelState::ground(), 0.0, 1e-13), Err(Error::Numeric(_))));
        let out = evolve_two_level(&f, &traj, TwoLevelState::ground(), 0.0, 0.0).unwrap();
        assert_eq!(out, TwoLevelState::ground());
    }

    #[test]
    fn reset_arithmetic() {
        let p = |p, b, n| dissipative_reset(&ResetParams { transfer_prob_per_pulse: p, n_pulses: n, wait: 40e-6, decay_branching_to_ground: b }).unwrap();
        assert_relative_eq!(p(0.8, 1.0, 3), 0.992, max_relative = 1e-12);
        assert_eq!(p(1.0, 1.0, 1), 1.0);
        assert_relative_eq!(p(0.9, 1.0, 3), 0.999, max_relative = 1e-12);
    }

    #[test]
    fn raman_axes() {
        let k = fs_raman_k();
        let f = LaserField::from_k(k, TAU * 120e3);
        let at = |x: f64| constant_velocity(Vec2::new(x, 0.0), Vec2::zero(), 1e-3);
        let u = raman_pulse_unitary(&f, &at(0.0), PI, SnapshotPolicy::Frozen).unwrap();
        assert!(u.phase_insensitive_distance(&Mat2::pauli_x()) < 1e-12);
        let u = raman_pulse_unitary(&f, &at(LAMBDA_FS / 4.0), PI, SnapshotPolicy::Frozen).unwrap();
        assert!(u.phase_insensitive_distance(&Mat2::pauli_y()) < 1e-12);
        let full = raman_pulse_unitary(&f, &at(LAMBDA_FS / 4.0), PI, SnapshotPolicy::FullIntegration).unwrap();
        assert!(full.max_abs_diff(&u) < 1e-9);
        assert_relative_eq!(displacement_phase(k, Vec2::new(LAMBDA_FS / 8.0, 0.0)), PI / 4.0, max_relative = 1e-12);
        assert_eq!(displacement_phase(k, Vec2::new(0.0, 3e-6)), 0.0);
    }

    #[test]
    fn single_precision_pi_pulse() {
        let f = LaserField::<f32>::new(698e-9, Vec2::unit_x(), 2.0 * std::f32::consts::PI * 40e3).unwrap();
        let p = excitation_probability(&f, Vec2::zero()).unwrap();
        assert!((p - 1.0).abs() < 1e-4);
    }
}
