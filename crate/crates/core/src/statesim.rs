//! Monte-Carlo state-vector simulation with per-atom loss and leakage flags.
//!
//! Qubit `q` is bit `q` of the amplitude index. Atoms outside the qubit
//! manifold (never prepared, leaked, lost or already measured) keep their bit
//! in the state vector untouched, which is equivalent to tracing them out as
//! long as no coherent operation acts on them.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Basis, CircuitIR, Destination, Op, PrepMethod};
use crate::error::{invalid, Error, Result};
use crate::pauli::{Pauli, PauliString};
use crate::pulsephysics::fs_raman_k;
use crate::qmath::{Mat2, C};
use crate::rydberg::{simulate_cz, PulseProfile, RydbergParams};
use crate::scalar::Real;
use crate::vec2::Vec2;

pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomFlags {
    pub in_qubit_manifold: bool,
    pub lost: bool,
}

impl AtomFlags {
    pub fn active(&self) -> bool {
        self.in_qubit_manifold && !self.lost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumRegister<T> {
    n: usize,
    amplitudes: Vec<C<T>>,
    flags: Vec<AtomFlags>,
    pub rng_seed: u64,
}

impl<T: Real> QuantumRegister<T> {
    /// `n` atoms in |0…0⟩, all in the qubit manifold.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(invalid(format!("register size must be in 1..={MAX_QUBITS}, got {n}")));
        }
        let mut amplitudes = vec![C::new(T::zero(), T::zero()); 1 << n];
        amplitudes[0] = C::new(T::one(), T::zero());
        let flags = vec![AtomFlags { in_qubit_manifold: true, lost: false }; n];
        Ok(Self { n, amplitudes, flags, rng_seed: 0 })
    }

    /// Register in |0…0⟩ with every atom outside the qubit manifold.
    pub fn unprepared(n: usize) -> Result<Self> {
        let mut r = Self::new(n)?;
        for f in &mut r.flags {
            f.in_qubit_manifold = false;
        }
        Ok(r)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn flags(&self) -> &[AtomFlags] {
        &self.flags
    }

    pub fn flags_mut(&mut self) -> &mut [AtomFlags] {
        &mut self.flags
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr()).sqrt()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > T::lit(1e-300)) {
            return Err(Error::Numeric("state vector collapsed to zero norm".into()));
        }
        let inv = T::one() / n;
        for a in &mut self.amplitudes {
            *a = *a * inv;
        }
        Ok(())
    }

    fn check_index(&self, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(invalid(format!("atom {q} out of range for {} atoms", self.n)));
        }
        Ok(())
    }

    fn check_active(&self, q: usize) -> Result<()> {
        self.check_index(q)?;
        let f = self.flags[q];
        if f.lost {
            return Err(Error::Protocol(format!("gate on lost atom {q}")));
        }
        if !f.in_qubit_manifold {
            return Err(Error::Protocol(format!("gate on atom {q} outside the qubit manifold")));
        }
        Ok(())
    }

    pub fn apply_single_qubit(&mut self, targets: &[usize], u: &Mat2<T>) -> Result<()> {
        for &q in targets {
            self.check_active(q)?;
        }
        for &q in targets {
            self.apply_unchecked(q, u);
        }
        Ok(())
    }

    fn apply_unchecked(&mut self, q: usize, u: &Mat2<T>) {
        let bit = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let [a, b] = u.apply([self.amplitudes[i], self.amplitudes[i | bit]]);
                self.amplitudes[i] = a;
                self.amplitudes[i | bit] = b;
            }
        }
    }

    pub fn apply_pauli(&mut self, q: usize, p: Pauli) -> Result<()> {
        self.check_active(q)?;
        match p {
            Pauli::I => {}
            Pauli::X => self.apply_unchecked(q, &Mat2::pauli_x()),
            Pauli::Y => self.apply_unchecked(q, &Mat2::pauli_y()),
            Pauli::Z => self.apply_unchecked(q, &Mat2::pauli_z()),
        }
        Ok(())
    }

    /// Controlled-π phase on each pair.
    pub fn apply_cz(&mut self, pairs: &[(usize, usize)]) -> Result<()> {
        let mut seen = vec![false; self.n];
        for &(a, b) in pairs {
            self.check_index(a)?;
            self.check_index(b)?;
            if a == b || seen[a] || seen[b] {
                return Err(invalid("cz pairs must be disjoint"));
            }
            seen[a] = true;
            seen[b] = true;
        }
        for &(a, b) in pairs {
            self.check_active(a)?;
            self.check_active(b)?;
        }
        for &(a, b) in pairs {
            let mask = (1usize << a) | (1usize << b);
            for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                if i & mask == mask {
                    *amp = -*amp;
                }
            }
        }
        Ok(())
    }

    /// Multiplies by `diag[2·bit(a) + bit(b)]` without renormalizing.
    fn apply_pair_diagonal(&mut self, a: usize, b: usize, diag: &[C<T>; 4]) {
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            let k = 2 * ((i >> a) & 1) + ((i >> b) & 1);
            *amp = *amp * diag[k];
        }
    }

    /// Probability that atom `q` reads 1 in Z.
    pub fn probability_one(&self, q: usize) -> T {
        let bit = 1usize << q;
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr())
    }

    /// Projects atom `q` onto `value` and renormalizes.
    pub fn collapse(&mut self, q: usize, value: bool) -> Result<()> {
        self.check_index(q)?;
        let bit = 1usize << q;
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if (i & bit != 0) != value {
                *amp = C::new(T::zero(), T::zero());
            }
        }
        self.renormalize()
    }

    /// Samples atom `q` in Z, collapsing the state.
    fn sample_z<R: Rng>(&mut self, q: usize, rng: &mut R) -> Result<bool> {
        let p1 = self.probability_one(q).as_f64();
        let one = rng.random::<f64>() < p1;
        self.collapse(q, one)?;
        Ok(one)
    }

    /// Brings atom `q` into the manifold in |0⟩, discarding whatever it held.
    fn prepare_zero<R: Rng>(&mut self, q: usize, rng: &mut R) -> Result<()> {
        if self.sample_z(q, rng)? {
            self.apply_unchecked(q, &Mat2::pauli_x());
        }
        self.flags[q].in_qubit_manifold = true;
        Ok(())
    }

    /// Velocity-selective transfer: each target enters the manifold in |0⟩
    /// with probability `transfer_fidelity`; failures stay out and are visible
    /// in imaging. Every other active atom is a spectator and leaves the
    /// manifold with probability `spectator_infidelity`.
    pub fn velocity_selective_transfer<R: Rng>(
        &mut self,
        targets: &[usize],
        transfer_fidelity: f64,
        spectator_infidelity: f64,
        rng: &mut R,
    ) -> Result<Vec<bool>> {
        check_prob(transfer_fidelity, "transfer fidelity")?;
        check_prob(spectator_infidelity, "spectator infidelity")?;
        for &q in targets {
            self.check_index(q)?;
        }
        let mut is_target = vec![false; self.n];
        for &q in targets {
            is_target[q] = true;
        }
        for q in 0..self.n {
            if !is_target[q] && self.flags[q].active() && rng.random::<f64>() < spectator_infidelity {
                self.flags[q].in_qubit_manifold = false;
            }
        }
        let mut ok = Vec::with_capacity(targets.len());
        for &q in targets {
            let success = !self.flags[q].lost && rng.random::<f64>() < transfer_fidelity;
            if success {
                self.prepare_zero(q, rng)?;
            } else {
                self.flags[q].in_qubit_manifold = false;
            }
            ok.push(success);
        }
        Ok(ok)
    }

    /// Projective measurement; absent atoms report [`Outcome::Lost`]. Measured
    /// atoms leave the qubit manifold.
    pub fn measure<R: Rng>(&mut self, targets: &[usize], basis: Basis, rng: &mut R) -> Result<Vec<Outcome>> {
        for &q in targets {
            self.check_index(q)?;
        }
        let mut out = Vec::with_capacity(targets.len());
        for &q in targets {
            if !self.flags[q].active() {
                out.push(Outcome::Lost);
                continue;
            }
            if basis == Basis::X {
                self.apply_unchecked(q, &Mat2::hadamard());
            }
            let one = self.sample_z(q, rng)?;
            self.flags[q].in_qubit_manifold = false;
            out.push(if one { Outcome::One } else { Outcome::Zero });
        }
        Ok(out)
    }

    /// Exact `⟨ψ|P|ψ⟩`. Every atom in the support must be active.
    pub fn expectation(&self, p: &PauliString) -> Result<T> {
        if p.len() != self.n {
            return Err(invalid(format!("Pauli string has {} sites for {} atoms", p.len(), self.n)));
        }
        let sign = T::lit(p.sign()?);
        for q in p.support() {
            self.check_active(q)?;
        }
        let (xm, zm) = p.masks();
        let (xm, zm) = (xm as usize, zm as usize);
        let n_y = (xm & zm).count_ones();
        // i^{n_Y}
        let iy = match n_y % 4 {
            0 => C::new(T::one(), T::zero()),
            1 => C::new(T::zero(), T::one()),
            2 => C::new(-T::one(), T::zero()),
            _ => C::new(T::zero(), -T::one()),
        };
        let mut acc = C::new(T::zero(), T::zero());
        for (b, amp) in self.amplitudes.iter().enumerate() {
            let s = if (b & zm).count_ones() % 2 == 0 { T::one() } else { -T::one() };
            acc = acc + self.amplitudes[b ^ xm].conj() * *amp * s;
        }
        Ok((acc * iy).re * sign)
    }

    /// Overlap `|⟨φ|ψ⟩|²` with another amplitude vector.
    pub fn overlap(&self, other: &[C<T>]) -> Result<T> {
        if other.len() != self.amplitudes.len() {
            return Err(invalid("state dimensions differ"));
        }
        let ip = self.amplitudes.iter().zip(other).fold(C::new(T::zero(), T::zero()), |acc, (a, b)| acc + b.conj() * *a);
        Ok(ip.norm_sqr())
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("{what} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Zero,
    One,
    Lost,
}

impl Outcome {
    /// Bit read by imaging without state-resolved detection, where an empty
    /// site looks like the dark state 1.
    pub fn raw_bit(self) -> bool {
        !matches!(self, Outcome::Zero)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Zero => "0",
            Outcome::One => "1",
            Outcome::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Depolarizing1q,
    Depolarizing2q,
    Dephasing,
    Loss,
    ReadoutFlip,
    Leakage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttachPoint {
    SingleQubit,
    Cz,
    Flyby,
    Prep,
    Measure,
    Move,
    Reset,
}

/// One stochastic channel. Depolarizing channels pick a uniformly random
/// Pauli (identity included) with probability `strength`; `Leakage` on a
/// gate pair removes one of the two atoms, `Loss` acts on each atom
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    pub kind: NoiseKind,
    pub strength: f64,
    pub attach: AttachPoint,
}

impl NoiseChannel {
    pub fn new(kind: NoiseKind, strength: f64, attach: AttachPoint) -> Result<Self> {
        check_prob(strength, "noise strength")?;
        Ok(Self { kind, strength, attach })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub channels: Vec<NoiseChannel>,
    /// Success probability of velocity-selective transfers (prep and readout).
    pub transfer_fidelity: f64,
    /// Manifold-flip probability of stationary atoms per selective pulse.
    pub spectator_infidelity: f64,
    /// Probability that a reset returns the atom to the manifold.
    pub reset_fidelity: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self { channels: Vec::new(), transfer_fidelity: 1.0, spectator_infidelity: 0.0, reset_fidelity: 1.0 }
    }

    pub fn with_channel(mut self, kind: NoiseKind, strength: f64, attach: AttachPoint) -> Result<Self> {
        self.channels.push(NoiseChannel::new(kind, strength, attach)?);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.channels {
            check_prob(c.strength, "noise strength")?;
        }
        check_prob(self.transfer_fidelity, "transfer fidelity")?;
        check_prob(self.spectator_infidelity, "spectator infidelity")?;
        check_prob(self.reset_fidelity, "reset fidelity")
    }

    pub fn is_ideal(&self) -> bool {
        self.channels.iter().all(|c| c.strength == 0.0)
            && self.transfer_fidelity == 1.0
            && self.spectator_infidelity == 0.0
            && self.reset_fidelity == 1.0
    }

    fn at(&self, attach: AttachPoint) -> impl Iterator<Item = &NoiseChannel> {
        self.channels.iter().filter(move |c| c.attach == attach && c.strength > 0.0)
    }
}

/// Rydberg model used to turn fly-by passes into gate diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlybyModel {
    pub profile: PulseProfile,
    pub params: RydbergParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Raman wavevector that converts displacements into axis phases.
    pub k_raman: Vec2<f64>,
    /// Without a model, fly-by gates are ideal CZs.
    pub flyby: Option<FlybyModel>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { k_raman: fs_raman_k(), flyby: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub shot: usize,
    /// Last outcome per atom; `None` if never measured.
    pub outcomes: Vec<Option<Outcome>>,
    pub kept: bool,
}

impl MeasurementRecord {
    pub fn outcome(&self, atom: usize) -> Option<Outcome> {
        self.outcomes.get(atom).copied().flatten()
    }

    /// Product of ±1 eigenvalues over `atoms`, or `None` if any is lost or unmeasured.
    pub fn parity(&self, atoms: &[usize]) -> Option<f64> {
        let mut s = 1.0;
        for &a in atoms {
            match self.outcome(a)? {
                Outcome::Zero => {}
                Outcome::One => s = -s,
                Outcome::Lost => return None,
            }
        }
        Some(s)
    }

    /// As [`Self::parity`] but reading lost atoms as 1.
    pub fn raw_parity(&self, atoms: &[usize]) -> Option<f64> {
        let mut s = 1.0;
        for &a in atoms {
            if self.outcome(a)?.raw_bit() {
                s = -s;
            }
        }
        Some(s)
    }
}

type Diag = [C<f64>; 4];

struct Executor<'a> {
    ir: &'a CircuitIR,
    noise: &'a NoiseModel,
    cfg: &'a ExecConfig,
    flyby: HashMap<u64, Diag>,
}

impl<'a> Executor<'a> {
    fn new(ir: &'a CircuitIR, noise: &'a NoiseModel, cfg: &'a ExecConfig) -> Result<Self> {
        ir.validate()?;
        noise.validate()?;
        if ir.n_atoms > MAX_QUBITS {
            return Err(invalid(format!("circuit has {} atoms, at most {MAX_QUBITS} supported", ir.n_atoms)));
        }
        let mut flyby = HashMap::new();
        if let Some(model) = &cfg.flyby {
            let dir = model.params.k_uv.normalized();
            for op in &ir.ops {
                if let Op::FlybyCz { v, .. } = op {
                    if let std::collections::hash_map::Entry::Vacant(e) = flyby.entry(v.to_bits()) {
                        let g = simulate_cz(&model.profile, &model.params, dir * *v, Vec2::zero())?;
                        e.insert(g.diagonal);
                    }
                }
            }
        }
        Ok(Self { ir, noise, cfg, flyby })
    }

    fn run_shot(&self, seed: u64, shot: usize) -> Result<(MeasurementRecord, QuantumRegister<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shot as u64);
        let n = self.ir.n_atoms;
        let mut reg = QuantumRegister::<f64>::unprepared(n)?;
        reg.rng_seed = seed;
        let mut offsets = vec![Vec2::<f64>::zero(); n];
        let mut outcomes = vec![None; n];
        for op in &self.ir.ops {
            match op {
                Op::Prep { targets, method } => {
                    match method {
                        PrepMethod::Global => {
                            for &q in targets {
                                if !reg.flags[q].lost {
                                    reg.prepare_zero(q, &mut rng)?;
                                }
                            }
                        }
                        PrepMethod::VelocitySelective => {
                            reg.velocity_selective_transfer(
                                targets,
                                self.noise.transfer_fidelity,
                                self.noise.spectator_infidelity,
                                &mut rng,
                            )?;
                        }
                    }
                    self.single_channels(&mut reg, targets, AttachPoint::Prep, &mut rng)?;
                }
                Op::GlobalRot { angle, phase } => {
                    let active: Vec<usize> = (0..n).filter(|&q| reg.flags[q].active()).collect();
                    for &q in &active {
                        let u = Mat2::rotation(*angle, phase + self.cfg.k_raman.dot(offsets[q]));
                        reg.apply_unchecked(q, &u);
                    }
                    self.single_channels(&mut reg, &active, AttachPoint::SingleQubit, &mut rng)?;
                }
                Op::LocalZ { target, angle } => {
                    if reg.flags[*target].active() {
                        reg.apply_unchecked(*target, &Mat2::rz(*angle));
                        self.single_channels(&mut reg, &[*target], AttachPoint::SingleQubit, &mut rng)?;
                    }
                }
                Op::Cz { pairs } => {
                    for &(a, b) in pairs {
                        if reg.flags[a].active() && reg.flags[b].active() {
                            reg.apply_cz(&[(a, b)])?;
                            self.pair_channels(&mut reg, a, b, AttachPoint::Cz, &mut rng)?;
                        }
                    }
                }
                Op::FlybyCz { ancilla, targets, v } => {
                    for &t in targets {
                        if !reg.flags[*ancilla].active() {
                            break;
                        }
                        if !reg.flags[t].active() {
                            continue;
                        }
                        match self.flyby.get(&v.to_bits()) {
                            Some(diag) => flyby_jump(&mut reg, *ancilla, t, diag, &mut rng)?,
                            None => reg.apply_cz(&[(*ancilla, t)])?,
                        }
                        if reg.flags[*ancilla].active() && reg.flags[t].active() {
                            self.pair_channels(&mut reg, *ancilla, t, AttachPoint::Flyby, &mut rng)?;
                        }
                    }
                }
                Op::Measure { targets, basis, selective } => {
                    self.single_channels(&mut reg, targets, AttachPoint::Measure, &mut rng)?;
                    if *selective {
                        for q in 0..n {
                            if !targets.contains(&q)
                                && reg.flags[q].active()
                                && rng.random::<f64>() < self.noise.spectator_infidelity
                            {
                                reg.flags[q].in_qubit_manifold = false;
                            }
                        }
                        for &q in targets {
                            if reg.flags[q].active() && rng.random::<f64>() >= self.noise.transfer_fidelity {
                                reg.flags[q].in_qubit_manifold = false;
                            }
                        }
                    }
                    let res = reg.measure(targets, *basis, &mut rng)?;
                    let flip: f64 = self
                        .noise
                        .at(AttachPoint::Measure)
                        .filter(|c| c.kind == NoiseKind::ReadoutFlip)
                        .map(|c| c.strength)
                        .next()
                        .unwrap_or(0.0);
                    for (&q, mut o) in targets.iter().zip(res) {
                        if flip > 0.0 && o != Outcome::Lost && rng.random::<f64>() < flip {
                            o = if o == Outcome::Zero { Outcome::One } else { Outcome::Zero };
                        }
                        outcomes[q] = Some(o);
                    }
                }
                Op::Reset { targets } => {
                    for &q in targets {
                        if reg.flags[q].lost {
                            continue;
                        }
                        if rng.random::<f64>() < self.noise.reset_fidelity {
                            reg.prepare_zero(q, &mut rng)?;
                        } else {
                            reg.flags[q].in_qubit_manifold = false;
                        }
                    }
                    self.single_channels(&mut reg, targets, AttachPoint::Reset, &mut rng)?;
                }
                Op::Move { target, destination } => {
                    match destination {
                        Destination::Displacement { dx, dy } => offsets[*target] += Vec2::new(*dx, *dy),
                        Destination::Home => offsets[*target] = Vec2::zero(),
                        Destination::Zone { .. } => {}
                    }
                    self.single_channels(&mut reg, &[*target], AttachPoint::Move, &mut rng)?;
                }
                Op::Pauli { target, pauli } => {
                    if reg.flags[*target].active() {
                        reg.apply_pauli(*target, *pauli)?;
                    }
                }
                Op::Barrier => {}
            }
        }
        Ok((MeasurementRecord { shot, outcomes, kept: true }, reg))
    }

    fn single_channels(&self, reg: &mut QuantumRegister<f64>, atoms: &[usize], at: AttachPoint, rng: &mut ChaCha8Rng) -> Result<()> {
        for ch in self.noise.at(at) {
            for &q in atoms {
                if reg.flags[q].active() {
                    single_error(reg, q, ch, rng)?;
                }
            }
        }
        Ok(())
    }

    fn pair_channels(&self, reg: &mut QuantumRegister<f64>, a: usize, b: usize, at: AttachPoint, rng: &mut ChaCha8Rng) -> Result<()> {
        for ch in self.noise.at(at) {
            match ch.kind {
                NoiseKind::Depolarizing2q => {
                    if rng.random::<f64>() < ch.strength {
                        let k: u8 = rng.random_range(0..16);
                        reg.apply_pauli(a, pauli_of(k >> 2))?;
                        reg.apply_pauli(b, pauli_of(k & 3))?;
                    }
                }
                NoiseKind::Leakage => {
                    if rng.random::<f64>() < ch.strength {
                        let q = if rng.random::<bool>() { a } else { b };
                        reg.flags[q].lost = true;
                    }
                }
                _ => {
                    for q in [a, b] {
                        if reg.flags[q].active() {
                            single_error(reg, q, ch, rng)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn pauli_of(k: u8) -> Pauli {
    match k & 3 {
        0 => Pauli::I,
        1 => Pauli::X,
        2 => Pauli::Y,
        _ => Pauli::Z,
    }
}

fn single_error(reg: &mut QuantumRegister<f64>, q: usize, ch: &NoiseChannel, rng: &mut ChaCha8Rng) -> Result<()> {
    if rng.random::<f64>() >= ch.strength {
        return Ok(());
    }
    match ch.kind {
        NoiseKind::Depolarizing1q => reg.apply_pauli(q, pauli_of(rng.random_range(0..4u8)))?,
        NoiseKind::Depolarizing2q => reg.apply_pauli(q, pauli_of(rng.random_range(0..4u8)))?,
        NoiseKind::Dephasing => reg.apply_pauli(q, Pauli::Z)?,
        NoiseKind::Loss => reg.flags[q].lost = true,
        NoiseKind::Leakage => reg.flags[q].in_qubit_manifold = false,
        // applied to recorded outcomes
        NoiseKind::ReadoutFlip => {}
    }
    Ok(())
}

/// Applies a sub-unitary pair diagonal as a quantum-jump trajectory: the
/// missing norm is a Rydberg decay that removes the excited atom.
fn flyby_jump(reg: &mut QuantumRegister<f64>, anc: usize, tgt: usize, diag: &Diag, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut w = [0.0; 4];
    for (i, amp) in reg.amplitudes.iter().enumerate() {
        let k = 2 * ((i >> anc) & 1) + ((i >> tgt) & 1);
        w[k] += amp.norm_sqr() * (1.0 - diag[k].norm_sqr()).max(0.0);
    }
    let total: f64 = w.iter().sum();
    let r = rng.random::<f64>();
    if r < total {
        let mut k = 3;
        let mut acc = 0.0;
        for (j, wj) in w.iter().enumerate() {
            acc += wj;
            if r < acc {
                k = j;
                break;
            }
        }
        reg.collapse(anc, k >= 2)?;
        reg.collapse(tgt, k % 2 == 1)?;
        let victim = match k {
            1 => tgt,
            2 => anc,
            _ if rng.random::<bool>() => anc,
            _ => tgt,
        };
        reg.flags[victim].lost = true;
    } else {
        reg.apply_pair_diagonal(anc, tgt, diag);
        reg.renormalize()?;
    }
    Ok(())
}

/// Runs one trajectory and returns its record and final register.
pub fn run_shot(ir: &CircuitIR, noise: &NoiseModel, cfg: &ExecConfig, seed: u64, shot: usize) -> Result<(MeasurementRecord, QuantumRegister<f64>)> {
    Executor::new(ir, noise, cfg)?.run_shot(seed, shot)
}

/// Runs `shots` trajectories in parallel; records come back in shot order.
pub fn run(ir: &CircuitIR, noise: &NoiseModel, cfg: &ExecConfig, shots: usize, seed: u64) -> Result<Vec<MeasurementRecord>> {
    let ex = Executor::new(ir, noise, cfg)?;
    (0..shots).into_par_iter().map(|s| ex.run_shot(seed, s).map(|(r, _)| r)).collect()
}

/// Final state of a noiseless run.
pub fn final_state(ir: &CircuitIR, cfg: &ExecConfig) -> Result<QuantumRegister<f64>> {
    run_shot(ir, &NoiseModel::ideal(), cfg, 0, 0).map(|(_, r)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Trajectories that contributed.
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyResult("no samples".into()));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Ok(Self { mean, stderr: (var / n).sqrt(), samples: xs.len() })
    }
}

/// `⟨P⟩` on the final state: exact for an ideal model, otherwise averaged over
/// trajectories in which every atom of the support is still active.
pub fn expectation(ir: &CircuitIR, noise: &NoiseModel, cfg: &ExecConfig, p: &PauliString, shots: usize, seed: u64) -> Result<Estimate> {
    if noise.is_ideal() {
        let v = final_state(ir, cfg)?.expectation(p)?;
        return Ok(Estimate { mean: v, stderr: 0.0, samples: 1 });
    }
    let ex = Executor::new(ir, noise, cfg)?;
    let support = p.support();
    let vals: Vec<Option<f64>> = (0..shots)
        .into_par_iter()
        .map(|s| {
            let (_, reg) = ex.run_shot(seed, s)?;
            if support.iter().all(|&q| reg.flags[q].active()) {
                reg.expectation(p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = vals.into_iter().flatten().collect();
    Estimate::from_samples(&kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// Every measured atom was detected.
    AllPresent,
    /// Listed atoms were all detected with an even number of 1 outcomes.
    ParityEven { atoms: Vec<usize> },
    AncillaOutcome { atom: usize, expected: Outcome },
}

impl Predicate {
    pub fn accepts(&self, r: &MeasurementRecord) -> bool {
        match self {
            Predicate::AllPresent => r.outcomes.iter().all(|o| *o != Some(Outcome::Lost)),
            Predicate::ParityEven { atoms } => r.parity(atoms) == Some(1.0),
            Predicate::AncillaOutcome { atom, expected } => r.outcome(*atom) == Some(*expected),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostSelection {
    pub kept: Vec<MeasurementRecord>,
    pub discard_fraction: f64,
    /// Binomial standard error of the discard fraction.
    pub discard_stderr: f64,
}

/// Keeps records accepted by every predicate.
pub fn post_select(records: &[MeasurementRecord], predicates: &[Predicate]) -> Result<PostSelection> {
    let kept: Vec<MeasurementRecord> = records
        .iter()
        .filter(|r| predicates.iter().all(|p| p.accepts(r)))
        .cloned()
        .map(|mut r| {
            r.kept = true;
            r
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult("post-selection kept no records".into()));
    }
    let n = records.len() as f64;
    let f = 1.0 - kept.len() as f64 / n;
    Ok(PostSelection { kept, discard_fraction: f, discard_stderr: (f * (1.0 - f) / n).sqrt() })
}

/// Marks each record's `kept` verdict in place and returns the discard fraction.
pub fn mark_kept(records: &mut [MeasurementRecord], predicates: &[Predicate]) -> f64 {
    let mut dropped = 0usize;
    for r in records.iter_mut() {
        r.kept = predicates.iter().all(|p| p.accepts(r));
        dropped += usize::from(!r.kept);
    }
    if records.is_empty() {
        0.0
    } else {
        dropped as f64 / records.len() as f64
    }
}

/// `shot,atom0,...,atomN,kept`; unmeasured atoms are empty cells.
pub fn records_to_csv(records: &[MeasurementRecord], n_atoms: usize) -> String {
    let mut s = String::from("shot");
    for a in 0..n_atoms {
        let _ = write!(s, ",atom{a}");
    }
    s.push_str(",kept\n");
    for r in records {
        let _ = write!(s, "{}", r.shot);
        for a in 0..n_atoms {
            s.push(',');
            if let Some(o) = r.outcome(a) {
                s.push_str(o.as_str());
            }
        }
        let _ = writeln!(s, ",{}", r.kept);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reg(n: usize) -> QuantumRegister<f64> {
        QuantumRegister::new(n).unwrap()
    }

    fn plus_plus_cz() -> QuantumRegister<f64> {
        let mut r = reg(2);
        r.apply_single_qubit(&[0, 1], &Mat2::hadamard()).unwrap();
        r.apply_cz(&[(0, 1)]).unwrap();
        r
    }

    #[test]
    fn basic_gates() {
        let mut r = reg(1);
        r.apply_single_qubit(&[0], &Mat2::pauli_x()).unwrap();
        assert!((r.probability_one(0) - 1.0).abs() < 1e-15);

        let mut a = reg(1);
        a.apply_single_qubit(&[0], &Mat2::hadamard()).unwrap();
        let mut b = a.clone();
        a.apply_single_qubit(&[0], &Mat2::rz(PI / 2.0)).unwrap();
        a.apply_single_qubit(&[0], &Mat2::rz(PI / 2.0)).unwrap();
        b.apply_single_qubit(&[0], &Mat2::rz(PI)).unwrap();
        assert!(a.overlap(b.amplitudes()).unwrap() > 1.0 - 1e-12);

        let mut h = reg(3);
        let before = h.clone();
        h.apply_single_qubit(&[1], &Mat2::hadamard()).unwrap();
        h.apply_single_qubit(&[1], &Mat2::hadamard()).unwrap();
        for (x, y) in h.amplitudes().iter().zip(before.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn cz_graph_state_stabilizers() {
        let r = plus_plus_cz();
        for s in ["XZ", "ZX"] {
            assert!((r.expectation(&s.parse().unwrap()).unwrap() - 1.0).abs() < 1e-12);
        }
        let mut twice = r.clone();
        twice.apply_cz(&[(0, 1)]).unwrap();
        twice.apply_cz(&[(0, 1)]).unwrap();
        assert_eq!(twice, r);
        assert!(reg(3).apply_cz(&[(0, 1), (1, 2)]).is_err());
    }

    #[test]
    fn gates_on_absent_atoms_are_protocol_errors() {
        let mut r = reg(2);
        r.flags_mut()[1].lost = true;
        assert!(matches!(r.apply_single_qubit(&[1], &Mat2::pauli_x()), Err(Error::Protocol(_))));
        assert!(matches!(r.apply_cz(&[(0, 1)]), Err(Error::Protocol(_))));
    }

    #[test]
    fn measurement_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shots = 10_000;
        let mut ones = 0;
        for _ in 0..shots {
            let mut r = reg(1);
            r.apply_single_qubit(&[0], &Mat2::hadamard()).unwrap();
            let mut x = r.clone();
            assert_eq!(x.measure(&[0], Basis::X, &mut rng).unwrap(), vec![Outcome::Zero]);
            if r.measure(&[0], Basis::Z, &mut rng).unwrap()[0] == Outcome::One {
                ones += 1;
            }
        }
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!((ones as f64 - shots as f64 / 2.0).abs() < 3.0 * sigma, "{ones}");
        let mut z = reg(1);
        assert_eq!(z.measure(&[0], Basis::Z, &mut rng).unwrap(), vec![Outcome::Zero]);
    }

    fn plus_circuit(n: usize) -> CircuitIR {
        let mut ir = CircuitIR::new(n);
        ir.push(Op::Prep { targets: (0..n).collect(), method: PrepMethod::Global })
            .push(Op::GlobalRot { angle: PI / 2.0, phase: PI / 2.0 });
        ir
    }

    #[test]
    fn depolarizing_scales_expectation() {
        let mut ir = CircuitIR::new(1);
        ir.push(Op::Prep { targets: vec![0], method: PrepMethod::Global })
            .push(Op::LocalZ { target: 0, angle: 0.0 });
        let p = 0.2;
        let noise = NoiseModel::ideal().with_channel(NoiseKind::Depolarizing1q, p, AttachPoint::SingleQubit).unwrap();
        let e = expectation(&ir, &noise, &ExecConfig::default(), &"Z".parse().unwrap(), 10_000, 11).unwrap();
        assert!((e.mean - (1.0 - p)).abs() < 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn leakage_fraction_is_binomial() {
        let mut ir = plus_circuit(2);
        ir.push(Op::Cz { pairs: vec![(0, 1)] }).push(Op::Measure { targets: vec![0, 1], basis: Basis::Z, selective: false });
        let p = 0.1;
        let noise = NoiseModel::ideal().with_channel(NoiseKind::Leakage, p, AttachPoint::Cz).unwrap();
        let n = 10_000;
        let recs = run(&ir, &noise, &ExecConfig::default(), n, 5).unwrap();
        let sel = post_select(&recs, &[Predicate::AllPresent]).unwrap();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((sel.discard_fraction - p).abs() < 4.0 * sigma, "{}", sel.discard_fraction);
    }

    #[test]
    fn loss_discard_matches_binomial() {
        let k = 3;
        let mut ir = plus_circuit(k);
        ir.push(Op::Measure { targets: (0..k).collect(), basis: Basis::Z, selective: false });
        let p = 0.05;
        let noise = NoiseModel::ideal().with_channel(NoiseKind::Loss, p, AttachPoint::Prep).unwrap();
        let n = 10_000;
        let recs = run(&ir, &noise, &ExecConfig::default(), n, 9).unwrap();
        let sel = post_select(&recs, &[Predicate::AllPresent]).unwrap();
        let expect = 1.0 - (1.0 - p).powi(k as i32);
        assert!((sel.discard_fraction - expect).abs() < 4.0 * sel.discard_stderr, "{}", sel.discard_fraction);
        let ideal = run(&ir, &NoiseModel::ideal(), &ExecConfig::default(), 100, 9).unwrap();
        assert_eq!(post_select(&ideal, &[Predicate::AllPresent]).unwrap().discard_fraction, 0.0);
    }

    #[test]
    fn selective_transfer_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let (mut ok, mut flipped) = (0, 0);
        for _ in 0..n {
            let mut r = QuantumRegister::<f64>::unprepared(2).unwrap();
            r.flags_mut()[1].in_qubit_manifold = true;
            ok += usize::from(r.velocity_selective_transfer(&[0], 0.97, 0.004, &mut rng).unwrap()[0]);
            flipped += usize::from(!r.flags()[1].in_qubit_manifold);
        }
        let f = ok as f64 / n as f64;
        assert!((f - 0.97).abs() < 4.0 * (0.97 * 0.03 / n as f64).sqrt());
        let s = flipped as f64 / n as f64;
        assert!((s - 0.004).abs() < 4.0 * (0.004 * 0.996 / n as f64).sqrt());
    }

    #[test]
    fn runs_are_deterministic_and_csv_is_stable() {
        let mut ir = plus_circuit(3);
        ir.push(Op::Cz { pairs: vec![(0, 1)] }).push(Op::Measure { targets: vec![0, 1, 2], basis: Basis::X, selective: false });
        let noise = NoiseModel::ideal().with_channel(NoiseKind::Depolarizing2q, 0.1, AttachPoint::Cz).unwrap();
        let a = run(&ir, &noise, &ExecConfig::default(), 500, 42).unwrap();
        let b = run(&ir, &noise, &ExecConfig::default(), 500, 42).unwrap();
        assert_eq!(records_to_csv(&a, 3), records_to_csv(&b, 3));
        assert!(records_to_csv(&a, 3).starts_with("shot,atom0,atom1,atom2,kept\n0,"));
    }

    #[test]
    fn empty_post_selection_is_an_error() {
        let rec = MeasurementRecord { shot: 0, outcomes: vec![Some(Outcome::Lost)], kept: true };
        assert!(matches!(post_select(&[rec], &[Predicate::AllPresent]), Err(Error::EmptyResult(_))));
    }
}
