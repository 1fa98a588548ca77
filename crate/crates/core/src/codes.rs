//! Entangled-state protocols: linear cluster states read out through
//! displacement-selected bases, the [[4,2,2]] logical Bell state, and
//! flying-ancilla preparation and syndrome measurement.
//!
//! Local single-qubit gates are built only from global rotations and
//! displacement-realized Z rotations (see [`push_local_rotation`]).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::circuit::{Basis, CircuitIR, Destination, Op, PrepMethod};
use crate::error::{invalid, Error, Result};
use crate::pauli::{Pauli, PauliString};
use crate::pulsephysics::LAMBDA_FS;
use crate::qmath::C;
use crate::statesim::{self, Estimate, ExecConfig, MeasurementRecord, NoiseModel, Outcome, Predicate};

/// Stabilizers `S_i = X_i ∏_{j∈N(i)} Z_j` of a graph state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub stabilizers: Vec<PauliString>,
}

impl ClusterSpec {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(invalid("a cluster needs at least two qubits"));
        }
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err(invalid(format!("bad edge ({a}, {b}) for {n} qubits")));
            }
        }
        let mut stabilizers = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = PauliString::identity(n);
            s.ops[i] = Pauli::X;
            for &(a, b) in &edges {
                if a == i {
                    s.ops[b] = Pauli::Z;
                } else if b == i {
                    s.ops[a] = Pauli::Z;
                }
            }
            stabilizers.push(s);
        }
        let spec = Self { n, edges, stabilizers };
        spec.verify()?;
        Ok(spec)
    }

    pub fn linear(n: usize) -> Result<Self> {
        Self::new(n, (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect())
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect()
    }

    /// Checks that all stabilizers commute.
    pub fn verify(&self) -> Result<()> {
        for (i, a) in self.stabilizers.iter().enumerate() {
            for b in &self.stabilizers[i + 1..] {
                if !a.commutes_with(b) {
                    return Err(Error::Protocol(format!("stabilizers {a} and {b} anticommute")));
                }
            }
        }
        Ok(())
    }

    /// Two-colouring of the graph; stabilizers of one colour are read together.
    pub fn bipartition(&self) -> Result<Vec<bool>> {
        let mut colour: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if colour[start].is_some() {
                continue;
            }
            colour[start] = Some(false);
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                let cu = colour[u].unwrap_or(false);
                for w in self.neighbors(u) {
                    match colour[w] {
                        None => {
                            colour[w] = Some(!cu);
                            stack.push(w);
                        }
                        Some(cw) if cw == cu => return Err(invalid("cluster graph is not bipartite")),
                        _ => {}
                    }
                }
            }
        }
        Ok(colour.into_iter().map(|c| c.unwrap_or(false)).collect())
    }
}

/// `|+⟩^n` followed by CZ on every edge, edges packed greedily into disjoint layers.
pub fn build_cluster_circuit(spec: &ClusterSpec) -> CircuitIR {
    let mut ir = CircuitIR::new(spec.n);
    ir.push(Op::Prep { targets: (0..spec.n).collect(), method: PrepMethod::Global })
        .push(Op::GlobalRot { angle: FRAC_PI_2, phase: FRAC_PI_2 });
    let mut remaining = spec.edges.clone();
    while !remaining.is_empty() {
        let mut used = vec![false; spec.n];
        let mut layer = Vec::new();
        remaining.retain(|&(a, b)| {
            if used[a] || used[b] {
                return true;
            }
            used[a] = true;
            used[b] = true;
            layer.push((a, b));
            false
        });
        ir.push(Op::Cz { pairs: layer });
    }
    ir
}

pub fn build_linear_cluster_circuit(n: usize) -> Result<CircuitIR> {
    Ok(build_cluster_circuit(&ClusterSpec::linear(n)?))
}

/// Per-atom displacement along the Raman axis during the echo π pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPlan {
    /// Meters.
    pub displacements: Vec<f64>,
}

impl BasisPlan {
    /// Displacement that turns the echo readout from Z into X.
    pub fn x_displacement() -> f64 {
        LAMBDA_FS / 8.0
    }

    pub fn from_bases(bases: &[Basis]) -> Self {
        let displacements = bases
            .iter()
            .map(|b| match b {
                Basis::Z => 0.0,
                Basis::X => Self::x_displacement(),
            })
            .collect();
        Self { displacements }
    }

    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }
}

/// Observable read by the echo for an atom displaced by `dx` (meters):
/// `cos(2k·dx)·Z + sin(2k·dx)·X`, returned as (Z weight, X weight).
pub fn echo_observable(dx: f64) -> (f64, f64) {
    let theta = 2.0 * std::f64::consts::TAU / LAMBDA_FS * dx;
    (theta.cos(), theta.sin())
}

/// Appends the echo readout (π/2, π with atoms displaced, π/2) and a Z
/// measurement of every atom.
pub fn append_echo_readout(base: &CircuitIR, plan: &BasisPlan) -> Result<CircuitIR> {
    let mut ir = append_echo(base, plan)?;
    ir.push(Op::Measure { targets: (0..ir.n_atoms).collect(), basis: Basis::Z, selective: false });
    Ok(ir)
}

fn append_echo(base: &CircuitIR, plan: &BasisPlan) -> Result<CircuitIR> {
    if plan.len() != base.n_atoms {
        return Err(invalid(format!("basis plan has {} entries for {} atoms", plan.len(), base.n_atoms)));
    }
    let mut ir = base.clone();
    ir.push(Op::GlobalRot { angle: FRAC_PI_2, phase: 0.0 });
    let moved: Vec<(usize, f64)> = plan.displacements.iter().copied().enumerate().filter(|(_, d)| *d != 0.0).collect();
    for &(q, dx) in &moved {
        ir.push(Op::Move { target: q, destination: Destination::Displacement { dx, dy: 0.0 } });
    }
    ir.push(Op::GlobalRot { angle: PI, phase: 0.0 });
    for &(q, _) in &moved {
        ir.push(Op::Move { target: q, destination: Destination::Home });
    }
    ir.push(Op::GlobalRot { angle: FRAC_PI_2, phase: 0.0 });
    Ok(ir)
}

/// Noiseless echo readout: for each support set, the exact `⟨∏ Z⟩` after the
/// echo, i.e. the value the displacement-selected bases assign to it.
pub fn stabilizer_readout_via_displacement(
    base: &CircuitIR,
    plan: &BasisPlan,
    supports: &[Vec<usize>],
    cfg: &ExecConfig,
) -> Result<Vec<f64>> {
    let ir = append_echo(base, plan)?;
    let reg = statesim::final_state(&ir, cfg)?;
    supports
        .iter()
        .map(|s| {
            let sites: Vec<(usize, Pauli)> = s.iter().map(|&q| (q, Pauli::Z)).collect();
            reg.expectation(&PauliString::from_sites(ir.n_atoms, &sites)?)
        })
        .collect()
}

/// Readout plan for the stabilizers centred on atoms of one colour.
pub fn cluster_plan(colours: &[bool], x_colour: bool) -> BasisPlan {
    let bases: Vec<Basis> = colours.iter().map(|&c| if c == x_colour { Basis::X } else { Basis::Z }).collect();
    BasisPlan::from_bases(&bases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Shots with every atom detected.
    pub postselected: Vec<Estimate>,
    /// All shots, empty sites read as 1.
    pub raw: Vec<Estimate>,
    pub discard_fraction: f64,
}

impl ClusterReport {
    pub fn mean(values: &[Estimate]) -> f64 {
        values.iter().map(|e| e.mean).sum::<f64>() / values.len() as f64
    }

    /// `stabilizer_index,value,stderr,postselected`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stabilizer_index,value,stderr,postselected\n");
        for (flag, set) in [(true, &self.postselected), (false, &self.raw)] {
            for (i, e) in set.iter().enumerate() {
                let _ = writeln!(s, "{i},{:.6},{:.6},{flag}", e.mean, e.stderr);
            }
        }
        s
    }
}

/// Sampled cluster experiment: two readout settings (one per colour), `shots` each.
pub fn run_cluster(spec: &ClusterSpec, noise: &NoiseModel, cfg: &ExecConfig, shots: usize, seed: u64) -> Result<ClusterReport> {
    let colours = spec.bipartition()?;
    let base = build_cluster_circuit(spec);
    let mut post = vec![None; spec.n];
    let mut raw = vec![None; spec.n];
    let mut dropped = 0usize;
    for (setting, x_colour) in [false, true].into_iter().enumerate() {
        let ir = append_echo_readout(&base, &cluster_plan(&colours, x_colour))?;
        let records = statesim::run(&ir, noise, cfg, shots, seed.wrapping_add(setting as u64))?;
        let present: Vec<&MeasurementRecord> = records.iter().filter(|r| Predicate::AllPresent.accepts(r)).collect();
        dropped += records.len() - present.len();
        for i in (0..spec.n).filter(|&i| colours[i] == x_colour) {
            let support = spec.stabilizers[i].support();
            let p: Vec<f64> = present.iter().filter_map(|r| r.parity(&support)).collect();
            let w: Vec<f64> = records.iter().filter_map(|r| r.raw_parity(&support)).collect();
            post[i] = Some(Estimate::from_samples(&p)?);
            raw[i] = Some(Estimate::from_samples(&w)?);
        }
    }
    let collect = |v: Vec<Option<Estimate>>| v.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| Error::EmptyResult("stabilizer not measured".into()));
    Ok(ClusterReport {
        postselected: collect(post)?,
        raw: collect(raw)?,
        discard_fraction: dropped as f64 / (2 * shots) as f64,
    })
}

/// True iff every stabilizer value exceeds 1/2.
pub fn entanglement_witness(values: &[f64]) -> bool {
    !values.is_empty() && values.iter().all(|&v| v > 0.5)
}

/// Appends a rotation `R(θ, φ)` on `targets` only: two global half-rotations
/// with the second phase advanced by π, while the targets sit displaced by
/// `λ_FS/2` so their own axis phase is back at `φ`. Every other atom sees
/// `R(θ/2, φ+π)·R(θ/2, φ) = I`.
pub fn push_local_rotation(ir: &mut CircuitIR, targets: &[usize], theta: f64, phi: f64) {
    ir.push(Op::GlobalRot { angle: theta / 2.0, phase: phi });
    for &q in targets {
        ir.push(Op::Move { target: q, destination: Destination::Displacement { dx: LAMBDA_FS / 2.0, dy: 0.0 } });
    }
    ir.push(Op::GlobalRot { angle: theta / 2.0, phase: phi + PI });
    for &q in targets {
        ir.push(Op::Move { target: q, destination: Destination::Displacement { dx: -LAMBDA_FS / 2.0, dy: 0.0 } });
    }
}

/// Hadamard (up to phase) on `targets`: `R_y(π/2)` then `R_x(π)`.
pub fn push_local_hadamard(ir: &mut CircuitIR, targets: &[usize]) {
    push_local_rotation(ir, targets, FRAC_PI_2, FRAC_PI_2);
    push_local_rotation(ir, targets, PI, 0.0);
}

/// The [[4,2,2]] code with stabilizers XXXX, ZZZZ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourTwoTwoCode {
    pub stabilizers: [PauliString; 2],
    pub x_logical: [PauliString; 2],
    pub z_logical: [PauliString; 2],
}

impl Default for FourTwoTwoCode {
    fn default() -> Self {
        let p = |s: &str| s.parse::<PauliString>().expect("static Pauli string");
        Self {
            stabilizers: [p("XXXX"), p("ZZZZ")],
            x_logical: [p("XXII"), p("XIXI")],
            z_logical: [p("ZIZI"), p("ZZII")],
        }
    }
}

impl FourTwoTwoCode {
    /// Checks stabilizer commutation and the logical Pauli algebra.
    pub fn verify(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Protocol(m.into()));
        let logicals: Vec<&PauliString> = self.x_logical.iter().chain(&self.z_logical).collect();
        if !self.stabilizers[0].commutes_with(&self.stabilizers[1]) {
            return fail("stabilizers anticommute");
        }
        for l in &logicals {
            if self.stabilizers.iter().any(|s| !s.commutes_with(l)) {
                return fail("logical operator anticommutes with a stabilizer");
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let anti = !self.x_logical[i].commutes_with(&self.z_logical[j]);
                if anti != (i == j) {
                    return fail("logical X/Z pairs have the wrong commutation");
                }
            }
        }
        if !self.x_logical[0].commutes_with(&self.x_logical[1]) || !self.z_logical[0].commutes_with(&self.z_logical[1]) {
            return fail("logical operators of one type must commute");
        }
        Ok(())
    }

    /// Amplitudes of `|ab⟩_L`; `|00⟩_L` is the +1 eigenstate of both Z
    /// logicals, i.e. (|0000⟩ + |1111⟩)/√2.
    pub fn logical_state(&self, a: bool, b: bool) -> Vec<C<f64>> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = vec![C::new(0.0, 0.0); 16];
        v[0] = C::new(h, 0.0);
        v[15] = C::new(h, 0.0);
        if a {
            v = apply_pauli_vec(&self.x_logical[0], &v);
        }
        if b {
            v = apply_pauli_vec(&self.x_logical[1], &v);
        }
        v
    }

    /// `(|00⟩_L + |11⟩_L)/√2`.
    pub fn logical_bell_state(&self) -> Vec<C<f64>> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        self.logical_state(false, false)
            .iter()
            .zip(self.logical_state(true, true))
            .map(|(x, y)| (x + y) * h)
            .collect()
    }

    /// Logical Bell correlators `X_L1X_L2` and `Z_L1Z_L2` (weight-2 strings).
    pub fn bell_correlators(&self) -> Result<(PauliString, PauliString)> {
        Ok((self.x_logical[0].mul(&self.x_logical[1])?, self.z_logical[0].mul(&self.z_logical[1])?))
    }
}

fn apply_pauli_vec(p: &PauliString, v: &[C<f64>]) -> Vec<C<f64>> {
    let (xm, zm) = p.masks();
    let (xm, zm) = (xm as usize, zm as usize);
    let ny = (xm & zm).count_ones() as u8 + p.phase;
    let iy = match ny % 4 {
        0 => C::new(1.0, 0.0),
        1 => C::new(0.0, 1.0),
        2 => C::new(-1.0, 0.0),
        _ => C::new(0.0, -1.0),
    };
    let mut out = vec![C::new(0.0, 0.0); v.len()];
    for (b, a) in v.iter().enumerate() {
        let s = if (b & zm).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        out[b ^ xm] += a * iy * s;
    }
    out
}

/// Logical Bell state of the [[4,2,2]] code: Bell pairs on atoms (0, 3) and
/// (1, 2), made with two CZs and a local Hadamard on atoms 2 and 3.
pub fn logical_bell_circuit() -> CircuitIR {
    let mut ir = CircuitIR::new(4);
    ir.push(Op::Prep { targets: vec![0, 1, 2, 3], method: PrepMethod::Global })
        .push(Op::GlobalRot { angle: FRAC_PI_2, phase: FRAC_PI_2 })
        .push(Op::Cz { pairs: vec![(0, 3), (1, 2)] });
    push_local_hadamard(&mut ir, &[2, 3]);
    ir
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalBellReport {
    /// `(⟨X_LX_L⟩ + ⟨Z_LZ_L⟩)/2` on parity-even, fully detected shots.
    pub logical_fidelity: f64,
    pub logical_stderr: f64,
    /// Same bound for the physical pairs (0,3) and (1,2) of the same shots,
    /// without parity post-selection.
    pub physical_fidelity: f64,
    pub physical_stderr: f64,
    /// Fraction of fully detected shots with odd stabilizer parity.
    pub discard_fraction: f64,
    pub discard_stderr: f64,
    /// Fraction of shots with an atom missing.
    pub loss_fraction: f64,
}

/// Runs the logical Bell preparation, reads all atoms in Z and, in a second
/// run, in X.
pub fn logical_bell_protocol(noise: &NoiseModel, cfg: &ExecConfig, shots: usize, seed: u64) -> Result<LogicalBellReport> {
    let code = FourTwoTwoCode::default();
    code.verify()?;
    let (xx, zz) = code.bell_correlators()?;
    let all = [0usize, 1, 2, 3];
    let mut logical = Vec::new();
    let mut physical = Vec::new();
    let (mut present_total, mut odd_total, mut shots_total) = (0usize, 0usize, 0usize);
    for (k, (basis, corr)) in [(Basis::Z, &zz), (Basis::X, &xx)].into_iter().enumerate() {
        let mut ir = logical_bell_circuit();
        ir.push(Op::Measure { targets: all.to_vec(), basis, selective: false });
        let records = statesim::run(&ir, noise, cfg, shots, seed.wrapping_add(k as u64))?;
        shots_total += records.len();
        let present: Vec<&MeasurementRecord> = records.iter().filter(|r| Predicate::AllPresent.accepts(r)).collect();
        present_total += present.len();
        let even: Vec<&MeasurementRecord> = present.iter().copied().filter(|r| r.parity(&all) == Some(1.0)).collect();
        odd_total += present.len() - even.len();
        let support = corr.support();
        let vals: Vec<f64> = even.iter().filter_map(|r| r.parity(&support)).collect();
        logical.push(Estimate::from_samples(&vals)?);
        let pair = |a: usize, b: usize| -> Vec<f64> { present.iter().filter_map(|r| r.parity(&[a, b])).collect() };
        let mut pv = pair(0, 3);
        pv.extend(pair(1, 2));
        physical.push(Estimate::from_samples(&pv)?);
    }
    if present_total == 0 {
        return Err(Error::EmptyResult("no fully detected shots".into()));
    }
    let combine = |e: &[Estimate]| ((e[0].mean + e[1].mean) / 2.0, (e[0].stderr.powi(2) + e[1].stderr.powi(2)).sqrt() / 2.0);
    let (lf, ls) = combine(&logical);
    let (pf, ps) = combine(&physical);
    let d = odd_total as f64 / present_total as f64;
    Ok(LogicalBellReport {
        logical_fidelity: lf,
        logical_stderr: ls,
        physical_fidelity: pf,
        physical_stderr: ps,
        discard_fraction: d,
        discard_stderr: (d * (1.0 - d) / present_total as f64).sqrt(),
        loss_fraction: 1.0 - present_total as f64 / shots_total as f64,
    })
}

pub const DATA: [usize; 4] = [0, 1, 2, 3];
pub const ANCILLA: usize = 4;
pub const SYNDROME_ANCILLA: usize = 5;

/// Zone names used by the flying-ancilla circuits.
pub const PREP_ZONE: &str = "prep";
pub const READOUT_ZONE: &str = "readout";
pub const STORAGE_ZONE: &str = "storage";

fn push_zone(ir: &mut CircuitIR, target: usize, name: &str) {
    ir.push(Op::Move { target, destination: Destination::Zone { name: name.into() } });
}

/// Flying-ancilla preparation: data and ancilla in |+⟩, the ancilla passes
/// the four data atoms at `v`, and a global `R(π/2, −π/2)` maps the ancilla
/// readout onto XXXX of the data, leaving them with `Z_iZ_j = +1`. With
/// `syndrome`, a second ancilla measures ZZZZ. `inject` applies a Pauli to
/// one data atom between the two blocks.
pub fn flying_ancilla_circuit(v: f64, syndrome: bool, inject: Option<(usize, Pauli)>) -> CircuitIR {
    let n = if syndrome { 6 } else { 5 };
    let mut ir = CircuitIR::new(n);
    ir.push(Op::Prep { targets: DATA.to_vec(), method: PrepMethod::Global });
    push_zone(&mut ir, ANCILLA, PREP_ZONE);
    ir.push(Op::Prep { targets: vec![ANCILLA], method: PrepMethod::VelocitySelective });
    // back at rest so Raman phases do not drift with the ancilla's motion
    push_zone(&mut ir, ANCILLA, STORAGE_ZONE);
    ir.push(Op::GlobalRot { angle: FRAC_PI_2, phase: FRAC_PI_2 });
    ir.push(Op::FlybyCz { ancilla: ANCILLA, targets: DATA.to_vec(), v });
    ir.push(Op::GlobalRot { angle: FRAC_PI_2, phase: -FRAC_PI_2 });
    push_zone(&mut ir, ANCILLA, READOUT_ZONE);
    ir.push(Op::Measure { targets: vec![ANCILLA], basis: Basis::Z, selective: true });
    push_zone(&mut ir, ANCILLA, STORAGE_ZONE);
    if let Some((q, p)) = inject {
        ir.push(Op::Pauli { target: q, pauli: p });
    }
    if syndrome {
        let a = SYNDROME_ANCILLA;
        push_zone(&mut ir, a, PREP_ZONE);
        ir.push(Op::Prep { targets: vec![a], method: PrepMethod::VelocitySelective });
        push_zone(&mut ir, a, STORAGE_ZONE);
        push_local_rotation(&mut ir, &[a], FRAC_PI_2, FRAC_PI_2);
        // the second ancilla shares the first one's column, which ends past the chain
        ir.push(Op::FlybyCz { ancilla: a, targets: DATA.iter().rev().copied().collect(), v });
        push_local_rotation(&mut ir, &[a], FRAC_PI_2, -FRAC_PI_2);
        push_zone(&mut ir, a, READOUT_ZONE);
        ir.push(Op::Measure { targets: vec![a], basis: Basis::Z, selective: true });
        push_zone(&mut ir, a, STORAGE_ZONE);
    }
    ir.push(Op::Measure { targets: DATA.to_vec(), basis: Basis::Z, selective: false });
    ir
}

/// Pauli-frame correction after the first ancilla: outcome 1 heralds
/// XXXX = −1, fixed by Z on data atom 0.
pub fn herald_correction(outcome: Outcome) -> Option<(usize, Pauli)> {
    (outcome == Outcome::One).then_some((DATA[0], Pauli::Z))
}

fn data_state_correct(r: &MeasurementRecord) -> Option<bool> {
    let bits: Vec<Outcome> = DATA.iter().map(|&q| r.outcome(q)).collect::<Option<_>>()?;
    if bits.contains(&Outcome::Lost) {
        return None;
    }
    Some(bits.iter().all(|b| *b == bits[0]))
}

fn heralded(r: &MeasurementRecord, ancillas: &[usize]) -> bool {
    ancillas.iter().all(|&a| matches!(r.outcome(a), Some(Outcome::Zero | Outcome::One)))
        && DATA.iter().all(|&q| matches!(r.outcome(q), Some(Outcome::Zero | Outcome::One)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlyingAncillaReport {
    /// Correct logical state among heralded, parity-valid shots.
    pub success: f64,
    pub success_stderr: f64,
    /// Fraction of heralded shots with odd data parity.
    pub discard_fraction: f64,
    pub discard_stderr: f64,
    /// Fraction of shots without a detected ancilla or with a missing data atom.
    pub herald_failure: f64,
}

pub fn flying_ancilla_prepare(noise: &NoiseModel, cfg: &ExecConfig, v: f64, shots: usize, seed: u64) -> Result<FlyingAncillaReport> {
    let ir = flying_ancilla_circuit(v, false, None);
    let records = statesim::run(&ir, noise, cfg, shots, seed)?;
    let her: Vec<&MeasurementRecord> = records.iter().filter(|r| heralded(r, &[ANCILLA])).collect();
    if her.is_empty() {
        return Err(Error::EmptyResult("no heralded shots".into()));
    }
    let valid: Vec<&MeasurementRecord> = her.iter().copied().filter(|r| r.parity(&DATA) == Some(1.0)).collect();
    if valid.is_empty() {
        return Err(Error::EmptyResult("no parity-valid shots".into()));
    }
    let ok = valid.iter().filter(|r| data_state_correct(r) == Some(true)).count();
    let s = ok as f64 / valid.len() as f64;
    let d = 1.0 - valid.len() as f64 / her.len() as f64;
    Ok(FlyingAncillaReport {
        success: s,
        success_stderr: (s * (1.0 - s) / valid.len() as f64).sqrt(),
        discard_fraction: d,
        discard_stderr: (d * (1.0 - d) / her.len() as f64).sqrt(),
        herald_failure: 1.0 - her.len() as f64 / records.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyndromeReport {
    /// Correct logical state among all heralded shots.
    pub raw: f64,
    pub raw_stderr: f64,
    /// Same, keeping only shots whose syndrome reads ZZZZ = +1.
    pub postselected: f64,
    pub postselected_stderr: f64,
    /// Fraction of heralded shots whose syndrome reads ZZZZ = −1.
    pub flagged_fraction: f64,
}

pub fn flying_ancilla_syndrome(
    noise: &NoiseModel,
    cfg: &ExecConfig,
    v: f64,
    shots: usize,
    seed: u64,
    inject: Option<(usize, Pauli)>,
) -> Result<SyndromeReport> {
    let ir = flying_ancilla_circuit(v, true, inject);
    let records = statesim::run(&ir, noise, cfg, shots, seed)?;
    let her: Vec<&MeasurementRecord> = records.iter().filter(|r| heralded(r, &[ANCILLA, SYNDROME_ANCILLA])).collect();
    if her.is_empty() {
        return Err(Error::EmptyResult("no heralded shots".into()));
    }
    let rate = |set: &[&MeasurementRecord]| -> (f64, f64) {
        let ok = set.iter().filter(|r| data_state_correct(r) == Some(true)).count() as f64;
        let n = set.len() as f64;
        let p = ok / n;
        (p, (p * (1.0 - p) / n).sqrt())
    };
    let clean: Vec<&MeasurementRecord> = her.iter().copied().filter(|r| r.outcome(SYNDROME_ANCILLA) == Some(Outcome::Zero)).collect();
    let (raw, raw_stderr) = rate(&her);
    let flagged_fraction = 1.0 - clean.len() as f64 / her.len() as f64;
    let (postselected, postselected_stderr) = if clean.is_empty() { (f64::NAN, f64::NAN) } else { rate(&clean) };
    Ok(SyndromeReport { raw, raw_stderr, postselected, postselected_stderr, flagged_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExecConfig {
        ExecConfig::default()
    }

    #[test]
    fn cluster_specs_and_circuit() {
        assert!(ClusterSpec::linear(1).is_err());
        let s = ClusterSpec::linear(3).unwrap();
        assert_eq!(s.stabilizers[1].to_string(), "ZXZ");
        let reg = statesim::final_state(&build_cluster_circuit(&s), &cfg()).unwrap();
        for st in &s.stabilizers {
            assert!((reg.expectation(st).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_readout_matches_direct_expectation() {
        let spec = ClusterSpec::linear(4).unwrap();
        let base = build_cluster_circuit(&spec);
        let direct = statesim::final_state(&base, &cfg()).unwrap();
        let colours = spec.bipartition().unwrap();
        for x_colour in [false, true] {
            let plan = cluster_plan(&colours, x_colour);
            let idx: Vec<usize> = (0..4).filter(|&i| colours[i] == x_colour).collect();
            let supports: Vec<Vec<usize>> = idx.iter().map(|&i| spec.stabilizers[i].support()).collect();
            let vals = stabilizer_readout_via_displacement(&base, &plan, &supports, &cfg()).unwrap();
            for (v, &i) in vals.iter().zip(&idx) {
                let d = direct.expectation(&spec.stabilizers[i]).unwrap();
                assert!((v - d).abs() < 1e-9, "{v} vs {d}");
            }
        }
    }

    #[test]
    fn zero_displacement_reads_z() {
        let mut base = CircuitIR::new(1);
        base.push(Op::Prep { targets: vec![0], method: PrepMethod::Global })
            .push(Op::GlobalRot { angle: 0.7, phase: 0.3 });
        let direct = statesim::final_state(&base, &cfg()).unwrap().expectation(&"Z".parse().unwrap()).unwrap();
        let v = stabilizer_readout_via_displacement(&base, &BasisPlan { displacements: vec![0.0] }, &[vec![0]], &cfg()).unwrap();
        assert!((v[0] - direct).abs() < 1e-12);
        assert!(append_echo_readout(&base, &BasisPlan { displacements: vec![] }).is_err());
    }

    #[test]
    fn logical_bell_state_is_prepared() {
        let code = FourTwoTwoCode::default();
        code.verify().unwrap();
        let reg = statesim::final_state(&logical_bell_circuit(), &cfg()).unwrap();
        assert!(reg.overlap(&code.logical_bell_state()).unwrap() > 1.0 - 1e-9);
        let (xx, zz) = code.bell_correlators().unwrap();
        assert_eq!((xx.to_string(), zz.to_string()), ("IXXI".to_string(), "IZZI".to_string()));
        for s in &code.stabilizers {
            assert!((reg.expectation(s).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_protocols() {
        let r = logical_bell_protocol(&NoiseModel::ideal(), &cfg(), 200, 1).unwrap();
        assert_eq!((r.logical_fidelity, r.discard_fraction, r.physical_fidelity), (1.0, 0.0, 1.0));
        let f = flying_ancilla_prepare(&NoiseModel::ideal(), &cfg(), 0.0, 200, 1).unwrap();
        assert_eq!((f.success, f.discard_fraction, f.herald_failure), (1.0, 0.0, 0.0));
        let s = flying_ancilla_syndrome(&NoiseModel::ideal(), &cfg(), 0.0, 200, 1, None).unwrap();
        assert_eq!((s.raw, s.postselected, s.flagged_fraction), (1.0, 1.0, 0.0));
        let x = flying_ancilla_syndrome(&NoiseModel::ideal(), &cfg(), 0.0, 200, 1, Some((2, Pauli::X))).unwrap();
        assert_eq!(x.flagged_fraction, 1.0);
    }

    #[test]
    fn flying_ancilla_projects_onto_code_space() {
        let mut ir = flying_ancilla_circuit(0.0, false, None);
        ir.ops.pop();
        for shot in 0..16 {
            let (rec, mut reg) = statesim::run_shot(&ir, &NoiseModel::ideal(), &cfg(), 3, shot).unwrap();
            if let Some((q, p)) = herald_correction(rec.outcome(ANCILLA).unwrap()) {
                reg.apply_pauli(q, p).unwrap();
            }
            let p = |s: &str| s.parse::<PauliString>().unwrap();
            assert!((reg.expectation(&p("XXXXI")).unwrap() - 1.0).abs() < 1e-12);
            assert!((reg.expectation(&p("ZZZZI")).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_is_strict() {
        assert!(entanglement_witness(&[1.0, 1.0]));
        assert!(!entanglement_witness(&[1.0, 0.5]));
    }
}
