//! Compilation of circuit IR onto a velocity-zone architecture.
//!
//! Atoms sit either in static traps or at intersections of AOD tones
//! (independent x-tones, shared y-tones). Global beams illuminate every atom;
//! a velocity-selective pulse addresses whichever atoms move at its zone
//! velocity. The compiler emits a strictly sequential timeline.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitIR, Destination, Op, PrepMethod};
use crate::error::{invalid, Error, Result};
use crate::kinematics::{zone_transfer_cost, Trajectory};
use crate::pulsephysics::{spectator_pi_pulse_infidelity, zero_infidelity_velocity, EffectiveKGeometry, LaserField, LAMBDA_CLOCK, LAMBDA_FS};
use crate::vec2::Vec2;

type V2 = Vec2<f64>;

/// Relative slack for floating-point comparisons against limits.
const SLACK: f64 = 1e-9;
/// Speed below which a trap counts as at rest, m/s.
const REST: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomSite {
    Static { site: usize },
    Tweezer { x_tone: usize, y_tone: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub static_sites: Vec<V2>,
    /// Nominal column pitch, meters.
    pub column_pitch: f64,
    /// Initial x-tone positions, strictly increasing.
    pub x_tones: Vec<f64>,
    /// Initial y-tone positions, strictly increasing.
    pub y_tones: Vec<f64>,
    pub atoms: Vec<AtomSite>,
}

impl ArrayGeometry {
    /// All atoms in the AOD: `cols` x-tones at `pitch`, `rows` y-tones at
    /// `row_pitch`; atom `i` sits in column `i % cols`, row `i / cols`.
    pub fn tweezer_grid(cols: usize, rows: usize, pitch: f64, row_pitch: f64) -> Self {
        Self {
            static_sites: Vec::new(),
            column_pitch: pitch,
            x_tones: (0..cols).map(|i| i as f64 * pitch).collect(),
            y_tones: (0..rows).map(|j| j as f64 * row_pitch).collect(),
            atoms: (0..cols * rows).map(|i| AtomSite::Tweezer { x_tone: i % cols, y_tone: i / cols }).collect(),
        }
    }

    /// Four static data atoms along x at `pitch` and two AOD ancillas on one
    /// x-tone, passing `offset` above (atom 4) and below (atom 5) the chain.
    pub fn flying_ancilla(pitch: f64, offset: f64) -> Self {
        Self {
            static_sites: (0..4).map(|i| V2::new(i as f64 * pitch, 0.0)).collect(),
            column_pitch: pitch,
            x_tones: vec![-1.5 * pitch],
            y_tones: vec![-offset, offset],
            atoms: vec![
                AtomSite::Static { site: 0 },
                AtomSite::Static { site: 1 },
                AtomSite::Static { site: 2 },
                AtomSite::Static { site: 3 },
                AtomSite::Tweezer { x_tone: 0, y_tone: 1 },
                AtomSite::Tweezer { x_tone: 0, y_tone: 0 },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.x_tones) || !increasing(&self.y_tones) {
            return Err(invalid("AOD tones must be strictly increasing"));
        }
        for (i, a) in self.static_sites.iter().enumerate() {
            if self.static_sites[i + 1..].iter().any(|b| (*a - *b).norm() == 0.0) {
                return Err(invalid("static sites must be distinct"));
            }
        }
        for (i, a) in self.atoms.iter().enumerate() {
            let ok = match *a {
                AtomSite::Static { site } => site < self.static_sites.len(),
                AtomSite::Tweezer { x_tone, y_tone } => x_tone < self.x_tones.len() && y_tone < self.y_tones.len(),
            };
            if !ok {
                return Err(invalid(format!("atom {i} references a missing site or tone")));
            }
            if self.atoms[..i].contains(a) {
                return Err(invalid(format!("atom {i} shares a trap with another atom")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneRole {
    Storage,
    Prep,
    Readout,
    Reset,
}

impl ZoneRole {
    pub fn name(self) -> &'static str {
        match self {
            ZoneRole::Storage => "storage",
            ZoneRole::Prep => "prep",
            ZoneRole::Readout => "readout",
            ZoneRole::Reset => "reset",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [ZoneRole::Storage, ZoneRole::Prep, ZoneRole::Readout, ZoneRole::Reset].into_iter().find(|r| r.name() == s)
    }
}

/// Drive used for one class of operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub rabi: f64,
    pub wavelength: f64,
    /// Unit propagation direction.
    pub direction: V2,
}

impl Transition {
    pub fn field(&self) -> Result<LaserField<f64>> {
        LaserField::new(self.wavelength, self.direction, self.rabi)
    }

    pub fn k(&self) -> f64 {
        TAU / self.wavelength
    }

    pub fn first_zero_velocity(&self) -> Result<f64> {
        zero_infidelity_velocity(self.rabi, self.wavelength, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTable {
    pub prep: Transition,
    pub readout: Transition,
    pub reset: Transition,
    /// Fine-structure Raman drive for global rotations.
    pub raman: Transition,
    /// Duration of a Rydberg CZ pulse, seconds.
    pub cz_duration: f64,
    /// Duration of a non-selective image, seconds.
    pub image_duration: f64,
}

impl Default for RabiTable {
    fn default() -> Self {
        let three = EffectiveKGeometry::strontium_three_photon();
        let readout = Transition {
            rabi: TAU * 100e3,
            wavelength: three.effective_wavelength(),
            direction: three.k_eff().normalized(),
        };
        Self {
            prep: Transition { rabi: TAU * 40e3, wavelength: LAMBDA_CLOCK, direction: V2::unit_x() },
            reset: readout.clone(),
            readout,
            raman: Transition { rabi: TAU * 120e3, wavelength: LAMBDA_FS, direction: V2::unit_x() },
            cz_duration: 7.6 / (TAU * 5e6),
            image_duration: 20e-6,
        }
    }
}

impl RabiTable {
    pub fn transition(&self, role: ZoneRole) -> Option<&Transition> {
        match role {
            ZoneRole::Storage => None,
            ZoneRole::Prep => Some(&self.prep),
            ZoneRole::Readout => Some(&self.readout),
            ZoneRole::Reset => Some(&self.reset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityZone {
    pub name: String,
    /// Signed speed along `axis`, m/s.
    pub velocity: f64,
    pub axis: V2,
    /// Beam detuning `k·v` for the zone's transition, rad/s.
    pub detuning: f64,
    pub role: ZoneRole,
}

impl VelocityZone {
    pub fn velocity_vector(&self) -> V2 {
        self.axis * self.velocity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneOptions {
    pub max_velocity: f64,
    /// Fixed reset-zone speed, overriding the zero-infidelity choice.
    pub reset_velocity: Option<f64>,
}

impl Default for ZoneOptions {
    fn default() -> Self {
        Self { max_velocity: 1.0, reset_velocity: None }
    }
}

fn role_of(op: &Op) -> Option<ZoneRole> {
    match op {
        Op::Prep { method: PrepMethod::VelocitySelective, .. } => Some(ZoneRole::Prep),
        Op::Measure { selective: true, .. } => Some(ZoneRole::Readout),
        Op::Reset { .. } => Some(ZoneRole::Reset),
        _ => None,
    }
}

/// Storage at rest plus one zone per selective operation class. Candidate
/// speeds are tried in the order `+v₁, −v₁, +v₂, −v₂, …` (zero-infidelity
/// orders of the zone's own transition) and the first one separated from every
/// existing zone by at least one first-zero spacing is taken.
pub fn assign_velocity_zones(ir: &CircuitIR, table: &RabiTable, opts: &ZoneOptions) -> Result<Vec<VelocityZone>> {
    let mut first_use: Vec<(ZoneRole, usize)> = Vec::new();
    for (i, op) in ir.ops.iter().enumerate() {
        let role = match op {
            Op::Move { destination: Destination::Zone { name }, .. } => Some(
                ZoneRole::from_name(name).ok_or_else(|| Error::Compile { op: i, message: format!("unknown zone '{name}'") })?,
            ),
            _ => role_of(op),
        };
        if let Some(r) = role {
            if r != ZoneRole::Storage && !first_use.iter().any(|(x, _)| *x == r) {
                first_use.push((r, i));
            }
        }
    }
    let mut zones = vec![VelocityZone {
        name: ZoneRole::Storage.name().into(),
        velocity: 0.0,
        axis: V2::unit_x(),
        detuning: 0.0,
        role: ZoneRole::Storage,
    }];
    for role in [ZoneRole::Prep, ZoneRole::Readout, ZoneRole::Reset] {
        let Some(&(_, op_index)) = first_use.iter().find(|(r, _)| *r == role) else { continue };
        let tr = table.transition(role).expect("non-storage role has a transition");
        let v1 = tr.first_zero_velocity()?;
        let mut candidates = Vec::new();
        match (role, opts.reset_velocity) {
            (ZoneRole::Reset, Some(v)) => candidates.push(v),
            _ => {
                for order in 1..=64 {
                    let v = zero_infidelity_velocity(tr.rabi, tr.wavelength, order)?;
                    if v > opts.max_velocity * (1.0 + SLACK) {
                        break;
                    }
                    candidates.extend([v, -v]);
                }
            }
        }
        let feasible = |v: f64| {
            let vv = tr.direction * v;
            zones.iter().all(|z| {
                let ours = ((vv - z.velocity_vector()).dot(tr.direction)).abs() >= v1 * (1.0 - SLACK);
                let theirs = match table.transition(z.role) {
                    Some(zt) => {
                        let zv1 = zt.first_zero_velocity().unwrap_or(0.0);
                        ((z.velocity_vector() - vv).dot(zt.direction)).abs() >= zv1 * (1.0 - SLACK)
                    }
                    None => true,
                };
                ours && theirs
            })
        };
        let Some(v) = candidates.into_iter().find(|&v| v.abs() <= opts.max_velocity * (1.0 + SLACK) && feasible(v)) else {
            return Err(Error::Compile {
                op: op_index,
                message: format!("no feasible velocity for the {} zone below {} m/s", role.name(), opts.max_velocity),
            });
        };
        zones.push(VelocityZone { name: role.name().into(), velocity: v, axis: tr.direction, detuning: tr.k() * v, role });
    }
    Ok(zones)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Maximum jerk magnitude, m/s³.
    pub jerk: f64,
    pub v_max: f64,
    pub min_separation: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { jerk: 1.5e8, v_max: 0.5, min_separation: 1.5e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampPurpose {
    ToZone,
    Return,
    Flyby,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum EventBody {
    Pulse {
        label: String,
        field: LaserField<f64>,
        /// Atoms the IR addresses.
        targets: Vec<usize>,
        /// Atoms moving with the zone velocity at the pulse (selective pulses).
        physics_targets: Vec<usize>,
        selective: bool,
        zone: Option<String>,
    },
    Ramp { x_tones: Vec<usize>, y_tones: Vec<usize>, dv: V2, duration: f64, purpose: RampPurpose },
    Move { x_tones: Vec<usize>, y_tones: Vec<usize>, displacement: V2, duration: f64 },
    Cz { pairs: Vec<(usize, usize)>, duration: f64 },
    FlybyGate { ancilla: usize, target: usize, v: f64, distance: f64, duration: f64 },
    Image { targets: Vec<usize>, duration: f64 },
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tones {
    pub x: Vec<Trajectory<f64>>,
    pub y: Vec<Trajectory<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub events: Vec<Event>,
    pub tones: Tones,
    pub duration_s: f64,
    pub zones: Vec<VelocityZone>,
    pub geometry: ArrayGeometry,
    pub limits: Limits,
}

impl Schedule {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn atom_position(&self, atom: usize, t: f64) -> V2 {
        match self.geometry.atoms[atom] {
            AtomSite::Static { site } => self.geometry.static_sites[site],
            AtomSite::Tweezer { x_tone, y_tone } => V2::new(self.tones.x[x_tone].sample(t).x.x, self.tones.y[y_tone].sample(t).x.y),
        }
    }

    pub fn atom_velocity(&self, atom: usize, t: f64) -> V2 {
        match self.geometry.atoms[atom] {
            AtomSite::Static { .. } => V2::zero(),
            AtomSite::Tweezer { x_tone, y_tone } => V2::new(self.tones.x[x_tone].sample(t).v.x, self.tones.y[y_tone].sample(t).v.y),
        }
    }

    fn zone(&self, name: &str) -> Option<&VelocityZone> {
        self.zones.iter().find(|z| z.name == name)
    }
}

struct Builder<'a> {
    geo: &'a ArrayGeometry,
    zones: &'a [VelocityZone],
    table: &'a RabiTable,
    limits: Limits,
    tones: Tones,
    events: Vec<Event>,
    t: f64,
    /// Offset of each atom from home that the IR expects.
    logical_offset: Vec<V2>,
    op: usize,
    /// IR op that emitted each event.
    event_ops: Vec<usize>,
    /// Atoms currently holding a qubit; others may be dragged freely.
    active: Vec<bool>,
}

impl<'a> Builder<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Compile { op: self.op, message: message.into() }
    }

    fn sync(&mut self) -> Result<()> {
        let t = self.t;
        for tr in self.tones.x.iter_mut().chain(self.tones.y.iter_mut()) {
            tr.extend_to(t)?;
        }
        Ok(())
    }

    fn push(&mut self, body: EventBody) {
        self.events.push(Event { t: self.t, body });
        self.event_ops.push(self.op);
    }

    fn tones_of(&self, atom: usize, dir: V2) -> Result<(Vec<usize>, Vec<usize>)> {
        match self.geo.atoms[atom] {
            AtomSite::Static { .. } => Err(self.err(format!("atom {atom} sits in a static trap and cannot move"))),
            AtomSite::Tweezer { x_tone, y_tone } => {
                let xs = if dir.x != 0.0 { vec![x_tone] } else { vec![] };
                let ys = if dir.y != 0.0 { vec![y_tone] } else { vec![] };
                Ok((xs, ys))
            }
        }
    }

    fn tone_set(&self, atoms: &[usize], dir: V2) -> Result<(Vec<usize>, Vec<usize>)> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &a in atoms {
            let (x, y) = self.tones_of(a, dir)?;
            xs.extend(x);
            ys.extend(y);
        }
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        Ok((xs, ys))
    }

    fn position(&self, atom: usize) -> V2 {
        match self.geo.atoms[atom] {
            AtomSite::Static { site } => self.geo.static_sites[site],
            AtomSite::Tweezer { x_tone, y_tone } => {
                V2::new(self.tones.x[x_tone].final_state().x.x, self.tones.y[y_tone].final_state().x.y)
            }
        }
    }

    fn velocity(&self, atom: usize) -> V2 {
        match self.geo.atoms[atom] {
            AtomSite::Static { .. } => V2::zero(),
            AtomSite::Tweezer { x_tone, y_tone } => {
                V2::new(self.tones.x[x_tone].final_state().v.x, self.tones.y[y_tone].final_state().v.y)
            }
        }
    }

    fn home(&self, atom: usize) -> V2 {
        match self.geo.atoms[atom] {
            AtomSite::Static { site } => self.geo.static_sites[site],
            AtomSite::Tweezer { x_tone, y_tone } => V2::new(self.geo.x_tones[x_tone], self.geo.y_tones[y_tone]),
        }
    }

    /// Ramps the tones carrying `atoms` so their velocity changes by `dv`.
    fn ramp(&mut self, atoms: &[usize], dv: V2, purpose: RampPurpose) -> Result<()> {
        if dv.norm() == 0.0 {
            return Ok(());
        }
        let (xs, ys) = self.tone_set(atoms, dv)?;
        let duration = (2.0 * dv.norm() / self.limits.jerk).sqrt();
        self.sync()?;
        for &i in &xs {
            self.tones.x[i].append_velocity_ramp_over(V2::new(dv.x, 0.0), duration)?;
        }
        for &i in &ys {
            self.tones.y[i].append_velocity_ramp_over(V2::new(0.0, dv.y), duration)?;
        }
        self.push(EventBody::Ramp { x_tones: xs, y_tones: ys, dv, duration, purpose });
        self.t += duration;
        Ok(())
    }

    /// Rest-to-rest move of the tones carrying `atom` by `d`.
    fn displace(&mut self, atoms: &[usize], d: V2) -> Result<()> {
        if d.norm() == 0.0 {
            return Ok(());
        }
        if let Some(a) = atoms.iter().find(|&&a| self.velocity(a).norm() > REST) {
            return Err(self.err(format!("atom {a} must be at rest to be displaced")));
        }
        let (xs, ys) = self.tone_set(atoms, d)?;
        let dist = d.norm();
        // Cubic move: jerk 12d/T³, peak speed 3d/(2T).
        let duration = (12.0 * dist / self.limits.jerk).cbrt().max(1.5 * dist / self.limits.v_max);
        self.sync()?;
        for &i in &xs {
            self.tones.x[i].append_move(V2::new(d.x, 0.0), duration)?;
        }
        for &i in &ys {
            self.tones.y[i].append_move(V2::new(0.0, d.y), duration)?;
        }
        self.push(EventBody::Move { x_tones: xs, y_tones: ys, displacement: d, duration });
        self.t += duration;
        Ok(())
    }

    /// Length of the leading run of equal displacements of distinct resting
    /// atoms, each starting from its logical position.
    fn displacement_run(&self, ops: &[Op]) -> usize {
        let Some(Op::Move { destination: Destination::Displacement { dx, dy }, .. }) = ops.first() else { return 0 };
        let mut seen = Vec::new();
        for op in ops {
            let Op::Move { target, destination: Destination::Displacement { dx: x, dy: y } } = op else { break };
            let settled = (self.position(*target) - self.home(*target) - self.logical_offset[*target]).norm() <= 1e-12;
            if (x, y) != (dx, dy) || seen.contains(target) || !settled || self.velocity(*target).norm() > REST {
                break;
            }
            seen.push(*target);
        }
        seen.len()
    }

    /// Moves a run found by [`Self::displacement_run`] as one event.
    fn displace_together(&mut self, ops: &[Op]) -> Result<()> {
        let mut atoms = Vec::new();
        let mut d = V2::zero();
        for op in ops {
            if let Op::Move { target, destination: Destination::Displacement { dx, dy } } = op {
                d = V2::new(*dx, *dy);
                self.logical_offset[*target] += d;
                atoms.push(*target);
            }
        }
        self.displace(&atoms, d)
    }

    /// Checks that every resting tweezer atom sits at its expected offset.
    fn check_offsets(&self) -> Result<()> {
        for a in 0..self.geo.atoms.len() {
            if !self.active[a] || matches!(self.geo.atoms[a], AtomSite::Static { .. }) || self.velocity(a).norm() > REST {
                continue;
            }
            let actual = self.position(a) - self.home(a);
            if (actual - self.logical_offset[a]).norm() > 1e-12 {
                return Err(self.err(format!("atom {a} was dragged by a shared tone to an unintended offset")));
            }
        }
        Ok(())
    }

    fn pulse(&mut self, label: &str, tr: &Transition, detuning: f64, area: f64, targets: &[usize], zone: Option<&VelocityZone>) -> Result<()> {
        self.sync()?;
        let field = tr.field()?.with_detuning(detuning).with_phase(0.0).with_envelope(self.t, area / tr.rabi);
        let physics_targets = match zone {
            Some(z) => (0..self.geo.atoms.len())
                .filter(|&a| (self.velocity(a).dot(z.axis) - z.velocity).abs() <= 0.01 * z.velocity.abs())
                .collect(),
            None => Vec::new(),
        };
        let duration = field.envelope.duration;
        self.push(EventBody::Pulse {
            label: label.into(),
            field,
            targets: targets.to_vec(),
            physics_targets,
            selective: zone.is_some(),
            zone: zone.map(|z| z.name.clone()),
        });
        self.t += duration;
        Ok(())
    }

    fn zone_by_role(&self, role: ZoneRole) -> Result<&'a VelocityZone> {
        self.zones.iter().find(|z| z.role == role).ok_or_else(|| self.err(format!("no {} zone assigned", role.name())))
    }

    /// Selective pulse on `targets`, ramping them into the zone first and
    /// back to their previous velocity afterwards if needed.
    fn selective(&mut self, role: ZoneRole, label: &str, targets: &[usize]) -> Result<()> {
        let zone = self.zone_by_role(role)?;
        let tr = self.table.transition(role).expect("selective role has a transition").clone();
        let want = zone.velocity_vector();
        let mut restore: Vec<(usize, V2)> = Vec::new();
        for &a in targets {
            let v = self.velocity(a);
            if (v - want).norm() > 0.01 * want.norm() {
                restore.push((a, v));
            }
        }
        // Atoms starting at the same velocity ramp together so tones shared
        // between targets stay in step.
        let mut groups: Vec<(V2, Vec<usize>)> = Vec::new();
        for &(a, v) in &restore {
            match groups.iter_mut().find(|(gv, _)| (*gv - v).norm() <= REST) {
                Some((_, atoms)) => atoms.push(a),
                None => groups.push((v, vec![a])),
            }
        }
        for (v, atoms) in &groups {
            self.ramp(atoms, want - *v, RampPurpose::ToZone)?;
        }
        self.pulse(label, &tr, zone.detuning, PI, targets, Some(zone))?;
        for (v, atoms) in &groups {
            let now = self.velocity(atoms[0]);
            if (now - *v).norm() > REST {
                self.ramp(atoms, *v - now, RampPurpose::Return)?;
            }
        }
        Ok(())
    }

    fn local_z(&mut self, target: usize, angle: f64) -> Result<()> {
        let wrapped = angle - TAU * ((angle + PI) / TAU).floor();
        let wrapped = if wrapped == -PI { PI } else { wrapped };
        let dx = wrapped * LAMBDA_FS / (4.0 * PI);
        if dx == 0.0 {
            return Ok(());
        }
        if let AtomSite::Tweezer { x_tone, .. } = self.geo.atoms[target] {
            let shared: Vec<usize> = (0..self.geo.atoms.len())
                .filter(|&a| a != target && matches!(self.geo.atoms[a], AtomSite::Tweezer { x_tone: x, .. } if x == x_tone))
                .collect();
            if !shared.is_empty() {
                return Err(self.err(format!("local_z on atom {target} would also rotate atoms {shared:?} on its column")));
            }
        }
        let raman = self.table.raman.clone();
        self.displace(&[target], V2::new(dx, 0.0))?;
        self.pulse("raman", &raman, 0.0, PI, &[], None)?;
        self.displace(&[target], V2::new(-dx, 0.0))?;
        self.pulse("raman", &raman, 0.0, PI, &[], None)
    }

    fn flyby(&mut self, ancilla: usize, targets: &[usize], v: f64) -> Result<()> {
        if !(v > 0.0) || v > self.limits.v_max * (1.0 + SLACK) {
            return Err(self.err(format!("fly-by speed {v} m/s outside (0, {}]", self.limits.v_max)));
        }
        let start = self.position(ancilla);
        let first = self.position(targets[0]);
        let dir = if targets.len() > 1 {
            (self.position(targets[targets.len() - 1]) - first).normalized()
        } else {
            let d = first - start;
            if d.x.abs() >= d.y.abs() { V2::new(d.x.signum(), 0.0) } else { V2::new(0.0, d.y.signum()) }
        };
        if dir.x != 0.0 && dir.y != 0.0 {
            return Err(self.err("fly-by path must be parallel to a tone axis"));
        }
        let v_now = self.velocity(ancilla);
        self.ramp(&[ancilla], dir * v - v_now, RampPurpose::Flyby)?;
        let cruise_start = self.t;
        let p0 = self.position(ancilla);
        let dur = self.table.cz_duration;
        for &tg in targets {
            let rel = self.position(tg) - p0;
            let along = rel.dot(dir);
            let t_gate = cruise_start + along / v - dur / 2.0;
            if t_gate < self.t - SLACK * dur {
                return Err(self.err(format!("fly-by reaches atom {tg} before it is at speed or out of order")));
            }
            let distance = (rel - dir * along).norm();
            self.t = self.t.max(t_gate);
            self.sync()?;
            self.push(EventBody::FlybyGate { ancilla, target: tg, v, distance, duration: dur });
            self.t += dur;
        }
        self.ramp(&[ancilla], -(dir * v), RampPurpose::Return)
    }

    fn compile_op(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::Prep { targets, .. } | Op::Reset { targets } => targets.iter().for_each(|&a| self.active[a] = true),
            Op::Measure { targets, .. } => targets.iter().for_each(|&a| self.active[a] = false),
            _ => {}
        }
        match op {
            Op::Prep { targets, method: PrepMethod::Global } => {
                let tr = self.table.prep.clone();
                self.pulse("prep", &tr, 0.0, PI, targets, None)?;
            }
            Op::Prep { targets, method: PrepMethod::VelocitySelective } => self.selective(ZoneRole::Prep, "prep", targets)?,
            Op::GlobalRot { angle, phase } => {
                let raman = self.table.raman.clone();
                let area = angle.abs();
                if area > 0.0 {
                    self.sync()?;
                    let field = raman
                        .field()?
                        .with_phase(phase + if *angle < 0.0 { PI } else { 0.0 })
                        .with_envelope(self.t, area / raman.rabi);
                    let duration = field.envelope.duration;
                    self.push(EventBody::Pulse {
                        label: "raman".into(),
                        field,
                        targets: Vec::new(),
                        physics_targets: Vec::new(),
                        selective: false,
                        zone: None,
                    });
                    self.t += duration;
                }
            }
            Op::LocalZ { target, angle } => self.local_z(*target, *angle)?,
            Op::Cz { pairs } => {
                self.sync()?;
                self.push(EventBody::Cz { pairs: pairs.clone(), duration: self.table.cz_duration });
                self.t += self.table.cz_duration;
            }
            Op::FlybyCz { ancilla, targets, v } => self.flyby(*ancilla, targets, *v)?,
            Op::Measure { targets, selective: true, .. } => self.selective(ZoneRole::Readout, "readout", targets)?,
            Op::Measure { targets, selective: false, .. } => {
                self.sync()?;
                self.push(EventBody::Image { targets: targets.clone(), duration: self.table.image_duration });
                self.t += self.table.image_duration;
            }
            Op::Reset { targets } => self.selective(ZoneRole::Reset, "reset", targets)?,
            Op::Move { target, destination } => match destination {
                Destination::Displacement { dx, dy } => {
                    let d = V2::new(*dx, *dy);
                    self.logical_offset[*target] += d;
                    let want = self.home(*target) + self.logical_offset[*target];
                    let now = self.position(*target);
                    self.displace(&[*target], want - now)?;
                }
                Destination::Home => {
                    self.logical_offset[*target] = V2::zero();
                    if self.velocity(*target).norm() > REST {
                        self.ramp(&[*target], -self.velocity(*target), RampPurpose::Return)?;
                    }
                    let now = self.position(*target);
                    self.displace(&[*target], self.home(*target) - now)?;
                }
                Destination::Zone { name } => {
                    let zone = self.zones.iter().find(|z| &z.name == name).ok_or_else(|| self.err(format!("unknown zone '{name}'")))?;
                    let dv = zone.velocity_vector() - self.velocity(*target);
                    self.ramp(&[*target], dv, RampPurpose::ToZone)?;
                    if zone.role == ZoneRole::Storage {
                        // atoms parked back in storage stay wherever they stopped
                        self.logical_offset[*target] = self.position(*target) - self.home(*target);
                    }
                }
            },
            // simulation-only error injection has no physical counterpart
            Op::Pauli { .. } => {}
            Op::Barrier => {
                self.sync()?;
                self.push(EventBody::Barrier);
            }
        }
        Ok(())
    }
}

/// Compiles `ir` to a timed schedule and rejects it if [`validate`] reports
/// any violation.
pub fn compile(ir: &CircuitIR, geometry: &ArrayGeometry, zones: &[VelocityZone], table: &RabiTable, limits: &Limits) -> Result<Schedule> {
    ir.validate()?;
    geometry.validate()?;
    if geometry.atoms.len() < ir.n_atoms {
        return Err(invalid(format!("geometry holds {} atoms, circuit needs {}", geometry.atoms.len(), ir.n_atoms)));
    }
    let tones = Tones {
        x: geometry.x_tones.iter().enumerate().map(|(i, &x)| Trajectory::at_rest(format!("x{i}"), 0.0, V2::new(x, 0.0))).collect(),
        y: geometry.y_tones.iter().enumerate().map(|(i, &y)| Trajectory::at_rest(format!("y{i}"), 0.0, V2::new(0.0, y))).collect(),
    };
    let mut b = Builder {
        geo: geometry,
        zones,
        table,
        limits: *limits,
        tones,
        events: Vec::new(),
        t: 0.0,
        logical_offset: vec![V2::zero(); geometry.atoms.len()],
        op: 0,
        event_ops: Vec::new(),
        active: vec![false; geometry.atoms.len()],
    };
    let mut in_move_batch = false;
    let mut i = 0;
    while i < ir.ops.len() {
        let op = &ir.ops[i];
        b.op = i;
        let is_move = matches!(op, Op::Move { destination: Destination::Displacement { .. } | Destination::Home, .. });
        if in_move_batch && !is_move {
            b.op = i - 1;
            b.check_offsets()?;
            b.op = i;
        }
        in_move_batch = is_move;
        let run = b.displacement_run(&ir.ops[i..]);
        if run > 1 {
            b.displace_together(&ir.ops[i..i + run])?;
            i += run;
            continue;
        }
        b.compile_op(op)?;
        i += 1;
    }
    b.op = ir.ops.len().saturating_sub(1);
    if in_move_batch {
        b.check_offsets()?;
    }
    b.sync()?;
    let event_ops = std::mem::take(&mut b.event_ops);
    let schedule = Schedule { events: b.events, tones: b.tones, duration_s: b.t, zones: zones.to_vec(), geometry: geometry.clone(), limits: *limits };
    if let Some(v) = validate(&schedule).into_iter().next() {
        let op = v.event.and_then(|e| event_ops.get(e).copied()).unwrap_or(ir.ops.len().saturating_sub(1));
        return Err(Error::Compile { op, message: v.to_string() });
    }
    Ok(schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    ToneCrossing,
    Separation,
    JerkLimit,
    VelocityLimit,
    VelocityConstancy,
    DetuningMismatch,
    ZoneDetuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: f64,
    pub event: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.event {
            Some(e) => write!(f, "{:?} at event {e} (t = {:.3e} s): {}", self.kind, self.t, self.message),
            None => write!(f, "{:?} at t = {:.3e} s: {}", self.kind, self.t, self.message),
        }
    }
}

fn sample_times(s: &Schedule) -> Vec<f64> {
    let mut ts: Vec<f64> = vec![0.0, s.duration_s];
    for tr in s.tones.x.iter().chain(&s.tones.y) {
        for seg in &tr.segments {
            for k in 0..=8 {
                ts.push(seg.t0 + seg.duration * k as f64 / 8.0);
            }
        }
    }
    ts.extend(s.events.iter().map(|e| e.t));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn event_index_at(s: &Schedule, t: f64) -> Option<usize> {
    s.events.iter().rposition(|e| e.t <= t)
}

/// Checks tone ordering, trap separation, motion limits, velocity constancy
/// and detunings of selective pulses.
pub fn validate(s: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, t: f64, message: String| {
        if !out.iter().any(|v: &Violation| v.kind == kind) {
            out.push(Violation { kind, t, event: event_index_at(s, t), message });
        }
    };
    for (axis, tones) in [("x", &s.tones.x), ("y", &s.tones.y)] {
        for tr in tones.iter() {
            for seg in &tr.segments {
                let j = seg.jerk().norm();
                if j > s.limits.jerk * (1.0 + 1e-6) {
                    push(ViolationKind::JerkLimit, seg.t0, format!("{axis}-tone {} jerk {j:.3e} m/s³ exceeds {:.3e}", tr.label, s.limits.jerk));
                }
            }
        }
    }
    let n = s.geometry.atoms.len();
    for t in sample_times(s) {
        for (axis, tones) in [("x", &s.tones.x), ("y", &s.tones.y)] {
            let pos: Vec<f64> = tones.iter().map(|tr| {
                let p = tr.sample(t).x;
                if axis == "x" { p.x } else { p.y }
            }).collect();
            if let Some(i) = pos.windows(2).position(|w| w[1] <= w[0]) {
                push(ViolationKind::ToneCrossing, t, format!("{axis}-tones {i} and {} cross", i + 1));
            }
            for tr in tones.iter() {
                let v = tr.sample(t).v.norm();
                if v > s.limits.v_max * (1.0 + 1e-6) {
                    push(ViolationKind::VelocityLimit, t, format!("{axis}-tone {} moves at {v:.4} m/s", tr.label));
                }
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                let d = (s.atom_position(a, t) - s.atom_position(b, t)).norm();
                if d < s.limits.min_separation * (1.0 - 1e-9) {
                    push(ViolationKind::Separation, t, format!("atoms {a} and {b} are {:.3} µm apart", d * 1e6));
                }
            }
        }
    }
    for (i, e) in s.events.iter().enumerate() {
        let EventBody::Pulse { field, physics_targets, targets, selective: true, zone, .. } = &e.body else { continue };
        let Some(z) = zone.as_deref().and_then(|name| s.zone(name)) else {
            out.push(Violation { kind: ViolationKind::ZoneDetuning, t: e.t, event: Some(i), message: "selective pulse without a known zone".into() });
            continue;
        };
        if (field.detuning - z.detuning).abs() > 1e-9 * z.detuning.abs().max(1.0) {
            out.push(Violation { kind: ViolationKind::ZoneDetuning, t: e.t, event: Some(i), message: format!("pulse detuning differs from zone {}", z.name) });
        }
        let (t0, t1) = (field.envelope.start, field.envelope.end());
        for &a in targets.iter().chain(physics_targets) {
            let vs: Vec<V2> = [t0, 0.5 * (t0 + t1), t1].iter().map(|&t| s.atom_velocity(a, t)).collect();
            if vs.iter().any(|v| (v.dot(z.axis) - z.velocity).abs() > 0.01 * z.velocity.abs()) {
                out.push(Violation {
                    kind: ViolationKind::VelocityConstancy,
                    t: e.t,
                    event: Some(i),
                    message: format!("atom {a} is not at the {} zone velocity during the pulse", z.name),
                });
                break;
            }
            let mismatch = (field.detuning - field.resonant_detuning(vs[1])).abs();
            if mismatch > field.rabi / 100.0 {
                out.push(Violation {
                    kind: ViolationKind::DetuningMismatch,
                    t: e.t,
                    event: Some(i),
                    message: format!("atom {a} is {mismatch:.3e} rad/s off resonance"),
                });
                break;
            }
        }
    }
    out
}

/// Spectator infidelity accrued per atom in one selective pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkEvent {
    pub event: usize,
    pub per_atom: Vec<f64>,
}

/// Per-event spectator infidelities: every atom not moving with the pulse's
/// zone sees `I(d/λ)` with `d = |Δv|·π/Ω` the distance it travels relative to
/// the targets during the π pulse.
pub fn crosstalk_events(s: &Schedule) -> Result<Vec<CrosstalkEvent>> {
    let n = s.geometry.atoms.len();
    let mut out = Vec::new();
    for (i, e) in s.events.iter().enumerate() {
        let EventBody::Pulse { field, physics_targets, selective: true, zone, .. } = &e.body else { continue };
        let z = zone.as_deref().and_then(|name| s.zone(name)).ok_or_else(|| invalid("selective pulse without a known zone"))?;
        let mid = 0.5 * (field.envelope.start + field.envelope.end());
        let lambda = field.wavelength();
        let mut per_atom = vec![0.0; n];
        for (a, slot) in per_atom.iter_mut().enumerate() {
            if physics_targets.contains(&a) {
                continue;
            }
            let dv = (s.atom_velocity(a, mid).dot(z.axis) - z.velocity).abs();
            *slot = spectator_pi_pulse_infidelity(dv * PI / field.rabi / lambda)?;
        }
        out.push(CrosstalkEvent { event: i, per_atom });
    }
    Ok(out)
}

/// Per-atom totals of [`crosstalk_events`].
pub fn crosstalk_report(s: &Schedule) -> Result<Vec<f64>> {
    let mut total = vec![0.0; s.geometry.atoms.len()];
    for e in crosstalk_events(s)? {
        for (t, x) in total.iter_mut().zip(e.per_atom) {
            *t += x;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureReport {
    pub jerk: f64,
    pub spatial_time: f64,
    pub spatial_distance: f64,
    pub velocity_time: f64,
    pub velocity_distance: f64,
    pub time_ratio: f64,
    pub distance_ratio: f64,
}

impl ArchitectureReport {
    /// `metric,spatial,velocity,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,spatial,velocity,ratio\n");
        let _ = writeln!(s, "time_s,{:e},{:e},{}", self.spatial_time, self.velocity_time, self.time_ratio);
        let _ = writeln!(s, "distance_m,{:e},{:e},{}", self.spatial_distance, self.velocity_distance, self.distance_ratio);
        s
    }
}

/// Spatial shuttle of `distance` in `shuttle_time` (cubic, jerk `12d/T³`)
/// against a velocity-zone transfer of `dv` at the same jerk. A zero `dv`
/// gives infinite ratios.
pub fn compare_architectures(distance: f64, shuttle_time: f64, dv: f64) -> Result<ArchitectureReport> {
    if !(distance > 0.0 && shuttle_time > 0.0) || !(dv >= 0.0) {
        return Err(invalid("distance and time must be positive and dv non-negative"));
    }
    let jerk = 12.0 * distance / shuttle_time.powi(3);
    let (vt, vd) = if dv == 0.0 { (0.0, 0.0) } else { zone_transfer_cost(dv, jerk)? };
    Ok(ArchitectureReport {
        jerk,
        spatial_time: shuttle_time,
        spatial_distance: distance,
        velocity_time: vt,
        velocity_distance: vd,
        time_ratio: shuttle_time / vt,
        distance_ratio: distance / vd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Basis;

    fn prep_table() -> RabiTable {
        RabiTable::default()
    }

    #[test]
    fn zone_assignment() {
        let table = prep_table();
        let mut ir = CircuitIR::new(2);
        ir.push(Op::Prep { targets: vec![0], method: PrepMethod::VelocitySelective });
        let z = assign_velocity_zones(&ir, &table, &ZoneOptions::default()).unwrap();
        assert_eq!(z.len(), 2);
        assert!((z[1].velocity - 0.0484).abs() < 5e-5, "{}", z[1].velocity);

        let mut plain = CircuitIR::new(1);
        plain.push(Op::GlobalRot { angle: 1.0, phase: 0.0 });
        assert_eq!(assign_velocity_zones(&plain, &table, &ZoneOptions::default()).unwrap().len(), 1);

        let mut r = CircuitIR::new(1);
        r.push(Op::Reset { targets: vec![0] });
        let opts = ZoneOptions { reset_velocity: Some(0.26), ..Default::default() };
        assert_eq!(assign_velocity_zones(&r, &table, &opts).unwrap()[1].velocity, 0.26);

        let tight = ZoneOptions { max_velocity: 0.01, ..Default::default() };
        assert!(matches!(assign_velocity_zones(&ir, &table, &tight), Err(Error::Compile { op: 0, .. })));
    }

    #[test]
    fn two_classes_on_one_axis_take_opposite_signs() {
        let mut table = prep_table();
        table.readout = table.prep.clone();
        let mut ir = CircuitIR::new(1);
        ir.push(Op::Prep { targets: vec![0], method: PrepMethod::VelocitySelective })
            .push(Op::Measure { targets: vec![0], basis: Basis::Z, selective: true });
        let z = assign_velocity_zones(&ir, &table, &ZoneOptions::default()).unwrap();
        assert!(z[1].velocity > 0.0 && (z[2].velocity + z[1].velocity).abs() < 1e-15);
    }

    fn grid_compile(ir: &CircuitIR) -> Result<Schedule> {
        let geo = ArrayGeometry::tweezer_grid(2, 2, 4.3e-6, 4.0e-6);
        let table = prep_table();
        let zones = assign_velocity_zones(ir, &table, &ZoneOptions::default())?;
        compile(ir, &geo, &zones, &table, &Limits::default())
    }

    #[test]
    fn prep_and_measure_structure() {
        let mut ir = CircuitIR::new(4);
        ir.push(Op::Prep { targets: vec![1, 3], method: PrepMethod::VelocitySelective })
            .push(Op::Measure { targets: vec![1, 3], basis: Basis::Z, selective: true });
        let s = grid_compile(&ir).unwrap();
        let ramps: Vec<RampPurpose> = s
            .events
            .iter()
            .filter_map(|e| if let EventBody::Ramp { purpose, .. } = e.body { Some(purpose) } else { None })
            .collect();
        let pulses = s.events.iter().filter(|e| matches!(e.body, EventBody::Pulse { .. })).count();
        assert_eq!(ramps.iter().filter(|p| **p == RampPurpose::ToZone).count(), 2);
        assert_eq!(ramps.iter().filter(|p| **p == RampPurpose::Return).count(), 2);
        assert_eq!(pulses, 2);
        assert!(validate(&s).is_empty());
        let back = Schedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn local_z_displacement() {
        let mut ir = CircuitIR::new(2);
        ir.push(Op::LocalZ { target: 1, angle: PI / 2.0 });
        let geo = ArrayGeometry::tweezer_grid(2, 1, 4.3e-6, 4.0e-6);
        let table = prep_table();
        let s = compile(&ir, &geo, &[], &table, &Limits::default()).unwrap();
        let EventBody::Move { displacement, .. } = s.events[0].body else { panic!("expected a move") };
        assert!((displacement.x - LAMBDA_FS / 8.0).abs() < 1e-15);
        assert!((displacement.x - 2.15e-6).abs() < 1e-12);
    }

    #[test]
    fn flying_ancilla_protocol_compiles() {
        let geo = ArrayGeometry::flying_ancilla(4.3e-6, 2e-6);
        let table = prep_table();
        for syndrome in [false, true] {
            let ir = crate::codes::flying_ancilla_circuit(0.1, syndrome, None);
            let zones = assign_velocity_zones(&ir, &table, &ZoneOptions::default()).unwrap();
            let s = compile(&ir, &geo, &zones, &table, &Limits::default()).unwrap();
            let gates = s.events.iter().filter(|e| matches!(e.body, EventBody::FlybyGate { .. })).count();
            assert_eq!(gates, if syndrome { 8 } else { 4 });
            assert!(validate(&s).is_empty());
            assert_eq!(s.to_json().unwrap(), compile(&ir, &geo, &zones, &table, &Limits::default()).unwrap().to_json().unwrap());
        }
    }

    #[test]
    fn code_circuits_compile_on_a_row() {
        use crate::codes::{append_echo_readout, build_linear_cluster_circuit, cluster_plan, logical_bell_circuit};
        let table = prep_table();
        let bell = logical_bell_circuit();
        let geo = ArrayGeometry::tweezer_grid(4, 1, 4.3e-6, 4e-6);
        let s = compile(&bell, &geo, &[], &table, &Limits::default()).unwrap();
        // local Hadamard = two local rotations, each moving atoms 2 and 3 out and back together
        let moves = s.events.iter().filter(|e| matches!(e.body, EventBody::Move { .. })).count();
        assert_eq!(moves, 4);

        let base = build_linear_cluster_circuit(6).unwrap();
        let colours: Vec<bool> = (0..6).map(|i| i % 2 == 1).collect();
        let geo = ArrayGeometry::tweezer_grid(6, 1, 4.3e-6, 4e-6);
        for x_colour in [false, true] {
            let ir = append_echo_readout(&base, &cluster_plan(&colours, x_colour)).unwrap();
            let s = compile(&ir, &geo, &[], &table, &Limits::default()).unwrap();
            assert!(validate(&s).is_empty());
        }
    }

    #[test]
    fn flyby_gate_spacing() {
        let geo = ArrayGeometry::flying_ancilla(4.3e-6, 2e-6);
        let mut ir = CircuitIR::new(6);
        ir.push(Op::FlybyCz { ancilla: 4, targets: vec![0, 1, 2, 3], v: 0.1 });
        let s = compile(&ir, &geo, &[], &prep_table(), &Limits::default()).unwrap();
        let gates: Vec<(f64, f64)> = s
            .events
            .iter()
            .filter_map(|e| if let EventBody::FlybyGate { distance, .. } = e.body { Some((e.t, distance)) } else { None })
            .collect();
        assert_eq!(gates.len(), 4);
        for w in gates.windows(2) {
            assert!(((w[1].0 - w[0].0) - 4.3e-6 / 0.1).abs() < 1e-12);
        }
        assert!(gates.iter().all(|g| (g.1 - 2e-6).abs() < 1e-12));
    }

    #[test]
    fn validate_flags_constructed_faults() {
        let mut ir = CircuitIR::new(4);
        ir.push(Op::Prep { targets: vec![1, 3], method: PrepMethod::VelocitySelective });
        let s = grid_compile(&ir).unwrap();

        let mut crossing = s.clone();
        crossing.tones.x[0] = Trajectory::at_rest("x0", 0.0, V2::new(10e-6, 0.0));
        let v = validate(&crossing);
        assert_eq!(v.iter().filter(|v| v.kind == ViolationKind::ToneCrossing).count(), 1);

        let mut during_ramp = s.clone();
        let ramp_t = during_ramp.events.iter().find(|e| matches!(e.body, EventBody::Ramp { .. })).unwrap().t;
        for e in &mut during_ramp.events {
            if let EventBody::Pulse { field, .. } = &mut e.body {
                field.envelope.start = ramp_t;
            }
        }
        assert!(validate(&during_ramp).iter().any(|v| v.kind == ViolationKind::VelocityConstancy));
    }

    #[test]
    fn crosstalk_of_stationary_spectators() {
        let mut ir = CircuitIR::new(4);
        ir.push(Op::Prep { targets: vec![1, 3], method: PrepMethod::VelocitySelective });
        let s = grid_compile(&ir).unwrap();
        let total = crosstalk_report(&s).unwrap();
        // first-zero separation: spectators untouched, targets skipped
        assert!(total.iter().all(|x| *x < 1e-20), "{total:?}");
        let events = crosstalk_events(&s).unwrap();
        assert_eq!(events.len(), 1);
    }

    #[test]
    fn crosstalk_matches_direct_integration() {
        use crate::pulsephysics::excitation_probability;
        let geo = ArrayGeometry::flying_ancilla(4.3e-6, 4e-6);
        let table = prep_table();
        let mut ir = CircuitIR::new(6);
        ir.push(Op::Reset { targets: vec![4] });
        // off a zero point so the static data atoms pick up real crosstalk
        let v1 = table.reset.first_zero_velocity().unwrap();
        let opts = ZoneOptions { reset_velocity: Some(1.5 * v1), ..Default::default() };
        let zones = assign_velocity_zones(&ir, &table, &opts).unwrap();
        let s = compile(&ir, &geo, &zones, &table, &Limits::default()).unwrap();
        let events = crosstalk_events(&s).unwrap();
        let field = s.events.iter().find_map(|e| match &e.body {
            EventBody::Pulse { field, selective: true, .. } => Some(*field),
            _ => None,
        }).unwrap();
        let direct = excitation_probability(&field, V2::zero()).unwrap();
        assert!(direct > 1e-4, "{direct}");
        for a in 0..4 {
            let r = events[0].per_atom[a];
            assert!((r - direct).abs() < 0.1 * direct, "atom {a}: {r} vs {direct}");
        }
    }

    #[test]
    fn architecture_comparison() {
        let r = compare_architectures(100e-6, 200e-6, 0.05).unwrap();
        assert!((r.jerk - 1.5e8).abs() < 1.0);
        assert!((r.velocity_time - 25.8e-6).abs() < 0.01 * 25.8e-6);
        assert!((r.velocity_distance - 860e-9).abs() < 0.01 * 860e-9);
        assert!((r.time_ratio - 7.75).abs() < 0.05 && (r.distance_ratio - 116.0).abs() < 1.0);
        let r4 = compare_architectures(100e-6, 200e-6, 0.2).unwrap();
        assert!((r.time_ratio / r4.time_ratio - 2.0).abs() < 1e-12);
        assert!(compare_architectures(100e-6, 200e-6, 0.0).unwrap().time_ratio.is_infinite());
    }
}
