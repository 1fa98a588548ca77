//! Circuit intermediate representation shared by the simulator and the compiler.
//!
//! Atoms are addressed by index. Single-qubit control is global: a
//! [`Op::GlobalRot`] acts on every atom in the qubit manifold, with each atom's
//! axis phase shifted by its displacement along the Raman wavevector.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pauli::Pauli;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepMethod {
    /// Non-selective preparation of every listed atom.
    Global,
    /// Velocity-selective transfer of moving targets; stationary atoms are spectators.
    VelocitySelective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Destination {
    /// Relative displacement in meters.
    Displacement { dx: f64, dy: f64 },
    /// Accelerate into a named velocity zone.
    Zone { name: String },
    /// Return to the home site, at rest.
    Home,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Prep { targets: Vec<usize>, method: PrepMethod },
    GlobalRot { angle: f64, phase: f64 },
    LocalZ { target: usize, angle: f64 },
    Cz { pairs: Vec<(usize, usize)> },
    /// Moving `ancilla` passes each target in order at speed `v` (m/s).
    FlybyCz { ancilla: usize, targets: Vec<usize>, v: f64 },
    Measure { targets: Vec<usize>, basis: Basis, selective: bool },
    Reset { targets: Vec<usize> },
    Move { target: usize, destination: Destination },
    /// Deterministic Pauli, used for error injection.
    Pauli { target: usize, pauli: Pauli },
    Barrier,
}

impl Op {
    /// Atoms the op names explicitly.
    pub fn atoms(&self) -> Vec<usize> {
        match self {
            Op::Prep { targets, .. } | Op::Measure { targets, .. } | Op::Reset { targets } => targets.clone(),
            Op::LocalZ { target, .. } | Op::Move { target, .. } | Op::Pauli { target, .. } => vec![*target],
            Op::Cz { pairs } => pairs.iter().flat_map(|&(a, b)| [a, b]).collect(),
            Op::FlybyCz { ancilla, targets, .. } => std::iter::once(*ancilla).chain(targets.iter().copied()).collect(),
            Op::GlobalRot { .. } | Op::Barrier => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Prep { .. } => "prep",
            Op::GlobalRot { .. } => "global_rot",
            Op::LocalZ { .. } => "local_z",
            Op::Cz { .. } => "cz",
            Op::FlybyCz { .. } => "flyby_cz",
            Op::Measure { .. } => "measure",
            Op::Reset { .. } => "reset",
            Op::Move { .. } => "move",
            Op::Pauli { .. } => "pauli",
            Op::Barrier => "barrier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitIR {
    pub n_atoms: usize,
    pub ops: Vec<Op>,
}

impl CircuitIR {
    pub fn new(n_atoms: usize) -> Self {
        Self { n_atoms, ops: Vec::new() }
    }

    pub fn push(&mut self, op: Op) -> &mut Self {
        self.ops.push(op);
        self
    }

    /// Checks atom indices, pair disjointness and flying-ancilla distinctness.
    pub fn validate(&self) -> Result<()> {
        for (i, op) in self.ops.iter().enumerate() {
            let err = |message: String| Error::Compile { op: i, message };
            for a in op.atoms() {
                if a >= self.n_atoms {
                    return Err(err(format!("{} names atom {a} but the circuit has {}", op.name(), self.n_atoms)));
                }
            }
            match op {
                Op::Cz { pairs } => {
                    let atoms = op.atoms();
                    if pairs.iter().any(|(a, b)| a == b) {
                        return Err(err("cz pair acts twice on one atom".into()));
                    }
                    if has_duplicates(&atoms) {
                        return Err(err("cz pairs overlap".into()));
                    }
                }
                Op::FlybyCz { ancilla, targets, v } => {
                    if targets.contains(ancilla) || has_duplicates(targets) {
                        return Err(err("fly-by targets must be distinct from each other and the ancilla".into()));
                    }
                    if !v.is_finite() {
                        return Err(err("fly-by velocity must be finite".into()));
                    }
                }
                Op::GlobalRot { angle, phase } if !(angle.is_finite() && phase.is_finite()) => {
                    return Err(err("rotation parameters must be finite".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ir: Self = serde_json::from_str(s)?;
        if ir.n_atoms == 0 {
            return Err(invalid("circuit needs at least one atom"));
        }
        Ok(ir)
    }
}

fn has_duplicates(xs: &[usize]) -> bool {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.windows(2).any(|w| w[0] == w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip() {
        let mut ir = CircuitIR::new(3);
        ir.push(Op::Prep { targets: vec![0, 1, 2], method: PrepMethod::Global })
            .push(Op::GlobalRot { angle: 1.0, phase: 0.5 })
            .push(Op::Cz { pairs: vec![(0, 1)] })
            .push(Op::Move { target: 2, destination: Destination::Zone { name: "prep".into() } })
            .push(Op::Measure { targets: vec![0, 1, 2], basis: Basis::X, selective: false });
        let back = CircuitIR::from_json(&ir.to_json().unwrap()).unwrap();
        assert_eq!(back, ir);
    }

    #[test]
    fn rejects_bad_indices_and_overlaps() {
        let mut ir = CircuitIR::new(2);
        ir.push(Op::Cz { pairs: vec![(0, 2)] });
        assert!(matches!(ir.validate(), Err(Error::Compile { op: 0, .. })));
        let mut ir = CircuitIR::new(3);
        ir.push(Op::Barrier).push(Op::Cz { pairs: vec![(0, 1), (1, 2)] });
        assert!(matches!(ir.validate(), Err(Error::Compile { op: 1, .. })));
    }
}
