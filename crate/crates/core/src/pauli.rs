//! Pauli strings with phase tracking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// (x, z) symplectic bits.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Product `self·other` as (power of i, Pauli).
    pub fn mul(self, other: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (0, p),
            (X, X) | (Y, Y) | (Z, Z) => (0, I),
            (X, Y) => (1, Z),
            (Y, X) => (3, Z),
            (Y, Z) => (1, X),
            (Z, Y) => (3, X),
            (Z, X) => (1, Y),
            (X, Z) => (3, Y),
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// `i^phase · P₀ ⊗ P₁ ⊗ …`, with qubit `q` stored at index `q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub ops: Vec<Pauli>,
    /// Power of `i` (0..4).
    pub phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { ops: vec![Pauli::I; n], phase: 0 }
    }

    /// String with `p` on each listed qubit and identity elsewhere.
    pub fn from_sites(n: usize, sites: &[(usize, Pauli)]) -> Result<Self> {
        let mut s = Self::identity(n);
        for &(q, p) in sites {
            if q >= n {
                return Err(invalid(format!("qubit {q} out of range for {n} qubits")));
            }
            s.ops[q] = p;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.ops.iter().filter(|p| **p != Pauli::I).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.ops.iter().enumerate().filter(|(_, p)| **p != Pauli::I).map(|(q, _)| q).collect()
    }

    /// Masks of qubits with an X component and with a Z component.
    pub fn masks(&self) -> (u64, u64) {
        let (mut xm, mut zm) = (0u64, 0u64);
        for (q, p) in self.ops.iter().enumerate() {
            let (x, z) = p.bits();
            if x {
                xm |= 1 << q;
            }
            if z {
                zm |= 1 << q;
            }
        }
        (xm, zm)
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        let (x1, z1) = self.masks();
        let (x2, z2) = other.masks();
        ((x1 & z2).count_ones() + (z1 & x2).count_ones()) % 2 == 0
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(invalid("Pauli strings differ in length"));
        }
        let mut phase = (self.phase + other.phase) % 4;
        let ops = self
            .ops
            .iter()
            .zip(&other.ops)
            .map(|(a, b)| {
                let (k, p) = a.mul(*b);
                phase = (phase + k) % 4;
                p
            })
            .collect();
        Ok(Self { ops, phase })
    }

    /// Real sign of a Hermitian string (`phase` 0 or 2).
    pub fn sign(&self) -> Result<f64> {
        match self.phase {
            0 => Ok(1.0),
            2 => Ok(-1.0),
            _ => Err(invalid("Pauli string is not Hermitian")),
        }
    }

    pub fn negated(&self) -> Self {
        Self { ops: self.ops.clone(), phase: (self.phase + 2) % 4 }
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses strings like `"XZIZ"`, `"-XX"`, `"+ZZ"`; the first character is qubit 0.
    fn from_str(s: &str) -> Result<Self> {
        let (phase, body) = match s.as_bytes().first() {
            Some(b'-') => (2, &s[1..]),
            Some(b'+') => (0, &s[1..]),
            _ => (0, s),
        };
        let ops = body
            .chars()
            .map(|c| match c {
                'I' | '_' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(invalid(format!("unknown Pauli symbol '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ops, phase })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "",
            1 => "i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for p in &self.ops {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn products_and_phases() {
        assert_eq!(p("X").mul(&p("Y")).unwrap(), PauliString { ops: vec![Pauli::Z], phase: 1 });
        assert_eq!(p("XX").mul(&p("ZZ")).unwrap(), p("-YY"));
        assert_eq!(p("XXII").mul(&p("XIXI")).unwrap(), p("IXXI"));
    }

    #[test]
    fn commutation() {
        assert!(p("XXXX").commutes_with(&p("ZZZZ")));
        assert!(!p("XI").commutes_with(&p("ZI")));
        assert!(p("XZ").commutes_with(&p("ZX")));
    }

    #[test]
    fn display_roundtrip() {
        for s in ["XZIZ", "-YY", "IIII"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert!("XQ".parse::<PauliString>().is_err());
    }
}
