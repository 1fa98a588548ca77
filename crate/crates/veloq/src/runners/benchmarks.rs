use std::f64::consts::FRAC_PI_2;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::json;
use veloq_core::fit::{fit, FitModel};
use veloq_core::rydberg::{ssb_gate_fidelity, SsbNoise};
use veloq_core::Mat2;

use super::Context;
use crate::report::{num, Check, FigureOutput, Table};

const RB_LENGTHS: [usize; 6] = [1, 100, 200, 400, 700, 1000];
const SAME: f64 = 1e-9;

/// Single-qubit Clifford group modulo global phase, with its Cayley table.
pub struct CliffordGroup {
    pub elements: Vec<Mat2>,
    /// `mul[a][b]` is the index of `elements[a] · elements[b]`.
    mul: Vec<Vec<usize>>,
    inv: Vec<usize>,
    identity: usize,
    paulis: [usize; 3],
}

impl CliffordGroup {
    /// Closure of `R(π/2, 0)` and `R(π/2, π/2)`.
    pub fn generate() -> Result<Self> {
        let gens = [Mat2::rotation(FRAC_PI_2, 0.0), Mat2::rotation(FRAC_PI_2, FRAC_PI_2)];
        let mut elements = vec![Mat2::identity()];
        let mut frontier = 0;
        while frontier < elements.len() {
            let g = elements[frontier];
            for h in &gens {
                let p = *h * g;
                if Self::find(&elements, &p).is_none() {
                    elements.push(p);
                }
            }
            frontier += 1;
            if elements.len() > 24 {
                bail!("Clifford closure exceeded 24 elements");
            }
        }
        if elements.len() != 24 {
            bail!("Clifford closure has {} elements, expected 24", elements.len());
        }
        let idx = |m: &Mat2| Self::find(&elements, m).ok_or_else(|| anyhow::anyhow!("product left the group"));
        let mut mul = vec![vec![0; 24]; 24];
        for a in 0..24 {
            for b in 0..24 {
                mul[a][b] = idx(&(elements[a] * elements[b]))?;
            }
        }
        let inv = (0..24).map(|a| idx(&elements[a].adjoint())).collect::<Result<Vec<_>>>()?;
        let paulis = [idx(&Mat2::pauli_x())?, idx(&Mat2::pauli_y())?, idx(&Mat2::pauli_z())?];
        Ok(Self { elements, mul, inv, identity: 0, paulis })
    }

    fn find(set: &[Mat2], m: &Mat2) -> Option<usize> {
        set.iter().position(|e| e.phase_insensitive_distance(m) < SAME)
    }

    /// Whether the element returns |0⟩ to itself.
    fn keeps_ground(&self, g: usize) -> bool {
        self.elements[g].m[0][0].norm() > 1.0 - SAME
    }
}

/// One RB trajectory: `m` random Cliffords, each followed with probability
/// `q` by a uniformly random X, Y or Z, then the ideal inverse. Returns
/// whether the qubit is found back in |0⟩.
fn rb_shot(group: &CliffordGroup, m: usize, q: f64, rng: &mut ChaCha8Rng) -> bool {
    let (mut ideal, mut actual) = (group.identity, group.identity);
    for _ in 0..m {
        let c = rng.random_range(0..24);
        ideal = group.mul[c][ideal];
        actual = group.mul[c][actual];
        if q > 0.0 && rng.random::<f64>() < q {
            actual = group.mul[group.paulis[rng.random_range(0..3)]][actual];
        }
    }
    let inverse = group.inv[ideal];
    actual = group.mul[inverse][actual];
    if q > 0.0 && rng.random::<f64>() < q {
        actual = group.mul[group.paulis[rng.random_range(0..3)]][actual];
    }
    group.keeps_ground(actual)
}

/// Survival probability per sequence length for average error per Clifford
/// `r` (depolarizing, Bloch shrink `1 − 2r`).
pub fn rb_survival(group: &CliffordGroup, lengths: &[usize], r: f64, shots: usize, seed: u64) -> Vec<f64> {
    let q = 1.5 * r;
    lengths
        .iter()
        .enumerate()
        .map(|(li, &m)| {
            let hits: usize = (0..shots)
                .into_par_iter()
                .map(|shot| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((li as u64) << 40) | shot as u64);
                    usize::from(rb_shot(group, m, q, &mut rng))
                })
                .sum();
            hits as f64 / shots as f64
        })
        .collect()
}

/// Randomized benchmarking of single-qubit Cliffords and the synthetic
/// coherence-vs-moves decay.
pub fn fig_s1(ctx: &Context) -> Result<FigureOutput> {
    let group = CliffordGroup::generate()?;
    let r = ctx.cfg.noise.rb_error;
    let shots = ctx.cfg.run.rb_shots;
    let xs: Vec<f64> = RB_LENGTHS.iter().map(|&m| m as f64).collect();
    let survival = rb_survival(&group, &RB_LENGTHS, r, shots, ctx.seed());
    let rb = fit(FitModel::RbDecay, &xs, &survival)?;
    let p = rb.params[1];
    let recovered = (1.0 - p) / 2.0;
    let noiseless = rb_survival(&group, &RB_LENGTHS, 0.0, shots.min(1000), ctx.seed());

    let mut t = Table::new(&["length", "survival", "stderr", "fit"])?;
    for (i, &m) in RB_LENGTHS.iter().enumerate() {
        let y = survival[i];
        let model = rb.params[0] * p.powf(m as f64) + rb.params[2];
        t.row([m.to_string(), num(y), num((y * (1.0 - y) / shots as f64).sqrt()), num(model)])?;
    }

    // synthetic Gaussian decay of coherence with the number of moves
    let n0 = 90.0;
    let noise = Normal::new(0.0, 0.01)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let moves: Vec<f64> = (0..=200).map(|n| n as f64).collect();
    let coherence: Vec<f64> = moves.iter().map(|n| (-(n / n0).powi(2)).exp() + noise.sample(&mut rng)).collect();
    let g = fit(FitModel::GaussianDecay, &moves, &coherence)?;
    let n0_fit = g.params[1].abs();
    let mut gt = Table::new(&["moves", "coherence", "fit"])?;
    for (n, y) in moves.iter().zip(&coherence) {
        gt.row([num(*n), num(*y), num(g.params[0] * (-(n / n0_fit).powi(2)).exp())])?;
    }

    let mut out = FigureOutput::new("figS1");
    out.tables.push(("figS1_rb.csv".into(), t.finish()?));
    out.tables.push(("figS1_moves.csv".into(), gt.finish()?));
    out.summary = json!({
        "clifford_group_size": group.elements.len(),
        "rb_shots_per_length": shots,
        "injected_error": r,
        "recovered_error": recovered,
        "recovered_error_stderr": rb.stderr[1] / 2.0,
        "gaussian_n0": n0_fit,
        "gaussian_n0_stderr": g.stderr[1],
    });
    out.checks.push(Check::new("noiseless_survival", noiseless.iter().all(|&s| s == 1.0), "every noiseless sequence returns to |0⟩"));
    out.checks.push(Check::relative("rb_error", recovered, r, 0.05));
    out.checks.push(Check::relative("gaussian_n0", n0_fit, n0, 0.05));
    Ok(out)
}

/// Echo benchmark of the CZ under injected two-qubit depolarizing noise.
pub fn fig1f(ctx: &Context) -> Result<FigureOutput> {
    let shots = ctx.cfg.run.rb_shots;
    let mut t = Table::new(&["injected", "gates", "return_probability"])?;
    let mut summary = serde_json::Map::new();
    let mut out = FigureOutput::new("fig1f");
    for (k, (name, eps)) in [("high", 0.01), ("calibrated", 1.0 - ctx.cfg.noise.bell_target)].into_iter().enumerate() {
        let lengths: Vec<usize> = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0].iter().map(|f| ((f / eps) as usize).max(1)).collect();
        let r = ssb_gate_fidelity(&lengths, &SsbNoise { depolarizing: eps, shots, seed: ctx.seed().wrapping_add(k as u64) })?;
        let recovered = 1.0 - r.fidelity;
        for (n, y) in &r.points {
            t.row([num(eps), n.to_string(), num(*y)])?;
        }
        summary.insert(name.into(), json!({ "injected": eps, "recovered": recovered, "stderr": r.fidelity_stderr }));
        out.checks.push(Check::relative(&format!("ssb_{name}"), recovered, eps, 0.05));
    }
    out.tables.push(("fig1f.csv".into(), t.finish()?));
    out.summary = serde_json::Value::Object(summary);
    Ok(out)
}
