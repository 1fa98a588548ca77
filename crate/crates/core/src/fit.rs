//! Least-squares fitting for the decay and oscillation curves used by the
//! benchmarking and calibration runners.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `y = a·x + b`, params `[a, b]`.
    Linear,
    /// `y = A·cos(ω x + φ) + c`, params `[A, ω, φ, c]`.
    Sinusoid,
    /// `y = A·exp(−(x/n0)²)`, params `[A, n0]`.
    GaussianDecay,
    /// `y = A·p^x + B`, params `[A, p, B]`.
    RbDecay,
}

impl FitModel {
    pub fn n_params(self) -> usize {
        match self {
            FitModel::Linear => 2,
            FitModel::Sinusoid => 4,
            FitModel::GaussianDecay => 2,
            FitModel::RbDecay => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FitModel::Linear => &["slope", "intercept"],
            FitModel::Sinusoid => &["amplitude", "angular_frequency", "phase", "offset"],
            FitModel::GaussianDecay => &["amplitude", "n0"],
            FitModel::RbDecay => &["amplitude", "p", "offset"],
        }
    }

    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::Linear => p[0] * x + p[1],
            FitModel::Sinusoid => p[0] * (p[1] * x + p[2]).cos() + p[3],
            FitModel::GaussianDecay => p[0] * (-(x / p[1]).powi(2)).exp(),
            FitModel::RbDecay => p[0] * p[1].powf(x) + p[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        let idx = self.model.param_names().iter().position(|n| *n == name)?;
        Some(self.params[idx])
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        let idx = self.model.param_names().iter().position(|n| *n == name)?;
        Some(self.stderr[idx])
    }
}

fn check_input(model: FitModel, xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument("xs and ys differ in length".into()));
    }
    if xs.len() < model.n_params() + 1 {
        return Err(Error::FitFailure(format!(
            "{} points are too few for a {}-parameter model",
            xs.len(),
            model.n_params()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite input".into()));
    }
    Ok(())
}

/// Fits `model` to the points by least squares.
pub fn fit(model: FitModel, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_input(model, xs, ys)?;
    match model {
        FitModel::Linear => fit_linear(xs, ys),
        FitModel::Sinusoid => {
            let p0 = sinusoid_guess(xs, ys)?;
            nonlinear(model, xs, ys, p0)
        }
        FitModel::GaussianDecay => {
            let p0 = gaussian_guess(xs, ys)?;
            nonlinear(model, xs, ys, p0)
        }
        FitModel::RbDecay => {
            let p0 = rb_guess(xs, ys)?;
            nonlinear(model, xs, ys, p0)
        }
    }
}

/// Ordinary linear least squares `y ≈ Σ_j c_j f_j(x)`; returns coefficients,
/// their standard errors and the residual norm.
pub fn linear_least_squares(design: &DMatrix<f64>, ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (n, k) = design.shape();
    let y = DVector::from_column_slice(ys);
    let ata = design.transpose() * design;
    let inv = ata
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::FitFailure("singular normal equations".into()))?;
    // Reject numerically degenerate designs (e.g. all x equal).
    let scale = ata.diagonal().iter().cloned().fold(0.0, f64::max);
    if inv.diagonal().iter().any(|d| *d * scale > 1e14 || *d < 0.0) {
        return Err(Error::FitFailure("ill-conditioned design matrix".into()));
    }
    let coef = &inv * design.transpose() * &y;
    let resid = &y - design * &coef;
    let rss = resid.norm_squared();
    let dof = n.saturating_sub(k);
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let se = (0..k).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect();
    Ok((coef.iter().cloned().collect(), se, rss.sqrt()))
}

fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    let design = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { xs[i] } else { 1.0 });
    let (params, stderr, residual_norm) = linear_least_squares(&design, ys)?;
    Ok(FitResult { model: FitModel::Linear, params, stderr, residual_norm })
}

/// Amplitude, phase and offset of `A cos(ω x + φ) + c` at fixed `ω`.
pub fn fit_sinusoid_fixed_frequency(xs: &[f64], ys: &[f64], omega: f64) -> Result<FitResult> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(Error::FitFailure("need at least 4 points".into()));
    }
    let design = DMatrix::from_fn(xs.len(), 3, |i, j| match j {
        0 => (omega * xs[i]).cos(),
        1 => (omega * xs[i]).sin(),
        _ => 1.0,
    });
    let (c, se, residual_norm) = linear_least_squares(&design, ys)?;
    // a cos + b sin = A cos(ωx + φ) with A = hypot(a,b), φ = atan2(−b, a)
    let amp = c[0].hypot(c[1]);
    let phase = (-c[1]).atan2(c[0]);
    let amp_se = if amp > 0.0 { ((c[0] * se[0]).powi(2) + (c[1] * se[1]).powi(2)).sqrt() / amp } else { se[0].max(se[1]) };
    let phase_se = if amp > 0.0 { ((c[1] * se[0]).powi(2) + (c[0] * se[1]).powi(2)).sqrt() / (amp * amp) } else { f64::INFINITY };
    Ok(FitResult {
        model: FitModel::Sinusoid,
        params: vec![amp, omega, phase, c[2]],
        stderr: vec![amp_se, 0.0, phase_se.min(f64::MAX), se[2]],
        residual_norm,
    })
}

fn sinusoid_guess(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    if span <= 0.0 {
        return Err(Error::FitFailure("degenerate abscissa".into()));
    }
    // Scan frequencies from a quarter cycle up to the Nyquist-like limit of the grid.
    let max_cycles = (xs.len() as f64 / 2.0).max(1.0);
    let mut best: Option<(f64, FitResult)> = None;
    let steps = 400;
    for s in 0..=steps {
        let cycles = 0.25 + (max_cycles - 0.25) * s as f64 / steps as f64;
        let omega = std::f64::consts::TAU * cycles / span;
        if let Ok(r) = fit_sinusoid_fixed_frequency(xs, ys, omega) {
            if best.as_ref().is_none_or(|(rn, _)| r.residual_norm < *rn) {
                best = Some((r.residual_norm, r));
            }
        }
    }
    let (_, r) = best.ok_or_else(|| Error::FitFailure("no sinusoid candidate".into()))?;
    Ok(r.params)
}

fn gaussian_guess(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    // ln y = ln A − x²/n0² on the positive points
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x * x, y.ln())).collect();
    if pts.len() >= 2 {
        let design = DMatrix::from_fn(pts.len(), 2, |i, j| if j == 0 { pts[i].0 } else { 1.0 });
        let lys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Ok((c, _, _)) = linear_least_squares(&design, &lys) {
            if c[0] < 0.0 {
                return Ok(vec![c[1].exp(), (-1.0 / c[0]).sqrt()]);
            }
        }
    }
    let amp = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let xmax = xs.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
    Ok(vec![amp, xmax.max(1.0)])
}

fn rb_guess(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    // For fixed p the model is linear in (A, B): scan p and keep the best.
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |p: f64| {
        let design = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { p.powf(xs[i]) } else { 1.0 });
        if let Ok((c, _, rn)) = linear_least_squares(&design, ys) {
            if best.as_ref().is_none_or(|(b, _)| rn < *b) {
                best = Some((rn, vec![c[0], p, c[1]]));
            }
        }
    };
    for i in 1..200 {
        consider(i as f64 / 200.0);
    }
    for i in 1..400 {
        // fine grid close to 1 where benchmarking decays live
        consider(1.0 - 10f64.powf(-1.0 - 4.0 * i as f64 / 400.0));
    }
    best.map(|b| b.1).ok_or_else(|| Error::FitFailure("no decay candidate".into()))
}

/// Levenberg–Marquardt with a forward-difference Jacobian.
fn nonlinear(model: FitModel, xs: &[f64], ys: &[f64], p0: Vec<f64>) -> Result<FitResult> {
    let n = xs.len();
    let k = p0.len();
    let residuals = |p: &[f64]| DVector::from_fn(n, |i, _| ys[i] - model.eval(p, xs[i]));
    let jacobian = |p: &[f64]| {
        let mut jac = DMatrix::zeros(n, k);
        for j in 0..k {
            let h = 1e-7 * p[j].abs().max(1e-6);
            let mut pp = p.to_vec();
            pp[j] += h;
            let mut pm = p.to_vec();
            pm[j] -= h;
            for i in 0..n {
                jac[(i, j)] = (model.eval(&pp, xs[i]) - model.eval(&pm, xs[i])) / (2.0 * h);
            }
        }
        jac
    };

    let mut p = p0;
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let jac = jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(1e-300);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-15 || step.norm() < 1e-15 * (1.0 + p.iter().map(|v| v * v).sum::<f64>().sqrt()) {
                    return finish(model, xs, p, cost, &jacobian);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(model, xs, p, cost, &jacobian)
}

fn finish(
    model: FitModel,
    xs: &[f64],
    p: Vec<f64>,
    cost: f64,
    jacobian: &dyn Fn(&[f64]) -> DMatrix<f64>,
) -> Result<FitResult> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("fit diverged".into()));
    }
    let jac = jacobian(&p);
    let jtj = jac.transpose() * &jac;
    let inv = jtj
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::FitFailure("singular Jacobian at the optimum".into()))?;
    let dof = xs.len().saturating_sub(p.len());
    let s2 = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let stderr = (0..p.len()).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect();
    Ok(FitResult { model, params: p, stderr, residual_norm: cost.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let r = fit(FitModel::Linear, &xs, &ys).unwrap();
        assert!((r.params[0] - 2.0).abs() < 1e-12);
        assert!((r.params[1] - 1.0).abs() < 1e-12);
        assert!(r.residual_norm < 1e-12);
    }

    #[test]
    fn degenerate_abscissa_fails() {
        let xs = [1.0; 5];
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(fit(FitModel::Linear, &xs, &ys), Err(Error::FitFailure(_))));
        assert!(matches!(fit(FitModel::Linear, &[1.0, 2.0], &[1.0, 2.0]), Err(Error::FitFailure(_))));
    }

    #[test]
    fn gaussian_decay_recovers_n0() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 5.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.95 * (-(x / 90.0f64).powi(2)).exp() * (1.0 + 0.01 * (rng.random::<f64>() * 2.0 - 1.0)))
            .collect();
        let r = fit(FitModel::GaussianDecay, &xs, &ys).unwrap();
        assert!((r.params[1] - 90.0).abs() / 90.0 < 0.05, "{:?}", r);
    }

    #[test]
    fn rb_decay_recovers_p() {
        let xs: Vec<f64> = [1, 10, 50, 100, 200, 400, 800].iter().map(|&m| m as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|m| 0.5 * 0.999f64.powf(*m) + 0.5).collect();
        let r = fit(FitModel::RbDecay, &xs, &ys).unwrap();
        assert!((r.params[1] - 0.999).abs() < 1e-4);
    }

    #[test]
    fn sinusoid_recovers_frequency() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.8 * (2.3 * x + 0.4).cos() + 0.1).collect();
        let r = fit(FitModel::Sinusoid, &xs, &ys).unwrap();
        assert!((r.params[0] - 0.8).abs() < 1e-8);
        assert!((r.params[1] - 2.3).abs() < 1e-8);
        assert!((r.params[3] - 0.1).abs() < 1e-8);
    }
}
