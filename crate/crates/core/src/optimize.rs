//! Unconstrained minimization (BFGS with finite-difference gradients).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the objective falls below this.
    pub target: f64,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 400, grad_tol: 1e-10, target: f64::NEG_INFINITY, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `f` from `x0` with BFGS and an Armijo backtracking line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: BfgsOptions) -> Minimum {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(x.as_slice());
    let grad_of = |x: &DVector<f64>| DVector::from_vec(gradient(&f, x.as_slice(), opts.fd_step));
    let mut g = grad_of(&x);
    evals.set(evals.get() + 2 * n);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        if fx <= opts.target || g.norm() < opts.grad_tol {
            break;
        }
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + &dir * step;
            let ft = eval(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if hinv == DMatrix::identity(n, n) {
                break;
            }
            hinv = DMatrix::identity(n, n);
            continue;
        };
        let gn = grad_of(&xn);
        evals.set(evals.get() + 2 * n);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(n, n);
            let a = &id - &s * y.transpose() * rho;
            let b = &id - &y * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        let progress = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if progress.abs() < 1e-16 * fx.abs().max(1e-300) && progress >= 0.0 && s.norm() < 1e-14 {
            break;
        }
    }
    Minimum { x: x.iter().cloned().collect(), value: fx, iterations, evaluations: evals.get() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = bfgs(f, &[-1.2, 1.0], BfgsOptions { max_iter: 2000, ..Default::default() });
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let m = bfgs(f, &[0.0; 5], BfgsOptions::default());
        assert!(m.value < 1e-12);
    }
}
