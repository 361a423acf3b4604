//! Dense BFGS quasi-Newton minimizer with backtracking line search and
//! central-difference gradients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the gradient infinity norm drops below
    /// `grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    /// Relative step for numerical differentiation.
    pub rel_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 800, grad_tol: 1e-6, rel_step: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient, parallel over components. Falls back to a
/// one-sided difference when a perturbed point is out of the objective's
/// finite region. `fx` is the (finite) objective value at `x`.
pub fn central_gradient<F>(f: &F, x: &[f64], fx: f64, rel_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let fp = f(&xp);
            let fm = f(&xm);
            if fp.is_finite() && fm.is_finite() {
                (fp - fm) / (2.0 * h)
            } else if fp.is_finite() {
                (fp - fx) / h
            } else if fm.is_finite() {
                (fx - fm) / h
            } else {
                0.0
            }
        })
        .collect()
}

/// Minimize `f` from `x0` using BFGS with the supplied gradient function.
pub fn minimize<F, G>(f: &F, grad: &G, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return BfgsOutcome {
            x: x0.to_vec(),
            f: fx,
            grad_inf_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let mut g = DVector::from_vec(grad(x.as_slice(), fx));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = grad_converged(&g, fx, opts.grad_tol);

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            // Inverse Hessian lost positive definiteness; restart steepest.
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
            if !(slope < 0.0) {
                break; // zero gradient
            }
        }
        // Backtracking Armijo search.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let x_new = &x + alpha * &dir;
            let f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + 1e-4 * alpha * slope {
                accepted = Some((x_new, f_new));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No progress along this direction; try plain gradient descent
            // once before declaring a stall.
            if h_inv != DMatrix::identity(n, n) {
                h_inv = DMatrix::identity(n, n);
                continue;
            }
            break;
        };
        let g_new = DVector::from_vec(grad(x_new.as_slice(), f_new));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            // BFGS inverse update.
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H' = H - rho (s y' H + H y s') + rho^2 s (y' H y) s' + rho s s'
            for i in 0..n {
                for j in 0..n {
                    h_inv[(i, j)] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = grad_converged(&g, fx, opts.grad_tol);
    }

    BfgsOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        grad_inf_norm: g.amax(),
        iterations,
        converged,
    }
}

fn grad_converged(g: &DVector<f64>, fx: f64, tol: f64) -> bool {
    g.amax() < tol * fx.abs().max(1.0)
}

/// Central-difference Hessian, parallel over matrix entries.
pub fn numerical_hessian<F>(f: &F, x: &[f64], rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let fx = f(x);
    let h: Vec<f64> = x.iter().map(|xi| rel_step * xi.abs().max(1.0)).collect();
    let mut entries: Vec<(usize, usize)> = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            entries.push((i, j));
        }
    }
    let values: Vec<f64> = entries
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                let mut xp = x.to_vec();
                xp[i] += h[i];
                let mut xm = x.to_vec();
                xm[i] -= h[i];
                (f(&xp) - 2.0 * fx + f(&xm)) / (h[i] * h[i])
            } else {
                let mut xpp = x.to_vec();
                xpp[i] += h[i];
                xpp[j] += h[j];
                let mut xpm = x.to_vec();
                xpm[i] += h[i];
                xpm[j] -= h[j];
                let mut xmp = x.to_vec();
                xmp[i] -= h[i];
                xmp[j] += h[j];
                let mut xmm = x.to_vec();
                xmm[i] -= h[i];
                xmm[j] -= h[j];
                (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut hess = DMatrix::zeros(n, n);
    for (&(i, j), &v) in entries.iter().zip(&values) {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    hess
}
