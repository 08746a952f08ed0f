//! Box-constrained Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

/// A least-squares objective ½·Σ rᵢ(θ)² is minimized as Σ rᵢ².
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Fills `r`; returns `false` if any residual is not finite.
    fn residuals(&self, params: &[f64], r: &mut [f64]) -> bool;

    /// Fills the m×p Jacobian. The default uses forward differences.
    fn jacobian(&self, params: &[f64], r: &[f64], jac: &mut DMatrix<f64>) {
        let mut p = params.to_vec();
        let mut rp = vec![0.0; r.len()];
        for j in 0..params.len() {
            let h = 1e-7 * params[j].abs().max(1e-8);
            p[j] = params[j] + h;
            self.residuals(&p, &mut rp);
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
            p[j] = params[j];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop when the step is this small relative to the parameters.
    pub xtol: f64,
    /// Stop when the projected, scaled gradient falls below this.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: 1e-15,
            xtol: 1e-13,
            gtol: 1e-15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Σ rᵢ² at `params`.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub n_evals: usize,
    pub iterations: usize,
    /// Stopped on a tolerance rather than the iteration cap.
    pub terminated: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn at_active_bound(x: f64, g: f64, lo: f64, hi: f64) -> bool {
    (x <= lo && g > 0.0) || (x >= hi && g < 0.0)
}

pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &LmOptions,
) -> LmOutcome {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut x: Vec<f64> = (0..n).map(|i| x0[i].clamp(lower[i], upper[i])).collect();
    let mut r = vec![0.0; m];
    let mut n_evals = 1;
    if !problem.residuals(&x, &mut r) {
        return LmOutcome {
            params: x,
            cost: f64::INFINITY,
            residuals: r,
            jacobian: DMatrix::zeros(m, n),
            n_evals,
            iterations: 0,
            terminated: false,
        };
    }
    let mut cost = cost_of(&r);
    let mut jac = DMatrix::zeros(m, n);
    problem.jacobian(&x, &r, &mut jac);
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut r_new = vec![0.0; m];
    let mut x_new = vec![0.0; n];
    let mut terminated = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&rv);

        let free: Vec<usize> = (0..n)
            .filter(|&i| !at_active_bound(x[i], g[i], lower[i], upper[i]))
            .collect();
        let scaled_grad = free
            .iter()
            .map(|&i| g[i].abs() / jtj[(i, i)].sqrt().max(1e-300))
            .fold(0.0f64, f64::max);
        if free.is_empty() || scaled_grad <= options.gtol * cost.sqrt().max(1e-300) || cost == 0.0 {
            terminated = true;
            break;
        }

        let k = free.len();
        let mut accepted = false;
        while !accepted {
            let mut a = DMatrix::from_fn(k, k, |p, q| jtj[(free[p], free[q])]);
            for p in 0..k {
                let d = jtj[(free[p], free[p])].max(1e-12 * (1.0 + jtj.diagonal().amax()));
                a[(p, p)] += lambda * d;
            }
            let b = DVector::from_fn(k, |p, _| -g[free[p]]);
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&b),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e30 {
                        break;
                    }
                    continue;
                }
            };
            x_new.copy_from_slice(&x);
            for p in 0..k {
                let i = free[p];
                x_new[i] = (x[i] + step[p]).clamp(lower[i], upper[i]);
            }
            let s = DVector::from_fn(n, |i, _| x_new[i] - x[i]);
            let step_norm = s.norm();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= options.xtol * (x_norm + options.xtol) {
                terminated = true;
                break;
            }
            let js = &jac * &s;
            let predicted = -(2.0 * g.dot(&s) + js.norm_squared());
            n_evals += 1;
            let ok = problem.residuals(&x_new, &mut r_new);
            let new_cost = if ok { cost_of(&r_new) } else { f64::INFINITY };
            let ratio = if predicted > 0.0 { (cost - new_cost) / predicted } else { -1.0 };
            if ok && new_cost < cost && ratio > 1e-4 {
                let relative_drop = (cost - new_cost) / cost;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut r, &mut r_new);
                cost = new_cost;
                problem.jacobian(&x, &r, &mut jac);
                lambda *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                accepted = true;
                if relative_drop <= options.ftol || cost == 0.0 {
                    terminated = true;
                }
            } else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    terminated = true;
                    break;
                }
            }
        }
        if terminated {
            break;
        }
    }
    LmOutcome {
        params: x,
        cost,
        residuals: r,
        jacobian: jac,
        n_evals,
        iterations,
        terminated,
    }
}

/// Correlation-scaled normal matrix is numerically singular.
pub fn is_singular(jac: &DMatrix<f64>) -> bool {
    let jtj = jac.tr_mul(jac);
    let n = jtj.nrows();
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return true;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    eig.iter().fold(f64::INFINITY, |m, &v| m.min(v)) < 1e-12
}

/// s²(JᵀJ)⁻¹ diagonal square roots, with s² = cost/(m − p).
pub fn standard_errors(jac: &DMatrix<f64>, cost: f64) -> Option<Vec<f64>> {
    let (m, n) = jac.shape();
    let jtj = jac.tr_mul(jac);
    let inv = jtj.try_inverse()?;
    let s2 = if m > n { cost / (m - n) as f64 } else { 0.0 };
    Some((0..n).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect())
}
