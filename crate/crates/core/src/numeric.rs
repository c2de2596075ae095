//! Small dense numerics: a Levenberg–Marquardt least-squares driver with a
//! finite-difference Jacobian, and symmetric eigenvalue helpers. Everything
//! here targets desk-scale problems (tens of unknowns).

use nalgebra::{DMatrix, DVector};

/// Options for [`least_squares`].
#[derive(Clone, Copy, Debug)]
pub struct LsqOptions {
    pub max_iters: usize,
    /// Stop once the residual sup-norm falls below this.
    pub tol_residual: f64,
    /// Stop once the step sup-norm falls below this.
    pub tol_step: f64,
    /// Finite-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            max_iters: 200,
            tol_residual: 1e-13,
            tol_step: 1e-14,
            fd_step: 1e-7,
        }
    }
}

/// Result of a least-squares run.
#[derive(Clone, Debug)]
pub struct LsqResult {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl LsqResult {
    pub fn residual_sup(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Minimizes `‖f(x)‖²` by Levenberg–Marquardt with a central-difference
/// Jacobian. `f` writes its residual vector into the provided buffer so the
/// residual dimension is discovered on the first call.
pub fn least_squares(
    f: impl Fn(&[f64], &mut Vec<f64>),
    x0: &[f64],
    opts: &LsqOptions,
) -> LsqResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = Vec::new();
    f(&x, &mut r);
    let m = r.len();
    let mut cost = r.iter().map(|v| v * v).sum::<f64>();
    let mut lambda = 1e-3;
    let mut iterations = 0;

    let mut r_plus = Vec::with_capacity(m);
    let mut r_minus = Vec::with_capacity(m);

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        if r.iter().all(|v| v.abs() < opts.tol_residual) {
            break;
        }

        // Central-difference Jacobian.
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = opts.fd_step * (1.0 + x[j].abs());
            let saved = x[j];
            x[j] = saved + h;
            f(&x, &mut r_plus);
            x[j] = saved - h;
            f(&x, &mut r_minus);
            x[j] = saved;
            for i in 0..m {
                jac[(i, j)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
            }
        }

        let rv = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let jtr = &jt * &rv;

        let mut stepped = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * (1.0 + jtj[(d, d)].abs());
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let mut x_new = x.clone();
            for j in 0..n {
                x_new[j] -= step[j];
            }
            let mut r_new = Vec::with_capacity(m);
            f(&x_new, &mut r_new);
            let cost_new = r_new.iter().map(|v| v * v).sum::<f64>();
            if cost_new < cost {
                let step_sup = step.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                x = x_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda * 0.3).max(1e-12);
                stepped = true;
                if step_sup < opts.tol_step {
                    iterations = iter + 1;
                    return LsqResult {
                        residual_norm: cost.sqrt(),
                        x,
                        residual: r,
                        iterations,
                    };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            break;
        }
    }

    LsqResult {
        residual_norm: cost.sqrt(),
        x,
        residual: r,
        iterations,
    }
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)[0]
}
