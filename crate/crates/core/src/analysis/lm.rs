//! Levenberg-Marquardt for small, smooth models with analytic Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Standard errors from `s²·(JᵀJ)⁻¹` with `s² = SSR/(n − p)`.
    pub stderr: Vec<f64>,
    pub ssr: f64,
    pub iterations: usize,
}

/// Minimize `Σ (y − f(p, x))²`. `model` returns the value and the gradient
/// with respect to the parameters.
pub fn levenberg_marquardt<M>(xs: &[f64], ys: &[f64], p0: &[f64], model: M) -> Result<LmOutcome>
where
    M: Fn(&[f64], f64) -> (f64, Vec<f64>),
{
    let n = xs.len();
    let np = p0.len();
    if n < np {
        return Err(Error::InsufficientData { needed: np, got: n });
    }
    let eval = |p: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, np);
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let (f, g) = model(p, x);
            r[i] = y - f;
            for (k, gk) in g.into_iter().enumerate() {
                j[(i, k)] = gk;
            }
        }
        (r, j)
    };

    let mut p = p0.to_vec();
    let (mut r, mut jac) = eval(&p);
    let mut ssr = r.norm_squared();
    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0;
    let mut converged = ssr == 0.0;

    while !converged {
        if iterations >= MAX_ITERATIONS {
            return Err(Error::FitDiverged {
                iterations,
                reason: format!("no convergence within {MAX_ITERATIONS} iterations (SSR {ssr:e})"),
            });
        }
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if (0..np).any(|k| jtj[(k, k)] == 0.0) {
            return Err(Error::FitDiverged {
                iterations,
                reason: "singular Jacobian".into(),
            });
        }
        // retry with growing damping until the step lowers the SSR
        loop {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)];
            }
            let step = a.lu().solve(&jtr).ok_or_else(|| Error::FitDiverged {
                iterations,
                reason: "singular normal equations".into(),
            })?;
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (r_new, j_new) = eval(&trial);
            let ssr_new = r_new.norm_squared();
            if ssr_new.is_finite() && ssr_new <= ssr {
                let small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(s, v)| s.abs() <= 1e-12 * (v.abs() + 1e-12));
                let small_gain = ssr - ssr_new <= 1e-14 * ssr;
                p = trial;
                r = r_new;
                jac = j_new;
                ssr = ssr_new;
                lambda = (lambda / 10.0).max(1e-12);
                converged = small_step || small_gain || ssr == 0.0;
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no downhill direction left: at a minimum to working precision
                converged = true;
                break;
            }
        }
    }

    let dof = n.saturating_sub(np);
    let s2 = if dof > 0 { ssr / dof as f64 } else { 0.0 };
    let cov = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| Error::FitDiverged {
            iterations,
            reason: "singular Jacobian at the solution".into(),
        })?;
    let stderr = (0..np)
        .map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt())
        .collect();
    Ok(LmOutcome {
        params: p,
        stderr,
        ssr,
        iterations,
    })
}
