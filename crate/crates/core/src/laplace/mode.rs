use std::f64::consts::TAU as TWO_PI;

use super::model::{HyperValues, LatentModel};
use crate::error::{Error, Result};
use crate::sparse::NumericCholesky;

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;
const GRADIENT_TOL: f64 = 1e-8;
const DECREMENT_TOL: f64 = 1e-10;

/// Kriging correction for one linear constraint `C x = 0`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub row: Vec<f64>,
    /// `H^{-1} C'`
    pub hinv_ct: Vec<f64>,
    /// `C H^{-1} C'`
    pub schur: f64,
}

impl Constraint {
    fn new(row: Vec<f64>, chol: &NumericCholesky) -> Self {
        let hinv_ct = chol.solve(&row);
        let schur = dot(&row, &hinv_ct);
        Self {
            row,
            hinv_ct,
            schur,
        }
    }

    /// Removes the component of `v` that violates the constraint, in the
    /// metric of `H`.
    fn correct(&self, v: &mut [f64]) {
        let s = dot(&self.row, v) / self.schur;
        for (vi, hi) in v.iter_mut().zip(&self.hinv_ct) {
            *vi -= hi * s;
        }
    }
}

/// Gaussian approximation of the latent field at one hyperparameter value.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Vec<f64>,
    /// Number of fixed effects at the front of `mode`.
    pub n_fixed: usize,
    pub hyper: HyperValues,
    pub factor: NumericCholesky,
    pub constraint: Option<Constraint>,
    pub log_lik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl GaussianApprox {
    /// Independent Gaussian with the given precisions, no data involved.
    /// Mostly useful for tests of downstream summaries.
    pub fn independent(mode: Vec<f64>, n_fixed: usize, precision: &[f64], hyper: HyperValues) -> Result<Self> {
        use crate::sparse::{LowerPattern, Ordering, SymbolicCholesky};
        let n = mode.len();
        let pattern = LowerPattern::from_columns((0..n).map(|i| vec![i]).collect());
        let sym = std::sync::Arc::new(SymbolicCholesky::analyze(&pattern, Ordering::Natural));
        let factor = sym.factor(precision)?;
        Ok(Self {
            mode,
            n_fixed,
            hyper,
            factor,
            constraint: None,
            log_lik: 0.0,
            iterations: 0,
            gradient_norm: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    pub fn constraint_applied(&self) -> bool {
        self.constraint.is_some()
    }

    /// `log det H` of the factorized precision.
    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    /// Log density of the approximation at its own mode, with respect to
    /// Lebesgue measure on the constraint set when one applies.
    pub fn log_density_at_mode(&self) -> f64 {
        let m = self.dim() as f64;
        let base = 0.5 * self.log_det();
        match &self.constraint {
            None => base - 0.5 * m * TWO_PI.ln(),
            Some(c) => {
                let cc = dot(&c.row, &c.row);
                base + 0.5 * c.schur.ln() - 0.5 * (m - 1.0) * TWO_PI.ln() - 0.5 * cc.ln()
            }
        }
    }

    /// Marginal variances of every latent coordinate.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let mut d = self.factor.inverse_diagonal();
        if let Some(c) = &self.constraint {
            for (di, hi) in d.iter_mut().zip(&c.hinv_ct) {
                *di = (*di - hi * hi / c.schur).max(0.0);
            }
        }
        d
    }

    /// Column `k` of the (constrained) covariance.
    pub fn covariance_column(&self, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[k] = 1.0;
        let mut col = self.factor.solve(&e);
        if let Some(c) = &self.constraint {
            let s = c.hinv_ct[k] / c.schur;
            for (v, hi) in col.iter_mut().zip(&c.hinv_ct) {
                *v -= hi * s;
            }
        }
        col
    }

    /// Maps a standard normal vector to a draw from the approximation.
    pub fn sample(&self, z: &[f64]) -> Vec<f64> {
        let mut dev = self.factor.correlate(z);
        if let Some(c) = &self.constraint {
            c.correct(&mut dev);
        }
        dev.iter().zip(&self.mode).map(|(d, m)| m + d).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_mean(x: &mut [f64], from: usize) {
    let tail = &mut x[from..];
    if tail.is_empty() {
        return;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    tail.iter_mut().for_each(|v| *v -= mean);
}

/// Newton ascent to the conditional mode of the latent field at `theta`
/// (internal scale), optionally warm-started from `start`.
pub fn gmrf_mode(model: &LatentModel, theta: &[f64], start: Option<&[f64]>) -> Result<GaussianApprox> {
    let hv = model.hyper_values(theta);
    let sta = model.design.sum_t_alpha(hv.alpha);
    let m = model.dim();
    let p = model.n_fixed();
    let constrained = model.is_constrained();
    let mut x = match start {
        Some(s) if s.len() == m => s.to_vec(),
        _ => vec![0.0; m],
    };
    if constrained {
        project_mean(&mut x, p);
    }
    let mut f = model.objective(&x, &hv, &sta);
    let mut last_step = false;
    for iteration in 0..=MAX_ITERATIONS {
        let asm = model.assemble(&x, &hv, &sta);
        let mut g = asm.grad;
        if constrained {
            project_mean(&mut g, p);
        }
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let chol = model.symbolic().factor(&asm.values)?;
        let constraint = model
            .constraint_row()
            .map(|row| Constraint::new(row, &chol));
        if gnorm < GRADIENT_TOL || last_step {
            return Ok(GaussianApprox {
                mode: x,
                n_fixed: p,
                hyper: hv,
                factor: chol,
                constraint,
                log_lik: asm.log_lik,
                iterations: iteration,
                gradient_norm: gnorm,
            });
        }
        if iteration == MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations: MAX_ITERATIONS,
                gradient_norm: gnorm,
            });
        }
        let mut delta = chol.solve(&g);
        if let Some(c) = &constraint {
            c.correct(&mut delta);
        }
        let decrement = dot(&g, &delta);
        // Below the decrement tolerance one more full step lands on the mode
        // to rounding accuracy; the factor is then refreshed there.
        if decrement < DECREMENT_TOL {
            last_step = true;
        }
        let slack = 8.0 * f64::EPSILON * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut cand: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            if constrained {
                project_mean(&mut cand, p);
            }
            let fc = model.objective(&cand, &hv, &sta);
            if fc.is_finite() && fc >= f - slack {
                x = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if decrement < 1e3 * DECREMENT_TOL {
                // Stalled at rounding level; accept the current point.
                last_step = true;
                continue;
            }
            return Err(Error::NonConvergence {
                iterations: iteration + 1,
                gradient_norm: gnorm,
            });
        }
    }
    unreachable!("loop returns on every path")
}
