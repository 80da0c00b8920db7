//! Observation log-likelihood kernels and hyperparameter prior densities.
//!
//! Kernels return the log-likelihood together with its first and second
//! derivatives in the linear predictor `eta`. The Weibull kernel uses the
//! proportional-hazards parameterization `h(t) = exp(eta) * alpha * t^(alpha - 1)`.

use crate::error::{Error, Result};
use crate::quadrature;

/// Log-likelihood of one observation and its derivatives in `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikTerms {
    pub ll: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn bernoulli_logit_terms(eta: f64, y: u8) -> LikTerms {
    let p = logistic(eta);
    let q = logistic(-eta);
    if y == 1 {
        LikTerms {
            ll: -log1p_exp(-eta),
            d1: q,
            d2: -p * q,
        }
    } else {
        LikTerms {
            ll: -log1p_exp(eta),
            d1: -p,
            d2: -p * q,
        }
    }
}

/// Binomial cell: `successes` ones out of `trials` rows sharing `eta`.
#[inline]
pub fn binomial_logit_terms(eta: f64, trials: f64, successes: f64) -> LikTerms {
    let p = logistic(eta);
    let q = logistic(-eta);
    let failures = trials - successes;
    let mut ll = 0.0;
    if successes > 0.0 {
        ll -= successes * log1p_exp(-eta);
    }
    if failures > 0.0 {
        ll -= failures * log1p_exp(eta);
    }
    LikTerms {
        ll,
        d1: successes * q - failures * p,
        d2: -trials * p * q,
    }
}

pub fn weibull_terms(eta: f64, alpha: f64, t: f64, event: u8) -> Result<LikTerms> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime { row: 0, value: t });
    }
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveShape(alpha));
    }
    let log_t = t.ln();
    let cum = (eta + alpha * log_t).exp();
    let ev = f64::from(event);
    Ok(LikTerms {
        ll: ev * (eta + alpha.ln() + (alpha - 1.0) * log_t) - cum,
        d1: ev - cum,
        d2: -cum,
    })
}

/// Weibull cell from sufficient statistics: number of events, the sum of
/// `log t` over events, and `sum t^alpha` over every row in the cell.
#[inline]
pub fn weibull_cell_terms(
    eta: f64,
    alpha: f64,
    events: f64,
    sum_event_log_t: f64,
    sum_t_alpha: f64,
) -> LikTerms {
    let cum = eta.exp() * sum_t_alpha;
    LikTerms {
        ll: events * (eta + alpha.ln()) + (alpha - 1.0) * sum_event_log_t - cum,
        d1: events - cum,
        d2: -cum,
    }
}

/// Weibull hazard `exp(eta) * alpha * t^(alpha - 1)`.
pub fn weibull_hazard(eta: f64, alpha: f64, t: f64) -> f64 {
    (eta + alpha.ln() + (alpha - 1.0) * t.ln()).exp()
}

/// Kullback-Leibler divergence of Weibull(shape `alpha`, scale 1) from the
/// unit exponential, by quadrature after the substitution `u = t^alpha`.
pub fn weibull_kld_from_exponential(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveShape(alpha));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let log_alpha = alpha.ln();
    let c = 1.0 - 1.0 / alpha;
    let integrand = move |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let ln_u = u.ln();
        let bracket = log_alpha + c * ln_u + u * (-c * ln_u).exp_m1();
        (-u).exp() * bracket
    };
    let kld = quadrature::integrate_half_line(integrand, 1e-16, 1e-11)?;
    Ok(kld.max(0.0))
}

/// Distance `sqrt(2 KLD)` from the exponential base model.
pub fn pc_distance(alpha: f64) -> Result<f64> {
    Ok((2.0 * weibull_kld_from_exponential(alpha)?).sqrt())
}

/// Internal scale of the Weibull shape: `alpha = exp(0.1 * alpha_prime)`.
pub const ALPHA_SCALE: f64 = 0.1;

pub fn alpha_from_internal(alpha_prime: f64) -> f64 {
    (ALPHA_SCALE * alpha_prime).exp()
}

pub fn alpha_to_internal(alpha: f64) -> f64 {
    alpha.ln() / ALPHA_SCALE
}

const PC_STEP: f64 = 1e-4;

/// Log-density of the penalized-complexity prior on `alpha_prime`.
///
/// The distance has a kink at the base model, so within one step of
/// `alpha = 1` the derivative is taken one-sided, away from the kink.
pub fn pc_prior_alpha_logdensity(alpha_prime: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "PC prior rate must be positive, got {rate}"
        )));
    }
    let alpha = alpha_from_internal(alpha_prime);
    let d = pc_distance(alpha)?;
    let h = PC_STEP;
    let slope = if (alpha - 1.0).abs() > 2.0 * h {
        (pc_distance(alpha + h)? - pc_distance(alpha - h)?) / (2.0 * h)
    } else {
        let side = if alpha >= 1.0 { 1.0 } else { -1.0 };
        let near = alpha + side * 2.0 * h;
        let far = alpha + side * 3.0 * h;
        side * (pc_distance(far)? - pc_distance(near)?) / h
    };
    Ok((0.5 * rate).ln() - rate * d + slope.abs().ln() + (ALPHA_SCALE * alpha).ln())
}

/// Gaussian log-density with the given precision; zero precision is a flat prior.
pub fn gaussian_logdensity(x: f64, mean: f64, precision: f64) -> f64 {
    if precision == 0.0 {
        return 0.0;
    }
    0.5 * (precision.ln() - std::f64::consts::TAU.ln()) - 0.5 * precision * (x - mean).powi(2)
}
