use std::time::Instant;

use spatial_lgm::likelihood::{bernoulli_logit_terms, weibull_terms};

use crate::Outcome;

const H: f64 = 1e-5;

/// Relative error with a unit floor on the denominator, so derivatives that
/// vanish on the grid (Weibull with an event at `exp(eta) t^alpha = 1`) are
/// judged on absolute error.
fn rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let etas: Vec<f64> = (0..=48).map(|i| -6.0 + 0.25 * i as f64).collect();
    let mut worst_logit: f64 = 0.0;
    let mut worst_weibull: f64 = 0.0;
    let mut cases = 0;
    for &eta in &etas {
        for y in [0u8, 1] {
            let t = bernoulli_logit_terms(eta, y);
            let ll = |e: f64| bernoulli_logit_terms(e, y).ll;
            let d1 = |e: f64| bernoulli_logit_terms(e, y).d1;
            let g = (ll(eta + H) - ll(eta - H)) / (2.0 * H);
            let c = (d1(eta + H) - d1(eta - H)) / (2.0 * H);
            worst_logit = worst_logit.max(rel(t.d1, g)).max(rel(t.d2, c));
            cases += 1;
        }
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            for time in [0.1, 0.5, 1.0] {
                for ev in [0u8, 1] {
                    let w = |e: f64| weibull_terms(e, alpha, time, ev).unwrap();
                    let t = w(eta);
                    let g = (w(eta + H).ll - w(eta - H).ll) / (2.0 * H);
                    let c = (w(eta + H).d1 - w(eta - H).d1) / (2.0 * H);
                    worst_weibull = worst_weibull.max(rel(t.d1, g)).max(rel(t.d2, c));
                    cases += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_logit < 1e-6 && worst_weibull < 1e-6 && secs < 1.0;
    Outcome::new(
        pass,
        vec![
            format!("{cases} kernel evaluations, step {H:e}; d2 checked against differences of d1"),
            format!("max rel. error logit {worst_logit:.2e}, weibull {worst_weibull:.2e} (limit 1e-6)"),
            format!("elapsed {secs:.3} s (limit 1 s)"),
        ],
    )
}
