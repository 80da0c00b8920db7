use std::f64::consts::PI;
use std::time::Instant;

use statrs::function::gamma::{digamma, gamma, ln_gamma};

use spatial_lgm::laplace::{self, FitResult, LatentModel};
use spatial_lgm::{Effect, Family, ModelSpec, RegionGraph};

use crate::support::{dataset, fmt_list, simpson};
use crate::Outcome;

const MEAN_TOL: f64 = 0.02;
const WEIGHT_TOL: f64 = 1e-3;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

struct Check {
    label: String,
    mean_err: f64,
    weight_err: Option<f64>,
}

impl Check {
    fn ok(&self) -> bool {
        self.mean_err < MEAN_TOL && self.weight_err.is_none_or(|w| w < WEIGHT_TOL)
    }

    fn line(&self) -> String {
        let w = match self.weight_err {
            Some(w) => format!(", weight rel. err {w:.2e}"),
            None => String::new(),
        };
        let verdict = if self.ok() { "ok" } else { "off" };
        format!("{}: mean abs. err {:.4}{w} [{verdict}]", self.label, self.mean_err)
    }
}

fn max_rel(engine: &[f64], exact: &[f64]) -> f64 {
    engine
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn normalized(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn fit_rows(spec: &ModelSpec, graph: &RegionGraph, header: &[&str], rows: &[Vec<String>]) -> FitResult {
    let data = dataset(spec, graph, header, rows);
    let model = LatentModel::new(spec, &data, graph).expect("model");
    laplace::fit(&model).expect("fit")
}

/// Intercept-only logit with `k` successes out of `n`: the posterior of the
/// success probability is Beta(k, n - k) under a flat intercept prior.
fn intercept_logit(y: &[u8]) -> Check {
    let graph = RegionGraph::isolated(vec!["a".into()]).unwrap();
    let spec = ModelSpec::new(Family::Logit, vec![], Effect::None);
    let rows: Vec<Vec<String>> = y.iter().map(|v| vec!["a".into(), v.to_string()]).collect();
    let fit = fit_rows(&spec, &graph, &["region", "y"], &rows);
    let k = y.iter().filter(|&&v| v == 1).count() as f64;
    let n = y.len() as f64;
    let exact = digamma(k) - digamma(n - k);
    Check {
        label: format!("intercept-only logit y={y:?}"),
        mean_err: (fit.latent_mean()[0] - exact).abs(),
        weight_err: None,
    }
}

fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Exact iid-logit posterior given `tau` by nested dense quadrature:
/// for each intercept value the regional integrals factorize.
/// Returns `(log Z, E[beta0], E[gamma_j])`.
fn iid_exact(regions: &[Vec<u8>], tau: f64) -> (f64, f64, Vec<f64>) {
    let sd = tau.powf(-0.5);
    let lik = |y: &[u8], eta: f64| -> f64 {
        y.iter()
            .map(|&v| f64::from(v) * eta - log1pexp(eta))
            .sum::<f64>()
            .exp()
    };
    let norm = |g: f64| (-0.5 * (g / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt());
    const REACH: f64 = 45.0;
    // Regional integrals f_j(b) and first moments h_j(b) over gamma.
    let inner = |y: &[u8], b: f64| -> (f64, f64) {
        let lo = (-10.0 * sd).max(-REACH - b);
        let hi = (10.0 * sd).min(REACH - b);
        if lo >= hi {
            return (0.0, 0.0);
        }
        let f = simpson(|g| lik(y, b + g) * norm(g), lo, hi, 1200);
        let h = simpson(|g| g * lik(y, b + g) * norm(g), lo, hi, 1200);
        (f, h)
    };
    let half = REACH + 10.0 * sd;
    let nodes = 4000;
    let step = 2.0 * half / nodes as f64;
    let mut z = 0.0;
    let mut m0 = 0.0;
    let mut mg = vec![0.0; regions.len()];
    for i in 0..=nodes {
        let b = -half + i as f64 * step;
        let w = if i == 0 || i == nodes {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let parts: Vec<(f64, f64)> = regions.iter().map(|y| inner(y, b)).collect();
        let prod: f64 = parts.iter().map(|p| p.0).product();
        z += w * prod;
        m0 += w * b * prod;
        for (j, acc) in mg.iter_mut().enumerate() {
            let others: f64 = parts
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, p)| p.0)
                .product();
            *acc += w * parts[j].1 * others;
        }
    }
    let scale = step / 3.0;
    z *= scale;
    let mean0 = m0 * scale / z;
    let means = mg.iter().map(|m| m * scale / z).collect();
    (z.ln(), mean0, means)
}

/// Engine fit of an iid logit model, on the explored grid or on `thetas`.
fn iid_logit(regions: &[Vec<u8>], thetas: Option<&[f64]>) -> Check {
    let names: Vec<String> = (0..regions.len()).map(|j| format!("r{j}")).collect();
    let graph = RegionGraph::isolated(names.clone()).unwrap();
    let spec = ModelSpec::new(Family::Logit, vec![], Effect::Iid);
    let rows: Vec<Vec<String>> = regions
        .iter()
        .zip(&names)
        .flat_map(|(y, id)| y.iter().map(move |v| vec![id.clone(), v.to_string()]))
        .collect();
    let fit = match thetas {
        None => fit_rows(&spec, &graph, &["region", "y"], &rows),
        Some(ts) => {
            let data = dataset(&spec, &graph, &["region", "y"], &rows);
            let model = LatentModel::new(&spec, &data, &graph).expect("model");
            let pts: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t]).collect();
            let grid = laplace::evaluate_grid(&model, &pts).expect("grid");
            laplace::latent_marginals(&model, grid).expect("marginals")
        }
    };
    let mut logs = Vec::new();
    let mut conditional = Vec::new();
    for p in &fit.grid {
        let log_tau = p.theta[0];
        let (lz, m0, mg) = iid_exact(regions, log_tau.exp());
        // Uniform prior on tau is `exp(theta)` on the log scale.
        logs.push(lz + log_tau);
        conditional.push(std::iter::once(m0).chain(mg).collect::<Vec<f64>>());
    }
    let w_exact = normalized(&logs);
    let m = conditional[0].len();
    let exact_mean: Vec<f64> = (0..m)
        .map(|k| w_exact.iter().zip(&conditional).map(|(w, c)| w * c[k]).sum())
        .collect();
    Check {
        label: format!(
            "iid logit J={} n={} ({} grid points{}), engine mean {} vs {}",
            regions.len(),
            rows.len(),
            fit.grid.len(),
            if thetas.is_some() { ", fixed log tau" } else { "" },
            fmt_list(&fit.latent_mean()),
            fmt_list(&exact_mean)
        ),
        mean_err: max_abs(&fit.latent_mean(), &exact_mean),
        weight_err: Some(max_rel(&fit.weights(), &w_exact)),
    }
}

/// PC prior on `alpha' = 10 ln alpha`, from the closed-form divergence of
/// Weibull(alpha, 1) from the unit exponential.
fn pc_log_density(alpha_prime: f64, rate: f64) -> f64 {
    let a = (0.1 * alpha_prime).exp();
    let kld = |k: f64| k.ln() - EULER_GAMMA * (k - 1.0) / k + gamma(1.0 + 1.0 / k) - 1.0;
    let kld_slope =
        |k: f64| 1.0 / k - EULER_GAMMA / (k * k) - gamma(1.0 + 1.0 / k) * digamma(1.0 + 1.0 / k) / (k * k);
    let curvature = (1.0 - EULER_GAMMA).powi(2) + PI * PI / 6.0;
    let (d, slope) = if (a - 1.0).abs() < 1e-5 {
        (curvature.sqrt() * (a - 1.0).abs(), curvature.sqrt())
    } else {
        let d = (2.0 * kld(a)).sqrt();
        (d, (kld_slope(a) / d).abs())
    };
    (0.5 * rate).ln() - rate * d + slope.ln() + (0.1 * a).ln()
}

/// Intercept-only Weibull: the intercept integral is a gamma function, so
/// `log Z(alpha) = E ln alpha + (alpha - 1) sum ln t_ev + ln Gamma(E) - E ln S(alpha)`
/// with `S(alpha) = sum t^alpha` and `E[zeta0 | alpha] = psi(E) - ln S(alpha)`.
fn intercept_weibull(times: &[f64], events: &[u8], rate: f64) -> Check {
    let graph = RegionGraph::isolated(vec!["a".into()]).unwrap();
    let mut spec = ModelSpec::new(Family::Weibull, vec![], Effect::None);
    spec.priors.pc_alpha_rate = rate;
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(events)
        .map(|(t, e)| vec!["a".into(), t.to_string(), e.to_string()])
        .collect();
    let fit = fit_rows(&spec, &graph, &["region", "time", "event"], &rows);
    let e = events.iter().map(|&v| f64::from(v)).sum::<f64>();
    let sum_log_t: f64 = times
        .iter()
        .zip(events)
        .filter(|(_, &v)| v == 1)
        .map(|(t, _)| t.ln())
        .sum();
    let mut logs = Vec::new();
    let mut means = Vec::new();
    let mut alphas = Vec::new();
    for p in &fit.grid {
        let ap = p.theta[0];
        let a = (0.1 * ap).exp();
        let s: f64 = times.iter().map(|t| t.powf(a)).sum();
        logs.push(e * a.ln() + (a - 1.0) * sum_log_t + ln_gamma(e) - e * s.ln() + pc_log_density(ap, rate));
        means.push(digamma(e) - s.ln());
        alphas.push(a);
    }
    let w_exact = normalized(&logs);
    let exact_mean: f64 = w_exact.iter().zip(&means).map(|(w, m)| w * m).sum();
    let exact_alpha: f64 = w_exact.iter().zip(&alphas).map(|(w, a)| w * a).sum();
    let engine_mean = fit.latent_mean()[0];
    Check {
        label: format!(
            "intercept-only weibull, PC rate {rate}: zeta0 {engine_mean:.4} vs {exact_mean:.4}, \
             alpha {:.4} vs {exact_alpha:.4} ({} grid points)",
            fit.hyper_mean().alpha,
            fit.grid.len()
        ),
        mean_err: (engine_mean - exact_mean).abs(),
        weight_err: Some(max_rel(&fit.weights(), &w_exact)),
    }
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let mut checks = vec![
        intercept_logit(&[1, 1, 0, 0]),
        intercept_logit(&[1, 0, 0, 1, 0]),
        iid_logit(&[vec![1, 0], vec![1, 0]], None),
        iid_logit(&[vec![1, 1, 0], vec![0, 1]], None),
        iid_logit(&[vec![1, 1, 0], vec![0, 1]], Some(&[-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0])),
    ];
    let times = [0.2, 0.5, 0.9, 1.0, 0.7];
    let events = [1, 1, 0, 1, 1];
    for rate in [1.0, 5.0, 10.0] {
        checks.push(intercept_weibull(&times, &events, rate));
    }
    let secs = start.elapsed().as_secs_f64();
    let mut detail: Vec<String> = checks.iter().map(Check::line).collect();
    detail.push(format!("elapsed {secs:.1} s (limit 30 s)"));
    let pass = checks.iter().all(Check::ok) && secs < 30.0;
    Outcome::new(pass, detail)
}
