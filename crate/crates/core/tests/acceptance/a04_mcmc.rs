use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatial_lgm::laplace::{self, LatentModel};
use spatial_lgm::oracle::{mcmc_sample, McmcOptions};
use spatial_lgm::simulate::rescale_times;
use spatial_lgm::{Effect, Family, HyperKind, ModelSpec, RegionGraph};

use crate::support::simulated;
use crate::Outcome;

const REGIONS: usize = 30;
const ROWS: usize = 3000;
const ITERATIONS: usize = 200_000;
const BURN_IN: usize = 20_000;
const THIN: usize = 10;
const LIMIT_SECS: f64 = 300.0;

/// Logit intercept for the oracle comparison. The default intercept gives
/// about 20 cases in 3000 rows, where several coefficients are barely
/// identified and no Gaussian approximation is meant to hold.
const LOGIT_INTERCEPT: f64 = -2.0;
const WEIBULL_EVENT_SHARE: f64 = 0.3;

/// Smallest horizon giving at least `share` events for the given seed.
fn horizon_for(graph: &RegionGraph, seed: u64, share: f64) -> f64 {
    let events = |h: f64| {
        let (_, sim) = simulated(Family::Weibull, Effect::Leroux, graph, ROWS, 4.0, 0.9, seed, |s| {
            s.alpha = 1.11;
            s.horizon = Some(h);
        });
        match &sim.dataset.outcome {
            spatial_lgm::domain::Outcome::Survival { event, .. } => {
                event.iter().map(|&e| f64::from(e)).sum::<f64>() / ROWS as f64
            }
            _ => unreachable!(),
        }
    };
    let (mut lo, mut hi) = (1e-3_f64, 1e6_f64);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if events(mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn compare(family: Family) -> Outcome {
    let start = Instant::now();
    let seed = match family {
        Family::Logit => 4_001,
        Family::Weibull => 5_001,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = RegionGraph::planar_like(REGIONS, 5, &mut rng);
    let horizon = match family {
        Family::Logit => None,
        Family::Weibull => Some(horizon_for(&graph, seed, WEIBULL_EVENT_SHARE)),
    };
    let (setup, sim) = simulated(family, Effect::Leroux, &graph, ROWS, 4.0, 0.9, seed, |s| {
        if family == Family::Logit {
            s.truth[0] = LOGIT_INTERCEPT;
        } else {
            s.alpha = 1.11;
            s.horizon = horizon;
        }
    });
    let mut data = sim.dataset;
    rescale_times(&mut data);
    let spec = ModelSpec::new(family, setup.covariate_names(), Effect::Leroux);
    let setup_secs = start.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let model = LatentModel::new(&spec, &data, &graph).expect("model");
    let fit = laplace::fit(&model).expect("fit");
    let fit_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let options = McmcOptions {
        burn_in: BURN_IN,
        thin: THIN,
        ..McmcOptions::default()
    };
    let chain = mcmc_sample(&spec, &data, &graph, ITERATIONS, seed + 1, &options).expect("chain");
    let mcmc_secs = t1.elapsed().as_secs_f64();

    let mut detail = Vec::new();
    let outcome_line = match &data.outcome {
        spatial_lgm::domain::Outcome::Binary(y) => {
            format!("{} cases in {ROWS} rows", y.iter().map(|&v| usize::from(v)).sum::<usize>())
        }
        spatial_lgm::domain::Outcome::Survival { event, .. } => format!(
            "{} events in {ROWS} rows (horizon {:.4})",
            event.iter().map(|&v| usize::from(v)).sum::<usize>(),
            horizon.unwrap_or(f64::NAN)
        ),
    };
    detail.push(format!("J={REGIONS}, {outcome_line}, tau=4, phi=0.9"));

    let mean = fit.latent_mean();
    let mut worst_ratio: f64 = 0.0;
    let mut all_ok = true;
    let mut rows = Vec::new();
    for (k, name) in fit.fixed_names.iter().enumerate() {
        let s = chain.summary(name).expect("chain column");
        let tol = (3.0 * s.mcse).max(0.05);
        let diff = (mean[k] - s.mean).abs();
        all_ok &= diff <= tol;
        worst_ratio = worst_ratio.max(diff / tol);
        rows.push(format!("{name} {:.3}/{:.3}", mean[k], s.mean));
    }
    detail.push(format!("engine/MCMC means: {}", rows.join(", ")));
    let hyper = |kind: HyperKind| fit.hyper_marginal(kind).map(|m| m.summary.mean);
    if family == Family::Weibull {
        let s = chain.summary("alpha").expect("alpha column");
        let tol = (3.0 * s.mcse).max(0.05);
        let engine = hyper(HyperKind::AlphaPrime).expect("alpha marginal");
        let diff = (engine - s.mean).abs();
        all_ok &= diff <= tol;
        worst_ratio = worst_ratio.max(diff / tol);
        detail.push(format!("alpha engine {engine:.4} vs MCMC {:.4} (mcse {:.4})", s.mean, s.mcse));
    }
    let phi = hyper(HyperKind::LogitPhi).expect("phi marginal");
    let chain_phi = chain.summary("phi").expect("phi column");
    let tau = hyper(HyperKind::LogTau).expect("tau marginal");
    let chain_tau = chain.summary("tau").expect("tau column");
    detail.push(format!(
        "phi engine {phi:.3} vs MCMC {:.3}; tau engine {tau:.3} vs MCMC {:.3}",
        chain_phi.mean, chain_tau.mean
    ));
    detail.push(format!(
        "largest |difference| / tolerance {worst_ratio:.3} (tolerance max(0.05, 3 MCSE))"
    ));
    let rates: Vec<String> = chain
        .acceptance_rates
        .iter()
        .map(|(b, r)| format!("{b} {r:.2}"))
        .collect();
    detail.push(format!("MCMC acceptance: {}", rates.join(", ")));
    let secs = start.elapsed().as_secs_f64();
    detail.push(format!(
        "setup {setup_secs:.1} s, engine {fit_secs:.1} s ({} grid points), {ITERATIONS} MCMC iterations {mcmc_secs:.1} s; total {secs:.1} s (limit {LIMIT_SECS} s)",
        fit.grid.len()
    ));
    let phi_ok = family == Family::Weibull || phi > 0.5;
    Outcome::new(all_ok && phi_ok && secs < LIMIT_SECS, detail)
}

pub fn run_logit() -> Outcome {
    compare(Family::Logit)
}

pub fn run_weibull() -> Outcome {
    compare(Family::Weibull)
}
