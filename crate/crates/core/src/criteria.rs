//! DIC and WAIC from draws of the fitted mixture approximation.
//!
//! Draw `s` uses its own ChaCha stream keyed by `(seed, s)`, and batches are
//! folded in draw order, so scores depend on the seed and the draw count but
//! not on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplace::{FitResult, LatentModel};

pub const DEFAULT_DRAWS: usize = 2000;
pub const MIN_DRAWS: usize = 500;
const BATCH: usize = 64;
const SPLITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub score: f64,
    /// `p_D` for DIC, `p_waic` for WAIC.
    pub effective_params: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// Monte Carlo standard error from splitting the draws into batches.
    pub mc_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub dic: ScorePair,
    pub waic: ScorePair,
}

/// Draws a latent vector and shape from the mixture with a per-draw stream.
pub fn mixture_draw(fit: &FitResult, seed: u64, draw: u64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let u: f64 = rng.random();
    let mut k = fit.grid.len() - 1;
    let mut acc = 0.0;
    for (i, p) in fit.grid.iter().enumerate() {
        acc += p.weight;
        if u < acc {
            k = i;
            break;
        }
    }
    let ga = &fit.approximations[k];
    let z: Vec<f64> = (0..ga.dim()).map(|_| rng.sample(StandardNormal)).collect();
    (ga.sample(&z), ga.hyper.alpha)
}

fn unit_log_lik(model: &LatentModel, x: &[f64], alpha: f64) -> Vec<f64> {
    let (beta, gamma) = model.split(x);
    let eta = model.design.eta(beta, gamma);
    model
        .units()
        .iter()
        .map(|u| model.design.unit_ll(u, eta[u.cell], alpha))
        .collect()
}

fn deviance(model: &LatentModel, lls: &[f64]) -> f64 {
    -2.0 * model
        .units()
        .iter()
        .zip(lls)
        .map(|(u, l)| u.count * l)
        .sum::<f64>()
}

/// Online per-unit log-mean-exp and variance of the pointwise log-likelihood.
#[derive(Debug, Clone)]
struct Pointwise {
    n: f64,
    max: Vec<f64>,
    sum_exp: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    deviance_sum: f64,
}

impl Pointwise {
    fn new(units: usize) -> Self {
        Self {
            n: 0.0,
            max: vec![f64::NEG_INFINITY; units],
            sum_exp: vec![0.0; units],
            mean: vec![0.0; units],
            m2: vec![0.0; units],
            deviance_sum: 0.0,
        }
    }

    fn push(&mut self, lls: &[f64], dev: f64) {
        self.n += 1.0;
        self.deviance_sum += dev;
        for (i, &l) in lls.iter().enumerate() {
            if l > self.max[i] {
                self.sum_exp[i] = self.sum_exp[i] * (self.max[i] - l).exp() + 1.0;
                self.max[i] = l;
            } else {
                self.sum_exp[i] += (l - self.max[i]).exp();
            }
            let d = l - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (l - self.mean[i]);
        }
    }

    fn waic(&self, model: &LatentModel) -> (f64, f64) {
        let mut lppd = 0.0;
        let mut p = 0.0;
        for (i, u) in model.units().iter().enumerate() {
            lppd += u.count * (self.max[i] + (self.sum_exp[i] / self.n).ln());
            p += u.count * self.m2[i] / (self.n - 1.0);
        }
        (-2.0 * (lppd - p), p)
    }

    fn dic(&self, plug_in: f64) -> (f64, f64) {
        let mean = self.deviance_sum / self.n;
        (2.0 * mean - plug_in, mean - plug_in)
    }
}

fn split_se(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// DIC and WAIC from one shared set of mixture draws.
pub fn compute_scores(fit: &FitResult, model: &LatentModel, draws: usize, seed: u64) -> Result<Scores> {
    if draws < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            draws,
            min: MIN_DRAWS,
        });
    }
    if fit.grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let n_units = model.units().len();
    let mut total = Pointwise::new(n_units);
    let mut parts: Vec<Pointwise> = (0..SPLITS).map(|_| Pointwise::new(n_units)).collect();
    let per_split = draws.div_ceil(SPLITS);
    let mut start = 0;
    while start < draws {
        let end = (start + BATCH).min(draws);
        let batch: Vec<(Vec<f64>, f64)> = (start..end)
            .into_par_iter()
            .map(|s| {
                let (x, alpha) = mixture_draw(fit, seed, s as u64);
                let lls = unit_log_lik(model, &x, alpha);
                let dev = deviance(model, &lls);
                (lls, dev)
            })
            .collect();
        for (offset, (lls, dev)) in batch.iter().enumerate() {
            total.push(lls, *dev);
            parts[(start + offset) / per_split].push(lls, *dev);
        }
        start = end;
    }
    let plug_x = fit.latent_mean();
    let plug_alpha = fit.hyper_mean().alpha;
    let plug_in = deviance(model, &unit_log_lik(model, &plug_x, plug_alpha));
    let (dic, p_d) = total.dic(plug_in);
    let (waic, p_waic) = total.waic(model);
    let dic_parts: Vec<f64> = parts.iter().map(|p| p.dic(plug_in).0).collect();
    let waic_parts: Vec<f64> = parts.iter().map(|p| p.waic(model).0).collect();
    Ok(Scores {
        dic: ScorePair {
            score: dic,
            effective_params: p_d,
            mc_draws: draws,
            seed,
            mc_se: split_se(&dic_parts),
        },
        waic: ScorePair {
            score: waic,
            effective_params: p_waic,
            mc_draws: draws,
            seed,
            mc_se: split_se(&waic_parts),
        },
    })
}

pub fn compute_dic(fit: &FitResult, model: &LatentModel, draws: usize, seed: u64) -> Result<ScorePair> {
    compute_scores(fit, model, draws, seed).map(|s| s.dic)
}

pub fn compute_waic(fit: &FitResult, model: &LatentModel, draws: usize, seed: u64) -> Result<ScorePair> {
    compute_scores(fit, model, draws, seed).map(|s| s.waic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Dataset, Effect, Family, HyperPoint, ModelSpec, Outcome};
    use crate::graph::RegionGraph;
    use crate::laplace::{self, GaussianApprox, HyperValues};

    fn balanced(n: usize) -> LatentModel {
        let graph = RegionGraph::isolated(vec!["r".into()]).unwrap();
        let data = Dataset {
            outcome: Outcome::Binary((0..n).map(|i| (i % 2) as u8).collect()),
            covariate_names: vec![],
            covariates: vec![],
            region: vec![0; n],
            region_ids: vec!["r".into()],
            time_scale: 1.0,
        };
        let spec = ModelSpec::new(Family::Logit, vec![], Effect::None);
        LatentModel::new(&spec, &data, &graph).unwrap()
    }

    #[test]
    fn intercept_only_has_one_effective_parameter() {
        let model = balanced(1000);
        let fit = laplace::fit(&model).unwrap();
        let s = compute_scores(&fit, &model, 2000, 7).unwrap();
        assert!((0.7..=1.3).contains(&s.dic.effective_params), "{:?}", s.dic);
        assert!((s.waic.score - s.dic.score).abs() < 2.0);
        assert!(s.waic.effective_params >= 0.0);
    }

    #[test]
    fn zero_variance_approximation_has_no_effective_parameters() {
        let model = balanced(100);
        let mut fit = laplace::fit(&model).unwrap();
        let hv = HyperValues {
            tau: 1.0,
            phi: 0.0,
            alpha: 1.0,
        };
        fit.approximations = vec![GaussianApprox::independent(vec![0.3], 1, &[1e300], hv).unwrap()];
        fit.grid = vec![HyperPoint {
            theta: vec![],
            log_post: 0.0,
            weight: 1.0,
        }];
        let s = compute_scores(&fit, &model, 500, 1).unwrap();
        assert!(s.dic.effective_params.abs() < 1e-9);
        assert!(s.waic.effective_params.abs() < 1e-12);
        let plug = deviance(&model, &unit_log_lik(&model, &[0.3], 1.0));
        assert!((s.waic.score - plug).abs() < 1e-8);
    }

    #[test]
    fn too_few_draws_is_an_error() {
        let model = balanced(10);
        let fit = laplace::fit(&model).unwrap();
        assert!(matches!(
            compute_dic(&fit, &model, 100, 0),
            Err(Error::InsufficientDraws { .. })
        ));
    }

    #[test]
    fn scores_are_reproducible_and_seed_stable() {
        let model = balanced(400);
        let fit = laplace::fit(&model).unwrap();
        let a = compute_scores(&fit, &model, 800, 3).unwrap();
        let b = compute_scores(&fit, &model, 800, 3).unwrap();
        assert_eq!(a, b);
        let c = compute_scores(&fit, &model, 800, 4).unwrap();
        let se = (a.dic.mc_se.powi(2) + c.dic.mc_se.powi(2)).sqrt();
        assert!((a.dic.score - c.dic.score).abs() < 3.0 * se.max(1e-3) + 1e-6);
    }
}
