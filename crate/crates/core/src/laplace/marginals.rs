use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::hyper::{explore_hyperparameters, HyperGrid};
use super::mode::GaussianApprox;
use super::model::{HyperValues, LatentModel};
use crate::domain::{Family, HyperKind, HyperPoint, Marginal, ModelSpec, Summary};
use crate::error::{Error, Result};

const SUPPORT_POINTS: usize = 201;
/// Hyperparameter marginals are reported through a nonlinear transform,
/// so they get a denser support than the latent ones.
const HYPER_SUPPORT_POINTS: usize = 401;
const FINE_POINTS: usize = 4001;
/// Standard normal tail beyond 5.
const TAIL_PROB: f64 = 2.866_515_718_791_939e-7;

/// Weighted mixture of univariate Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl GaussianMixture {
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, (m, s))| w * std_normal_pdf((x - m) / s) / s)
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, (m, s))| w * std_normal_cdf((x - m) / s))
            .sum()
    }

    pub fn quantile(&self, prob: f64) -> f64 {
        let (mut lo, mut hi) = self
            .means
            .iter()
            .zip(&self.sds)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (m, s)| {
                (lo.min(m - 12.0 * s), hi.max(m + 12.0 * s))
            });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.cdf(mid) < prob {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.mean(),
            sd: self.variance().sqrt(),
            q025: self.quantile(0.025),
            q50: self.quantile(0.5),
            q975: self.quantile(0.975),
        }
    }

    /// Interval between the quantiles at `Phi(-5)` and `Phi(5)`; for a
    /// single component this is `mean ± 5 sd`. Wide mixtures keep their
    /// tails, which a fixed multiple of the mixture sd can cut off.
    pub fn tail_range(&self) -> (f64, f64) {
        (self.quantile(TAIL_PROB), self.quantile(1.0 - TAIL_PROB))
    }

    /// Density on [`GaussianMixture::tail_range`].
    pub fn marginal(&self) -> Marginal {
        let summary = self.summary();
        let (lo, hi) = self.tail_range();
        let support = spaced(lo, hi, SUPPORT_POINTS);
        let density = support.iter().map(|&x| self.pdf(x)).collect();
        Marginal {
            support,
            density,
            summary,
        }
    }
}

fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Posterior mean and sd of one regional effect.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectSummary {
    pub region: String,
    pub summary: Summary,
}

/// Posterior output of one fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub fixed_names: Vec<String>,
    /// Fixed effects on the linear-predictor scale (`zeta` for Weibull).
    pub fixed: Vec<Marginal>,
    /// Accelerated-failure-time coefficients `-zeta / alpha` (Weibull only).
    pub aft: Vec<Marginal>,
    pub random: Vec<RandomEffectSummary>,
    pub hyper_kinds: Vec<HyperKind>,
    /// Hyperparameter marginals in natural scale.
    pub hyper: Vec<Marginal>,
    pub grid: Vec<HyperPoint>,
    pub approximations: Vec<GaussianApprox>,
    /// Per grid point marginal variances of the latent field.
    pub variances: Vec<Vec<f64>>,
    pub region_ids: Vec<String>,
    pub time_scale: f64,
}

impl FitResult {
    pub fn n_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.grid.iter().map(|p| p.weight).collect()
    }

    /// Mixture mean of the latent field.
    pub fn latent_mean(&self) -> Vec<f64> {
        let m = self.approximations[0].dim();
        let mut mean = vec![0.0; m];
        for (p, ga) in self.grid.iter().zip(&self.approximations) {
            for (acc, v) in mean.iter_mut().zip(&ga.mode) {
                *acc += p.weight * v;
            }
        }
        mean
    }

    /// Posterior mean of the hyperparameters in natural scale.
    pub fn hyper_mean(&self) -> HyperValues {
        let mut hv = HyperValues {
            tau: 0.0,
            phi: 0.0,
            alpha: 0.0,
        };
        for (p, ga) in self.grid.iter().zip(&self.approximations) {
            hv.tau += p.weight * ga.hyper.tau;
            hv.phi += p.weight * ga.hyper.phi;
            hv.alpha += p.weight * ga.hyper.alpha;
        }
        hv
    }

    /// Mixture of per-point Gaussian marginals for latent coordinate `k`.
    pub fn latent_mixture(&self, k: usize) -> GaussianMixture {
        GaussianMixture {
            weights: self.weights(),
            means: self.approximations.iter().map(|ga| ga.mode[k]).collect(),
            sds: self.variances.iter().map(|v| v[k].sqrt()).collect(),
        }
    }

    pub fn hyper_marginal(&self, kind: HyperKind) -> Option<&Marginal> {
        self.hyper_kinds
            .iter()
            .position(|&k| k == kind)
            .map(|i| &self.hyper[i])
    }

    /// All summaries as `(name, summary)` in output order.
    pub fn summary_rows(&self) -> Vec<(String, Summary)> {
        let mut rows: Vec<(String, Summary)> = self
            .fixed_names
            .iter()
            .cloned()
            .zip(self.fixed.iter().map(|m| m.summary))
            .collect();
        for (name, m) in self.fixed_names.iter().zip(&self.aft) {
            rows.push((format!("aft_{name}"), m.summary));
        }
        for (kind, m) in self.hyper_kinds.iter().zip(&self.hyper) {
            rows.push((kind.name().to_string(), m.summary));
        }
        for r in &self.random {
            rows.push((format!("gamma_{}", r.region), r.summary));
        }
        rows
    }

    /// All tabulated marginals as `(name, marginal)`.
    pub fn marginal_rows(&self) -> Vec<(String, &Marginal)> {
        let mut rows: Vec<(String, &Marginal)> = self.fixed_names.iter().cloned().zip(&self.fixed).collect();
        for (name, m) in self.fixed_names.iter().zip(&self.aft) {
            rows.push((format!("aft_{name}"), m));
        }
        for (kind, m) in self.hyper_kinds.iter().zip(&self.hyper) {
            rows.push((kind.name().to_string(), m));
        }
        rows
    }
}

/// Hyperparameter marginal from weighted grid points by a shrunk Gaussian
/// kernel in internal scale, reported in natural scale.
pub fn hyper_marginal(kind: HyperKind, values: &[f64], weights: &[f64], bandwidth: f64) -> Marginal {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum();
    // Shrinking the centres towards the mean keeps the mixture variance
    // equal to the weighted grid variance.
    let h = if var > 0.0 { bandwidth.min(0.9 * var.sqrt()) } else { bandwidth };
    let a = if var > 0.0 { (1.0 - h * h / var).max(0.0).sqrt() } else { 0.0 };
    let mixture = GaussianMixture {
        weights: weights.to_vec(),
        means: values.iter().map(|v| mean + a * (v - mean)).collect(),
        sds: vec![h; values.len()],
    };
    let lo = mixture.means.iter().fold(f64::INFINITY, |m, &v| m.min(v)) - 6.0 * h;
    let hi = mixture.means.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) + 6.0 * h;
    let fine = spaced(lo, hi, FINE_POINTS);
    let dens: Vec<f64> = fine.iter().map(|&t| mixture.pdf(t)).collect();
    let nat: Vec<f64> = fine.iter().map(|&t| kind.to_natural(t)).collect();
    let w = (hi - lo) / (FINE_POINTS - 1) as f64;
    let integrate = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..FINE_POINTS - 1).map(|i| 0.5 * w * (f(i) + f(i + 1))).sum()
    };
    let mass = integrate(&|i| dens[i]);
    let nat_mean = integrate(&|i| dens[i] * nat[i]) / mass;
    let nat_var = integrate(&|i| dens[i] * (nat[i] - nat_mean).powi(2)) / mass;
    let summary = Summary {
        mean: nat_mean,
        sd: nat_var.max(0.0).sqrt(),
        q025: kind.to_natural(mixture.quantile(0.025)),
        q50: kind.to_natural(mixture.quantile(0.5)),
        q975: kind.to_natural(mixture.quantile(0.975)),
    };
    let (t_lo, t_hi) = mixture.tail_range();
    let internal = spaced(t_lo, t_hi, HYPER_SUPPORT_POINTS);
    let support: Vec<f64> = internal.iter().map(|&t| kind.to_natural(t)).collect();
    let density: Vec<f64> = internal
        .iter()
        .map(|&t| mixture.pdf(t) / kind.jacobian(t))
        .collect();
    Marginal {
        support,
        density,
        summary,
    }
}

/// Integrated posterior marginals from a weighted hyperparameter grid.
pub fn latent_marginals(model: &LatentModel, grid: HyperGrid) -> Result<FitResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let variances: Vec<Vec<f64>> = grid
        .approximations
        .par_iter()
        .map(|ga| ga.marginal_variances())
        .collect();
    let p = model.n_fixed();
    let weights: Vec<f64> = grid.points.iter().map(|pt| pt.weight).collect();
    let mixture = |k: usize| GaussianMixture {
        weights: weights.clone(),
        means: grid.approximations.iter().map(|ga| ga.mode[k]).collect(),
        sds: variances.iter().map(|v| v[k].sqrt()).collect(),
    };
    let fixed: Vec<Marginal> = (0..p).map(|k| mixture(k).marginal()).collect();
    let aft = if model.spec.family == Family::Weibull {
        (0..p)
            .map(|k| {
                let mut mix = mixture(k);
                for (i, ga) in grid.approximations.iter().enumerate() {
                    mix.means[i] = -mix.means[i] / ga.hyper.alpha;
                    mix.sds[i] /= ga.hyper.alpha;
                }
                mix.marginal()
            })
            .collect()
    } else {
        Vec::new()
    };
    let random = (0..model.n_random())
        .map(|j| {
            let mix = mixture(p + j);
            RandomEffectSummary {
                region: model.region_ids[j].clone(),
                summary: mix.summary(),
            }
        })
        .collect();
    let kinds = model.kinds().to_vec();
    let hyper = kinds
        .iter()
        .enumerate()
        .map(|(l, &kind)| {
            let values: Vec<f64> = grid.points.iter().map(|pt| pt.theta[l]).collect();
            let scale = grid.scales.get(l).copied().unwrap_or(1.0);
            hyper_marginal(kind, &values, &weights, 0.5 * grid.step * scale)
        })
        .collect();
    Ok(FitResult {
        spec: model.spec.clone(),
        fixed_names: model.spec.fixed_names(),
        fixed,
        aft,
        random,
        hyper_kinds: kinds,
        hyper,
        grid: grid.points,
        approximations: grid.approximations,
        variances,
        region_ids: model.region_ids.clone(),
        time_scale: model.time_scale,
    })
}

/// Explores the hyperparameters and integrates the latent marginals.
pub fn fit(model: &LatentModel) -> Result<FitResult> {
    let grid = explore_hyperparameters(model)?;
    latent_marginals(model, grid)
}
