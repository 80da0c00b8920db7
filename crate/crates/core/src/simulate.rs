//! Synthetic datasets from the generative model.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::domain::{Dataset, Effect, Family, Outcome};
use crate::error::{Error, Result};
use crate::graph::{self, RegionGraph};
use crate::likelihood;

/// Covariate generator. Region-level generators draw once per region.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Bernoulli(f64),
    Normal(f64, f64),
    RegionBernoulli(f64),
    RegionNormal(f64, f64),
    /// One indicator of a mutually exclusive group; rows fall into the
    /// indicators of a group in declaration order with the given
    /// probabilities, and into the baseline otherwise.
    Level { group: String, p: f64 },
}

impl Generator {
    /// Parses `bernoulli(p)`, `normal(m, s)`, `region_bernoulli(p)`,
    /// `region_normal(m, s)` or `level(group, p)`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::BadConfig(format!("cannot parse generator `{text}`"));
        let t = text.trim();
        let open = t.find('(').ok_or_else(bad)?;
        if !t.ends_with(')') {
            return Err(bad());
        }
        let name = t[..open].trim();
        let args: Vec<&str> = t[open + 1..t.len() - 1].split(',').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        let prob = |s: &str| {
            let p = num(s)?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(Error::BadConfig(format!("probability {p} outside [0, 1] in `{text}`")))
            }
        };
        let sd = |s: &str| {
            let v = num(s)?;
            if v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::BadConfig(format!("negative sd in `{text}`")))
            }
        };
        match (name, args.as_slice()) {
            ("bernoulli", [p]) => Ok(Generator::Bernoulli(prob(p)?)),
            ("normal", [m, s]) => Ok(Generator::Normal(num(m)?, sd(s)?)),
            ("region_bernoulli", [p]) => Ok(Generator::RegionBernoulli(prob(p)?)),
            ("region_normal", [m, s]) => Ok(Generator::RegionNormal(num(m)?, sd(s)?)),
            ("level", [g, p]) if !g.is_empty() => Ok(Generator::Level {
                group: g.to_string(),
                p: prob(p)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Everything needed to draw one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub family: Family,
    pub effect: Effect,
    pub covariates: Vec<(String, Generator)>,
    pub n: usize,
    /// Intercept then one coefficient per covariate (`zeta` scale for Weibull).
    pub truth: Vec<f64>,
    pub tau: f64,
    pub phi: f64,
    pub alpha: f64,
    /// Administrative censoring time; `None` for no censoring.
    pub horizon: Option<f64>,
}

pub const DEFAULT_COVARIATES: [&str; 8] = ["Woman", "Age2", "Age3", "City", "T_A10", "T_B01", "T_C", "Depr"];

/// Posterior means of the spatial fits used as default truth, intercept first.
pub const LOGIT_TRUTH: [f64; 9] = [-5.912, -0.216, 0.933, 1.728, 0.007, 0.239, 0.236, 0.324, 0.096];
pub const WEIBULL_TRUTH: [f64; 9] = [-5.914, -0.214, 0.932, 1.72, 0.007, 0.236, 0.234, 0.322, 0.095];

pub fn default_generator(name: &str) -> Option<Generator> {
    Some(match name {
        "Woman" => Generator::Bernoulli(0.52),
        "Age2" => Generator::Level {
            group: "age".into(),
            p: 0.35,
        },
        "Age3" => Generator::Level {
            group: "age".into(),
            p: 0.3,
        },
        "City" => Generator::RegionBernoulli(0.2),
        "T_A10" => Generator::Bernoulli(0.06),
        "T_B01" => Generator::Bernoulli(0.15),
        "T_C" => Generator::Bernoulli(0.4),
        "Depr" => Generator::RegionNormal(0.0, 1.0),
        _ => return None,
    })
}

impl SimulationSetup {
    /// Default covariates, generators and truth for a family.
    pub fn defaults(family: Family, effect: Effect) -> Self {
        let (truth, tau, phi, alpha) = match family {
            Family::Logit => (LOGIT_TRUTH.to_vec(), 11.3, 0.866, 1.0),
            Family::Weibull => (WEIBULL_TRUTH.to_vec(), 9.365, 0.889, 1.112),
        };
        Self {
            family,
            effect,
            covariates: DEFAULT_COVARIATES
                .iter()
                .map(|&n| (n.to_string(), default_generator(n).expect("default generator")))
                .collect(),
            n: 10_000,
            truth,
            tau,
            phi,
            alpha,
            horizon: None,
        }
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|(n, _)| n.clone()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.truth.len() != self.covariates.len() + 1 {
            return Err(Error::BadConfig(format!(
                "truth has {} coefficients, expected {} (intercept plus covariates)",
                self.truth.len(),
                self.covariates.len() + 1
            )));
        }
        if self.n == 0 {
            return Err(Error::BadConfig("n must be positive".into()));
        }
        if self.effect != Effect::None && !(self.tau > 0.0) {
            return Err(Error::BadConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::PhiOutOfRange(self.phi));
        }
        if self.family == Family::Weibull && !(self.alpha > 0.0) {
            return Err(Error::NonPositiveShape(self.alpha));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::BadConfig(format!("horizon must be > 0, got {h}")));
            }
        }
        let mut groups: Vec<(&str, f64)> = Vec::new();
        for (_, g) in &self.covariates {
            if let Generator::Level { group, p } = g {
                match groups.iter_mut().find(|(name, _)| name == group) {
                    Some(entry) => entry.1 += p,
                    None => groups.push((group, *p)),
                }
            }
        }
        if let Some((g, total)) = groups.iter().find(|(_, t)| *t > 1.0 + 1e-12) {
            return Err(Error::BadConfig(format!(
                "level probabilities of group `{g}` sum to {total} > 1"
            )));
        }
        Ok(())
    }
}

/// Draws regional effects from the effect prior with precision `tau R(phi)`.
/// The intrinsic case draws on the complement of the null space, so each
/// connected component sums to zero.
pub fn sample_effects<R: Rng + ?Sized>(
    effect: Effect,
    graph: &RegionGraph,
    tau: f64,
    phi: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let j = graph.len();
    let z: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
    let phi = match effect {
        Effect::None => return Ok(vec![0.0; j]),
        Effect::Iid => 0.0,
        Effect::Icar => 1.0,
        Effect::Leroux => phi,
    };
    if phi == 0.0 {
        return Ok(z.iter().map(|v| v / tau.sqrt()).collect());
    }
    let q = if phi == 1.0 {
        graph::icar_structure(graph).to_dense()
    } else {
        graph::model_icar_structure(graph).to_dense()
    };
    let r = DMatrix::identity(j, j) * (1.0 - phi) + q * phi;
    let eig = r.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(1.0);
    let mut gamma = vec![0.0; j];
    for k in 0..j {
        let lambda = eig.eigenvalues[k];
        if lambda <= 1e-9 * top {
            continue;
        }
        let s = z[k] / (tau * lambda).sqrt();
        for (i, g) in gamma.iter_mut().enumerate() {
            *g += s * eig.eigenvectors[(i, k)];
        }
    }
    Ok(gamma)
}

/// One synthetic dataset with the regional effects that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub gamma: Vec<f64>,
}

pub fn simulate<R: Rng + ?Sized>(setup: &SimulationSetup, graph: &RegionGraph, rng: &mut R) -> Result<Simulated> {
    setup.validate()?;
    let j = graph.len();
    let q = setup.covariates.len();
    let gamma = sample_effects(setup.effect, graph, setup.tau, setup.phi, rng)?;
    let region_values: Vec<Vec<f64>> = setup
        .covariates
        .iter()
        .map(|(_, g)| match *g {
            Generator::RegionBernoulli(p) => (0..j).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect(),
            Generator::RegionNormal(m, s) => {
                let d = Normal::new(m, s).expect("validated sd");
                (0..j).map(|_| d.sample(rng)).collect()
            }
            _ => Vec::new(),
        })
        .collect();
    let mut groups: Vec<String> = Vec::new();
    for (_, g) in &setup.covariates {
        if let Generator::Level { group, .. } = g {
            if !groups.contains(group) {
                groups.push(group.clone());
            }
        }
    }
    let n = setup.n;
    let mut covariates = Vec::with_capacity(n * q);
    let mut region = Vec::with_capacity(n);
    let mut y = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut row = vec![0.0; q];
    for _ in 0..n {
        let r = rng.random_range(0..j);
        let group_u: Vec<f64> = groups.iter().map(|_| rng.random::<f64>()).collect();
        let mut group_acc = vec![0.0; groups.len()];
        for (k, (_, g)) in setup.covariates.iter().enumerate() {
            row[k] = match g {
                Generator::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < *p)),
                Generator::Normal(m, s) => m + s * rng.sample::<f64, _>(StandardNormal),
                Generator::RegionBernoulli(_) | Generator::RegionNormal(..) => region_values[k][r],
                Generator::Level { group, p } => {
                    let gi = groups.iter().position(|x| x == group).expect("known group");
                    let lo = group_acc[gi];
                    group_acc[gi] += p;
                    f64::from(u8::from(group_u[gi] >= lo && group_u[gi] < lo + p))
                }
            };
        }
        let eta = setup.truth[0]
            + row.iter().zip(&setup.truth[1..]).map(|(x, b)| x * b).sum::<f64>()
            + gamma[r];
        match setup.family {
            Family::Logit => y.push(u8::from(rng.random::<f64>() < likelihood::logistic(eta))),
            Family::Weibull => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let t = (-u.ln() / eta.exp()).powf(1.0 / setup.alpha);
                match setup.horizon {
                    Some(h) if t > h => {
                        time.push(h);
                        event.push(0);
                    }
                    _ => {
                        time.push(t);
                        event.push(1);
                    }
                }
            }
        }
        covariates.extend_from_slice(&row);
        region.push(r);
    }
    let outcome = match setup.family {
        Family::Logit => Outcome::Binary(y),
        Family::Weibull => Outcome::Survival { time, event },
    };
    Ok(Simulated {
        dataset: Dataset {
            outcome,
            covariate_names: setup.covariate_names(),
            covariates,
            region,
            region_ids: graph.ids().to_vec(),
            time_scale: 1.0,
        },
        gamma,
    })
}

/// Rescales survival times by their maximum, as data validation does.
pub fn rescale_times(data: &mut Dataset) {
    if let Outcome::Survival { time, .. } = &mut data.outcome {
        let scale = time.iter().copied().fold(0.0, f64::max);
        if scale > 0.0 {
            time.iter_mut().for_each(|t| *t /= scale);
            data.time_scale *= scale;
        }
    }
}
