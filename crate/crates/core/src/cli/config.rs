//! Run configuration: a TOML file with one level of sections.
//!
//! ```toml
//! [model]
//! family = "logit"          # or "weibull"
//! effect = "leroux"         # none | iid | leroux | icar
//! covariates = ["Woman", "Age2"]
//!
//! [paths]                   # optional, relative to the config file
//! data = "data.csv"
//! graph = "regions.adj"
//!
//! [simulate]
//! regions = 30
//! n = 3000
//! graph = "lattice"         # planar | lattice | path to an adjacency file
//! ```
//!
//! Also `[priors]`, `[fixed]`, `[grid]`, `[run]`, `[truth]` and `[generators]`.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{Effect, Family, ModelSpec};
use crate::error::{Error, Result};
use crate::simulate::{default_generator, Generator, SimulationSetup, LOGIT_TRUTH, WEIBULL_TRUTH};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    #[serde(default = "none_effect")]
    pub effect: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
}

fn none_effect() -> String {
    "none".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_uniform: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit_phi_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit_phi_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_alpha_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_tau_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_tau_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit_phi_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit_phi_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_prime_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_prime_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    /// Neighbours per region for the planar-like graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbours: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub paths: PathsSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub priors: PriorsSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub fixed: FixedSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generators: Option<BTreeMap<String, String>>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.in_file(path))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = PathBuf::from(p);
        if path.is_absolute() {
            path
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn family(&self) -> Result<Family> {
        Family::parse(&self.model.family).map_err(|e| Error::BadConfig(e.to_string()))
    }

    pub fn effect(&self) -> Result<Effect> {
        Effect::parse(&self.model.effect).map_err(|e| Error::BadConfig(e.to_string()))
    }

    pub fn covariates(&self) -> Vec<String> {
        self.model.covariates.clone().unwrap_or_else(|| {
            crate::simulate::DEFAULT_COVARIATES
                .iter()
                .map(|s| s.to_string())
                .collect()
        })
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.family()?, self.covariates(), self.effect()?);
        let p = &self.priors;
        let pri = &mut spec.priors;
        pri.beta_precision = p.beta_precision.unwrap_or(pri.beta_precision);
        pri.intercept_precision = p.intercept_precision.unwrap_or(pri.intercept_precision);
        pri.tau_uniform = p.tau_uniform.unwrap_or(pri.tau_uniform);
        pri.logit_phi_mean = p.logit_phi_mean.unwrap_or(pri.logit_phi_mean);
        pri.logit_phi_precision = p.logit_phi_precision.unwrap_or(pri.logit_phi_precision);
        pri.pc_alpha_rate = p.pc_alpha_rate.unwrap_or(pri.pc_alpha_rate);
        let g = &self.grid;
        let grid = &mut spec.grid;
        grid.step = g.step.unwrap_or(grid.step);
        grid.drop = g.drop.unwrap_or(grid.drop);
        grid.max_points = g.max_points.unwrap_or(grid.max_points);
        let pair = |lo: Option<f64>, hi: Option<f64>, d: (f64, f64)| -> Result<(f64, f64)> {
            let b = (lo.unwrap_or(d.0), hi.unwrap_or(d.1));
            if b.0 < b.1 {
                Ok(b)
            } else {
                Err(Error::BadConfig(format!("empty bound interval [{}, {}]", b.0, b.1)))
            }
        };
        grid.log_tau_bounds = pair(g.log_tau_min, g.log_tau_max, grid.log_tau_bounds)?;
        grid.logit_phi_bounds = pair(g.logit_phi_min, g.logit_phi_max, grid.logit_phi_bounds)?;
        grid.alpha_prime_bounds = pair(g.alpha_prime_min, g.alpha_prime_max, grid.alpha_prime_bounds)?;
        spec.fixed.tau = self.fixed.tau;
        spec.fixed.phi = self.fixed.phi;
        spec.fixed.alpha = self.fixed.alpha;
        spec.seed = self.run.seed.unwrap_or(0);
        spec.validate().map_err(|e| Error::BadConfig(e.to_string()))?;
        Ok(spec)
    }

    /// Simulation setup with defaults filled in for anything not configured.
    pub fn simulation_setup(&self) -> Result<SimulationSetup> {
        let family = self.family()?;
        let effect = self.effect()?;
        let mut setup = SimulationSetup::defaults(family, effect);
        let covariates = self.covariates();
        let generators = self.generators.clone().unwrap_or_default();
        for name in generators.keys() {
            if !covariates.contains(name) {
                return Err(Error::BadConfig(format!("generator for unknown covariate `{name}`")));
            }
        }
        setup.covariates = covariates
            .iter()
            .map(|name| {
                let g = match generators.get(name) {
                    Some(text) => Generator::parse(text)?,
                    None => default_generator(name).ok_or_else(|| {
                        Error::BadConfig(format!("no generator configured for covariate `{name}`"))
                    })?,
                };
                Ok((name.clone(), g))
            })
            .collect::<Result<_>>()?;
        let default_truth: &[f64] = match family {
            Family::Logit => &LOGIT_TRUTH,
            Family::Weibull => &WEIBULL_TRUTH,
        };
        let truth = self.truth.clone().unwrap_or_default();
        for name in truth.keys() {
            if name != "intercept" && !covariates.contains(name) {
                return Err(Error::BadConfig(format!("truth for unknown parameter `{name}`")));
            }
        }
        let default_for = |name: &str| -> Option<f64> {
            if name == "intercept" {
                return Some(default_truth[0]);
            }
            crate::simulate::DEFAULT_COVARIATES
                .iter()
                .position(|&d| d == name)
                .map(|k| default_truth[k + 1])
        };
        setup.truth = std::iter::once("intercept".to_string())
            .chain(covariates.iter().cloned())
            .map(|name| {
                truth
                    .get(&name)
                    .copied()
                    .or_else(|| default_for(&name))
                    .ok_or_else(|| Error::BadConfig(format!("no true value for `{name}`")))
            })
            .collect::<Result<_>>()?;
        if let Some(sim) = &self.simulate {
            setup.n = sim.n.unwrap_or(setup.n);
            setup.tau = sim.tau.unwrap_or(setup.tau);
            setup.phi = sim.phi.unwrap_or(setup.phi);
            setup.alpha = sim.alpha.unwrap_or(setup.alpha);
            setup.horizon = sim.horizon;
        }
        Ok(setup)
    }
}
