//! Data model shared by the engine: datasets, model specifications,
//! hyperparameter points and posterior marginals.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::likelihood;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Logit,
    Weibull,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Logit => "logit",
            Family::Weibull => "weibull",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(Family::Logit),
            "weibull" => Ok(Family::Weibull),
            other => Err(Error::BadConfig(format!("unknown family `{other}`"))),
        }
    }
}

/// Regional random effect. `Icar` is the intrinsic limit of `Leroux` at
/// `phi = 1` and carries a sum-to-zero constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    None,
    Iid,
    Leroux,
    Icar,
}

impl Effect {
    pub fn name(self) -> &'static str {
        match self {
            Effect::None => "none",
            Effect::Iid => "iid",
            Effect::Leroux => "leroux",
            Effect::Icar => "icar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Effect::None),
            "iid" => Ok(Effect::Iid),
            "leroux" => Ok(Effect::Leroux),
            "icar" => Ok(Effect::Icar),
            other => Err(Error::BadConfig(format!("unknown effect `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    pub beta_precision: f64,
    pub intercept_precision: f64,
    /// Improper uniform prior on `tau` over `(0, inf)`; when false the
    /// prior is uniform on `log tau` instead.
    pub tau_uniform: bool,
    pub logit_phi_mean: f64,
    pub logit_phi_precision: f64,
    pub pc_alpha_rate: f64,
}

impl Default for PriorSet {
    fn default() -> Self {
        Self {
            beta_precision: 0.001,
            intercept_precision: 0.0,
            tau_uniform: true,
            logit_phi_mean: 0.0,
            logit_phi_precision: 0.1,
            pc_alpha_rate: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub step: f64,
    pub drop: f64,
    pub max_points: usize,
    pub log_tau_bounds: (f64, f64),
    pub logit_phi_bounds: (f64, f64),
    pub alpha_prime_bounds: (f64, f64),
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            step: 0.75,
            drop: 6.0,
            max_points: 2000,
            log_tau_bounds: (-10.0, 15.0),
            logit_phi_bounds: (-12.0, 12.0),
            alpha_prime_bounds: (-30.0, 30.0),
        }
    }
}

/// Hyperparameters pinned to a natural-scale value instead of being integrated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedHypers {
    pub tau: Option<f64>,
    pub phi: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HyperKind {
    LogTau,
    LogitPhi,
    AlphaPrime,
}

impl HyperKind {
    /// Natural-scale name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            HyperKind::LogTau => "tau",
            HyperKind::LogitPhi => "phi",
            HyperKind::AlphaPrime => "alpha",
        }
    }

    pub fn internal_name(self) -> &'static str {
        match self {
            HyperKind::LogTau => "log_tau",
            HyperKind::LogitPhi => "logit_phi",
            HyperKind::AlphaPrime => "alpha_prime",
        }
    }

    pub fn to_natural(self, theta: f64) -> f64 {
        match self {
            HyperKind::LogTau => theta.exp(),
            HyperKind::LogitPhi => likelihood::logistic(theta),
            HyperKind::AlphaPrime => likelihood::alpha_from_internal(theta),
        }
    }

    pub fn to_internal(self, value: f64) -> f64 {
        match self {
            HyperKind::LogTau => value.ln(),
            HyperKind::LogitPhi => likelihood::logit(value),
            HyperKind::AlphaPrime => likelihood::alpha_to_internal(value),
        }
    }

    /// `d(natural) / d(internal)` at `theta`.
    pub fn jacobian(self, theta: f64) -> f64 {
        match self {
            HyperKind::LogTau => theta.exp(),
            HyperKind::LogitPhi => {
                let p = likelihood::logistic(theta);
                p * (1.0 - p)
            }
            HyperKind::AlphaPrime => likelihood::ALPHA_SCALE * likelihood::alpha_from_internal(theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub covariates: Vec<String>,
    pub effect: Effect,
    pub priors: PriorSet,
    pub grid: GridSettings,
    pub fixed: FixedHypers,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, covariates: Vec<String>, effect: Effect) -> Self {
        Self {
            family,
            covariates,
            effect,
            priors: PriorSet::default(),
            grid: GridSettings::default(),
            fixed: FixedHypers::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in &self.covariates {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate covariate `{name}`")));
            }
            if name == "intercept" {
                return Err(Error::InvalidSpec(
                    "the intercept is implicit and must not be listed".into(),
                ));
            }
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::InvalidSpec(format!(
                    "covariate name `{name}` must match [A-Za-z0-9_]+"
                )));
            }
        }
        let g = &self.grid;
        if !(g.step > 0.0) {
            return Err(Error::InvalidSpec(format!("grid step must be > 0, got {}", g.step)));
        }
        if !(g.drop > 0.0) {
            return Err(Error::InvalidSpec(format!("grid drop must be > 0, got {}", g.drop)));
        }
        let p = &self.priors;
        if p.beta_precision < 0.0 || p.intercept_precision < 0.0 || p.logit_phi_precision < 0.0 {
            return Err(Error::InvalidSpec("prior precisions must be >= 0".into()));
        }
        if !(p.pc_alpha_rate > 0.0) {
            return Err(Error::InvalidSpec("pc_alpha_rate must be > 0".into()));
        }
        if let Some(phi) = self.fixed.phi {
            if !(0.0..=1.0).contains(&phi) {
                return Err(Error::PhiOutOfRange(phi));
            }
        }
        if let Some(tau) = self.fixed.tau {
            if !(tau > 0.0) {
                return Err(Error::InvalidSpec(format!("fixed tau must be > 0, got {tau}")));
            }
        }
        if let Some(alpha) = self.fixed.alpha {
            if !(alpha > 0.0) {
                return Err(Error::NonPositiveShape(alpha));
            }
        }
        Ok(())
    }

    pub fn has_effect(&self) -> bool {
        self.effect != Effect::None
    }

    /// Natural-scale `phi` when it is not a free hyperparameter.
    pub fn pinned_phi(&self) -> Option<f64> {
        match self.effect {
            Effect::None => None,
            Effect::Iid => Some(0.0),
            Effect::Icar => Some(1.0),
            Effect::Leroux => self.fixed.phi,
        }
    }

    /// Free hyperparameters, in internal-scale order.
    pub fn hyper_kinds(&self) -> Vec<HyperKind> {
        let mut kinds = Vec::new();
        if self.has_effect() && self.fixed.tau.is_none() {
            kinds.push(HyperKind::LogTau);
        }
        if self.effect == Effect::Leroux && self.fixed.phi.is_none() {
            kinds.push(HyperKind::LogitPhi);
        }
        if self.family == Family::Weibull && self.fixed.alpha.is_none() {
            kinds.push(HyperKind::AlphaPrime);
        }
        kinds
    }

    pub fn bounds(&self, kind: HyperKind) -> (f64, f64) {
        match kind {
            HyperKind::LogTau => self.grid.log_tau_bounds,
            HyperKind::LogitPhi => self.grid.logit_phi_bounds,
            HyperKind::AlphaPrime => self.grid.alpha_prime_bounds,
        }
    }

    /// Fixed-effect names with the implicit intercept first.
    pub fn fixed_names(&self) -> Vec<String> {
        std::iter::once("intercept".to_string())
            .chain(self.covariates.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Binary(Vec<u8>),
    Survival { time: Vec<f64>, event: Vec<u8> },
}

impl Outcome {
    pub fn len(&self) -> usize {
        match self {
            Outcome::Binary(y) => y.len(),
            Outcome::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Validated individual-level data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub outcome: Outcome,
    pub covariate_names: Vec<String>,
    /// `n x q` row-major, without the intercept column.
    pub covariates: Vec<f64>,
    pub region: Vec<usize>,
    pub region_ids: Vec<String>,
    /// Survival times were divided by this factor so that `max(time) = 1`.
    pub time_scale: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let q = self.n_covariates();
        &self.covariates[i * q..(i + 1) * q]
    }

    pub fn family(&self) -> Family {
        match self.outcome {
            Outcome::Binary(_) => Family::Logit,
            Outcome::Survival { .. } => Family::Weibull,
        }
    }

    /// Tabular form accepted by [`validate_dataset`].
    pub fn to_raw(&self) -> RawTable {
        let mut header = vec!["region".to_string()];
        match &self.outcome {
            Outcome::Binary(_) => header.push("y".into()),
            Outcome::Survival { .. } => {
                header.push("time".into());
                header.push("event".into());
            }
        }
        header.extend(self.covariate_names.iter().cloned());
        let rows = (0..self.len())
            .map(|i| {
                let mut row = vec![self.region_ids[self.region[i]].clone()];
                match &self.outcome {
                    Outcome::Binary(y) => row.push(y[i].to_string()),
                    Outcome::Survival { time, event } => {
                        row.push(time[i].to_string());
                        row.push(event[i].to_string());
                    }
                }
                row.extend(self.covariate_row(i).iter().map(|v| v.to_string()));
                row
            })
            .collect();
        RawTable::new(header, rows)
    }
}

/// Unparsed table: header plus string fields, with the source line of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub lines: Vec<usize>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let lines = (0..rows.len()).map(|i| i + 2).collect();
        Self {
            header,
            rows,
            lines,
        }
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

fn field<'a>(raw: &'a RawTable, row: usize, col: usize) -> Result<&'a str> {
    let value = raw.rows[row].get(col).map(|s| s.trim()).unwrap_or("");
    if value.is_empty() || value.eq_ignore_ascii_case("na") || value.eq_ignore_ascii_case("nan") {
        return Err(Error::MissingValue {
            row: raw.lines[row],
            column: raw.header[col].clone(),
        });
    }
    Ok(value)
}

fn number(raw: &RawTable, row: usize, col: usize) -> Result<f64> {
    let s = field(raw, row, col)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::MissingValue {
            row: raw.lines[row],
            column: raw.header[col].clone(),
        }),
    }
}

fn flag(raw: &RawTable, row: usize, col: usize) -> Result<u8> {
    match number(raw, row, col)? {
        v if v == 0.0 => Ok(0),
        v if v == 1.0 => Ok(1),
        _ => Err(Error::MissingValue {
            row: raw.lines[row],
            column: raw.header[col].clone(),
        }),
    }
}

/// Parses and checks raw rows against the model and region graph.
pub fn validate_dataset(raw: &RawTable, spec: &ModelSpec, graph: &RegionGraph) -> Result<Dataset> {
    spec.validate()?;
    if raw.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let region_col = raw.column("region")?;
    let cov_cols: Vec<usize> = spec
        .covariates
        .iter()
        .map(|name| raw.column(name))
        .collect::<Result<_>>()?;
    let n = raw.rows.len();
    let q = cov_cols.len();
    let mut region = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n * q);
    for i in 0..n {
        let id = field(raw, i, region_col)?;
        let j = graph.index_of(id).ok_or_else(|| Error::UnknownRegion {
            row: raw.lines[i],
            region: id.to_string(),
        })?;
        region.push(j);
        for &c in &cov_cols {
            covariates.push(number(raw, i, c)?);
        }
    }
    let (outcome, time_scale) = match spec.family {
        Family::Logit => {
            let c = raw.column("y")?;
            let y = (0..n).map(|i| flag(raw, i, c)).collect::<Result<Vec<_>>>()?;
            (Outcome::Binary(y), 1.0)
        }
        Family::Weibull => {
            let tc = raw.column("time")?;
            let ec = raw.column("event")?;
            let mut time = Vec::with_capacity(n);
            let mut event = Vec::with_capacity(n);
            for i in 0..n {
                let t = number(raw, i, tc)?;
                if !(t > 0.0) {
                    return Err(Error::NonPositiveTime {
                        row: raw.lines[i],
                        value: t,
                    });
                }
                time.push(t);
                event.push(flag(raw, i, ec)?);
            }
            if event.iter().all(|&e| e == 0) {
                return Err(Error::NoEvents);
            }
            let scale = time.iter().copied().fold(0.0, f64::max);
            for t in &mut time {
                *t /= scale;
            }
            (Outcome::Survival { time, event }, scale)
        }
    };
    Ok(Dataset {
        outcome,
        covariate_names: spec.covariates.clone(),
        covariates,
        region,
        region_ids: graph.ids().to_vec(),
        time_scale,
    })
}

/// Point estimate of the latent field: fixed effects then regional effects.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl LatentField {
    pub fn from_vector(x: &[f64], p: usize) -> Self {
        Self {
            beta: x[..p].to_vec(),
            gamma: x[p..].to_vec(),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).copied().collect()
    }
}

/// One hyperparameter configuration in internal scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPoint {
    pub theta: Vec<f64>,
    pub log_post: f64,
    pub weight: f64,
}

/// Normalizes `weight ∝ exp(log_post)` over the points in place.
pub fn normalize_weights(points: &mut [HyperPoint]) {
    let max = points
        .iter()
        .map(|p| p.log_post)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for p in points.iter_mut() {
        p.weight = (p.log_post - max).exp();
        total += p.weight;
    }
    for p in points.iter_mut() {
        p.weight /= total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Univariate posterior marginal tabulated on an ascending support.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub support: Vec<f64>,
    pub density: Vec<f64>,
    pub summary: Summary,
}

impl Marginal {
    pub fn mass(&self) -> f64 {
        trapezoid(&self.support, &self.density)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
