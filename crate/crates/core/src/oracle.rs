//! Reference random-walk Metropolis sampler for small problems.
//!
//! It shares the likelihood kernels and priors with the engine but none of
//! the Newton, Cholesky or grid code, so it serves as an independent check.

use std::cell::Cell;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::Design;
use crate::domain::{Dataset, Family, HyperKind, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::{self, RegionGraph};
use crate::likelihood;

#[derive(Debug, Clone)]
pub struct McmcOptions {
    /// Adaptation iterations, discarded.
    pub burn_in: usize,
    pub thin: usize,
    pub max_obs: usize,
    pub max_regions: usize,
    /// Sample the prior only.
    pub use_likelihood: bool,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            burn_in: 0,
            thin: 1,
            max_obs: 20_000,
            max_regions: 100,
            use_likelihood: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSummary {
    pub mean: f64,
    pub sd: f64,
    pub mcse: f64,
}

/// Stored draws, one row per kept iteration.
#[derive(Debug, Clone)]
pub struct Chain {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    /// `(block, rate)` over the post burn-in iterations.
    pub acceptance_rates: Vec<(String, f64)>,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
}

impl Chain {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[k]).collect()
    }

    pub fn summary(&self, name: &str) -> Option<ChainSummary> {
        self.column_index(name).map(|k| summarize(&self.column(k)))
    }

    pub fn summaries(&self) -> Vec<(String, ChainSummary)> {
        (0..self.names.len())
            .map(|k| (self.names[k].clone(), summarize(&self.column(k))))
            .collect()
    }

    /// Writes the draws as CSV with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut text = self.names.join(",");
        text.push('\n');
        for row in &self.draws {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Mean, sd and batch-means Monte Carlo standard error.
pub fn summarize(x: &[f64]) -> ChainSummary {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let b = (n as f64).sqrt().floor().max(1.0) as usize;
    let a = n / b;
    let mcse = if a >= 2 {
        let means: Vec<f64> = (0..a)
            .map(|k| x[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / a as f64;
        let s2 = b as f64 * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a as f64 - 1.0);
        (s2 / (a * b) as f64).sqrt()
    } else {
        f64::NAN
    };
    ChainSummary {
        mean,
        sd: var.sqrt(),
        mcse,
    }
}

struct State<'a> {
    spec: &'a ModelSpec,
    design: Design,
    j: usize,
    kinds: Vec<HyperKind>,
    beta_prec: Vec<f64>,
    /// Region structure `Q` with isolated regions repaired, dense.
    q: Option<DMatrix<f64>>,
    eig: Vec<f64>,
    cells_of_region: Vec<Vec<usize>>,
    use_lik: bool,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    theta: Vec<f64>,
    eta: Vec<f64>,
    sta: Vec<f64>,
    /// Last two `(alpha', log prior)` pairs; the PC prior costs three
    /// quadratures and most proposals leave `alpha'` unchanged.
    pc_memo: Cell<[(u64, f64); 2]>,
}

impl State<'_> {
    fn hyper(&self, theta: &[f64]) -> (f64, f64, f64) {
        let mut tau = self.spec.fixed.tau.unwrap_or(1.0);
        let mut phi = self.spec.pinned_phi().unwrap_or(0.0);
        let mut alpha = match self.spec.family {
            Family::Logit => 1.0,
            Family::Weibull => self.spec.fixed.alpha.unwrap_or(1.0),
        };
        for (k, &t) in self.kinds.iter().zip(theta) {
            match k {
                HyperKind::LogTau => tau = t.exp(),
                HyperKind::LogitPhi => phi = likelihood::logistic(t),
                HyperKind::AlphaPrime => alpha = likelihood::alpha_from_internal(t),
            }
        }
        (tau, phi, alpha)
    }

    fn r_entry(&self, a: usize, b: usize, phi: f64) -> f64 {
        let id = if a == b { 1.0 - phi } else { 0.0 };
        id + self.q.as_ref().map_or(0.0, |q| phi * q[(a, b)])
    }

    fn cell_ll(&self, c: usize, eta: f64, alpha: f64, sta: &[f64]) -> f64 {
        if !self.use_lik {
            return 0.0;
        }
        self.design.cell_terms(c, eta, alpha, sta).ll
    }

    fn total_ll(&self, alpha: f64, sta: &[f64]) -> f64 {
        (0..self.design.cells())
            .map(|c| self.cell_ll(c, self.eta[c], alpha, sta))
            .sum()
    }

    /// `log π(γ | θ)` up to a constant plus `log π(θ)`.
    fn log_hyper_target(&self, theta: &[f64]) -> Result<f64> {
        let (tau, phi, _) = self.hyper(theta);
        let mut lp = 0.0;
        if self.j > 0 {
            let (ld, rank) = if self.q.is_none() || phi == 0.0 {
                (0.0, self.j)
            } else if phi == 1.0 {
                let top = self.eig.last().copied().unwrap_or(1.0).max(1.0);
                let pos: Vec<f64> = self.eig.iter().copied().filter(|&v| v > 1e-9 * top).collect();
                (pos.iter().map(|v| v.ln()).sum(), pos.len())
            } else {
                (
                    self.eig.iter().map(|&v| (1.0 - phi + phi * v.max(0.0)).ln()).sum(),
                    self.j,
                )
            };
            let g = DVector::from_column_slice(&self.gamma);
            let quad = match &self.q {
                Some(q) if phi > 0.0 => (1.0 - phi) * g.norm_squared() + phi * (g.transpose() * q * &g)[0],
                _ => g.norm_squared(),
            };
            lp += 0.5 * (rank as f64 * tau.ln() + ld) - 0.5 * tau * quad;
        }
        let pri = &self.spec.priors;
        for (k, &t) in self.kinds.iter().zip(theta) {
            lp += match k {
                HyperKind::LogTau => {
                    if pri.tau_uniform {
                        t
                    } else {
                        0.0
                    }
                }
                HyperKind::LogitPhi => {
                    likelihood::gaussian_logdensity(t, pri.logit_phi_mean, pri.logit_phi_precision)
                }
                HyperKind::AlphaPrime => self.pc_log_prior(t)?,
            };
        }
        Ok(lp)
    }

    fn pc_log_prior(&self, t: f64) -> Result<f64> {
        let memo = self.pc_memo.get();
        if let Some(&(_, v)) = memo.iter().find(|(bits, _)| *bits == t.to_bits()) {
            return Ok(v);
        }
        let v = likelihood::pc_prior_alpha_logdensity(t, self.spec.priors.pc_alpha_rate)?;
        self.pc_memo.set([(t.to_bits(), v), memo[0]]);
        Ok(v)
    }

    fn in_bounds(&self, theta: &[f64]) -> bool {
        self.kinds.iter().zip(theta).all(|(&k, &t)| {
            let (lo, hi) = self.spec.bounds(k);
            t >= lo && t <= hi
        })
    }
}

/// Blocked random-walk Metropolis: the fixed effects jointly, the regional
/// effects one site at a time, then each hyperparameter in internal scale.
/// Proposal scales adapt during burn-in and are frozen afterwards.
pub fn mcmc_sample(
    spec: &ModelSpec,
    data: &Dataset,
    graph: &RegionGraph,
    iters: usize,
    seed: u64,
    options: &McmcOptions,
) -> Result<Chain> {
    spec.validate()?;
    if data.len() > options.max_obs {
        return Err(Error::GuardRailExceeded(format!(
            "{} observations exceed the oracle limit {}",
            data.len(),
            options.max_obs
        )));
    }
    if graph.len() > options.max_regions {
        return Err(Error::GuardRailExceeded(format!(
            "{} regions exceed the oracle limit {}",
            graph.len(),
            options.max_regions
        )));
    }
    let design = Design::new(data);
    let p = design.p;
    let j = if spec.has_effect() { graph.len() } else { 0 };
    let uses_graph = matches!(spec.effect, crate::Effect::Leroux | crate::Effect::Icar);
    let q = uses_graph.then(|| graph::model_icar_structure(graph).to_dense());
    let eig = q
        .as_ref()
        .map(|q| {
            let mut v: Vec<f64> = q.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .unwrap_or_default();
    let mut cells_of_region = vec![Vec::new(); j];
    if j > 0 {
        for c in 0..design.cells() {
            cells_of_region[design.region[c]].push(c);
        }
    }
    let kinds = spec.hyper_kinds();
    let mut beta_prec = vec![spec.priors.beta_precision; p];
    beta_prec[0] = spec.priors.intercept_precision;
    let theta: Vec<f64> = kinds
        .iter()
        .map(|&k| {
            let (lo, hi) = spec.bounds(k);
            let start: f64 = match k {
                HyperKind::LogTau => 1.0,
                _ => 0.0,
            };
            start.clamp(lo, hi)
        })
        .collect();
    let mut st = State {
        spec,
        j,
        kinds,
        beta_prec,
        q,
        eig,
        cells_of_region,
        use_lik: options.use_likelihood,
        beta: vec![0.0; p],
        gamma: vec![0.0; j],
        theta,
        eta: vec![0.0; design.cells()],
        sta: Vec::new(),
        pc_memo: Cell::new([(f64::NAN.to_bits(), 0.0); 2]),
        design,
    };
    let (_, _, alpha0) = st.hyper(&st.theta);
    st.sta = st.design.sum_t_alpha(alpha0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed_names = spec.fixed_names();
    let mut names = fixed_names.clone();
    names.extend(graph.ids().iter().take(j).map(|id| format!("gamma_{id}")));
    names.extend(st.kinds.iter().map(|k| k.name().to_string()));

    // Fixed-effect proposal from the information at the start.
    let mut info = DMatrix::<f64>::zeros(p, p);
    for c in 0..st.design.cells() {
        let w = if st.use_lik {
            -st.design.cell_terms(c, 0.0, alpha0, &st.sta).d2
        } else {
            0.0
        };
        let row = st.design.row(c);
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for k in 0..p {
        info[(k, k)] += st.beta_prec[k].max(1e-2);
    }
    let mut beta_cov = info
        .try_inverse()
        .ok_or_else(|| Error::DegenerateProposal("fixed-effect information is singular".into()))?;
    let mut beta_chol = proposal_factor(&beta_cov)?;
    let mut beta_scale = 2.38 / (p as f64).sqrt();
    let mut gamma_scale = vec![0.5; j];
    let mut hyper_scale = vec![0.5; st.kinds.len()];

    let mut beta_hist: Vec<Vec<f64>> = Vec::new();
    let mut accepted = [0usize; 3];
    let mut tried = [0usize; 3];
    let mut draws = Vec::new();
    let total = options.burn_in + iters;
    for it in 0..total {
        let adapting = it < options.burn_in;
        let rate = 1.0 / ((it + 1) as f64).powf(0.6);
        if it == options.burn_in {
            accepted = [0; 3];
            tried = [0; 3];
        }
        let (tau, phi, alpha) = st.hyper(&st.theta);

        // Block 1: fixed effects.
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let step = &beta_chol * DVector::from_vec(z) * beta_scale;
        let prop: Vec<f64> = st.beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        let eta_prop: Vec<f64> = (0..st.design.cells())
            .map(|c| {
                st.eta[c]
                    + st.design
                        .row(c)
                        .iter()
                        .zip(step.iter())
                        .map(|(x, s)| x * s)
                        .sum::<f64>()
            })
            .collect();
        let mut delta = 0.0;
        for c in 0..st.design.cells() {
            delta += st.cell_ll(c, eta_prop[c], alpha, &st.sta) - st.cell_ll(c, st.eta[c], alpha, &st.sta);
        }
        for k in 0..p {
            delta += likelihood::gaussian_logdensity(prop[k], 0.0, st.beta_prec[k])
                - likelihood::gaussian_logdensity(st.beta[k], 0.0, st.beta_prec[k]);
        }
        let ok = accept(&mut rng, delta);
        tried[0] += 1;
        if ok {
            accepted[0] += 1;
            st.beta = prop;
            st.eta = eta_prop;
        }
        if adapting {
            beta_scale *= (rate * (f64::from(u8::from(ok)) - 0.234)).exp();
            beta_hist.push(st.beta.clone());
            if beta_hist.len() >= 200 && beta_hist.len().is_power_of_two() {
                beta_cov = empirical_cov(&beta_hist[beta_hist.len() / 2..], p);
                if let Ok(f) = proposal_factor(&beta_cov) {
                    beta_chol = f;
                    beta_scale = 2.38 / (p as f64).sqrt();
                }
            }
        }

        // Block 2: regional effects, single site.
        for a in 0..j {
            let g_old = st.gamma[a];
            let g_new = g_old + gamma_scale[a] * rng.sample::<f64, _>(StandardNormal);
            let d = g_new - g_old;
            let mut delta = 0.0;
            for &c in &st.cells_of_region[a] {
                delta += st.cell_ll(c, st.eta[c] + d, alpha, &st.sta) - st.cell_ll(c, st.eta[c], alpha, &st.sta);
            }
            let r_aa = st.r_entry(a, a, phi);
            let mut cross = 0.0;
            if let Some(q) = &st.q {
                if phi > 0.0 {
                    for &l in graph.neighbors(a) {
                        cross += phi * q[(a, l)] * st.gamma[l];
                    }
                }
            }
            delta -= 0.5 * tau * (r_aa * (g_new * g_new - g_old * g_old) + 2.0 * d * cross);
            let ok = accept(&mut rng, delta);
            tried[1] += 1;
            if ok {
                accepted[1] += 1;
                st.gamma[a] = g_new;
                for &c in &st.cells_of_region[a] {
                    st.eta[c] += d;
                }
            }
            if adapting {
                gamma_scale[a] *= (rate * (f64::from(u8::from(ok)) - 0.44)).exp();
            }
        }
        if st.spec.pinned_phi() == Some(1.0) && j > 0 {
            // Recentre; the shift moves into the flat intercept so the
            // linear predictor is unchanged.
            let mean = st.gamma.iter().sum::<f64>() / j as f64;
            st.gamma.iter_mut().for_each(|g| *g -= mean);
            st.beta[0] += mean;
        }

        // Block 3: hyperparameters, one coordinate at a time.
        let mut current = st.log_hyper_target(&st.theta)?;
        let mut current_ll = if st.spec.family == Family::Weibull && st.spec.fixed.alpha.is_none() {
            st.total_ll(alpha, &st.sta)
        } else {
            0.0
        };
        for l in 0..st.kinds.len() {
            let mut prop = st.theta.clone();
            prop[l] += hyper_scale[l] * rng.sample::<f64, _>(StandardNormal);
            let ok = if st.in_bounds(&prop) {
                let target = st.log_hyper_target(&prop)?;
                if st.kinds[l] == HyperKind::AlphaPrime {
                    let (_, _, a_new) = st.hyper(&prop);
                    let sta_new = st.design.sum_t_alpha(a_new);
                    let ll_new = st.total_ll(a_new, &sta_new);
                    let ok = accept(&mut rng, target + ll_new - current - current_ll);
                    if ok {
                        st.sta = sta_new;
                        current_ll = ll_new;
                    }
                    ok
                } else {
                    accept(&mut rng, target - current)
                }
            } else {
                false
            };
            tried[2] += 1;
            if ok {
                accepted[2] += 1;
                st.theta = prop;
                current = st.log_hyper_target(&st.theta)?;
            }
            if adapting {
                hyper_scale[l] *= (rate * (f64::from(u8::from(ok)) - 0.44)).exp();
            }
        }

        if !adapting && (it - options.burn_in) % options.thin.max(1) == 0 {
            let (tau, phi, alpha) = st.hyper(&st.theta);
            let mut row = st.beta.clone();
            row.extend_from_slice(&st.gamma);
            for k in &st.kinds {
                row.push(match k {
                    HyperKind::LogTau => tau,
                    HyperKind::LogitPhi => phi,
                    HyperKind::AlphaPrime => alpha,
                });
            }
            draws.push(row);
        }
    }
    let rate = |k: usize| {
        if tried[k] == 0 {
            f64::NAN
        } else {
            accepted[k] as f64 / tried[k] as f64
        }
    };
    let mut acceptance_rates = vec![("beta".to_string(), rate(0))];
    if j > 0 {
        acceptance_rates.push(("gamma".to_string(), rate(1)));
    }
    if !st.kinds.is_empty() {
        acceptance_rates.push(("hyper".to_string(), rate(2)));
    }
    Ok(Chain {
        names,
        draws,
        acceptance_rates,
        seed,
        burn_in: options.burn_in,
        thin: options.thin.max(1),
    })
}

fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
    let u: f64 = rng.random();
    log_ratio.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio)
}

fn proposal_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let mut c = cov.clone();
    let jitter = 1e-10 * (0..n).map(|k| c[(k, k)].abs()).fold(0.0, f64::max).max(1e-12);
    for k in 0..n {
        c[(k, k)] += jitter;
    }
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateProposal("non-finite proposal covariance".into()));
    }
    c.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::DegenerateProposal("proposal covariance is not positive definite".into()))
}

fn empirical_cov(rows: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for r in rows {
        for k in 0..p {
            mean[k] += r[k] / n;
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    for r in rows {
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    cov
}
