use std::f64::consts::TAU as TWO_PI;
use std::sync::Arc;

use crate::design::{Design, Unit};
use crate::domain::{Dataset, Effect, Family, HyperKind, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::{self, RegionGraph, SparsePrecision};
use crate::likelihood;
use crate::sparse::{LowerPattern, Ordering, SymbolicCholesky};

/// Natural-scale hyperparameters at one configuration. Models without a
/// random effect use `tau = 1` (unused); logit models use `alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperValues {
    pub tau: f64,
    pub phi: f64,
    pub alpha: f64,
}

/// Latent Gaussian model: fixed effects `beta` (intercept first) followed by
/// one regional effect per region. Holds the data in cell form and the
/// symbolic factorization of the posterior precision pattern.
#[derive(Debug)]
pub struct LatentModel {
    pub spec: ModelSpec,
    pub design: Design,
    pub region_ids: Vec<String>,
    pub time_scale: f64,
    kinds: Vec<HyperKind>,
    p: usize,
    j: usize,
    structure: Option<SparsePrecision>,
    eigenvalues: Vec<f64>,
    rank: usize,
    constrained: bool,
    beta_precision: Vec<f64>,
    pattern: LowerPattern,
    symbolic: Arc<SymbolicCholesky>,
    gg_diag: Vec<usize>,
    gg_offdiag: Vec<(usize, usize, f64, usize)>,
    gg_dense: Vec<(usize, usize, usize)>,
    units: Vec<Unit>,
}

impl LatentModel {
    pub fn new(spec: &ModelSpec, data: &Dataset, graph: &RegionGraph) -> Result<Self> {
        spec.validate()?;
        if data.family() != spec.family {
            return Err(Error::InvalidSpec(format!(
                "dataset outcome does not match family `{}`",
                spec.family.name()
            )));
        }
        if data.covariate_names != spec.covariates {
            return Err(Error::InvalidSpec(
                "dataset covariates differ from the model covariates".into(),
            ));
        }
        if data.region_ids != graph.ids() {
            return Err(Error::InvalidSpec(
                "dataset region index differs from the graph".into(),
            ));
        }
        let design = Design::new(data);
        let p = design.p;
        let j = if spec.has_effect() { graph.len() } else { 0 };
        let constrained = spec.pinned_phi() == Some(1.0);
        let uses_graph = matches!(spec.effect, Effect::Leroux | Effect::Icar);
        let structure = uses_graph.then(|| graph::model_icar_structure(graph));
        let (eigenvalues, rank) = match &structure {
            Some(q) => {
                let eig = q.to_dense().symmetric_eigen().eigenvalues;
                let mut values: Vec<f64> = eig.iter().copied().collect();
                values.sort_by(f64::total_cmp);
                let top = values.last().copied().unwrap_or(0.0).max(1.0);
                let rank = values.iter().filter(|&&v| v > 1e-9 * top).count();
                (values, rank)
            }
            None => (Vec::new(), j),
        };
        let mut beta_precision = vec![spec.priors.beta_precision; p];
        beta_precision[0] = spec.priors.intercept_precision;

        // Lower pattern of the posterior precision, original ordering.
        let m = p + j;
        let mut columns: Vec<Vec<usize>> = Vec::with_capacity(m);
        for k in 0..p {
            columns.push((k..m).collect());
        }
        for a in 0..j {
            let mut rows = vec![p + a];
            if constrained {
                rows.extend(p + a + 1..m);
            } else if let Some(q) = &structure {
                rows.extend(
                    graph
                        .neighbors(a)
                        .iter()
                        .filter(|&&l| l > a && q.get(l, a) != 0.0)
                        .map(|&l| p + l),
                );
            }
            columns.push(rows);
        }
        let pattern = LowerPattern::from_columns(columns);
        let symbolic = Arc::new(SymbolicCholesky::analyze(&pattern, Ordering::MinimumDegree));
        let gg_diag = (0..j)
            .map(|a| pattern.position(p + a, p + a).expect("diagonal"))
            .collect();
        let mut gg_offdiag = Vec::new();
        if let Some(q) = &structure {
            for (r, c, v) in q.lower_entries() {
                if r != c && j > 0 {
                    let pos = pattern.position(p + r, p + c).expect("edge in pattern");
                    gg_offdiag.push((r, c, v, pos));
                }
            }
        }
        let mut gg_dense = Vec::new();
        if constrained {
            for c in 0..j {
                for r in c..j {
                    gg_dense.push((r, c, pattern.position(p + r, p + c).expect("dense")));
                }
            }
        }
        log::debug!(
            "latent model: {} cells, {} latent, factor nnz {}",
            design.cells(),
            m,
            symbolic.factor_nnz()
        );
        let units = design.units();
        Ok(Self {
            spec: spec.clone(),
            design,
            region_ids: data.region_ids.clone(),
            time_scale: data.time_scale,
            kinds: spec.hyper_kinds(),
            p,
            j,
            structure,
            eigenvalues,
            rank,
            constrained,
            beta_precision,
            pattern,
            symbolic,
            gg_diag,
            gg_offdiag,
            gg_dense,
            units,
        })
    }

    pub fn kinds(&self) -> &[HyperKind] {
        &self.kinds
    }

    pub fn n_fixed(&self) -> usize {
        self.p
    }

    pub fn n_random(&self) -> usize {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.p + self.j
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    /// Sum-to-zero row over the regional effects.
    pub fn constraint_row(&self) -> Option<Vec<f64>> {
        self.constrained.then(|| {
            let mut c = vec![0.0; self.dim()];
            c[self.p..].iter_mut().for_each(|v| *v = 1.0);
            c
        })
    }

    pub fn hyper_values(&self, theta: &[f64]) -> HyperValues {
        let fixed = &self.spec.fixed;
        let mut hv = HyperValues {
            tau: fixed.tau.unwrap_or(1.0),
            phi: self.spec.pinned_phi().unwrap_or(0.0),
            alpha: match self.spec.family {
                Family::Logit => 1.0,
                Family::Weibull => fixed.alpha.unwrap_or(1.0),
            },
        };
        for (kind, &t) in self.kinds.iter().zip(theta) {
            match kind {
                HyperKind::LogTau => hv.tau = t.exp(),
                HyperKind::LogitPhi => hv.phi = likelihood::logistic(t),
                HyperKind::AlphaPrime => hv.alpha = likelihood::alpha_from_internal(t),
            }
        }
        hv
    }

    pub fn in_bounds(&self, theta: &[f64]) -> bool {
        self.kinds.iter().zip(theta).all(|(&k, &t)| {
            let (lo, hi) = self.spec.bounds(k);
            t >= lo && t <= hi
        })
    }

    /// Log prior of the free hyperparameters in internal scale.
    pub fn log_prior_hyper(&self, theta: &[f64]) -> Result<f64> {
        let pri = &self.spec.priors;
        let mut acc = 0.0;
        for (kind, &t) in self.kinds.iter().zip(theta) {
            acc += match kind {
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
                HyperKind::AlphaPrime => likelihood::pc_prior_alpha_logdensity(t, pri.pc_alpha_rate)?,
            };
        }
        Ok(acc)
    }

    /// `gamma' R(phi) gamma` for the structure `(1 - phi) I + phi Q`.
    fn gamma_quad(&self, gamma: &[f64], phi: f64) -> f64 {
        let ss: f64 = gamma.iter().map(|g| g * g).sum();
        match &self.structure {
            Some(q) if phi > 0.0 => (1.0 - phi) * ss + phi * q.quad_form(gamma),
            _ => ss,
        }
    }

    /// `log det R(phi)` (pseudo-determinant at `phi = 1`) and the rank.
    fn structure_log_det(&self, phi: f64) -> (f64, usize) {
        if self.structure.is_none() || phi == 0.0 {
            return (0.0, self.j);
        }
        if phi == 1.0 {
            let top = self.eigenvalues.last().copied().unwrap_or(1.0).max(1.0);
            let ld = self
                .eigenvalues
                .iter()
                .filter(|&&v| v > 1e-9 * top)
                .map(|v| v.ln())
                .sum();
            return (ld, self.rank);
        }
        let ld = self
            .eigenvalues
            .iter()
            .map(|&v| (1.0 - phi + phi * v.max(0.0)).ln())
            .sum();
        (ld, self.j)
    }

    /// Full log density of the latent Gaussian prior at `x`.
    pub fn log_prior_latent(&self, x: &[f64], hv: &HyperValues) -> f64 {
        let mut acc = 0.0;
        for (k, &prec) in self.beta_precision.iter().enumerate() {
            acc += likelihood::gaussian_logdensity(x[k], 0.0, prec);
        }
        if self.j > 0 {
            let gamma = &x[self.p..];
            let (ld, rank) = self.structure_log_det(hv.phi);
            acc += 0.5 * (rank as f64 * hv.tau.ln() + ld)
                - 0.5 * rank as f64 * TWO_PI.ln()
                - 0.5 * hv.tau * self.gamma_quad(gamma, hv.phi);
        }
        acc
    }

    /// `x' P x` for the prior precision `P`.
    pub fn prior_quad(&self, x: &[f64], hv: &HyperValues) -> f64 {
        let mut acc: f64 = self
            .beta_precision
            .iter()
            .zip(x)
            .map(|(prec, b)| prec * b * b)
            .sum();
        if self.j > 0 {
            acc += hv.tau * self.gamma_quad(&x[self.p..], hv.phi);
        }
        acc
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.p)
    }

    pub fn log_likelihood(&self, x: &[f64], alpha: f64, sta: &[f64]) -> f64 {
        let (beta, gamma) = self.split(x);
        let eta = self.design.eta(beta, gamma);
        self.design.log_likelihood(&eta, alpha, sta)
    }

    /// Newton objective `log L(x) - x' P x / 2`.
    pub fn objective(&self, x: &[f64], hv: &HyperValues, sta: &[f64]) -> f64 {
        self.log_likelihood(x, hv.alpha, sta) - 0.5 * self.prior_quad(x, hv)
    }

    /// Gradient of the objective and values of the posterior precision
    /// (plus `C'C` under the sum-to-zero constraint) in pattern order.
    pub fn assemble(&self, x: &[f64], hv: &HyperValues, sta: &[f64]) -> Assembly {
        let p = self.p;
        let m = self.dim();
        let (beta, gamma) = self.split(x);
        let eta = self.design.eta(beta, gamma);
        let mut grad = vec![0.0; m];
        let mut bb = vec![0.0; p * p];
        let mut gb = vec![0.0; self.j * p];
        let mut gdiag = vec![0.0; self.j];
        let mut ll = 0.0;
        for c in 0..self.design.cells() {
            let t = self.design.cell_terms(c, eta[c], hv.alpha, sta);
            ll += t.ll;
            let w = -t.d2;
            let row = self.design.row(c);
            for a in 0..p {
                grad[a] += t.d1 * row[a];
                let wa = w * row[a];
                if wa != 0.0 {
                    for b in 0..=a {
                        bb[a * p + b] += wa * row[b];
                    }
                }
            }
            if self.j > 0 {
                let r = self.design.region[c];
                grad[p + r] += t.d1;
                gdiag[r] += w;
                for a in 0..p {
                    gb[r * p + a] += w * row[a];
                }
            }
        }

        // Prior contributions.
        for k in 0..p {
            grad[k] -= self.beta_precision[k] * x[k];
            bb[k * p + k] += self.beta_precision[k];
        }
        let mut values = vec![0.0; self.pattern.nnz()];
        for b in 0..p {
            for a in b..p {
                values[self.pattern.col_range(b).start + (a - b)] = bb[a * p + b];
            }
            for r in 0..self.j {
                values[self.pattern.col_range(b).start + (p - b) + r] = gb[r * p + b];
            }
        }
        if self.j > 0 {
            let tau = hv.tau;
            let phi = hv.phi;
            let prior_g = {
                let mut v: Vec<f64> = gamma.iter().map(|g| (1.0 - phi) * g).collect();
                if let (Some(q), true) = (&self.structure, phi > 0.0) {
                    for (a, qa) in q.mul_vec(gamma).into_iter().enumerate() {
                        v[a] += phi * qa;
                    }
                }
                v
            };
            for a in 0..self.j {
                grad[p + a] -= tau * prior_g[a];
                let q_aa = self.structure.as_ref().map_or(0.0, |q| q.get(a, a));
                values[self.gg_diag[a]] = gdiag[a] + tau * ((1.0 - phi) + phi * q_aa);
            }
            for &(_, _, v, pos) in &self.gg_offdiag {
                values[pos] += tau * phi * v;
            }
            for &(_, _, pos) in &self.gg_dense {
                values[pos] += 1.0;
            }
        }
        Assembly {
            log_lik: ll,
            grad,
            values,
        }
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// Dense copy of the posterior precision at `x` (tests and diagnostics).
    pub fn precision_dense(&self, x: &[f64], hv: &HyperValues, sta: &[f64]) -> nalgebra::DMatrix<f64> {
        let asm = self.assemble(x, hv, sta);
        let m = self.dim();
        let mut h = nalgebra::DMatrix::zeros(m, m);
        for c in 0..m {
            for pos in self.pattern.col_range(c) {
                let r = self.pattern.column(c)[pos - self.pattern.col_range(c).start];
                h[(r, c)] = asm.values[pos];
                h[(c, r)] = asm.values[pos];
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub log_lik: f64,
    pub grad: Vec<f64>,
    pub values: Vec<f64>,
}
