//! Rows sharing a region and covariate vector share a linear predictor, so
//! the likelihood only needs per-cell sufficient statistics. With indicator
//! covariates this shrinks hundreds of thousands of rows to a few thousand
//! cells without changing any likelihood value.

use std::collections::HashMap;

use crate::domain::{Dataset, Outcome};
use crate::likelihood::{self, LikTerms};

#[derive(Debug, Clone)]
pub enum CellData {
    Binary {
        trials: Vec<f64>,
        successes: Vec<f64>,
    },
    Survival {
        events: Vec<f64>,
        sum_event_log_t: Vec<f64>,
        /// Rows of cell `c` are `offsets[c]..offsets[c + 1]` in `log_t`/`event`.
        offsets: Vec<usize>,
        log_t: Vec<f64>,
        event: Vec<u8>,
    },
}

/// Pointwise likelihood unit: `count` individuals with identical contributions.
#[derive(Debug, Clone, Copy)]
pub struct Unit {
    pub cell: usize,
    pub count: f64,
    pub y: u8,
    pub log_t: f64,
}

#[derive(Debug, Clone)]
pub struct Design {
    /// Fixed effects including the intercept.
    pub p: usize,
    pub n_regions: usize,
    pub n_obs: usize,
    /// `cells x p` row-major, first column all ones.
    pub x: Vec<f64>,
    pub region: Vec<usize>,
    pub data: CellData,
}

impl Design {
    pub fn new(data: &Dataset) -> Self {
        let q = data.n_covariates();
        let p = q + 1;
        let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        let mut x = Vec::new();
        let mut region = Vec::new();
        let mut cell_of = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let row = data.covariate_row(i);
            let key = (data.region[i], row.iter().map(|v| v.to_bits()).collect());
            let next = region.len();
            let c = *index.entry(key).or_insert_with(|| {
                x.push(1.0);
                x.extend_from_slice(row);
                region.push(data.region[i]);
                next
            });
            cell_of.push(c);
        }
        let cells = region.len();
        let cell_data = match &data.outcome {
            Outcome::Binary(y) => {
                let mut trials = vec![0.0; cells];
                let mut successes = vec![0.0; cells];
                for (i, &c) in cell_of.iter().enumerate() {
                    trials[c] += 1.0;
                    successes[c] += f64::from(y[i]);
                }
                CellData::Binary { trials, successes }
            }
            Outcome::Survival { time, event } => {
                let mut counts = vec![0usize; cells + 1];
                for &c in &cell_of {
                    counts[c + 1] += 1;
                }
                for c in 0..cells {
                    counts[c + 1] += counts[c];
                }
                let offsets = counts.clone();
                let mut next = counts;
                let mut log_t = vec![0.0; data.len()];
                let mut ev = vec![0u8; data.len()];
                for (i, &c) in cell_of.iter().enumerate() {
                    let slot = next[c];
                    next[c] += 1;
                    log_t[slot] = time[i].ln();
                    ev[slot] = event[i];
                }
                let mut events = vec![0.0; cells];
                let mut sum_event_log_t = vec![0.0; cells];
                for c in 0..cells {
                    for k in offsets[c]..offsets[c + 1] {
                        if ev[k] == 1 {
                            events[c] += 1.0;
                            sum_event_log_t[c] += log_t[k];
                        }
                    }
                }
                CellData::Survival {
                    events,
                    sum_event_log_t,
                    offsets,
                    log_t,
                    event: ev,
                }
            }
        };
        Self {
            p,
            n_regions: data.n_regions(),
            n_obs: data.len(),
            x,
            region,
            data: cell_data,
        }
    }

    pub fn cells(&self) -> usize {
        self.region.len()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.x[c * self.p..(c + 1) * self.p]
    }

    /// Linear predictor per cell. `gamma` is empty for models without
    /// regional effects.
    pub fn eta(&self, beta: &[f64], gamma: &[f64]) -> Vec<f64> {
        (0..self.cells())
            .map(|c| {
                let fixed: f64 = self.row(c).iter().zip(beta).map(|(a, b)| a * b).sum();
                if gamma.is_empty() {
                    fixed
                } else {
                    fixed + gamma[self.region[c]]
                }
            })
            .collect()
    }

    /// `sum t^alpha` per cell; empty for binary data.
    pub fn sum_t_alpha(&self, alpha: f64) -> Vec<f64> {
        match &self.data {
            CellData::Binary { .. } => Vec::new(),
            CellData::Survival { offsets, log_t, .. } => (0..self.cells())
                .map(|c| {
                    log_t[offsets[c]..offsets[c + 1]]
                        .iter()
                        .map(|lt| (alpha * lt).exp())
                        .sum()
                })
                .collect(),
        }
    }

    /// Cell log-likelihood terms. `sta` comes from [`Design::sum_t_alpha`].
    #[inline]
    pub fn cell_terms(&self, c: usize, eta: f64, alpha: f64, sta: &[f64]) -> LikTerms {
        match &self.data {
            CellData::Binary { trials, successes } => {
                likelihood::binomial_logit_terms(eta, trials[c], successes[c])
            }
            CellData::Survival {
                events,
                sum_event_log_t,
                ..
            } => likelihood::weibull_cell_terms(eta, alpha, events[c], sum_event_log_t[c], sta[c]),
        }
    }

    pub fn log_likelihood(&self, eta: &[f64], alpha: f64, sta: &[f64]) -> f64 {
        (0..self.cells())
            .map(|c| self.cell_terms(c, eta[c], alpha, sta).ll)
            .sum()
    }

    /// Pointwise units for predictive scores.
    pub fn units(&self) -> Vec<Unit> {
        let mut units = Vec::new();
        match &self.data {
            CellData::Binary { trials, successes } => {
                for c in 0..self.cells() {
                    if successes[c] > 0.0 {
                        units.push(Unit {
                            cell: c,
                            count: successes[c],
                            y: 1,
                            log_t: 0.0,
                        });
                    }
                    if trials[c] > successes[c] {
                        units.push(Unit {
                            cell: c,
                            count: trials[c] - successes[c],
                            y: 0,
                            log_t: 0.0,
                        });
                    }
                }
            }
            CellData::Survival {
                offsets,
                log_t,
                event,
                ..
            } => {
                for c in 0..self.cells() {
                    for k in offsets[c]..offsets[c + 1] {
                        units.push(Unit {
                            cell: c,
                            count: 1.0,
                            y: event[k],
                            log_t: log_t[k],
                        });
                    }
                }
            }
        }
        units
    }

    /// Log-likelihood of one individual in `unit` at linear predictor `eta`.
    #[inline]
    pub fn unit_ll(&self, unit: &Unit, eta: f64, alpha: f64) -> f64 {
        match self.data {
            CellData::Binary { .. } => likelihood::bernoulli_logit_terms(eta, unit.y).ll,
            CellData::Survival { .. } => {
                let cum = (eta + alpha * unit.log_t).exp();
                f64::from(unit.y) * (eta + alpha.ln() + (alpha - 1.0) * unit.log_t) - cum
            }
        }
    }
}
