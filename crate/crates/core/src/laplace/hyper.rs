use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::mode::{gmrf_mode, GaussianApprox};
use super::model::LatentModel;
use crate::domain::{normalize_weights, HyperPoint};
use crate::error::{Error, Result};

const MODE_START_STEP: f64 = 1.0;
const MODE_MIN_STEP: f64 = 1e-3;
const MODE_MAX_EVALS: usize = 4000;
const CURVATURE_STEP: f64 = 0.05;
const MAX_AXIS_STEPS: i64 = 200;
const MAX_SCALE: f64 = 2.0;

/// Log posterior of `theta` together with the Gaussian approximation it was
/// computed from.
pub fn hyper_posterior_point(
    model: &LatentModel,
    theta: &[f64],
    start: Option<&[f64]>,
) -> Result<(f64, GaussianApprox)> {
    let ga = gmrf_mode(model, theta, start)?;
    let lp = ga.log_lik + model.log_prior_latent(&ga.mode, &ga.hyper) + model.log_prior_hyper(theta)?
        - ga.log_density_at_mode();
    Ok((lp, ga))
}

/// Unnormalized `log π(θ | D)` at internal-scale `theta`.
pub fn log_hyper_posterior(model: &LatentModel, theta: &[f64]) -> Result<f64> {
    hyper_posterior_point(model, theta, None).map(|(lp, _)| lp)
}

/// Integration grid over the hyperparameters with the Gaussian
/// approximation at every retained point.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub points: Vec<HyperPoint>,
    pub approximations: Vec<GaussianApprox>,
    /// Posterior mode in internal scale.
    pub mode: Vec<f64>,
    /// Approximate posterior sd of each internal coordinate.
    pub scales: Vec<f64>,
    /// Grid step in standardized units.
    pub step: f64,
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct Search<'a> {
    model: &'a LatentModel,
    start: Vec<f64>,
    evals: usize,
}

impl Search<'_> {
    fn eval(&mut self, theta: &[f64]) -> f64 {
        self.evals += 1;
        match hyper_posterior_point(self.model, theta, Some(&self.start)) {
            Ok((lp, _)) if lp.is_finite() => lp,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::debug!("hyper evaluation failed at {theta:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }
}

fn clamp_to(model: &LatentModel, l: usize, v: f64) -> f64 {
    let (lo, hi) = model.spec.bounds(model.kinds()[l]);
    v.clamp(lo, hi)
}

fn find_mode(model: &LatentModel) -> Result<(Vec<f64>, f64, GaussianApprox)> {
    let d = model.kinds().len();
    let mut theta: Vec<f64> = (0..d).map(|l| clamp_to(model, l, 0.0)).collect();
    let (mut best, ga) = hyper_posterior_point(model, &theta, None)
        .map_err(|e| Error::ModeSearchFailure(format!("initial point {theta:?}: {e}")))?;
    if !best.is_finite() {
        return Err(Error::ModeSearchFailure("non-finite log posterior at the start".into()));
    }
    let mut search = Search {
        model,
        start: ga.mode.clone(),
        evals: 1,
    };
    let mut step = MODE_START_STEP;
    while step >= MODE_MIN_STEP {
        let mut improved = false;
        for l in 0..d {
            for dir in [1.0, -1.0] {
                let mut moved = false;
                loop {
                    let mut cand = theta.clone();
                    cand[l] = clamp_to(model, l, theta[l] + dir * step);
                    if cand[l] == theta[l] {
                        break;
                    }
                    let f = search.eval(&cand);
                    if f > best {
                        best = f;
                        theta = cand;
                        moved = true;
                    } else {
                        break;
                    }
                    if search.evals > MODE_MAX_EVALS {
                        return Err(Error::ModeSearchFailure(format!(
                            "no convergence after {MODE_MAX_EVALS} evaluations"
                        )));
                    }
                }
                if moved {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let (lp, ga) = hyper_posterior_point(model, &theta, Some(&search.start))
        .map_err(|e| Error::ModeSearchFailure(format!("mode {theta:?}: {e}")))?;
    log::info!("hyper mode {theta:?}, log posterior {lp}, {} evaluations", search.evals);
    Ok((theta, lp, ga))
}

/// Negative Hessian of the log posterior by finite differences, one-sided
/// along coordinates that sit against a bound.
fn curvature(model: &LatentModel, theta: &[f64], f0: f64, start: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let h = CURVATURE_STEP;
    let mut search = Search {
        model,
        start: start.to_vec(),
        evals: 0,
    };
    let mut at = |offsets: &[(usize, f64)]| {
        let mut t = theta.to_vec();
        for &(l, s) in offsets {
            t[l] += s;
        }
        search.eval(&t)
    };
    let mut interior = vec![true; d];
    let mut side = vec![1.0; d];
    for l in 0..d {
        let (lo, hi) = model.spec.bounds(model.kinds()[l]);
        if theta[l] + 2.0 * h > hi {
            interior[l] = false;
            side[l] = -1.0;
        } else if theta[l] - 2.0 * h < lo {
            interior[l] = false;
        }
    }
    let mut n = DMatrix::zeros(d, d);
    for l in 0..d {
        let second = if interior[l] {
            (at(&[(l, h)]) - 2.0 * f0 + at(&[(l, -h)])) / (h * h)
        } else {
            let s = side[l] * h;
            (f0 - 2.0 * at(&[(l, s)]) + at(&[(l, 2.0 * s)])) / (h * h)
        };
        n[(l, l)] = -second;
    }
    for a in 0..d {
        for b in 0..a {
            if !(interior[a] && interior[b]) {
                continue;
            }
            let v = (at(&[(a, h), (b, h)]) - at(&[(a, h), (b, -h)]) - at(&[(a, -h), (b, h)])
                + at(&[(a, -h), (b, -h)]))
                / (4.0 * h * h);
            n[(a, b)] = -v;
            n[(b, a)] = -v;
        }
    }
    n
}

/// Columns map standardized `z` to internal-scale offsets. Curvatures are
/// floored so a flat direction (a mode against a bound, say) still gets a
/// grid step of at most `MAX_SCALE` internal units per standardized unit.
fn standardization(neg_hessian: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let d = neg_hessian.nrows();
    let floor = 1.0 / (MAX_SCALE * MAX_SCALE);
    let mut map = DMatrix::zeros(d, d);
    if neg_hessian.iter().all(|v| v.is_finite()) {
        let eig = SymmetricEigen::new(neg_hessian.clone());
        map = eig.eigenvectors.clone();
        for k in 0..d {
            let s = 1.0 / eig.eigenvalues[k].max(floor).sqrt();
            map.column_mut(k).iter_mut().for_each(|v| *v *= s);
        }
    } else {
        log::warn!("non-finite hyper posterior curvature; using unit scales");
        for l in 0..d {
            map[(l, l)] = MAX_SCALE;
        }
    }
    let cov = &map * map.transpose();
    let scales = (0..d).map(|l| cov[(l, l)].sqrt()).collect();
    (map, scales)
}

fn point_at(mode: &[f64], map: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
    (0..mode.len())
        .map(|l| mode[l] + (0..z.len()).map(|k| map[(l, k)] * z[k]).sum::<f64>())
        .collect()
}

/// Locates the hyperparameter mode, lays a standardized grid around it and
/// keeps the points within the configured log-density drop.
pub fn explore_hyperparameters(model: &LatentModel) -> Result<HyperGrid> {
    let settings = &model.spec.grid;
    let d = model.kinds().len();
    if d == 0 {
        let (lp, ga) = hyper_posterior_point(model, &[], None)?;
        return Ok(HyperGrid {
            points: vec![HyperPoint {
                theta: vec![],
                log_post: lp,
                weight: 1.0,
            }],
            approximations: vec![ga],
            mode: vec![],
            scales: vec![],
            step: settings.step,
        });
    }
    let (mode, f0, ga0) = find_mode(model)?;
    let neg_h = curvature(model, &mode, f0, &ga0.mode);
    let (map, scales) = standardization(&neg_h);
    let delta = settings.step;
    let start = ga0.mode.clone();
    let eval = |theta: &[f64]| -> Option<f64> {
        if !model.in_bounds(theta) {
            return None;
        }
        match hyper_posterior_point(model, theta, Some(&start)) {
            Ok((lp, _)) if lp.is_finite() => Some(lp),
            _ => None,
        }
    };

    // Axis extents in standardized units.
    let mut lower = vec![0i64; d];
    let mut upper = vec![0i64; d];
    for k in 0..d {
        for dir in [1i64, -1] {
            let mut reach = 0;
            for s in 1..=MAX_AXIS_STEPS {
                let mut z = vec![0.0; d];
                z[k] = (dir * s) as f64 * delta;
                match eval(&point_at(&mode, &map, &z)) {
                    Some(lp) if f0 - lp <= settings.drop => reach = s,
                    _ => break,
                }
            }
            if dir > 0 {
                upper[k] = reach;
            } else {
                lower[k] = -reach;
            }
        }
    }
    let total: usize = (0..d).map(|k| (upper[k] - lower[k] + 1) as usize).product();
    if total > settings.max_points {
        return Err(Error::GridExplosion {
            points: total,
            max: settings.max_points,
        });
    }
    let mut candidates = Vec::with_capacity(total);
    let mut idx = lower.clone();
    loop {
        let z: Vec<f64> = idx.iter().map(|&i| i as f64 * delta).collect();
        candidates.push(point_at(&mode, &map, &z));
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            if idx[k] < upper[k] {
                idx[k] += 1;
                break;
            }
            idx[k] = lower[k];
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let mut grid = evaluate_candidates(model, candidates, &start)?;
    let keep: Vec<bool> = grid
        .points
        .iter()
        .map(|p| f0 - p.log_post <= settings.drop)
        .collect();
    let mut it = keep.iter();
    grid.points.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    grid.approximations.retain(|_| *it.next().unwrap());
    if grid.points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    normalize_weights(&mut grid.points);
    grid.mode = mode;
    grid.scales = scales;
    grid.step = delta;
    log::info!("hyper grid: {} points", grid.points.len());
    Ok(grid)
}

fn evaluate_candidates(model: &LatentModel, thetas: Vec<Vec<f64>>, start: &[f64]) -> Result<HyperGrid> {
    let results: Vec<Option<(HyperPoint, GaussianApprox)>> = thetas
        .into_par_iter()
        .map(|theta| {
            if !model.in_bounds(&theta) {
                return None;
            }
            match hyper_posterior_point(model, &theta, Some(start)) {
                Ok((lp, ga)) if lp.is_finite() => Some((
                    HyperPoint {
                        theta,
                        log_post: lp,
                        weight: 0.0,
                    },
                    ga,
                )),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("dropping grid point {theta:?}: {e}");
                    None
                }
            }
        })
        .collect();
    let (points, approximations): (Vec<_>, Vec<_>) = results.into_iter().flatten().unzip();
    Ok(HyperGrid {
        points,
        approximations,
        mode: Vec::new(),
        scales: Vec::new(),
        step: model.spec.grid.step,
    })
}

/// Evaluates a caller-supplied set of internal-scale points, normalizing
/// weights over them. Points that fail are errors here.
pub fn evaluate_grid(model: &LatentModel, thetas: &[Vec<f64>]) -> Result<HyperGrid> {
    let d = model.kinds().len();
    if thetas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(t) = thetas.iter().find(|t| t.len() != d) {
        return Err(Error::InvalidSpec(format!(
            "hyper point has {} coordinates, model has {d}",
            t.len()
        )));
    }
    let results: Vec<Result<(HyperPoint, GaussianApprox)>> = thetas
        .par_iter()
        .map(|theta| {
            let (lp, ga) = hyper_posterior_point(model, theta, None)?;
            Ok((
                HyperPoint {
                    theta: theta.clone(),
                    log_post: lp,
                    weight: 0.0,
                },
                ga,
            ))
        })
        .collect();
    let mut points = Vec::with_capacity(thetas.len());
    let mut approximations = Vec::with_capacity(thetas.len());
    for r in results {
        let (p, ga) = r?;
        points.push(p);
        approximations.push(ga);
    }
    normalize_weights(&mut points);
    let scales = if thetas.len() > 1 {
        (0..d)
            .map(|l| {
                let mut v: Vec<f64> = thetas.iter().map(|t| t[l]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.len() > 1 {
                    (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 / model.spec.grid.step
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; d]
    };
    let best = points
        .iter()
        .max_by(|a, b| a.log_post.total_cmp(&b.log_post))
        .map(|p| p.theta.clone())
        .unwrap_or_default();
    Ok(HyperGrid {
        points,
        approximations,
        mode: best,
        scales,
        step: model.spec.grid.step,
    })
}
