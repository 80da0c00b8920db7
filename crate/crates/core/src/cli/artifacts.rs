//! Files written by `fit` and read back by `predict` and `compare`.

use std::collections::HashMap;
use std::path::Path;

use super::io::{num, read_table, CsvText};
use crate::criteria::Scores;
use crate::error::{Error, Result};
use crate::laplace::FitResult;

pub const SUMMARIES: &str = "summaries.csv";
pub const MARGINALS: &str = "marginals.csv";
pub const HYPERGRID: &str = "hypergrid.csv";
pub const SCORES: &str = "scores.csv";
pub const LATENT: &str = "latent.csv";
pub const MANIFEST: &str = "manifest.toml";

pub fn summaries_csv(fit: &FitResult) -> String {
    let mut out = CsvText::new(&["parameter", "mean", "sd", "q2.5", "q50", "q97.5"]);
    for (name, s) in fit.summary_rows() {
        out.row(&[name, num(s.mean), num(s.sd), num(s.q025), num(s.q50), num(s.q975)]);
    }
    out.finish()
}

pub fn marginals_csv(fit: &FitResult) -> String {
    let mut out = CsvText::new(&["parameter", "x", "density"]);
    for (name, m) in fit.marginal_rows() {
        for (x, d) in m.support.iter().zip(&m.density) {
            out.row(&[name.clone(), num(*x), num(*d)]);
        }
    }
    out.finish()
}

pub fn hypergrid_csv(fit: &FitResult) -> String {
    let mut header = vec!["index"];
    header.extend(fit.hyper_kinds.iter().map(|k| k.internal_name()));
    header.extend(fit.hyper_kinds.iter().map(|k| k.name()));
    header.extend(["log_post", "weight"]);
    let mut out = CsvText::new(&header);
    for (i, p) in fit.grid.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.theta.iter().map(|&t| num(t)));
        row.extend(
            fit.hyper_kinds
                .iter()
                .zip(&p.theta)
                .map(|(k, &t)| num(k.to_natural(t))),
        );
        row.push(num(p.log_post));
        row.push(num(p.weight));
        out.row(&row);
    }
    out.finish()
}

pub fn model_label(fit: &FitResult) -> String {
    format!("{}_{}", fit.spec.family.name(), fit.spec.effect.name())
}

pub fn scores_csv(label: &str, scores: &Scores) -> String {
    let mut out = CsvText::new(&["model", "dic", "p_d", "waic", "p_waic"]);
    out.row(&[
        label.to_string(),
        num(scores.dic.score),
        num(scores.dic.effective_params),
        num(scores.waic.score),
        num(scores.waic.effective_params),
    ]);
    out.finish()
}

/// Per grid point: weight, shape, mode of the fixed and regional effects,
/// and the covariance entries prediction needs.
pub fn latent_csv(fit: &FitResult) -> String {
    let p = fit.n_fixed();
    let names: Vec<String> = fit
        .fixed_names
        .iter()
        .cloned()
        .chain(fit.region_ids.iter().map(|id| format!("gamma_{id}")))
        .collect();
    let j = fit.approximations[0].dim() - p;
    let mut out = CsvText::new(&["point", "block", "row", "col", "value"]);
    for (k, (pt, ga)) in fit.grid.iter().zip(&fit.approximations).enumerate() {
        let point = k.to_string();
        out.row(&[point.as_str(), "weight", "", "", &num(pt.weight)]);
        out.row(&[point.as_str(), "alpha", "", "", &num(ga.hyper.alpha)]);
        for (i, v) in ga.mode.iter().enumerate() {
            out.row(&[point.as_str(), "mode", &names[i], "", &num(*v)]);
        }
        for a in 0..p {
            let col = ga.covariance_column(a);
            for b in 0..=a {
                out.row(&[point.as_str(), "cov", &names[a], &names[b], &num(col[b])]);
            }
            for r in 0..j {
                out.row(&[point.as_str(), "cov", &names[p + r], &names[a], &num(col[p + r])]);
            }
        }
        for r in 0..j {
            let v = fit.variances[k][p + r];
            out.row(&[point.as_str(), "cov", &names[p + r], &names[p + r], &num(v)]);
        }
    }
    out.finish()
}

/// Grid-point approximations as read back from `latent.csv`.
#[derive(Debug, Clone)]
pub struct LatentPoint {
    pub weight: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major `p x p`.
    pub cov_bb: Vec<f64>,
    /// `cov_gb[j * p + a] = Cov(gamma_j, beta_a)`.
    pub cov_gb: Vec<f64>,
    pub var_g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LatentTable {
    pub fixed_names: Vec<String>,
    pub region_ids: Vec<String>,
    pub points: Vec<LatentPoint>,
}

pub fn read_latent(path: &Path, fixed_names: &[String]) -> Result<LatentTable> {
    if !path.exists() {
        return Err(Error::MissingFitArtifact(path.to_path_buf()));
    }
    let raw = read_table(path)?;
    let p = fixed_names.len();
    let bad = |line: usize, msg: &str| Error::parse(path, line, msg.to_string());
    let fixed_index: HashMap<&str, usize> = fixed_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut region_ids: Vec<String> = Vec::new();
    let mut region_index: HashMap<String, usize> = HashMap::new();
    // First pass: region order from the mode block of point 0.
    for row in &raw.rows {
        if row.len() == 5 && row[0] == "0" && row[1] == "mode" {
            if let Some(id) = row[2].strip_prefix("gamma_") {
                region_index.insert(id.to_string(), region_ids.len());
                region_ids.push(id.to_string());
            }
        }
    }
    let j = region_ids.len();
    let index_of = |name: &str| -> Option<(bool, usize)> {
        if let Some(&i) = fixed_index.get(name) {
            return Some((false, i));
        }
        name.strip_prefix("gamma_")
            .and_then(|id| region_index.get(id))
            .map(|&r| (true, r))
    };
    let mut points: Vec<LatentPoint> = Vec::new();
    for (row, &line) in raw.rows.iter().zip(&raw.lines) {
        if row.len() != 5 {
            return Err(bad(line, "expected 5 fields"));
        }
        let k: usize = row[0].parse().map_err(|_| bad(line, "bad point index"))?;
        let value: f64 = row[4].parse().map_err(|_| bad(line, "bad value"))?;
        while points.len() <= k {
            points.push(LatentPoint {
                weight: 0.0,
                alpha: 1.0,
                beta: vec![0.0; p],
                gamma: vec![0.0; j],
                cov_bb: vec![0.0; p * p],
                cov_gb: vec![0.0; j * p],
                var_g: vec![0.0; j],
            });
        }
        let pt = &mut points[k];
        match row[1].as_str() {
            "weight" => pt.weight = value,
            "alpha" => pt.alpha = value,
            "mode" => match index_of(&row[2]) {
                Some((false, i)) => pt.beta[i] = value,
                Some((true, r)) => pt.gamma[r] = value,
                None => return Err(bad(line, "unknown parameter")),
            },
            "cov" => match (index_of(&row[2]), index_of(&row[3])) {
                (Some((false, a)), Some((false, b))) => {
                    pt.cov_bb[a * p + b] = value;
                    pt.cov_bb[b * p + a] = value;
                }
                (Some((true, r)), Some((false, a))) => pt.cov_gb[r * p + a] = value,
                (Some((true, r)), Some((true, s))) if r == s => pt.var_g[r] = value,
                _ => return Err(bad(line, "unexpected covariance entry")),
            },
            _ => return Err(bad(line, "unknown block")),
        }
    }
    if points.is_empty() {
        return Err(bad(1, "no grid points"));
    }
    Ok(LatentTable {
        fixed_names: fixed_names.to_vec(),
        region_ids,
        points,
    })
}

/// Scores row as read from `scores.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub model: String,
    pub dic: f64,
    pub p_d: f64,
    pub waic: f64,
    pub p_waic: f64,
}

pub fn read_scores(path: &Path) -> Result<ScoreRow> {
    if !path.exists() {
        return Err(Error::MissingFitArtifact(path.to_path_buf()));
    }
    let raw = read_table(path)?;
    let row = raw
        .rows
        .first()
        .ok_or_else(|| Error::parse(path, 2, "no scores row"))?;
    let line = raw.lines[0];
    let get = |i: usize| -> Result<f64> {
        row.get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, line, format!("bad field {}", i + 1)))
    };
    Ok(ScoreRow {
        model: row[0].clone(),
        dic: get(1)?,
        p_d: get(2)?,
        waic: get(3)?,
        p_waic: get(4)?,
    })
}
