//! Command-line front end: `simulate`, `fit`, `predict` and `compare`.

pub mod artifacts;
pub mod config;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{self, DEFAULT_DRAWS};
use crate::domain::{validate_dataset, Family};
use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::laplace::{self, LatentModel};
use crate::likelihood;
use crate::simulate;
use artifacts::{LatentTable, LATENT, MANIFEST};
use config::RunConfig;
use io::{num, CsvText};

#[derive(Debug, Parser)]
#[command(name = "spatial-lgm", version, about = "Spatial logistic and Weibull models by nested Laplace approximation")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset, region graph and truth file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model and write summaries, marginals, grid and scores.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Predict probabilities or median survival for covariate profiles.
    Predict {
        /// Output directory of a previous fit.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        draws: Option<usize>,
        /// Evaluate at the posterior mean instead of integrating.
        #[arg(long)]
        plugin: bool,
    },
    /// Tabulate scores across fits.
    Compare {
        #[arg(long = "fit", required = true)]
        fits: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments and runs the command in a pool of the requested size.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::BadConfig(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::BadConfig(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out, seed),
        Command::Fit {
            config,
            data,
            graph,
            out,
            seed,
            draws,
        } => cmd_fit(&config, data, graph, out, seed, draws),
        Command::Predict {
            fit,
            profiles,
            out,
            seed,
            draws,
            plugin,
        } => cmd_predict(&fit, &profiles, &out, seed, draws, plugin),
        Command::Compare { fits, out } => cmd_compare(&fits, out.as_deref()),
    }
}

#[derive(Serialize)]
struct ManifestInfo {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_scale: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest: ManifestInfo,
    config: &'a RunConfig,
}

fn manifest_text(info: ManifestInfo, cfg: &RunConfig) -> String {
    toml::to_string(&Manifest {
        manifest: info,
        config: cfg,
    })
    .expect("manifest serializes")
}

fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.paths.out.as_deref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| Error::BadConfig("no output directory (use --out or [paths] out)".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn build_graph(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RegionGraph> {
    let sim = cfg.simulate.clone().unwrap_or_default();
    let regions = sim.regions.unwrap_or(30);
    if regions == 0 {
        return Err(Error::BadConfig("simulate.regions must be positive".into()));
    }
    match sim.graph.as_deref().unwrap_or("lattice") {
        "lattice" => {
            let rows = (1..=regions)
                .take_while(|r| r * r <= regions)
                .filter(|r| regions % r == 0)
                .last()
                .unwrap_or(1);
            Ok(RegionGraph::lattice(rows, regions / rows))
        }
        "planar" => Ok(RegionGraph::planar_like(regions, sim.neighbours.unwrap_or(5), rng)),
        path => io::read_graph(&cfg.resolve(path)),
    }
}

fn cmd_simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = seed.or(cfg.run.seed).unwrap_or(0);
    let dir = output_dir(&cfg, out)?;
    let setup = cfg.simulation_setup()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_graph(&cfg, &mut rng)?;
    let sim = simulate::simulate(&setup, &graph, &mut rng)?;
    io::write_text(&dir.join("data.csv"), &io::dataset_csv(&sim.dataset))?;
    io::write_text(&dir.join("graph.adj"), &graph.to_adjacency_text())?;
    let mut truth = CsvText::new(&["parameter", "value"]);
    let names = std::iter::once("intercept".to_string()).chain(setup.covariate_names());
    for (name, v) in names.zip(&setup.truth) {
        truth.row(&[name, num(*v)]);
    }
    if setup.effect != crate::Effect::None {
        truth.row(&["tau".to_string(), num(setup.tau)]);
        if setup.effect == crate::Effect::Leroux {
            truth.row(&["phi".to_string(), num(setup.phi)]);
        }
    }
    if setup.family == Family::Weibull {
        truth.row(&["alpha".to_string(), num(setup.alpha)]);
    }
    for (id, g) in graph.ids().iter().zip(&sim.gamma) {
        truth.row(&[format!("gamma_{id}"), num(*g)]);
    }
    io::write_text(&dir.join("truth.csv"), &truth.finish())?;
    let info = ManifestInfo {
        tool: "spatial-lgm",
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        seed,
        draws: None,
        time_scale: None,
    };
    io::write_text(&dir.join(MANIFEST), &manifest_text(info, &cfg))?;
    log::info!("simulated {} rows over {} regions", setup.n, graph.len());
    Ok(())
}

fn input_path(cfg: &RunConfig, flag: Option<PathBuf>, key: Option<&String>, what: &str) -> Result<PathBuf> {
    let path = flag
        .or_else(|| key.map(|p| cfg.resolve(p)))
        .ok_or_else(|| Error::BadConfig(format!("no {what} path (use --{what} or [paths] {what})")))?;
    if !path.exists() {
        return Err(Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    Ok(path)
}

fn cmd_fit(
    config: &Path,
    data: Option<PathBuf>,
    graph: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    draws: Option<usize>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    let seed = seed.or(cfg.run.seed).unwrap_or(0);
    let draws = draws.or(cfg.run.draws).unwrap_or(DEFAULT_DRAWS);
    cfg.run.seed = Some(seed);
    cfg.run.draws = Some(draws);
    let data_path = input_path(&cfg, data, cfg.paths.data.as_ref(), "data")?;
    let graph_path = input_path(&cfg, graph, cfg.paths.graph.as_ref(), "graph")?;
    let dir = output_dir(&cfg, out)?;
    let spec = cfg.model_spec()?;
    let graph = io::read_graph(&graph_path)?;
    let raw = io::read_table(&data_path)?;
    let dataset = validate_dataset(&raw, &spec, &graph).map_err(|e| e.in_file(&data_path))?;
    let model = LatentModel::new(&spec, &dataset, &graph)?;
    let fit = laplace::fit(&model)?;
    let scores = criteria::compute_scores(&fit, &model, draws, seed)?;
    io::write_text(&dir.join(artifacts::SUMMARIES), &artifacts::summaries_csv(&fit))?;
    io::write_text(&dir.join(artifacts::MARGINALS), &artifacts::marginals_csv(&fit))?;
    io::write_text(&dir.join(artifacts::HYPERGRID), &artifacts::hypergrid_csv(&fit))?;
    io::write_text(
        &dir.join(artifacts::SCORES),
        &artifacts::scores_csv(&artifacts::model_label(&fit), &scores),
    )?;
    io::write_text(&dir.join(LATENT), &artifacts::latent_csv(&fit))?;
    let info = ManifestInfo {
        tool: "spatial-lgm",
        version: env!("CARGO_PKG_VERSION"),
        command: "fit",
        seed,
        draws: Some(draws),
        time_scale: Some(dataset.time_scale),
    };
    io::write_text(&dir.join(MANIFEST), &manifest_text(info, &cfg))?;
    Ok(())
}

/// Fit manifest as read back by `predict`.
#[derive(Debug, serde::Deserialize)]
struct StoredManifest {
    manifest: StoredInfo,
    config: RunConfig,
}

#[derive(Debug, serde::Deserialize)]
struct StoredInfo {
    command: String,
    time_scale: Option<f64>,
}

fn load_fit_manifest(dir: &Path) -> Result<(RunConfig, f64)> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingFitArtifact(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let stored: StoredManifest =
        toml::from_str(&text).map_err(|e| Error::BadConfig(e.to_string()).in_file(&path))?;
    if stored.manifest.command != "fit" {
        return Err(Error::BadConfig("manifest is not from a fit".into()).in_file(&path));
    }
    Ok((stored.config, stored.manifest.time_scale.unwrap_or(1.0)))
}

/// One prediction target: fixed-effect design row (with intercept) and region.
#[derive(Debug, Clone)]
pub struct Profile {
    /// Source line in the profiles file.
    pub line: usize,
    pub name: String,
    pub region: Option<String>,
    pub x: Vec<f64>,
}

pub fn read_profiles(path: &Path, covariates: &[String]) -> Result<Vec<Profile>> {
    let raw = io::read_table(path)?;
    let mut name_col = None;
    let mut region_col = None;
    let mut cov_cols = Vec::new();
    for (c, h) in raw.header.iter().enumerate() {
        match h.as_str() {
            "profile" => name_col = Some(c),
            "region" => region_col = Some(c),
            other => {
                let k = covariates
                    .iter()
                    .position(|n| n == other)
                    .ok_or_else(|| Error::UnknownCovariate(other.to_string()).in_file(path))?;
                cov_cols.push((c, k));
            }
        }
    }
    let name_col = name_col.ok_or_else(|| Error::parse(path, 1, "missing `profile` column"))?;
    raw.rows
        .iter()
        .zip(&raw.lines)
        .map(|(row, &line)| {
            let mut x = vec![0.0; covariates.len() + 1];
            x[0] = 1.0;
            for &(c, k) in &cov_cols {
                let field = row.get(c).map(String::as_str).unwrap_or("");
                if field.is_empty() {
                    continue;
                }
                x[k + 1] = field
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("bad value `{field}`")))?;
            }
            let region = region_col
                .and_then(|c| row.get(c))
                .filter(|s| !s.is_empty())
                .cloned();
            Ok(Profile {
                line,
                name: row.get(name_col).cloned().unwrap_or_default(),
                region,
                x,
            })
        })
        .collect()
}

/// Posterior summaries of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear predictor mean and variance at grid point `pt` for region `r`.
fn eta_moments(latent: &LatentTable, k: usize, x: &[f64], r: Option<usize>) -> (f64, f64) {
    let pt = &latent.points[k];
    let p = x.len();
    let mut mean = dot(x, &pt.beta);
    let mut var = 0.0;
    for a in 0..p {
        for b in 0..p {
            var += x[a] * pt.cov_bb[a * p + b] * x[b];
        }
    }
    if let Some(r) = r {
        mean += pt.gamma[r];
        var += 2.0 * dot(x, &pt.cov_gb[r * p..(r + 1) * p]) + pt.var_g[r];
    }
    (mean, var.max(0.0))
}

fn transform(family: Family, eta: f64, alpha: f64, time_scale: f64) -> f64 {
    match family {
        Family::Logit => likelihood::logistic(eta),
        Family::Weibull => (std::f64::consts::LN_2 / eta.exp()).powf(1.0 / alpha) * time_scale,
    }
}

/// Predictions for one profile and region, integrating over the mixture
/// or at the posterior mean when `plugin` is set.
pub fn predict_one(
    latent: &LatentTable,
    family: Family,
    time_scale: f64,
    x: &[f64],
    region: Option<usize>,
    draws: usize,
    seed: u64,
    stream: u64,
    plugin: bool,
) -> Prediction {
    if plugin {
        let mut eta = 0.0;
        let mut alpha = 0.0;
        for (k, pt) in latent.points.iter().enumerate() {
            eta += pt.weight * eta_moments(latent, k, x, region).0;
            alpha += pt.weight * pt.alpha;
        }
        let v = transform(family, eta, alpha, time_scale);
        return Prediction {
            mean: v,
            q025: v,
            q50: v,
            q975: v,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let cum: Vec<f64> = latent
        .points
        .iter()
        .scan(0.0, |acc, pt| {
            *acc += pt.weight;
            Some(*acc)
        })
        .collect();
    let moments: Vec<(f64, f64)> = (0..latent.points.len())
        .map(|k| eta_moments(latent, k, x, region))
        .collect();
    let mut values: Vec<f64> = (0..draws)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let z: f64 = rng.sample(StandardNormal);
            let (m, v) = moments[k];
            transform(family, m + v.sqrt() * z, latent.points[k].alpha, time_scale)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (draws - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(draws - 1);
        values[lo] + (h - lo as f64) * (values[hi] - values[lo])
    };
    Prediction {
        mean,
        q025: q(0.025),
        q50: q(0.5),
        q975: q(0.975),
    }
}

fn cmd_predict(
    fit_dir: &Path,
    profiles: &Path,
    out: &Path,
    seed: Option<u64>,
    draws: Option<usize>,
    plugin: bool,
) -> Result<()> {
    let (cfg, time_scale) = load_fit_manifest(fit_dir)?;
    let spec = cfg.model_spec()?;
    let seed = seed.or(cfg.run.seed).unwrap_or(0);
    let draws = draws.unwrap_or(DEFAULT_DRAWS).max(1);
    let latent = artifacts::read_latent(&fit_dir.join(LATENT), &spec.fixed_names())?;
    let profiles_path = profiles;
    let profiles = read_profiles(profiles, &spec.covariates)?;
    let has_effect = !latent.region_ids.is_empty();
    let mut targets: Vec<(usize, String, Option<usize>)> = Vec::new();
    for (i, prof) in profiles.iter().enumerate() {
        match &prof.region {
            Some(id) if has_effect => {
                let r = latent
                    .region_ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| {
                        Error::UnknownRegion {
                            row: prof.line,
                            region: id.clone(),
                        }
                        .in_file(profiles_path)
                    })?;
                targets.push((i, id.clone(), Some(r)));
            }
            Some(id) => targets.push((i, id.clone(), None)),
            None if has_effect => {
                for (r, id) in latent.region_ids.iter().enumerate() {
                    targets.push((i, id.clone(), Some(r)));
                }
            }
            None => targets.push((i, String::new(), None)),
        }
    }
    let results: Vec<Prediction> = targets
        .par_iter()
        .enumerate()
        .map(|(t, (i, _, r))| {
            predict_one(
                &latent,
                spec.family,
                time_scale,
                &profiles[*i].x,
                *r,
                draws,
                seed,
                t as u64,
                plugin,
            )
        })
        .collect();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut csv = CsvText::new(&["profile", "region", "mean", "q2.5", "q50", "q97.5"]);
    for ((i, region, _), p) in targets.iter().zip(&results) {
        csv.row(&[
            profiles[*i].name.clone(),
            region.clone(),
            num(p.mean),
            num(p.q025),
            num(p.q50),
            num(p.q975),
        ]);
    }
    io::write_text(&out.join("predictions.csv"), &csv.finish())
}

fn cmd_compare(fits: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut csv = CsvText::new(&["fit", "model", "dic", "p_d", "waic", "p_waic"]);
    for dir in fits {
        let row = artifacts::read_scores(&dir.join(artifacts::SCORES))?;
        csv.row(&[
            dir.display().to_string(),
            row.model,
            num(row.dic),
            num(row.p_d),
            num(row.waic),
            num(row.p_waic),
        ]);
    }
    let text = csv.finish();
    match out {
        Some(path) => io::write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
