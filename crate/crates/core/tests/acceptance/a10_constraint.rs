use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatial_lgm::laplace::{self, LatentModel};
use spatial_lgm::{Effect, Family, ModelSpec, RegionGraph};

use crate::support::{cli, simulated, summary_means};
use crate::Outcome;

pub fn run() -> Outcome {
    let mut detail = Vec::new();
    let mut worst: f64 = 0.0;
    for (family, j, n, seed) in [
        (Family::Logit, 40, 4_000, 10_001),
        (Family::Logit, 379, 30_000, 10_002),
        (Family::Weibull, 60, 4_000, 10_003),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = RegionGraph::planar_like(j, 5, &mut rng);
        let (setup, sim) = simulated(family, Effect::Icar, &graph, n, 4.0, 1.0, seed, |s| {
            if family == Family::Logit {
                s.truth[0] = -2.0;
            } else {
                s.horizon = None;
            }
        });
        let spec = ModelSpec::new(family, setup.covariate_names(), Effect::Icar);
        let model = LatentModel::new(&spec, &sim.dataset, &graph).expect("model");
        let fit = laplace::fit(&model).expect("fit");
        let p = fit.n_fixed();
        let summary_sum: f64 = fit.random.iter().map(|r| r.summary.mean).sum();
        let point_sum = fit
            .approximations
            .iter()
            .map(|ga| ga.mode[p..].iter().sum::<f64>().abs())
            .fold(0.0, f64::max);
        let mean_sum: f64 = fit.latent_mean()[p..].iter().sum();
        let local = summary_sum.abs().max(point_sum).max(mean_sum.abs());
        worst = worst.max(local);
        detail.push(format!(
            "{} icar J={j} n={n}: |sum of reported means| {:.2e}, worst grid-point |sum| {point_sum:.2e} over {} points",
            family.name(),
            summary_sum.abs(),
            fit.grid.len()
        ));
    }
    let cli_sum = cli_round_trip();
    worst = worst.max(cli_sum);
    detail.push(format!("fit command, icar: |sum of gamma rows in summaries.csv| {cli_sum:.2e}"));
    detail.push(format!("largest |sum gamma| {worst:.2e} (limit 1e-8)"));
    Outcome::new(worst < 1e-8, detail)
}

/// Sum of the regional means as written by the `fit` command.
fn cli_round_trip() -> f64 {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let sim_cfg = root.join("sim.toml");
    std::fs::write(
        &sim_cfg,
        "[model]\nfamily = \"logit\"\neffect = \"icar\"\n\n[simulate]\nregions = 48\nn = 5000\n\n\
         [truth]\nintercept = -2.0\n",
    )
    .unwrap();
    let sim_dir = root.join("sim");
    cli(&["simulate", "--config", &sim_cfg.to_string_lossy(), "--out", &sim_dir.to_string_lossy(), "--seed", "3"])
        .expect("simulate");
    let fit_cfg = root.join("fit.toml");
    std::fs::write(&fit_cfg, "[model]\nfamily = \"logit\"\neffect = \"icar\"\n").unwrap();
    let fit_dir = root.join("fit");
    cli(&[
        "fit",
        "--config",
        &fit_cfg.to_string_lossy(),
        "--data",
        &sim_dir.join("data.csv").to_string_lossy(),
        "--graph",
        &sim_dir.join("graph.adj").to_string_lossy(),
        "--out",
        &fit_dir.to_string_lossy(),
    ])
    .expect("fit");
    summary_means(&fit_dir.join("summaries.csv"))
        .iter()
        .filter(|(name, _)| name.starts_with("gamma_"))
        .map(|(_, m)| m)
        .sum::<f64>()
        .abs()
}
