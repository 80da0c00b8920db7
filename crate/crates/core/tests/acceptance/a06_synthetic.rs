use std::sync::OnceLock;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatial_lgm::criteria::{compute_scores, Scores, DEFAULT_DRAWS};
use spatial_lgm::domain::Dataset;
use spatial_lgm::laplace::{self, FitResult, LatentModel};
use spatial_lgm::simulate::SimulationSetup;
use spatial_lgm::{Effect, Family, ModelSpec, RegionGraph};

use crate::support::simulated;
use crate::Outcome;

pub const REGIONS: usize = 379;
const ROWS: usize = 300_000;
const SEED: u64 = 6_001;
const FIT_LIMIT_SECS: f64 = 600.0;
const SCORE_SEED: u64 = 7;

pub struct Country {
    pub graph: RegionGraph,
    pub setup: SimulationSetup,
    pub data: Dataset,
    pub fit: FitResult,
    pub fit_secs: f64,
    pub model: LatentModel,
}

pub fn country_graph(seed: u64) -> RegionGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RegionGraph::planar_like(REGIONS, 5, &mut rng)
}

/// A6 data and its leroux fit, shared with A7.
pub fn country() -> &'static Country {
    static CELL: OnceLock<Country> = OnceLock::new();
    CELL.get_or_init(|| {
        let graph = country_graph(SEED);
        let defaults = SimulationSetup::defaults(Family::Logit, Effect::Leroux);
        let (setup, sim) = simulated(
            Family::Logit,
            Effect::Leroux,
            &graph,
            ROWS,
            defaults.tau,
            defaults.phi,
            SEED,
            |_| {},
        );
        let spec = ModelSpec::new(Family::Logit, setup.covariate_names(), Effect::Leroux);
        let start = Instant::now();
        let model = LatentModel::new(&spec, &sim.dataset, &graph).expect("model");
        let fit = laplace::fit(&model).expect("fit");
        let fit_secs = start.elapsed().as_secs_f64();
        Country {
            graph,
            setup,
            data: sim.dataset,
            fit,
            fit_secs,
            model,
        }
    })
}

/// Coverage and sign checks of one fit against the truth.
pub struct Recovery {
    pub covered: usize,
    pub total: usize,
    pub signs_ok: bool,
    pub rows: Vec<String>,
}

pub fn recovery(fit: &FitResult, truth: &[f64]) -> Recovery {
    let mut covered = 0;
    let mut signs_ok = true;
    let mut rows = Vec::new();
    for ((name, m), &t) in fit.fixed_names.iter().zip(&fit.fixed).zip(truth) {
        let s = m.summary;
        let inside = s.q025 <= t && t <= s.q975;
        covered += usize::from(inside);
        if t.abs() > 0.1 && s.mean.signum() != t.signum() {
            signs_ok = false;
        }
        rows.push(format!(
            "{name}: truth {t:.3}, mean {:.3}, 95% CI ({:.3}, {:.3}){}",
            s.mean,
            s.q025,
            s.q975,
            if inside { "" } else { " MISSED" }
        ));
    }
    Recovery {
        covered,
        total: truth.len(),
        signs_ok,
        rows,
    }
}

pub fn run_recovery() -> Outcome {
    let p = country();
    let r = recovery(&p.fit, &p.setup.truth);
    let cases = match &p.data.outcome {
        spatial_lgm::domain::Outcome::Binary(y) => y.iter().map(|&v| usize::from(v)).sum::<usize>(),
        _ => unreachable!(),
    };
    let mut detail = vec![format!(
        "J={}, {} edges, n={ROWS}, {cases} cases, {} cells; truth tau={}, phi={}",
        p.graph.len(),
        p.graph.edge_count(),
        p.model.design.cells(),
        p.setup.tau,
        p.setup.phi
    )];
    detail.extend(r.rows.iter().cloned());
    for (name, s) in p.fit.summary_rows() {
        if name == "tau" || name == "phi" {
            detail.push(format!("{name}: mean {:.3}, 95% CI ({:.3}, {:.3})", s.mean, s.q025, s.q975));
        }
    }
    detail.push(format!(
        "coverage {}/{} (need >= 7), signs {} ; fit {:.1} s with {} grid points (limit {FIT_LIMIT_SECS} s)",
        r.covered,
        r.total,
        if r.signs_ok { "match" } else { "DIFFER" },
        p.fit_secs,
        p.fit.grid.len()
    ));
    let pass = r.covered >= 7 && r.signs_ok && p.fit_secs < FIT_LIMIT_SECS;
    Outcome::new(pass, detail)
}

fn scores_for(data: &Dataset, graph: &RegionGraph, covariates: Vec<String>, effect: Effect) -> Scores {
    let spec = ModelSpec::new(Family::Logit, covariates, effect);
    let model = LatentModel::new(&spec, data, graph).expect("model");
    let fit = laplace::fit(&model).expect("fit");
    compute_scores(&fit, &model, DEFAULT_DRAWS, SCORE_SEED).expect("scores")
}

fn score_line(label: &str, s: &Scores) -> String {
    format!(
        "{label}: DIC {:.2} (pD {:.1}), WAIC {:.2} (pWAIC {:.1})",
        s.dic.score, s.dic.effective_params, s.waic.score, s.waic.effective_params
    )
}

pub fn run_ranking() -> Outcome {
    let p = country();
    let names = p.setup.covariate_names();
    let leroux = compute_scores(&p.fit, &p.model, DEFAULT_DRAWS, SCORE_SEED).expect("scores");
    let iid = scores_for(&p.data, &p.graph, names.clone(), Effect::Iid);
    let none = scores_for(&p.data, &p.graph, names.clone(), Effect::None);
    let dic_order = leroux.dic.score < iid.dic.score && iid.dic.score < none.dic.score;
    let waic_order = leroux.waic.score < iid.waic.score && iid.waic.score < none.waic.score;
    let mut detail = vec![
        "A6 data:".to_string(),
        score_line("  leroux", &leroux),
        score_line("  iid", &iid),
        score_line("  none", &none),
        format!(
            "  ordering leroux < iid < none: DIC {}, WAIC {}",
            if dic_order { "yes" } else { "NO" },
            if waic_order { "yes" } else { "NO" }
        ),
    ];

    // Same design with negligible regional variation.
    let graph = country_graph(SEED + 1);
    let (_, sim) = simulated(Family::Logit, Effect::Leroux, &graph, ROWS, 1e6, 0.866, SEED + 1, |_| {});
    let flat_leroux = scores_for(&sim.dataset, &graph, names.clone(), Effect::Leroux);
    let flat_none = scores_for(&sim.dataset, &graph, names, Effect::None);
    let gap = (flat_none.dic.score - flat_leroux.dic.score).abs();
    detail.push("tau = 1e6 data:".to_string());
    detail.push(score_line("  leroux", &flat_leroux));
    detail.push(score_line("  none", &flat_none));
    detail.push(format!("  |DIC(none) - DIC(leroux)| = {gap:.2} (limit 10)"));
    Outcome::new(dic_order && waic_order && gap < 10.0, detail)
}
