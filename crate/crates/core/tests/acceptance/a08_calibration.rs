use rayon::prelude::*;

use spatial_lgm::laplace::{self, LatentModel};
use spatial_lgm::simulate::SimulationSetup;
use spatial_lgm::{Effect, Family, ModelSpec};

use crate::a06_synthetic::{country_graph, recovery};
use crate::support::simulated;
use crate::Outcome;

const REPLICATES: u64 = 20;
const ROWS: usize = 20_000;

pub fn run() -> Outcome {
    let graph = country_graph(8_000);
    let defaults = SimulationSetup::defaults(Family::Logit, Effect::Leroux);
    let results: Vec<(usize, usize, usize)> = (0..REPLICATES)
        .into_par_iter()
        .map(|r| {
            let (setup, sim) = simulated(
                Family::Logit,
                Effect::Leroux,
                &graph,
                ROWS,
                defaults.tau,
                defaults.phi,
                8_001 + r,
                |_| {},
            );
            let spec = ModelSpec::new(Family::Logit, setup.covariate_names(), Effect::Leroux);
            let model = LatentModel::new(&spec, &sim.dataset, &graph).expect("model");
            let fit = laplace::fit(&model).expect("fit");
            let rec = recovery(&fit, &setup.truth);
            (rec.covered, rec.total, fit.grid.len())
        })
        .collect();
    let covered: usize = results.iter().map(|r| r.0).sum();
    let total: usize = results.iter().map(|r| r.1).sum();
    let share = covered as f64 / total as f64;
    let per: Vec<String> = results.iter().map(|r| r.0.to_string()).collect();
    Outcome::new(
        (0.85..=1.0).contains(&share),
        vec![
            format!("{REPLICATES} replicates, J=379, n={ROWS}, logit + leroux at the default truth"),
            format!("intervals covering the truth per replicate (of 9): {}", per.join(" ")),
            format!("pooled coverage {covered}/{total} = {:.1}% (need 85-100%)", 100.0 * share),
        ],
    )
}
