use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spatial_lgm::domain::{validate_dataset, Dataset, RawTable};
use spatial_lgm::simulate::{self, SimulationSetup};
use spatial_lgm::{Effect, Family, ModelSpec, RegionGraph};

/// Composite Simpson rule on `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn table(header: &[&str], rows: &[Vec<String>]) -> RawTable {
    RawTable::new(header.iter().map(|s| s.to_string()).collect(), rows.to_vec())
}

pub fn dataset(spec: &ModelSpec, graph: &RegionGraph, header: &[&str], rows: &[Vec<String>]) -> Dataset {
    validate_dataset(&table(header, rows), spec, graph).expect("valid test data")
}

/// Simulates from the default design with the given overrides.
pub fn simulated(
    family: Family,
    effect: Effect,
    graph: &RegionGraph,
    n: usize,
    tau: f64,
    phi: f64,
    seed: u64,
    tweak: impl FnOnce(&mut SimulationSetup),
) -> (SimulationSetup, simulate::Simulated) {
    let mut setup = SimulationSetup::defaults(family, effect);
    setup.n = n;
    setup.tau = tau;
    setup.phi = phi;
    tweak(&mut setup);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate::simulate(&setup, graph, &mut rng).expect("simulation");
    (setup, sim)
}

pub fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Runs the command-line front end in process.
pub fn cli(args: &[&str]) -> spatial_lgm::Result<()> {
    let mut full = vec!["spatial-lgm"];
    full.extend_from_slice(args);
    spatial_lgm::cli::run(full)
}

/// File name to contents for every file in `dir`, sorted by name.
pub fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("readable directory")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("readable file"),
            )
        })
        .collect();
    out.sort();
    out
}

/// `(parameter, mean)` rows of a summaries file.
pub fn summary_means(path: &std::path::Path) -> Vec<(String, f64)> {
    let text = std::fs::read_to_string(path).expect("summaries");
    text.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            let name = f.next().unwrap().to_string();
            (name, f.next().unwrap().parse().unwrap())
        })
        .collect()
}
