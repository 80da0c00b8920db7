use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatial_lgm::laplace::{self, LatentModel};
use spatial_lgm::{Effect, Family, ModelSpec, RegionGraph};

use crate::support::{cli, dir_contents, simulated};
use crate::Outcome;

const THREADS: [Option<&str>; 4] = [None, Some("1"), Some("3"), Some("8")];

fn mass_check(detail: &mut Vec<String>) -> f64 {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (family, effect) in [
        (Family::Logit, Effect::None),
        (Family::Logit, Effect::Iid),
        (Family::Logit, Effect::Leroux),
        (Family::Logit, Effect::Icar),
        (Family::Weibull, Effect::None),
        (Family::Weibull, Effect::Leroux),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(9_001);
        let graph = RegionGraph::planar_like(25, 4, &mut rng);
        let (setup, sim) = simulated(family, effect, &graph, 3_000, 4.0, 0.8, 9_002, |s| {
            if family == Family::Logit {
                s.truth[0] = -2.0;
            }
        });
        let spec = ModelSpec::new(family, setup.covariate_names(), effect);
        let model = LatentModel::new(&spec, &sim.dataset, &graph).expect("model");
        let fit = laplace::fit(&model).expect("fit");
        for (_, m) in fit.marginal_rows() {
            worst = worst.max((m.mass() - 1.0).abs());
            count += 1;
        }
    }
    for (_, m) in crate::a06_synthetic::country().fit.marginal_rows() {
        worst = worst.max((m.mass() - 1.0).abs());
        count += 1;
    }
    detail.push(format!(
        "{count} marginals over six model types and the A6 fit; largest |mass - 1| {worst:.2e} (limit 1e-3)"
    ));
    worst
}

/// Trapezoid mass of every parameter block in a written marginals file.
fn file_mass(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).expect("marginals");
    let mut worst: f64 = 0.0;
    let mut current = String::new();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut flush = |pts: &mut Vec<(f64, f64)>| {
        if pts.len() > 1 {
            let m: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
            worst = worst.max((m - 1.0).abs());
        }
        pts.clear();
    };
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] != current {
            flush(&mut pts);
            current = f[0].to_string();
        }
        pts.push((f[1].parse().unwrap(), f[2].parse().unwrap()));
    }
    flush(&mut pts);
    worst
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("writable temp dir");
}

/// Runs `args` once per thread setting into `<root>/<tag>_<threads>` and
/// reports whether every run wrote identical files.
fn same_across_threads(root: &Path, tag: &str, args: &[&str]) -> (bool, usize) {
    let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
    let mut same = true;
    let mut files = 0;
    for t in THREADS {
        let out = root.join(format!("{tag}_{}", t.unwrap_or("default")));
        let out_s = out.to_string_lossy().into_owned();
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", &out_s]);
        if let Some(n) = t {
            full.extend(["--threads", n]);
        }
        cli(&full).unwrap_or_else(|e| panic!("{tag}: {e}"));
        let contents = dir_contents(&out);
        files = contents.len();
        match &reference {
            None => reference = Some(contents),
            Some(r) => same &= *r == contents,
        }
    }
    (same, files)
}

pub fn run() -> Outcome {
    let mut detail = Vec::new();
    let worst_mass = mass_check(&mut detail);

    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut all_same = true;
    let mut file_worst: f64 = 0.0;
    for (family, extra) in [("logit", ""), ("weibull", "horizon = 5.0\n")] {
        let sim_cfg = root.join(format!("sim_{family}.toml"));
        write(
            &sim_cfg,
            &format!(
                "[model]\nfamily = \"{family}\"\neffect = \"leroux\"\n\n[run]\nseed = 11\n\n\
                 [simulate]\nregions = 40\nn = 4000\ngraph = \"planar\"\ntau = 4.0\nphi = 0.8\n{extra}\n\
                 [truth]\nintercept = -2.0\n"
            ),
        );
        let (same, files) = same_across_threads(root, &format!("sim_{family}"), &["simulate", "--config", &sim_cfg.to_string_lossy()]);
        detail.push(format!("simulate {family}: {files} files, identical across threads: {same}"));
        all_same &= same;

        let data_dir = root.join(format!("sim_{family}_default"));
        let fit_cfg = root.join(format!("fit_{family}.toml"));
        write(
            &fit_cfg,
            &format!(
                "[model]\nfamily = \"{family}\"\neffect = \"leroux\"\n\n[paths]\ndata = \"{}\"\ngraph = \"{}\"\n\n\
                 [run]\nseed = 5\ndraws = 1000\n",
                data_dir.join("data.csv").display(),
                data_dir.join("graph.adj").display()
            ),
        );
        let fit_tag = format!("fit_{family}");
        let (same, files) = same_across_threads(root, &fit_tag, &["fit", "--config", &fit_cfg.to_string_lossy()]);
        detail.push(format!("fit {family}: {files} files, identical across threads: {same}"));
        all_same &= same;
        file_worst = file_worst.max(file_mass(&root.join(format!("{fit_tag}_default/marginals.csv"))));

        let profiles = root.join("profiles.csv");
        write(&profiles, "profile,Age3,Woman\nyoung_man,0,0\nold_woman,1,1\n");
        let fit_dir = root.join(format!("{fit_tag}_default"));
        let (same, files) = same_across_threads(
            root,
            &format!("predict_{family}"),
            &[
                "predict",
                "--fit",
                &fit_dir.to_string_lossy(),
                "--profiles",
                &profiles.to_string_lossy(),
                "--draws",
                "500",
            ],
        );
        detail.push(format!("predict {family}: {files} files, identical across threads: {same}"));
        all_same &= same;
    }
    let mut outputs = Vec::new();
    for t in THREADS {
        let out = root.join(format!("compare_{}.csv", t.unwrap_or("default")));
        let out_s = out.to_string_lossy().into_owned();
        let a = root.join("fit_logit_default").to_string_lossy().into_owned();
        let b = root.join("fit_weibull_default").to_string_lossy().into_owned();
        let mut args = vec!["compare", "--fit", &a, "--fit", &b, "--out", &out_s];
        if let Some(n) = t {
            args.extend(["--threads", n]);
        }
        cli(&args).expect("compare");
        outputs.push(std::fs::read(&out).expect("compare output"));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    detail.push(format!("compare: identical across threads: {same}"));
    all_same &= same;
    detail.push(format!(
        "written marginals.csv files: largest |mass - 1| {file_worst:.2e}; threads tried: default, 1, 3, 8"
    ));
    Outcome::new(worst_mass < 1e-3 && file_worst < 1e-3 && all_same, detail)
}
