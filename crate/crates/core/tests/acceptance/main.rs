//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by the
//! measurements behind it. Outcomes are reported, not asserted; the unit and
//! integration tests carry the hard assertions.
//!
//! `ACCEPTANCE_ONLY=A1,A3` restricts the run to the listed criteria.

mod a01_kernels;
mod a02_structures;
mod a03_quadrature;
mod a04_mcmc;
mod a06_synthetic;
mod a08_calibration;
mod a09_determinism;
mod a10_constraint;
mod support;

use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: Vec<String>,
}

impl Outcome {
    pub fn new(pass: bool, detail: Vec<String>) -> Self {
        Self { pass, detail }
    }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    // The test harness passes its own flags; nothing here takes arguments.
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().to_uppercase()).collect());
    let criteria: [Criterion; 10] = [
        ("A1", "kernel derivatives vs finite differences", a01_kernels::run),
        ("A2", "structure matrices and Leroux definiteness", a02_structures::run),
        ("A3", "engine vs dense quadrature on tiny data", a03_quadrature::run),
        ("A4", "engine vs MCMC oracle, logit + leroux", a04_mcmc::run_logit),
        ("A5", "engine vs MCMC oracle, weibull + leroux", a04_mcmc::run_weibull),
        ("A6", "recovery on 379 synthetic regions", a06_synthetic::run_recovery),
        ("A7", "model ranking by DIC and WAIC", a06_synthetic::run_ranking),
        ("A8", "calibration over 20 replicates", a08_calibration::run),
        ("A9", "marginal mass and thread-count determinism", a09_determinism::run),
        ("A10", "sum-to-zero exactness of ICAR fits", a10_constraint::run),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if let Some(list) = &only {
            if !list.iter().any(|s| s == id) {
                continue;
            }
        }
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("{id:<4} {verdict}  {title} ({secs:.1} s)");
        for line in &out.detail {
            println!("       {line}");
        }
        if !out.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
    }
}
