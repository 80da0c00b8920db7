use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_lgm::graph::{icar_structure, leroux_structure, parse_adjacency};
use spatial_lgm::RegionGraph;

use crate::Outcome;

fn dense(m: &spatial_lgm::SparsePrecision) -> Vec<Vec<f64>> {
    let d = m.to_dense();
    (0..d.nrows())
        .map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect())
        .collect()
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    let p3 = parse_adjacency("0: 1\n1: 0 2\n2: 1").unwrap();
    let p2 = parse_adjacency("0: 1\n1: 0").unwrap();
    let iso = RegionGraph::isolated(vec!["a".into(), "b".into(), "c".into()]).unwrap();

    let q3 = vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]];
    let iso_q = icar_structure(&iso);
    let unit = [
        ("icar P3", dense(&icar_structure(&p3)) == q3),
        (
            "icar P2",
            dense(&icar_structure(&p2)) == vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        ),
        (
            "icar isolated",
            dense(&iso_q) == vec![vec![0.0; 3]; 3] && iso_q.constraint() == Some(&[1.0, 1.0, 1.0][..]),
        ),
        (
            "leroux phi=0",
            dense(&leroux_structure(&p3, 0.0).unwrap())
                == vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        ),
        ("leroux phi=1", dense(&leroux_structure(&p3, 1.0).unwrap()) == q3),
        (
            "leroux phi=0.5 P2",
            dense(&leroux_structure(&p2, 0.5).unwrap()) == vec![vec![1.0, -0.5], vec![-0.5, 1.0]],
        ),
    ];
    let failed: Vec<&str> = unit.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    detail.push(format!(
        "{} of {} exact unit matrices reproduced{}",
        unit.len() - failed.len(),
        unit.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (wrong: {})", failed.join(", "))
        }
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_602);
    let mut min_eig = f64::INFINITY;
    let mut sizes = Vec::new();
    for _ in 0..10 {
        let j = rng.random_range(5..=50);
        let k = rng.random_range(2..=6);
        let g = RegionGraph::planar_like(j, k, &mut rng);
        sizes.push(j);
        for phi in [0.0, 0.25, 0.5, 0.9, 0.99] {
            let r = leroux_structure(&g, phi).unwrap().to_dense();
            let lo = r.symmetric_eigenvalues().min();
            min_eig = min_eig.min(lo);
        }
    }
    detail.push(format!(
        "10 random graphs with J = {sizes:?}; smallest Leroux eigenvalue {min_eig:.3e}"
    ));
    let secs = start.elapsed().as_secs_f64();
    detail.push(format!("elapsed {secs:.3} s (limit 5 s)"));
    Outcome::new(failed.is_empty() && min_eig > 0.0 && secs < 5.0, detail)
}
