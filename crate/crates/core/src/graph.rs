//! Region adjacency graphs and the structure matrices of the regional
//! random-effect priors.
//!
//! The ICAR structure matrix `Q` has the neighbour count `n_j` on the diagonal
//! and `-1` for every pair of neighbouring regions. The Leroux structure is
//! the convex combination `(1 - phi) I + phi Q`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Symmetric adjacency over `J` regions identified by string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    neighbors: Vec<Vec<usize>>,
}

impl RegionGraph {
    /// Builds a graph from ids and per-region neighbour lists, checking symmetry.
    pub fn new(ids: Vec<String>, mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        if ids.len() != neighbors.len() {
            return Err(Error::InvalidSpec(format!(
                "{} region ids but {} neighbour lists",
                ids.len(),
                neighbors.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (j, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), j).is_some() {
                return Err(Error::DuplicateRegion(id.clone()));
            }
        }
        let n = ids.len();
        for (j, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.iter().find(|&&l| l >= n || l == j) {
                return Err(Error::BadIndex {
                    line: j + 1,
                    token: bad.to_string(),
                });
            }
        }
        for (j, list) in neighbors.iter().enumerate() {
            for &l in list {
                if neighbors[l].binary_search(&j).is_err() {
                    return Err(Error::AsymmetricEdge(ids[j].clone(), ids[l].clone()));
                }
            }
        }
        Ok(Self {
            ids,
            index,
            neighbors,
        })
    }

    /// Graph with no edges.
    pub fn isolated(ids: Vec<String>) -> Result<Self> {
        let n = ids.len();
        Self::new(ids, vec![Vec::new(); n])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, j: usize) -> &str {
        &self.ids[j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn neighbor_counts(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Regions without neighbours.
    pub fn isolated_regions(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.neighbors[j].is_empty())
            .collect()
    }

    pub fn has_isolated(&self) -> bool {
        self.neighbors.iter().any(Vec::is_empty)
    }

    /// Connected-component label per region, labels assigned in index order.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(j) = stack.pop() {
                for &l in &self.neighbors[j] {
                    if label[l] == usize::MAX {
                        label[l] = next;
                        stack.push(l);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Serializes to the adjacency text format read by [`parse_adjacency`].
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (j, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            out.push(':');
            for &l in &self.neighbors[j] {
                out.push(' ');
                out.push_str(&self.ids[l]);
            }
            out.push('\n');
        }
        out
    }

    /// Rook-contiguity lattice with `rows * cols` regions, ids `0..J` in row-major order.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        let mut neighbors = vec![Vec::new(); n];
        for r in 0..rows {
            for c in 0..cols {
                let j = r * cols + c;
                if c + 1 < cols {
                    neighbors[j].push(j + 1);
                    neighbors[j + 1].push(j);
                }
                if r + 1 < rows {
                    neighbors[j].push(j + cols);
                    neighbors[j + cols].push(j);
                }
            }
        }
        let ids = (0..n).map(|j| j.to_string()).collect();
        Self::new(ids, neighbors).expect("lattice is symmetric")
    }

    /// Connected, nearly planar random graph: uniform points in the unit
    /// square joined to their `k` nearest neighbours (symmetrized), with
    /// components bridged through their closest pair of points.
    pub fn planar_like<R: Rng + ?Sized>(regions: usize, k: usize, rng: &mut R) -> Self {
        let pts: Vec<(f64, f64)> = (0..regions)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let dist2 = |a: usize, b: usize| {
            let dx = pts[a].0 - pts[b].0;
            let dy = pts[a].1 - pts[b].1;
            dx * dx + dy * dy
        };
        let mut neighbors = vec![Vec::new(); regions];
        for a in 0..regions {
            let mut order: Vec<usize> = (0..regions).filter(|&b| b != a).collect();
            order.sort_by(|&x, &y| dist2(a, x).total_cmp(&dist2(a, y)).then(x.cmp(&y)));
            for &b in order.iter().take(k) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        let ids: Vec<String> = (0..regions).map(|j| j.to_string()).collect();
        let mut graph = Self::new(ids.clone(), neighbors).expect("symmetrized");
        loop {
            let comp = graph.components();
            if comp.iter().all(|&c| c == 0) {
                break;
            }
            let mut best = (f64::INFINITY, 0, 0);
            for a in (0..regions).filter(|&a| comp[a] == 0) {
                for b in (0..regions).filter(|&b| comp[b] != 0) {
                    let d = dist2(a, b);
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
            let mut lists = graph.neighbors.clone();
            lists[best.1].push(best.2);
            lists[best.2].push(best.1);
            graph = Self::new(ids.clone(), lists).expect("symmetrized");
        }
        graph
    }
}

/// Parses the adjacency text format: one line per region,
/// `<region_id>: <id> <id> ...`. Blank lines and lines starting with `#` are
/// ignored. Symmetry is validated, never repaired.
pub fn parse_adjacency(text: &str) -> Result<RegionGraph> {
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((head, tail)) = line.split_once(':') else {
            return Err(Error::BadIndex {
                line: lineno + 1,
                token: line.to_string(),
            });
        };
        let id = head.trim();
        if id.is_empty() || id.split_whitespace().count() != 1 {
            return Err(Error::BadIndex {
                line: lineno + 1,
                token: head.to_string(),
            });
        }
        if index.insert(id.to_string(), ids.len()).is_some() {
            return Err(Error::DuplicateRegion(id.to_string()));
        }
        ids.push(id.to_string());
        rows.push((lineno + 1, tail.split_whitespace().collect()));
    }
    let mut neighbors = Vec::with_capacity(ids.len());
    for (j, (line, tokens)) in rows.into_iter().enumerate() {
        let mut list = Vec::with_capacity(tokens.len());
        for token in tokens {
            match index.get(token) {
                Some(&l) if l != j => list.push(l),
                _ => {
                    return Err(Error::BadIndex {
                        line,
                        token: token.to_string(),
                    })
                }
            }
        }
        neighbors.push(list);
    }
    let graph = RegionGraph::new(ids, neighbors)?;
    if graph.has_isolated() {
        log::warn!(
            "adjacency has {} isolated region(s)",
            graph.isolated_regions().len()
        );
    }
    Ok(graph)
}

/// Symmetric sparse matrix stored as its lower triangle in compressed
/// columns, with an optional linear constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrecision {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    constraint: Option<Vec<f64>>,
}

impl SparsePrecision {
    /// Assembles from lower-triangle triplets `(row >= col)`; duplicates are summed.
    pub fn from_lower_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .iter()
            .map(|&(i, j, v)| if i >= j { (i, j, v) } else { (j, i, v) })
            .collect();
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0; dim + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_idx.push(i);
            values.push(v);
            col_ptr[j + 1] += 1;
        }
        for j in 0..dim {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self {
            dim,
            col_ptr,
            row_idx,
            values,
            constraint: None,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let triplets: Vec<_> = (0..dim).map(|j| (j, j, 1.0)).collect();
        Self::from_lower_triplets(dim, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraint(&self) -> Option<&[f64]> {
        self.constraint.as_deref()
    }

    pub fn with_sum_to_zero(mut self) -> Self {
        self.constraint = Some(vec![1.0; self.dim]);
        self
    }

    /// Stored lower-triangle entries `(row, col, value)` in column order.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.lower_entries() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for (i, j, v) in self.lower_entries() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `x' A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, j, v) in self.lower_entries() {
            let term = v * x[i] * x[j];
            acc += if i == j { term } else { 2.0 * term };
        }
        acc
    }

    fn scale_add(&self, a: f64, other: &Self, b: f64) -> Self {
        let triplets: Vec<_> = self
            .lower_entries()
            .map(|(i, j, v)| (i, j, a * v))
            .chain(other.lower_entries().map(|(i, j, v)| (i, j, b * v)))
            .collect();
        Self::from_lower_triplets(self.dim, &triplets)
    }
}

/// ICAR structure matrix with the sum-to-zero constraint attached.
pub fn icar_structure(g: &RegionGraph) -> SparsePrecision {
    let mut triplets = Vec::with_capacity(g.len() + g.edge_count());
    for j in 0..g.len() {
        triplets.push((j, j, g.neighbors(j).len() as f64));
        for &l in g.neighbors(j) {
            if l > j {
                triplets.push((l, j, -1.0));
            }
        }
    }
    SparsePrecision::from_lower_triplets(g.len(), &triplets).with_sum_to_zero()
}

/// `(1 - phi) I + phi Q`. The constraint row is attached only at `phi = 1`.
pub fn leroux_structure(g: &RegionGraph, phi: f64) -> Result<SparsePrecision> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::PhiOutOfRange(phi));
    }
    let q = icar_structure(g);
    if phi == 1.0 {
        return Ok(q);
    }
    let mut r = SparsePrecision::identity(g.len()).scale_add(1.0 - phi, &q, phi);
    r.constraint = None;
    Ok(r)
}

/// ICAR structure used by the models: isolated regions get a unit diagonal
/// so their effect is a plain `N(0, 1/tau)` draw.
pub fn model_icar_structure(g: &RegionGraph) -> SparsePrecision {
    let q = icar_structure(g);
    let isolated = g.isolated_regions();
    if isolated.is_empty() {
        return q;
    }
    let repair: Vec<_> = isolated.iter().map(|&j| (j, j, 1.0)).collect();
    let fix = SparsePrecision::from_lower_triplets(g.len(), &repair);
    q.scale_add(1.0, &fix, 1.0).with_sum_to_zero()
}
