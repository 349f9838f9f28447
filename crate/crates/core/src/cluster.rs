//! Graphs, the passive construction of cluster states and their nullifiers.

use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{GaussianState, QuadratureForm};
use crate::symplectic::{matrix_inverse_sqrt, symplectic_pairing, Complex64};

/// Undirected, unweighted graph on `vertex_count` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    coordinates: Option<Vec<[i64; 3]>>,
}

impl ClusterGraph {
    /// Builds a graph from an edge list. Edges are normalised to `i < j`, sorted and
    /// deduplicated.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: vertex_count,
                });
            }
            if a == b {
                return Err(Error::InvalidConfig(format!("self loop on vertex {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self {
            vertex_count,
            edges: norm,
            coordinates: None,
        })
    }

    /// Graph with no edges.
    pub fn empty(vertex_count: usize) -> Self {
        Self {
            vertex_count,
            edges: Vec::new(),
            coordinates: None,
        }
    }

    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooSmall(format!(
                "chain needs at least 2 vertices, got {n}"
            )));
        }
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Self::from_edges(n, &edges)
    }

    /// Four-neighbour grid with row-major labels `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows * cols < 2 {
            return Err(Error::TooSmall(format!(
                "grid {rows}x{cols} has fewer than 2 vertices"
            )));
        }
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
    }

    /// One RHG unit cell: 12 edge sites and 6 face sites of a cube.
    pub fn rhg_unit_cell() -> Self {
        Self::rhg_stack(1).expect("one layer is valid")
    }

    /// `layers` RHG unit cells stacked along z, sharing their boundary faces.
    ///
    /// Sites are the integer points of `{0,1,2}² × {0..2·layers}` with exactly one
    /// (edge site) or exactly two (face site) odd coordinates; neighbours are at unit
    /// distance. Labels follow lexicographic `(z, y, x)` order.
    pub fn rhg_stack(layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::TooSmall("RHG stack needs at least one layer".into()));
        }
        let zmax = 2 * layers as i64;
        let mut coords = Vec::new();
        for z in 0..=zmax {
            for y in 0..=2 {
                for x in 0..=2 {
                    let odd = [x, y, z].iter().filter(|&&c| c % 2 == 1).count();
                    if odd == 1 || odd == 2 {
                        coords.push([x, y, z]);
                    }
                }
            }
        }
        let mut edges = Vec::new();
        for i in 0..coords.len() {
            for j in i + 1..coords.len() {
                let d: i64 = (0..3).map(|k| (coords[i][k] - coords[j][k]).abs()).sum();
                if d == 1 {
                    edges.push((i, j));
                }
            }
        }
        let mut g = Self::from_edges(coords.len(), &edges)?;
        g.coordinates = Some(coords);
        Ok(g)
    }

    /// Parses `chain:N`, `grid:RxC`, `rhg:unit` or `rhg:L` (an `L`-cell stack).
    pub fn from_spec(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unrecognised graph spec {spec:?}"));
        let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "chain" => Self::chain(arg.parse().map_err(|_| bad())?),
            "grid" => {
                let (r, c) = arg.split_once('x').ok_or_else(bad)?;
                Self::grid(r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?)
            }
            "rhg" if arg == "unit" => Ok(Self::rhg_unit_cell()),
            "rhg" => Self::rhg_stack(arg.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Lattice coordinates for RHG graphs.
    pub fn coordinates(&self) -> Option<&[[i64; 3]]> {
        self.coordinates.as_deref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertex_count];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn neighbours(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.vertex_count, self.vertex_count);
        for &(a, b) in &self.edges {
            g[(a, b)] = 1.0;
            g[(b, a)] = 1.0;
        }
        g
    }

    /// A proper two-colouring if the graph is bipartite.
    pub fn two_coloring(&self) -> Option<Vec<u8>> {
        let n = self.vertex_count;
        let mut color = vec![u8::MAX; n];
        let adj: Vec<Vec<usize>> = (0..n).map(|v| self.neighbours(v)).collect();
        for start in 0..n {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if color[w] == u8::MAX {
                        color[w] = 1 - color[v];
                        stack.push(w);
                    } else if color[w] == color[v] {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count;
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in self.neighbours(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            vertex_count: self.vertex_count,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::from_edges(file.vertex_count, &edges)
    }

    /// Loads a built-in spec, or a JSON graph file if `spec` names an existing path.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.is_file() {
            Self::from_json(&std::fs::read_to_string(path)?)
        } else {
            Self::from_spec(spec)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vertex_count: usize,
    edges: Vec<[usize; 2]>,
}

/// Checks `‖OᵀO − I‖_F < 1e-8`.
pub fn check_orthogonal(o: &DMatrix<f64>) -> Result<()> {
    let n = o.ncols();
    if o.nrows() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: o.nrows(),
        });
    }
    let residual = (o.transpose() * o - DMatrix::<f64>::identity(n, n)).norm();
    if !(residual < 1e-8) {
        return Err(Error::NotOrthogonal { residual });
    }
    Ok(())
}

/// `U = (I + iG)(I + G²)^{-1/2} O`, which maps p-squeezed inputs to a cluster state
/// with adjacency `G`. `O` defaults to the identity.
pub fn cluster_unitary(
    graph: &ClusterGraph,
    o: Option<&DMatrix<f64>>,
) -> Result<DMatrix<Complex64>> {
    let m = graph.vertex_count();
    let g = graph.adjacency();
    if let Some(o) = o {
        check_orthogonal(o)?;
        if o.nrows() != m {
            return Err(Error::SizeMismatch {
                expected: m,
                found: o.nrows(),
            });
        }
    }
    let q = matrix_inverse_sqrt(&(DMatrix::identity(m, m) + &g * &g))?;
    let re = match o {
        Some(o) => q * o,
        None => q,
    };
    let im = &g * &re;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        Complex::new(re[(i, j)], im[(i, j)])
    }))
}

/// Cluster state from p-squeezed vacua with per-mode squeezing `r`.
pub fn build_cluster(
    graph: &ClusterGraph,
    r: &[f64],
    o: Option<&DMatrix<f64>>,
) -> Result<GaussianState> {
    let m = graph.vertex_count();
    if r.len() != m {
        return Err(Error::SizeMismatch {
            expected: m,
            found: r.len(),
        });
    }
    let theta = vec![std::f64::consts::FRAC_PI_2; m];
    let input = GaussianState::squeezed_vacuum(r, &theta)?;
    input.apply_passive(&cluster_unitary(graph, o)?)
}

/// [`build_cluster`] with the same squeezing on every input.
pub fn build_uniform_cluster(graph: &ClusterGraph, r: f64) -> Result<GaussianState> {
    build_cluster(graph, &vec![r; graph.vertex_count()], None)
}

/// Nullifiers `δ_m = p_m − Σ_n G_{mn} x_n`, one per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NullifierSet {
    forms: Vec<QuadratureForm>,
}

impl NullifierSet {
    pub fn forms(&self) -> &[QuadratureForm] {
        &self.forms
    }

    /// Largest `|v_iᵀ Ω v_j|` over all pairs.
    pub fn max_commutator(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.forms.iter().enumerate() {
            for b in &self.forms[i..] {
                worst = worst.max(symplectic_pairing(a.coeffs(), b.coeffs()).abs());
            }
        }
        worst
    }
}

pub fn nullifiers(graph: &ClusterGraph) -> NullifierSet {
    let m = graph.vertex_count();
    let forms = (0..m)
        .map(|v| {
            let mut c = DVector::zeros(2 * m);
            c[m + v] = 1.0;
            for n in graph.neighbours(v) {
                c[n] = -1.0;
            }
            QuadratureForm::new(c).expect("nullifier has a p coefficient")
        })
        .collect();
    NullifierSet { forms }
}

/// Nullifier statistics for one vertex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullifierRecord {
    pub vertex: usize,
    pub variance: f64,
    pub vacuum_variance: f64,
    pub ratio: f64,
    pub squeezed: bool,
}

/// Detected nullifier variances relative to the same forms evaluated on vacuum.
pub fn nullifier_report(
    state: &GaussianState,
    graph: &ClusterGraph,
    eta: f64,
) -> Result<Vec<NullifierRecord>> {
    if state.mode_count() != graph.vertex_count() {
        return Err(Error::SizeMismatch {
            expected: graph.vertex_count(),
            found: state.mode_count(),
        });
    }
    Ok(nullifiers(graph)
        .forms()
        .iter()
        .enumerate()
        .map(|(vertex, f)| {
            let (_, variance) = state.detected_moments(f, eta);
            let vacuum_variance = f.norm_squared();
            let ratio = variance / vacuum_variance;
            NullifierRecord {
                vertex,
                variance,
                vacuum_variance,
                ratio,
                squeezed: ratio < 1.0,
            }
        })
        .collect())
}

/// The `Cov(x, p)` block of a covariance matrix.
pub fn xp_block(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let m = cov.nrows() / 2;
    cov.view((0, m), (m, m)).into_owned()
}

/// Whether the strictly positive entries of the x–p block sit exactly on the edges
/// of `graph`. Entries within `1e-9` of the block's largest magnitude count as zero.
pub fn xp_sign_support_matches(cov: &DMatrix<f64>, graph: &ClusterGraph) -> bool {
    let b = xp_block(cov);
    let tol = 1e-9 * b.amax().max(f64::MIN_POSITIVE);
    let g = graph.adjacency();
    b.iter()
        .zip(g.iter())
        .all(|(&x, &e)| (x > tol) == (e == 1.0))
}

/// Whether the entries of the x–p block with magnitude above `fraction` of the
/// block maximum sit exactly on the edges of `graph`.
pub fn xp_dominant_support_matches(
    cov: &DMatrix<f64>,
    graph: &ClusterGraph,
    fraction: f64,
) -> bool {
    let b = xp_block(cov);
    let cut = fraction * b.amax();
    let g = graph.adjacency();
    b.iter()
        .zip(g.iter())
        .all(|(&x, &e)| (x.abs() > cut) == (e == 1.0))
}
