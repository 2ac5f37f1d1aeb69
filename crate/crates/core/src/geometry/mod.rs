//! Euclidean k-nearest-neighbor search over latent point sets.
//!
//! Two backends answer the same queries: an exhaustive scan and a k-d tree.
//! Both compute squared distances with the same summation order and rank
//! candidates by `(squared distance, reference index)`, so their answers agree
//! bit for bit. The square root is applied once, on output.

mod kdtree;

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::exec::Execution;

use kdtree::KdTree;

/// Leaf capacity of the k-d tree.
pub const KD_LEAF_SIZE: usize = 16;

/// An ordered collection of equal-dimension, finite vectors.
///
/// The index of a point is its identity; it is never reordered.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    /// Builds a point set from row-major coordinates.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("point dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: pos / dim });
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyPointSet)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        PointSet::new(dim, coords)
    }

    /// A set of `n` one-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        PointSet::new(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: offset.len(),
            });
        }
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, c)| c + offset[i % self.dim])
            .collect();
        PointSet::new(self.dim, coords)
    }

    /// Every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        PointSet::new(self.dim, self.coords.iter().map(|c| c * factor).collect())
    }

    /// Applies the same axis permutation to every point: new axis `j` is old
    /// axis `perm[j]`.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: perm.len(),
            });
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.iter() {
            coords.extend(perm.iter().map(|&j| p[j]));
        }
        PointSet::new(self.dim, coords)
    }
}

/// One entry of a neighbor list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Exactly `k` neighbors per query, sorted by `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_queries(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbors.len() / self.k
        }
    }

    pub fn of(&self, query: usize) -> &[Neighbor] {
        &self.neighbors[query * self.k..(query + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> + '_ {
        self.neighbors.chunks_exact(self.k.max(1))
    }
}

/// Search backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    BruteForce,
    KdTree,
    /// Brute force for small sets, k-d tree otherwise.
    Auto,
}

impl Backend {
    fn resolve(self, n: usize) -> Backend {
        match self {
            Backend::Auto if n <= 256 => Backend::BruteForce,
            Backend::Auto => Backend::KdTree,
            other => other,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" | "brute-force" => Ok(Backend::BruteForce),
            "kdtree" | "kd-tree" => Ok(Backend::KdTree),
            "auto" => Ok(Backend::Auto),
            other => Err(Error::Config(format!("unknown knn backend `{other}`"))),
        }
    }
}

/// `‖a − b‖₂`.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.iter().chain(b).any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }
    Ok(squared_distance(a, b).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Candidate ordering shared by both backends.
#[inline]
pub(crate) fn candidate_cmp(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Immutable search structure over a copy of the reference points.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    backend: Backend,
    points: PointSet,
    tree: Option<KdTree>,
}

impl SpatialIndex {
    pub fn build(points: PointSet, backend: Backend) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let backend = backend.resolve(points.len());
        let tree = match backend {
            Backend::KdTree => Some(KdTree::build(&points, KD_LEAF_SIZE)),
            _ => None,
        };
        Ok(SpatialIndex {
            backend,
            points,
            tree,
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// k nearest reference points of every query.
    ///
    /// With `exclude_self`, query `i` never returns reference index `i`; the
    /// query set must then be the reference set (same length). Other points at
    /// distance zero stay eligible.
    pub fn knn(&self, queries: &PointSet, k: usize, exclude_self: bool) -> Result<NeighborList> {
        self.knn_with(queries, k, exclude_self, Execution::default())
    }

    pub fn knn_with(
        &self,
        queries: &PointSet,
        k: usize,
        exclude_self: bool,
        exec: Execution,
    ) -> Result<NeighborList> {
        let n = self.len();
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: queries.dim(),
            });
        }
        let available = if exclude_self { n - 1 } else { n };
        if k == 0 || k > available {
            return Err(Error::KOutOfRange { k, n, exclude_self });
        }
        if exclude_self && queries.len() != n {
            return Err(Error::LengthMismatch {
                what: "self-excluding query set",
                expected: n,
                got: queries.len(),
            });
        }

        let per_query = exec.map(queries.len(), |qi| {
            let skip = exclude_self.then_some(qi);
            let q = queries.point(qi);
            match &self.tree {
                Some(tree) => tree.knn(&self.points, q, k, skip),
                None => brute_force_knn(&self.points, q, k, skip),
            }
        });

        let mut neighbors = Vec::with_capacity(queries.len() * k);
        for cands in per_query {
            neighbors.extend(cands.into_iter().map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            }));
        }
        Ok(NeighborList { k, neighbors })
    }

    /// Self-excluding k-NN of the reference set against itself.
    pub fn knn_self(&self, k: usize) -> Result<NeighborList> {
        self.knn(&self.points, k, true)
    }
}

/// Sorted `(squared distance, index)` of the k nearest references.
pub(crate) fn brute_force_knn(
    points: &PointSet,
    q: &[f64],
    k: usize,
    skip: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut cands: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, p)| (squared_distance(q, p), i))
        .collect();
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, |a, b| candidate_cmp(*a, *b));
        cands.truncate(k);
    }
    cands.sort_unstable_by(|a, b| candidate_cmp(*a, *b));
    cands
}

/// Convenience: build an index and run a self-excluding query.
pub fn knn_query(
    points: &PointSet,
    k: usize,
    backend: Backend,
    exec: Execution,
) -> Result<NeighborList> {
    let index = SpatialIndex::build(points.clone(), backend)?;
    index.knn_with(points, k, true, exec)
}
