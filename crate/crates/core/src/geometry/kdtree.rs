use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{candidate_cmp, squared_distance, PointSet};

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// k-d tree splitting on the axis of maximum spread at the median.
///
/// Points with a coordinate equal to the split value may land on either side;
/// the search bound accounts for that by visiting the far side whenever the
/// plane distance does not exceed the current worst candidate.
#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        candidate_cmp((self.0, self.1), (other.0, other.1))
    }
}

impl KdTree {
    pub(crate) fn build(points: &PointSet, leaf_size: usize) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
        };
        tree.build_node(points, 0, points.len(), leaf_size.max(1));
        tree
    }

    fn build_node(&mut self, points: &PointSet, start: usize, end: usize, leaf_size: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= leaf_size {
            return id;
        }

        let dim = points.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for (d, &c) in points.point(i).iter().enumerate() {
                lo[d] = lo[d].min(c);
                hi[d] = hi[d].max(c);
            }
        }
        let (split_dim, spread) = (0..dim)
            .map(|d| (d, hi[d] - lo[d]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if spread <= 0.0 {
            return id;
        }

        let mid = (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points.point(a)[split_dim]
                .total_cmp(&points.point(b)[split_dim])
                .then(a.cmp(&b))
        });
        let value = points.point(self.order[start + mid])[split_dim];

        let left = self.build_node(points, start, start + mid, leaf_size);
        let right = self.build_node(points, start + mid, end, leaf_size);
        self.nodes[id] = Node::Split {
            dim: split_dim,
            value,
            left,
            right,
        };
        id
    }

    /// Sorted `(squared distance, index)` of the k nearest, skipping `skip`.
    pub(crate) fn knn(&self, points: &PointSet, q: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, points, q, k, skip, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|Cand(d, i)| (d, i)).collect();
        out.sort_unstable_by(|a, b| candidate_cmp(*a, *b));
        out
    }

    fn search(
        &self,
        node: usize,
        points: &PointSet,
        q: &[f64],
        k: usize,
        skip: Option<usize>,
        heap: &mut BinaryHeap<Cand>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let cand = Cand(squared_distance(q, points.point(i)), i);
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap holds k items") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, points, q, k, skip, heap);
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().expect("heap holds k items").0 {
                    self.search(far, points, q, k, skip, heap);
                }
            }
        }
    }
}
