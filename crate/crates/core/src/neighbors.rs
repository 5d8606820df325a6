//! Exact M-nearest-neighbor queries.
//!
//! The ordered neighbor tuple `σ(z)` defines the tessellation on which the
//! sparse models live; [`CellKey`] is the canonical (sorted) form of its
//! support set. Ties are broken by ascending training index, so the
//! kd-tree and the brute-force scan return identical answers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{check_dim, Error, Result};
use crate::kernels::Metric;
use crate::par::{self, Parallelism};
use crate::points::PointSet;

const LEAF_SIZE: usize = 16;

/// Ordered nearest neighbors of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub dists: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

/// Bounded max-heap keeping the `m` smallest candidates.
struct TopM {
    m: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopM {
    fn new(m: usize) -> Self {
        Self {
            m,
            heap: BinaryHeap::with_capacity(m + 1),
        }
    }

    #[inline]
    fn push(&mut self, c: Candidate) {
        if self.heap.len() < self.m {
            self.heap.push(c);
        } else if let Some(top) = self.heap.peek() {
            if c < *top {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    /// Whether a region at distance at least `bound` may still contribute.
    #[inline]
    fn admits(&self, bound: f64) -> bool {
        self.heap.len() < self.m || self.heap.peek().is_some_and(|top| bound <= top.dist)
    }

    fn finish(self) -> Neighbors {
        let sorted = self.heap.into_sorted_vec();
        Neighbors {
            indices: sorted.iter().map(|c| c.index).collect(),
            dists: sorted.iter().map(|c| c.dist).collect(),
        }
    }
}

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

#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl KdTree {
    fn build(points: &PointSet) -> Self {
        let mut tree = Self {
            nodes: Vec::new(),
            order: (0..points.nrows()).collect(),
        };
        let n = points.nrows();
        tree.build_node(points, 0, n);
        tree
    }

    fn build_node(&mut self, points: &PointSet, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let dims = points.ncols();
        let slice = &self.order[start..end];
        let mut best = (0, 0.0);
        for d in 0..dims {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points[(i, d)];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let dim = best.0;
        let mid = (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[(a, dim)].total_cmp(&points[(b, dim)])
        });
        let value = points[(self.order[start + mid], dim)];
        let left = self.build_node(points, start, start + mid);
        let right = self.build_node(points, start + mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, node: usize, points: &PointSet, metric: Metric, z: &[f64], top: &mut TopM) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let dist = metric.eval(z, points.row(index));
                    top.push(Candidate { dist, index });
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = z[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, points, metric, z, top);
                if top.admits(diff.abs()) {
                    self.search(far, points, metric, z, top);
                }
            }
        }
    }
}

/// Exact nearest-neighbor index over (normalized) training features.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: PointSet,
    metric: Metric,
    tree: Option<KdTree>,
}

impl NeighborIndex {
    /// Builds a kd-tree when the set is larger than a single leaf.
    pub fn build(points: PointSet, metric: Metric) -> Result<Self> {
        let mut index = Self::build_brute(points, metric)?;
        if index.points.nrows() > LEAF_SIZE {
            index.tree = Some(KdTree::build(&index.points));
        }
        Ok(index)
    }

    /// Index answering every query by a linear scan.
    pub fn build_brute(points: PointSet, metric: Metric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("neighbor index needs at least one point".into()));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidInput("neighbor index needs D >= 1".into()));
        }
        Ok(Self {
            points,
            metric,
            tree: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn is_accelerated(&self) -> bool {
        self.tree.is_some()
    }

    /// The `min(m, N)` nearest training points, closest first.
    pub fn query(&self, z: &[f64], m: usize) -> Result<Neighbors> {
        check_dim(self.dim(), z.len(), "query dimension")?;
        if m == 0 {
            return Err(Error::InvalidInput("bandwidth M must be >= 1".into()));
        }
        let m = m.min(self.len());
        let mut top = TopM::new(m);
        match &self.tree {
            Some(tree) => tree.search(0, &self.points, self.metric, z, &mut top),
            None => self.scan(z, &mut top),
        }
        Ok(top.finish())
    }

    /// Linear-scan answer, independent of the acceleration structure.
    pub fn query_brute(&self, z: &[f64], m: usize) -> Result<Neighbors> {
        check_dim(self.dim(), z.len(), "query dimension")?;
        if m == 0 {
            return Err(Error::InvalidInput("bandwidth M must be >= 1".into()));
        }
        let mut top = TopM::new(m.min(self.len()));
        self.scan(z, &mut top);
        Ok(top.finish())
    }

    fn scan(&self, z: &[f64], top: &mut TopM) {
        for (index, x) in self.points.rows().enumerate() {
            top.push(Candidate {
                dist: self.metric.eval(z, x),
                index,
            });
        }
    }

    pub fn query_batch(&self, z: &PointSet, m: usize, par: Parallelism) -> Result<Vec<Neighbors>> {
        check_dim(self.dim(), z.ncols(), "query dimension")?;
        par::try_map_indexed(z.nrows(), par, |i| self.query(z.row(i), m))
    }
}

/// Sorted support set of a neighbor tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey(Vec<usize>);

impl CellKey {
    pub fn from_sigma(sigma: &[usize]) -> Result<Self> {
        let mut v = sigma.to_vec();
        v.sort_unstable();
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Internal(format!("repeated index in neighbor tuple {sigma:?}")));
        }
        Ok(Self(v))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
