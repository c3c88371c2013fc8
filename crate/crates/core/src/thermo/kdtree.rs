//! k-d tree for k-nearest-neighbour queries in the max norm, with optional
//! periodic coordinates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    /// Period per coordinate; points must lie in `[0, L)` for periodic ones.
    periods: Vec<Option<f64>>,
    order: Vec<usize>,
    root: Node,
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
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    /// `points` is row-major with `dim` columns.
    pub fn new(points: &'a [f64], dim: usize, periods: Vec<Option<f64>>) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "point buffer must be a multiple of dim");
        assert_eq!(periods.len(), dim, "one period entry per coordinate");
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let root = build(points, dim, &mut order, 0, n);
        KdTree {
            points,
            dim,
            periods,
            order,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn coord_dist(&self, c: usize, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.periods[c] {
            Some(l) => d.min(l - d),
            None => d,
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.dim).map(|c| self.coord_dist(c, a[c], b[c])).fold(0.0, f64::max)
    }

    /// Lower bound on the distance from `x` (coordinate `c`) to anything on
    /// the far side of a split at `value`.
    fn far_gap(&self, c: usize, x: f64, value: f64) -> f64 {
        let d = (x - value).abs();
        match self.periods[c] {
            // the far arc is [value, L) or [0, value); it is also reachable
            // through the seam at 0 = L
            Some(_) if x < value => d.min(x),
            Some(l) => d.min(l - x),
            None => d,
        }
    }

    /// Max-norm distance from point `i` to its `k`-th nearest other point.
    pub fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let q = self.point(i).to_vec();
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, &q, i, k, &mut heap);
        heap.peek().map(|c| c.0).unwrap_or(f64::INFINITY)
    }

    fn search(&self, node: &Node, q: &[f64], skip: usize, k: usize, heap: &mut BinaryHeap<Cand>) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j == skip {
                        continue;
                    }
                    let d = self.distance(q, self.point(j));
                    if heap.len() < k {
                        heap.push(Cand(d, j));
                    } else if d < heap.peek().expect("heap is full").0 {
                        heap.pop();
                        heap.push(Cand(d, j));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let x = q[*dim];
                let (near, far) = if x < *value { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, heap);
                let gap = self.far_gap(*dim, x, *value);
                if heap.len() < k || gap < heap.peek().expect("heap is full").0 {
                    self.search(far, q, skip, k, heap);
                }
            }
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF {
        return Node::Leaf { start, end };
    }
    // split on the widest coordinate
    let slice = &mut order[start..end];
    let mut best = (0, -1.0);
    for c in 0..dim {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[i * dim + c];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (c, hi - lo);
        }
    }
    let c = best.0;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a * dim + c].total_cmp(&points[b * dim + c]));
    let value = points[slice[mid] * dim + c];
    let left = build(points, dim, order, start, start + mid);
    let right = build(points, dim, order, start + mid, end);
    Node::Split {
        dim: c,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}
