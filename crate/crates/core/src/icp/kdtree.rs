//! Static 3-d tree for nearest-neighbour queries.
//!
//! Ties on distance resolve to the lowest point index, so query results are
//! identical to an exhaustive scan that keeps the first minimum.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 12;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !points.is_empty() {
            tree.build_range(0, points.len());
        }
        tree
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = points[self.order[mid]][axis];

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point with squared distance `≤ max_dist2`, as `(index, dist2)`.
    pub fn nearest(&self, q: &Vector3<f64>, max_dist2: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (max_dist2, usize::MAX);
        self.search(0, q, &mut best);
        (best.1 != usize::MAX).then_some((best.1, best.0))
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Exhaustive reference search with the same tie-breaking rule.
pub fn brute_force_nearest(
    points: &[Vector3<f64>],
    q: &Vector3<f64>,
    max_dist2: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if d2 <= max_dist2 && best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best
}
