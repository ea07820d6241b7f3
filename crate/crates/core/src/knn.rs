//! A small kd-tree for k-th-nearest-neighbor distances on point clouds.
//!
//! Built once per cloud; queries exclude the query point itself, which is what
//! the nearest-neighbor entropy estimator needs.

use ndarray::ArrayView2;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug)]
pub struct KdTree {
    dim: usize,
    /// Row-major copy of the points; queries index into this.
    pts: Vec<f64>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    pub fn build(points: ArrayView2<f64>) -> Self {
        let (count, dim) = points.dim();
        let pts: Vec<f64> = points.iter().copied().collect();
        let mut order: Vec<u32> = (0..count as u32).collect();
        let mut nodes = Vec::new();
        let root = build_node(&pts, dim, &mut order, 0, count, &mut nodes);
        KdTree {
            dim,
            pts,
            order,
            nodes,
            root,
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean distance from point `query` to its k-th nearest *other* point.
    ///
    /// Panics if k points other than the query do not exist; callers validate.
    pub fn kth_neighbor_distance(&self, query: usize, k: usize) -> f64 {
        let n = self.pts.len() / self.dim;
        assert!(k >= 1 && n > k, "need n > k ≥ 1 (n={n}, k={k})");
        // `best` holds the k smallest squared distances, largest first.
        let mut best: Vec<f64> = Vec::with_capacity(k);
        self.search(self.root, query, k, &mut best);
        best[0].sqrt()
    }

    fn search(&self, node: usize, query: usize, k: usize, best: &mut Vec<f64>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                let q = self.point(query);
                for &cand in &self.order[*start..*end] {
                    let cand = cand as usize;
                    if cand == query {
                        continue;
                    }
                    let p = self.point(cand);
                    let mut d2 = 0.0;
                    for j in 0..self.dim {
                        let diff = p[j] - q[j];
                        d2 += diff * diff;
                    }
                    push_candidate(best, k, d2);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let qv = self.point(query)[*axis];
                let (near, far) = if qv <= *value {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, k, best);
                let margin = qv - value;
                if best.len() < k || margin * margin < best[0] {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

fn push_candidate(best: &mut Vec<f64>, k: usize, d2: f64) {
    if best.len() < k {
        best.push(d2);
        best.sort_by(|a, b| b.total_cmp(a));
    } else if d2 < best[0] {
        best[0] = d2;
        best.sort_by(|a, b| b.total_cmp(a));
    }
}

fn build_node(
    pts: &[f64],
    dim: usize,
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }
    // Split on the widest axis of this subset at its median point.
    let mut axis = 0;
    let mut widest = -1.0;
    for j in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &order[start..end] {
            let v = pts[i as usize * dim + j];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = j;
        }
    }
    let mid = (end - start) / 2;
    order[start..end]
        .select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize * dim + axis].total_cmp(&pts[b as usize * dim + axis])
        });
    let value = pts[order[start + mid] as usize * dim + axis];
    let left = build_node(pts, dim, order, start, start + mid, nodes);
    let right = build_node(pts, dim, order, start + mid, end, nodes);
    nodes.push(Node::Split {
        axis,
        value,
        left,
        right,
    });
    nodes.len() - 1
}
