//! Exact Euclidean nearest-neighbour search.

use crate::geometry::Vec3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, right: u32 },
}

/// Static kd-tree over a point set.
///
/// Queries return the exact nearest point; among equidistant points the one
/// with the smallest original index wins.
#[derive(Clone, Debug)]
pub struct NnIndex {
    coords: Vec<[f64; 3]>,
    ids: Vec<u32>,
    // pre-order layout: a split's left child follows it directly
    nodes: Vec<Node>,
}

impl NnIndex {
    pub fn build(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot index an empty point set"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(points, &mut order, 0, &mut nodes);
        let coords = order
            .iter()
            .map(|&i| {
                let p = points[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        Ok(Self {
            coords,
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let q = [query.x, query.y, query.z];
        let mut best_d2 = f64::INFINITY;
        let mut best_id = u32::MAX;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, 0.0));
        while let Some((node, bound)) = stack.pop() {
            // `bound` lower-bounds the squared distance to anything in the
            // subtree; equal bounds are kept so smaller-index ties are seen
            if bound > best_d2 {
                continue;
            }
            match self.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    for k in start as usize..end as usize {
                        let c = &self.coords[k];
                        let (dx, dy, dz) = (c[0] - q[0], c[1] - q[1], c[2] - q[2]);
                        let d2 = dx * dx + dy * dy + dz * dz;
                        let id = self.ids[k];
                        if d2 < best_d2 || (d2 == best_d2 && id < best_id) {
                            best_d2 = d2;
                            best_id = id;
                        }
                    }
                }
                Node::Split { axis, value, right } => {
                    let diff = q[axis as usize] - value;
                    let (near, far) = if diff < 0.0 {
                        (node + 1, right)
                    } else {
                        (right, node + 1)
                    };
                    stack.push((far, bound.max(diff * diff)));
                    stack.push((near, bound));
                }
            }
        }
        (best_id as usize, best_d2)
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) {
    let n = order.len();
    if n <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + n) as u32,
        });
        return;
    }
    let mut lo = points[order[0] as usize];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let axis = (hi - lo).imax();
    if hi[axis] == lo[axis] {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + n) as u32,
        });
        return;
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid] as usize][axis];
    let me = nodes.len();
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        right: 0,
    });
    let (left, right) = order.split_at_mut(mid);
    build_node(points, left, offset, nodes);
    let right_at = nodes.len() as u32;
    build_node(points, right, offset + mid, nodes);
    if let Node::Split { right, .. } = &mut nodes[me] {
        *right = right_at;
    }
}

/// Linear scan with the same tie rule, for tests and tiny inputs.
pub fn brute_force_nearest(points: &[Vec3], query: &Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}
