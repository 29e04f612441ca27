use nalgebra::Vector3;

use crate::{Error, Result};

struct Node {
    point: Vector3<f64>,
    /// Index into the cloud the tree was built from.
    index: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Exact nearest-neighbour index over a fixed set of 3D points (kd-tree,
/// median split on the widest axis).
pub struct NNIndex {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl NNIndex {
    pub fn build(points: &[Vector3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateGeometry(
                "cannot build an index over an empty cloud".into(),
            ));
        }
        let mut items: Vec<(Vector3<f64>, usize)> =
            points.iter().copied().zip(0..).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Some(build_recursive(&mut items, &mut nodes));
        Ok(Self { nodes, root })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Returns (index into the source cloud, distance) of the nearest point.
    pub fn nearest(&self, query: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, query, &mut best);
        (best.0, best.1.sqrt())
    }

    fn search(&self, node: Option<usize>, query: &Vector3<f64>, best: &mut (usize, f64)) {
        let Some(id) = node else { return };
        let n = &self.nodes[id];
        let d2 = (n.point - query).norm_squared();
        if d2 < best.1 || (d2 == best.1 && n.index < best.0) {
            *best = (n.index, d2);
        }
        let delta = query[n.axis] - n.point[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, best);
        if delta * delta <= best.1 {
            self.search(far, query, best);
        }
    }
}

fn build_recursive(items: &mut [(Vector3<f64>, usize)], nodes: &mut Vec<Node>) -> usize {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (p, _) in items.iter() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| {
        a.0[axis]
            .partial_cmp(&b.0[axis])
            .unwrap()
            .then(a.1.cmp(&b.1))
    });
    let (point, index) = items[mid];
    let node_id = nodes.len();
    nodes.push(Node {
        point,
        index,
        axis,
        left: None,
        right: None,
    });
    let (left_items, rest) = items.split_at_mut(mid);
    let right_items = &mut rest[1..];
    if !left_items.is_empty() {
        let left = build_recursive(left_items, nodes);
        nodes[node_id].left = Some(left);
    }
    if !right_items.is_empty() {
        let right = build_recursive(right_items, nodes);
        nodes[node_id].right = Some(right);
    }
    node_id
}
