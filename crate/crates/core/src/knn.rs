//! Exact k-nearest-neighbor search in 3D.
//!
//! [`knn_indices`] is a linear scan; [`GridIndex`] is a uniform-grid
//! accelerator that returns the same indices. Targets with a NaN coordinate
//! are never returned. Ties are broken by the lower target index.

use crate::error::{Error, Result};
use crate::geometry::dist2;

fn is_valid(p: &[f64; 3]) -> bool {
    p.iter().all(|c| c.is_finite())
}

#[inline]
fn key(d: f64, i: usize) -> (f64, usize) {
    (d, i)
}

fn cmp_key(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force k nearest targets for one query, nearest first.
pub fn knn_scan(query: &[f64; 3], targets: &[[f64; 3]], k: usize) -> Vec<usize> {
    let mut cands: Vec<(f64, usize)> = targets
        .iter()
        .enumerate()
        .filter(|(_, t)| is_valid(t))
        .map(|(i, t)| key(dist2(query, t), i))
        .collect();
    let k = k.min(cands.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp_key);
        cands.truncate(k);
    }
    cands.sort_by(cmp_key);
    cands.into_iter().map(|(_, i)| i).collect()
}

/// Exact k nearest targets for every query (linear scan).
pub fn knn_indices(queries: &[[f64; 3]], targets: &[[f64; 3]], k: usize) -> Result<Vec<Vec<usize>>> {
    let valid = targets.iter().filter(|t| is_valid(t)).count();
    if valid < k {
        return Err(Error::TooFewSamples {
            needed: k,
            available: valid,
        });
    }
    Ok(queries.iter().map(|q| knn_scan(q, targets, k)).collect())
}

/// Uniform voxel grid over the valid targets.
#[derive(Debug, Clone)]
pub struct GridIndex {
    points: Vec<[f64; 3]>,
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: `starts[c]..starts[c + 1]` indexes `entries` for cell `c`.
    starts: Vec<usize>,
    entries: Vec<usize>,
    valid: usize,
}

impl GridIndex {
    /// Builds a grid with roughly `per_cell` points per occupied cell.
    pub fn new(targets: &[[f64; 3]]) -> Self {
        Self::with_density(targets, 4.0)
    }

    pub fn with_density(targets: &[[f64; 3]], per_cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut valid = 0;
        for p in targets.iter().filter(|p| is_valid(p)) {
            valid += 1;
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if valid == 0 {
            return Self {
                points: targets.to_vec(),
                origin: [0.0; 3],
                cell: 1.0,
                dims: [1, 1, 1],
                starts: vec![0, 0],
                entries: Vec::new(),
                valid: 0,
            };
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-9)).collect();
        // Size cells for the occupied volume; point clouds are surface-like,
        // so use the area of the two largest extents.
        let mut sorted = ext.clone();
        sorted.sort_by(f64::total_cmp);
        let area = sorted[1] * sorted[2];
        let mut cell = (area * per_cell / valid as f64).sqrt().max(1e-6);
        let max_dim = 96.0;
        for e in &ext {
            cell = cell.max(e / max_dim);
        }
        let dims = [
            (ext[0] / cell).floor() as usize + 1,
            (ext[1] / cell).floor() as usize + 1,
            (ext[2] / cell).floor() as usize + 1,
        ];
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncell + 1];
        let cell_of = |p: &[f64; 3]| -> usize {
            let c: Vec<usize> = (0..3)
                .map(|a| (((p[a] - lo[a]) / cell).floor() as usize).min(dims[a] - 1))
                .collect();
            (c[2] * dims[1] + c[1]) * dims[0] + c[0]
        };
        let cells: Vec<Option<usize>> = targets
            .iter()
            .map(|p| is_valid(p).then(|| cell_of(p)))
            .collect();
        for c in cells.iter().flatten() {
            counts[c + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0; valid];
        for (i, c) in cells.iter().enumerate() {
            if let Some(c) = c {
                entries[fill[*c]] = i;
                fill[*c] += 1;
            }
        }
        Self {
            points: targets.to_vec(),
            origin: lo,
            cell,
            dims,
            starts,
            entries,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.valid
    }

    pub fn is_empty(&self) -> bool {
        self.valid == 0
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    fn cell_coord(&self, p: &[f64; 3]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = ((p[a] - self.origin[a]) / self.cell).floor() as i64;
        }
        c
    }

    fn visit_ring(&self, center: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        let d = [self.dims[0] as i64, self.dims[1] as i64, self.dims[2] as i64];
        let range = |a: usize| (center[a] - r).max(0)..=(center[a] + r).min(d[a] - 1);
        for z in range(2) {
            for y in range(1) {
                let on_shell_zy = (z - center[2]).abs() == r || (y - center[1]).abs() == r;
                if on_shell_zy {
                    for x in range(0) {
                        self.visit_cell(x, y, z, &mut f);
                    }
                } else {
                    for x in [center[0] - r, center[0] + r] {
                        if x >= 0 && x < d[0] && (r > 0 || x == center[0]) {
                            self.visit_cell(x, y, z, &mut f);
                        }
                        if r == 0 {
                            break;
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn visit_cell(&self, x: i64, y: i64, z: i64, f: &mut impl FnMut(usize)) {
        let c = ((z as usize) * self.dims[1] + y as usize) * self.dims[0] + x as usize;
        for &i in &self.entries[self.starts[c]..self.starts[c + 1]] {
            f(i);
        }
    }

    /// Number of rings needed to cover the whole grid from `center`.
    fn max_ring(&self, center: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| center[a].abs().max((self.dims[a] as i64 - 1 - center[a]).abs()))
            .max()
            .unwrap_or(0)
    }

    /// Distance from `q` to the outside of the cube of cells within ring `r`.
    fn covered_radius(&self, q: &[f64; 3], center: [i64; 3], r: i64) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..3 {
            let lo = self.origin[a] + (center[a] - r) as f64 * self.cell;
            let hi = self.origin[a] + (center[a] + r + 1) as f64 * self.cell;
            m = m.min(q[a] - lo).min(hi - q[a]);
        }
        m.max(0.0)
    }

    /// Exact k nearest valid targets, nearest first (ties by index).
    pub fn knn(&self, q: &[f64; 3], k: usize) -> Vec<usize> {
        let k = k.min(self.valid);
        if k == 0 {
            return Vec::new();
        }
        let center = self.cell_coord(q);
        let last = self.max_ring(center);
        let mut cands: Vec<(f64, usize)> = Vec::new();
        let mut r = 0;
        loop {
            self.visit_ring(center, r, |i| cands.push(key(dist2(q, &self.points[i]), i)));
            if cands.len() >= k {
                cands.sort_by(cmp_key);
                cands.truncate(k.max(1));
                let kth = cands[k - 1].0.sqrt();
                if kth < self.covered_radius(q, center, r) || r >= last {
                    break;
                }
            } else if r >= last {
                break;
            }
            r += 1;
        }
        cands.sort_by(cmp_key);
        cands.truncate(k);
        cands.into_iter().map(|(_, i)| i).collect()
    }

    /// Nearest valid target and its distance.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        self.knn(q, 1)
            .first()
            .map(|&i| (i, dist2(q, &self.points[i]).sqrt()))
    }

    /// All valid targets within `radius` of `q`, in ascending index order.
    pub fn within_radius(&self, q: &[f64; 3], radius: f64) -> Vec<usize> {
        if self.valid == 0 {
            return Vec::new();
        }
        let center = self.cell_coord(q);
        let rings = (radius / self.cell).ceil() as i64 + 1;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for r in 0..=rings.min(self.max_ring(center)) {
            self.visit_ring(center, r, |i| {
                if dist2(q, &self.points[i]) <= r2 {
                    out.push(i);
                }
            });
        }
        out.sort_unstable();
        out
    }
}

const KD_LEAF: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree for exact nearest-neighbor queries. Unlike
/// [`GridIndex`] its cost does not grow with the distance of the query
/// from the targets.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    /// Builds the tree over the valid (finite) targets.
    pub fn new(targets: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..targets.len()).filter(|&i| is_valid(&targets[i])).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            Self::build(targets, &mut order, 0, n, &mut nodes);
        }
        Self {
            points: targets.to_vec(),
            order,
            nodes,
        }
    }

    fn build(pts: &[[f64; 3]], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<KdNode>) -> usize {
        let id = nodes.len();
        nodes.push(KdNode::Leaf { start, end });
        if end - start <= KD_LEAF {
            return id;
        }
        let slice = &mut order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(pts[i][a]);
                hi[a] = hi[a].max(pts[i][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        if hi[axis] <= lo[axis] {
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let value = pts[slice[mid]][axis];
        let left = Self::build(pts, order, start, start + mid, nodes);
        let right = Self::build(pts, order, start + mid, end, nodes);
        nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Nearest valid target and its distance (ties by index).
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, q, &mut best);
        Some((best.1, best.0.sqrt()))
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize)) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // points equal to the split value may sit on either side
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
