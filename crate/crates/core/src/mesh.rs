//! Triangle meshes, area-weighted surface sampling, exact surface queries,
//! and the parametric object library used by the scene generator.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arr, dist2, v3};
use crate::rng;

/// Number of surface samples used for symmetry discovery and metrics.
pub const DEFAULT_SAMPLES: usize = 2048;
/// Seed for the precomputed surface samples.
pub const DEFAULT_SAMPLE_SEED: u64 = 0x5eed;

/// Triangle mesh in its object frame (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub surface_samples: Vec<[f64; 3]>,
}

impl Mesh {
    /// Builds a mesh and precomputes [`DEFAULT_SAMPLES`] surface samples.
    pub fn new(name: impl Into<String>, vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Mesh {
            name: name.into(),
            vertices,
            faces,
            surface_samples: Vec::new(),
        };
        mesh.validate()?;
        mesh.surface_samples = mesh.sample_surface(DEFAULT_SAMPLES, DEFAULT_SAMPLE_SEED);
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices or faces".into()));
        }
        let n = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!("face {f:?} indexes past {n} vertices")));
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        if self.total_area() <= 0.0 {
            return Err(Error::InvalidMesh("zero surface area".into()));
        }
        Ok(())
    }

    fn corners(&self, f: &[usize; 3]) -> [Vector3<f64>; 3] {
        [v3(self.vertices[f[0]]), v3(self.vertices[f[1]]), v3(self.vertices[f[2]])]
    }

    pub fn face_areas(&self) -> Vec<f64> {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = self.corners(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Unit normal of each face following its winding (zero for degenerate faces).
    pub fn face_normals(&self) -> Vec<Vector3<f64>> {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = self.corners(f);
                (b - a).cross(&(c - a)).try_normalize(1e-300).unwrap_or_else(Vector3::zeros)
            })
            .collect()
    }

    /// `count` points drawn uniformly by area, deterministic in `seed`.
    pub fn sample_surface(&self, count: usize, seed: u64) -> Vec<[f64; 3]> {
        self.sample_surface_with_faces(count, seed).0
    }

    /// Like [`Mesh::sample_surface`], also returning the source face of each sample.
    pub fn sample_surface_with_faces(&self, count: usize, seed: u64) -> (Vec<[f64; 3]>, Vec<usize>) {
        let areas = self.face_areas();
        let mut cumulative = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a;
            cumulative.push(acc);
        }
        let mut r = rng::stream(seed, "mesh-samples", 0);
        let mut points = Vec::with_capacity(count);
        let mut faces = Vec::with_capacity(count);
        for _ in 0..count {
            let x = r.gen::<f64>() * acc;
            let fi = cumulative.partition_point(|&c| c < x).min(areas.len() - 1);
            let [a, b, c] = self.corners(&self.faces[fi]);
            let (r1, r2): (f64, f64) = (r.gen(), r.gen());
            let s = r1.sqrt();
            let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
            points.push(arr(&p));
            faces.push(fi);
        }
        (points, faces)
    }

    /// Exact centroid of the surface under uniform area density.
    pub fn surface_centroid(&self) -> [f64; 3] {
        let mut c = Vector3::zeros();
        let mut total = 0.0;
        for (f, area) in self.faces.iter().zip(self.face_areas()) {
            let [a, b, cc] = self.corners(f);
            c += (a + b + cc) * (area / 3.0);
            total += area;
        }
        arr(&(c / total))
    }

    /// Exact area-weighted covariance of the surface about its centroid.
    pub fn surface_covariance(&self) -> Matrix3<f64> {
        let centroid = v3(self.surface_centroid());
        let mut m = Matrix3::zeros();
        let mut total = 0.0;
        for (f, area) in self.faces.iter().zip(self.face_areas()) {
            let [a, b, c] = self.corners(f);
            let (a, b, c) = (a - centroid, b - centroid, c - centroid);
            let s = a + b + c;
            m += (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose())
                * (area / 12.0);
            total += area;
        }
        m / total
    }

    /// Maximum distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                best = best.max(dist2(a, b));
            }
        }
        best.sqrt()
    }

    /// Rank of the vertex spread (number of non-negligible principal extents).
    pub fn spread_rank(&self) -> usize {
        let c = crate::geometry::centroid(&self.vertices);
        let mut cov = Matrix3::zeros();
        for p in &self.vertices {
            let d = v3(*p) - v3(c);
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return 0;
        }
        eig.eigenvalues.iter().filter(|&&l| l > max * 1e-10).count()
    }

    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Mesh> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| arr(&(rotation * v3(*p) + translation)))
            .collect();
        Mesh::new(self.name.clone(), vertices, self.faces.clone())
    }

    /// Same geometry shifted so its surface centroid is the origin.
    pub fn centered(self) -> Result<Mesh> {
        let c = v3(self.surface_centroid());
        let vertices = self.vertices.iter().map(|p| arr(&(v3(*p) - c))).collect();
        Mesh::new(self.name, vertices, self.faces)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Bounding-volume hierarchy over the mesh triangles for repeated
/// point-to-surface distance queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    tris: Vec<[Vector3<f64>; 3]>,
    nodes: Vec<BvhNode>,
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: [f64; 3],
    hi: [f64; 3],
    /// Leaf: triangle range `[start, start + count)`. Inner: children at
    /// `start` and `start + 1` when `count == 0`.
    start: usize,
    count: usize,
}

const BVH_LEAF: usize = 4;

fn tri_bounds(tris: &[[Vector3<f64>; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for t in tris {
        for v in t {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
    }
    (lo, hi)
}

fn box_dist2(lo: &[f64; 3], hi: &[f64; 3], p: &Vector3<f64>) -> f64 {
    let mut lb = 0.0;
    for a in 0..3 {
        let d = (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0);
        lb += d * d;
    }
    lb
}

impl SurfaceIndex {
    pub fn new(mesh: &Mesh) -> Self {
        let mut tris: Vec<_> = mesh.faces.iter().map(|f| mesh.corners(f)).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / BVH_LEAF + 1);
        let (lo, hi) = tri_bounds(&tris);
        nodes.push(BvhNode { lo, hi, start: 0, count: tris.len() });
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let (start, count) = (nodes[n].start, nodes[n].count);
            if count <= BVH_LEAF {
                continue;
            }
            let slice = &mut tris[start..start + count];
            let centroid = |t: &[Vector3<f64>; 3]| (t[0] + t[1] + t[2]) / 3.0;
            let (clo, chi) = slice.iter().fold(
                ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]),
                |(mut lo, mut hi), t| {
                    let c = centroid(t);
                    for a in 0..3 {
                        lo[a] = lo[a].min(c[a]);
                        hi[a] = hi[a].max(c[a]);
                    }
                    (lo, hi)
                },
            );
            let axis = (0..3).max_by(|&a, &b| (chi[a] - clo[a]).total_cmp(&(chi[b] - clo[b]))).unwrap();
            slice.sort_by(|a, b| centroid(a)[axis].total_cmp(&centroid(b)[axis]));
            let half = count / 2;
            let left = nodes.len();
            for (s, c) in [(start, half), (start + half, count - half)] {
                let (lo, hi) = tri_bounds(&tris[s..s + c]);
                nodes.push(BvhNode { lo, hi, start: s, count: c });
            }
            nodes[n].start = left;
            nodes[n].count = 0;
            stack.push(left);
            stack.push(left + 1);
        }
        Self { tris, nodes }
    }

    /// Distance from `p` to the nearest point of the surface.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack: Vec<(f64, usize)> = Vec::with_capacity(64);
        stack.push((box_dist2(&self.nodes[0].lo, &self.nodes[0].hi, p), 0));
        while let Some((lb, n)) = stack.pop() {
            if lb >= best {
                continue;
            }
            let node = &self.nodes[n];
            if node.count > 0 {
                for t in &self.tris[node.start..node.start + node.count] {
                    let q = closest_point_on_triangle(p, &t[0], &t[1], &t[2]);
                    best = best.min((q - p).norm_squared());
                }
            } else {
                let (a, b) = (node.start, node.start + 1);
                let da = box_dist2(&self.nodes[a].lo, &self.nodes[a].hi, p);
                let db = box_dist2(&self.nodes[b].lo, &self.nodes[b].hi, p);
                // visit the nearer child first
                if da <= db {
                    stack.push((db, b));
                    stack.push((da, a));
                } else {
                    stack.push((da, a));
                    stack.push((db, b));
                }
            }
        }
        best.sqrt()
    }
}

/// Extrudes a counter-clockwise profile in the xy-plane along z over
/// `[-depth/2, depth/2]`. `cap` triangulates the profile (CCW index triples).
fn extrude(name: &str, profile: &[[f64; 2]], cap: &[[usize; 3]], depth: f64) -> Result<Mesh> {
    let n = profile.len();
    let h = depth / 2.0;
    let mut vertices = Vec::with_capacity(2 * n);
    for p in profile {
        vertices.push([p[0], p[1], -h]);
    }
    for p in profile {
        vertices.push([p[0], p[1], h]);
    }
    let mut faces = Vec::new();
    for t in cap {
        faces.push([t[0], t[2], t[1]]);
        faces.push([t[0] + n, t[1] + n, t[2] + n]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, j + n]);
        faces.push([i, j + n, i + n]);
    }
    Mesh::new(name, vertices, faces)?.centered()
}

fn fan(n: usize) -> Vec<[usize; 3]> {
    (1..n - 1).map(|i| [0, i, i + 1]).collect()
}

/// Box with edge lengths `(x, y, z)` centered at the origin.
pub fn cuboid(x: f64, y: f64, z: f64) -> Result<Mesh> {
    let (hx, hy) = (x / 2.0, y / 2.0);
    let profile = [[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]];
    let mut m = extrude("cuboid", &profile, &fan(4), z)?;
    m.name = "cuboid".into();
    Ok(m)
}

/// Prism with a square `side × side` cross-section and length `height` along z.
pub fn square_prism(side: f64, height: f64) -> Result<Mesh> {
    let mut m = cuboid(side, side, height)?;
    m.name = "square_prism".into();
    Ok(m)
}

/// Closed cylinder of `radius` with axis along z, approximated by `segments` sides.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> Result<Mesh> {
    if segments < 3 {
        return Err(Error::InvalidParameter("cylinder needs at least 3 segments".into()));
    }
    let profile: Vec<[f64; 2]> = (0..segments)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    extrude("cylinder", &profile, &fan(segments), height)
}

/// L-shaped clamp: two equal legs of length `leg` and thickness `thickness`
/// in the xy-plane, extruded by `depth` along z.
pub fn l_clamp(leg: f64, thickness: f64, depth: f64) -> Result<Mesh> {
    let (a, t) = (leg, thickness);
    let profile = [[0.0, 0.0], [a, 0.0], [a, t], [t, t], [t, a], [0.0, a]];
    let cap = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5]];
    extrude("l_clamp", &profile, &cap, depth)
}

/// Right prism over a scalene triangle: one mirror plane, no proper rotation.
pub fn wedge(depth: f64) -> Result<Mesh> {
    let profile = [[0.0, 0.0], [0.11, 0.0], [0.03, 0.06]];
    extrude("wedge", &profile, &[[0, 1, 2]], depth)
}

/// Tetrahedron with four distinct edge lengths per face (no symmetries).
pub fn scalene_tetrahedron() -> Result<Mesh> {
    let vertices = vec![
        [0.0, 0.0, 0.0],
        [0.12, 0.0, 0.0],
        [0.035, 0.09, 0.0],
        [0.05, 0.03, 0.075],
    ];
    let faces = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]];
    let mut m = Mesh::new("tetrahedron", vertices, faces)?.centered()?;
    m.name = "tetrahedron".into();
    Ok(m)
}

/// Geodesic sphere from a subdivided octahedron.
pub fn sphere(radius: f64, subdivisions: usize) -> Result<Mesh> {
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |i: usize, j: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = (i.min(j), i.max(j));
            *cache.entry(key).or_insert_with(|| {
                verts.push((verts[i] + verts[j]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.iter().map(|v| arr(&(v * radius))).collect();
    Mesh::new("sphere", vertices, faces)
}

/// The object classes used by the scene generator, indexed by `class_id - 1`.
pub fn object_library() -> Vec<Mesh> {
    vec![
        cuboid(0.16, 0.10, 0.06).expect("cuboid"),
        square_prism(0.07, 0.13).expect("square prism"),
        cylinder(0.04, 0.12, 48).expect("cylinder"),
        l_clamp(0.11, 0.035, 0.05).expect("l-clamp"),
        scalene_tetrahedron().expect("tetrahedron"),
        wedge(0.07).expect("wedge"),
    ]
}

/// Looks up a library object by name.
pub fn library_object(name: &str) -> Option<Mesh> {
    object_library().into_iter().find(|m| m.name == name)
}
