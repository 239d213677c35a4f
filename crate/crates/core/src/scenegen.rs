//! Synthetic multi-view tabletop scenes with ground truth.
//!
//! Objects from the parametric library rest on a table (the world plane
//! `z = 0`) with a random yaw. Cameras sit on a hemisphere around the
//! objects and look at their centroid. Each view is rendered exactly by
//! triangle rasterization with a z-buffer.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axis_angle, v3, CameraIntrinsics, Pose, ViewFrame};
use crate::io;
use crate::knn::GridIndex;
use crate::mesh::{self, Mesh};
use crate::rng;

pub const DEFAULT_WIDTH: usize = 160;
pub const DEFAULT_HEIGHT: usize = 120;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
pub const PLACEMENT_RADIUS: f64 = 0.2;
/// Minimum horizontal gap between object footprints.
pub const CLEARANCE: f64 = 0.005;
const TABLE_HALF_SIZE: f64 = 0.45;
const NEAR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraMode {
    /// A fixed rig: evenly spaced azimuths, 45° elevation, 0.7 m away.
    Fixed,
    /// One camera per azimuthal quadrant with random elevation and distance.
    Quadrant,
    /// The fixed rig whose annotated poses carry deliberate noise.
    Wiggled,
}

impl FromStr for CameraMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "quadrant" => Ok(Self::Quadrant),
            "wiggled" | "wiggle" => Ok(Self::Wiggled),
            other => Err(Error::InvalidParameter(format!("unknown camera mode {other:?}"))),
        }
    }
}

/// A library class with its resting orientation on the table.
#[derive(Debug, Clone)]
pub struct ObjectClass {
    pub class_id: u32,
    pub mesh: Mesh,
    /// Object-frame rotation applied before the random yaw.
    pub rest: Matrix3<f64>,
    pub color: [f64; 3],
    /// Horizontal radius of the rested object around its origin.
    pub footprint: f64,
    /// Height of the object origin above the table when resting.
    pub lift: f64,
}

impl ObjectClass {
    /// World pose of the object resting at `(x, y)` with the given yaw.
    pub fn rest_pose(&self, x: f64, y: f64, yaw: f64) -> Pose {
        Pose {
            rotation: axis_angle(&Vector3::z(), yaw) * self.rest,
            translation: Vector3::new(x, y, self.lift),
        }
    }
}

/// Resting orientations chosen so that each symmetry axis that matters for
/// pose ambiguity points up (the l-clamp stands on both leg ends).
fn rest_rotation(name: &str) -> Matrix3<f64> {
    match name {
        "l_clamp" => {
            let a: Vector3<f64> = Vector3::new(1.0, 1.0, 0.0).normalize();
            let b: Vector3<f64> = Vector3::z();
            let c = a.cross(&b);
            let from = Matrix3::from_columns(&[a, b, c]);
            let to = Matrix3::from_columns(&[-Vector3::<f64>::z(), Vector3::x(), -Vector3::y()]);
            to * from.transpose()
        }
        _ => Matrix3::identity(),
    }
}

const COLORS: [[f64; 3]; 6] = [
    [0.85, 0.25, 0.2],
    [0.25, 0.75, 0.3],
    [0.2, 0.35, 0.85],
    [0.9, 0.8, 0.2],
    [0.8, 0.3, 0.8],
    [0.2, 0.8, 0.8],
];
const TABLE_COLOR: [f64; 3] = [0.55, 0.5, 0.45];

/// The scene classes; `catalog()[i].class_id == i + 1`.
pub fn catalog() -> &'static [ObjectClass] {
    static CATALOG: OnceLock<Vec<ObjectClass>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        mesh::object_library()
            .into_iter()
            .enumerate()
            .map(|(i, mesh)| {
                let rest = rest_rotation(&mesh.name);
                let rotated: Vec<Vector3<f64>> = mesh.vertices.iter().map(|p| rest * v3(*p)).collect();
                let footprint = rotated.iter().map(|p| p.xy().norm()).fold(0.0, f64::max);
                let lift = -rotated.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
                ObjectClass {
                    class_id: i as u32 + 1,
                    mesh,
                    rest,
                    color: COLORS[i % COLORS.len()],
                    footprint,
                    lift,
                }
            })
            .collect()
    })
}

pub fn class(class_id: u32) -> Result<&'static ObjectClass> {
    catalog()
        .get((class_id as usize).wrapping_sub(1))
        .ok_or_else(|| Error::InvalidParameter(format!("unknown class id {class_id}")))
}

pub fn num_classes() -> usize {
    catalog().len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_id: u32,
    /// Fixed world pose; sampled by rejection when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: u64,
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
    pub views: usize,
    pub mode: CameraMode,
    /// Annotation noise of wiggled cameras: per-axis rotation (radians) and
    /// translation (meters) standard deviations.
    pub sigma_rot: f64,
    pub sigma_trans: f64,
    pub intrinsics: CameraIntrinsics,
    /// Objects are placed inside this radius around the table center.
    #[serde(default = "default_placement_radius")]
    pub placement_radius: f64,
    /// Explicit true camera poses (camera to world), overriding `mode`'s rig.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<Pose>>,
}

fn default_placement_radius() -> f64 {
    PLACEMENT_RADIUS
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(160.0, 160.0, 79.5, 59.5, DEFAULT_WIDTH, DEFAULT_HEIGHT).expect("valid intrinsics")
}

impl SceneSpec {
    /// Scene `id` with 3 to 5 distinct random classes.
    pub fn random(seed: u64, id: u64, views: usize, mode: CameraMode) -> Self {
        let mut r = rng::stream(seed, "scene-objects", id);
        let count = r.gen_range(3..=5).min(num_classes());
        let mut ids: Vec<u32> = (1..=num_classes() as u32).collect();
        // partial Fisher-Yates
        for i in 0..count {
            let j = r.gen_range(i..ids.len());
            ids.swap(i, j);
        }
        let mut chosen = ids[..count].to_vec();
        chosen.sort_unstable();
        Self {
            id,
            seed,
            objects: chosen.into_iter().map(|class_id| ObjectSpec { class_id, pose: None }).collect(),
            views,
            mode,
            sigma_rot: 1f64.to_radians(),
            sigma_trans: 0.005,
            intrinsics: default_intrinsics(),
            placement_radius: PLACEMENT_RADIUS,
            cameras: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::NoViews);
        }
        if self.objects.is_empty() {
            return Err(Error::InvalidParameter("scene needs at least one object".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.objects {
            class(o.class_id)?;
            if !seen.insert(o.class_id) {
                return Err(Error::InvalidParameter(format!("class {} appears twice", o.class_id)));
            }
        }
        if self.mode == CameraMode::Quadrant && self.views > 4 && self.cameras.is_none() {
            return Err(Error::InvalidParameter("quadrant mode supports at most 4 views".into()));
        }
        if !(self.sigma_rot >= 0.0 && self.sigma_trans >= 0.0 && self.placement_radius >= 0.0) {
            return Err(Error::InvalidParameter("noise and placement radius must be non-negative".into()));
        }
        if let Some(c) = &self.cameras {
            if c.len() != self.views {
                return Err(Error::InvalidParameter("one explicit camera per view".into()));
            }
        }
        self.intrinsics.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub class_id: u32,
    /// Object to world.
    pub pose: Pose,
}

/// A rendered scene. `views[k].camera_pose` is the annotated pose used by the
/// pipeline; `true_camera_poses[k]` is where the camera really was.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub spec: SceneSpec,
    pub objects: Vec<PlacedObject>,
    pub views: Vec<ViewFrame>,
    pub labels: Vec<Vec<u8>>,
    pub true_camera_poses: Vec<Pose>,
}

impl SceneBundle {
    pub fn id(&self) -> u64 {
        self.spec.id
    }

    /// Ground-truth pose of object `i` in the first camera's frame.
    pub fn gt_pose(&self, i: usize) -> Pose {
        self.true_camera_poses[0].invert().compose(&self.objects[i].pose)
    }

    pub fn object_index(&self, class_id: u32) -> Option<usize> {
        self.objects.iter().position(|o| o.class_id == class_id)
    }

    /// Class label of every point of a cloud produced by `merge_views`.
    pub fn point_labels(&self, views: &[usize], source_view: &[u32], source_pixel: &[u32]) -> Vec<u8> {
        source_view
            .iter()
            .zip(source_pixel)
            .map(|(&v, &p)| self.labels[views[v as usize]][p as usize])
            .collect()
    }

    /// The bundle restricted to the given views, in that order.
    pub fn subset(&self, views: &[usize]) -> SceneBundle {
        SceneBundle {
            spec: SceneSpec {
                views: views.len(),
                cameras: self.spec.cameras.as_ref().map(|c| views.iter().map(|&k| c[k]).collect()),
                ..self.spec.clone()
            },
            objects: self.objects.clone(),
            views: views.iter().map(|&k| self.views[k].clone()).collect(),
            labels: views.iter().map(|&k| self.labels[k].clone()).collect(),
            true_camera_poses: views.iter().map(|&k| self.true_camera_poses[k]).collect(),
        }
    }
}

/// Camera-to-world pose of a camera at `eye` looking at `target` with the
/// image y axis pointing down towards the table.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let x = z.cross(&Vector3::z()).try_normalize(1e-9).unwrap_or_else(Vector3::x);
    let y = z.cross(&x);
    Pose {
        rotation: Matrix3::from_columns(&[x, y, z]),
        translation: eye,
    }
}

/// Camera on the hemisphere of radius `dist` around `target`.
pub fn hemisphere_camera(target: Vector3<f64>, azimuth: f64, elevation: f64, dist: f64) -> Pose {
    let dir = Vector3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
    look_at(target + dir * dist, target)
}

fn place_objects(spec: &SceneSpec) -> Result<Vec<PlacedObject>> {
    let mut r = rng::stream(spec.seed, "scene-placement", spec.id);
    let fixed: Vec<(PlacedObject, f64)> = spec
        .objects
        .iter()
        .filter_map(|o| o.pose.map(|pose| (PlacedObject { class_id: o.class_id, pose }, class(o.class_id).unwrap().footprint)))
        .collect();
    let mut placed = fixed.clone();
    let mut attempts = 0;
    let mut pending: Vec<&ObjectSpec> = spec.objects.iter().filter(|o| o.pose.is_none()).collect();
    pending.reverse();
    // objects are placed one by one; a layout that leaves no room for the
    // next object is discarded after RESTART_AFTER misses
    const RESTART_AFTER: usize = 500;
    let mut misses = 0;
    while let Some(o) = pending.last() {
        let c = class(o.class_id)?;
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::CannotPlaceObjects(MAX_PLACEMENT_ATTEMPTS));
        }
        let (rad, ang, yaw): (f64, f64, f64) = (r.gen(), r.gen_range(0.0..std::f64::consts::TAU), r.gen_range(0.0..std::f64::consts::TAU));
        let rad = spec.placement_radius * rad.sqrt();
        let pose = c.rest_pose(rad * ang.cos(), rad * ang.sin(), yaw);
        let free = placed
            .iter()
            .all(|(p, f)| (p.pose.translation.xy() - pose.translation.xy()).norm() > f + c.footprint + CLEARANCE);
        if free {
            placed.push((PlacedObject { class_id: o.class_id, pose }, c.footprint));
            pending.pop();
            misses = 0;
        } else {
            misses += 1;
            if misses == RESTART_AFTER {
                pending = spec.objects.iter().filter(|o| o.pose.is_none()).rev().collect();
                placed = fixed.clone();
                misses = 0;
            }
        }
    }
    // keep the requested object order
    Ok(spec
        .objects
        .iter()
        .map(|o| placed.iter().find(|(p, _)| p.class_id == o.class_id).unwrap().0)
        .collect())
}

fn aim_point(objects: &[PlacedObject]) -> Vector3<f64> {
    let n = objects.len() as f64;
    let xy = objects.iter().fold(nalgebra::Vector2::zeros(), |a, o| a + o.pose.translation.xy()) / n;
    Vector3::new(xy.x, xy.y, 0.03)
}

fn true_cameras(spec: &SceneSpec, objects: &[PlacedObject]) -> Vec<Pose> {
    if let Some(c) = &spec.cameras {
        return c.clone();
    }
    let aim = aim_point(objects);
    let n = spec.views as f64;
    let fixed = |k: usize| hemisphere_camera(aim, std::f64::consts::FRAC_PI_4 + std::f64::consts::TAU * k as f64 / n, 45f64.to_radians(), 0.7);
    match spec.mode {
        CameraMode::Fixed | CameraMode::Wiggled => (0..spec.views).map(fixed).collect(),
        CameraMode::Quadrant => {
            let mut r = rng::stream(spec.seed, "scene-cameras", spec.id);
            (0..spec.views)
                .map(|k| {
                    let az = (k as f64 + r.gen::<f64>()) * std::f64::consts::FRAC_PI_2;
                    let el = r.gen_range(35f64..60.0).to_radians();
                    let dist = r.gen_range(0.6..0.8);
                    hemisphere_camera(aim, az, el, dist)
                })
                .collect()
        }
    }
}

fn annotated_cameras(spec: &SceneSpec, truth: &[Pose]) -> Vec<Pose> {
    if spec.mode != CameraMode::Wiggled || (spec.sigma_rot == 0.0 && spec.sigma_trans == 0.0) {
        return truth.to_vec();
    }
    let mut r = rng::stream(spec.seed, "scene-wiggle", spec.id);
    truth
        .iter()
        .map(|t| {
            let mut g = || r.sample::<f64, _>(StandardNormal);
            let w = Vector3::new(g(), g(), g()) * spec.sigma_rot;
            let d = Vector3::new(g(), g(), g()) * spec.sigma_trans;
            t.compose(&Pose {
                rotation: axis_angle(&w, w.norm()),
                translation: d,
            })
        })
        .collect()
}

/// One mesh placed in the world for rendering.
#[derive(Debug, Clone, Copy)]
pub struct RenderItem<'a> {
    pub mesh: &'a Mesh,
    /// Object to world.
    pub pose: Pose,
    pub label: u8,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Depth along the optical axis in meters, `0` where nothing was hit.
    pub depth: Vec<f64>,
    pub labels: Vec<u8>,
    pub rgb: Vec<[f64; 3]>,
    /// Index of the winning item per pixel.
    pub item: Vec<Option<u32>>,
}

fn table_mesh() -> &'static Mesh {
    static TABLE: OnceLock<Mesh> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 6;
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let s = |k: usize| -TABLE_HALF_SIZE + 2.0 * TABLE_HALF_SIZE * k as f64 / n as f64;
                vertices.push([s(i), s(j), 0.0]);
            }
        }
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let a = j * (n + 1) + i;
                faces.push([a, a + 1, a + n + 2]);
                faces.push([a, a + n + 2, a + n + 1]);
            }
        }
        Mesh::new("table", vertices, faces).expect("table mesh")
    })
}

fn light_direction() -> Vector3<f64> {
    Vector3::new(0.4, 0.3, 1.0).normalize()
}

/// Z-buffer rasterization of triangle meshes seen by a camera with the given
/// camera-to-world pose. Depth is exact along each pixel-center ray.
pub fn render_depth(items: &[RenderItem], camera: &Pose, k: &CameraIntrinsics) -> Result<RenderOutput> {
    k.validate()?;
    let (w, h) = (k.width, k.height);
    let n = w * h;
    let mut out = RenderOutput {
        depth: vec![f64::INFINITY; n],
        labels: vec![0; n],
        rgb: vec![[0.0; 3]; n],
        item: vec![None; n],
    };
    let world_to_cam = camera.invert();
    let eye = camera.translation;
    let light = light_direction();
    for (idx, it) in items.iter().enumerate() {
        let to_cam = world_to_cam.compose(&it.pose);
        let cam: Vec<Vector3<f64>> = it.mesh.vertices.iter().map(|p| to_cam.apply(&v3(*p))).collect();
        for f in &it.mesh.faces {
            let [a, b, c] = [cam[f[0]], cam[f[1]], cam[f[2]]];
            if a.z < NEAR || b.z < NEAR || c.z < NEAR {
                continue;
            }
            let normal = (b - a).cross(&(c - a));
            if normal.norm() == 0.0 {
                continue;
            }
            let proj = |p: &Vector3<f64>| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
            let (pa, pb, pc) = (proj(&a), proj(&b), proj(&c));
            let area = (pb.0 - pa.0) * (pc.1 - pa.1) - (pb.1 - pa.1) * (pc.0 - pa.0);
            if area.abs() < 1e-12 {
                continue;
            }
            let x0 = pa.0.min(pb.0).min(pc.0).ceil().max(0.0) as usize;
            let y0 = pa.1.min(pb.1).min(pc.1).ceil().max(0.0) as usize;
            let x1 = pa.0.max(pb.0).max(pc.0).floor().min(w as f64 - 1.0);
            let y1 = pa.1.max(pb.1).max(pc.1).floor().min(h as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            let (x1, y1) = (x1 as usize, y1 as usize);
            // shade with the world normal flipped towards the camera
            let mut nw = camera.rotation * normal.normalize();
            let centroid = camera.apply(&((a + b + c) / 3.0));
            if nw.dot(&(eye - centroid)) < 0.0 {
                nw = -nw;
            }
            let shade = 0.3 + 0.7 * nw.dot(&light).max(0.0);
            let color = [it.color[0] * shade, it.color[1] * shade, it.color[2] * shade];
            let plane = normal.dot(&a);
            let edge = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (fx, fy) = (x as f64, y as f64);
                    let w0 = edge(pb, pc, fx, fy) / area;
                    let w1 = edge(pc, pa, fx, fy) / area;
                    let w2 = edge(pa, pb, fx, fy) / area;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    let ray = Vector3::new((fx - k.cx) / k.fx, (fy - k.cy) / k.fy, 1.0);
                    let denom = normal.dot(&ray);
                    if denom == 0.0 {
                        continue;
                    }
                    let z = plane / denom;
                    let p = y * w + x;
                    if z > NEAR && z < out.depth[p] {
                        out.depth[p] = z;
                        out.labels[p] = it.label;
                        out.rgb[p] = color;
                        out.item[p] = Some(idx as u32);
                    }
                }
            }
        }
    }
    for d in &mut out.depth {
        if !d.is_finite() {
            *d = 0.0;
        }
    }
    Ok(out)
}

fn quantize(mut r: RenderOutput) -> RenderOutput {
    for d in &mut r.depth {
        *d = *d as f32 as f64;
    }
    for c in &mut r.rgb {
        for v in c.iter_mut() {
            *v = (*v * 255.0).round().clamp(0.0, 255.0) / 255.0;
        }
    }
    r
}

fn scene_items(objects: &[PlacedObject], table: bool) -> Vec<RenderItem<'static>> {
    let mut items: Vec<RenderItem<'static>> = objects
        .iter()
        .map(|o| {
            let c = class(o.class_id).unwrap();
            RenderItem {
                mesh: &c.mesh,
                pose: o.pose,
                label: o.class_id as u8,
                color: c.color,
            }
        })
        .collect();
    if table {
        items.push(RenderItem {
            mesh: table_mesh(),
            pose: Pose::identity(),
            label: 0,
            color: TABLE_COLOR,
        });
    }
    items
}

/// Places the objects, sets up the cameras, and renders every view.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneBundle> {
    spec.validate()?;
    let objects = place_objects(spec)?;
    let truth = true_cameras(spec, &objects);
    let annotated = annotated_cameras(spec, &truth);
    let items = scene_items(&objects, true);
    let mut views = Vec::with_capacity(spec.views);
    let mut labels = Vec::with_capacity(spec.views);
    for (t, a) in truth.iter().zip(&annotated) {
        let r = quantize(render_depth(&items, t, &spec.intrinsics)?);
        views.push(ViewFrame {
            rgb: r.rgb,
            depth: r.depth,
            intrinsics: spec.intrinsics,
            camera_pose: *a,
        });
        labels.push(r.labels);
    }
    Ok(SceneBundle {
        spec: spec.clone(),
        objects,
        views,
        labels,
        true_camera_poses: truth,
    })
}

/// Generates scenes `ids` in parallel; the result is ordered by id.
pub fn generate_scenes(seed: u64, ids: std::ops::Range<u64>, views: usize, mode: CameraMode) -> Result<Vec<SceneBundle>> {
    ids.into_par_iter()
        .map(|id| generate_scene(&SceneSpec::random(seed, id, views, mode)))
        .collect()
}

/// Surface-sample indices of `target` seen through the visible pixels of
/// `render`, for the camera `camera`.
fn seen_samples(render: &RenderOutput, target: usize, item: &RenderItem, camera: &Pose, k: &CameraIntrinsics, index: &GridIndex, seen: &mut [bool]) {
    let to_object = item.pose.invert().compose(camera);
    for (p, who) in render.item.iter().enumerate() {
        if *who == Some(target as u32) {
            let (u, v) = ((p % k.width) as f64, (p / k.width) as f64);
            let q = to_object.apply_arr(k.backproject(u, v, render.depth[p]));
            if let Some((i, _)) = index.nearest(&q) {
                seen[i] = true;
            }
        }
    }
}

/// Fraction of `items[target]`'s visible surface hidden by the other items,
/// over the given cameras. Visible pixels are pooled across views by mapping
/// them to the nearest of the mesh's surface samples. An object that no
/// camera can see even alone counts as fully hidden.
pub fn occlusion_fraction_of(items: &[RenderItem], target: usize, cameras: &[(Pose, CameraIntrinsics)]) -> Result<f64> {
    let it = items[target];
    let index = GridIndex::new(&it.mesh.surface_samples);
    let n = it.mesh.surface_samples.len();
    let (mut with, mut alone) = (vec![false; n], vec![false; n]);
    for (cam, k) in cameras {
        let full = render_depth(items, cam, k)?;
        seen_samples(&full, target, &it, cam, k, &index, &mut with);
        let single = render_depth(std::slice::from_ref(&it), cam, k)?;
        seen_samples(&single, 0, &it, cam, k, &index, &mut alone);
    }
    let alone_count = alone.iter().filter(|s| **s).count();
    if alone_count == 0 {
        return Ok(1.0);
    }
    let both = with.iter().zip(&alone).filter(|(a, b)| **a && **b).count();
    Ok(1.0 - both as f64 / alone_count as f64)
}

/// Occlusion fraction of object `object` of a bundle over the given views,
/// using the true camera poses.
pub fn occlusion_fraction(bundle: &SceneBundle, object: usize, views: &[usize]) -> Result<f64> {
    let items = scene_items(&bundle.objects, true);
    let cams: Vec<_> = views.iter().map(|&k| (bundle.true_camera_poses[k], bundle.views[k].intrinsics)).collect();
    occlusion_fraction_of(&items, object, &cams)
}

/// A scene in which one small object is hidden at least `min_fraction` in
/// the first view by two tall objects standing between it and a low first
/// camera; the remaining cameras look from the other sides. Returns the
/// bundle and the index of the hidden object.
pub fn occluded_scene(seed: u64, id: u64, views: usize, min_fraction: f64) -> Result<(SceneBundle, usize)> {
    if views == 0 {
        return Err(Error::NoViews);
    }
    let targets = [5u32, 6, 4, 1];
    let tall = [2u32, 3];
    for attempt in 0..200u64 {
        let mut r = rng::stream(seed, "occluded-scene", id * 1000 + attempt);
        let target = class(targets[r.gen_range(0..targets.len())])?;
        let az: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let toward = nalgebra::Vector2::new(az.cos(), az.sin());
        let side = nalgebra::Vector2::new(-toward.y, toward.x);
        let t_xy = nalgebra::Vector2::new(r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05));
        let mut objects = vec![ObjectSpec {
            class_id: target.class_id,
            pose: Some(target.rest_pose(t_xy.x, t_xy.y, r.gen_range(0.0..std::f64::consts::TAU))),
        }];
        let (a, b) = (class(tall[0])?, class(tall[1])?);
        let gap = r.gen_range(0.0..0.01);
        let front = target.footprint + a.footprint.max(b.footprint) + CLEARANCE + gap;
        let half = (a.footprint + b.footprint + CLEARANCE) / 2.0;
        for (c, s) in [(a, half), (b, -half)] {
            let xy = t_xy + toward * front + side * s;
            objects.push(ObjectSpec {
                class_id: c.class_id,
                pose: Some(c.rest_pose(xy.x, xy.y, r.gen_range(0.0..std::f64::consts::TAU))),
            });
        }
        let aim = Vector3::new(t_xy.x, t_xy.y, 0.03);
        let mut cameras = vec![hemisphere_camera(aim, az, r.gen_range(18f64..26.0).to_radians(), 0.7)];
        for k in 1..views {
            let a = az + std::f64::consts::TAU * k as f64 / views as f64;
            cameras.push(hemisphere_camera(aim, a, r.gen_range(40f64..55.0).to_radians(), 0.7));
        }
        let spec = SceneSpec {
            id,
            seed,
            objects,
            views,
            mode: CameraMode::Fixed,
            sigma_rot: 0.0,
            sigma_trans: 0.0,
            intrinsics: default_intrinsics(),
            placement_radius: PLACEMENT_RADIUS,
            cameras: Some(cameras),
        };
        let bundle = generate_scene(&spec)?;
        if occlusion_fraction(&bundle, 0, &[0])? >= min_fraction {
            return Ok((bundle, 0));
        }
    }
    Err(Error::CannotPlaceObjects(200))
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    intrinsics: CameraIntrinsics,
    /// Annotated camera-to-world pose.
    pose: Pose,
    true_pose: Pose,
}

#[derive(Serialize, Deserialize)]
struct CamerasFile {
    meta: serde_json::Value,
    cameras: Vec<CameraRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct GtRecord {
    pub class_id: u32,
    pub name: String,
    /// Object to world.
    pub world: Pose,
    /// Object to the first camera.
    pub view1: Pose,
}

#[derive(Serialize, Deserialize)]
pub struct GtFile {
    pub meta: serde_json::Value,
    pub scene: u64,
    pub objects: Vec<GtRecord>,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    meta: serde_json::Value,
    spec: SceneSpec,
}

pub fn scene_dir_name(id: u64) -> String {
    format!("scene_{id:05}")
}

fn to_u8(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

impl SceneBundle {
    /// Writes the bundle into `root/scene_<id>/` and returns that directory.
    pub fn save(&self, root: &Path, meta: &serde_json::Value) -> Result<PathBuf> {
        let dir = root.join(scene_dir_name(self.id()));
        for (k, view) in self.views.iter().enumerate() {
            let cloud = crate::geometry::depth_to_cloud(view);
            let (points, colors) = match cloud {
                Ok(c) => {
                    let cols: Vec<[u8; 3]> = c.colors.unwrap().iter().map(|c| [to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]).collect();
                    (c.points, cols)
                }
                Err(Error::EmptyCloud) => (Vec::new(), Vec::new()),
                Err(e) => return Err(e),
            };
            let comments = vec![format!("scene {} view {k} camera frame", self.id()), format!("meta {meta}")];
            io::write_cloud_ply(&dir.join(format!("view_{k}.ply")), &points, Some(&colors), &comments)?;
            let (w, h) = (view.width(), view.height());
            let depth: Vec<u8> = view.depth.iter().flat_map(|d| (*d as f32).to_le_bytes()).collect();
            io::write_raster(&dir.join(format!("view_{k}_depth.bin")), w, h, "f32", &depth, meta)?;
            io::write_raster(&dir.join(format!("view_{k}_labels.bin")), w, h, "u8", &self.labels[k], meta)?;
            let rgb: Vec<u8> = view.rgb.iter().flat_map(|c| [to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]).collect();
            io::write_raster(&dir.join(format!("view_{k}_rgb.bin")), w, h, "u8x3", &rgb, meta)?;
        }
        let cameras = CamerasFile {
            meta: meta.clone(),
            cameras: self
                .views
                .iter()
                .zip(&self.true_camera_poses)
                .map(|(v, t)| CameraRecord {
                    intrinsics: v.intrinsics,
                    pose: v.camera_pose,
                    true_pose: *t,
                })
                .collect(),
        };
        io::write_json(&dir.join("cameras.json"), &cameras)?;
        let gt = GtFile {
            meta: meta.clone(),
            scene: self.id(),
            objects: self
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| GtRecord {
                    class_id: o.class_id,
                    name: class(o.class_id).map(|c| c.mesh.name.clone()).unwrap_or_default(),
                    world: o.pose,
                    view1: self.gt_pose(i),
                })
                .collect(),
        };
        io::write_json(&dir.join("gt_poses.json"), &gt)?;
        io::write_json(
            &dir.join("scene.json"),
            &SceneFile {
                meta: meta.clone(),
                spec: self.spec.clone(),
            },
        )?;
        Ok(dir)
    }

    /// Loads a bundle from its directory, or from the path of its
    /// `scene.json`.
    pub fn load(path: &Path) -> Result<SceneBundle> {
        let dir = if path.is_file() { path.parent().unwrap_or(Path::new(".")) } else { path };
        let scene: SceneFile = io::read_json(&dir.join("scene.json"))?;
        let cams: CamerasFile = io::read_json(&dir.join("cameras.json"))?;
        let gt: GtFile = io::read_json(&dir.join("gt_poses.json"))?;
        let mut views = Vec::new();
        let mut labels = Vec::new();
        for (k, cam) in cams.cameras.iter().enumerate() {
            let n = cam.intrinsics.pixel_count();
            let check = |w: usize, h: usize, p: &Path| {
                if w * h == n {
                    Ok(())
                } else {
                    Err(Error::format(p, "raster size does not match intrinsics"))
                }
            };
            let dp = dir.join(format!("view_{k}_depth.bin"));
            let (w, h, body) = io::read_raster(&dp, "f32", 4)?;
            check(w, h, &dp)?;
            let depth = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
            let lp = dir.join(format!("view_{k}_labels.bin"));
            let (w, h, lab) = io::read_raster(&lp, "u8", 1)?;
            check(w, h, &lp)?;
            let cp = dir.join(format!("view_{k}_rgb.bin"));
            let (w, h, body) = io::read_raster(&cp, "u8x3", 3)?;
            check(w, h, &cp)?;
            let rgb = body.chunks_exact(3).map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]).collect();
            let view = ViewFrame {
                rgb,
                depth,
                intrinsics: cam.intrinsics,
                camera_pose: cam.pose,
            };
            view.validate()?;
            views.push(view);
            labels.push(lab);
        }
        Ok(SceneBundle {
            spec: scene.spec,
            objects: gt.objects.iter().map(|o| PlacedObject { class_id: o.class_id, pose: o.world }).collect(),
            views,
            labels,
            true_camera_poses: cams.cameras.iter().map(|c| c.true_pose).collect(),
        })
    }
}

/// Scene directories under `root`, sorted by name.
pub fn list_scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for e in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let e = e.map_err(|e| Error::io(root, e))?;
        let p = e.path();
        if p.is_dir() && p.join("scene.json").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn load_scenes(root: &Path) -> Result<Vec<SceneBundle>> {
    list_scene_dirs(root)?.par_iter().map(|d| SceneBundle::load(d)).collect()
}
