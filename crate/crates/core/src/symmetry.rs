//! Rotational symmetry discovery.
//!
//! Candidate rotations about the object's surface centroid are refined by
//! gradient descent on the closest-point average distance (ADD-S) between the
//! rotated surface samples and the mesh surface. Rotations whose residual
//! falls below `tau_frac * diameter` are symmetries. An axis about which
//! every tested angle passes is a continuous symmetry and is discretized.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pose::{axis_angle, is_rotation, matrix_to_rows, rotation_angle, rotation_distance, rows_to_matrix};
use crate::geometry::{v3, Pose};
use crate::mesh::{Mesh, SurfaceIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryKind {
    Discrete,
    DiscretizedContinuous,
}

/// Finite set of proper rotations (about `center`) that leave an object's
/// geometry unchanged. Index 0 is always the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SymmetryJson", try_from = "SymmetryJson")]
pub struct SymmetrySet {
    pub object: String,
    pub transforms: Vec<Matrix3<f64>>,
    pub kinds: Vec<SymmetryKind>,
    /// Rotation center in the object frame.
    pub center: [f64; 3],
    /// Axis of a detected continuous symmetry, if any.
    pub continuous_axis: Option<[f64; 3]>,
}

impl SymmetrySet {
    pub fn identity_only(object: impl Into<String>, center: [f64; 3]) -> Self {
        Self {
            object: object.into(),
            transforms: vec![Matrix3::identity()],
            kinds: vec![SymmetryKind::Discrete],
            center,
            continuous_axis: None,
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// More than the identity.
    pub fn is_symmetric(&self) -> bool {
        self.transforms.len() > 1
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous_axis.is_some()
    }

    /// Object-frame rigid transform of symmetry `i`: `x -> S (x - c) + c`.
    pub fn pose(&self, i: usize) -> Pose {
        let s = self.transforms[i];
        let c = v3(self.center);
        Pose {
            rotation: s,
            translation: c - s * c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() || self.kinds.len() != self.transforms.len() {
            return Err(Error::InvalidParameter("symmetry set shape mismatch".into()));
        }
        if (self.transforms[0] - Matrix3::identity()).abs().max() > 1e-9 {
            return Err(Error::InvalidParameter("symmetry set must start with identity".into()));
        }
        for (i, s) in self.transforms.iter().enumerate() {
            if !is_rotation(s, 1e-9) {
                return Err(Error::InvalidParameter(format!("transform {i} is not a rotation")));
            }
            for t in &self.transforms[..i] {
                if rotation_distance(s, t) <= 1e-3 {
                    return Err(Error::InvalidParameter(format!("transform {i} is a duplicate")));
                }
            }
        }
        Ok(())
    }

    /// Smallest geodesic distance between `a` and `b · S` over the set.
    pub fn quotient_rotation_error(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        self.transforms
            .iter()
            .map(|s| rotation_distance(a, &(b * s)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SymmetryJson::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: SymmetryJson = serde_json::from_str(text)?;
        let set = SymmetrySet::try_from(json)?;
        set.validate()?;
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct SymmetryJson {
    object: String,
    transforms: Vec<[[f64; 3]; 3]>,
    kinds: Vec<SymmetryKind>,
    #[serde(default)]
    center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    continuous_axis: Option<[f64; 3]>,
}

impl From<&SymmetrySet> for SymmetryJson {
    fn from(s: &SymmetrySet) -> Self {
        Self {
            object: s.object.clone(),
            transforms: s.transforms.iter().map(matrix_to_rows).collect(),
            kinds: s.kinds.clone(),
            center: s.center,
            continuous_axis: s.continuous_axis,
        }
    }
}

impl From<SymmetrySet> for SymmetryJson {
    fn from(s: SymmetrySet) -> Self {
        (&s).into()
    }
}

impl TryFrom<SymmetryJson> for SymmetrySet {
    type Error = Error;

    fn try_from(j: SymmetryJson) -> Result<Self> {
        if j.kinds.len() != j.transforms.len() {
            return Err(Error::InvalidParameter("kinds and transforms differ in length".into()));
        }
        Ok(SymmetrySet {
            object: j.object,
            transforms: j.transforms.iter().map(rows_to_matrix).collect(),
            kinds: j.kinds,
            center: j.center,
            continuous_axis: j.continuous_axis,
        })
    }
}

/// A refined rotation hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryCandidate {
    pub axis: [f64; 3],
    pub angle: f64,
    /// ADD-S residual in meters.
    pub residual: f64,
}

impl SymmetryCandidate {
    pub fn rotation(&self) -> Matrix3<f64> {
        axis_angle(&v3(self.axis), self.angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    /// Acceptance threshold as a fraction of the object diameter.
    pub tau_frac: f64,
    /// Surface samples for the final acceptance test.
    pub samples: usize,
    /// Leading subset of the samples used inside the optimizer.
    pub optimizer_samples: usize,
    pub seed: u64,
    /// Seed angles in degrees.
    pub seed_angles_deg: Vec<f64>,
    pub step: f64,
    pub step_decay: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Angles tested about an axis before it is declared continuous.
    pub continuous_test_angles: usize,
    /// Number of rotations a continuous symmetry is discretized into.
    pub discretization: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            tau_frac: 0.01,
            samples: crate::mesh::DEFAULT_SAMPLES,
            optimizer_samples: 256,
            seed: crate::mesh::DEFAULT_SAMPLE_SEED,
            seed_angles_deg: vec![180.0, 120.0, 90.0, 72.0, 60.0, 45.0],
            step: 1e-2,
            step_decay: 0.5,
            max_iters: 200,
            tolerance: 1e-7,
            continuous_test_angles: 32,
            discretization: 16,
        }
    }
}

/// Mean distance from the rotated samples to the mesh surface.
struct Objective {
    index: SurfaceIndex,
    samples: Vec<Vector3<f64>>,
    center: Vector3<f64>,
}

impl Objective {
    fn new(mesh: &Mesh, samples: &[[f64; 3]]) -> Self {
        Self {
            index: SurfaceIndex::new(mesh),
            samples: samples.iter().map(|p| v3(*p)).collect(),
            center: v3(mesh.surface_centroid()),
        }
    }

    fn eval_on(&self, rotation: &Matrix3<f64>, n: usize) -> f64 {
        let n = n.min(self.samples.len());
        let total: f64 = self.samples[..n]
            .iter()
            .map(|x| self.index.distance(&(rotation * (x - self.center) + self.center)))
            .sum();
        total / n as f64
    }

    fn eval(&self, rotation: &Matrix3<f64>) -> f64 {
        self.eval_on(rotation, self.samples.len())
    }
}

/// ADD-S residual of `rotation` (about the surface centroid): mean over the
/// mesh's surface samples of the distance from each rotated sample to the
/// closest point of the surface.
pub fn adds_objective(mesh: &Mesh, rotation: &Matrix3<f64>) -> f64 {
    Objective::new(mesh, &mesh.surface_samples).eval(rotation)
}

/// The 26 face, edge, and corner directions of a cube.
pub fn cube_directions() -> Vec<Vector3<f64>> {
    let mut dirs = Vec::with_capacity(26);
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    dirs.push(Vector3::new(x as f64, y as f64, z as f64).normalize());
                }
            }
        }
    }
    dirs
}

fn tangent_basis(a: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = a.cross(&helper).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Gradient descent on (axis, angle) with central-difference gradients.
fn refine(
    obj: &Objective,
    n_samples: usize,
    axis: Vector3<f64>,
    angle: f64,
    optimize_angle: bool,
    cfg: &DiscoveryConfig,
    abort_above: Option<f64>,
) -> (Vector3<f64>, f64, f64) {
    let h = 1e-4;
    let eval = |axis: &Vector3<f64>, angle: f64| obj.eval_on(&axis_angle(axis, angle), n_samples);
    let perturbed = |axis: &Vector3<f64>, e1: &Vector3<f64>, e2: &Vector3<f64>, u: f64, v: f64| {
        (axis + e1 * u + e2 * v).normalize()
    };
    let mut axis = axis.normalize();
    let mut angle = angle;
    let mut f = eval(&axis, angle);
    let mut step = cfg.step;
    for iter in 0..cfg.max_iters {
        if let Some(limit) = abort_above {
            if iter == cfg.max_iters / 10 && f > limit {
                break;
            }
        }
        let (e1, e2) = tangent_basis(&axis);
        let gu = (eval(&perturbed(&axis, &e1, &e2, h, 0.0), angle)
            - eval(&perturbed(&axis, &e1, &e2, -h, 0.0), angle))
            / (2.0 * h);
        let gv = (eval(&perturbed(&axis, &e1, &e2, 0.0, h), angle)
            - eval(&perturbed(&axis, &e1, &e2, 0.0, -h), angle))
            / (2.0 * h);
        let ga = if optimize_angle {
            (eval(&axis, angle + h) - eval(&axis, angle - h)) / (2.0 * h)
        } else {
            0.0
        };
        let norm = (gu * gu + gv * gv + ga * ga).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        // Normalized step so `step` is a length in parameter space (radians).
        let (du, dv, da) = (-step * gu / norm, -step * gv / norm, -step * ga / norm);
        let trial_axis = perturbed(&axis, &e1, &e2, du, dv);
        let trial_angle = angle + da;
        let ft = eval(&trial_axis, trial_angle);
        if ft < f {
            let delta = f - ft;
            axis = trial_axis;
            angle = trial_angle;
            f = ft;
            if delta < cfg.tolerance {
                break;
            }
        } else {
            // The objective has kinks at exact symmetries where the gradient
            // direction stalls; try coordinate moves before shrinking.
            let mut moves = vec![(step, 0.0, 0.0), (-step, 0.0, 0.0), (0.0, step, 0.0), (0.0, -step, 0.0)];
            if optimize_angle {
                moves.extend([(0.0, 0.0, step), (0.0, 0.0, -step)]);
            }
            let best = moves
                .into_iter()
                .map(|(u, v, a)| {
                    let ax = perturbed(&axis, &e1, &e2, u, v);
                    let f = eval(&ax, angle + a);
                    (f, ax, angle + a)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            if best.0 < f {
                (f, axis, angle) = (best.0, best.1, best.2);
            } else {
                step *= cfg.step_decay;
                if step < cfg.step * 1e-3 {
                    break;
                }
            }
        }
    }
    (axis, angle, f)
}

/// Candidate orders tried when snapping a refined angle onto `2πk/n`.
fn snap_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    let mut best = (f64::INFINITY, a);
    for n in 2..=8u32 {
        for k in 1..n {
            let target = TAU * k as f64 / n as f64;
            let d = (a - target).abs();
            if d < best.0 {
                best = (d, target);
            }
        }
    }
    if best.0 < 0.03 {
        best.1
    } else {
        a
    }
}

fn canonical_axis_angle(r: &Matrix3<f64>) -> (Vector3<f64>, f64) {
    let angle = rotation_angle(r);
    let axis = if angle < 1e-12 {
        Vector3::z()
    } else if PI - angle < 1e-6 {
        // axis from the symmetric part (R + I) / 2 = a aᵀ
        let m = (r + Matrix3::identity()) * 0.5;
        let col = (0..3)
            .map(|i| m.column(i).into_owned())
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap();
        col.normalize()
    } else {
        Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).normalize()
    };
    // canonical sign: first significant component positive
    let flip = axis
        .iter()
        .find(|c| c.abs() > 1e-9)
        .map(|c| *c < 0.0)
        .unwrap_or(false);
    if flip && PI - angle < 1e-6 {
        (-axis, angle)
    } else {
        (axis, angle)
    }
}

fn ordering_key(r: &Matrix3<f64>) -> (f64, [f64; 3]) {
    let (axis, angle) = canonical_axis_angle(r);
    (angle, [axis.x, axis.y, axis.z])
}

fn sort_transforms(items: &mut [(Matrix3<f64>, SymmetryKind)]) {
    let round = |x: f64| (x * 1e6).round() / 1e6;
    items.sort_by(|a, b| {
        let (aa, ax) = ordering_key(&a.0);
        let (ba, bx) = ordering_key(&b.0);
        round(aa)
            .total_cmp(&round(ba))
            .then(round(ax[0]).total_cmp(&round(bx[0])))
            .then(round(ax[1]).total_cmp(&round(bx[1])))
            .then(round(ax[2]).total_cmp(&round(bx[2])))
    });
}

/// Keeps proper rotations only (det = +1) and drops near-duplicates, then
/// prepends the identity. Improper transforms (reflections) are discarded.
pub fn reflection_to_rotation_filter(
    object: &str,
    center: [f64; 3],
    candidates: &[(Matrix3<f64>, SymmetryKind)],
) -> SymmetrySet {
    let mut set = SymmetrySet::identity_only(object, center);
    let mut kept: Vec<(Matrix3<f64>, SymmetryKind)> = Vec::new();
    for (m, kind) in candidates {
        if !is_rotation(m, 1e-6) {
            continue;
        }
        let r = crate::geometry::pose::orthonormalize(m);
        if rotation_angle(&r) <= 1e-3 {
            continue;
        }
        if kept.iter().any(|(k, _)| rotation_distance(k, &r) <= DEDUP_RADIANS) {
            continue;
        }
        kept.push((r, *kind));
    }
    sort_transforms(&mut kept);
    for (m, kind) in kept {
        set.transforms.push(m);
        set.kinds.push(kind);
    }
    set
}

/// Refined candidates closer than this to the identity are dropped (radians).
const MIN_CANDIDATE_ANGLE: f64 = 0.2;

/// Rotations closer than this are treated as the same symmetry.
const DEDUP_RADIANS: f64 = 0.05;

/// Discovers the rotational symmetry set of `mesh`.
pub fn discover_symmetries(mesh: &Mesh, cfg: &DiscoveryConfig) -> Result<SymmetrySet> {
    discover_with_candidates(mesh, cfg).map(|(set, _)| set)
}

/// As [`discover_symmetries`], also returning every accepted candidate.
pub fn discover_with_candidates(
    mesh: &Mesh,
    cfg: &DiscoveryConfig,
) -> Result<(SymmetrySet, Vec<SymmetryCandidate>)> {
    if mesh.vertices.len() < 4 || mesh.spread_rank() < 3 {
        return Err(Error::DegenerateMesh("point spread has rank < 3".into()));
    }
    let samples = if cfg.samples == mesh.surface_samples.len() && cfg.seed == crate::mesh::DEFAULT_SAMPLE_SEED {
        mesh.surface_samples.clone()
    } else {
        mesh.sample_surface(cfg.samples, cfg.seed)
    };
    let obj = Objective::new(mesh, &samples);
    let center = mesh.surface_centroid();
    let tau = cfg.tau_frac * mesh.diameter();
    let n_opt = cfg.optimizer_samples.min(samples.len());

    // Seed directions: cube directions expressed in the principal frame.
    let eig = SymmetricEigen::new(mesh.surface_covariance());
    let frame = eig.eigenvectors;
    let dirs: Vec<Vector3<f64>> = cube_directions().iter().map(|d| (frame * d).normalize()).collect();

    let mut seeds = Vec::new();
    for &deg in &cfg.seed_angles_deg {
        let angle = deg.to_radians();
        for (i, d) in dirs.iter().enumerate() {
            // a half turn about -d equals one about d
            if (angle - PI).abs() < 1e-9 && dirs[..i].iter().any(|e| (e + d).norm() < 1e-9) {
                continue;
            }
            seeds.push((*d, angle));
        }
    }

    let is_continuous = |a: &Vector3<f64>| {
        (1..cfg.continuous_test_angles).all(|k| {
            let theta = TAU * k as f64 / cfg.continuous_test_angles as f64;
            obj.eval(&axis_angle(a, theta)) < tau
        })
    };
    let is_flip = |c: &SymmetryCandidate, axis: &Vector3<f64>| {
        (c.angle.rem_euclid(TAU) - PI).abs() < 1e-6 && v3(c.axis).dot(axis).abs() < 0.1
    };

    let mut accepted: Vec<SymmetryCandidate> = Vec::new();
    let mut checked_axes: Vec<Vector3<f64>> = Vec::new();
    let mut continuous: Option<Vector3<f64>> = None;
    let abort = Some(5.0 * tau);
    for (axis0, angle0) in seeds {
        if let Some(a) = continuous {
            // Only a half turn perpendicular to the axis can add anything.
            if accepted.iter().any(|c| is_flip(c, &a)) {
                break;
            }
            if (angle0 - PI).abs() > 1e-9 || axis0.dot(&a).abs() > 0.5 {
                continue;
            }
        }
        let (axis, angle, f) = refine(&obj, n_opt, axis0, angle0, true, cfg, abort);
        if f > 3.0 * tau {
            continue;
        }
        let snapped = snap_angle(angle);
        let (axis, angle) = if snapped != angle.rem_euclid(TAU) {
            let (a, _, _) = refine(&obj, n_opt, axis, snapped, false, cfg, None);
            (a, snapped)
        } else {
            (axis, angle)
        };
        let r = axis_angle(&axis, angle);
        // Seeds that slid down to the identity carry no information.
        if rotation_angle(&r) < MIN_CANDIDATE_ANGLE {
            continue;
        }
        let residual = obj.eval(&r);
        if residual >= tau {
            continue;
        }
        accepted.push(SymmetryCandidate {
            axis: [axis.x, axis.y, axis.z],
            angle,
            residual,
        });
        if continuous.is_none() && !checked_axes.iter().any(|b| axis.dot(b).abs() > DEDUP_RADIANS.cos()) {
            checked_axes.push(axis);
            if is_continuous(&axis) {
                continuous = Some(axis);
            }
        }
    }

    let mut transforms: Vec<(Matrix3<f64>, SymmetryKind)> = Vec::new();
    let continuous_axis = if let Some(axis) = continuous {
        let n = cfg.discretization.max(1);
        let about_axis: Vec<Matrix3<f64>> = (0..n)
            .map(|k| axis_angle(&axis, TAU * k as f64 / n as f64))
            .collect();
        for r in about_axis.iter().skip(1) {
            transforms.push((*r, SymmetryKind::DiscretizedContinuous));
        }
        // A half turn about a perpendicular axis generates the flip family.
        let flip = accepted
            .iter()
            .filter(|c| is_flip(c, &axis))
            .min_by(|a, b| a.residual.total_cmp(&b.residual));
        if let Some(f) = flip {
            let f = f.rotation();
            for r in &about_axis {
                let m = r * f;
                if obj.eval(&m) < tau {
                    transforms.push((m, SymmetryKind::DiscretizedContinuous));
                }
            }
        }
        Some([axis.x, axis.y, axis.z])
    } else {
        let mut group: Vec<Matrix3<f64>> = Vec::new();
        for c in &accepted {
            let r = c.rotation();
            if !group.iter().any(|g| rotation_distance(g, &r) <= DEDUP_RADIANS) {
                group.push(r);
            }
        }
        close_group(&mut group, |m| obj.eval(m) < tau);
        transforms.extend(group.into_iter().map(|m| (m, SymmetryKind::Discrete)));
        None
    };

    let mut set = reflection_to_rotation_filter(&mesh.name, center, &transforms);
    set.continuous_axis = continuous_axis;
    if continuous_axis.is_some() {
        set.kinds[0] = SymmetryKind::DiscretizedContinuous;
    }
    Ok((set, accepted))
}

/// Adds products of members until closed (or 120 elements), keeping only
/// products accepted by `valid`.
fn close_group(group: &mut Vec<Matrix3<f64>>, valid: impl Fn(&Matrix3<f64>) -> bool) {
    let id = Matrix3::identity();
    let mut changed = true;
    while changed && group.len() < 120 {
        changed = false;
        let snapshot = group.clone();
        for a in &snapshot {
            for b in &snapshot {
                let m = crate::geometry::pose::orthonormalize(&(a * b));
                if rotation_distance(&m, &id) <= DEDUP_RADIANS {
                    continue;
                }
                if group.iter().any(|g| rotation_distance(g, &m) <= DEDUP_RADIANS) {
                    continue;
                }
                if valid(&m) {
                    group.push(m);
                    changed = true;
                }
            }
        }
    }
}
