//! Pose accuracy metrics: ADD, ADD-S, ADD(-S), the symmetry-quotient
//! variants, exact AUC, threshold precision, and report output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_distance, Pose};
use crate::knn::KdTree;
use crate::symmetry::SymmetrySet;

/// Upper bound of the AUC threshold range (meters).
pub const AUC_MAX_THRESHOLD: f64 = 0.10;
/// Threshold of the precision metric (meters).
pub const PRECISION_THRESHOLD: f64 = 0.02;

fn check(points: &[[f64; 3]]) -> Result<()> {
    if points.is_empty() {
        Err(Error::EmptyInput("model points"))
    } else {
        Ok(())
    }
}

/// Mean distance between corresponding model points under the two poses.
pub fn add_error(est: &Pose, gt: &Pose, points: &[[f64; 3]]) -> Result<f64> {
    check(points)?;
    let total: f64 = points
        .iter()
        .map(|p| {
            let p = nalgebra::Vector3::from(*p);
            (est.apply(&p) - gt.apply(&p)).norm()
        })
        .sum();
    Ok(total / points.len() as f64)
}

/// Mean distance from each estimated model point to the closest
/// ground-truth model point.
pub fn adds_error(est: &Pose, gt: &Pose, points: &[[f64; 3]]) -> Result<f64> {
    check(points)?;
    let target: Vec<[f64; 3]> = points.iter().map(|p| gt.apply_arr(*p)).collect();
    let tree = KdTree::new(&target);
    let total: f64 = points.iter().map(|p| tree.nearest(&est.apply_arr(*p)).unwrap().1).sum();
    Ok(total / points.len() as f64)
}

/// ADD-S for symmetric objects, ADD otherwise.
pub fn add_dash_s(est: &Pose, gt: &Pose, points: &[[f64; 3]], symmetric: bool) -> Result<f64> {
    if symmetric {
        adds_error(est, gt, points)
    } else {
        add_error(est, gt, points)
    }
}

/// ADD minimized over the symmetry set: `min_S ADD(est, gt ∘ S)`.
pub fn quotient_add(est: &Pose, gt: &Pose, points: &[[f64; 3]], sym: &SymmetrySet) -> Result<f64> {
    check(points)?;
    let mut best = f64::INFINITY;
    for i in 0..sym.len() {
        best = best.min(add_error(est, &gt.compose(&sym.pose(i)), points)?);
    }
    Ok(best)
}

/// Rotation error (radians) minimized over the symmetry set.
pub fn quotient_rotation_error(est: &Pose, gt: &Pose, sym: &SymmetrySet) -> f64 {
    sym.transforms
        .iter()
        .map(|s| rotation_distance(&est.rotation, &(gt.rotation * s)))
        .fold(f64::INFINITY, f64::min)
}

fn check_errors(errors: &[f64]) -> Result<()> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("errors"));
    }
    if errors.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(Error::InvalidParameter("errors must be non-negative".into()));
    }
    Ok(())
}

/// Area under the accuracy curve `θ ↦ fraction of errors < θ` over
/// `[0, max_threshold]`, in percent. Each error `e` contributes the length
/// `max(0, max_threshold - e)` of the interval where it counts as accurate,
/// so the area is exact. Infinite errors (missed objects) contribute zero.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    check_errors(errors)?;
    if !(max_threshold > 0.0) {
        return Err(Error::InvalidParameter("max threshold must be positive".into()));
    }
    let missed: f64 = errors.iter().map(|e| e.min(max_threshold)).sum();
    Ok((100.0 * (1.0 - missed / (max_threshold * errors.len() as f64))).clamp(0.0, 100.0))
}

/// Percentage of errors strictly below `threshold`.
pub fn precision_at(errors: &[f64], threshold: f64) -> Result<f64> {
    check_errors(errors)?;
    Ok(100.0 * errors.iter().filter(|e| **e < threshold).count() as f64 / errors.len() as f64)
}

/// Accuracy curve sampled at `steps + 1` evenly spaced thresholds.
pub fn accuracy_curve(errors: &[f64], max_threshold: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    check_errors(errors)?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((0..=steps)
        .map(|i| {
            let t = max_threshold * i as f64 / steps as f64;
            let below = sorted.partition_point(|e| *e < t);
            (t, 100.0 * below as f64 / sorted.len() as f64)
        })
        .collect())
}

/// Errors of one object in one scene. Missed objects carry infinite errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectErrors {
    pub scene: u64,
    pub class_id: u32,
    pub detected: bool,
    #[serde(with = "inf_as_null")]
    pub adds: f64,
    #[serde(with = "inf_as_null")]
    pub add_dash_s: f64,
    /// ADD minimized over the symmetry set.
    #[serde(with = "inf_as_null")]
    pub quotient_add: f64,
    /// Degrees.
    #[serde(with = "inf_as_null")]
    pub quotient_rotation_deg: f64,
}

impl ObjectErrors {
    pub fn missed(scene: u64, class_id: u32) -> Self {
        Self {
            scene,
            class_id,
            detected: false,
            adds: f64::INFINITY,
            add_dash_s: f64::INFINITY,
            quotient_add: f64::INFINITY,
            quotient_rotation_deg: f64::INFINITY,
        }
    }

    /// Errors of `est` against `gt` for an object with model `points` and
    /// symmetry set `sym`.
    pub fn measure(scene: u64, class_id: u32, est: &Pose, gt: &Pose, points: &[[f64; 3]], sym: &SymmetrySet) -> Result<Self> {
        Ok(Self {
            scene,
            class_id,
            detected: true,
            adds: adds_error(est, gt, points)?,
            add_dash_s: add_dash_s(est, gt, points, sym.is_symmetric())?,
            quotient_add: quotient_add(est, gt, points, sym)?,
            quotient_rotation_deg: quotient_rotation_error(est, gt, sym).to_degrees(),
        })
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub count: usize,
    pub detection_rate: f64,
    pub adds_auc: f64,
    pub add_dash_s_auc: f64,
    pub precision_2cm: f64,
    /// Precision of the symmetry-quotient ADD below 2 cm.
    pub quotient_precision_2cm: f64,
    /// Mean over detected objects, degrees.
    pub mean_quotient_rotation_deg: Option<f64>,
}

impl ClassMetrics {
    pub fn from_errors(errs: &[&ObjectErrors]) -> Result<Self> {
        if errs.is_empty() {
            return Err(Error::EmptyInput("errors"));
        }
        let col = |f: fn(&ObjectErrors) -> f64| -> Vec<f64> { errs.iter().map(|e| f(e)).collect() };
        let adds = col(|e| e.adds);
        let detected: Vec<f64> = errs.iter().filter(|e| e.detected).map(|e| e.quotient_rotation_deg).collect();
        Ok(Self {
            count: errs.len(),
            detection_rate: 100.0 * detected.len() as f64 / errs.len() as f64,
            adds_auc: auc(&adds, AUC_MAX_THRESHOLD)?,
            add_dash_s_auc: auc(&col(|e| e.add_dash_s), AUC_MAX_THRESHOLD)?,
            precision_2cm: precision_at(&adds, PRECISION_THRESHOLD)?,
            quotient_precision_2cm: precision_at(&col(|e| e.quotient_add), PRECISION_THRESHOLD)?,
            mean_quotient_rotation_deg: (!detected.is_empty()).then(|| detected.iter().sum::<f64>() / detected.len() as f64),
        })
    }
}

/// Per-class and aggregate metrics plus the raw per-object errors, sorted
/// by scene then class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meta: serde_json::Value,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub aggregate: ClassMetrics,
    pub class_names: BTreeMap<u32, String>,
    pub errors: Vec<ObjectErrors>,
}

impl MetricReport {
    /// `class_name` maps a class id to the key used in `per_class`.
    pub fn new(mut errors: Vec<ObjectErrors>, class_name: impl Fn(u32) -> String, meta: serde_json::Value) -> Result<Self> {
        errors.sort_by_key(|e| (e.scene, e.class_id));
        let mut groups: BTreeMap<String, Vec<&ObjectErrors>> = BTreeMap::new();
        let mut class_names = BTreeMap::new();
        for e in &errors {
            let name = class_names.entry(e.class_id).or_insert_with(|| class_name(e.class_id));
            groups.entry(name.clone()).or_default().push(e);
        }
        let per_class = groups
            .iter()
            .map(|(k, v)| Ok((k.clone(), ClassMetrics::from_errors(v)?)))
            .collect::<Result<_>>()?;
        let all: Vec<&ObjectErrors> = errors.iter().collect();
        Ok(Self {
            meta,
            aggregate: ClassMetrics::from_errors(&all)?,
            per_class,
            class_names,
            errors,
        })
    }

    /// CSV with columns `class,metric,value`: summary rows per class and for
    /// `all`, then one `adds_error`/`add_dash_s_error` row per object with
    /// the scene directory appended to the metric name. The header comment echoes `meta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", self.meta).unwrap();
        writeln!(out, "class,metric,value").unwrap();
        let mut summary = |name: &str, m: &ClassMetrics| {
            writeln!(out, "{name},count,{}", m.count).unwrap();
            writeln!(out, "{name},detection_rate,{:.4}", m.detection_rate).unwrap();
            writeln!(out, "{name},adds_auc,{:.4}", m.adds_auc).unwrap();
            writeln!(out, "{name},add_dash_s_auc,{:.4}", m.add_dash_s_auc).unwrap();
            writeln!(out, "{name},precision_2cm,{:.4}", m.precision_2cm).unwrap();
            writeln!(out, "{name},quotient_precision_2cm,{:.4}", m.quotient_precision_2cm).unwrap();
            if let Some(r) = m.mean_quotient_rotation_deg {
                writeln!(out, "{name},mean_quotient_rotation_deg,{r:.6}").unwrap();
            }
        };
        for (name, m) in &self.per_class {
            summary(name, m);
        }
        summary("all", &self.aggregate);
        for e in &self.errors {
            let name = &self.class_names[&e.class_id];
            writeln!(out, "{name},adds_error:{},{}", crate::scenegen::scene_dir_name(e.scene), fmt_err(e.adds)).unwrap();
            writeln!(out, "{name},add_dash_s_error:{},{}", crate::scenegen::scene_dir_name(e.scene), fmt_err(e.add_dash_s)).unwrap();
        }
        out
    }
}

fn fmt_err(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9}")
    } else {
        "inf".into()
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub class: String,
    pub metric: String,
    pub value: f64,
}

/// Parses a report CSV, skipping comment lines and the header.
pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() || line == "class,metric,value" {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        let bad = || Error::InvalidParameter(format!("report line {}: {line:?}", n + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let value = match parts[2] {
            "inf" => f64::INFINITY,
            v => v.parse().map_err(|_| bad())?,
        };
        rows.push(CsvRow {
            class: parts[0].into(),
            metric: parts[1].into(),
            value,
        });
    }
    Ok(rows)
}

/// SVG plot of accuracy-threshold curves, one polyline per named error list.
pub fn curves_svg(curves: &[(String, Vec<f64>)], max_threshold: f64) -> Result<String> {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 48.0;
    const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];
    let (pw, ph) = (W - 2.0 * M, H - 2.0 * M);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<g font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(svg, r#"<rect x="{M}" y="{M}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let x = M + f * pw;
        let y = M + ph - f * ph;
        writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#, M + ph + 16.0, f * max_threshold).unwrap();
        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#, M - 6.0, y + 4.0, f * 100.0).unwrap();
    }
    writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">threshold (m)</text>"#, M + pw / 2.0, H - 8.0).unwrap();
    writeln!(svg, r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">accuracy (%)</text>"#, M + ph / 2.0, M + ph / 2.0).unwrap();
    for (i, (name, errors)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = accuracy_curve(errors, max_threshold, 200)?
            .iter()
            .map(|(t, a)| format!("{:.2},{:.2}", M + t / max_threshold * pw, M + ph - a / 100.0 * ph))
            .collect();
        writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let ly = M + 14.0 + 14.0 * i as f64;
        writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{name} (AUC {:.1})</text>"#, M + pw - 6.0, auc(errors, max_threshold)?).unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
