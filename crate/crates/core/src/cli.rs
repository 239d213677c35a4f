//! The `sympose` command line: flag parsing, the optional TOML config file,
//! the worker pool, and one handler per subcommand.
//!
//! Every artifact carries a metadata header echoing the tool version, the
//! subcommand, the seed and the resolved configuration. The thread count is
//! left out of it because it never changes results.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ablate, samples_for, train_on_samples, SymmetrySplit, TrainSettings};
use crate::features::FeatureConfig;
use crate::geometry::Pose;
use crate::io;
use crate::keypoints::{select_keypoints, SalienceMode};
use crate::losses::LossWeights;
use crate::metrics::{curves_svg, parse_report_csv, MetricReport, AUC_MAX_THRESHOLD};
use crate::mesh::Mesh;
use crate::nn::OptimizerConfig;
use crate::pipeline::{catalog_models_with, class_symmetries, estimate_scene, scene_errors_with, ClassModel, Model};
use crate::scenegen::{self, generate_scene, load_scenes, occluded_scene, scene_dir_name, CameraMode, SceneBundle, SceneSpec};
use crate::symmetry::{discover_symmetries, DiscoveryConfig, SymmetrySet};
use crate::train::{log_csv, TrainConfig};
use crate::voting::{EstimatesFile, VoteConfig};

/// Overrides `--threads`.
pub const THREADS_ENV: &str = "SYMPOSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sympose", version, about = "Symmetry-aware multi-view 6D pose estimation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub tunables: Tunables,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by the subcommands. Each may also come from the config
/// file; a flag wins over the file, and the file over the default.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tunables {
    /// TOML file with defaults for these settings.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Views generated or used per scene [default: 3].
    #[arg(long, global = true)]
    pub views: Option<usize>,
    /// Mean-shift bandwidth in meters [default: 0.02].
    #[arg(long, global = true)]
    pub bandwidth: Option<f64>,
    /// Pixels gathered per point in the fusion [default: 3].
    #[arg(long = "k-p", global = true)]
    pub k_p: Option<usize>,
    /// Points gathered per pixel in the fusion [default: 3].
    #[arg(long = "k-i", global = true)]
    pub k_i: Option<usize>,
    /// Keypoint loss weight [default: 2].
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    /// Semantic loss weight [default: 1].
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    /// Center loss weight [default: 1].
    #[arg(long, global = true)]
    pub lambda3: Option<f64>,
    /// Training epochs [default: 15].
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// SGD learning rate [default: 0.01].
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Scenes per mini-batch [default: 8].
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
    /// Points sampled per scene [default: 384].
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Symmetry-aware keypoint loss [default: on].
    #[arg(long = "sym-loss", global = true)]
    #[serde(skip)]
    pub sym_loss: Option<Toggle>,
    #[arg(skip)]
    #[serde(rename = "symmetry_aware")]
    pub symmetry_aware: Option<bool>,
    /// Symmetry acceptance threshold as a fraction of the diameter
    /// [default: 0.01].
    #[arg(long = "tau-frac", global = true)]
    pub tau_frac: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arms {
    On,
    Off,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic multi-view scenes with ground truth.
    GenScenes {
        #[arg(long, default_value_t = 200)]
        count: u64,
        /// First scene id.
        #[arg(long, default_value_t = 0)]
        start: u64,
        /// fixed, quadrant or wiggled.
        #[arg(long, default_value = "fixed")]
        mode: CameraMode,
        /// Wiggle rotation noise (degrees).
        #[arg(long = "sigma-rot-deg")]
        sigma_rot_deg: Option<f64>,
        /// Wiggle translation noise (meters).
        #[arg(long = "sigma-trans")]
        sigma_trans: Option<f64>,
        /// Build scenes with one object hidden at least this much in view 1.
        #[arg(long)]
        occluded: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the proper rotational symmetries of a mesh.
    DiscoverSym {
        /// `.ply`, `.obj` or `lib:<name>`.
        #[arg(long)]
        mesh: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose the 3D keypoints of a mesh.
    SelectKeypoints {
        #[arg(long)]
        mesh: String,
        #[arg(long, default_value = "curvature")]
        mode: SalienceMode,
        /// Defaults to the catalog id of a mesh with the same name, else 0.
        #[arg(long = "class-id")]
        class_id: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the fusion network and heads on a scene directory.
    TrainDemo {
        #[arg(long)]
        scenes: PathBuf,
        /// Symmetry set file, array file or directory; classes not covered
        /// are discovered.
        #[arg(long)]
        sym: Option<PathBuf>,
        #[arg(long, default_value = "curvature")]
        keypoints: SalienceMode,
        #[arg(long)]
        out: PathBuf,
        /// Loss log CSV [default: OUT with extension csv].
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Estimate poses in one scene, or in every scene of a directory.
    Estimate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// A file for one scene, a directory for many.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score pose estimates against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        /// An estimates file or a directory of them.
        #[arg(long)]
        pred: PathBuf,
        /// Symmetry sets; falls back to the model's, then to discovery.
        #[arg(long)]
        sym: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON report [default: OUT with extension json].
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Train with and without the symmetry-aware loss and compare.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "both")]
        sym: Arms,
        #[arg(long)]
        symmetries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot accuracy-threshold curves from a report CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plot: PathBuf,
        /// Per-object error rows to plot.
        #[arg(long, default_value = "add_dash_s_error")]
        metric: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenScenes { .. } => "gen-scenes",
            Command::DiscoverSym { .. } => "discover-sym",
            Command::SelectKeypoints { .. } => "select-keypoints",
            Command::TrainDemo { .. } => "train-demo",
            Command::Estimate { .. } => "estimate",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate { .. } => "ablate",
            Command::Report { .. } => "report",
        }
    }

    /// Paths that must exist before the command runs.
    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        match self {
            Command::TrainDemo { scenes, sym, .. } => {
                v.push(scenes);
                v.extend(sym.as_deref());
            }
            Command::Estimate { scene, model, .. } => v.extend([scene.as_path(), model.as_path()]),
            Command::Evaluate { gt, pred, sym, model, .. } => {
                v.extend([gt.as_path(), pred.as_path()]);
                v.extend(sym.as_deref());
                v.extend(model.as_deref());
            }
            Command::Ablate { train, test, symmetries, .. } => {
                v.extend([train.as_path(), test.as_path()]);
                v.extend(symmetries.as_deref());
            }
            Command::Report { input, .. } => v.push(input),
            Command::DiscoverSym { mesh, .. } | Command::SelectKeypoints { mesh, .. } => {
                if !mesh.starts_with("lib:") {
                    v.push(Path::new(mesh));
                }
            }
            Command::GenScenes { .. } => {}
        }
        v
    }

    fn paths(&self) -> BTreeMap<&'static str, String> {
        let s = |p: &Path| p.display().to_string();
        let mut m = BTreeMap::new();
        match self {
            Command::GenScenes { out, .. } => {
                m.insert("out", s(out));
            }
            Command::DiscoverSym { mesh, out } | Command::SelectKeypoints { mesh, out, .. } => {
                m.insert("mesh", mesh.clone());
                m.insert("out", s(out));
            }
            Command::TrainDemo { scenes, sym, out, log, .. } => {
                m.insert("scenes", s(scenes));
                m.insert("out", s(out));
                if let Some(p) = sym {
                    m.insert("sym", s(p));
                }
                if let Some(p) = log {
                    m.insert("log", s(p));
                }
            }
            Command::Estimate { scene, model, out } => {
                m.insert("scene", s(scene));
                m.insert("model", s(model));
                m.insert("out", s(out));
            }
            Command::Evaluate { gt, pred, sym, model, out, .. } => {
                m.insert("gt", s(gt));
                m.insert("pred", s(pred));
                m.insert("out", s(out));
                if let Some(p) = sym {
                    m.insert("sym", s(p));
                }
                if let Some(p) = model {
                    m.insert("model", s(p));
                }
            }
            Command::Ablate { train, test, out, .. } => {
                m.insert("train", s(train));
                m.insert("test", s(test));
                m.insert("out", s(out));
            }
            Command::Report { input, plot, .. } => {
                m.insert("in", s(input));
                m.insert("plot", s(plot));
            }
        }
        m
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub paths: BTreeMap<&'static str, String>,
    pub seed: u64,
    #[serde(skip)]
    pub threads: Option<usize>,
    pub views: usize,
    pub bandwidth: f64,
    pub k_p: usize,
    pub k_i: usize,
    pub weights: LossWeights,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub points: usize,
    pub symmetry_aware: bool,
    pub tau_frac: f64,
}

impl RunConfig {
    /// Flags over the config file over defaults; `SYMPOSE_THREADS` over
    /// everything for the thread count.
    pub fn resolve(cli: &Cli, env_threads: Option<&str>) -> Result<Self> {
        let flags = &cli.tunables;
        let file: Tunables = match &flags.config {
            Some(p) => toml::from_str(&io::read_text(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => Tunables::default(),
        };
        macro_rules! pick {
            ($f:ident, $d:expr) => {
                flags.$f.or(file.$f).unwrap_or($d)
            };
        }
        let threads = match env_threads {
            Some(t) => Some(t.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={t:?} is not a count")))?),
            None => flags.threads.or(file.threads),
        };
        let w = LossWeights::default();
        let cfg = Self {
            command: cli.command.name().to_string(),
            paths: cli.command.paths(),
            seed: pick!(seed, 0),
            threads,
            views: pick!(views, 3),
            bandwidth: pick!(bandwidth, VoteConfig::default().bandwidth),
            k_p: pick!(k_p, FeatureConfig::default().k_p),
            k_i: pick!(k_i, FeatureConfig::default().k_i),
            weights: LossWeights {
                lambda1: pick!(lambda1, w.lambda1),
                lambda2: pick!(lambda2, w.lambda2),
                lambda3: pick!(lambda3, w.lambda3),
            },
            epochs: pick!(epochs, TrainConfig::default().epochs),
            lr: pick!(lr, 1e-2),
            batch_size: pick!(batch_size, TrainConfig::default().batch_size),
            points: pick!(points, FeatureConfig::default().num_points),
            symmetry_aware: flags.sym_loss.map(|t| t == Toggle::On).or(file.symmetry_aware).unwrap_or(true),
            tau_frac: pick!(tau_frac, DiscoveryConfig::default().tau_frac),
        };
        cfg.validate(&cli.command)?;
        Ok(cfg)
    }

    fn validate(&self, command: &Command) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.views == 0 {
            return bad("views must be at least 1".into());
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive".into());
        }
        if self.k_p == 0 || self.k_i == 0 {
            return bad("k-p and k-i must be at least 1".into());
        }
        LossWeights::new(self.weights.lambda1, self.weights.lambda2, self.weights.lambda3).map_err(|e| Error::Config(e.to_string()))?;
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if self.points < 16 {
            return bad("points must be at least 16".into());
        }
        if !(self.tau_frac > 0.0 && self.tau_frac < 1.0) {
            return bad("tau-frac must lie in (0, 1)".into());
        }
        for p in command.inputs() {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }

    /// The metadata header written into every artifact.
    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": "sympose",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config": self,
        })
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            num_points: self.points,
            k_p: self.k_p,
            k_i: self.k_i,
            ..FeatureConfig::default()
        }
    }

    pub fn voting(&self) -> VoteConfig {
        VoteConfig {
            bandwidth: self.bandwidth,
            ..VoteConfig::default()
        }
    }

    pub fn discovery(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            tau_frac: self.tau_frac,
            ..DiscoveryConfig::default()
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            features: self.features(),
            voting: self.voting(),
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                optimizer: OptimizerConfig::Sgd { lr: self.lr, momentum: 0.9 },
                weights: self.weights,
                symmetry_aware: self.symmetry_aware,
                seed: self.seed,
                ..TrainConfig::default()
            },
            ..TrainSettings::default()
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 2 on usage errors, 1 on failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let env = std::env::var(THREADS_ENV).ok();
    let cfg = match RunConfig::resolve(&cli, env.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(&cli.command, &cfg)),
        Err(e) => Err(Error::Config(e.to_string())),
    };
    match result {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::GenScenes {
            count,
            start,
            mode,
            sigma_rot_deg,
            sigma_trans,
            occluded,
            out,
        } => gen_scenes(cfg, *start..start + count, *mode, *sigma_rot_deg, *sigma_trans, *occluded, out),
        Command::DiscoverSym { mesh, out } => {
            let mesh = io::load_mesh(mesh)?;
            let set = discover_symmetries(&mesh, &cfg.discovery())?;
            io::write_json(out, &with_meta(&set, cfg)?)
        }
        Command::SelectKeypoints { mesh, mode, class_id, out } => {
            let mesh = io::load_mesh(mesh)?;
            let id = class_id.unwrap_or_else(|| catalog_id(&mesh));
            let kp = select_keypoints(&mesh, id, *mode)?;
            io::write_json(out, &with_meta(&kp, cfg)?)
        }
        Command::TrainDemo {
            scenes,
            sym,
            keypoints,
            out,
            log,
        } => train_demo(cfg, scenes, sym.as_deref(), *keypoints, out, log.as_deref()),
        Command::Estimate { scene, model, out } => estimate(cfg, scene, model, out),
        Command::Evaluate {
            gt,
            pred,
            sym,
            model,
            out,
            json,
            plot,
        } => evaluate(cfg, gt, pred, sym.as_deref(), model.as_deref(), out, json.as_deref(), plot.as_deref()),
        Command::Ablate {
            train,
            test,
            sym,
            symmetries,
            out,
        } => ablate_cmd(cfg, train, test, *sym, symmetries.as_deref(), out),
        Command::Report { input, plot, metric } => report(input, plot, metric),
    }
}

fn with_meta<T: Serialize>(value: &T, cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("meta".into(), cfg.meta());
    }
    Ok(v)
}

fn catalog_id(mesh: &Mesh) -> u32 {
    scenegen::catalog().iter().find(|c| c.mesh.name == mesh.name).map_or(0, |c| c.class_id)
}

fn gen_scenes(
    cfg: &RunConfig,
    ids: std::ops::Range<u64>,
    mode: CameraMode,
    sigma_rot_deg: Option<f64>,
    sigma_trans: Option<f64>,
    occluded: Option<f64>,
    out: &Path,
) -> Result<()> {
    let meta = cfg.meta();
    let ids: Vec<u64> = ids.collect();
    let made: Vec<Result<()>> = ids
        .par_iter()
        .map(|&id| {
            let bundle = match occluded {
                Some(f) => occluded_scene(cfg.seed, id, cfg.views, f)?.0,
                None => {
                    let mut spec = SceneSpec::random(cfg.seed, id, cfg.views, mode);
                    if let Some(s) = sigma_rot_deg {
                        spec.sigma_rot = s.to_radians();
                    }
                    if let Some(s) = sigma_trans {
                        spec.sigma_trans = s;
                    }
                    generate_scene(&spec)?
                }
            };
            bundle.save(out, &meta).map(|_| ())
        })
        .collect();
    made.into_iter().collect()
}

/// Symmetry sets from a set file, a file holding an array of sets, or a
/// directory of such files.
pub fn load_symmetry_sets(path: &Path) -> Result<Vec<SymmetrySet>> {
    let files = if path.is_dir() {
        json_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        let v: serde_json::Value = io::read_json(&f)?;
        let items = match v {
            serde_json::Value::Array(a) => a,
            other => vec![other],
        };
        for item in items {
            let set: SymmetrySet = serde_json::from_value(item).map_err(|e| Error::format(&f, e.to_string()))?;
            set.validate()?;
            out.push(set);
        }
    }
    Ok(out)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn class_models(cfg: &RunConfig, sym: Option<&Path>, salience: SalienceMode) -> Result<Vec<ClassModel>> {
    let known = match sym {
        Some(p) => load_symmetry_sets(p)?,
        None => Vec::new(),
    };
    catalog_models_with(salience, &cfg.discovery(), &known)
}

/// Scenes of a directory cut down to their first `views` views.
fn load_views(dir: &Path, views: usize) -> Result<Vec<SceneBundle>> {
    let scenes = load_scenes(dir)?;
    if scenes.is_empty() {
        return Err(Error::Config(format!("no scenes under {}", dir.display())));
    }
    scenes.iter().map(|b| first_views(b, views)).collect()
}

fn first_views(b: &SceneBundle, views: usize) -> Result<SceneBundle> {
    if b.views.len() < views {
        return Err(Error::Config(format!("scene {} has {} views, {views} requested", b.id(), b.views.len())));
    }
    Ok(b.subset(&(0..views).collect::<Vec<_>>()))
}

fn train_demo(cfg: &RunConfig, scenes: &Path, sym: Option<&Path>, salience: SalienceMode, out: &Path, log: Option<&Path>) -> Result<()> {
    let bundles = load_views(scenes, cfg.views)?;
    let classes = class_models(cfg, sym, salience)?;
    let settings = cfg.train_settings();
    let samples = samples_for(&bundles, &classes, &settings)?;
    let (mut model, log_rows) = train_on_samples(&samples, &classes, &settings, |e| {
        eprintln!("epoch {} L_total {:.6}", e.epoch, e.total)
    })?;
    model.meta = cfg.meta();
    model.save(out)?;
    let log_path = log.map_or_else(|| out.with_extension("csv"), Path::to_path_buf);
    io::write_bytes(&log_path, log_csv(&log_rows, &cfg.meta()).as_bytes())
}

fn estimate(cfg: &RunConfig, scene: &Path, model: &Path, out: &Path) -> Result<()> {
    let model = Model::load(model)?;
    let meta = cfg.meta();
    let run = |b: &SceneBundle| -> Result<EstimatesFile> {
        let b = first_views(b, cfg.views)?;
        Ok(EstimatesFile::from_results(b.id(), estimate_scene(&model, &b.views, b.id())?, meta.clone()))
    };
    let single = scene.is_file() || scene.join("scene.json").is_file();
    if single {
        return io::write_json(out, &run(&SceneBundle::load(scene)?)?);
    }
    let scenes = load_scenes(scene)?;
    if scenes.is_empty() {
        return Err(Error::Config(format!("no scenes under {}", scene.display())));
    }
    let files: Vec<Result<EstimatesFile>> = scenes.par_iter().map(run).collect();
    for f in files {
        let f = f?;
        io::write_json(&out.join(format!("{}.json", scene_dir_name(f.scene))), &f)?;
    }
    Ok(())
}

fn read_estimates(pred: &Path) -> Result<BTreeMap<u64, EstimatesFile>> {
    let files = if pred.is_dir() { json_files(pred)? } else { vec![pred.to_path_buf()] };
    let mut out = BTreeMap::new();
    for f in files {
        let e: EstimatesFile = io::read_json(&f)?;
        if out.insert(e.scene, e).is_some() {
            return Err(Error::format(&f, "second estimates file for the same scene"));
        }
    }
    Ok(out)
}

fn class_name(id: u32) -> String {
    scenegen::class(id).map_or_else(|_| format!("class_{id}"), |c| c.mesh.name.clone())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &RunConfig,
    gt: &Path,
    pred: &Path,
    sym: Option<&Path>,
    model: Option<&Path>,
    out: &Path,
    json: Option<&Path>,
    plot: Option<&Path>,
) -> Result<()> {
    let scenes = if gt.join("scene.json").is_file() { vec![SceneBundle::load(gt)?] } else { load_scenes(gt)? };
    let estimates = read_estimates(pred)?;
    let mut symmetries: BTreeMap<u32, SymmetrySet> = match model {
        Some(m) => class_symmetries(&Model::load(m)?.classes),
        None => BTreeMap::new(),
    };
    if let Some(p) = sym {
        for set in load_symmetry_sets(p)? {
            if let Some(c) = scenegen::catalog().iter().find(|c| c.mesh.name == set.object) {
                symmetries.insert(c.class_id, set);
            }
        }
    }
    let needed: Vec<u32> = scenes.iter().flat_map(|b| b.objects.iter().map(|o| o.class_id)).collect();
    let missing: Vec<u32> = {
        let mut m: Vec<u32> = needed.into_iter().filter(|c| !symmetries.contains_key(c)).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let found: Vec<Result<(u32, SymmetrySet)>> = missing
        .par_iter()
        .map(|&c| Ok((c, discover_symmetries(&scenegen::class(c)?.mesh, &cfg.discovery())?)))
        .collect();
    for f in found {
        let (c, s) = f?;
        symmetries.insert(c, s);
    }
    let per_scene: Vec<Result<Vec<_>>> = scenes
        .par_iter()
        .map(|b| {
            let poses: Vec<(u32, Pose)> = estimates.get(&b.id()).map_or_else(Vec::new, |e| e.estimates.iter().map(|e| (e.class_id, e.pose)).collect());
            scene_errors_with(b, &symmetries, &poses)
        })
        .collect();
    let mut errors = Vec::new();
    for r in per_scene {
        errors.extend(r?);
    }
    let report = MetricReport::new(errors, class_name, cfg.meta())?;
    io::write_bytes(out, report.to_csv().as_bytes())?;
    io::write_json(&json.map_or_else(|| out.with_extension("json"), Path::to_path_buf), &report)?;
    if let Some(p) = plot {
        io::write_bytes(p, report_curves(&report.to_csv(), "add_dash_s_error")?.as_bytes())?;
    }
    Ok(())
}

fn arm_name(on: bool) -> &'static str {
    if on {
        "sym_on"
    } else {
        "sym_off"
    }
}

fn ablate_cmd(cfg: &RunConfig, train: &Path, test: &Path, arms: Arms, sym: Option<&Path>, out: &Path) -> Result<()> {
    let train = load_views(train, cfg.views)?;
    let test = load_views(test, cfg.views)?;
    let classes = class_models(cfg, sym, SalienceMode::Curvature)?;
    let settings = cfg.train_settings();
    let samples = samples_for(&train, &classes, &settings)?;
    let which: &[bool] = match arms {
        Arms::On => &[true],
        Arms::Off => &[false],
        Arms::Both => &[true, false],
    };
    let meta = cfg.meta();
    let results = ablate(&samples, &test, &classes, &settings, which)?;
    let mut summary = format!("# {meta}\nvariant,metric,value\n");
    for arm in &results {
        let name = arm_name(arm.symmetry_aware);
        let report = MetricReport::new(arm.errors.clone(), class_name, meta.clone())?;
        io::write_bytes(&out.join(format!("report_{name}.csv")), report.to_csv().as_bytes())?;
        io::write_bytes(&out.join(format!("loss_{name}.csv")), log_csv(&arm.log, &meta).as_bytes())?;
        let SymmetrySplit {
            symmetric_quotient_precision,
            symmetric_mean_rotation_deg,
            asymmetric_adds_precision,
            ..
        } = arm.split;
        summary.push_str(&format!("{name},symmetric_quotient_precision_2cm,{symmetric_quotient_precision:.4}\n"));
        summary.push_str(&format!("{name},symmetric_mean_quotient_rotation_deg,{symmetric_mean_rotation_deg:.6}\n"));
        summary.push_str(&format!("{name},asymmetric_adds_precision_2cm,{asymmetric_adds_precision:.4}\n"));
    }
    io::write_bytes(&out.join("ablation.csv"), summary.as_bytes())
}

/// SVG curves of the per-object `metric` rows of a report CSV, one curve
/// per class plus one over all objects.
pub fn report_curves(csv: &str, metric: &str) -> Result<String> {
    let prefix = format!("{metric}:");
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for row in parse_report_csv(csv)? {
        if row.metric.starts_with(&prefix) {
            groups.entry(row.class).or_default().push(row.value);
            all.push(row.value);
        }
    }
    if all.is_empty() {
        return Err(Error::Config(format!("report has no {metric} rows")));
    }
    let mut curves: Vec<(String, Vec<f64>)> = groups.into_iter().collect();
    curves.push(("all".into(), all));
    curves_svg(&curves, AUC_MAX_THRESHOLD)
}

fn report(input: &Path, plot: &Path, metric: &str) -> Result<()> {
    io::write_bytes(plot, report_curves(&io::read_text(input)?, metric)?.as_bytes())
}
