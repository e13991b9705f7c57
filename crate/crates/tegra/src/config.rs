//! Run configuration: a flat key=value file with command-line overrides.
//! Every run writes its fully resolved configuration next to its outputs so
//! any result can be reproduced from that file alone.

use std::path::Path;

use crate::field::RenderConfig;
use crate::geometry::Camera;
use crate::tracker::{DenseConfig, Termination, TrackerConfig};
use crate::training::TrainConfig;
use crate::{fmt_f64, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub scene: String,
    pub trajectory: String,
    pub n_frames: usize,
    pub frame_dt: f64,
    pub delta: f64,
    pub window: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            scene: "orbit-sphere".into(),
            trajectory: "hover".into(),
            n_frames: 200,
            frame_dt: 1.0 / 30.0,
            delta: 0.05,
            window: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub l_pos: usize,
    pub widths: Vec<usize>,
    pub n_views: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            l_pos: 6,
            widths: vec![64, 64, 64, 64],
            n_views: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub camera_width: u32,
    pub camera_height: u32,
    pub camera_fov_deg: f64,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub field: FieldConfig,
    pub tracker: TrackerConfig,
    pub dense: DenseConfig,
    pub dataset: DatasetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            camera_width: 64,
            camera_height: 64,
            camera_fov_deg: 60.0,
            render: RenderConfig {
                n_samples: 32,
                z_near: 0.5,
                z_far: 5.0,
                stratified: false,
                white_background: false,
            },
            train: TrainConfig::default(),
            field: FieldConfig::default(),
            tracker: TrackerConfig::default(),
            dense: DenseConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

impl RunConfig {
    pub fn camera(&self) -> Result<Camera> {
        Camera::with_fov(self.camera_width, self.camera_height, self.camera_fov_deg)
    }

    /// Apply one key=value override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                // module seeds follow the global seed
                self.train.seed = self.seed;
                self.tracker.seed = self.seed;
            }
            "threads" => self.threads = parse(key, v)?,
            "camera.width" => self.camera_width = parse(key, v)?,
            "camera.height" => self.camera_height = parse(key, v)?,
            "camera.fov_deg" => self.camera_fov_deg = parse(key, v)?,
            "render.n_samples" => self.render.n_samples = parse(key, v)?,
            "render.z_near" => self.render.z_near = parse(key, v)?,
            "render.z_far" => self.render.z_far = parse(key, v)?,
            "render.stratified" => self.render.stratified = parse(key, v)?,
            "render.white_background" => self.render.white_background = parse(key, v)?,
            "train.n_iters" => self.train.n_iters = parse(key, v)?,
            "train.rays_per_batch" => self.train.rays_per_batch = parse(key, v)?,
            "train.lr_initial" => self.train.lr_initial = parse(key, v)?,
            "train.lr_final" => self.train.lr_final = parse(key, v)?,
            "train.eval_every" => self.train.eval_every = parse(key, v)?,
            "train.stratified" => self.train.stratified = parse(key, v)?,
            "field.l_pos" => self.field.l_pos = parse(key, v)?,
            "field.widths" => {
                self.field.widths = v
                    .split(',')
                    .map(|s| parse::<usize>(key, s))
                    .collect::<Result<_>>()?;
            }
            "field.n_views" => self.field.n_views = parse(key, v)?,
            "tracker.n_itr" => self.tracker.n_itr = parse(key, v)?,
            "tracker.lr_initial" => self.tracker.lr_initial = parse(key, v)?,
            "tracker.lr_final" => self.tracker.lr_final = parse(key, v)?,
            "tracker.events_per_update" => self.tracker.events_per_update = parse(key, v)?,
            "tracker.termination" => {
                self.tracker.termination = match v.trim() {
                    "fixed" => Termination::FixedIterations,
                    other => {
                        let eps: f64 = other.strip_prefix("norm:").and_then(|e| e.parse().ok())
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "bad termination {other:?} (use fixed or norm:<eps>)"
                                ))
                            })?;
                        Termination::UpdateNorm(eps)
                    }
                };
            }
            "dense.n_itr" => self.dense.n_itr = parse(key, v)?,
            "dense.lr_initial" => self.dense.lr_initial = parse(key, v)?,
            "dense.lr_final" => self.dense.lr_final = parse(key, v)?,
            "dense.chunk" => self.dense.chunk = parse(key, v)?,
            "dataset.scene" => self.dataset.scene = v.trim().to_string(),
            "dataset.trajectory" => self.dataset.trajectory = v.trim().to_string(),
            "dataset.n_frames" => self.dataset.n_frames = parse(key, v)?,
            "dataset.frame_dt" => self.dataset.frame_dt = parse(key, v)?,
            "dataset.delta" => self.dataset.delta = parse(key, v)?,
            "dataset.window" => self.dataset.window = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// All keys with their current values, sorted; `set` on each entry
    /// reproduces the config exactly.
    pub fn entries(&self) -> Vec<(String, String)> {
        let term = match self.tracker.termination {
            Termination::FixedIterations => "fixed".to_string(),
            Termination::UpdateNorm(e) => format!("norm:{}", fmt_f64(e)),
        };
        let widths = self
            .field
            .widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut entries: Vec<(String, String)> = vec![
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("camera.width", self.camera_width.to_string()),
            ("camera.height", self.camera_height.to_string()),
            ("camera.fov_deg", fmt_f64(self.camera_fov_deg)),
            ("render.n_samples", self.render.n_samples.to_string()),
            ("render.z_near", fmt_f64(self.render.z_near)),
            ("render.z_far", fmt_f64(self.render.z_far)),
            ("render.stratified", self.render.stratified.to_string()),
            (
                "render.white_background",
                self.render.white_background.to_string(),
            ),
            ("train.n_iters", self.train.n_iters.to_string()),
            (
                "train.rays_per_batch",
                self.train.rays_per_batch.to_string(),
            ),
            ("train.lr_initial", fmt_f64(self.train.lr_initial)),
            ("train.lr_final", fmt_f64(self.train.lr_final)),
            ("train.eval_every", self.train.eval_every.to_string()),
            ("train.stratified", self.train.stratified.to_string()),
            ("field.l_pos", self.field.l_pos.to_string()),
            ("field.widths", widths),
            ("field.n_views", self.field.n_views.to_string()),
            ("tracker.n_itr", self.tracker.n_itr.to_string()),
            ("tracker.lr_initial", fmt_f64(self.tracker.lr_initial)),
            ("tracker.lr_final", fmt_f64(self.tracker.lr_final)),
            (
                "tracker.events_per_update",
                self.tracker.events_per_update.to_string(),
            ),
            ("tracker.termination", term),
            ("dense.n_itr", self.dense.n_itr.to_string()),
            ("dense.lr_initial", fmt_f64(self.dense.lr_initial)),
            ("dense.lr_final", fmt_f64(self.dense.lr_final)),
            ("dense.chunk", self.dense.chunk.to_string()),
            ("dataset.scene", self.dataset.scene.clone()),
            ("dataset.trajectory", self.dataset.trajectory.clone()),
            ("dataset.n_frames", self.dataset.n_frames.to_string()),
            ("dataset.frame_dt", fmt_f64(self.dataset.frame_dt)),
            ("dataset.delta", fmt_f64(self.dataset.delta)),
            ("dataset.window", self.dataset.window.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        entries.sort();
        entries
    }

    /// Serialize to key=value lines.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Apply key=value lines (# starts a comment).
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected key = value", ln + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", ln + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Write the resolved config beside a run's outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        use std::io::Write as _;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("run_config.txt");
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(self.resolved().as_bytes()))
            .map_err(|e| Error::io(&path, e))
    }
}
