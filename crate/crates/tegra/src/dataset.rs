//! Procedural synthetic benchmarks: scenes, camera trajectories,
//! ground-truth poses, rendered frame sequences, and packaged event streams.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::events::{ic_stream_from_frames, stream_sparsity, write_events_csv, EventStream};
use crate::field::{render_frame, AnalyticField, Primitive, RenderConfig, Texture};
use crate::geometry::{look_at, Camera, Twist};
use crate::image::Image;
use crate::tracker::PoseMotion;
use crate::{fmt_f64, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Rendering background; the render path composites onto black or white.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Black,
    White,
}

/// A named analytic scene: primitive list, ambient fog level, extent.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub fog: f64,
    /// Scene diameter in scene units; translation thresholds are quoted as
    /// fractions of this.
    pub diameter: f64,
    pub background: Background,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let mut textured = false;
        for p in &self.primitives {
            match p {
                Primitive::Sphere {
                    center,
                    radius,
                    texture,
                    ..
                } => {
                    for c in center {
                        if c.abs() + radius > 1.0 + 1e-9 {
                            return Err(Error::Config(format!(
                                "{}: sphere leaves the [-1,1]^3 box",
                                self.name
                            )));
                        }
                    }
                    textured |= texture.amp.iter().any(|&a| a > 0.0);
                }
                Primitive::Box {
                    center,
                    half_extent,
                    texture,
                    ..
                } => {
                    for a in 0..3 {
                        if center[a].abs() + half_extent[a] > 1.0 + 1e-9 {
                            return Err(Error::Config(format!(
                                "{}: box leaves the [-1,1]^3 box",
                                self.name
                            )));
                        }
                    }
                    textured |= texture.amp.iter().any(|&a| a > 0.0);
                }
                Primitive::Fog { .. } => {}
            }
        }
        if !textured {
            return Err(Error::Config(format!(
                "{}: untextured scenes yield no trackable events",
                self.name
            )));
        }
        if !(self.diameter > 0.0) {
            return Err(Error::Config("scene diameter must be positive".into()));
        }
        Ok(())
    }

    /// The field actually rendered: primitives plus the ambient fog.
    pub fn field(&self) -> AnalyticField {
        let mut prims = self.primitives.clone();
        if self.fog > 0.0 {
            prims.push(Primitive::Fog {
                density: self.fog,
                color: [0.5, 0.5, 0.5],
            });
        }
        AnalyticField::new(prims)
    }

    /// Clearance radius a camera must keep from the origin.
    pub fn clearance_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.bounding_radius())
            .fold(0.0, f64::max)
    }

    /// Look up a bundled benchmark scene by name.
    pub fn named(name: &str) -> Result<SceneSpec> {
        match name {
            "orbit-sphere" => Ok(SceneSpec {
                name: name.into(),
                primitives: vec![Primitive::Sphere {
                    center: [0.0, 0.0, 0.0],
                    radius: 0.7,
                    falloff: 0.07,
                    density: 12.0,
                    texture: Texture::new(
                        [0.5, 0.5, 0.5],
                        [0.5, 0.45, 0.48],
                        [8.0, 9.8, 6.5],
                        [0.0, 1.3, 2.1],
                    )
                    .with_sharpness(3.0),
                }],
                fog: 0.02,
                diameter: 2.0,
                background: Background::Black,
            }),
            "box-room" => Ok(SceneSpec {
                name: name.into(),
                primitives: vec![
                    Primitive::Box {
                        center: [0.0, -0.72, 0.0],
                        half_extent: [0.72, 0.1, 0.72],
                        falloff: 0.06,
                        density: 9.0,
                        texture: Texture::new(
                            [0.5, 0.5, 0.45],
                            [0.35, 0.3, 0.3],
                            [9.0, 6.0, 11.0],
                            [0.4, 2.0, 1.1],
                        ),
                    },
                    Primitive::Box {
                        center: [0.45, -0.15, 0.2],
                        half_extent: [0.25, 0.4, 0.25],
                        falloff: 0.06,
                        density: 9.0,
                        texture: Texture::new(
                            [0.45, 0.55, 0.5],
                            [0.3, 0.35, 0.3],
                            [12.0, 8.0, 6.0],
                            [1.9, 0.2, 3.0],
                        ),
                    },
                ],
                fog: 0.02,
                diameter: 2.0,
                background: Background::Black,
            }),
            "mixed" => Ok(SceneSpec {
                name: name.into(),
                primitives: vec![
                    Primitive::Sphere {
                        center: [-0.35, 0.1, 0.1],
                        radius: 0.45,
                        falloff: 0.07,
                        density: 8.0,
                        texture: Texture::new(
                            [0.55, 0.45, 0.5],
                            [0.4, 0.35, 0.4],
                            [8.0, 10.0, 6.0],
                            [0.0, 1.3, 2.1],
                        ),
                    },
                    Primitive::Box {
                        center: [0.45, -0.25, -0.1],
                        half_extent: [0.3, 0.35, 0.3],
                        falloff: 0.06,
                        density: 9.0,
                        texture: Texture::new(
                            [0.5, 0.55, 0.45],
                            [0.35, 0.35, 0.3],
                            [11.0, 7.0, 9.0],
                            [2.2, 0.8, 1.5],
                        ),
                    },
                ],
                fog: 0.02,
                diameter: 2.0,
                background: Background::Black,
            }),
            other => Err(Error::Config(format!(
                "unknown scene {other:?} (expected orbit-sphere, box-room or mixed)"
            ))),
        }
    }
}

/// Camera path families.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Constant-speed arc at fixed radius and height, looking at the origin.
    Orbit {
        radius: f64,
        height: f64,
        start_deg: f64,
        arc_deg: f64,
    },
    /// Orbit base point with a slow Lissajous position perturbation,
    /// looking at the origin.
    Hover {
        radius: f64,
        height: f64,
        start_deg: f64,
        arc_deg: f64,
        amplitude: [f64; 3],
        freq_hz: [f64; 3],
    },
    /// Exact twist line: pose(t) = start + t * velocity.
    Linear {
        start: [f64; 6],
        velocity: [f64; 6],
    },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub n_frames: usize,
    /// Frame interval in seconds.
    pub frame_dt: f64,
}

impl TrajectorySpec {
    /// A gentle hover analogue of the drone sequences: small Lissajous
    /// wobble riding a slow arc.
    pub fn default_hover(n_frames: usize, frame_dt: f64) -> TrajectorySpec {
        TrajectorySpec {
            kind: TrajectoryKind::Hover {
                radius: 2.3,
                height: 0.35,
                start_deg: -40.0,
                arc_deg: 80.0,
                amplitude: [0.1, 0.08, 0.06],
                freq_hz: [0.16, 0.21, 0.12],
            },
            n_frames,
            frame_dt,
        }
    }

    pub fn default_orbit(n_frames: usize, frame_dt: f64) -> TrajectorySpec {
        TrajectorySpec {
            kind: TrajectoryKind::Orbit {
                radius: 2.3,
                height: 0.3,
                start_deg: -55.0,
                arc_deg: 110.0,
            },
            n_frames,
            frame_dt,
        }
    }
}

/// Worst relative secant deviation over sliding windows of `window` frames:
/// max over interior frames of |xi_i - lerp| / |xi_end - xi_start|.
pub fn secant_deviation(poses: &[(f64, Twist)], window: usize) -> f64 {
    let mut worst: f64 = 0.0;
    if poses.len() < window || window < 3 {
        return 0.0;
    }
    for w in poses.windows(window) {
        let (t0, a) = (w[0].0, w[0].1.to_array());
        let (t1, b) = (w[window - 1].0, w[window - 1].1.to_array());
        let disp: f64 = b
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if disp < 1e-15 {
            continue;
        }
        for (t, p) in &w[1..window - 1] {
            let s = (t - t0) / (t1 - t0);
            let dev: f64 = p
                .to_array()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let lerp = a[i] + s * (b[i] - a[i]);
                    (v - lerp) * (v - lerp)
                })
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dev / disp);
        }
    }
    worst
}

/// Generate the ground-truth pose sequence for a trajectory.
pub fn generate_trajectory(spec: &TrajectorySpec, scene: &SceneSpec) -> Result<Vec<(f64, Twist)>> {
    if spec.n_frames < 2 {
        return Err(Error::Config("trajectory needs at least 2 frames".into()));
    }
    let clearance = scene.clearance_radius();
    let eye_at = |t: f64| -> [f64; 3] {
        match &spec.kind {
            TrajectoryKind::Orbit {
                radius,
                height,
                start_deg,
                arc_deg,
            } => {
                let span = spec.frame_dt * (spec.n_frames - 1) as f64;
                let frac = if span > 0.0 { t / span } else { 0.0 };
                let theta = (start_deg + frac * arc_deg).to_radians();
                [radius * theta.sin(), *height, -radius * theta.cos()]
            }
            TrajectoryKind::Hover {
                radius,
                height,
                start_deg,
                arc_deg,
                amplitude,
                freq_hz,
            } => {
                let span = spec.frame_dt * (spec.n_frames - 1) as f64;
                let frac = if span > 0.0 { t / span } else { 0.0 };
                let theta = (start_deg + frac * arc_deg).to_radians();
                let two_pi = 2.0 * std::f64::consts::PI;
                [
                    radius * theta.sin() + amplitude[0] * (two_pi * freq_hz[0] * t).sin(),
                    height + amplitude[1] * (two_pi * freq_hz[1] * t).sin(),
                    -radius * theta.cos() + amplitude[2] * (two_pi * freq_hz[2] * t).cos(),
                ]
            }
            TrajectoryKind::Linear { .. } => [0.0; 3],
        }
    };

    let mut poses = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let t = i as f64 * spec.frame_dt;
        let pose = match &spec.kind {
            TrajectoryKind::Linear { start, velocity } => {
                let xi: [f64; 6] = std::array::from_fn(|k| start[k] + t * velocity[k]);
                Twist::from_array(xi)
            }
            _ => {
                let eye = eye_at(t);
                let r = (eye[0] * eye[0] + eye[1] * eye[1] + eye[2] * eye[2]).sqrt();
                if r <= clearance {
                    return Err(Error::Config(format!(
                        "camera at {eye:?} enters the scene clearance radius {clearance:.3}"
                    )));
                }
                look_at(eye, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0])
            }
        };
        poses.push((t, pose));
    }
    Ok(poses)
}

/// One artifact file with its content hash.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

/// Per-stream ground truth and provenance, mirrored in the JSON-lines
/// sidecar next to the stream CSVs.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StreamMeta {
    pub index: usize,
    pub path: String,
    pub t: f64,
    pub tau: f64,
    pub frame_start: usize,
    pub frame_end: usize,
    pub events: usize,
    pub gt_pose: [f64; 6],
    pub gt_motion: [f64; 6],
}

impl StreamMeta {
    pub fn ground_truth(&self) -> PoseMotion {
        PoseMotion::new(
            Twist::from_array(self.gt_pose),
            Twist::from_array(self.gt_motion),
        )
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub camera: Camera,
    pub render: RenderConfig,
    pub delta: f64,
    pub window: usize,
    pub n_frames: usize,
    pub n_streams: usize,
    /// mean events per stream / (H * W * (window - 1))
    pub sparsity: f64,
    /// Worst 5-frame secant deviation of the twist path.
    pub linearity: f64,
    /// True when every stream is empty.
    pub untrackable: bool,
    pub streams: Vec<StreamMeta>,
    pub files: Vec<ManifestFile>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl DatasetManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::path_in(dir);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(json.as_bytes()))
            .map_err(|e| Error::io(&path, e))
    }

    /// Load a manifest and verify every artifact checksum.
    pub fn load(dir: &Path) -> Result<DatasetManifest> {
        let path = Self::path_in(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported dataset format version {}",
                manifest.format_version
            )));
        }
        for f in &manifest.files {
            let actual = sha256_file(&dir.join(&f.path))?;
            if actual != f.sha256 {
                return Err(Error::Data(format!(
                    "checksum mismatch for {} (expected {}, got {actual})",
                    f.path, f.sha256
                )));
            }
        }
        Ok(manifest)
    }

    /// Ground-truth pose & motion per stream.
    pub fn ground_truth(&self) -> Vec<PoseMotion> {
        self.streams.iter().map(|s| s.ground_truth()).collect()
    }

    /// Read the event streams back from disk.
    pub fn load_streams(&self, dir: &Path) -> Result<Vec<EventStream>> {
        self.streams
            .iter()
            .map(|meta| {
                let events = crate::events::read_events_csv(&dir.join(&meta.path))?;
                EventStream::new(meta.t, meta.tau, events)
            })
            .collect()
    }
}

/// Render a trajectory's frames (gray), derive event streams, and write the
/// versioned artifact directory: frames/%06d.pfm, poses.csv,
/// events/stream_%04d.csv, streams.jsonl, manifest.json.
pub fn generate_dataset(
    scene: &SceneSpec,
    traj: &TrajectorySpec,
    camera: &Camera,
    render_cfg: &RenderConfig,
    delta: f64,
    window: usize,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    scene.validate()?;
    let poses = generate_trajectory(traj, scene)?;
    let linearity = secant_deviation(&poses, window.clamp(3, 5));

    let mut cfg = *render_cfg;
    cfg.white_background = scene.background == Background::White;
    cfg.stratified = false;

    std::fs::create_dir_all(out_dir.join("frames")).map_err(|e| Error::io(out_dir, e))?;
    std::fs::create_dir_all(out_dir.join("events")).map_err(|e| Error::io(out_dir, e))?;

    let field = scene.field();
    // frames render in parallel internally (rows); the frame loop stays
    // serial so memory is bounded and output order fixed
    let frames: Vec<Image> = poses
        .iter()
        .map(|(_, pose)| render_frame(&field, camera, pose, &cfg).to_gray())
        .collect();

    let mut files = Vec::new();
    let frame_paths: Vec<String> = (0..frames.len())
        .map(|i| format!("frames/{i:06}.pfm"))
        .collect();
    let hashes: Vec<Result<String>> = frames
        .par_iter()
        .zip(&frame_paths)
        .map(|(frame, rel)| {
            let p = out_dir.join(rel);
            frame.write_pfm(&p)?;
            sha256_file(&p)
        })
        .collect();
    for (rel, h) in frame_paths.iter().zip(hashes) {
        files.push(ManifestFile {
            path: rel.clone(),
            sha256: h?,
        });
    }

    let mut pose_csv = String::from("t,rho_x,rho_y,rho_z,phi_x,phi_y,phi_z\n");
    for (t, pose) in &poses {
        pose_csv.push_str(&format!("{},{}\n", fmt_f64(*t), pose.to_csv()));
    }
    let poses_path = out_dir.join("poses.csv");
    std::fs::File::create(&poses_path)
        .and_then(|mut f| f.write_all(pose_csv.as_bytes()))
        .map_err(|e| Error::io(&poses_path, e))?;
    files.push(ManifestFile {
        path: "poses.csv".into(),
        sha256: sha256_file(&poses_path)?,
    });

    // event streams + ground truth (window-start pose, secant motion)
    let timestamps: Vec<f64> = poses.iter().map(|(t, _)| *t).collect();
    let streams = ic_stream_from_frames(&frames, &timestamps, delta, window)?;
    let mut metas = Vec::with_capacity(streams.len());
    for (i, stream) in streams.iter().enumerate() {
        let rel = format!("events/stream_{i:04}.csv");
        let p = out_dir.join(&rel);
        write_events_csv(&p, &stream.events)?;
        files.push(ManifestFile {
            path: rel.clone(),
            sha256: sha256_file(&p)?,
        });
        let frame_start = i * (window - 1);
        let frame_end = frame_start + window - 1;
        let xi0 = poses[frame_start].1.to_array();
        let xi1 = poses[frame_end].1.to_array();
        let dt = timestamps[frame_end] - timestamps[frame_start];
        let gt_motion: [f64; 6] = std::array::from_fn(|k| (xi1[k] - xi0[k]) / dt);
        metas.push(StreamMeta {
            index: i,
            path: rel,
            t: stream.t,
            tau: stream.tau,
            frame_start,
            frame_end,
            events: stream.len(),
            gt_pose: xi0,
            gt_motion,
        });
    }

    // JSON-lines sidecar with per-stream window metadata
    let mut sidecar = String::new();
    for meta in &metas {
        sidecar.push_str(
            &serde_json::to_string(meta).map_err(|e| Error::Data(format!("stream sidecar: {e}")))?,
        );
        sidecar.push('\n');
    }
    let sidecar_path = out_dir.join("streams.jsonl");
    std::fs::File::create(&sidecar_path)
        .and_then(|mut f| f.write_all(sidecar.as_bytes()))
        .map_err(|e| Error::io(&sidecar_path, e))?;
    files.push(ManifestFile {
        path: "streams.jsonl".into(),
        sha256: sha256_file(&sidecar_path)?,
    });

    let untrackable = streams.iter().all(|s| s.is_empty());
    if untrackable {
        log::warn!("dataset has no events; flagged untrackable");
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        scene: scene.clone(),
        trajectory: traj.clone(),
        camera: *camera,
        render: cfg,
        delta,
        window,
        n_frames: frames.len(),
        n_streams: streams.len(),
        sparsity: stream_sparsity(&streams, camera.n_pixels(), window),
        linearity,
        untrackable,
        streams: metas,
        files,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Camera poses and rendered RGB views for field training.
#[derive(Clone, Debug)]
pub struct PosedViews {
    pub camera: Camera,
    pub poses: Vec<Twist>,
    pub images: Vec<Image>,
}

/// Axis-aligned box of camera positions to sample training views from.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct PoseBox {
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
}

impl PoseBox {
    /// Shell around the default tracking trajectories.
    pub fn default_shell() -> PoseBox {
        PoseBox {
            center: [0.0, 0.35, -1.85],
            half_extent: [1.7, 0.45, 0.85],
        }
    }
}

/// Render `n_views` look-at views from eye positions sampled uniformly in
/// the pose box (deterministic per seed).
pub fn training_views(
    scene: &SceneSpec,
    camera: &Camera,
    render_cfg: &RenderConfig,
    n_views: usize,
    pose_box: &PoseBox,
    seed: u64,
) -> Result<PosedViews> {
    use rand::{Rng, SeedableRng};
    if n_views < 2 {
        return Err(Error::Config("need at least 2 training views".into()));
    }
    scene.validate()?;
    let mut cfg = *render_cfg;
    cfg.white_background = scene.background == Background::White;
    let clearance = scene.clearance_radius();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let field = scene.field();
    let mut poses = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        // rejection-sample eyes that keep scene clearance
        let eye = loop {
            let eye: [f64; 3] = std::array::from_fn(|a| {
                let h = pose_box.half_extent[a];
                if h > 0.0 {
                    pose_box.center[a] + rng.gen_range(-h..h)
                } else {
                    pose_box.center[a]
                }
            });
            let r = (eye[0] * eye[0] + eye[1] * eye[1] + eye[2] * eye[2]).sqrt();
            if r > clearance {
                break eye;
            }
        };
        poses.push(look_at(eye, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]));
    }
    let images: Vec<Image> = poses
        .iter()
        .map(|pose| render_frame(&field, camera, pose, &cfg))
        .collect();
    Ok(PosedViews {
        camera: *camera,
        poses,
        images,
    })
}

/// Parse poses.csv (t + 6 twist decimals per row).
pub fn read_poses_csv(path: &Path) -> Result<Vec<(f64, Twist)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("t,rho_x,rho_y,rho_z,phi_x,phi_y,phi_z") => {}
        other => {
            return Err(Error::Data(format!(
                "{}: bad poses.csv header {other:?}",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (t_str, rest) = line
            .split_once(',')
            .ok_or_else(|| Error::Data(format!("{}: malformed pose row", path.display())))?;
        let t: f64 = t_str
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad timestamp", path.display())))?;
        out.push((t, Twist::from_csv(rest)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::exp_se3;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn small_camera() -> Camera {
        Camera::with_fov(16, 16, 60.0).unwrap()
    }

    fn small_render() -> RenderConfig {
        RenderConfig::new(16, 0.5, 5.0).unwrap()
    }

    #[test]
    fn named_scenes_validate() {
        for name in ["orbit-sphere", "box-room", "mixed"] {
            let s = SceneSpec::named(name).unwrap();
            s.validate().unwrap();
            // default trajectories orbit at radius 2.3
            assert!(s.clearance_radius() < 2.2, "{name} clearance too large");
        }
        assert!(SceneSpec::named("nope").is_err());
    }

    #[test]
    fn linear_trajectory_has_zero_secant_deviation() {
        let spec = TrajectorySpec {
            kind: TrajectoryKind::Linear {
                start: [0.0, 0.0, -2.3, 0.0, 0.0, 0.0],
                velocity: [0.1, 0.05, 0.0, 0.02, 0.1, 0.0],
            },
            n_frames: 20,
            frame_dt: 0.05,
        };
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let poses = generate_trajectory(&spec, &scene).unwrap();
        assert_eq!(poses.len(), 20);
        assert!(secant_deviation(&poses, 5) < 1e-12);
    }

    #[test]
    fn quarter_orbit_hits_known_angles() {
        let spec = TrajectorySpec {
            kind: TrajectoryKind::Orbit {
                radius: 2.5,
                height: 0.0,
                start_deg: 0.0,
                arc_deg: 90.0,
            },
            n_frames: 4,
            frame_dt: 1.0,
        };
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let poses = generate_trajectory(&spec, &scene).unwrap();
        // eyes at azimuth 0, 30, 60, 90 degrees
        for (i, (_, pose)) in poses.iter().enumerate() {
            let g = exp_se3(pose);
            let theta = (i as f64 * 30.0).to_radians();
            assert_abs_diff_eq!(g.translation[0], 2.5 * theta.sin(), epsilon = 1e-9);
            assert_abs_diff_eq!(g.translation[2], -2.5 * theta.cos(), epsilon = 1e-9);
            // looking at the origin from the arc: rotation angle = azimuth
            let angle = crate::geometry::rotation_error_deg(&Twist::zero(), pose);
            assert_abs_diff_eq!(angle, i as f64 * 30.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn default_hover_is_locally_linear() {
        let spec = TrajectorySpec::default_hover(200, 1.0 / 30.0);
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let poses = generate_trajectory(&spec, &scene).unwrap();
        let dev = secant_deviation(&poses, 5);
        assert!(dev < 0.02, "hover secant deviation {dev} >= 2%");
    }

    #[test]
    fn trajectory_rejects_scene_intrusion() {
        let spec = TrajectorySpec {
            kind: TrajectoryKind::Orbit {
                radius: 0.3,
                height: 0.0,
                start_deg: 0.0,
                arc_deg: 90.0,
            },
            n_frames: 5,
            frame_dt: 0.1,
        };
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        assert!(generate_trajectory(&spec, &scene).is_err());
    }

    #[test]
    fn untextured_scene_rejected() {
        let scene = SceneSpec {
            name: "flat".into(),
            primitives: vec![Primitive::Sphere {
                center: [0.0; 3],
                radius: 0.5,
                falloff: 0.1,
                density: 5.0,
                texture: Texture::flat([0.5, 0.5, 0.5]),
            }],
            fog: 0.0,
            diameter: 2.0,
            background: Background::Black,
        };
        assert!(scene.validate().is_err());
    }

    #[test]
    fn generate_dataset_counts_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let traj = TrajectorySpec::default_hover(21, 1.0 / 30.0);
        let cam = small_camera();
        let manifest =
            generate_dataset(&scene, &traj, &cam, &small_render(), 0.05, 5, dir.path()).unwrap();
        assert_eq!(manifest.n_frames, 21);
        // floor((21 - 1) / 4) = 5 streams, independent window arithmetic
        assert_eq!(manifest.n_streams, (21 - 1) / 4);
        assert!(!manifest.untrackable);
        assert!(manifest.sparsity > 0.0);

        // reload verifies checksums and stream invariants
        let loaded = DatasetManifest::load(dir.path()).unwrap();
        let streams = loaded.load_streams(dir.path()).unwrap();
        assert_eq!(streams.len(), loaded.n_streams);
        for (s, meta) in streams.iter().zip(&loaded.streams) {
            assert_eq!(s.len(), meta.events);
            for e in &s.events {
                assert!(e.u >= s.t - 1e-12 && e.u <= s.t + s.tau + 1e-12);
            }
        }

        // single-byte corruption must be detected
        let victim = dir.path().join(&loaded.files[0].path);
        let mut bytes = std::fs::read(&victim).unwrap();
        let idx = bytes.len() / 2;
        bytes[idx] ^= 0x01;
        std::fs::write(&victim, &bytes).unwrap();
        assert!(DatasetManifest::load(dir.path()).is_err());
    }

    #[test]
    fn dataset_regeneration_is_byte_identical() {
        let scene = SceneSpec::named("mixed").unwrap();
        let traj = TrajectorySpec::default_orbit(9, 0.05);
        let cam = small_camera();
        let dirs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                generate_dataset(&scene, &traj, &cam, &small_render(), 0.05, 5, dir.path())
                    .unwrap();
                dir
            })
            .collect();
        let m0 = std::fs::read(dirs[0].path().join("manifest.json")).unwrap();
        let m1 = std::fs::read(dirs[1].path().join("manifest.json")).unwrap();
        assert_eq!(m0, m1);
        let f0 = std::fs::read(dirs[0].path().join("frames/000003.pfm")).unwrap();
        let f1 = std::fs::read(dirs[1].path().join("frames/000003.pfm")).unwrap();
        assert_eq!(f0, f1);
    }

    #[test]
    fn static_trajectory_yields_untrackable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let traj = TrajectorySpec {
            kind: TrajectoryKind::Linear {
                start: [0.0, 0.3, -2.3, 0.0, 0.0, 0.0],
                velocity: [0.0; 6],
            },
            n_frames: 9,
            frame_dt: 0.05,
        };
        let manifest = generate_dataset(
            &scene,
            &traj,
            &small_camera(),
            &small_render(),
            0.05,
            5,
            dir.path(),
        )
        .unwrap();
        assert!(manifest.untrackable);
        assert!(manifest.streams.iter().all(|s| s.events == 0));
    }

    #[test]
    fn stream_ground_truth_matches_secant_within_linearity_bound() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let traj = TrajectorySpec::default_hover(21, 1.0 / 30.0);
        let manifest = generate_dataset(
            &scene,
            &traj,
            &small_camera(),
            &small_render(),
            0.05,
            5,
            dir.path(),
        )
        .unwrap();
        let poses = read_poses_csv(&dir.path().join("poses.csv")).unwrap();
        for meta in &manifest.streams {
            let start = poses[meta.frame_start].1.to_array();
            let end = poses[meta.frame_end].1.to_array();
            // endpoint reproduction: gt_pose + tau * gt_motion == end pose
            for k in 0..6 {
                let predicted = meta.gt_pose[k] + meta.tau * meta.gt_motion[k];
                assert_relative_eq!(predicted, end[k], max_relative = 1e-9, epsilon = 1e-9);
                assert_relative_eq!(meta.gt_pose[k], start[k], max_relative = 1e-9, epsilon = 1e-9);
            }
        }
        assert!(manifest.linearity < 0.02);
    }

    #[test]
    fn training_views_cover_box_and_respect_seed() {
        let scene = SceneSpec::named("orbit-sphere").unwrap();
        let cam = small_camera();
        let cfg = small_render();
        let pb = PoseBox::default_shell();
        let a = training_views(&scene, &cam, &cfg, 4, &pb, 11).unwrap();
        let b = training_views(&scene, &cam, &cfg, 4, &pb, 11).unwrap();
        let c = training_views(&scene, &cam, &cfg, 4, &pb, 12).unwrap();
        assert_eq!(a.poses, b.poses);
        assert_ne!(a.poses, c.poses);

        // zero-volume box collapses to one pose
        let point = PoseBox {
            center: [0.0, 0.3, -2.2],
            half_extent: [0.0; 3],
        };
        let v = training_views(&scene, &cam, &cfg, 3, &point, 1).unwrap();
        assert!(v.poses.windows(2).all(|w| w[0] == w[1]));
    }
}
