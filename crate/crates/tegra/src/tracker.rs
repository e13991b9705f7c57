//! Sparse pose & motion estimation from intensity-change events, plus the
//! dense photometric baseline.
//!
//! The sparse tracker minimizes the mean squared error between the temporal
//! gradient of the rendered scene and observed event rates. Rendering is
//! evaluated at the twist `pose + u * motion` for each event's relative
//! timestamp `u`; differentiating that twist once in the motion direction
//! (inner dual) and once per twist coordinate (outer jet) yields, in a
//! single rendering pass per event, the temporal gradient, its pose
//! gradient, and its motion gradient.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::autodiff::{Dual, Jet};
use crate::events::{sample_events, BinaryEvent, EventStream};
use crate::field::{render_pixel_generic, rgb_to_gray, Field, RenderConfig};
use crate::geometry::{rotation_error_deg, translation_error, Camera, Twist};
use crate::{fmt_f64, Error, Result};

/// Camera state over one event window: pose twist and its time rate.
/// The evaluation pose at relative time `u` is `pose + u * motion`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseMotion {
    pub pose: Twist,
    pub motion: Twist,
}

impl PoseMotion {
    pub fn new(pose: Twist, motion: Twist) -> PoseMotion {
        PoseMotion { pose, motion }
    }

    pub fn stationary(pose: Twist) -> PoseMotion {
        PoseMotion {
            pose,
            motion: Twist::zero(),
        }
    }

    /// Twist at relative time `u` (plain 6-vector arithmetic).
    pub fn at(&self, u: f64) -> Twist {
        self.pose.add(&self.motion.scale(u))
    }
}

/// How an optimization run decides it is done.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Termination {
    /// Run exactly `n_itr` iterations.
    FixedIterations,
    /// Stop once the combined pose & motion update norm drops below the
    /// threshold (still capped at `n_itr`).
    UpdateNorm(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackerConfig {
    pub n_itr: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub events_per_update: usize,
    pub seed: u64,
    pub termination: Termination,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            n_itr: 1000,
            lr_initial: 5e-5,
            lr_final: 5e-6,
            events_per_update: 128,
            seed: 0,
            termination: Termination::FixedIterations,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_itr < 1 {
            return Err(Error::Config("n_itr must be >= 1".into()));
        }
        if !(self.lr_initial >= self.lr_final && self.lr_final > 0.0) {
            return Err(Error::Config("require lr_initial >= lr_final > 0".into()));
        }
        if self.events_per_update < 1 {
            return Err(Error::Config("events_per_update must be >= 1".into()));
        }
        Ok(())
    }

    fn lr_at(&self, iter: usize) -> f64 {
        if self.n_itr <= 1 {
            return self.lr_initial;
        }
        let t = iter as f64 / (self.n_itr - 1) as f64;
        self.lr_initial * (self.lr_final / self.lr_initial).powf(t)
    }
}

/// Outcome of one stream's optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TrackStatus {
    Tracked,
    /// Too few events to constrain 12 unknowns; pose carried forward.
    Skipped,
    /// Optimization aborted (non-finite loss); pose carried forward.
    Failed,
}

/// Per-stream tracking output.
#[derive(Clone, Debug)]
pub struct TrackRecord {
    pub stream_index: usize,
    pub status: TrackStatus,
    pub estimate: PoseMotion,
    pub loss_trajectory: Vec<f64>,
    pub iterations: usize,
    /// Events available in the stream.
    pub events_in_stream: usize,
    /// Event pixels evaluated per update.
    pub events_per_update: usize,
    pub millis: f64,
    pub rot_err_deg: Option<f64>,
    pub trans_err: Option<f64>,
}

impl TrackRecord {
    pub fn final_loss(&self) -> f64 {
        self.loss_trajectory.last().copied().unwrap_or(f64::NAN)
    }

    /// Attach ground-truth pose errors.
    pub fn score_against(&mut self, truth: &PoseMotion) {
        self.rot_err_deg = Some(rotation_error_deg(&self.estimate.pose, &truth.pose));
        self.trans_err = Some(translation_error(&self.estimate.pose, &truth.pose));
    }
}

/// Exact d/du of the rendered gray intensity at pixel (x, y) for the
/// evaluation pose `pose + u * motion`.
pub fn temporal_gradient(
    field: &impl Field,
    camera: &Camera,
    pm: &PoseMotion,
    x: f64,
    y: f64,
    u: f64,
    cfg: &RenderConfig,
) -> f64 {
    let xi = pm.at(u).to_array();
    let dxi = pm.motion.to_array();
    let seeded: [Dual<f64>; 6] = std::array::from_fn(|i| Dual::seeded(xi[i], dxi[i]));
    let rgb = render_pixel_generic(field, camera, &seeded, x, y, cfg);
    rgb_to_gray(rgb).tangent
}

/// Mean squared error between the temporal gradient of the field and the
/// observed event rates.
pub fn tegra_loss(
    field: &impl Field,
    camera: &Camera,
    stream: &EventStream,
    pm: &PoseMotion,
    cfg: &RenderConfig,
) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::Data("empty event stream".into()));
    }
    let residuals: Vec<f64> = stream
        .events
        .par_iter()
        .map(|e| {
            let g = temporal_gradient(field, camera, pm, e.x, e.y, stream.relative(e), cfg);
            let r = g - e.r;
            r * r
        })
        .collect();
    Ok(residuals.iter().sum::<f64>() / residuals.len() as f64)
}

/// Loss plus its gradient w.r.t. the 12 pose & motion coordinates, one
/// rendering pass per event.
///
/// Writing the gray intensity as I(xi) with xi = S + u * dS, the per-event
/// residual is r = grad_xi(I) . dS - e_r, and
///   dr/dS_j  = (H dS)_j
///   dr/ddS_j = u (H dS)_j + grad_xi(I)_j
/// where H is the Hessian of I in xi. The jet-over-dual evaluation returns
/// I, dI/du, grad_xi(I) and the Hessian-vector product H dS together.
pub fn tegra_loss_grad(
    field: &impl Field,
    camera: &Camera,
    stream: &EventStream,
    pm: &PoseMotion,
    cfg: &RenderConfig,
) -> Result<(f64, [f64; 12])> {
    if stream.is_empty() {
        return Err(Error::Data("empty event stream".into()));
    }
    let dxi = pm.motion.to_array();
    let per_event: Vec<(f64, [f64; 12])> = stream
        .events
        .par_iter()
        .map(|e| {
            let u = stream.relative(e);
            let xi = pm.at(u).to_array();
            let seeded: [Jet<Dual<f64>, 6>; 6] = std::array::from_fn(|i| {
                let mut tangent = [Dual::lift(0.0); 6];
                tangent[i] = Dual::lift(1.0);
                Jet::new(Dual::seeded(xi[i], dxi[i]), tangent)
            });
            let gray = rgb_to_gray(render_pixel_generic(field, camera, &seeded, e.x, e.y, cfg));
            let didu = gray.value.tangent;
            let residual = didu - e.r;
            let mut g = [0.0f64; 12];
            for j in 0..6 {
                let grad_xi = gray.tangent[j].value;
                let hvp = gray.tangent[j].tangent;
                g[j] = 2.0 * residual * hvp;
                g[6 + j] = 2.0 * residual * (u * hvp + grad_xi);
            }
            (residual * residual, g)
        })
        .collect();

    let n = per_event.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0f64; 12];
    for (l, g) in &per_event {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    loss /= n;
    for v in grad.iter_mut() {
        *v /= n;
    }
    Ok((loss, grad))
}

/// Gradient-descent pose & motion refinement on one event stream; resamples
/// `events_per_update` events every iteration.
pub fn tegra_optimize(
    field: &impl Field,
    camera: &Camera,
    stream: &EventStream,
    init: PoseMotion,
    cfg: &TrackerConfig,
    render: &RenderConfig,
) -> Result<(PoseMotion, TrackRecord)> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::Data("empty event stream".into()));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Instant::now();
    let mut pm = init;
    let mut trajectory = Vec::with_capacity(cfg.n_itr);
    let mut iterations = 0;
    for iter in 0..cfg.n_itr {
        let batch = sample_events(stream, cfg.events_per_update, rng.gen());
        let (loss, grad) = tegra_loss_grad(field, camera, &batch, &pm, render)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite tracking loss at iteration {iter} (pose {:?})",
                pm.pose
            )));
        }
        trajectory.push(loss);
        let lr = cfg.lr_at(iter);
        let mut pose = pm.pose.to_array();
        let mut motion = pm.motion.to_array();
        let mut update_sq = 0.0;
        for j in 0..6 {
            let dp = lr * grad[j];
            let dm = lr * grad[6 + j];
            pose[j] -= dp;
            motion[j] -= dm;
            update_sq += dp * dp + dm * dm;
        }
        pm = PoseMotion::new(Twist::from_array(pose), Twist::from_array(motion));
        iterations = iter + 1;
        if let Termination::UpdateNorm(eps) = cfg.termination {
            if update_sq.sqrt() < eps {
                break;
            }
        }
    }
    let record = TrackRecord {
        stream_index: 0,
        status: TrackStatus::Tracked,
        estimate: pm,
        loss_trajectory: trajectory,
        iterations,
        events_in_stream: stream.len(),
        events_per_update: cfg.events_per_update.min(stream.len()),
        millis: start.elapsed().as_secs_f64() * 1e3,
        rot_err_deg: None,
        trans_err: None,
    };
    Ok((pm, record))
}

/// Streams with fewer events than this are skipped: 12 unknowns need at
/// least 12 constraints.
pub const MIN_EVENTS_PER_STREAM: usize = 12;

/// Track a time-ordered stream sequence. Each stream's optimization is
/// seeded by the previous optimum extrapolated along its own motion
/// (`pose + gap * motion`); failed or degenerate streams are flagged and
/// the last good state carries forward.
pub fn track_sequence(
    field: &impl Field,
    camera: &Camera,
    streams: &[EventStream],
    init: PoseMotion,
    cfg: &TrackerConfig,
    render: &RenderConfig,
) -> Vec<TrackRecord> {
    let mut records = Vec::with_capacity(streams.len());
    let mut state = init;
    let mut prev_t: Option<f64> = None;
    for (idx, stream) in streams.iter().enumerate() {
        // linear-motion warm start across the gap between window starts
        let warm = match prev_t {
            Some(t0) => PoseMotion::new(
                state.pose.add(&state.motion.scale(stream.t - t0)),
                state.motion,
            ),
            None => state,
        };
        let mut cfg_i = *cfg;
        cfg_i.seed = cfg.seed.wrapping_add(idx as u64);
        let (status, estimate, record) = if stream.len() < MIN_EVENTS_PER_STREAM {
            (TrackStatus::Skipped, warm, None)
        } else {
            match tegra_optimize(field, camera, stream, warm, &cfg_i, render) {
                Ok((pm, rec)) => (TrackStatus::Tracked, pm, Some(rec)),
                Err(e) => {
                    log::warn!("stream {idx}: {e}");
                    (TrackStatus::Failed, warm, None)
                }
            }
        };
        let mut rec = record.unwrap_or(TrackRecord {
            stream_index: idx,
            status,
            estimate,
            loss_trajectory: Vec::new(),
            iterations: 0,
            events_in_stream: stream.len(),
            events_per_update: 0,
            millis: 0.0,
            rot_err_deg: None,
            trans_err: None,
        });
        rec.stream_index = idx;
        rec.status = status;
        records.push(rec);
        state = estimate;
        prev_t = Some(stream.t);
    }
    records
}

/// Soft sign x / (beta + |x|).
pub fn soft_sgn(x: f64, beta: f64) -> f64 {
    x / (beta + x.abs())
}

/// Binary-event variant of the tracking loss: mean squared error between
/// the soft sign of the temporal gradient and event polarities. Event
/// timestamps are taken relative to `window_start`.
pub fn binary_loss(
    field: &impl Field,
    camera: &Camera,
    window_start: f64,
    events: &[BinaryEvent],
    pm: &PoseMotion,
    beta: f64,
    cfg: &RenderConfig,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    if events.is_empty() {
        return Err(Error::Data("empty binary event set".into()));
    }
    for e in events {
        if e.p != 1 && e.p != -1 {
            return Err(Error::Data(format!("polarity must be +/-1, got {}", e.p)));
        }
    }
    let per_event: Vec<f64> = events
        .par_iter()
        .map(|e| {
            let g = temporal_gradient(field, camera, pm, e.x, e.y, e.u - window_start, cfg);
            let r = soft_sgn(g, beta) - e.p as f64;
            r * r
        })
        .collect();
    Ok(per_event.iter().sum::<f64>() / events.len() as f64)
}

/// Settings for the dense photometric baseline.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenseConfig {
    pub n_itr: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Pixels per gradient-accumulation chunk.
    pub chunk: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig {
            n_itr: 100,
            lr_initial: 5e-4,
            lr_final: 5e-5,
            chunk: 4000,
        }
    }
}

impl DenseConfig {
    fn lr_at(&self, iter: usize) -> f64 {
        if self.n_itr <= 1 {
            return self.lr_initial;
        }
        let t = iter as f64 / (self.n_itr - 1) as f64;
        self.lr_initial * (self.lr_final / self.lr_initial).powf(t)
    }
}

/// Gradient of the mean squared gray photometric error at `pose`,
/// accumulated over pixel chunks exactly as the descent loop applies it.
pub fn dense_loss_grad(
    field: &impl Field,
    camera: &Camera,
    frame: &crate::image::Image,
    pose: &Twist,
    chunk: usize,
    render: &RenderConfig,
) -> (f64, [f64; 6]) {
    let width = camera.width as usize;
    let n_px = camera.n_pixels();
    let xi = pose.to_array();
    let pixels: Vec<usize> = (0..n_px).collect();
    let partials: Vec<(f64, [f64; 6])> = pixels
        .par_chunks(chunk.max(1))
        .map(|chunk_px| {
            let mut l = 0.0;
            let mut g = [0.0f64; 6];
            for &i in chunk_px {
                let (x, y) = ((i % width) as f64, (i / width) as f64);
                let seeded: [Jet<f64, 6>; 6] = std::array::from_fn(|k| {
                    let mut t = [0.0; 6];
                    t[k] = 1.0;
                    Jet::new(xi[k], t)
                });
                let gray =
                    rgb_to_gray(render_pixel_generic(field, camera, &seeded, x, y, render));
                let r = gray.value - frame.data()[i];
                l += r * r;
                for k in 0..6 {
                    g[k] += 2.0 * r * gray.tangent[k];
                }
            }
            (l, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = [0.0f64; 6];
    for (l, g) in &partials {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    loss /= n_px as f64;
    for v in grad.iter_mut() {
        *v /= n_px as f64;
    }
    (loss, grad)
}

/// Full-frame photometric pose alignment (pose only, no motion): gradient
/// descent on the mean squared gray intensity error against `frame`.
pub fn dense_track(
    field: &impl Field,
    camera: &Camera,
    frame: &crate::image::Image,
    init: Twist,
    cfg: &DenseConfig,
    render: &RenderConfig,
) -> Result<(Twist, TrackRecord)> {
    if frame.channels() != 1 {
        return Err(Error::Shape("dense tracking expects a gray frame".into()));
    }
    if frame.width() != camera.width || frame.height() != camera.height {
        return Err(Error::Shape(format!(
            "frame {}x{} does not match camera {}x{}",
            frame.width(),
            frame.height(),
            camera.width,
            camera.height
        )));
    }
    let start = Instant::now();
    let n_px = camera.n_pixels();
    let mut pose = init;
    let mut trajectory = Vec::with_capacity(cfg.n_itr);
    for iter in 0..cfg.n_itr {
        let (loss, grad) = dense_loss_grad(field, camera, frame, &pose, cfg.chunk, render);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite dense loss at iteration {iter}"
            )));
        }
        trajectory.push(loss);
        let lr = cfg.lr_at(iter);
        let mut p = pose.to_array();
        for k in 0..6 {
            p[k] -= lr * grad[k];
        }
        pose = Twist::from_array(p);
    }
    let record = TrackRecord {
        stream_index: 0,
        status: TrackStatus::Tracked,
        estimate: PoseMotion::stationary(pose),
        iterations: trajectory.len(),
        loss_trajectory: trajectory,
        events_in_stream: n_px,
        events_per_update: n_px,
        millis: start.elapsed().as_secs_f64() * 1e3,
        rot_err_deg: None,
        trans_err: None,
    };
    Ok((pose, record))
}

/// Emit records as CSV: stream index, status, iterations, final loss,
/// ground-truth errors, events used, wall-clock.
pub fn write_track_records_csv(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut buf = String::from(
        "stream,status,iterations,final_loss,rot_err_deg,trans_err,events_in_stream,events_per_update,millis\n",
    );
    for r in records {
        buf.push_str(&format!(
            "{},{:?},{},{},{},{},{},{},{}\n",
            r.stream_index,
            r.status,
            r.iterations,
            fmt_f64(r.final_loss()),
            r.rot_err_deg.map(fmt_f64).unwrap_or_default(),
            r.trans_err.map(fmt_f64).unwrap_or_default(),
            r.events_in_stream,
            r.events_per_update,
            fmt_f64(r.millis),
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Emit loss trajectories as JSON lines for plotting.
pub fn write_loss_trajectories_jsonl(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        let line = serde_json::json!({
            "stream": r.stream_index,
            "loss": r.loss_trajectory,
        });
        buf.push_str(&line.to_string());
        buf.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
