//! Implicit scene fields and quadrature volume rendering.
//!
//! A [`Field`] maps a 3D point to density and color. Rendering integrates
//! transmittance-weighted color along camera rays on a fixed depth
//! partition. Every path here is generic over [`Real`], so the same
//! rendering code produces plain pixels, pose derivatives, and the
//! second-order quantities the tracker needs.

mod analytic;
mod mlp;

pub use analytic::{AnalyticField, Primitive, Texture};
pub use mlp::MlpField;

use crate::autodiff::Real;
use crate::geometry::{pixel_ray_generic, Camera, Twist};
use crate::image::Image;
use crate::{Error, Result};

/// Scenes are confined to the [-1, 1]^3 box; coordinates are divided by
/// this bound before positional encoding so encoded inputs stay in [-1, 1]
/// for every point a desk-scale camera can see.
pub const SCENE_BOUND: f64 = 3.0;

/// Density (1 / scene unit) and RGB color at a point.
#[derive(Clone, Copy, Debug)]
pub struct FieldSample<T: Real> {
    pub sigma: T,
    pub color: [T; 3],
}

/// A queryable scene. Implementations must keep `sigma >= 0` and color
/// channels in [0, 1] for every input.
pub trait Field: Sync {
    fn sample<T: Real>(&self, p: [T; 3]) -> FieldSample<T>;
}

/// Either scene backend behind one dispatch point (CLI `--field`).
pub enum SceneField {
    Analytic(AnalyticField),
    Mlp(MlpField),
}

impl Field for SceneField {
    fn sample<T: Real>(&self, p: [T; 3]) -> FieldSample<T> {
        match self {
            SceneField::Analytic(f) => f.sample(p),
            SceneField::Mlp(f) => f.sample(p),
        }
    }
}

/// Quadrature settings for volume rendering.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderConfig {
    pub n_samples: usize,
    pub z_near: f64,
    pub z_far: f64,
    pub stratified: bool,
    pub white_background: bool,
}

impl RenderConfig {
    pub fn new(n_samples: usize, z_near: f64, z_far: f64) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::Config("n_samples must be >= 2".into()));
        }
        if !(z_near < z_far && z_near > 0.0) {
            return Err(Error::Config("require 0 < z_near < z_far".into()));
        }
        Ok(RenderConfig {
            n_samples,
            z_near,
            z_far,
            stratified: false,
            white_background: false,
        })
    }

    pub fn delta(&self) -> f64 {
        (self.z_far - self.z_near) / self.n_samples as f64
    }

    /// Deterministic midpoint depths.
    pub fn midpoint_depths(&self) -> Vec<f64> {
        let d = self.delta();
        (0..self.n_samples)
            .map(|i| self.z_near + (i as f64 + 0.5) * d)
            .collect()
    }
}

/// Positional encoding: `p` followed by sin(2^k pi p), cos(2^k pi p) for
/// k = 0..L-1, componentwise; output length 3 + 6 L.
pub fn positional_encoding<T: Real>(p: [T; 3], l: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(3 + 6 * l);
    out.extend_from_slice(&p);
    let mut freq = std::f64::consts::PI;
    for _ in 0..l {
        for c in p {
            out.push((c * T::constant(freq)).sin());
        }
        for c in p {
            out.push((c * T::constant(freq)).cos());
        }
        freq *= 2.0;
    }
    out
}

/// Rec.601 luma.
pub fn rgb_to_gray<T: Real>(c: [T; 3]) -> T {
    c[0] * T::constant(0.299) + c[1] * T::constant(0.587) + c[2] * T::constant(0.114)
}

/// Render one pixel for a twist pose whose components may carry tangents.
pub fn render_pixel_generic<T: Real>(
    field: &impl Field,
    camera: &Camera,
    pose: &[T; 6],
    x: f64,
    y: f64,
    cfg: &RenderConfig,
) -> [T; 3] {
    let (origin, dir) = pixel_ray_generic(camera, pose, x, y);
    let depths = cfg.midpoint_depths();
    render_ray(field, &origin, &dir, &depths, cfg)
}

/// Plain-scalar pixel render.
pub fn render_pixel(
    field: &impl Field,
    camera: &Camera,
    pose: &Twist,
    x: f64,
    y: f64,
    cfg: &RenderConfig,
) -> [f64; 3] {
    render_pixel_generic(field, camera, &pose.to_array(), x, y, cfg)
}

/// Quadrature along a ray with explicit depths (bin width from `cfg`).
pub fn render_ray<T: Real>(
    field: &impl Field,
    origin: &[T; 3],
    dir: &[T; 3],
    depths: &[f64],
    cfg: &RenderConfig,
) -> [T; 3] {
    let delta = T::constant(cfg.delta());
    let mut transmittance = T::constant(1.0);
    let mut rgb = [T::constant(0.0); 3];
    for &z in depths {
        let zt = T::constant(z);
        let p = [
            origin[0] + dir[0] * zt,
            origin[1] + dir[1] * zt,
            origin[2] + dir[2] * zt,
        ];
        let s = field.sample(p);
        let decay = (-(s.sigma * delta)).exp();
        let next = transmittance * decay;
        let w = transmittance - next;
        for c in 0..3 {
            rgb[c] = rgb[c] + w * s.color[c];
        }
        transmittance = next;
    }
    if cfg.white_background {
        for c in rgb.iter_mut() {
            *c = *c + transmittance;
        }
    }
    rgb
}

/// Per-sample quadrature weights and final transmittance for one pixel.
/// By construction `weights.sum() + t_final == 1` exactly.
pub fn render_weights(
    field: &impl Field,
    camera: &Camera,
    pose: &Twist,
    x: f64,
    y: f64,
    cfg: &RenderConfig,
) -> (Vec<f64>, f64) {
    let xi = pose.to_array();
    let (origin, dir) = pixel_ray_generic::<f64>(camera, &xi, x, y);
    let delta = cfg.delta();
    let mut t = 1.0f64;
    let mut weights = Vec::with_capacity(cfg.n_samples);
    for z in cfg.midpoint_depths() {
        let p = [
            origin[0] + dir[0] * z,
            origin[1] + dir[1] * z,
            origin[2] + dir[2] * z,
        ];
        let s = field.sample(p);
        let next = t * (-(s.sigma * delta)).exp();
        weights.push(t - next);
        t = next;
    }
    (weights, t)
}

/// Render the full pixel grid. Deterministic; rows are rendered in parallel
/// and written to disjoint slices.
pub fn render_frame(field: &impl Field, camera: &Camera, pose: &Twist, cfg: &RenderConfig) -> Image {
    use rayon::prelude::*;
    let w = camera.width as usize;
    let mut img = Image::zeros(camera.width, camera.height, 3);
    let xi = pose.to_array();
    img.data_mut()
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let rgb =
                    render_pixel_generic::<f64>(field, camera, &xi, x as f64, y as f64, cfg);
                row[x * 3..x * 3 + 3].copy_from_slice(&rgb);
            }
        });
    img
}

/// Render a frame and collapse it to a single gray channel.
pub fn render_frame_gray(
    field: &impl Field,
    camera: &Camera,
    pose: &Twist,
    cfg: &RenderConfig,
) -> Image {
    let rgb = render_frame(field, camera, pose, cfg);
    rgb.to_gray()
}
