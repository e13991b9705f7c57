use super::{Field, FieldSample};
use crate::autodiff::Real;

// Fixed per-channel mixing directions for procedural textures; any smooth
// scalar function of position works, these just decorrelate the channels.
const TEX_DIRS: [[f64; 3]; 3] = [[1.0, 0.7, 0.3], [0.3, 1.0, 0.7], [0.7, 0.3, 1.0]];

// Keeps the density-weighted color average defined where total density
// vanishes.
const COLOR_EPS: f64 = 1e-6;

/// Smooth procedural color per channel:
/// `base + amp * shape(sin(freq * <dir, p> + phase))`, where `shape` is a
/// normalized sigmoid that squares up the wave as `sharpness` grows
/// (sharpness 0 keeps the pure sine). Construction clamps `base +/- amp`
/// into [0, 1].
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct Texture {
    pub base: [f64; 3],
    pub amp: [f64; 3],
    pub freq: [f64; 3],
    pub phase: [f64; 3],
    #[serde(default)]
    pub sharpness: f64,
}

impl Texture {
    pub fn new(base: [f64; 3], amp: [f64; 3], freq: [f64; 3], phase: [f64; 3]) -> Texture {
        let mut t = Texture {
            base,
            amp,
            freq,
            phase,
            sharpness: 0.0,
        };
        for c in 0..3 {
            t.amp[c] = t.amp[c].abs().min(t.base[c]).min(1.0 - t.base[c]);
        }
        t
    }

    pub fn with_sharpness(mut self, sharpness: f64) -> Texture {
        self.sharpness = sharpness.max(0.0);
        self
    }

    pub fn flat(color: [f64; 3]) -> Texture {
        Texture {
            base: color,
            amp: [0.0; 3],
            freq: [0.0; 3],
            phase: [0.0; 3],
            sharpness: 0.0,
        }
    }

    fn eval<T: Real>(&self, p: &[T; 3]) -> [T; 3] {
        std::array::from_fn(|c| {
            let d = TEX_DIRS[c];
            let proj =
                p[0] * T::constant(d[0]) + p[1] * T::constant(d[1]) + p[2] * T::constant(d[2]);
            let wave = (proj * T::constant(self.freq[c]) + T::constant(self.phase[c])).sin();
            let shaped = if self.sharpness > 0.0 {
                // odd, C-infinity, maps [-1,1] onto [-1,1]
                let k = T::constant(self.sharpness);
                let norm = 2.0 * crate::autodiff::Real::sigmoid(self.sharpness) - 1.0;
                ((wave * k).sigmoid() * T::constant(2.0) - T::constant(1.0))
                    * T::constant(1.0 / norm)
            } else {
                wave
            };
            T::constant(self.base[c]) + T::constant(self.amp[c]) * shaped
        })
    }
}

/// Closed-form scene primitives with C1 density falloffs.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub enum Primitive {
    /// Solid sphere: density ramps from `density` inside to 0 outside over
    /// a falloff shell of the given width.
    Sphere {
        center: [f64; 3],
        radius: f64,
        falloff: f64,
        density: f64,
        texture: Texture,
    },
    /// Axis-aligned box with smoothed faces.
    Box {
        center: [f64; 3],
        half_extent: [f64; 3],
        falloff: f64,
        density: f64,
        texture: Texture,
    },
    /// Homogeneous participating medium.
    Fog { density: f64, color: [f64; 3] },
}

impl Primitive {
    fn eval<T: Real>(&self, p: &[T; 3]) -> (T, [T; 3]) {
        match self {
            Primitive::Sphere {
                center,
                radius,
                falloff,
                density,
                texture,
            } => {
                let d = [
                    p[0] - T::constant(center[0]),
                    p[1] - T::constant(center[1]),
                    p[2] - T::constant(center[2]),
                ];
                let dist_sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                // regularized norm keeps the tangent finite at the center
                let r = (dist_sq + T::constant(1e-12)).sqrt();
                let sigma = T::constant(*density)
                    * ((T::constant(*radius) - r) / T::constant(*falloff)).sigmoid();
                // paint on the direction from the center so the texture is
                // near-constant along entry rays instead of averaging out;
                // the softened norm keeps it smooth through the (occluded)
                // center
                let rn = (dist_sq + T::constant(0.04)).sqrt();
                let n = [d[0] / rn, d[1] / rn, d[2] / rn];
                (sigma, texture.eval(&n))
            }
            Primitive::Box {
                center,
                half_extent,
                falloff,
                density,
                texture,
            } => {
                let mut inside = T::constant(*density);
                for a in 0..3 {
                    let d = p[a] - T::constant(center[a]);
                    let sd = (d * d + T::constant(1e-12)).sqrt(); // smooth |d|
                    inside = inside
                        * ((T::constant(half_extent[a]) - sd) / T::constant(*falloff)).sigmoid();
                }
                (inside, texture.eval(p))
            }
            Primitive::Fog { density, color } => (
                T::constant(*density),
                [
                    T::constant(color[0]),
                    T::constant(color[1]),
                    T::constant(color[2]),
                ],
            ),
        }
    }

    /// Conservative bounding radius around the world origin, used for
    /// camera clearance checks.
    pub fn bounding_radius(&self) -> f64 {
        fn norm(v: &[f64; 3]) -> f64 {
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        }
        match self {
            Primitive::Sphere {
                center,
                radius,
                falloff,
                ..
            } => norm(center) + radius + 4.0 * falloff,
            Primitive::Box {
                center,
                half_extent,
                falloff,
                ..
            } => norm(center) + norm(half_extent) + 4.0 * falloff,
            Primitive::Fog { .. } => 0.0,
        }
    }
}

/// Differentiable closed-form scene: a sum of primitive densities with a
/// density-weighted color average.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AnalyticField {
    pub primitives: Vec<Primitive>,
}

impl AnalyticField {
    pub fn new(primitives: Vec<Primitive>) -> AnalyticField {
        AnalyticField { primitives }
    }

    /// A textured sphere in light fog; the default smoke-test scene.
    pub fn demo_sphere() -> AnalyticField {
        AnalyticField::new(vec![
            Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.7,
                falloff: 0.07,
                density: 12.0,
                texture: Texture::new(
                    [0.5, 0.5, 0.5],
                    [0.5, 0.45, 0.48],
                    [8.0, 9.8, 6.5],
                    [0.0, 1.3, 2.1],
                ),
            },
            Primitive::Fog {
                density: 0.02,
                color: [0.5, 0.5, 0.5],
            },
        ])
    }
}

impl Field for AnalyticField {
    fn sample<T: Real>(&self, p: [T; 3]) -> FieldSample<T> {
        let mut sigma = T::constant(0.0);
        let mut weighted = [
            T::constant(0.5 * COLOR_EPS),
            T::constant(0.5 * COLOR_EPS),
            T::constant(0.5 * COLOR_EPS),
        ];
        for prim in &self.primitives {
            let (s, c) = prim.eval(&p);
            sigma = sigma + s;
            for ch in 0..3 {
                weighted[ch] = weighted[ch] + s * c[ch];
            }
        }
        let denom = sigma + T::constant(COLOR_EPS);
        FieldSample {
            sigma,
            color: [
                weighted[0] / denom,
                weighted[1] / denom,
                weighted[2] / denom,
            ],
        }
    }
}
