//! SE(3)/se(3) algebra, pinhole camera model, and ray generation shared by
//! rendering, simulation, and tracking.
//!
//! Poses live in twist coordinates (rho, phi) and are exponentiated on
//! evaluation; pose arithmetic (the linear-motion model `pose + u * motion`)
//! is plain 6-vector arithmetic. The exponential map is generic over
//! [`Real`] so derivative carriers flow through ray generation unchanged.

use crate::autodiff::Real;
use crate::{Error, Result};

/// Element of se(3): 3-vector translation part `rho` (scene units) and
/// 3-vector rotation part `phi` (radians, axis-angle). Canonicalized to
/// |phi| < pi at construction. Twist arithmetic is componentwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub rho: [f64; 3],
    pub phi: [f64; 3],
}

impl Twist {
    /// Build a twist, wrapping the rotation angle into (-pi, pi).
    ///
    /// Panics on non-finite components or a rotation that canonicalizes to
    /// exactly pi (which has no unique axis-angle representative).
    pub fn new(rho: [f64; 3], phi: [f64; 3]) -> Self {
        assert!(
            rho.iter().chain(phi.iter()).all(|v| v.is_finite()),
            "twist components must be finite"
        );
        let theta = norm3(&phi);
        if theta < std::f64::consts::PI {
            return Twist { rho, phi };
        }
        // wrap theta into (-pi, pi]: rotation by theta == rotation by
        // theta - 2k*pi about the same axis
        let wrapped = theta.rem_euclid(2.0 * std::f64::consts::PI);
        let canon = if wrapped > std::f64::consts::PI {
            wrapped - 2.0 * std::f64::consts::PI
        } else {
            wrapped
        };
        assert!(
            canon.abs() < std::f64::consts::PI,
            "rotation angle of exactly pi has no canonical twist"
        );
        let s = canon / theta;
        Twist {
            rho,
            phi: [phi[0] * s, phi[1] * s, phi[2] * s],
        }
    }

    pub fn zero() -> Self {
        Twist {
            rho: [0.0; 3],
            phi: [0.0; 3],
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Twist::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.rho[0], self.rho[1], self.rho[2], self.phi[0], self.phi[1], self.phi[2],
        ]
    }

    pub fn add(&self, other: &Twist) -> Twist {
        let mut v = self.to_array();
        for (a, b) in v.iter_mut().zip(other.to_array()) {
            *a += b;
        }
        Twist::from_array(v)
    }

    pub fn sub(&self, other: &Twist) -> Twist {
        let mut v = self.to_array();
        for (a, b) in v.iter_mut().zip(other.to_array()) {
            *a -= b;
        }
        Twist::from_array(v)
    }

    pub fn scale(&self, s: f64) -> Twist {
        let mut v = self.to_array();
        for a in v.iter_mut() {
            *a *= s;
        }
        Twist::from_array(v)
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Serialize as 6 comma-separated decimals: rho_x, rho_y, rho_z,
    /// phi_x, phi_y, phi_z.
    pub fn to_csv(&self) -> String {
        self.to_array()
            .iter()
            .map(|&v| crate::fmt_f64(v))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_csv(s: &str) -> Result<Twist> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::Data(format!(
                "twist needs 6 comma-separated values, got {}",
                parts.len()
            )));
        }
        let mut v = [0.0f64; 6];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("bad twist component {p:?}: {e}")))?;
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Data("twist components must be finite".into()));
        }
        Ok(Twist::from_array(v))
    }
}

/// Rigid transform: image of a twist under the exponential map.
#[derive(Clone, Copy, Debug)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Orthonormality defect max |R^T R - I| plus determinant defect.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst.max((det3(r) - 1.0).abs())
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = r[j][i];
            }
        }
        let t = &self.translation;
        let nt = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        RigidTransform {
            rotation: rt,
            translation: nt,
        }
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rot = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rot[i][j] = (0..3).map(|k| self.rotation[i][k] * other.rotation[k][j]).sum();
            }
        }
        let t = mat3_mul_vec3(&self.rotation, &other.translation);
        RigidTransform {
            rotation: rot,
            translation: [
                t[0] + self.translation[0],
                t[1] + self.translation[1],
                t[2] + self.translation[2],
            ],
        }
    }
}

/// Pinhole camera intrinsics, camera-to-world convention.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Camera> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(Error::Config(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square camera with the given field of view, principal point at the
    /// pixel-grid center.
    pub fn with_fov(width: u32, height: u32, fov_deg: f64) -> Result<Camera> {
        let f = width as f64 / (2.0 * (fov_deg.to_radians() / 2.0).tan());
        Camera::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn n_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.is_finite()
            && y.is_finite()
            && (-0.5..=self.width as f64 - 0.5).contains(&x)
            && (-0.5..=self.height as f64 - 0.5).contains(&y)
    }
}

/// A viewing ray with its depth range of interest.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub z_near: f64,
    pub z_far: f64,
}

const SMALL_ANGLE: f64 = 1e-8;

/// Closed-form Rodrigues exponential se(3) -> SE(3), with a second-order
/// Taylor fallback below |phi| = 1e-8 to avoid catastrophic cancellation.
pub fn exp_se3(xi: &Twist) -> RigidTransform {
    let x = xi.to_array();
    let g: [f64; 6] = x;
    let (rotation, translation) = exp_se3_generic(&g);
    RigidTransform {
        rotation,
        translation,
    }
}

/// Generic-scalar Rodrigues exponential; returns (rotation, translation).
/// The small-angle branch is selected on the primal value and uses series
/// in theta^2 so no square root of zero ever enters the tangent path.
pub fn exp_se3_generic<T: Real>(xi: &[T; 6]) -> ([[T; 3]; 3], [T; 3]) {
    let rho = [xi[0], xi[1], xi[2]];
    let phi = [xi[3], xi[4], xi[5]];
    let theta_sq = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];

    // A = sin(t)/t, B = (1-cos t)/t^2, C = (t - sin t)/t^3
    let (a, b, c) = if theta_sq.primal() < SMALL_ANGLE * SMALL_ANGLE {
        let one = T::constant(1.0);
        (
            one - theta_sq * T::constant(1.0 / 6.0),
            T::constant(0.5) - theta_sq * T::constant(1.0 / 24.0),
            T::constant(1.0 / 6.0) - theta_sq * T::constant(1.0 / 120.0),
        )
    } else {
        let theta = theta_sq.sqrt();
        let s = theta.sin();
        let co = theta.cos();
        (
            s / theta,
            (T::constant(1.0) - co) / theta_sq,
            (theta - s) / (theta_sq * theta),
        )
    };

    let k = skew(&phi);
    let k2 = mat3_mul(&k, &k);
    let mut rot = [[T::constant(0.0); 3]; 3];
    let mut v = [[T::constant(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = T::constant(if i == j { 1.0 } else { 0.0 });
            rot[i][j] = id + a * k[i][j] + b * k2[i][j];
            v[i][j] = id + b * k[i][j] + c * k2[i][j];
        }
    }
    let t = mat3_mul_vec3(&v, &rho);
    (rot, t)
}

/// Logarithm SE(3) -> se(3); inverse of [`exp_se3`] for rotation angles
/// below pi.
pub fn log_se3(g: &RigidTransform) -> Twist {
    let r = &g.rotation;
    let trace = r[0][0] + r[1][1] + r[2][2];
    let cos_theta = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();

    let phi = if theta < SMALL_ANGLE {
        [
            0.5 * (r[2][1] - r[1][2]),
            0.5 * (r[0][2] - r[2][0]),
            0.5 * (r[1][0] - r[0][1]),
        ]
    } else {
        let s = theta / (2.0 * theta.sin());
        [
            s * (r[2][1] - r[1][2]),
            s * (r[0][2] - r[2][0]),
            s * (r[1][0] - r[0][1]),
        ]
    };

    // V^{-1} = I - K/2 + (1/t^2 - (1+cos t)/(2 t sin t)) K^2
    let k = skew(&phi);
    let k2 = mat3_mul(&k, &k);
    let coef = if theta < SMALL_ANGLE {
        1.0 / 12.0
    } else {
        (1.0 - theta * (1.0 + cos_theta) / (2.0 * theta.sin())) / (theta * theta)
    };
    let mut vinv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            vinv[i][j] = id - 0.5 * k[i][j] + coef * k2[i][j];
        }
    }
    let rho = mat3_mul_vec3(&vinv, &g.translation);
    Twist::new(rho, phi)
}

/// Ray through fractional pixel (x, y) for a camera at `pose`
/// (camera-to-world): origin is the camera center, direction the normalized
/// R K^{-1} (x, y, 1).
pub fn pixel_ray(camera: &Camera, pose: &Twist, x: f64, y: f64, z_near: f64, z_far: f64) -> Result<Ray> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Data(format!("non-finite pixel coordinate ({x}, {y})")));
    }
    let xi = pose.to_array();
    let (origin, direction) = pixel_ray_generic(camera, &xi, x, y);
    Ok(Ray {
        origin,
        direction,
        z_near,
        z_far,
    })
}

/// Generic-scalar ray generation; `pose` is a twist whose components may
/// carry tangents.
pub fn pixel_ray_generic<T: Real>(
    camera: &Camera,
    pose: &[T; 6],
    x: f64,
    y: f64,
) -> ([T; 3], [T; 3]) {
    let (rot, origin) = exp_se3_generic(pose);
    let d_cam = [
        T::constant((x - camera.cx) / camera.fx),
        T::constant((y - camera.cy) / camera.fy),
        T::constant(1.0),
    ];
    let d_world = mat3_mul_vec3(&rot, &d_cam);
    let n = (d_world[0] * d_world[0] + d_world[1] * d_world[1] + d_world[2] * d_world[2]).sqrt();
    (
        origin,
        [d_world[0] / n, d_world[1] / n, d_world[2] / n],
    )
}

/// Geodesic angle between the rotations of two twists, in degrees.
pub fn rotation_error_deg(a: &Twist, b: &Twist) -> f64 {
    let ra = exp_se3(a).rotation;
    let rb = exp_se3(b).rotation;
    // relative rotation Ra^T Rb
    let mut rel = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rel[i][j] = (0..3).map(|k| ra[k][i] * rb[k][j]).sum();
        }
    }
    // atan2 of the skew norm against the trace is well conditioned at both
    // ends of [0, pi], unlike acos of the trace
    let s = [
        0.5 * (rel[2][1] - rel[1][2]),
        0.5 * (rel[0][2] - rel[2][0]),
        0.5 * (rel[1][0] - rel[0][1]),
    ];
    let sin_theta = norm3(&s);
    let cos_theta = 0.5 * (rel[0][0] + rel[1][1] + rel[2][2] - 1.0);
    sin_theta.atan2(cos_theta).to_degrees()
}

/// Euclidean distance between the camera centers of two twists.
pub fn translation_error(a: &Twist, b: &Twist) -> f64 {
    let ta = exp_se3(a).translation;
    let tb = exp_se3(b).translation;
    ((ta[0] - tb[0]).powi(2) + (ta[1] - tb[1]).powi(2) + (ta[2] - tb[2]).powi(2)).sqrt()
}

fn skew<T: Real>(v: &[T; 3]) -> [[T; 3]; 3] {
    let z = T::constant(0.0);
    [
        [z, -v[2], v[1]],
        [v[2], z, -v[0]],
        [-v[1], v[0], z],
    ]
}

fn mat3_mul<T: Real>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::constant(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat3_mul_vec3<T: Real>(m: &[[T; 3]; 3], v: &[T; 3]) -> [T; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Camera-to-world pose looking from `eye` toward `target`, with `up`
/// resolving the roll. The camera looks along +z.
pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Twist {
    let fwd = normalize([
        target[0] - eye[0],
        target[1] - eye[1],
        target[2] - eye[2],
    ]);
    let right = normalize(cross(&up, &fwd));
    let cam_up = cross(&fwd, &right);
    // columns are the camera axes expressed in world coordinates
    let rotation = [
        [right[0], cam_up[0], fwd[0]],
        [right[1], cam_up[1], fwd[1]],
        [right[2], cam_up[2], fwd[2]],
    ];
    log_se3(&RigidTransform {
        rotation,
        translation: eye,
    })
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    // Independent oracle: 4x4 matrix exponential by scaling and squaring.
    fn matrix_exp_oracle(xi: &Twist) -> RigidTransform {
        let x = xi.to_array();
        let mut a = [[0.0f64; 4]; 4];
        a[0][1] = -x[5];
        a[0][2] = x[4];
        a[1][0] = x[5];
        a[1][2] = -x[3];
        a[2][0] = -x[4];
        a[2][1] = x[3];
        a[0][3] = x[0];
        a[1][3] = x[1];
        a[2][3] = x[2];

        // exp(A/2^8) by truncated series, then square 8 times. Few squarings
        // keep roundoff amplification (~2^n eps) well under the comparison
        // tolerance while the series termwise truncation stays ~1e-34.
        let scale = 1.0 / (1u64 << 8) as f64;
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        let mut result = mat4_identity();
        let mut term = mat4_identity();
        for k in 1..=12 {
            term = mat4_scale(&mat4_mul(&term, &a), 1.0 / k as f64);
            result = mat4_add(&result, &term);
        }
        for _ in 0..8 {
            result = mat4_mul(&result, &result);
        }
        let mut rotation = [[0.0; 3]; 3];
        for i in 0..3 {
            rotation[i].copy_from_slice(&result[i][..3]);
        }
        RigidTransform {
            rotation,
            translation: [result[0][3], result[1][3], result[2][3]],
        }
    }

    fn mat4_identity() -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    fn mat4_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn mat4_add(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = *a;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += b[i][j];
            }
        }
        out
    }

    fn mat4_scale(a: &[[f64; 4]; 4], s: f64) -> [[f64; 4]; 4] {
        let mut out = *a;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    // Independent oracle: relative rotation angle via quaternions.
    fn quat_rotation_error_deg(a: &Twist, b: &Twist) -> f64 {
        let qa = quat_from_axis_angle(&a.phi);
        let qb = quat_from_axis_angle(&b.phi);
        // q_rel = conj(qa) * qb
        let qa_c = [qa[0], -qa[1], -qa[2], -qa[3]];
        let q = quat_mul(&qa_c, &qb);
        let w = q[0].abs().clamp(0.0, 1.0);
        (2.0 * w.acos()).to_degrees()
    }

    fn quat_from_axis_angle(phi: &[f64; 3]) -> [f64; 4] {
        let theta = norm3(phi);
        if theta < 1e-12 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let h = theta / 2.0;
        let s = h.sin() / theta;
        [h.cos(), phi[0] * s, phi[1] * s, phi[2] * s]
    }

    fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
        [
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
        ]
    }

    fn arb_twist() -> impl Strategy<Value = Twist> {
        (
            prop::array::uniform3(-2.0..2.0f64),
            prop::array::uniform3(-1.0..1.0f64),
        )
            .prop_map(|(rho, phi)| Twist::new(rho, phi))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let g = exp_se3(&Twist::zero());
        assert_eq!(g.rotation, RigidTransform::identity().rotation);
        assert_eq!(g.translation, [0.0; 3]);
    }

    #[test]
    fn exp_of_quarter_turn_about_z() {
        let g = exp_se3(&Twist::new([0.0; 3], [0.0, 0.0, FRAC_PI_2]));
        assert_abs_diff_eq!(g.rotation[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.rotation[0][1], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.rotation[1][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.rotation[1][1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.rotation[2][2], 1.0, epsilon = 1e-15);
        assert_eq!(g.translation, [0.0; 3]);
    }

    proptest! {
        #[test]
        fn exp_matches_series_oracle(xi in arb_twist()) {
            let fast = exp_se3(&xi);
            let oracle = matrix_exp_oracle(&xi);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((fast.rotation[i][j] - oracle.rotation[i][j]).abs() < 1e-10);
                }
                prop_assert!((fast.translation[i] - oracle.translation[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn exp_of_negated_twist_is_inverse(xi in arb_twist()) {
            let g = exp_se3(&xi);
            let gi = exp_se3(&xi.scale(-1.0));
            let id = g.compose(&gi);
            prop_assert!(id.orthonormality_error() < 1e-9);
            for i in 0..3 {
                prop_assert!((id.rotation[i][i] - 1.0).abs() < 1e-9);
                prop_assert!(id.translation[i].abs() < 1e-9);
            }
        }

        #[test]
        fn exp_log_roundtrip(xi in arb_twist()) {
            let back = log_se3(&exp_se3(&xi));
            for (a, b) in back.to_array().iter().zip(xi.to_array()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn exp_produces_orthonormal_rotation(xi in arb_twist()) {
            prop_assert!(exp_se3(&xi).orthonormality_error() < 1e-9);
        }

        #[test]
        fn pixel_ray_direction_is_unit(
            xi in arb_twist(),
            x in 0.0..63.0f64,
            y in 0.0..63.0f64,
        ) {
            let cam = Camera::with_fov(64, 64, 60.0).unwrap();
            let ray = pixel_ray(&cam, &xi, x, y, 0.5, 5.0).unwrap();
            let n = norm3(&ray.direction);
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_error_matches_quaternion_oracle(a in arb_twist(), b in arb_twist()) {
            let ours = rotation_error_deg(&a, &b);
            let oracle = quat_rotation_error_deg(&a, &b);
            prop_assert!((ours - oracle).abs() < 1e-9);
        }

        #[test]
        fn rotation_error_symmetry_and_triangle(
            a in arb_twist(),
            b in arb_twist(),
            c in arb_twist(),
        ) {
            let ab = rotation_error_deg(&a, &b);
            let ba = rotation_error_deg(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-9);
            let ac = rotation_error_deg(&a, &c);
            let cb = rotation_error_deg(&c, &b);
            prop_assert!(ab <= ac + cb + 1e-9);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        // straddle the 1e-8 threshold
        for theta in [1e-9, 9e-9, 1.1e-8, 1e-7] {
            let xi = Twist::new([0.1, -0.2, 0.3], [theta, 0.0, 0.0]);
            let fast = exp_se3(&xi);
            let oracle = matrix_exp_oracle(&xi);
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(fast.rotation[i][j], oracle.rotation[i][j], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn principal_ray_points_along_z() {
        let cam = Camera::with_fov(64, 64, 60.0).unwrap();
        let ray = pixel_ray(&cam, &Twist::zero(), cam.cx, cam.cy, 0.5, 5.0).unwrap();
        assert_abs_diff_eq!(ray.direction[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ray.direction[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ray.direction[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn translation_pose_shifts_origin_keeps_direction() {
        let cam = Camera::with_fov(64, 64, 60.0).unwrap();
        let base = pixel_ray(&cam, &Twist::zero(), 10.0, 20.0, 0.5, 5.0).unwrap();
        let moved = pixel_ray(
            &cam,
            &Twist::new([1.0, 2.0, 3.0], [0.0; 3]),
            10.0,
            20.0,
            0.5,
            5.0,
        )
        .unwrap();
        assert_eq!(moved.origin, [1.0, 2.0, 3.0]);
        for i in 0..3 {
            assert_abs_diff_eq!(base.direction[i], moved.direction[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn yaw_by_pi_flips_principal_ray() {
        let cam = Camera::with_fov(64, 64, 60.0).unwrap();
        // just below pi to stay canonical
        let pose = Twist::new([0.0; 3], [0.0, PI - 1e-12, 0.0]);
        let ray = pixel_ray(&cam, &pose, cam.cx, cam.cy, 0.5, 5.0).unwrap();
        assert_abs_diff_eq!(ray.direction[2], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn pixel_ray_rejects_non_finite() {
        let cam = Camera::with_fov(64, 64, 60.0).unwrap();
        assert!(pixel_ray(&cam, &Twist::zero(), f64::NAN, 0.0, 0.5, 5.0).is_err());
    }

    #[test]
    fn identical_twists_have_zero_errors() {
        let a = Twist::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        assert_eq!(rotation_error_deg(&a, &a), 0.0);
        assert_eq!(translation_error(&a, &a), 0.0);
    }

    #[test]
    fn one_degree_yaw_reads_one_degree() {
        let a = Twist::zero();
        let b = Twist::new([0.0; 3], [0.0, 0.0, 1.0f64.to_radians()]);
        assert_relative_eq!(rotation_error_deg(&a, &b), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn twist_canonicalizes_large_rotation() {
        let t = Twist::new([0.0; 3], [0.0, 0.0, 1.5 * PI]);
        assert_abs_diff_eq!(t.phi[2], -0.5 * PI, epsilon = 1e-12);
        // same rotation matrix either way
        let direct = exp_se3(&t);
        assert_abs_diff_eq!(direct.rotation[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(direct.rotation[1][0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn twist_csv_roundtrip() {
        let t = Twist::new([0.125, -3.5e-7, 2.0], [0.3, -0.1, 1.0e-11]);
        let back = Twist::from_csv(&t.to_csv()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let pose = look_at([0.0, 0.0, -2.5], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let cam = Camera::with_fov(64, 64, 60.0).unwrap();
        let ray = pixel_ray(&cam, &pose, cam.cx, cam.cy, 0.5, 5.0).unwrap();
        assert_abs_diff_eq!(ray.direction[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ray.origin[2], -2.5, epsilon = 1e-12);
    }
}
