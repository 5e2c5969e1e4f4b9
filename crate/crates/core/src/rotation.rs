//! Rotation primitives: axis matrices, ZYX Euler composition, quaternions and
//! Euler decomposition for arbitrary Tait-Bryan orders.
//!
//! Matrices are row-major `[[f64; 3]; 3]` and act on column vectors.

use std::ops::Mul;

use thiserror::Error;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Error, PartialEq)]
pub enum RotationError {
    #[error("cannot normalize a zero-norm quaternion")]
    ZeroQuaternion,
    #[error("6D rotation halves are collinear")]
    CollinearSixD,
}

/// One of the three coordinate axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Right-handed rotation matrix about this axis.
    pub fn matrix(self, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        match self {
            Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
            Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn quaternion(self, angle: f64) -> Quaternion {
        let (s, c) = (angle * 0.5).sin_cos();
        match self {
            Axis::X => Quaternion::new(c, s, 0.0, 0.0),
            Axis::Y => Quaternion::new(c, 0.0, s, 0.0),
            Axis::Z => Quaternion::new(c, 0.0, 0.0, s),
        }
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(a: &Mat3) -> f64 {
    let rtr = mat_mul(&transpose(a), a);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((rtr[i][j] - IDENTITY[i][j]).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((a[i][j] - b[i][j]).abs());
        }
    }
    worst
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `R_Z(alpha) · R_Y(beta) · R_X(gamma)`, angles in radians.
pub fn euler_zyx_to_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    [
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ]
}

/// Unit quaternion for the ZYX Euler triple via the half-angle products.
pub fn euler_to_quaternion(alpha: f64, beta: f64, gamma: f64) -> Quaternion {
    let (sa, ca) = (alpha * 0.5).sin_cos();
    let (sb, cb) = (beta * 0.5).sin_cos();
    let (sg, cg) = (gamma * 0.5).sin_cos();
    Quaternion {
        w: ca * cb * cg + sa * sb * sg,
        x: ca * cb * sg - sa * sb * cg,
        y: ca * sb * cg + sa * cb * sg,
        z: sa * cb * cg - ca * sb * sg,
    }
}

/// Composes per-axis rotations in the given order: `R_{a0}(θ0) · R_{a1}(θ1) · …`.
pub fn euler_to_matrix_ordered(axes: &[Axis], angles: &[f64]) -> Mat3 {
    axes.iter()
        .zip(angles)
        .fold(IDENTITY, |acc, (axis, &angle)| mat_mul(&acc, &axis.matrix(angle)))
}

pub fn euler_to_quaternion_ordered(axes: &[Axis], angles: &[f64]) -> Quaternion {
    axes.iter()
        .zip(angles)
        .fold(Quaternion::IDENTITY, |acc, (axis, &angle)| acc * axis.quaternion(angle))
}

/// Inverse of [`euler_to_matrix_ordered`] for a three-axis Tait-Bryan order.
///
/// The middle angle lies in `[-π/2, π/2]`. At gimbal lock the last angle is
/// set to zero.
pub fn matrix_to_euler_ordered(r: &Mat3, axes: [Axis; 3]) -> [f64; 3] {
    let (i, j, k) = (axes[0].index(), axes[1].index(), axes[2].index());
    debug_assert!(i != j && j != k && i != k, "Tait-Bryan order needs three distinct axes");
    // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise
    let sign = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sin_mid = (sign * r[i][k]).clamp(-1.0, 1.0);
    let mid = sin_mid.asin();
    if (1.0 - sin_mid.abs()) > 1e-12 {
        let first = (-sign * r[j][k]).atan2(r[k][k]);
        let last = (-sign * r[i][j]).atan2(r[i][i]);
        [first, mid, last]
    } else {
        let first = (sign * r[k][j]).atan2(r[j][j]);
        [first, mid, 0.0]
    }
}

/// Rotation vector (axis · angle) of a rotation matrix.
pub fn matrix_to_axis_angle(r: &Mat3) -> Vec3 {
    Quaternion::from_matrix(r).to_axis_angle()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Result<Self, RotationError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(RotationError::ZeroQuaternion);
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// `q · v · q⁻¹` for a unit quaternion.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = [self.x, self.y, self.z];
        let t = cross(&u, v);
        let t = [2.0 * t[0], 2.0 * t[1], 2.0 * t[2]];
        let ut = cross(&u, &t);
        [
            v[0] + self.w * t[0] + ut[0],
            v[1] + self.w * t[1] + ut[1],
            v[2] + self.w * t[2] + ut[2],
        ]
    }

    /// Shepperd's method; returns the representative with `w ≥ 0`.
    pub fn from_matrix(r: &Mat3) -> Self {
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s)
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            Self::new((r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s)
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            Self::new((r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s)
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            Self::new((r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s)
        };
        let q = q.normalized().unwrap_or(Self::IDENTITY);
        if q.w < 0.0 {
            Self::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }

    pub fn to_axis_angle(&self) -> Vec3 {
        let q = if self.w < 0.0 { Self::new(-self.w, -self.x, -self.y, -self.z) } else { *self };
        let vnorm = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if vnorm < 1e-12 {
            // small-angle limit: angle/sin(angle/2) → 2
            return [2.0 * q.x, 2.0 * q.y, 2.0 * q.z];
        }
        let angle = 2.0 * vnorm.atan2(q.w);
        let scale = angle / vnorm;
        [q.x * scale, q.y * scale, q.z * scale]
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

/// Rotation matrix of `q`, normalizing first.
pub fn quaternion_to_matrix(q: &Quaternion) -> Result<Mat3, RotationError> {
    let q = if (q.norm() - 1.0).abs() > 1e-6 { q.normalized()? } else { *q };
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Ok([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// First two columns of `r`, column-major: `(r00, r10, r20, r01, r11, r21)`.
pub fn rot_to_6d(r: &Mat3) -> [f64; 6] {
    [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]]
}

/// Gram–Schmidt reconstruction of a rotation from its 6D representation.
pub fn sixd_to_rot(v: &[f64; 6]) -> Result<Mat3, RotationError> {
    let a = [v[0], v[1], v[2]];
    let b = [v[3], v[4], v[5]];
    let na = dot(&a, &a).sqrt();
    if na < 1e-12 || !na.is_finite() {
        return Err(RotationError::CollinearSixD);
    }
    let c0 = [a[0] / na, a[1] / na, a[2] / na];
    let proj = dot(&c0, &b);
    let b_perp = [b[0] - proj * c0[0], b[1] - proj * c0[1], b[2] - proj * c0[2]];
    let nb = dot(&b_perp, &b_perp).sqrt();
    if nb < 1e-9 * dot(&b, &b).sqrt().max(1e-300) || nb < 1e-12 {
        return Err(RotationError::CollinearSixD);
    }
    let c1 = [b_perp[0] / nb, b_perp[1] / nb, b_perp[2] / nb];
    let c2 = cross(&c0, &c1);
    Ok([[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]])
}
