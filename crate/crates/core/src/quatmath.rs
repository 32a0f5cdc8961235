//! Quaternion algebra for rotating sensor vectors between frames.
//!
//! Components are always stored scalar-first as `(w, x, y, z)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest deviation from unit norm that [`rotate_vector`] silently repairs.
pub const UNIT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: Vec3) -> Self {
        Quaternion::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Quaternion::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, s * axis.x / n, s * axis.y / n, s * axis.z / n)
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_squared(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn scale(self, k: f64) -> Self {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;

    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;

    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        hamilton(self, rhs)
    }
}

/// Hamilton product `a ⋆ b`.
pub fn hamilton(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    }
}

/// Multiplicative inverse: conjugate over squared norm.
pub fn inverse(q: Quaternion) -> Result<Quaternion> {
    let n2 = q.norm_squared();
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::domain("cannot invert a zero-norm quaternion"));
    }
    let c = q.conjugate();
    Ok(Quaternion::new(c.w / n2, c.x / n2, c.y / n2, c.z / n2))
}

pub fn normalize(q: Quaternion) -> Result<Quaternion> {
    let n = q.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::domain("cannot normalize a zero-norm quaternion"));
    }
    Ok(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

/// Rotates `v` by `q`: the vector part of `q ⋆ (0, v) ⋆ q⁻¹`.
///
/// Quaternions within [`UNIT_TOLERANCE`] of unit norm are renormalized
/// first; anything further off is rejected.
pub fn rotate_vector(q: Quaternion, v: Vec3) -> Result<Vec3> {
    let n = q.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::domain("rotation by a zero-norm quaternion"));
    }
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::domain(format!(
            "rotation quaternion norm {n} is too far from 1"
        )));
    }
    let q = if n == 1.0 { q } else { normalize(q)? };
    // For unit q the inverse is the conjugate.
    Ok(hamilton(hamilton(q, Quaternion::pure(v)), q.conjugate()).vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Left-multiplication matrix of `a` applied to the 4-vector of `b`.
    fn matrix_product(a: Quaternion, b: Quaternion) -> Quaternion {
        let m = [
            [a.w, -a.x, -a.y, -a.z],
            [a.x, a.w, -a.z, a.y],
            [a.y, a.z, a.w, -a.x],
            [a.z, -a.y, a.x, a.w],
        ];
        let v = b.to_array();
        let mut out = [0.0; 4];
        for (o, row) in out.iter_mut().zip(m.iter()) {
            *o = row.iter().zip(v.iter()).map(|(r, x)| r * x).sum();
        }
        Quaternion::from_array(out)
    }

    /// Rotation matrix of a unit quaternion.
    fn rotation_matrix(q: Quaternion) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = q;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn mat_vec(m: [[f64; 3]; 3], v: Vec3) -> Vec3 {
        let a = v.to_array();
        let r: Vec<f64> = m
            .iter()
            .map(|row| row.iter().zip(a.iter()).map(|(p, q)| p * q).sum())
            .collect();
        Vec3::new(r[0], r[1], r[2])
    }

    fn random_quat(rng: &mut impl Rng) -> Quaternion {
        Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
    }

    fn random_unit(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = random_quat(rng);
            if q.norm() > 0.1 {
                return normalize(q).unwrap();
            }
        }
    }

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        a.to_array()
            .iter()
            .zip(b.to_array().iter())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quaternion::new(0.3, 0.1, 0.2, 0.9);
        assert_eq!(hamilton(Quaternion::IDENTITY, q), q);
        assert_eq!(hamilton(q, Quaternion::IDENTITY), q);
    }

    #[test]
    fn basis_products() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(i * j, k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(j * i, Quaternion::new(0.0, 0.0, 0.0, -1.0));
        assert_eq!(i * i, Quaternion::new(-1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn hamilton_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (a, b) = (random_quat(&mut rng), random_quat(&mut rng));
            assert!(close(hamilton(a, b), matrix_product(a, b), 1e-12));
        }
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(inverse(Quaternion::IDENTITY).unwrap(), Quaternion::IDENTITY);
        assert_eq!(
            inverse(Quaternion::new(0.0, 1.0, 0.0, 0.0)).unwrap(),
            Quaternion::new(0.0, -1.0, 0.0, 0.0)
        );
        assert!(inverse(Quaternion::new(0.0, 0.0, 0.0, 0.0)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let q = random_unit(&mut rng);
            let p = hamilton(inverse(q).unwrap(), q);
            assert!(close(p, Quaternion::IDENTITY, 1e-12));
        }
        // non-unit inverse too
        let q = Quaternion::new(2.0, -1.0, 0.5, 3.0);
        assert!(close(q * inverse(q).unwrap(), Quaternion::IDENTITY, 1e-12));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(
            normalize(Quaternion::new(2.0, 0.0, 0.0, 0.0)).unwrap(),
            Quaternion::IDENTITY
        );
        let q = normalize(Quaternion::new(0.0, 0.0, 3.0, 4.0)).unwrap();
        assert!(close(q, Quaternion::new(0.0, 0.0, 0.6, 0.8), 1e-15));
        assert!(normalize(Quaternion::new(0.0, 0.0, 0.0, 0.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            assert!((normalize(q).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_identity_and_quarter_turn() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate_vector(Quaternion::IDENTITY, v).unwrap(), v);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = Quaternion::new(h, 0.0, 0.0, h);
        let r = rotate_vector(q, Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let oracle = mat_vec(rotation_matrix(q), Vec3::new(1.0, 0.0, 0.0));
        assert!((r - oracle).norm() < 1e-12);
        assert!((r - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotate_matches_rotation_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let q = random_unit(&mut rng);
            let v = Vec3::new(
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
            );
            let r = rotate_vector(q, v).unwrap();
            let o = mat_vec(rotation_matrix(q), v);
            for (a, b) in r.to_array().iter().zip(o.to_array().iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotate_tolerates_small_drift_only() {
        let q = Quaternion::new(1.0005, 0.0, 0.0, 0.0);
        let v = Vec3::new(1.0, -2.0, 0.5);
        let r = rotate_vector(q, v).unwrap();
        assert!((r - v).norm() < 1e-12);
        assert!(rotate_vector(Quaternion::new(1.1, 0.0, 0.0, 0.0), v).is_err());
        assert!(rotate_vector(Quaternion::new(0.0, 0.0, 0.0, 0.0), v).is_err());
    }

    fn unit_strategy() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| {
                w * w + x * x + y * y + z * z > 0.01
            })
            .prop_map(|(w, x, y, z)| normalize(Quaternion::new(w, x, y, z)).unwrap())
    }

    fn vec_strategy() -> impl Strategy<Value = Vec3> {
        (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(q in unit_strategy(), v in vec_strategy()) {
            let r = rotate_vector(q, v).unwrap();
            prop_assert!((r.norm() - v.norm()).abs() < 1e-9);
        }

        #[test]
        fn rotations_compose(q1 in unit_strategy(), q2 in unit_strategy(), v in vec_strategy()) {
            let stepwise = rotate_vector(q2, rotate_vector(q1, v).unwrap()).unwrap();
            let joint = rotate_vector(hamilton(q2, q1), v).unwrap();
            prop_assert!((stepwise - joint).norm() < 1e-9);
        }

        #[test]
        fn hamilton_is_associative(
            a in unit_strategy(), b in unit_strategy(), c in unit_strategy()
        ) {
            prop_assert!(close((a * b) * c, a * (b * c), 1e-12));
        }
    }
}
