//! Orthonormal frames and rotations in dimension-generic form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Local coordinate frame: `world = origin + basis * local`.
///
/// For charts the first `n-1` columns of `basis` span the tangent space and
/// the last column is the outward unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub origin: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl Frame {
    pub fn identity(n: usize) -> Self {
        Frame { origin: DVector::zeros(n), basis: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn to_world(&self, local: &DVector<f64>) -> DVector<f64> {
        &self.origin + &self.basis * local
    }

    pub fn to_local(&self, world: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&(world - &self.origin))
    }

    /// Express a world vector (direction, not point) in local coordinates.
    pub fn vector_to_local(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(v)
    }

    pub fn normal(&self) -> DVector<f64> {
        self.basis.column(self.dim() - 1).into_owned()
    }

    /// Frame at `origin` whose last axis is `normal`, with tangent axes taken
    /// from the minimal rotation carrying `e_n` onto `normal`.
    pub fn from_normal(origin: DVector<f64>, normal: &DVector<f64>) -> Self {
        let n = origin.len();
        let mut e_n = DVector::zeros(n);
        e_n[n - 1] = 1.0;
        let basis = rotation_between(&e_n, &normal.normalize());
        Frame { origin, basis }
    }

    /// Frame with prescribed tangent columns (orthonormal, orthogonal to the
    /// normal). The columns are used as given.
    pub fn from_tangent_basis(origin: DVector<f64>, tangents: &DMatrix<f64>, normal: &DVector<f64>) -> Self {
        let n = origin.len();
        let mut basis = DMatrix::zeros(n, n);
        for j in 0..n - 1 {
            basis.set_column(j, &tangents.column(j));
        }
        basis.set_column(n - 1, &normal.normalize());
        Frame { origin, basis }
    }

    /// Replace the tangent axes by `tangent * q` where `q` is an
    /// `(n-1) x (n-1)` orthogonal matrix acting on chart coordinates.
    pub fn rotate_tangent(&self, q: &DMatrix<f64>) -> Self {
        let n = self.dim();
        let tangent = self.basis.columns(0, n - 1) * q;
        let mut basis = self.basis.clone();
        basis.columns_mut(0, n - 1).copy_from(&tangent);
        Frame { origin: self.origin.clone(), basis }
    }
}

/// Proper rotation taking unit vector `a` onto unit vector `b` that acts as
/// the identity on the complement of `span{a, b}`.
pub fn rotation_between(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let c = a.dot(b);
    if c > 1.0 - 1e-15 {
        return DMatrix::identity(n, n);
    }
    if c < -1.0 + 1e-12 {
        // Half-turn in the plane of `a` and the first axis not parallel to it.
        let w = complement_vector(a);
        let mut r = DMatrix::identity(n, n);
        r -= 2.0 * (a * a.transpose() + &w * w.transpose());
        return r;
    }
    let k = b * a.transpose() - a * b.transpose();
    let k2 = &k * &k;
    DMatrix::identity(n, n) + &k + k2 / (1.0 + c)
}

/// Some unit vector orthogonal to `a`.
pub fn complement_vector(a: &DVector<f64>) -> DVector<f64> {
    let n = a.len();
    let mut best = 0;
    for i in 1..n {
        if a[i].abs() < a[best].abs() {
            best = i;
        }
    }
    let mut e = DVector::zeros(n);
    e[best] = 1.0;
    let w = &e - a * a.dot(&e);
    w.normalize()
}

/// Complete the given orthonormal columns to an orthonormal basis of R^n by
/// Gram-Schmidt against the standard axes; the given columns come last.
pub fn complete_basis(fixed: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut extra: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        if extra.len() + fixed.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for f in fixed.iter().chain(extra.iter()) {
            let d = v.dot(f);
            v -= f * d;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            extra.push(v / norm);
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for (j, v) in extra.iter().chain(fixed.iter()).enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Rigid placement of a body: `world = translation + scale * rotation * local`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl Pose {
    pub fn identity(n: usize) -> Self {
        Pose {
            rotation: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            translation: vec![0.0; n],
        }
    }

    pub fn from_parts(rotation: &DMatrix<f64>, translation: &DVector<f64>) -> Self {
        Pose {
            rotation: (0..rotation.nrows())
                .map(|i| (0..rotation.ncols()).map(|j| rotation[(i, j)]).collect())
                .collect(),
            translation: translation.iter().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        let n = self.rotation.len();
        DMatrix::from_fn(n, n, |i, j| self.rotation[i][j])
    }

    pub fn translation_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.translation.clone())
    }
}

/// Uniformly distributed rotation of R^n (QR of a Gaussian matrix with sign
/// correction), with determinant forced to +1.
pub fn random_rotation<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    if q.determinant() < 0.0 {
        let col = -q.column(0);
        q.set_column(0, &col);
    }
    q
}

pub fn random_unit<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| gaussian(rng));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Standard normal sample via Box-Muller.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
