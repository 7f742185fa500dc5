//! Convex bodies given by value/gradient/Hessian oracles of a convex
//! defining function `G` (body = `{G <= 0}`), local concave charts of their
//! boundaries, and the JSON catalog of the families used throughout.

mod catalog;
mod chart;
mod invariants;

pub use catalog::{
    instantiate, BallParams, BodySpec, CantorParams, ConeParams, EllipsoidParams, Family, KiselmanParams,
    ParaboloidParams, SuperellipsoidParams,
};
pub use catalog::{Bump, CantorField, ConeField, EllipsoidField, KiselmanField};
pub use chart::{chart_at, chart_at_with_tangents, ChartFunction, ConcaveChart, FnChart, TOL_BOUNDARY};
pub use invariants::{check_body_invariants, check_chart_invariants, BodyInvariantReport, ChartInvariantReport};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Pose;
use crate::roots;

/// A convex defining function in the body's own coordinates.
pub trait Field: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, p: &DVector<f64>) -> f64;
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityClass {
    Convex,
    StrictlyConvex,
    UniformlyConvex { modulus: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessClass {
    /// Merely Lipschitz boundary (corners or edges present).
    Lipschitz,
    C1,
    C1Alpha {
        alpha: f64,
    },
    C11,
    Ck {
        k: u32,
    },
    Smooth,
}

/// Family-level description attached to a [`Field`] when it becomes a body.
#[derive(Debug, Clone)]
pub struct BodyMeta {
    pub name: String,
    /// Interior reference point, in local coordinates.
    pub center: DVector<f64>,
    /// The body (or the patch it models) lies in the ball of this radius
    /// around `center`.
    pub bounding_radius: f64,
    /// Default radius for charts built on this body.
    pub chart_radius: f64,
    pub convexity: ConvexityClass,
    pub smoothness: SmoothnessClass,
}

/// Convex body `{G <= 0}` with oracle access to `G`, `grad G` and (possibly
/// finite-difference) `D^2 G`, placed in world coordinates by a pose.
#[derive(Clone)]
pub struct ImplicitBody {
    field: Arc<dyn Field>,
    meta: BodyMeta,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
    scale: f64,
}

impl fmt::Debug for ImplicitBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitBody")
            .field("name", &self.meta.name)
            .field("dim", &self.dim())
            .field("center", &self.center().as_slice())
            .field("bounding_radius", &self.bounding_radius())
            .finish()
    }
}

impl ImplicitBody {
    pub fn new(field: Arc<dyn Field>, meta: BodyMeta) -> Self {
        let n = field.dim();
        ImplicitBody { field, meta, rotation: DMatrix::identity(n, n), translation: DVector::zeros(n), scale: 1.0 }
    }

    /// Compose an additional rigid motion `x -> rotation * x + translation`.
    pub fn transformed(&self, rotation: &DMatrix<f64>, translation: &DVector<f64>) -> Result<Self> {
        let n = self.dim();
        if rotation.nrows() != n || rotation.ncols() != n || translation.len() != n {
            return Err(Error::Parameter(format!("pose dimension does not match body dimension {n}")));
        }
        let orth = (rotation.transpose() * rotation - DMatrix::identity(n, n)).norm();
        if orth > 1e-9 || rotation.determinant() < 0.0 {
            return Err(Error::Parameter("pose rotation is not a proper rotation".into()));
        }
        let mut out = self.clone();
        out.rotation = rotation * &self.rotation;
        out.translation = rotation * &self.translation + translation;
        Ok(out)
    }

    pub fn with_pose(&self, pose: &Pose) -> Result<Self> {
        self.transformed(&pose.rotation_matrix(), &pose.translation_vector())
    }

    /// The body scaled by `s > 0` about the world origin.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("scale must be positive, got {s}")));
        }
        let mut out = self.clone();
        out.scale *= s;
        out.translation *= s;
        out.meta.convexity = match self.meta.convexity {
            ConvexityClass::UniformlyConvex { modulus } => {
                ConvexityClass::UniformlyConvex { modulus: modulus / (s * s) }
            }
            other => other,
        };
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn convexity(&self) -> ConvexityClass {
        self.meta.convexity
    }

    pub fn smoothness(&self) -> SmoothnessClass {
        self.meta.smoothness
    }

    pub fn field(&self) -> &Arc<dyn Field> {
        &self.field
    }

    pub fn bounding_radius(&self) -> f64 {
        self.meta.bounding_radius * self.scale
    }

    pub fn chart_radius(&self) -> f64 {
        self.meta.chart_radius * self.scale
    }

    /// Interior reference point in world coordinates.
    pub fn center(&self) -> DVector<f64> {
        self.local_to_world(&self.meta.center)
    }

    pub fn world_to_local(&self, x: &DVector<f64>) -> DVector<f64> {
        self.rotation.tr_mul(&(x - &self.translation)) / self.scale
    }

    pub fn local_to_world(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.rotation * p * self.scale + &self.translation
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.field.value(&self.world_to_local(x))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rotation * self.field.gradient(&self.world_to_local(x)) / self.scale
    }

    pub fn has_analytic_hessian(&self) -> bool {
        let c = self.meta.center.clone();
        self.field.hessian(&c).is_some()
    }

    /// Analytic Hessian when the family provides one, otherwise central
    /// differences of the gradient with step `1e-5 * bounding_radius`.
    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.field.hessian(&self.world_to_local(x)) {
            Some(h) => &self.rotation * h * self.rotation.transpose() / (self.scale * self.scale),
            None => self.fd_hessian(x, 1e-5 * self.bounding_radius()),
        }
    }

    pub fn fd_hessian(&self, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (self.gradient(&xp) - self.gradient(&xm)) / (2.0 * h);
            m.set_column(j, &col);
        }
        0.5 * (&m + m.transpose())
    }

    pub fn outward_normal(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.gradient(x);
        let norm = g.norm();
        if !(norm > 1e-14) {
            return Err(Error::DegeneratePoint(x.iter().copied().collect()));
        }
        Ok(g / norm)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.value(x) <= 0.0
    }

    /// Boundary point on the ray from the interior reference point in
    /// direction `dir`.
    pub fn radial_boundary_point(&self, dir: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.center();
        let d = dir.normalize();
        let g0 = self.value(&c);
        if g0 >= 0.0 {
            return Err(Error::Chart(format!("reference point of {} is not interior", self.name())));
        }
        let limit = 4.0 * self.bounding_radius();
        let mut hi = 0.25 * self.bounding_radius();
        while self.value(&(&c + &d * hi)) <= 0.0 {
            hi *= 2.0;
            if hi > limit {
                return Err(Error::Chart(format!("ray from the center of {} does not leave the body", self.name())));
            }
        }
        let (s, _) = roots::newton_bracketed(
            |s| {
                let p = &c + &d * s;
                Ok((self.value(&p), self.gradient(&p).dot(&d)))
            },
            0.0,
            hi,
            1e-15 * hi,
            200,
        )?;
        Ok(&c + d * s)
    }
}
