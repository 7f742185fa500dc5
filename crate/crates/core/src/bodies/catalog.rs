//! Analytic families and their JSON description.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BodyMeta, ConvexityClass, Field, ImplicitBody, SmoothnessClass};
use crate::error::{Error, Result};
use crate::frame::Pose;

/// `sum x_i^2 / a_i^2 - 1`.
#[derive(Debug, Clone)]
pub struct EllipsoidField {
    pub semiaxes: Vec<f64>,
}

impl Field for EllipsoidField {
    fn dim(&self) -> usize {
        self.semiaxes.len()
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        p.iter().zip(&self.semiaxes).map(|(x, a)| (x / a) * (x / a)).sum::<f64>() - 1.0
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(p.len(), p.iter().zip(&self.semiaxes).map(|(x, a)| 2.0 * x / (a * a)))
    }
    fn hessian(&self, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d = DVector::from_iterator(self.semiaxes.len(), self.semiaxes.iter().map(|a| 2.0 / (a * a)));
        Some(DMatrix::from_diagonal(&d))
    }
}

/// `|x - c|^2 - r^2`.
#[derive(Debug, Clone)]
pub struct BallField {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Field for BallField {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        (p - &self.center).norm_squared() - self.radius * self.radius
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        2.0 * (p - &self.center)
    }
    fn hessian(&self, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.dim();
        Some(DMatrix::identity(n, n) * 2.0)
    }
}

/// `max(z + k(x, y), |y| - w, -z - FLOOR)` with
/// `k(x,y) = x^2 (4 - y + y^2/2) + y^{q+1}/(q+1) - y^{q+2}/(q+2)`.
///
/// `k` is convex on the strip `|y| < 1/2`, strictly but not uniformly (its
/// Hessian is `diag(8, 0)` at the origin), so the body is cut to the slab
/// `|y| <= w` and the floor `z >= -FLOOR`.
#[derive(Debug, Clone)]
pub struct KiselmanField {
    pub q: u32,
    pub half_width: f64,
}

impl KiselmanField {
    pub const FLOOR: f64 = 2.0;

    fn pieces(&self, p: &DVector<f64>) -> [f64; 3] {
        [p[2] + self.k(p[0], p[1]), p[1].abs() - self.half_width, -p[2] - Self::FLOOR]
    }

    /// Index of the active piece (first among ties).
    fn active(&self, p: &DVector<f64>) -> usize {
        let v = self.pieces(p);
        if v[0] >= v[1] && v[0] >= v[2] {
            0
        } else if v[1] >= v[2] {
            1
        } else {
            2
        }
    }

    pub fn k(&self, x: f64, y: f64) -> f64 {
        let q = self.q as i32;
        x * x * (4.0 - y + 0.5 * y * y) + y.powi(q + 1) / (q + 1) as f64 - y.powi(q + 2) / (q + 2) as f64
    }

    /// Term-by-term derivatives `(dk/dx, dk/dy)`.
    pub fn grad_k(&self, x: f64, y: f64) -> (f64, f64) {
        let q = self.q as i32;
        (2.0 * x * (4.0 - y + 0.5 * y * y), x * x * (y - 1.0) + y.powi(q) - y.powi(q + 1))
    }

    pub fn hess_k(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let q = self.q as i32;
        let qf = self.q as f64;
        let kxx = 2.0 * (4.0 - y + 0.5 * y * y);
        let kxy = 2.0 * x * (y - 1.0);
        let kyy = x * x + qf * y.powi(q - 1) - (qf + 1.0) * y.powi(q);
        [[kxx, kxy], [kxy, kyy]]
    }
}

impl Field for KiselmanField {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.pieces(p).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        match self.active(p) {
            0 => {
                let (kx, ky) = self.grad_k(p[0], p[1]);
                DVector::from_vec(vec![kx, ky, 1.0])
            }
            1 => DVector::from_vec(vec![0.0, p[1].signum(), 0.0]),
            _ => DVector::from_vec(vec![0.0, 0.0, -1.0]),
        }
    }
    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        if self.active(p) != 0 {
            return Some(DMatrix::zeros(3, 3));
        }
        let h = self.hess_k(p[0], p[1]);
        Some(DMatrix::from_row_slice(3, 3, &[h[0][0], h[0][1], 0.0, h[1][0], h[1][1], 0.0, 0.0, 0.0, 0.0]))
    }
}

/// Convex hull of the circle `{(x-1)^2 + z^2 = 1, y = 0}` and the apex
/// `(0, 1, 0)`: `max(rho - (1 - y), -y)` with `rho = |(x - 1 + y, z)|`.
#[derive(Debug, Clone)]
pub struct ConeField;

impl ConeField {
    pub const APEX: [f64; 3] = [0.0, 1.0, 0.0];

    pub fn lateral(&self, p: &DVector<f64>) -> f64 {
        let a = p[0] - 1.0 + p[1];
        (a * a + p[2] * p[2]).sqrt() - (1.0 - p[1])
    }

    pub fn lateral_gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let a = p[0] - 1.0 + p[1];
        let rho = (a * a + p[2] * p[2]).sqrt();
        if rho < 1e-300 {
            return DVector::from_vec(vec![0.0, 1.0, 0.0]);
        }
        DVector::from_vec(vec![a / rho, a / rho + 1.0, p[2] / rho])
    }

    pub fn base_gradient() -> DVector<f64> {
        DVector::from_vec(vec![0.0, -1.0, 0.0])
    }

    /// Circle generators of the hull: `2^bits` points of the base circle.
    pub fn hull_generators(bits: u32) -> Vec<DVector<f64>> {
        let m = 1usize << bits;
        let mut out: Vec<DVector<f64>> = (0..m)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                DVector::from_vec(vec![1.0 - a.cos(), 0.0, a.sin()])
            })
            .collect();
        out.push(DVector::from_row_slice(&Self::APEX));
        out
    }
}

impl Field for ConeField {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.lateral(p).max(-p[1])
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        if self.lateral(p) >= -p[1] {
            self.lateral_gradient(p)
        } else {
            Self::base_gradient()
        }
    }
}

/// Smooth bump `A * exp(1 - 1/(1 - s^2))`, `s = (x - center) / half_width`,
/// supported on the open interval `(center - half_width, center + half_width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
}

impl Bump {
    /// `(value, first, second)` derivatives at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let s = (x - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 1.0 - s * s;
        let b = (1.0 - 1.0 / q).exp();
        let d1 = -2.0 * s * b / (q * q);
        let d2 = b * (4.0 * s * s / q.powi(4) - 2.0 / (q * q) - 8.0 * s * s / q.powi(3));
        let k = 1.0 / self.half_width;
        (self.amplitude * b, self.amplitude * d1 * k, self.amplitude * d2 * k * k)
    }
}

/// Epigraph of `f(x) = x^2 + eps * g(x)` in the plane, cut off at height
/// `CAP`: `G = max(f(x) - z, z - CAP)`. `g` is a sum of bumps on the
/// middle-third gaps of the depth-`d` Cantor approximation of `[1, 2]`
/// (amplitude `4^-level`), so it vanishes exactly on the `2^d` closed
/// intervals that remain.
#[derive(Debug, Clone)]
pub struct CantorField {
    pub eps: f64,
    pub depth: u32,
    pub bumps: Vec<Bump>,
}

impl CantorField {
    pub const CAP: f64 = 5.0;

    pub fn new(eps: f64, depth: u32) -> Self {
        let mut bumps = Vec::new();
        let mut intervals = vec![(1.0f64, 2.0f64)];
        for level in 1..=depth {
            let amplitude = 4f64.powi(-(level as i32));
            let mut next = Vec::with_capacity(intervals.len() * 2);
            for &(a, b) in &intervals {
                let w = (b - a) / 3.0;
                bumps.push(Bump { center: a + 1.5 * w, half_width: 0.5 * w, amplitude });
                next.push((a, a + w));
                next.push((b - w, b));
            }
            intervals = next;
        }
        CantorField { eps, depth, bumps }
    }

    /// Closed intervals of the depth-`d` Cantor approximation.
    pub fn cantor_intervals(depth: u32) -> Vec<(f64, f64)> {
        let mut intervals = vec![(1.0f64, 2.0f64)];
        for _ in 0..depth {
            intervals = intervals
                .iter()
                .flat_map(|&(a, b)| {
                    let w = (b - a) / 3.0;
                    [(a, a + w), (b - w, b)]
                })
                .collect();
        }
        intervals
    }

    pub fn g(&self, x: f64) -> (f64, f64, f64) {
        if !(1.0..=2.0).contains(&x) {
            return (0.0, 0.0, 0.0);
        }
        self.bumps.iter().fold((0.0, 0.0, 0.0), |acc, b| {
            let (v, d1, d2) = b.eval(x);
            (acc.0 + v, acc.1 + d1, acc.2 + d2)
        })
    }

    pub fn f(&self, x: f64) -> (f64, f64, f64) {
        let (g, g1, g2) = self.g(x);
        (x * x + self.eps * g, 2.0 * x + self.eps * g1, 2.0 + self.eps * g2)
    }

    /// Smallest value of `g''` over the bumps, sampled on a fine grid of each
    /// support.
    pub fn min_g_second(&self) -> f64 {
        let mut m: f64 = 0.0;
        for b in &self.bumps {
            for i in 1..2000 {
                let x = b.center - b.half_width + 2.0 * b.half_width * i as f64 / 2000.0;
                m = m.min(b.eval(x).2);
            }
        }
        m
    }
}

impl Field for CantorField {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        (self.f(p[0]).0 - p[1]).max(p[1] - Self::CAP)
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let (f, f1, _) = self.f(p[0]);
        if f - p[1] >= p[1] - Self::CAP {
            DVector::from_vec(vec![f1, -1.0])
        } else {
            DVector::from_vec(vec![0.0, 1.0])
        }
    }
    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (f, _, f2) = self.f(p[0]);
        let h = if f - p[1] >= p[1] - Self::CAP { f2 } else { 0.0 };
        Some(DMatrix::from_row_slice(2, 2, &[h, 0.0, 0.0, 0.0]))
    }
}

/// `kappa |x'|^2 / 2 - x_n`: the region above an upward paraboloid.
#[derive(Debug, Clone)]
pub struct ParaboloidField {
    pub curvature: f64,
    pub dim: usize,
}

impl Field for ParaboloidField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        let n = self.dim;
        0.5 * self.curvature * p.rows(0, n - 1).norm_squared() - p[n - 1]
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut g = p * self.curvature;
        g[n - 1] = -1.0;
        g
    }
    fn hessian(&self, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.dim;
        let mut h = DMatrix::identity(n, n) * self.curvature;
        h[(n - 1, n - 1)] = 0.0;
        Some(h)
    }
}

/// `sum (x_i / a_i)^{p_i} - 1` with even integer exponents.
#[derive(Debug, Clone)]
pub struct SuperellipsoidField {
    pub semiaxes: Vec<f64>,
    pub exponents: Vec<u32>,
}

impl Field for SuperellipsoidField {
    fn dim(&self) -> usize {
        self.semiaxes.len()
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        (0..p.len()).map(|i| (p[i] / self.semiaxes[i]).powi(self.exponents[i] as i32)).sum::<f64>() - 1.0
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(p.len(), |i, _| {
            let e = self.exponents[i] as i32;
            let a = self.semiaxes[i];
            e as f64 / a * (p[i] / a).powi(e - 1)
        })
    }
    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d = DVector::from_fn(p.len(), |i, _| {
            let e = self.exponents[i] as i32;
            let a = self.semiaxes[i];
            (e * (e - 1)) as f64 / (a * a) * (p[i] / a).powi(e - 2)
        });
        Some(DMatrix::from_diagonal(&d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidParams {
    pub semiaxes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallParams {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KiselmanParams {
    pub q: i64,
    #[serde(default = "default_strip")]
    pub strip_half_width: f64,
}

fn default_strip() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConeParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorParams {
    pub eps: f64,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaboloidParams {
    pub curvature: f64,
    pub height: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperellipsoidParams {
    pub semiaxes: Vec<f64>,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Ellipsoid(EllipsoidParams),
    TranslatedBall(BallParams),
    Kiselman(KiselmanParams),
    ConeOverCircle(ConeParams),
    CantorContact(CantorParams),
    ParaboloidCap(ParaboloidParams),
    Superellipsoid(SuperellipsoidParams),
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Ellipsoid(_) => "ellipsoid",
            Family::TranslatedBall(_) => "translated_ball",
            Family::Kiselman(_) => "kiselman",
            Family::ConeOverCircle(_) => "cone_over_circle",
            Family::CantorContact(_) => "cantor_contact",
            Family::ParaboloidCap(_) => "paraboloid_cap",
            Family::Superellipsoid(_) => "superellipsoid",
        }
    }

    fn params_json(&self) -> serde_json::Value {
        let v = match self {
            Family::Ellipsoid(p) => serde_json::to_value(p),
            Family::TranslatedBall(p) => serde_json::to_value(p),
            Family::Kiselman(p) => serde_json::to_value(p),
            Family::ConeOverCircle(p) => serde_json::to_value(p),
            Family::CantorContact(p) => serde_json::to_value(p),
            Family::ParaboloidCap(p) => serde_json::to_value(p),
            Family::Superellipsoid(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }
}

/// Serializable body description:
/// `{"family": ..., "params": {...}, "pose": {"rotation": [[...]], "translation": [...]}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub family: Family,
    pub pose: Option<Pose>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose: Option<Pose>,
}

fn params<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    let v = if v.is_null() { serde_json::json!({}) } else { v };
    serde_json::from_value(v).map_err(|e| Error::Spec(e.to_string()))
}

impl BodySpec {
    pub fn new(family: Family) -> Self {
        BodySpec { family, pose: None }
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = Some(pose);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        let family = match raw.family.as_str() {
            "ellipsoid" => Family::Ellipsoid(params(raw.params)?),
            "translated_ball" => Family::TranslatedBall(params(raw.params)?),
            "kiselman" => Family::Kiselman(params(raw.params)?),
            "cone_over_circle" => Family::ConeOverCircle(params(raw.params)?),
            "cantor_contact" => Family::CantorContact(params(raw.params)?),
            "paraboloid_cap" => Family::ParaboloidCap(params(raw.params)?),
            "superellipsoid" => Family::Superellipsoid(params(raw.params)?),
            other => return Err(Error::Spec(format!("unknown family {other:?}"))),
        };
        Ok(BodySpec { family, pose: raw.pose })
    }

    pub fn to_json(&self) -> String {
        let raw = RawSpec {
            family: self.family.tag().to_string(),
            params: self.family.params_json(),
            pose: self.pose.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("spec serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_json()).expect("spec round-trips")
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Build the body described by `spec`, with family metadata.
pub fn instantiate(spec: &BodySpec) -> Result<ImplicitBody> {
    let body = match &spec.family {
        Family::Ellipsoid(p) => {
            if p.semiaxes.len() < 2 {
                return Err(Error::Parameter("ellipsoid needs at least two semiaxes".into()));
            }
            for &a in &p.semiaxes {
                positive("semiaxis", a)?;
            }
            let n = p.semiaxes.len();
            let amax = p.semiaxes.iter().cloned().fold(0.0, f64::max);
            let amin = p.semiaxes.iter().cloned().fold(f64::INFINITY, f64::min);
            ImplicitBody::new(
                Arc::new(EllipsoidField { semiaxes: p.semiaxes.clone() }),
                BodyMeta {
                    name: "ellipsoid".into(),
                    center: DVector::zeros(n),
                    bounding_radius: amax,
                    chart_radius: 0.6 * amin,
                    convexity: ConvexityClass::UniformlyConvex { modulus: 2.0 / (amax * amax) },
                    smoothness: SmoothnessClass::Smooth,
                },
            )
        }
        Family::TranslatedBall(p) => {
            positive("radius", p.radius)?;
            if p.center.len() < 2 {
                return Err(Error::Parameter("ball center needs at least two coordinates".into()));
            }
            let c = DVector::from_vec(p.center.clone());
            ImplicitBody::new(
                Arc::new(BallField { center: c.clone(), radius: p.radius }),
                BodyMeta {
                    name: "translated_ball".into(),
                    center: c,
                    bounding_radius: p.radius,
                    chart_radius: 0.6 * p.radius,
                    convexity: ConvexityClass::UniformlyConvex { modulus: 2.0 },
                    smoothness: SmoothnessClass::Smooth,
                },
            )
        }
        Family::Kiselman(p) => {
            if p.q < 3 || p.q % 2 == 0 {
                return Err(Error::Parameter(format!("kiselman q must be an odd integer >= 3, got {}", p.q)));
            }
            if !(p.strip_half_width > 0.0 && p.strip_half_width <= 0.5) {
                return Err(Error::Parameter(format!(
                    "kiselman strip half-width must lie in (0, 1/2], got {}",
                    p.strip_half_width
                )));
            }
            let w = p.strip_half_width;
            ImplicitBody::new(
                Arc::new(KiselmanField { q: p.q as u32, half_width: w }),
                BodyMeta {
                    name: format!("kiselman(q={})", p.q),
                    center: DVector::from_vec(vec![0.0, 0.0, -1.0]),
                    bounding_radius: 1.4,
                    chart_radius: 0.98 * w,
                    convexity: ConvexityClass::Convex,
                    smoothness: SmoothnessClass::Lipschitz,
                },
            )
        }
        Family::ConeOverCircle(_) => ImplicitBody::new(
            Arc::new(ConeField),
            BodyMeta {
                name: "cone_over_circle".into(),
                center: DVector::from_vec(vec![0.75, 0.25, 0.0]),
                bounding_radius: 1.3,
                chart_radius: 0.2,
                convexity: ConvexityClass::Convex,
                smoothness: SmoothnessClass::Lipschitz,
            },
        ),
        Family::CantorContact(p) => {
            if !(p.eps >= 0.0 && p.eps.is_finite()) {
                return Err(Error::Parameter(format!("cantor eps must be non-negative, got {}", p.eps)));
            }
            if p.depth > 12 {
                return Err(Error::Parameter(format!("cantor depth must be at most 12, got {}", p.depth)));
            }
            let field = CantorField::new(p.eps, p.depth);
            if 2.0 + p.eps * field.min_g_second() < 0.0 {
                return Err(Error::Parameter(format!(
                    "eps = {} too large: x^2 + eps g(x) is not convex on [1, 2]",
                    p.eps
                )));
            }
            ImplicitBody::new(
                Arc::new(field),
                BodyMeta {
                    name: format!("cantor_contact(eps={}, depth={})", p.eps, p.depth),
                    center: DVector::from_vec(vec![0.0, 3.0]),
                    bounding_radius: 3.05,
                    chart_radius: 0.25,
                    convexity: ConvexityClass::Convex,
                    smoothness: SmoothnessClass::Lipschitz,
                },
            )
        }
        Family::ParaboloidCap(p) => {
            positive("curvature", p.curvature)?;
            positive("height", p.height)?;
            if p.dim < 2 {
                return Err(Error::Parameter("paraboloid dimension must be at least 2".into()));
            }
            let mut c = DVector::zeros(p.dim);
            c[p.dim - 1] = 0.5 * p.height;
            let rim = (2.0 * p.height / p.curvature).sqrt();
            ImplicitBody::new(
                Arc::new(ParaboloidField { curvature: p.curvature, dim: p.dim }),
                BodyMeta {
                    name: "paraboloid_cap".into(),
                    center: c,
                    bounding_radius: (rim * rim + 0.25 * p.height * p.height).sqrt(),
                    chart_radius: 0.6 * rim,
                    convexity: ConvexityClass::StrictlyConvex,
                    smoothness: SmoothnessClass::Smooth,
                },
            )
        }
        Family::Superellipsoid(p) => {
            if p.semiaxes.len() < 2 || p.semiaxes.len() != p.exponents.len() {
                return Err(Error::Parameter("superellipsoid needs matching semiaxes and exponents".into()));
            }
            for &a in &p.semiaxes {
                positive("semiaxis", a)?;
            }
            if p.exponents.iter().any(|&e| e < 2 || e % 2 != 0) {
                return Err(Error::Parameter("superellipsoid exponents must be even integers >= 2".into()));
            }
            let n = p.semiaxes.len();
            let amax = p.semiaxes.iter().cloned().fold(0.0, f64::max);
            let amin = p.semiaxes.iter().cloned().fold(f64::INFINITY, f64::min);
            let convexity = if p.exponents.iter().all(|&e| e == 2) {
                ConvexityClass::UniformlyConvex { modulus: 2.0 / (amax * amax) }
            } else {
                ConvexityClass::StrictlyConvex
            };
            ImplicitBody::new(
                Arc::new(SuperellipsoidField { semiaxes: p.semiaxes.clone(), exponents: p.exponents.clone() }),
                BodyMeta {
                    name: "superellipsoid".into(),
                    center: DVector::zeros(n),
                    bounding_radius: amax * (n as f64).sqrt(),
                    chart_radius: 0.4 * amin,
                    convexity,
                    smoothness: SmoothnessClass::Smooth,
                },
            )
        }
    };
    match &spec.pose {
        Some(pose) => body.with_pose(pose),
        None => Ok(body),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translated_ball_identity() {
        let spec = BodySpec::new(Family::TranslatedBall(BallParams { center: vec![0.0, 0.0, 3.0], radius: 1.0 }));
        let b = instantiate(&spec).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 2.5]);
        let expected = (&x - DVector::from_vec(vec![0.0, 0.0, 3.0])).norm_squared() - 1.0;
        assert_eq!(b.value(&x), expected);
        assert_eq!(b.bounding_radius(), 1.0);
        assert_eq!(b.center().as_slice(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn even_kiselman_q_is_rejected() {
        let spec = BodySpec::new(Family::Kiselman(KiselmanParams { q: 4, strip_half_width: 0.5 }));
        assert!(matches!(instantiate(&spec), Err(Error::Parameter(_))));
        let spec = BodySpec::new(Family::Kiselman(KiselmanParams { q: 1, strip_half_width: 0.5 }));
        assert!(matches!(instantiate(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn ellipsoid_metadata() {
        let spec = BodySpec::new(Family::Ellipsoid(EllipsoidParams { semiaxes: vec![2.0, 1.0, 1.0] }));
        let b = instantiate(&spec).unwrap();
        // 2 * min(1/4, 1, 1)
        assert_eq!(b.convexity(), ConvexityClass::UniformlyConvex { modulus: 0.5 });
        assert_eq!(b.smoothness(), SmoothnessClass::Smooth);
    }

    #[test]
    fn kiselman_body_is_cut_to_the_strip() {
        let spec = BodySpec::new(Family::Kiselman(KiselmanParams { q: 3, strip_half_width: 0.5 }));
        let b = instantiate(&spec).unwrap();
        assert_eq!(b.convexity(), ConvexityClass::Convex);
        assert_eq!(b.value(&DVector::zeros(3)), 0.0);
        assert!(b.value(&DVector::from_vec(vec![0.0, 0.6, -0.5])) > 0.0);
        assert!(b.value(&DVector::from_vec(vec![0.0, 0.0, -2.5])) > 0.0);
        assert!(b.contains(&b.center()));
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let text = r#"{"family": "ellipsoid", "params": {"semiaxes": [2, 1, 1]},
            "pose": {"rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0, 0, 5]}}"#;
        let spec = BodySpec::from_json(text).unwrap();
        assert_eq!(BodySpec::from_json(&spec.to_json()).unwrap(), spec);
        let bad = r#"{"family": "ellipsoid", "params": {"semiaxes": [2, 1, 1], "color": 3}}"#;
        assert!(matches!(BodySpec::from_json(bad), Err(Error::Spec(_))));
        let bad_top = r#"{"family": "ellipsoid", "params": {"semiaxes": [1, 1]}, "extra": 1}"#;
        assert!(matches!(BodySpec::from_json(bad_top), Err(Error::Spec(_))));
        let bad_family = r#"{"family": "torus", "params": {}}"#;
        assert!(matches!(BodySpec::from_json(bad_family), Err(Error::Spec(_))));
    }

    #[test]
    fn pose_translates_body() {
        let text = r#"{"family": "translated_ball", "params": {"center": [0, 0, 0], "radius": 1},
            "pose": {"rotation": [[0,-1,0],[1,0,0],[0,0,1]], "translation": [1, 2, 3]}}"#;
        let b = instantiate(&BodySpec::from_json(text).unwrap()).unwrap();
        assert_eq!(b.center().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(b.value(&DVector::from_vec(vec![1.0, 2.0, 4.0])).abs() < 1e-15);
    }

    #[test]
    fn improper_pose_rejected() {
        let text = r#"{"family": "translated_ball", "params": {"center": [0, 0, 0], "radius": 1},
            "pose": {"rotation": [[-1,0,0],[0,1,0],[0,0,1]], "translation": [0, 0, 0]}}"#;
        assert!(instantiate(&BodySpec::from_json(text).unwrap()).is_err());
    }

    #[test]
    fn cantor_eps_too_large_rejected() {
        let spec = BodySpec::new(Family::CantorContact(CantorParams { eps: 10.0, depth: 3 }));
        assert!(matches!(instantiate(&spec), Err(Error::Parameter(_))));
        let spec = BodySpec::new(Family::CantorContact(CantorParams { eps: 1e-3, depth: 3 }));
        assert!(instantiate(&spec).is_ok());
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump { center: 0.3, half_width: 0.1, amplitude: 0.5 };
        for i in 1..40 {
            let x = 0.2 + 0.2 * i as f64 / 40.0;
            let h = 1e-6;
            let (_, d1, d2) = b.eval(x);
            let fd1 = (b.eval(x + h).0 - b.eval(x - h).0) / (2.0 * h);
            let fd2 = (b.eval(x + h).1 - b.eval(x - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()));
            assert!((d2 - fd2).abs() < 1e-4 * (1.0 + d2.abs()));
        }
    }
}
