//! Local concave charts `x_n = phi(x')` of convex boundaries.
//!
//! Chart coordinates place the base point at the origin with the outward
//! normal along `+e_n`, so the body is locally `{x_n <= phi(x')}` with `phi`
//! concave, `phi(0) = 0` and `grad phi(0) = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ConvexityClass, ImplicitBody};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::roots;

pub const TOL_BOUNDARY: f64 = 1e-10;
const FIBER_MAX_ITER: usize = 100;

/// Oracle for a concave function on a ball in `R^{n-1}`.
pub trait ChartFunction: Send + Sync + fmt::Debug {
    fn dim_domain(&self) -> usize;
    fn phi(&self, x: &DVector<f64>) -> Result<f64>;
    fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn hess(&self, _x: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }
}

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Chart given by closed-form closures.
#[derive(Clone)]
pub struct FnChart {
    pub name: String,
    dim: usize,
    phi: ScalarFn,
    grad: VectorFn,
    hess: Option<MatrixFn>,
}

impl fmt::Debug for FnChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnChart({}, dim {})", self.name, self.dim)
    }
}

impl FnChart {
    pub fn new<P, G>(name: &str, dim: usize, phi: P, grad: G) -> Self
    where
        P: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        FnChart { name: name.to_string(), dim, phi: Arc::new(phi), grad: Arc::new(grad), hess: None }
    }

    pub fn with_hessian<H>(mut self, hess: H) -> Self
    where
        H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hess = Some(Arc::new(hess));
        self
    }
}

impl ChartFunction for FnChart {
    fn dim_domain(&self) -> usize {
        self.dim
    }
    fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((self.phi)(x))
    }
    fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.grad)(x))
    }
    fn hess(&self, x: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        Ok(self.hess.as_ref().map(|h| h(x)))
    }
}

/// Chart of an implicit body, evaluated by root-finding along the normal
/// fiber through each tangent-plane point.
#[derive(Debug, Clone)]
struct BodyChart {
    body: ImplicitBody,
    frame: Frame,
}

impl BodyChart {
    fn fiber_point(&self, x: &DVector<f64>, s: f64) -> DVector<f64> {
        let n = self.frame.dim();
        let mut local = DVector::zeros(n);
        local.rows_mut(0, n - 1).copy_from(x);
        local[n - 1] = s;
        self.frame.to_world(&local)
    }

    fn fiber_root(&self, x: &DVector<f64>) -> Result<f64> {
        let normal = self.frame.normal();
        let g = |s: f64| {
            let p = self.fiber_point(x, s);
            (self.body.value(&p), self.body.gradient(&p).dot(&normal))
        };
        let scale = self.body.bounding_radius();
        let limit = 4.0 * scale;
        let (g0, d0) = g(0.0);
        if g0 == 0.0 {
            return Ok(0.0);
        }
        // Outside the body (the usual case) the root lies below the tangent
        // plane; inside it lies above.
        let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
        let mut delta = if d0 > 0.0 { (1.5 * g0.abs() / d0).max(1e-6 * scale) } else { 1e-2 * scale };
        loop {
            let (gv, _) = g(dir * delta);
            if gv.signum() != g0.signum() {
                break;
            }
            delta *= 2.0;
            if delta > limit {
                return Err(Error::Chart(format!(
                    "normal fiber through chart point {:?} does not cross the boundary of {}",
                    x.as_slice(),
                    self.body.name()
                )));
            }
        }
        let (lo, hi) = if dir < 0.0 { (-delta, 0.0) } else { (0.0, delta) };
        let (s, gs) = roots::newton_bracketed(|s| Ok(g(s)), lo, hi, 4.0 * f64::EPSILON * scale, FIBER_MAX_ITER)?;
        let slope = g(s).1;
        if !(slope > 0.0) || gs.abs() / slope > TOL_BOUNDARY * scale.max(1.0) {
            return Err(Error::Chart(format!(
                "fiber root at chart point {:?} not resolved (|G| = {:e})",
                x.as_slice(),
                gs.abs()
            )));
        }
        Ok(s)
    }

    /// Gradient of `G` in chart coordinates at the boundary point over `x`.
    fn local_gradient(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let s = self.fiber_root(x)?;
        let p = self.fiber_point(x, s);
        let g = self.frame.vector_to_local(&self.body.gradient(&p));
        let n = g.len();
        if !(g[n - 1] > 0.0) {
            return Err(Error::Chart(format!(
                "boundary over chart point {:?} is not a graph (normal leaves the upper half-space)",
                x.as_slice()
            )));
        }
        Ok((p, g))
    }
}

impl ChartFunction for BodyChart {
    fn dim_domain(&self) -> usize {
        self.frame.dim() - 1
    }

    fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        self.fiber_root(x)
    }

    fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, g) = self.local_gradient(x)?;
        let n = g.len();
        Ok(-g.rows(0, n - 1) / g[n - 1])
    }

    fn hess(&self, x: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        let (p, g) = self.local_gradient(x)?;
        let n = g.len();
        let m = n - 1;
        let f = self.frame.basis.transpose() * self.body.hessian(&p) * &self.frame.basis;
        let gn = g[m];
        let d = -g.rows(0, m) / gn;
        let h = DMatrix::from_fn(m, m, |i, j| {
            -(f[(i, j)] + f[(i, m)] * d[j] + f[(j, m)] * d[i] + f[(m, m)] * d[i] * d[j]) / gn
        });
        Ok(Some(h))
    }
}

/// `phi(z) - |z|^2 / (2 t)`: the chart made uniformly concave with modulus
/// at least `1 / t`.
#[derive(Debug, Clone)]
struct PenalizedChart {
    inner: Arc<dyn ChartFunction>,
    inv_t: f64,
}

impl ChartFunction for PenalizedChart {
    fn dim_domain(&self) -> usize {
        self.inner.dim_domain()
    }
    fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.inner.phi(x)? - 0.5 * self.inv_t * x.norm_squared())
    }
    fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.inner.grad(x)? - x * self.inv_t)
    }
    fn hess(&self, x: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        let m = x.len();
        Ok(self.inner.hess(x)?.map(|h| h - DMatrix::identity(m, m) * self.inv_t))
    }
}

/// A concave chart placed in world coordinates, with optional regularity
/// constants: `|grad phi(y) - grad phi(z)| <= L |y - z|^alpha` and
/// `<grad phi(y) - grad phi(z), y - z> <= -theta |y - z|^2`.
#[derive(Debug, Clone)]
pub struct ConcaveChart {
    func: Arc<dyn ChartFunction>,
    /// Chart coordinates `z'` are evaluated as `func(rot * z')`.
    rot: DMatrix<f64>,
    frame: Frame,
    domain_radius: f64,
    pub holder_l: Option<f64>,
    pub concavity_theta: Option<f64>,
    pub holder_alpha: Option<f64>,
    pub strictly_concave: bool,
}

impl ConcaveChart {
    /// Chart of `func` whose local coordinates are those of `frame`.
    pub fn new(func: Arc<dyn ChartFunction>, frame: Frame, domain_radius: f64) -> Result<Self> {
        let m = func.dim_domain();
        if frame.dim() != m + 1 {
            return Err(Error::Parameter(format!("frame dimension {} does not match chart domain {m}", frame.dim())));
        }
        if !(domain_radius > 0.0) {
            return Err(Error::Parameter(format!("chart radius must be positive, got {domain_radius}")));
        }
        Ok(ConcaveChart {
            func,
            rot: DMatrix::identity(m, m),
            frame,
            domain_radius,
            holder_l: None,
            concavity_theta: None,
            holder_alpha: None,
            strictly_concave: false,
        })
    }

    /// Chart in standard coordinates (identity frame).
    pub fn from_function<C: ChartFunction + 'static>(func: C, domain_radius: f64) -> Result<Self> {
        let n = func.dim_domain() + 1;
        Self::new(Arc::new(func), Frame::identity(n), domain_radius)
    }

    pub fn with_constants(mut self, l: Option<f64>, theta: Option<f64>, alpha: Option<f64>) -> Self {
        self.holder_l = l;
        self.concavity_theta = theta;
        self.holder_alpha = alpha;
        self
    }

    pub fn strictly(mut self, strict: bool) -> Self {
        self.strictly_concave = strict;
        self
    }

    pub fn with_domain_radius(mut self, r: f64) -> Self {
        self.domain_radius = r;
        self
    }

    pub fn dim_domain(&self) -> usize {
        self.func.dim_domain()
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn in_domain(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim_domain() && z.norm() <= self.domain_radius
    }

    fn check(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.dim_domain() {
            return Err(Error::Domain(format!("expected {} chart coordinates, got {}", self.dim_domain(), z.len())));
        }
        if !(z.norm() <= self.domain_radius) {
            return Err(Error::Domain(format!("|z'| = {} exceeds chart radius {}", z.norm(), self.domain_radius)));
        }
        Ok(&self.rot * z)
    }

    pub fn phi(&self, z: &DVector<f64>) -> Result<f64> {
        self.func.phi(&self.check(z)?)
    }

    pub fn grad_phi(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.rot.tr_mul(&self.func.grad(&self.check(z)?)?))
    }

    pub fn hess_phi(&self, z: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        Ok(self.func.hess(&self.check(z)?)?.map(|h| self.rot.transpose() * h * &self.rot))
    }

    pub fn has_hessian(&self) -> bool {
        let z = DVector::zeros(self.dim_domain());
        matches!(self.hess_phi(&z), Ok(Some(_)))
    }

    /// Same chart with tangent coordinates replaced by `q^T z'`, i.e. the new
    /// `j`-th axis is the old direction `q e_j`.
    pub fn rotate_tangent(&self, q: &DMatrix<f64>) -> Result<Self> {
        let m = self.dim_domain();
        if q.nrows() != m || q.ncols() != m {
            return Err(Error::Parameter("tangent rotation has wrong size".into()));
        }
        if (q.transpose() * q - DMatrix::identity(m, m)).norm() > 1e-10 {
            return Err(Error::Parameter("tangent rotation is not orthogonal".into()));
        }
        let mut out = self.clone();
        out.rot = &self.rot * q;
        out.frame = self.frame.rotate_tangent(q);
        Ok(out)
    }

    /// `Psi(z') = phi(z') - |z'|^2 / (2 t_star)`, uniformly concave with
    /// modulus at least `1 / t_star`.
    pub fn penalized(&self, t_star: f64) -> Result<Self> {
        if !(t_star > 0.0 && t_star.is_finite()) {
            return Err(Error::Parameter(format!("t_star must be positive, got {t_star}")));
        }
        let inv_t = 1.0 / t_star;
        let mut out = self.clone();
        out.func = Arc::new(PenalizedChart { inner: self.func.clone(), inv_t });
        out.concavity_theta = Some(self.concavity_theta.unwrap_or(0.0) + inv_t);
        out.holder_l = match (self.holder_l, self.holder_alpha) {
            (Some(l), Some(1.0)) => Some(l + inv_t),
            _ => None,
        };
        if out.holder_l.is_none() {
            out.holder_alpha = None;
        }
        out.strictly_concave = true;
        Ok(out)
    }

    /// Boundary point over `z'` in world coordinates.
    pub fn point_world(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.dim_domain();
        let mut local = DVector::zeros(m + 1);
        local.rows_mut(0, m).copy_from(z);
        local[m] = self.phi(z)?;
        Ok(self.frame.to_world(&local))
    }

    /// Outward unit normal over `z'` in world coordinates.
    pub fn normal_world(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.grad_phi(z)?;
        let m = w.len();
        let mut nu = DVector::zeros(m + 1);
        nu.rows_mut(0, m).copy_from(&(-&w));
        nu[m] = 1.0;
        Ok(&self.frame.basis * (nu / (w.norm_squared() + 1.0).sqrt()))
    }

    /// World direction expressed in chart coordinates.
    pub fn direction_to_chart(&self, u: &DVector<f64>) -> DVector<f64> {
        self.frame.vector_to_local(u)
    }

    /// World point expressed in chart coordinates `(z', z_n)`.
    pub fn point_to_chart(&self, x: &DVector<f64>) -> DVector<f64> {
        self.frame.to_local(x)
    }
}

fn check_boundary_point(body: &ImplicitBody, p: &DVector<f64>) -> Result<DVector<f64>> {
    if p.len() != body.dim() {
        return Err(Error::Parameter(format!("point has dimension {}, body has {}", p.len(), body.dim())));
    }
    let normal = body.outward_normal(p)?;
    let g = body.value(p);
    let tol = TOL_BOUNDARY * (1.0 + body.gradient(p).norm() * body.bounding_radius());
    if g.abs() > tol {
        return Err(Error::Chart(format!("point is not on the boundary of {} (G = {g:e})", body.name())));
    }
    Ok(normal)
}

/// Chart of `body` at the boundary point `p`; the tangent axes come from the
/// minimal rotation carrying `e_n` to the outward normal.
pub fn chart_at(body: &ImplicitBody, p: &DVector<f64>) -> Result<ConcaveChart> {
    let normal = check_boundary_point(body, p)?;
    let frame = Frame::from_normal(p.clone(), &normal);
    body_chart(body, frame)
}

/// Chart of `body` at `p` with prescribed orthonormal tangent axes (columns of
/// `tangents`). The resulting frame must be right-handed.
pub fn chart_at_with_tangents(body: &ImplicitBody, p: &DVector<f64>, tangents: &DMatrix<f64>) -> Result<ConcaveChart> {
    let normal = check_boundary_point(body, p)?;
    let n = body.dim();
    if tangents.nrows() != n || tangents.ncols() != n - 1 {
        return Err(Error::Parameter("tangent basis has wrong shape".into()));
    }
    let frame = Frame::from_tangent_basis(p.clone(), tangents, &normal);
    let b = &frame.basis;
    if (b.transpose() * b - DMatrix::identity(n, n)).norm() > 1e-9 || b.determinant() < 0.0 {
        return Err(Error::Parameter("tangent axes and normal do not form a right-handed orthonormal frame".into()));
    }
    body_chart(body, frame)
}

/// Probe directions on the unit sphere of `R^m`.
fn rim_directions(m: usize) -> Vec<DVector<f64>> {
    if m == 2 {
        return (0..32)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 16.0;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect();
    }
    let mut out = Vec::new();
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(m);
            e[i] = s;
            out.push(e);
            for j in i + 1..m {
                for t in [1.0, -1.0] {
                    let mut d = DVector::zeros(m);
                    d[i] = s;
                    d[j] = t;
                    out.push(d.normalize());
                }
            }
        }
    }
    out
}

/// Smallest normal component `e_n . N` accepted on the rim of a body chart.
const RIM_NORMAL_MIN: f64 = 0.1;

fn body_chart(body: &ImplicitBody, frame: Frame) -> Result<ConcaveChart> {
    let func = BodyChart { body: body.clone(), frame: frame.clone() };
    let strict = !matches!(body.convexity(), ConvexityClass::Convex);
    // The graph domain of a convex body is convex and contains the origin,
    // so it suffices that the rim of the disc is a valid, not too steep graph.
    let dirs = rim_directions(frame.dim() - 1);
    let rim_ok = |r: f64| {
        dirs.iter().all(|d| match func.local_gradient(&(d * r)) {
            Ok((_, g)) => g[g.len() - 1] / g.norm() >= RIM_NORMAL_MIN,
            Err(_) => false,
        })
    };
    let mut r = body.chart_radius();
    let mut shrinks = 0;
    while !rim_ok(r) {
        shrinks += 1;
        if shrinks > 30 {
            return Err(Error::Chart(format!("no admissible chart disc for {}", body.name())));
        }
        r *= 0.8;
    }
    if shrinks > 0 {
        log::debug!("chart radius of {} reduced to {r:e}", body.name());
    }
    Ok(ConcaveChart::new(Arc::new(func), frame, r)?.strictly(strict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{instantiate, BallParams, BodySpec, Family, ParaboloidParams};

    fn unit_ball() -> ImplicitBody {
        instantiate(&BodySpec::new(Family::TranslatedBall(BallParams { center: vec![0.0; 3], radius: 1.0 }))).unwrap()
    }

    #[test]
    fn sphere_chart_at_south_pole_matches_closed_form() {
        let chart = chart_at(&unit_ball(), &DVector::from_vec(vec![0.0, 0.0, -1.0])).unwrap();
        assert_eq!(chart.phi(&DVector::zeros(2)).unwrap(), 0.0);
        for i in 0..=10 {
            for j in 0..=10 {
                let z = DVector::from_vec(vec![-0.35 + 0.07 * i as f64, -0.35 + 0.07 * j as f64]);
                if z.norm() > 0.5 {
                    continue;
                }
                let exact = (1.0 - z.norm_squared()).sqrt() - 1.0;
                assert!((chart.phi(&z).unwrap() - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paraboloid_apex_chart() {
        let body = instantiate(&BodySpec::new(Family::ParaboloidCap(ParaboloidParams {
            curvature: 2.0,
            height: 1.0,
            dim: 3,
        })))
        .unwrap();
        // Apex of {kappa |x'|^2/2 <= x_n}; the outward normal there is -e_n.
        let chart = chart_at(&body, &DVector::zeros(3)).unwrap();
        for k in 0..20 {
            let a = k as f64 * 0.3;
            let z = DVector::from_vec(vec![0.4 * a.cos() * (k as f64 / 20.0), 0.4 * a.sin() * (k as f64 / 20.0)]);
            assert!((chart.phi(&z).unwrap() + z.norm_squared()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_rejected() {
        let body = unit_ball();
        assert!(matches!(chart_at(&body, &DVector::zeros(3)), Err(Error::DegeneratePoint(_))));
    }

    #[test]
    fn hessian_of_sphere_chart() {
        let chart = chart_at(&unit_ball(), &DVector::from_vec(vec![0.0, 0.0, -1.0])).unwrap();
        let z = DVector::from_vec(vec![0.2, -0.1]);
        let h = chart.hess_phi(&z).unwrap().unwrap();
        let r2 = z.norm_squared();
        let s = (1.0 - r2).sqrt();
        for i in 0..2 {
            for j in 0..2 {
                let exact = -(if i == j { 1.0 } else { 0.0 }) / s - z[i] * z[j] / (s * s * s);
                assert!((h[(i, j)] - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn outside_domain_is_error() {
        let chart = chart_at(&unit_ball(), &DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(chart.phi(&DVector::from_vec(vec![0.9, 0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn penalized_chart_of_flat_function() {
        let flat = FnChart::new("flat", 2, |_| 0.0, |z| DVector::zeros(z.len()));
        let chart = ConcaveChart::from_function(flat, 1.0).unwrap().penalized(1.0).unwrap();
        let z = DVector::from_vec(vec![0.3, 0.4]);
        assert!((chart.phi(&z).unwrap() + 0.125).abs() < 1e-15);
        assert_eq!(chart.concavity_theta, Some(1.0));
        assert!(chart.penalized(0.0).is_err());
    }
}
