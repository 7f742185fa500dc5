//! Orthogonal projection of one convex body onto another and the boundary
//! of the resulting shadow on `∂Λ`.
//!
//! `Ω = {G <= 0}` is projected onto `Λ = {F <= 0}`. A point `y` of `∂Λ` is in
//! the shadow when the outward normal ray from `y` meets `Ω`. The shadow
//! boundary is the zero set of
//! `Φ(x, y, t) = (G(x), F(y), ∇G(x)·∇F(y), y + t ∇F(y) - x)`.

mod barrier;
mod solve;
mod trace;

pub use barrier::{barrier_psi, t_star, Barrier};
pub use solve::{certify_rank, jacobian, residual_map, solve_boundary_point, ProjectionPoint, RankCertificate, Seed};
pub use trace::{trace_boundary, BoundaryTrace, TraceOptions};

use nalgebra::{DMatrix, DVector};

use crate::bodies::{ImplicitBody, TOL_BOUNDARY};
use crate::error::{Error, Result};
use crate::frame::complement_vector;
use crate::roots;

const PROJECT_MAX_ITER: usize = 100;
const RAY_COARSE: usize = 32;

fn boundary_tol(body: &ImplicitBody, x: &DVector<f64>) -> f64 {
    TOL_BOUNDARY * (1.0 + body.gradient(x).norm() * body.bounding_radius())
}

/// Nearest point of `lambda` to `x`, by damped Newton on the KKT system
/// `y + s ∇F(y) = x`, `F(y) = 0`, started from the radial boundary point
/// towards `x`.
pub fn project_point(lambda: &ImplicitBody, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = lambda.dim();
    if x.len() != n {
        return Err(Error::Parameter(format!("point has dimension {}, body has {n}", x.len())));
    }
    let fx = lambda.value(x);
    let tol = boundary_tol(lambda, x);
    if fx.abs() <= tol {
        return Ok(x.clone());
    }
    if fx < 0.0 {
        return Err(Error::InteriorPoint);
    }
    let c = lambda.center();
    let dir = x - &c;
    let mut y = lambda.radial_boundary_point(&if dir.norm() > 0.0 { dir } else { complement_vector(&c) })?;
    let g = lambda.gradient(&y);
    let mut s = ((x - &y).dot(&g) / g.norm_squared()).max(0.0);
    let scale = lambda.bounding_radius().max((x - &y).norm());

    let residual = |y: &DVector<f64>, s: f64| -> DVector<f64> {
        let g = lambda.gradient(y);
        let mut r = DVector::zeros(n + 1);
        r.rows_mut(0, n).copy_from(&(y + &g * s - x));
        r[n] = lambda.value(y) / g.norm().max(1e-300);
        r
    };
    let mut r = residual(&y, s);
    for _ in 0..PROJECT_MAX_ITER {
        if r.amax() <= 1e-14 * scale {
            break;
        }
        let g = lambda.gradient(&y);
        let gn = g.norm();
        let h = lambda.hessian(&y);
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) + h * s));
        j.view_mut((0, n), (n, 1)).copy_from(&g);
        j.view_mut((n, 0), (1, n)).copy_from(&(g.transpose() / gn));
        let Some(step) = j.lu().solve(&(-&r)) else {
            return Err(Error::NoConvergence { iterations: 0, residual: r.amax() });
        };
        let mut lambda_step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let y_new = &y + step.rows(0, n) * lambda_step;
            let s_new = s + step[n] * lambda_step;
            let r_new = residual(&y_new, s_new);
            if r_new.norm() < r.norm() {
                y = y_new;
                s = s_new;
                r = r_new;
                accepted = true;
                break;
            }
            lambda_step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() > 1e-10 * scale || s < 0.0 {
        return Err(Error::NoConvergence { iterations: PROJECT_MAX_ITER, residual: r.amax() });
    }
    Ok(y)
}

/// Smallest `t >= 0` with `G(y + t nu) = 0`, or `None` when the ray misses
/// `omega` within `2 (|y - c| + R)`.
pub fn first_hitting_time(omega: &ImplicitBody, y: &DVector<f64>, nu: &DVector<f64>) -> Option<f64> {
    if omega.value(y) <= 0.0 {
        return Some(0.0);
    }
    let c = omega.center();
    let t_max = 2.0 * ((y - &c).norm() + omega.bounding_radius());
    let g = |t: f64| omega.value(&(y + nu * t));
    let h = t_max / RAY_COARSE as f64;
    let mut prev = 0.0;
    let mut hit = None;
    for i in 1..=RAY_COARSE {
        let t = h * i as f64;
        if g(t) <= 0.0 {
            hit = Some(t);
            break;
        }
        prev = t;
    }
    let hit = match hit {
        Some(t) => t,
        None => {
            // The coarse march can step over a grazing intersection; G is
            // convex along the ray, so minimize it.
            let (t, v) = roots::convex_min(g, 0.0, t_max, 4, 1e-13 * t_max, 0.0);
            if v > 0.0 {
                return None;
            }
            prev = 0.0;
            t
        }
    };
    roots::bisect(|t| Ok(g(t)), prev, hit, 200).ok().map(|(t, _)| {
        // Report the crossing end of the final bracket.
        if g(t) > 0.0 {
            t + 2.0 * f64::EPSILON * t.abs().max(1e-300)
        } else {
            t
        }
    })
}

/// Whether the outward normal ray of `lambda` at `y` hits `omega`.
fn ray_hits(omega: &ImplicitBody, y: &DVector<f64>, nu: &DVector<f64>) -> bool {
    if omega.value(y) <= 0.0 {
        return true;
    }
    let c = omega.center();
    let t_max = 2.0 * ((y - &c).norm() + omega.bounding_radius());
    let g = |t: f64| omega.value(&(y + nu * t));
    let (_, v) = roots::convex_min(g, 0.0, t_max, RAY_COARSE, 1e-12 * t_max, 0.0);
    v <= 0.0
}

/// Membership of the boundary point `y` of `lambda` in the projection
/// shadow of `omega`.
pub fn in_projection_shadow(omega: &ImplicitBody, lambda: &ImplicitBody, y: &DVector<f64>) -> Result<bool> {
    let f = lambda.value(y);
    if f.abs() > boundary_tol(lambda, y) {
        return Err(Error::Domain(format!("point is not on the boundary of {} (F = {f:e})", lambda.name())));
    }
    let nu = lambda.outward_normal(y)?;
    Ok(ray_hits(omega, y, &nu))
}

/// Closest pair between two disjoint bodies.
#[derive(Debug, Clone)]
pub struct Separation {
    /// Closest point of `omega`.
    pub x: DVector<f64>,
    /// Closest point of `lambda`.
    pub y: DVector<f64>,
    pub distance: f64,
    /// Unit vector from `lambda` towards `omega`.
    pub direction: DVector<f64>,
}

/// Check that the closures are disjoint and return the closest pair, by
/// alternating projections `x <- P_Ω(P_Λ(x))`.
pub fn validate_disjoint(omega: &ImplicitBody, lambda: &ImplicitBody) -> Result<Separation> {
    if omega.dim() != lambda.dim() {
        return Err(Error::Parameter("bodies have different dimensions".into()));
    }
    let co = omega.center();
    let cl = lambda.center();
    if lambda.value(&co) <= 0.0 || omega.value(&cl) <= 0.0 {
        return Err(Error::Overlap { separation: 0.0 });
    }
    let scale = omega.bounding_radius().max(lambda.bounding_radius());
    let overlap = |e: Error| match e {
        Error::InteriorPoint => Error::Overlap { separation: 0.0 },
        other => other,
    };
    let mut x = co;
    let mut y = project_point(lambda, &x).map_err(overlap)?;
    let mut dist = f64::INFINITY;
    for _ in 0..2000 {
        x = project_point(omega, &y).map_err(overlap)?;
        y = project_point(lambda, &x).map_err(overlap)?;
        let d = (&x - &y).norm();
        if d <= 1e-9 * scale {
            return Err(Error::Overlap { separation: d });
        }
        let done = (dist - d).abs() <= 1e-15 * scale;
        dist = d;
        if done {
            break;
        }
    }
    let direction = (&x - &y) / dist;
    Ok(Separation { x, y, distance: dist, direction })
}

/// Boundary point of `lambda` in direction `d` from its center.
fn radial(lambda: &ImplicitBody, d: &DVector<f64>) -> Result<DVector<f64>> {
    lambda.radial_boundary_point(d)
}

/// Unit vector on the great-circle arc from `a` to `b` (not antipodal) at
/// fraction `s`.
fn slerp(a: &DVector<f64>, b: &DVector<f64>, s: f64) -> DVector<f64> {
    let omega = a.dot(b).clamp(-1.0, 1.0).acos();
    if omega < 1e-12 {
        return a.clone();
    }
    (a * ((1.0 - s) * omega).sin() + b * (s * omega).sin()) / omega.sin()
}

/// Build `(x, t)` for a shadow boundary point `y`: `x` minimizes `G` along the
/// normal ray, `t = |x - y| / |∇F(y)|`.
pub fn seed_from_boundary_point(omega: &ImplicitBody, lambda: &ImplicitBody, y: &DVector<f64>) -> Result<Seed> {
    let grad = lambda.gradient(y);
    let nu = grad.normalize();
    let c = omega.center();
    let t_max = 2.0 * ((y - &c).norm() + omega.bounding_radius());
    let (s, _) = roots::convex_min(|s| omega.value(&(y + &nu * s)), 0.0, t_max, 64, 1e-13 * t_max, f64::NEG_INFINITY);
    let x = y + &nu * s;
    Ok(Seed { x, y: y.clone(), t: s / grad.norm() })
}

/// Seed on `∂P_Λ(Ω)` by bisecting shadow membership along a path on `∂Λ`
/// from the projection of `Ω`'s center (inside the shadow) to the radial
/// point facing away from `Ω` (outside).
pub fn seed_boundary(omega: &ImplicitBody, lambda: &ImplicitBody) -> Result<Seed> {
    let sep = validate_disjoint(omega, lambda)?;
    let cl = lambda.center();
    let y_in = project_point(lambda, &omega.center())?;
    let d_in = (&y_in - &cl).normalize();
    let d_out = -&sep.direction;
    // Route through a direction orthogonal to d_out on the side of d_in so
    // that neither arc is antipodal.
    let mid = {
        let p = &d_in - &d_out * d_out.dot(&d_in);
        if p.norm() > 1e-9 {
            p.normalize()
        } else {
            complement_vector(&d_out)
        }
    };
    // Two arcs d_in -> mid -> d_out, parametrized by s in [0, 2].
    let dir_at = |s: f64| -> DVector<f64> {
        if s <= 1.0 {
            slerp(&d_in, &mid, s)
        } else {
            slerp(&mid, &d_out, s - 1.0)
        }
    };
    let member = |s: f64| -> Result<bool> {
        let y = radial(lambda, &dir_at(s))?;
        in_projection_shadow(omega, lambda, &y)
    };
    if !member(0.0)? {
        return Err(Error::Seed("projection of the center of omega is not in the shadow".into()));
    }
    if member(2.0)? {
        return Err(Error::Seed("point facing away from omega is in the shadow".into()));
    }
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if member(m)? {
            lo = m;
        } else {
            hi = m;
        }
    }
    let y0 = radial(lambda, &dir_at(lo))?;
    seed_from_boundary_point(omega, lambda, &y0)
}

/// Seed from samples of a patch of `∂Λ`: bisect between the first in-shadow
/// and out-of-shadow samples along the boundary path joining them.
pub fn seed_boundary_on_patch(omega: &ImplicitBody, lambda: &ImplicitBody, samples: &[DVector<f64>]) -> Result<Seed> {
    validate_disjoint(omega, lambda)?;
    let mut inside = None;
    let mut outside = None;
    for y in samples {
        let y = lambda.radial_boundary_point(&(y - lambda.center()))?;
        if in_projection_shadow(omega, lambda, &y)? {
            inside.get_or_insert(y);
        } else {
            outside.get_or_insert(y);
        }
        if inside.is_some() && outside.is_some() {
            break;
        }
    }
    let (Some(a), Some(b)) = (inside, outside) else {
        return Err(Error::Seed(if samples.is_empty() {
            "no samples".into()
        } else {
            "shadow is empty or covers the whole sampled patch".into()
        }));
    };
    let cl = lambda.center();
    let da = (&a - &cl).normalize();
    let db = (&b - &cl).normalize();
    if da.dot(&db) < -1.0 + 1e-9 {
        return Err(Error::Seed("in and out samples are antipodal".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let y = radial(lambda, &slerp(&da, &db, m))?;
        if in_projection_shadow(omega, lambda, &y)? {
            lo = m;
        } else {
            hi = m;
        }
    }
    let y0 = radial(lambda, &slerp(&da, &db, lo))?;
    seed_from_boundary_point(omega, lambda, &y0)
}
