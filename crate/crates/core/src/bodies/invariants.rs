//! Sampled checks of the defining-function and chart invariants.
//!
//! Convexity and strict convexity can only be tested on finitely many
//! samples; a clean report is a necessary condition, not a proof.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ConcaveChart, ConvexityClass, ImplicitBody, TOL_BOUNDARY};
use crate::error::Result;
use crate::frame::random_unit;

/// Relative tolerance for finite-difference gradient checks.
pub const TOL_FD: f64 = 1e-6;

#[derive(Debug, Clone, Default, Serialize)]
pub struct BodyInvariantReport {
    pub samples: usize,
    pub convexity_violations: usize,
    pub gradient_violations: usize,
    pub max_gradient_error: f64,
    /// Samples skipped by the gradient check because one-sided differences
    /// disagree (a kink of a merely Lipschitz `G`).
    pub kinks_skipped: usize,
    pub uniform_violations: usize,
    pub strict_violations: usize,
    pub singular_boundary_points: usize,
}

impl BodyInvariantReport {
    pub fn passed(&self) -> bool {
        self.convexity_violations == 0
            && self.gradient_violations == 0
            && self.uniform_violations == 0
            && self.strict_violations == 0
            && self.singular_boundary_points == 0
    }
}

fn sample_in_ball<R: Rng>(rng: &mut R, c: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = c.len();
    let d = random_unit(rng, n);
    let rho = r * rng.gen::<f64>().powf(1.0 / n as f64);
    c + d * rho
}

/// Check convexity along segments, gradient against central differences,
/// the declared uniform modulus, strict monotonicity of normals on the
/// boundary, and regularity of the level set, at `samples` random points
/// within the bounding ball.
pub fn check_body_invariants(body: &ImplicitBody, samples: usize, seed: u64) -> BodyInvariantReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = body.center();
    let r = body.bounding_radius();
    let n = body.dim();
    let h = 1e-6 * r;
    let mut rep = BodyInvariantReport { samples, ..Default::default() };

    for _ in 0..samples {
        let x = sample_in_ball(&mut rng, &c, r);
        let z = sample_in_ball(&mut rng, &c, r);
        let t: f64 = rng.gen();
        let gx = body.value(&x);
        let gz = body.value(&z);
        let mid = body.value(&(&x * t + &z * (1.0 - t)));
        let chord = t * gx + (1.0 - t) * gz;
        if mid > chord + 1e-10 * (1.0 + gx.abs() + gz.abs()) {
            rep.convexity_violations += 1;
        }

        let grad = body.gradient(&x);
        let mut fd = DVector::zeros(n);
        let mut kink = false;
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (body.value(&xp), body.value(&xm));
            let fwd = (fp - gx) / h;
            let bwd = (gx - fm) / h;
            if (fwd - bwd).abs() > 1e-3 * (1.0 + fwd.abs() + bwd.abs()) {
                kink = true;
            }
            fd[j] = (fp - fm) / (2.0 * h);
        }
        if kink {
            rep.kinks_skipped += 1;
        } else {
            let err = (&fd - &grad).norm() / (1.0 + grad.norm());
            rep.max_gradient_error = rep.max_gradient_error.max(err);
            if err > TOL_FD {
                rep.gradient_violations += 1;
            }
        }

        if let ConvexityClass::UniformlyConvex { modulus } = body.convexity() {
            let dg = body.gradient(&x) - body.gradient(&z);
            let dx = &x - &z;
            if dg.dot(&dx) < modulus * dx.norm_squared() * (1.0 - 1e-9) - 1e-12 {
                rep.uniform_violations += 1;
            }
        }
    }

    let boundary: Vec<DVector<f64>> =
        (0..samples.min(200)).filter_map(|_| body.radial_boundary_point(&random_unit(&mut rng, n)).ok()).collect();
    for p in &boundary {
        if body.gradient(p).norm() <= 1e-10 {
            rep.singular_boundary_points += 1;
        }
    }
    if !matches!(body.convexity(), ConvexityClass::Convex) {
        for w in boundary.windows(2) {
            let (Ok(na), Ok(nb)) = (body.outward_normal(&w[0]), body.outward_normal(&w[1])) else {
                continue;
            };
            let d = &w[0] - &w[1];
            if d.norm() > 1e-6 * r && (na - nb).dot(&d) <= 0.0 {
                rep.strict_violations += 1;
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ChartInvariantReport {
    pub samples: usize,
    pub concavity_violations: usize,
    pub strict_violations: usize,
    pub holder_violations: usize,
    pub theta_violations: usize,
    pub gradient_violations: usize,
    pub max_gradient_error: f64,
    /// Largest `|G|` at chart points mapped back to the world (body charts only).
    pub max_roundtrip_residual: Option<f64>,
    /// Largest deviation between chart normal and `grad G / |grad G|`.
    pub max_normal_deviation: Option<f64>,
    pub roundtrip_violations: usize,
    pub normal_violations: usize,
}

impl ChartInvariantReport {
    pub fn passed(&self) -> bool {
        self.concavity_violations == 0
            && self.strict_violations == 0
            && self.holder_violations == 0
            && self.theta_violations == 0
            && self.gradient_violations == 0
            && self.roundtrip_violations == 0
            && self.normal_violations == 0
    }
}

/// Sample pairs of points in `0.9 * domain_radius` and check monotonicity of
/// `grad phi`, the declared `(L, alpha)` and `theta` bounds, and `grad phi`
/// against central differences. When `body` is given, also map chart points
/// back to the world and compare `G` and normals.
pub fn check_chart_invariants(
    chart: &ConcaveChart,
    body: Option<&ImplicitBody>,
    samples: usize,
    seed: u64,
) -> Result<ChartInvariantReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = chart.dim_domain();
    let r = 0.9 * chart.domain_radius();
    let h = 1e-5 * chart.domain_radius();
    let zero = DVector::zeros(m);
    let mut rep = ChartInvariantReport { samples, ..Default::default() };

    for _ in 0..samples {
        let y = sample_in_ball(&mut rng, &zero, r);
        let z = sample_in_ball(&mut rng, &zero, r);
        let gy = chart.grad_phi(&y)?;
        let gz = chart.grad_phi(&z)?;
        let dx = &y - &z;
        let dg = &gy - &gz;
        let ip = dg.dot(&dx);
        let dist = dx.norm();
        if ip > 1e-10 * dist * (1.0 + gy.norm() + gz.norm()) {
            rep.concavity_violations += 1;
        }
        if chart.strictly_concave && dist > 1e-6 * r && ip >= 0.0 {
            rep.strict_violations += 1;
        }
        if let (Some(l), Some(a)) = (chart.holder_l, chart.holder_alpha) {
            if dg.norm() > l * dist.powf(a) * (1.0 + 1e-9) + 1e-12 {
                rep.holder_violations += 1;
            }
        }
        if let Some(theta) = chart.concavity_theta {
            if ip > -theta * dist * dist * (1.0 - 1e-9) + 1e-12 {
                rep.theta_violations += 1;
            }
        }

        if y.norm() + h <= chart.domain_radius() {
            let mut fd = DVector::zeros(m);
            for j in 0..m {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                fd[j] = (chart.phi(&yp)? - chart.phi(&ym)?) / (2.0 * h);
            }
            let err = (&fd - &gy).norm() / (1.0 + gy.norm());
            rep.max_gradient_error = rep.max_gradient_error.max(err);
            if err > TOL_FD {
                rep.gradient_violations += 1;
            }
        }

        if let Some(body) = body {
            let p = chart.point_world(&y)?;
            let g = body.value(&p).abs();
            let scale = 1.0 + body.gradient(&p).norm() * body.bounding_radius();
            let res = g / scale;
            rep.max_roundtrip_residual = Some(rep.max_roundtrip_residual.unwrap_or(0.0).max(res));
            if res > 10.0 * TOL_BOUNDARY {
                rep.roundtrip_violations += 1;
            }
            let dev = (chart.normal_world(&y)? - body.outward_normal(&p)?).norm();
            rep.max_normal_deviation = Some(rep.max_normal_deviation.unwrap_or(0.0).max(dev));
            if dev > 1e-6 {
                rep.normal_violations += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{chart_at, instantiate, BodySpec, EllipsoidParams, Family};

    #[test]
    fn ellipsoid_passes_all_checks() {
        let body =
            instantiate(&BodySpec::new(Family::Ellipsoid(EllipsoidParams { semiaxes: vec![2.0, 1.0, 0.5] }))).unwrap();
        let rep = check_body_invariants(&body, 100, 7);
        assert!(rep.passed(), "{rep:?}");
        let p = body.radial_boundary_point(&DVector::from_vec(vec![0.3, -0.5, 0.8])).unwrap();
        let chart = chart_at(&body, &p).unwrap();
        let rep = check_chart_invariants(&chart, Some(&body), 100, 3).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn false_modulus_is_caught() {
        let body =
            instantiate(&BodySpec::new(Family::Ellipsoid(EllipsoidParams { semiaxes: vec![2.0, 1.0, 1.0] }))).unwrap();
        // Declaring the chart uniformly concave with an absurd modulus must fail.
        let p = body.radial_boundary_point(&DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let chart = chart_at(&body, &p).unwrap().with_constants(None, Some(100.0), None);
        let rep = check_chart_invariants(&chart, None, 50, 1).unwrap();
        assert!(rep.theta_violations > 0);
    }
}
