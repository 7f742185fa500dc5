//! Lipschitz barrier for the projection shadow near a boundary point.
//!
//! In the chart of `Λ` at a shadow boundary point `y` whose axis `e_{n-1}` is
//! the outward normal `ν` of `Ω` at the tangency point `x`, the shadow lies
//! below `γ̄ = max(γ̃, 0)`, where `γ̃` is the zero set of `∂_{n-1} Ψ` for
//! `Ψ(z') = φ(z') - |z'|² / (2 t*)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::solve::ProjectionPoint;
use super::{in_projection_shadow, validate_disjoint};
use crate::bodies::{chart_at_with_tangents, ConcaveChart, ImplicitBody};
use crate::error::{Error, Result};
use crate::frame::{complete_basis, random_unit};
use crate::illumination::{Direction, ShadowSolver};

/// `dist(Ω, Λ) + 2 max(diam Ω, diam Λ)`, with diameters bounded by twice the
/// bounding radii (exact for balls).
pub fn t_star(omega: &ImplicitBody, lambda: &ImplicitBody) -> Result<f64> {
    let sep = validate_disjoint(omega, lambda)?;
    Ok(sep.distance + 2.0 * (2.0 * omega.bounding_radius()).max(2.0 * lambda.bounding_radius()))
}

/// `Ψ(z') = φ(z') - |z'|² / (2 t_star)`.
pub fn barrier_psi(chart: &ConcaveChart, t_star: f64, z: &DVector<f64>) -> Result<f64> {
    chart.penalized(t_star)?.phi(z)
}

#[derive(Debug, Clone)]
pub struct Barrier {
    chart: ConcaveChart,
    solver: ShadowSolver,
    pub t_star: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InclusionReport {
    pub samples: usize,
    pub members: usize,
    /// Members with `z_{n-1} > 0` whose `γ̃` could not be solved.
    pub unresolved: usize,
    pub violations: usize,
    pub max_excess: f64,
}

impl Barrier {
    pub fn new(omega: &ImplicitBody, lambda: &ImplicitBody, point: &ProjectionPoint, t_star: f64) -> Result<Self> {
        let n = lambda.dim();
        let x = point.x_vec();
        let y = point.y_vec();
        let normal = lambda.outward_normal(&y)?;
        let nu = omega.outward_normal(&x)?;
        let e = &nu - &normal * normal.dot(&nu);
        if e.norm() < 1e-6 {
            return Err(Error::Parameter("normal of omega is not tangent to lambda at this point".into()));
        }
        let e = e.normalize();
        let mut tangents = DMatrix::zeros(n, n - 1);
        if n == 3 {
            tangents.set_column(0, &e.cross(&normal));
            tangents.set_column(1, &e);
        } else {
            let mut q = complete_basis(&[e.clone(), normal.clone()], n);
            if q.determinant() < 0.0 {
                let c = -q.column(0);
                q.set_column(0, &c);
            }
            tangents.copy_from(&q.columns(0, n - 1));
        }
        let chart = chart_at_with_tangents(lambda, &y, &tangents)?;
        let psi = chart.penalized(t_star)?;
        let solver = ShadowSolver::new(&psi, &Direction::new(&e)?)?;
        Ok(Barrier { chart, solver, t_star })
    }

    /// Chart of `Λ` (not penalized) in the barrier frame.
    pub fn chart(&self) -> &ConcaveChart {
        &self.chart
    }

    pub fn gamma_tilde(&self, z2: &DVector<f64>) -> Result<f64> {
        Ok(self.solver.gamma(z2)?.gamma)
    }

    pub fn gamma_bar(&self, z2: &DVector<f64>) -> Result<f64> {
        Ok(self.gamma_tilde(z2)?.max(0.0))
    }

    /// Sample boundary points of `Λ` over the chart disc of radius `radius`
    /// and check `z_{n-1} <= γ̄(z'') + 1e-8` for those in the shadow.
    pub fn inclusion_check(
        &self,
        omega: &ImplicitBody,
        lambda: &ImplicitBody,
        samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<InclusionReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.chart.dim_domain();
        let mut rep = InclusionReport { samples, ..Default::default() };
        let mut tries = 0;
        while rep.members < samples && tries < 50 * samples {
            tries += 1;
            let z = random_unit(&mut rng, m) * (radius * rng.gen::<f64>().sqrt());
            let p = self.chart.point_world(&z)?;
            if !in_projection_shadow(omega, lambda, &p)? {
                continue;
            }
            rep.members += 1;
            let zl = z[m - 1];
            if zl <= 0.0 {
                continue;
            }
            let z2 = z.rows(0, m - 1).into_owned();
            match self.gamma_bar(&z2) {
                Ok(g) => {
                    let excess = zl - g;
                    rep.max_excess = rep.max_excess.max(excess);
                    if excess > 1e-8 {
                        rep.violations += 1;
                    }
                }
                Err(_) => rep.unresolved += 1,
            }
        }
        Ok(rep)
    }
}
