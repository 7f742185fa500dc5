//! Gauss-Newton solution of `Φ(x, y, t) = 0` and rank certification of `DΦ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodies::ImplicitBody;
use crate::error::{Error, Result};

pub const SOLVE_MAX_ITER: usize = 50;
pub const TOL_ROOT: f64 = 1e-10;
/// Relative singular value threshold for rank counting.
pub const SIGMA_TOL: f64 = 1e-8;
const TARGET: f64 = 1e-13;

/// Initial guess `(x, y, t)` for the boundary solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t: f64,
}

impl Seed {
    pub fn pack(&self) -> DVector<f64> {
        pack(&self.x, &self.y, self.t)
    }
}

fn pack(x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = x.len();
    let mut z = DVector::zeros(2 * n + 1);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, n).copy_from(y);
    z[2 * n] = t;
    z
}

fn unpack(z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let n = (z.len() - 1) / 2;
    (z.rows(0, n).into_owned(), z.rows(n, n).into_owned(), z[2 * n])
}

/// Solved point of the projection shadow boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    /// Max-norm of `Φ(x, y, t)`.
    pub residual: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub iterations: usize,
}

impl ProjectionPoint {
    pub fn x_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x)
    }
    pub fn y_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.y)
    }
    pub fn packed(&self) -> DVector<f64> {
        pack(&self.x_vec(), &self.y_vec(), self.t)
    }
    pub fn seed(&self) -> Seed {
        Seed { x: self.x_vec(), y: self.y_vec(), t: self.t }
    }
}

/// `Φ(x, y, t) ∈ R^{n+3}` at the packed point `z = (x, y, t)`.
pub fn residual_map(omega: &ImplicitBody, lambda: &ImplicitBody, z: &DVector<f64>) -> DVector<f64> {
    let (x, y, t) = unpack(z);
    let n = x.len();
    let gg = omega.gradient(&x);
    let gf = lambda.gradient(&y);
    let mut r = DVector::zeros(n + 3);
    r[0] = omega.value(&x);
    r[1] = lambda.value(&y);
    r[2] = gg.dot(&gf);
    r.rows_mut(3, n).copy_from(&(&y + &gf * t - &x));
    r
}

/// The `(n+3) x (2n+1)` Jacobian
/// ```text
/// [ ∇G(x)^T          0                 0     ]
/// [ 0                ∇F(y)^T           0     ]
/// [ (D²G(x)∇F(y))^T  (D²F(y)∇G(x))^T   0     ]
/// [ -I               I + t D²F(y)      ∇F(y) ]
/// ```
pub fn jacobian(omega: &ImplicitBody, lambda: &ImplicitBody, z: &DVector<f64>) -> DMatrix<f64> {
    let (x, y, t) = unpack(z);
    let n = x.len();
    let gg = omega.gradient(&x);
    let gf = lambda.gradient(&y);
    let hg = omega.hessian(&x);
    let hf = lambda.hessian(&y);
    let mut j = DMatrix::zeros(n + 3, 2 * n + 1);
    j.view_mut((0, 0), (1, n)).copy_from(&gg.transpose());
    j.view_mut((1, n), (1, n)).copy_from(&gf.transpose());
    j.view_mut((2, 0), (1, n)).copy_from(&(&hg * &gf).transpose());
    j.view_mut((2, n), (1, n)).copy_from(&(&hf * &gg).transpose());
    j.view_mut((3, 0), (n, n)).copy_from(&(-DMatrix::identity(n, n)));
    j.view_mut((3, n), (n, n)).copy_from(&(DMatrix::identity(n, n) + hf * t));
    j.view_mut((3, 2 * n), (n, 1)).copy_from(&gf);
    j
}

fn singular_values(j: &DMatrix<f64>) -> DVector<f64> {
    let mut s = j.clone().svd(false, false).singular_values;
    s.as_mut_slice().sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Least-norm Gauss-Newton on `Φ` from `seed`.
pub fn solve_boundary_point(omega: &ImplicitBody, lambda: &ImplicitBody, seed: &Seed) -> Result<ProjectionPoint> {
    let n = omega.dim();
    if lambda.dim() != n || seed.x.len() != n || seed.y.len() != n {
        return Err(Error::Parameter("dimension mismatch between bodies and seed".into()));
    }
    let mut z = seed.pack();
    let mut r = residual_map(omega, lambda, &z);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::Parameter("seed residual is not finite".into()));
    }
    let mut iterations = 0;
    while r.amax() > TARGET && iterations < SOLVE_MAX_ITER {
        iterations += 1;
        let j = jacobian(omega, lambda, &z);
        let svd = j.svd(true, true);
        let smax = svd.singular_values.max();
        let step =
            svd.solve(&(-&r), 1e-14 * smax).map_err(|_| Error::NoConvergence { iterations, residual: r.amax() })?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let z_new = &z + &step * lam;
            let r_new = residual_map(omega, lambda, &z_new);
            if r_new.norm() < r.norm() {
                z = z_new;
                r = r_new;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = r.amax();
    if !(residual <= TOL_ROOT) {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let (x, y, t) = unpack(&z);
    if !(t > 0.0) {
        return Err(Error::NegativeHittingTime(t));
    }
    let t_check = (&x - &y).norm() / lambda.gradient(&y).norm();
    if (t - t_check).abs() > 1e-8 * (1.0 + t) {
        return Err(Error::NoConvergence { iterations, residual: (t - t_check).abs() });
    }
    let s = singular_values(&jacobian(omega, lambda, &z));
    let (sigma_max, sigma_min) = (s[0], s[s.len() - 1]);
    if sigma_min < SIGMA_TOL * sigma_max {
        log::warn!(
            "Jacobian nearly rank deficient at y = {:?}: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}",
            y.as_slice()
        );
    }
    Ok(ProjectionPoint {
        x: x.iter().copied().collect(),
        y: y.iter().copied().collect(),
        t,
        residual,
        sigma_min,
        sigma_max,
        iterations,
    })
}

/// Singular values of `DΦ` at a solved point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    /// Number of singular values above `SIGMA_TOL * sigma_max`.
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub singular_values: Vec<f64>,
}

impl RankCertificate {
    pub fn full(&self) -> bool {
        self.rank == self.singular_values.len()
    }
}

pub fn certify_rank(omega: &ImplicitBody, lambda: &ImplicitBody, point: &ProjectionPoint) -> RankCertificate {
    let s = singular_values(&jacobian(omega, lambda, &point.packed()));
    let sigma_max = s[0];
    let sigma_min = s[s.len() - 1];
    let rank = s.iter().filter(|&&v| v > SIGMA_TOL * sigma_max).count();
    RankCertificate { rank, sigma_min, sigma_max, singular_values: s.iter().copied().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{instantiate, BallParams, BodySpec, Family, SuperellipsoidParams};

    fn ball(c: [f64; 3], r: f64) -> ImplicitBody {
        instantiate(&BodySpec::new(Family::TranslatedBall(BallParams { center: c.to_vec(), radius: r }))).unwrap()
    }

    #[test]
    fn coaxial_balls_solution_on_tangency_circle() {
        let o = ball([0.0, 0.0, 3.0], 1.0);
        let l = ball([0.0; 3], 1.0);
        let seed =
            Seed { x: DVector::from_vec(vec![0.9, 0.1, 2.7]), y: DVector::from_vec(vec![0.3, 0.05, 0.95]), t: 1.0 };
        let p = solve_boundary_point(&o, &l, &seed).unwrap();
        // Normal rays of the unit sphere pass through the origin; they graze
        // the ball of radius 1 at distance 3 when sin(theta) = 1/3.
        let y = p.y_vec();
        assert!((y.norm() - 1.0).abs() < 1e-12);
        assert!((y[2] - (8.0f64).sqrt() / 3.0).abs() < 1e-8);
        assert!(p.residual <= TOL_ROOT);
        assert_eq!(certify_rank(&o, &l, &p).rank, 6);
        // Re-solving from the solution takes at most one iteration.
        let again = solve_boundary_point(&o, &l, &p.seed()).unwrap();
        assert!(again.iterations <= 1);
        assert!((again.y_vec() - y).norm() < 1e-12);
    }

    #[test]
    fn flat_direction_degeneracy_drops_rank() {
        let o = instantiate(&BodySpec::new(Family::Superellipsoid(SuperellipsoidParams {
            semiaxes: vec![1.0; 3],
            exponents: vec![2, 4, 2],
        })))
        .unwrap();
        let l = ball([0.0, -3.0, 1.0], 1.0);
        let seed =
            Seed { x: DVector::from_vec(vec![0.0, 0.0, 1.0]), y: DVector::from_vec(vec![0.0, -2.0, 1.0]), t: 1.0 };
        let p = solve_boundary_point(&o, &l, &seed).unwrap();
        assert_eq!(p.iterations, 0);
        let cert = certify_rank(&o, &l, &p);
        assert!(cert.rank < 6, "{cert:?}");
    }
}
