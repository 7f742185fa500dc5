//! The sharpness constructions: the Kiselman family (Hölder exponent `2/q`),
//! the oblique cone over a circle (shadow boundary not a graph), and the
//! Cantor contact pair (contact set with `2^d` components).

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bodies::{
    instantiate, BodySpec, CantorField, CantorParams, ConcaveChart, ConeField, Family, FnChart, ImplicitBody,
    KiselmanField,
};
use crate::error::{Error, Result};
use crate::frame::random_rotation;
use crate::illumination::{Direction, ShadowSolver};
use crate::roots;

/// Radius of the Kiselman chart disc, inside the convexity strip `|y| < 1/2`.
pub const KISELMAN_CHART_RADIUS: f64 = 0.49;

fn check_q(q: i64) -> Result<u32> {
    if q < 3 || q % 2 == 0 {
        return Err(Error::Parameter(format!("q must be an odd integer >= 3, got {q}")));
    }
    Ok(q as u32)
}

/// Forward-mode dual number.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    fn powi(self, n: i32) -> Self {
        Dual { v: self.v.powi(n), d: n as f64 * self.v.powi(n - 1) * self.d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

fn kiselman_closed_form(q: i32, x: Dual, y: Dual) -> Dual {
    let c = Dual::constant;
    x * x * (c(4.0) - y + c(0.5) * y * y) + c(1.0 / (q + 1) as f64) * y.powi(q + 1)
        - c(1.0 / (q + 2) as f64) * y.powi(q + 2)
}

/// Largest deviation between `d/dy` of the closed form (differentiated
/// numerically in forward mode) and `(y^q - x^2)(1 - y)` over `grid`.
pub fn kiselman_identity_check(q: i64, grid: &[(f64, f64)]) -> Result<f64> {
    let q = check_q(q)? as i32;
    let mut worst: f64 = 0.0;
    for &(x, y) in grid {
        if !(y.abs() < 0.5) {
            return Err(Error::Parameter(format!("grid point y = {y} is outside the strip |y| < 1/2")));
        }
        let numeric = kiselman_closed_form(q, Dual::constant(x), Dual { v: y, d: 1.0 }).d;
        let identity = (y.powi(q) - x * x) * (1.0 - y);
        worst = worst.max((numeric - identity).abs());
    }
    Ok(worst)
}

/// Regular `size x size` grid on `[-half, half] x [-half, half]`.
pub fn square_grid(size: usize, half: f64) -> Vec<(f64, f64)> {
    let t = |i: usize| if size == 1 { 0.0 } else { -half + 2.0 * half * i as f64 / (size - 1) as f64 };
    (0..size).flat_map(|i| (0..size).map(move |j| (t(i), t(j)))).collect()
}

/// Chart `phi = -k` of the Kiselman body at the origin (outward normal `+e_3`).
pub fn kiselman_chart(q: i64) -> Result<ConcaveChart> {
    let field = KiselmanField { q: check_q(q)?, half_width: 0.5 };
    let (f1, f2, f3) = (field.clone(), field.clone(), field);
    let func = FnChart::new(
        &format!("kiselman(q={q})"),
        2,
        move |z| -f1.k(z[0], z[1]),
        move |z| {
            let (kx, ky) = f2.grad_k(z[0], z[1]);
            DVector::from_vec(vec![-kx, -ky])
        },
    )
    .with_hessian(move |z| {
        let h = f3.hess_k(z[0], z[1]);
        DMatrix::from_row_slice(2, 2, &[-h[0][0], -h[0][1], -h[1][0], -h[1][1]])
    });
    Ok(ConcaveChart::from_function(func, KISELMAN_CHART_RADIUS)?.strictly(true))
}

/// Shadow solver for the Kiselman chart lit along `(0, 1, 0)`; its boundary
/// is `y = |x|^{2/q}`.
pub fn kiselman_shadow_solver(q: i64) -> Result<ShadowSolver> {
    ShadowSolver::new(&kiselman_chart(q)?, &Direction::from_slice(&[0.0, 1.0, 0.0])?)
}

/// Largest `|y(x) - |x|^{2/q}|` where `y(x)` is the numerically extracted zero
/// of `d phi / dy` over each `x` in `xs`.
pub fn kiselman_level_set_error(q: i64, xs: &[f64]) -> Result<f64> {
    let solver = kiselman_shadow_solver(q)?;
    let mut worst: f64 = 0.0;
    for &x in xs {
        let s = solver.gamma(&DVector::from_vec(vec![x]))?;
        worst = worst.max((s.gamma - x.abs().powf(2.0 / q as f64)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityWitness {
    pub y: Vec<f64>,
    /// `-λ_max(D²φ)` at `y`.
    pub modulus: f64,
}

/// Chart points `(0, 2^-k)` where `-λ_max(D²φ) < theta`.
pub fn uniform_concavity_witnesses(chart: &ConcaveChart, theta: f64, ks: &[i32]) -> Result<Vec<ConcavityWitness>> {
    let mut out = Vec::new();
    for &k in ks {
        let mut z = DVector::zeros(chart.dim_domain());
        let m = z.len();
        z[m - 1] = 2f64.powi(-k);
        let Some(h) = chart.hess_phi(&z)? else {
            return Err(Error::Parameter("chart has no Hessian oracle".into()));
        };
        let modulus = -SymmetricEigen::new(0.5 * (&h + h.transpose())).eigenvalues.max();
        if modulus < theta {
            out.push(ConcavityWitness { y: z.iter().copied().collect(), modulus });
        }
    }
    Ok(out)
}

/// Oblique cone: lateral points `(1 - s) c(a) + s A`, with `c(a)` on the base
/// circle and `A` the apex.
fn cone_point(a: f64, s: f64) -> DVector<f64> {
    DVector::from_vec(vec![(1.0 - s) * (1.0 - a.cos()), s, (1.0 - s) * a.sin()])
}

/// Outward normal of the lateral generator through `c(a)` (constant along it).
fn lateral_normal(a: f64) -> DVector<f64> {
    DVector::from_vec(vec![-a.cos(), 1.0 - a.cos(), a.sin()])
}

/// A rim point is on the shadow boundary iff its normal cone, spanned by the
/// base and lateral normals, contains a vector orthogonal to `u`.
fn straddles(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || a.signum() != b.signum()
}

/// Shadow boundary of the cone for light along `u`, sampled from the exact
/// normal-cone description of each stratum (generators, rim, apex).
pub fn cone_shadow_boundary(u: &DVector<f64>, n_samples: usize) -> Vec<DVector<f64>> {
    let tau = 2.0 * std::f64::consts::PI;
    let base = ConeField::base_gradient().dot(u);
    let h = |a: f64| lateral_normal(a).dot(u);
    let mut out = Vec::new();
    // Generators whose lateral normal is orthogonal to u.
    let grid = 1usize << 10;
    let mut roots_a = Vec::new();
    for k in 0..grid {
        let (a0, a1) = (tau * k as f64 / grid as f64, tau * (k + 1) as f64 / grid as f64);
        let (h0, h1) = (h(a0), h(a1));
        if h0 == 0.0 {
            roots_a.push(a0);
        } else if h0.signum() != h1.signum() && h1 != 0.0 {
            if let Ok((r, _)) = roots::bisect(|a| Ok(h(a)), a0, a1, 200) {
                roots_a.push(r);
            }
        }
    }
    let per_generator = n_samples.max(2);
    for &a in &roots_a {
        for j in 1..per_generator {
            out.push(cone_point(a, j as f64 / per_generator as f64));
        }
    }
    for k in 0..n_samples.max(4) {
        let a = tau * k as f64 / n_samples.max(4) as f64;
        if straddles(base, h(a)) {
            out.push(cone_point(a, 0.0));
        }
    }
    // The apex normal cone is spanned by all lateral normals.
    let apex = !roots_a.is_empty();
    if apex {
        out.push(DVector::from_row_slice(&ConeField::APEX));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessPair {
    pub frame: usize,
    pub axis: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeWitness {
    pub u: Vec<f64>,
    /// Segment point `(0, 1/2, 0)` and the circle point with the same first
    /// coordinate, when both lie on the shadow boundary.
    pub canonical: Option<(Vec<f64>, Vec<f64>)>,
    pub boundary_samples: usize,
    pub frames_checked: usize,
    /// Frames in which every coordinate axis sees two boundary points with the
    /// same coordinate.
    pub frames_witnessed: usize,
    pub pairs: Vec<WitnessPair>,
}

impl ConeWitness {
    pub fn found(&self) -> bool {
        self.frames_checked > 0 && self.frames_witnessed == self.frames_checked
    }
}

const WITNESS_RADIUS: f64 = 0.25;
const WITNESS_TOL: f64 = 1e-3;
pub const RANDOM_FRAMES: usize = 24;

/// Pair of points whose coordinates along `e` agree within `WITNESS_TOL` while
/// the points are at least `4 * WITNESS_TOL` apart.
fn axis_pair(points: &[DVector<f64>], e: &DVector<f64>) -> Option<(usize, usize)> {
    let mut idx: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.dot(e), i)).collect();
    idx.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            if idx[j].0 - idx[i].0 > WITNESS_TOL {
                break;
            }
            if (&points[idx[i].1] - &points[idx[j].1]).norm() >= 4.0 * WITNESS_TOL {
                return Some((idx[i].1, idx[j].1));
            }
        }
    }
    None
}

fn on_cone_shadow_boundary_segment(u: &DVector<f64>) -> bool {
    lateral_normal(0.0).dot(u) == 0.0
}

/// Search near the origin for non-graph witnesses in the axis frame and
/// `RANDOM_FRAMES` random rotations of it.
pub fn cone_graph_witness(u: &[f64], n_samples: usize, seed: u64) -> Result<ConeWitness> {
    let u = Direction::from_slice(u)?;
    if u.dim() != 3 {
        return Err(Error::Parameter("the cone lives in R^3".into()));
    }
    let uv = u.vector();
    let all = cone_shadow_boundary(&uv, n_samples);
    let near: Vec<DVector<f64>> = all.iter().filter(|p| p.norm() <= WITNESS_RADIUS).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = vec![DMatrix::identity(3, 3)];
    frames.extend((0..RANDOM_FRAMES).map(|_| random_rotation(&mut rng, 3)));
    let mut pairs = Vec::new();
    let mut witnessed = 0;
    for (f, frame) in frames.iter().enumerate() {
        let mut found = Vec::new();
        for axis in 0..3 {
            match axis_pair(&near, &frame.column(axis).into_owned()) {
                Some((i, j)) => found.push(WitnessPair {
                    frame: f,
                    axis,
                    p: near[i].iter().copied().collect(),
                    q: near[j].iter().copied().collect(),
                }),
                None => break,
            }
        }
        if found.len() == 3 {
            witnessed += 1;
            pairs.extend(found);
        }
    }
    let base = ConeField::base_gradient().dot(&uv);
    let canonical = (on_cone_shadow_boundary_segment(&uv) && straddles(base, lateral_normal(0.0).dot(&uv)))
        .then(|| (vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 0.0]));
    Ok(ConeWitness {
        u: uv.iter().copied().collect(),
        canonical,
        boundary_samples: near.len(),
        frames_checked: frames.len(),
        frames_witnessed: witnessed,
        pairs,
    })
}

/// Witness for light along `(0, 1, 0)`.
pub fn cone_body_graph_failure(n_samples: usize) -> Result<ConeWitness> {
    cone_graph_witness(&[0.0, 1.0, 0.0], n_samples, 0)
}

#[derive(Debug, Clone)]
pub struct CantorPair {
    pub omega: ImplicitBody,
    pub lambda: ImplicitBody,
    pub contact_count: usize,
    /// `eps = 0`: the boundaries agree on all of `[1, 2]`.
    pub degenerate: bool,
}

/// Components of `[1, 2]` left after removing the open bump supports.
pub fn cantor_contact_components(field: &CantorField) -> usize {
    if field.eps == 0.0 {
        return 1;
    }
    let mut gaps: Vec<(f64, f64)> =
        field.bumps.iter().map(|b| (b.center - b.half_width, b.center + b.half_width)).collect();
    gaps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut count = 0;
    let mut cursor = 1.0;
    for (lo, hi) in gaps {
        if lo > cursor {
            count += 1;
        }
        cursor = f64::max(cursor, hi);
    }
    if cursor <= 2.0 {
        count += 1;
    }
    count
}

/// `Ω` is the capped epigraph of `x^2 + eps g(x)`, `Λ` that of `x^2`; their
/// boundaries share the graph of `x^2` over the depth-`d` Cantor intervals.
pub fn cantor_contact_pair(eps: f64, depth: u32) -> Result<CantorPair> {
    let omega = instantiate(&BodySpec::new(Family::CantorContact(CantorParams { eps, depth })))?;
    let lambda = instantiate(&BodySpec::new(Family::CantorContact(CantorParams { eps: 0.0, depth })))?;
    let contact_count = cantor_contact_components(&CantorField::new(eps, depth));
    Ok(CantorPair { omega, lambda, contact_count, degenerate: eps == 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_holds_and_origin_is_root() {
        assert!(kiselman_identity_check(3, &square_grid(32, 0.45)).unwrap() <= 1e-12);
        assert_eq!(kiselman_identity_check(3, &[(0.0, 0.0)]).unwrap(), 0.0);
        assert!(matches!(kiselman_identity_check(4, &[(0.0, 0.0)]), Err(Error::Parameter(_))));
        assert!(kiselman_identity_check(3, &[(0.0, 0.6)]).is_err());
    }

    #[test]
    fn level_set_is_power_curve() {
        // For q = 7 the curve leaves the strip before |x| = 0.1.
        for (q, xmax) in [(3, 0.1), (5, 0.1), (7, 0.05)] {
            let xs: Vec<f64> = (-20..=20).map(|i| i as f64 * xmax / 20.0).collect();
            assert!(kiselman_level_set_error(q, &xs).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn no_uniform_concavity_at_origin() {
        let chart = kiselman_chart(3).unwrap();
        let ks: Vec<i32> = (2..=20).collect();
        for theta in [1.0, 1e-2, 1e-6] {
            assert!(!uniform_concavity_witnesses(&chart, theta, &ks).unwrap().is_empty());
        }
    }

    #[test]
    fn cone_seam_witness() {
        let w = cone_body_graph_failure(4000).unwrap();
        assert!(w.found(), "{} of {}", w.frames_witnessed, w.frames_checked);
        let (p, q) = w.canonical.clone().unwrap();
        assert_eq!(p, vec![0.0, 0.5, 0.0]);
        assert_eq!(p[0], q[0]);
        let flipped = cone_graph_witness(&[0.0, -1.0, 0.0], 4000, 0).unwrap();
        assert!(flipped.canonical.is_some());
    }

    #[test]
    fn generic_light_gives_graph() {
        let w = cone_graph_witness(&[1.0, -0.5, 0.3], 4000, 0).unwrap();
        assert!(w.boundary_samples > 0);
        assert!(!w.found());
        assert!(w.canonical.is_none());
    }

    #[test]
    fn cantor_counts() {
        for d in 0..=5 {
            assert_eq!(cantor_contact_pair(1e-3, d).unwrap().contact_count, 1 << d);
        }
        let deg = cantor_contact_pair(0.0, 3).unwrap();
        assert!(deg.degenerate);
        assert!(cantor_contact_pair(50.0, 3).is_err());
    }
}
