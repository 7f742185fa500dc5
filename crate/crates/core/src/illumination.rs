//! Parallel illumination: shadow membership on a chart and the shadow
//! boundary graph `gamma`.
//!
//! For a chart aligned so that the tangential part of the light direction is
//! the last chart axis, a point over `(y'', t)` is in the shadow iff
//! `d phi / d y_{n-1}(y'', t) < c` with `c = u_n / |u'|`. For strictly concave
//! `phi` the left side decreases in `t`, and `gamma(y'')` is its unique
//! crossing of `c`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodies::{ConcaveChart, ImplicitBody};
use crate::error::{Error, Result};
use crate::frame::{complement_vector, complete_basis, Frame};
use crate::roots;

const BRACKET_EXPANSIONS: i32 = 20;
const BISECT_MAX_ITER: usize = 200;
const NEWTON_POLISH: usize = 3;

/// Unit light direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    u: Vec<f64>,
}

impl Direction {
    /// Normalize `v`; zero or non-finite vectors are rejected.
    pub fn new(v: &DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Parameter(format!("direction {:?} cannot be normalized", v.as_slice())));
        }
        Ok(Direction { u: (v / norm).iter().copied().collect() })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(&DVector::from_row_slice(v))
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.u)
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }
}

/// Outward unit normal `(-w, 1) / sqrt(|w|^2 + 1)` belonging to the
/// superdifferential element `w`.
pub fn normal_from_superdifferential(w: &DVector<f64>) -> DVector<f64> {
    let m = w.len();
    let mut nu = DVector::zeros(m + 1);
    nu.rows_mut(0, m).copy_from(&(-w));
    nu[m] = 1.0;
    nu / (w.norm_squared() + 1.0).sqrt()
}

/// Whether the boundary point over `y` (chart coordinates) is in the shadow
/// of light travelling along the world direction `u`.
pub fn is_in_shadow(chart: &ConcaveChart, u: &Direction, y: &DVector<f64>) -> Result<bool> {
    let ul = chart.direction_to_chart(&u.vector());
    let m = chart.dim_domain();
    let w = chart.grad_phi(y)?;
    Ok(w.dot(&ul.rows(0, m)) < ul[m])
}

/// One solved point of the shadow boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowSample {
    pub y: Vec<f64>,
    pub gamma: f64,
    pub residual: f64,
}

/// Shadow boundary solver on a chart rotated so that `u'` is the last axis.
#[derive(Debug, Clone)]
pub struct ShadowSolver {
    chart: ConcaveChart,
    direction: Direction,
    threshold: f64,
    tol_root: f64,
}

impl ShadowSolver {
    pub fn new(chart: &ConcaveChart, u: &Direction) -> Result<Self> {
        let m = chart.dim_domain();
        if u.dim() != m + 1 {
            return Err(Error::Parameter(format!("direction has dimension {}, chart needs {}", u.dim(), m + 1)));
        }
        if m < 1 {
            return Err(Error::Parameter("shadow boundaries need n >= 2".into()));
        }
        let ul = chart.direction_to_chart(&u.vector());
        let tangential = ul.rows(0, m).into_owned();
        let tn = tangential.norm();
        if tn <= 1e-12 {
            return Err(Error::Parameter(
                "light direction is normal to the chart; the shadow boundary does not pass through it".into(),
            ));
        }
        let q = alignment(&(tangential / tn));
        let aligned = chart.rotate_tangent(&q)?;
        let threshold = ul[m] / tn;
        Ok(ShadowSolver { chart: aligned, direction: u.clone(), threshold, tol_root: 1e-10 * (1.0 + threshold.abs()) })
    }

    /// The aligned chart; `y''` coordinates refer to its first `n-2` axes.
    pub fn chart(&self) -> &ConcaveChart {
        &self.chart
    }

    pub fn direction(&self) -> &Direction {
        &self.direction
    }

    /// `u_n / |u'|` in chart coordinates.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn tol_root(&self) -> f64 {
        self.tol_root
    }

    fn point(&self, y2: &DVector<f64>, t: f64) -> DVector<f64> {
        let m = self.chart.dim_domain();
        let mut z = DVector::zeros(m);
        z.rows_mut(0, m - 1).copy_from(y2);
        z[m - 1] = t;
        z
    }

    /// `d phi / d y_{n-1}(y'', t)`.
    pub fn slope(&self, y2: &DVector<f64>, t: f64) -> Result<f64> {
        let m = self.chart.dim_domain();
        Ok(self.chart.grad_phi(&self.point(y2, t))?[m - 1])
    }

    /// Shadow membership over `(y'', t)` in aligned coordinates.
    pub fn in_shadow(&self, y2: &DVector<f64>, t: f64) -> Result<bool> {
        Ok(self.slope(y2, t)? < self.threshold)
    }

    /// Largest `|t|` keeping `(y'', t)` in the chart domain.
    pub fn t_max(&self, y2: &DVector<f64>) -> Result<f64> {
        let r = self.chart.domain_radius();
        let s = r * r - y2.norm_squared();
        if !(s > 0.0) {
            return Err(Error::Domain(format!("|y''| = {} is not inside the chart radius {r}", y2.norm())));
        }
        Ok(s.sqrt() * (1.0 - 1e-12))
    }

    /// Solve `d phi / d y_{n-1}(y'', gamma) = c`.
    pub fn gamma(&self, y2: &DVector<f64>) -> Result<ShadowSample> {
        let m = self.chart.dim_domain();
        if y2.len() != m - 1 {
            return Err(Error::Parameter(format!("y'' needs {} coordinates, got {}", m - 1, y2.len())));
        }
        let c = self.threshold;
        let t_max = self.t_max(y2)?;
        let f = |t: f64| -> Result<f64> { Ok(self.slope(y2, t)? - c) };
        let f0 = f(0.0)?;
        let sample = |t: f64, r: f64| ShadowSample { y: y2.iter().copied().collect(), gamma: t, residual: r };
        if f0 == 0.0 {
            return Ok(sample(0.0, 0.0));
        }
        // f decreases in t: a positive value means the crossing is above.
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let not_found = |cap_hit| Error::BoundaryNotInChart { y: y2.iter().copied().collect(), cap_hit };
        let mono_tol = |v: f64| 1e-10 * (1.0 + v.abs());
        let (mut prev_t, mut prev_f) = (0.0, f0);
        let mut bracket = None;
        for k in 0..BRACKET_EXPANSIONS {
            let t = dir * t_max * 2f64.powi(k - (BRACKET_EXPANSIONS - 1));
            let ft = match f(t) {
                Ok(v) => v,
                Err(Error::Chart(_)) | Err(Error::Domain(_)) => return Err(not_found(false)),
                Err(e) => return Err(e),
            };
            if dir * (ft - prev_f) > mono_tol(prev_f) {
                return Err(Error::NotStrictlyConvex(format!(
                    "d phi/d y_(n-1) increases from {prev_f:e} to {ft:e} between t = {prev_t} and {t} at y'' = {:?}",
                    y2.as_slice()
                )));
            }
            if ft.signum() != f0.signum() || ft == 0.0 {
                bracket = Some((prev_t, t));
                break;
            }
            prev_t = t;
            prev_f = ft;
        }
        let Some((a, b)) = bracket else {
            return Err(not_found(true));
        };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (mut t, mut r) = roots::bisect(f, lo, hi, BISECT_MAX_ITER)?;
        if self.chart.has_hessian() {
            for _ in 0..NEWTON_POLISH {
                if r == 0.0 {
                    break;
                }
                let Some(h) = self.chart.hess_phi(&self.point(y2, t))? else { break };
                let d = h[(m - 1, m - 1)];
                if !(d < 0.0) {
                    break;
                }
                let next = t - r / d;
                if !(next >= lo && next <= hi) {
                    break;
                }
                let rn = f(next)?;
                if rn.abs() >= r.abs() {
                    break;
                }
                t = next;
                r = rn;
            }
        }
        if r.abs() > self.tol_root {
            return Err(Error::RootNotResolved { residual: r.abs(), tol: self.tol_root });
        }
        Ok(sample(t, r))
    }

    /// World point of the shadow boundary over `y''`.
    pub fn world_point(&self, s: &ShadowSample) -> Result<DVector<f64>> {
        self.chart.point_world(&self.point(&DVector::from_row_slice(&s.y), s.gamma))
    }

    /// Solve on every grid point; failures are logged and skipped.
    pub fn sweep(&self, grid: &[DVector<f64>]) -> Result<ShadowCurve> {
        let mut samples = Vec::with_capacity(grid.len());
        let mut failures = Vec::new();
        for y2 in grid {
            match self.gamma(y2) {
                Ok(s) => samples.push(s),
                Err(e) => {
                    log::info!("shadow boundary not solved at y'' = {:?}: {e}", y2.as_slice());
                    failures.push(GridFailure { y: y2.iter().copied().collect(), reason: e.to_string() });
                }
            }
        }
        if samples.is_empty() {
            return Err(Error::EmptyCurve { failed: failures.len() });
        }
        Ok(ShadowCurve {
            dim_y: self.chart.dim_domain() - 1,
            chart_frame: Some(self.chart.frame().clone()),
            direction: Some(self.direction.clone()),
            samples,
            failures,
        })
    }
}

/// Orthogonal `m x m` matrix with determinant one whose last column is `a`.
fn alignment(a: &DVector<f64>) -> DMatrix<f64> {
    let m = a.len();
    if m == 1 {
        return DMatrix::from_element(1, 1, a[0].signum());
    }
    if m == 2 {
        return DMatrix::from_row_slice(2, 2, &[a[1], a[0], -a[0], a[1]]);
    }
    let mut q = complete_basis(std::slice::from_ref(a), m);
    if q.determinant() < 0.0 {
        let c = -q.column(0);
        q.set_column(0, &c);
    }
    q
}

/// `gamma(y'')` on a chart for world direction `u`, in aligned coordinates.
pub fn shadow_boundary_gamma(chart: &ConcaveChart, u: &Direction, y2: &DVector<f64>) -> Result<(f64, f64)> {
    let s = ShadowSolver::new(chart, u)?.gamma(y2)?;
    Ok((s.gamma, s.residual))
}

pub fn shadow_boundary_sweep(chart: &ConcaveChart, u: &Direction, grid: &[DVector<f64>]) -> Result<ShadowCurve> {
    ShadowSolver::new(chart, u)?.sweep(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub y: Vec<f64>,
    pub reason: String,
}

/// Sampled shadow boundary `y'' -> gamma(y'')`.
#[derive(Debug, Clone)]
pub struct ShadowCurve {
    pub dim_y: usize,
    /// Frame of the aligned chart (absent for curves read back from CSV).
    pub chart_frame: Option<Frame>,
    pub direction: Option<Direction>,
    pub samples: Vec<ShadowSample>,
    pub failures: Vec<GridFailure>,
}

impl ShadowCurve {
    pub fn header(dim_y: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=dim_y).map(|i| format!("y{i}")).collect();
        h.push("gamma".into());
        h.push("residual".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(self.dim_y))?;
        for s in &self.samples {
            let mut row: Vec<String> = s.y.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", s.gamma));
            row.push(format!("{:e}", s.residual));
            wr.write_record(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read a curve written by [`ShadowCurve::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header.len() < 3 {
            return Err(Error::Schema(format!("shadow curve needs y columns, gamma, residual; got {header:?}")));
        }
        let dim_y = header.len() - 2;
        if header != Self::header(dim_y) {
            return Err(Error::Schema(format!("unexpected shadow curve header {header:?}")));
        }
        let mut samples = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Schema(format!("bad number {s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != dim_y + 2 {
                return Err(Error::Schema(format!("row has {} fields, expected {}", vals.len(), dim_y + 2)));
            }
            samples.push(ShadowSample { y: vals[..dim_y].to_vec(), gamma: vals[dim_y], residual: vals[dim_y + 1] });
        }
        if samples.is_empty() {
            return Err(Error::Schema("shadow curve has no rows".into()));
        }
        Ok(ShadowCurve { dim_y, chart_frame: None, direction: None, samples, failures: Vec::new() })
    }
}

/// A point of `body`'s boundary where `<grad G, u> = 0`, found by bisection
/// along the boundary path over the half great circle from `u` through
/// `w` (default: a fixed perpendicular) to `-u`.
pub fn find_shadow_boundary_point(
    body: &ImplicitBody,
    u: &Direction,
    w: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let uv = u.vector();
    if uv.len() != body.dim() {
        return Err(Error::Parameter("direction and body dimensions differ".into()));
    }
    let perp = match w {
        Some(w) => {
            let p = w - &uv * uv.dot(w);
            if p.norm() < 1e-12 {
                return Err(Error::Parameter("path direction is parallel to u".into()));
            }
            p.normalize()
        }
        None => complement_vector(&uv),
    };
    let point = |theta: f64| body.radial_boundary_point(&(&uv * theta.cos() + &perp * theta.sin()));
    let h = |theta: f64| -> Result<f64> { Ok(body.gradient(&point(theta)?).dot(&uv)) };
    let (theta, _) = roots::bisect(h, 0.0, std::f64::consts::PI, BISECT_MAX_ITER)?;
    point(theta)
}

/// Chart-coordinate grid of `count` points evenly spread on `[-a, a]^{n-2}`
/// along the first axis (n = 3) or the diagonal.
pub fn uniform_grid(dim_y: usize, half_width: f64, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let s = if count == 1 { 0.0 } else { -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64 };
            DVector::from_element(dim_y, s / (dim_y as f64).sqrt())
        })
        .collect()
}

/// The center and points at `±2^-k` along the first axis, `k` in `k_range`.
pub fn dyadic_grid(dim_y: usize, k_range: std::ops::RangeInclusive<i32>) -> Vec<DVector<f64>> {
    let mut grid = vec![DVector::zeros(dim_y)];
    for k in k_range {
        for s in [1.0, -1.0] {
            let mut y = DVector::zeros(dim_y);
            y[0] = s * 2f64.powi(-k);
            grid.push(y);
        }
    }
    grid
}
