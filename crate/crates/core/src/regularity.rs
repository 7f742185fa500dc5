//! Regularity diagnostics for sampled boundaries: Hölder exponent fits, cusp
//! certificates, and box-counting dimension.
//!
//! Box dimension is only a proxy. A set of box dimension `n-2` need not be
//! `(n-2)`-rectifiable, and these checks do not claim it is.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bodies::ConcaveChart;
use crate::error::{Error, Result};
use crate::frame::random_unit;
use crate::illumination::ShadowCurve;

/// Exponents above this are reported as this value (flagged super-Lipschitz).
pub const ALPHA_CAP: f64 = 1.5;

#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    /// Fitted exponent, capped at `ALPHA_CAP`.
    pub alpha_hat: f64,
    /// Uncapped least-squares slope.
    pub slope: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub r_squared: f64,
    pub scale_window: (f64, f64),
    pub n_points: usize,
    /// Slope above one: the curve behaves better than Lipschitz at this center.
    pub super_lipschitz: bool,
}

/// Least-squares line `y = a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    (a, b, r2)
}

fn center_value(curve: &ShadowCurve, center: &[f64]) -> Result<f64> {
    if center.len() != curve.dim_y {
        return Err(Error::Parameter(format!("center needs {} coordinates", curve.dim_y)));
    }
    curve
        .samples
        .iter()
        .find(|s| s.y.iter().zip(center).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs())))
        .map(|s| s.gamma)
        .ok_or_else(|| Error::Parameter(format!("curve has no sample at the center {center:?}")))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fit `log|γ(y'') - γ(c)|` against `log|y'' - c|`. Needs at least eight
/// usable samples spanning three dyadic scales; zero increments are skipped.
pub fn holder_fit(curve: &ShadowCurve, center: &[f64]) -> Result<HolderFit> {
    let g0 = center_value(curve, center)?;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut any_nonzero_dist = false;
    for s in &curve.samples {
        let d = distance(&s.y, center);
        if d == 0.0 {
            continue;
        }
        any_nonzero_dist = true;
        let dg = (s.gamma - g0).abs();
        if dg == 0.0 {
            continue;
        }
        lx.push(d.ln());
        ly.push(dg.ln());
    }
    if any_nonzero_dist && lx.is_empty() {
        return Err(Error::FlatCurve);
    }
    let mut distinct = lx.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let span = distinct.last().zip(distinct.first()).map_or(0.0, |(hi, lo)| (hi - lo) / std::f64::consts::LN_2);
    if lx.len() < 8 || span < 3.0 - 1e-9 {
        return Err(Error::Parameter(format!(
            "holder fit needs >= 8 samples spanning >= 3 dyadic scales (got {} samples over {span:.2} octaves)",
            lx.len()
        )));
    }
    let (a, b, r2) = linear_fit(&lx, &ly);
    Ok(HolderFit {
        alpha_hat: b.min(ALPHA_CAP),
        slope: b,
        c_hat: a.exp(),
        r_squared: r2,
        scale_window: (distinct[0].exp(), distinct[distinct.len() - 1].exp()),
        n_points: lx.len(),
        super_lipschitz: b > 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeCertificate {
    /// `(y''_0, γ(y''_0))` in aligned chart coordinates.
    pub apex: Vec<f64>,
    /// Opening direction, the last chart axis.
    pub axis: Vec<f64>,
    pub opening_slope: f64,
    pub alpha: f64,
    pub violations: usize,
    pub samples: usize,
    pub max_excess: f64,
}

impl ConeCertificate {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Count samples with `γ(y'') - γ(c) > (L/θ) |y'' - c|^α + 1e-9`.
pub fn cusp_check(curve: &ShadowCurve, center: &[f64], l: f64, theta: f64, alpha: f64) -> Result<ConeCertificate> {
    if !(l > 0.0 && l.is_finite()) || !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Parameter(format!("cusp check needs positive L and theta, got L = {l}, theta = {theta}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("cusp exponent must lie in (0, 1], got {alpha}")));
    }
    let g0 = center_value(curve, center)?;
    let slope = l / theta;
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for s in &curve.samples {
        let excess = (s.gamma - g0) - slope * distance(&s.y, center).powf(alpha);
        max_excess = max_excess.max(excess);
        if excess > 1e-9 {
            violations += 1;
        }
    }
    let mut apex = center.to_vec();
    apex.push(g0);
    let mut axis = vec![0.0; center.len()];
    axis.push(1.0);
    Ok(ConeCertificate {
        apex,
        axis,
        opening_slope: slope,
        alpha,
        violations,
        samples: curve.samples.len(),
        max_excess,
    })
}

/// [`cusp_check`] with `(L, θ, α)` read from the chart metadata.
pub fn cusp_check_with_chart(curve: &ShadowCurve, center: &[f64], chart: &ConcaveChart) -> Result<ConeCertificate> {
    match (chart.holder_l, chart.concavity_theta, chart.holder_alpha) {
        (Some(l), Some(theta), Some(alpha)) => cusp_check(curve, center, l, theta, alpha),
        _ => Err(Error::Parameter("chart has no (L, theta, alpha) metadata".into())),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChartConstants {
    /// Largest `|eigenvalue|` of `D²φ` (gradient Lipschitz constant).
    pub l: f64,
    /// Smallest `-λ_max(D²φ)` (uniform concavity modulus; may be <= 0).
    pub theta: f64,
    pub alpha: f64,
    pub samples: usize,
}

/// Sample `D²φ` at `samples` points of the chart disc.
pub fn estimate_chart_constants(chart: &ConcaveChart, samples: usize, seed: u64) -> Result<ChartConstants> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = chart.dim_domain();
    let r = chart.domain_radius();
    let mut l: f64 = 0.0;
    let mut theta = f64::INFINITY;
    for i in 0..samples {
        let z = if i == 0 {
            DVector::zeros(m)
        } else {
            random_unit(&mut rng, m) * (r * rng.gen::<f64>().powf(1.0 / m as f64))
        };
        let Some(h) = chart.hess_phi(&z)? else {
            return Err(Error::Parameter("chart has no Hessian oracle".into()));
        };
        let h: DMatrix<f64> = 0.5 * (&h + h.transpose());
        let eig = SymmetricEigen::new(h).eigenvalues;
        l = l.max(eig.amax());
        theta = theta.min(-eig.max());
    }
    Ok(ChartConstants { l, theta, alpha: 1.0, samples })
}

/// Chart with `(L, θ, 1)` estimated from its Hessian, if `θ > 0`.
pub fn chart_with_constants(chart: &ConcaveChart, samples: usize, seed: u64) -> Result<(ConcaveChart, ChartConstants)> {
    let c = estimate_chart_constants(chart, samples, seed)?;
    let theta = (c.theta > 0.0).then_some(c.theta);
    Ok((chart.clone().with_constants(Some(c.l), theta, Some(1.0)), c))
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionEstimate {
    pub d_hat: f64,
    pub scales: Vec<f64>,
    /// Occupied boxes per scale, averaged over grid offsets.
    pub counts: Vec<f64>,
    pub fit_r_squared: f64,
}

impl DimensionEstimate {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["scale", "count"])?;
        for (s, c) in self.scales.iter().zip(&self.counts) {
            wr.write_record([format!("{s:e}"), format!("{c:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

const BOX_OFFSETS: usize = 4;

/// Box-counting dimension: `-slope` of `log N(ε)` against `log ε`, with
/// `N(ε)` averaged over four random grid offsets.
pub fn box_dimension(points: &[DVector<f64>], scales: &[f64], seed: u64) -> Result<DimensionEstimate> {
    if points.len() < 100 {
        return Err(Error::Parameter(format!("box dimension needs >= 100 points, got {}", points.len())));
    }
    let n = points[0].len();
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::Parameter("points have mixed dimensions".into()));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scales.dedup();
    if scales.len() < 4
        || scales.iter().any(|s| !(*s > 0.0))
        || scales[scales.len() - 1] < 10.0 * scales[0] * (1.0 - 1e-12)
    {
        return Err(Error::Parameter("box dimension needs >= 4 positive scales spanning a decade".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<Vec<f64>> = (0..BOX_OFFSETS).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
    let counts: Vec<f64> = scales
        .iter()
        .map(|&eps| {
            let total: usize = offsets
                .iter()
                .map(|off| {
                    let boxes: HashSet<Vec<i64>> = points
                        .iter()
                        .map(|p| p.iter().zip(off).map(|(v, o)| (v / eps + o).floor() as i64).collect())
                        .collect();
                    boxes.len()
                })
                .sum();
            total as f64 / BOX_OFFSETS as f64
        })
        .collect();
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let (_, slope, r2) = linear_fit(&lx, &ly);
    Ok(DimensionEstimate { d_hat: (-slope).clamp(0.0, n as f64), scales, counts, fit_r_squared: r2 })
}

/// Geometric scales from `diam / 4` down by `ratio`, `count` of them.
pub fn geometric_scales(points: &[DVector<f64>], count: usize, ratio: f64) -> Vec<f64> {
    let n = points.first().map_or(0, |p| p.len());
    let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
    for p in points {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let top = diam / 4.0;
    (0..count).map(|k| top * ratio.powi(-(k as i32))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::illumination::ShadowSample;

    fn curve(points: &[(f64, f64)]) -> ShadowCurve {
        ShadowCurve {
            dim_y: 1,
            chart_frame: None,
            direction: None,
            samples: points.iter().map(|&(y, g)| ShadowSample { y: vec![y], gamma: g, residual: 0.0 }).collect(),
            failures: Vec::new(),
        }
    }

    fn power_curve(c: f64, beta: f64) -> ShadowCurve {
        let mut pts = vec![(0.0, 0.0)];
        for k in 4..=12 {
            let y = 2f64.powi(-k);
            pts.push((y, c * y.powf(beta)));
            pts.push((-y, c * y.powf(beta)));
        }
        curve(&pts)
    }

    #[test]
    fn exact_power_laws() {
        for beta in [0.25, 0.5, 1.0] {
            let fit = holder_fit(&power_curve(1.7, beta), &[0.0]).unwrap();
            assert!((fit.alpha_hat - beta).abs() < 1e-9, "{fit:?}");
            assert!((fit.r_squared - 1.0).abs() < 1e-12);
            assert!((fit.c_hat - 1.7).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_and_sparse_curves() {
        let flat = curve(&(0..10).map(|i| (i as f64 * 0.1, 0.5)).collect::<Vec<_>>());
        assert!(matches!(holder_fit(&flat, &[0.0]), Err(Error::FlatCurve)));
        let few = curve(&[(0.0, 0.0), (0.1, 0.1), (0.2, 0.3)]);
        assert!(matches!(holder_fit(&few, &[0.0]), Err(Error::Parameter(_))));
        assert!(matches!(holder_fit(&power_curve(1.0, 0.5), &[0.3]), Err(Error::Parameter(_))));
    }

    #[test]
    fn constructed_cusp_violation() {
        let (l, theta, alpha) = (2.0, 1.0, 0.5);
        let pts: Vec<(f64, f64)> =
            (1..=64).map(|i| i as f64 / 64.0).map(|y| (y, 2.0 * (l / theta) * y.powf(alpha))).collect();
        let mut pts = pts;
        pts.push((0.0, 0.0));
        let cert = cusp_check(&curve(&pts), &[0.0], l, theta, alpha).unwrap();
        assert_eq!(cert.violations, 64);
        assert!(matches!(cusp_check(&curve(&pts), &[0.0], l, 0.0, alpha), Err(Error::Parameter(_))));
    }

    #[test]
    fn repeated_point_has_dimension_zero() {
        let pts = vec![DVector::from_vec(vec![0.3, 0.1, -0.2]); 150];
        let est = box_dimension(&pts, &[0.01, 0.03, 0.1, 0.3], 0).unwrap();
        assert_eq!(est.d_hat, 0.0);
    }

    #[test]
    fn segment_has_dimension_one() {
        let pts: Vec<DVector<f64>> =
            (0..5000).map(|i| DVector::from_vec(vec![i as f64 / 5000.0, 0.5 * i as f64 / 5000.0, 0.0])).collect();
        let est = box_dimension(&pts, &[0.005, 0.01, 0.02, 0.05, 0.1], 1).unwrap();
        assert!((est.d_hat - 1.0).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn too_few_scales_rejected() {
        let pts = vec![DVector::from_vec(vec![0.0, 0.0]); 150];
        assert!(box_dimension(&pts, &[0.1, 0.2, 0.3, 0.4], 0).is_err());
        assert!(box_dimension(&pts[..50], &[0.01, 0.03, 0.1, 0.3], 0).is_err());
    }
}
