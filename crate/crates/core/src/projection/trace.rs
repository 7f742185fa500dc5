//! Predictor-corrector continuation of the shadow boundary curve in R^3.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::solve::{jacobian, solve_boundary_point, ProjectionPoint, Seed, SIGMA_TOL};
use crate::bodies::ImplicitBody;
use crate::error::{Error, Result};
use crate::roots;

/// Ratio `sigma_min / sigma_max` below which a local dip is refined.
const DIP_REFINE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Maximal distance between consecutive `y` points.
    pub step: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryTrace {
    pub points: Vec<ProjectionPoint>,
    pub closed: bool,
    pub arc_length: f64,
    pub step: f64,
    /// Why the trace stopped early, if it did.
    pub diagnostic: Option<String>,
    /// Smallest `sigma_min / sigma_max` seen, including refined dips.
    pub min_sigma_ratio: f64,
}

/// Kernel direction of a `k x (k+1)` matrix via signed maximal minors.
fn null_vector(j: &DMatrix<f64>) -> DVector<f64> {
    let cols = j.ncols();
    DVector::from_fn(cols, |k, _| {
        let minor = j.clone().remove_column(k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

fn ratio(p: &ProjectionPoint) -> f64 {
    p.sigma_min / p.sigma_max
}

/// Trace `∂P_Λ(Ω)` from a solved point (n = 3 only).
///
/// Stops when the curve returns within `step / 2` of the start after at
/// least ten steps, or after `max_steps`. A corrector failure at the
/// smallest step truncates the trace with a diagnostic; a rank drop of `DΦ`
/// along the way is an error.
pub fn trace_boundary(
    omega: &ImplicitBody,
    lambda: &ImplicitBody,
    start: &ProjectionPoint,
    opts: TraceOptions,
) -> Result<BoundaryTrace> {
    let n = omega.dim();
    if n != 3 {
        return Err(Error::Parameter(format!("curve tracing needs n = 3, got {n}")));
    }
    if !(opts.step > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {}", opts.step)));
    }
    if ratio(start) < SIGMA_TOL {
        return Err(Error::RankDeficient { sigma_min: start.sigma_min, sigma_max: start.sigma_max });
    }
    let mut trace = BoundaryTrace {
        points: vec![start.clone()],
        closed: false,
        arc_length: 0.0,
        step: opts.step,
        diagnostic: None,
        min_sigma_ratio: ratio(start),
    };
    let h_min = opts.step / 16.0;
    let mut h = opts.step;
    let mut easy = 0;
    let mut tau_prev: Option<DVector<f64>> = None;
    let y0 = start.y_vec();

    for _ in 0..opts.max_steps {
        let cur = trace.points.last().unwrap().clone();
        let z = cur.packed();
        let mut tau = null_vector(&jacobian(omega, lambda, &z));
        // Step length bounds the motion of both x and y: near a flat point
        // of Ω, x moves much faster than y.
        let scale = tau.rows(n, n).norm().max(tau.rows(0, n).norm());
        if !(tau.rows(n, n).norm() > 0.0) {
            return Err(Error::RankDeficient { sigma_min: cur.sigma_min, sigma_max: cur.sigma_max });
        }
        tau /= scale;
        let flip = match &tau_prev {
            Some(prev) => tau.dot(prev) < 0.0,
            None => tau.rows(n, n).iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0),
        };
        if flip {
            tau = -tau;
        }
        let tau_y = tau.rows(n, n).into_owned();
        let y_cur = cur.y_vec();

        let next = loop {
            let pred = &z + &tau * h;
            let (x, y, t) = (pred.rows(0, n).into_owned(), pred.rows(n, n).into_owned(), pred[2 * n]);
            match solve_boundary_point(omega, lambda, &Seed { x, y, t }) {
                Ok(p) => {
                    let dy = p.y_vec() - &y_cur;
                    if dy.norm() <= (2.0 * h).min(1.1 * opts.step) && dy.dot(&tau_y) > 0.0 {
                        break Some(p);
                    }
                    log::debug!("corrector left the predictor neighbourhood at step {h:e}");
                }
                Err(Error::RankDeficient { sigma_min, sigma_max }) => {
                    return Err(Error::RankDeficient { sigma_min, sigma_max });
                }
                Err(e) => log::debug!("corrector failed at step {h:e}: {e}"),
            }
            h *= 0.5;
            easy = 0;
            // Approaching a rank drop: keep shrinking until it is resolved.
            let floor = if ratio(&cur) < DIP_REFINE { opts.step * 1e-12 } else { h_min };
            if h < floor {
                break None;
            }
        };
        let Some(p) = next else {
            trace.diagnostic =
                Some(format!("corrector failed below the minimal step {h_min:e} after {} points", trace.points.len()));
            break;
        };
        easy += 1;
        if easy >= 3 {
            h = (2.0 * h).min(opts.step);
            easy = 0;
        }
        let r = ratio(&p);
        trace.min_sigma_ratio = trace.min_sigma_ratio.min(r);
        if r < SIGMA_TOL {
            return Err(Error::RankDeficient { sigma_min: p.sigma_min, sigma_max: p.sigma_max });
        }
        trace.points.push(p);
        tau_prev = Some(tau);

        let k = trace.points.len();
        if k >= 3 {
            let (ra, rb, rc) = (ratio(&trace.points[k - 3]), ratio(&trace.points[k - 2]), ratio(&trace.points[k - 1]));
            if rb <= ra && rb < rc && rb < DIP_REFINE {
                let dip = refine_dip(omega, lambda, &trace.points[k - 3], &trace.points[k - 1])?;
                trace.min_sigma_ratio = trace.min_sigma_ratio.min(dip);
            }
        }
        if k > 10 {
            let a = trace.points[k - 2].y_vec();
            let b = trace.points[k - 1].y_vec();
            if segment_distance(&y0, &a, &b) <= 0.5 * opts.step {
                trace.closed = true;
                break;
            }
        }
    }
    trace.arc_length = trace.points.windows(2).map(|w| (w[1].y_vec() - w[0].y_vec()).norm()).sum();
    Ok(trace)
}

/// Golden-section search for the smallest `sigma_min / sigma_max` between two
/// traced points, correcting interpolated points back onto the curve.
fn refine_dip(omega: &ImplicitBody, lambda: &ImplicitBody, a: &ProjectionPoint, b: &ProjectionPoint) -> Result<f64> {
    let za = a.packed();
    let zb = b.packed();
    let n = omega.dim();
    let eval = |s: f64| -> f64 {
        let z = &za * (1.0 - s) + &zb * s;
        let seed = Seed { x: z.rows(0, n).into_owned(), y: z.rows(n, n).into_owned(), t: z[2 * n] };
        match solve_boundary_point(omega, lambda, &seed) {
            Ok(p) => ratio(&p),
            Err(_) => f64::INFINITY,
        }
    };
    let (_, r) = roots::golden_min(eval, 0.0, 1.0, 1e-9, 0.1 * SIGMA_TOL);
    if r < SIGMA_TOL {
        let s = a.sigma_max.max(b.sigma_max);
        return Err(Error::RankDeficient { sigma_min: r * s, sigma_max: s });
    }
    Ok(r)
}

fn segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * s)).norm()
}

impl BoundaryTrace {
    pub fn header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        h.extend((1..=n).map(|i| format!("y{i}")));
        h.extend(["t", "residual", "sigma_min"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.points.first().map_or(3, |p| p.x.len());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(n))?;
        for p in &self.points {
            let row: Vec<String> =
                p.x.iter().chain(&p.y).chain([p.t, p.residual, p.sigma_min].iter()).map(|v| format!("{v:e}")).collect();
            wr.write_record(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read the points of a trace CSV (closure and step are not stored there).
    pub fn read_csv<R: Read>(r: R) -> Result<Vec<ProjectionPoint>> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header.len() < 7 || !(header.len() - 3).is_multiple_of(2) {
            return Err(Error::Schema(format!("unexpected trace header {header:?}")));
        }
        let n = (header.len() - 3) / 2;
        if header != Self::header(n) {
            return Err(Error::Schema(format!("unexpected trace header {header:?}")));
        }
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let v = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Schema(format!("bad number {s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if v.len() != 2 * n + 3 {
                return Err(Error::Schema(format!("row has {} fields, expected {}", v.len(), 2 * n + 3)));
            }
            out.push(ProjectionPoint {
                x: v[..n].to_vec(),
                y: v[n..2 * n].to_vec(),
                t: v[2 * n],
                residual: v[2 * n + 1],
                sigma_min: v[2 * n + 2],
                sigma_max: f64::NAN,
                iterations: 0,
            });
        }
        if out.is_empty() {
            return Err(Error::Schema("trace has no rows".into()));
        }
        Ok(out)
    }

    /// JSON document with the trace and caller-supplied metadata.
    pub fn to_json(&self, bodies: serde_json::Value, max_steps: usize) -> serde_json::Value {
        serde_json::json!({
            "bodies": bodies,
            "step": self.step,
            "max_steps": max_steps,
            "closed": self.closed,
            "arc_length": self.arc_length,
            "n_points": self.points.len(),
            "min_sigma_ratio": self.min_sigma_ratio,
            "diagnostic": self.diagnostic,
            "points": self.points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{instantiate, BallParams, BodySpec, Family};
    use crate::projection::seed_boundary;

    fn ball(c: [f64; 3], r: f64) -> ImplicitBody {
        instantiate(&BodySpec::new(Family::TranslatedBall(BallParams { center: c.to_vec(), radius: r }))).unwrap()
    }

    #[test]
    fn coaxial_trace_closes_on_circle() {
        let o = ball([0.0, 0.0, 3.0], 1.0);
        let l = ball([0.0; 3], 1.0);
        let start = solve_boundary_point(&o, &l, &seed_boundary(&o, &l).unwrap()).unwrap();
        let tr = trace_boundary(&o, &l, &start, TraceOptions { step: 0.05, max_steps: 1000 }).unwrap();
        assert!(tr.closed, "{:?}", tr.diagnostic);
        let z = (8.0f64).sqrt() / 3.0;
        for p in &tr.points {
            let y = p.y_vec();
            assert!((y.norm() - 1.0).abs() < 1e-10 && (y[2] - z).abs() < 1e-8);
        }
        // Circumference of the tangency circle of radius 1/3.
        let circ = 2.0 * std::f64::consts::PI / 3.0;
        assert!((tr.arc_length - circ).abs() < 0.05 * circ);
    }

    #[test]
    fn zero_steps_returns_start() {
        let o = ball([0.0, 0.0, 3.0], 1.0);
        let l = ball([0.0; 3], 1.0);
        let start = solve_boundary_point(&o, &l, &seed_boundary(&o, &l).unwrap()).unwrap();
        let tr = trace_boundary(&o, &l, &start, TraceOptions { step: 0.05, max_steps: 0 }).unwrap();
        assert_eq!(tr.points.len(), 1);
        assert!(!tr.closed);
    }

    #[test]
    fn csv_round_trip() {
        let o = ball([0.0, 0.0, 3.0], 1.0);
        let l = ball([0.0; 3], 1.0);
        let start = solve_boundary_point(&o, &l, &seed_boundary(&o, &l).unwrap()).unwrap();
        let tr = trace_boundary(&o, &l, &start, TraceOptions { step: 0.1, max_steps: 5 }).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("x1,x2,x3,y1,y2,y3,t,residual,sigma_min\n"));
        let back = BoundaryTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), tr.points.len());
        assert_eq!(back[2].y, tr.points[2].y);
    }
}
