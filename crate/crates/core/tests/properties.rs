use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use umbra::bodies::{chart_at, instantiate, BallParams, BodySpec, EllipsoidParams, Family, ImplicitBody};
use umbra::frame::{random_rotation, random_unit, Pose};
use umbra::illumination::{find_shadow_boundary_point, Direction, ShadowCurve, ShadowSample, ShadowSolver};
use umbra::projection::{jacobian, residual_map, seed_boundary, solve_boundary_point};
use umbra::regularity::{box_dimension, cusp_check, holder_fit};

fn ellipsoid(axes: &[f64], pose: Option<Pose>) -> ImplicitBody {
    let mut spec = BodySpec::new(Family::Ellipsoid(EllipsoidParams { semiaxes: axes.to_vec() }));
    if let Some(p) = pose {
        spec = spec.with_pose(p);
    }
    instantiate(&spec).unwrap()
}

fn ball(c: &[f64], r: f64) -> ImplicitBody {
    instantiate(&BodySpec::new(Family::TranslatedBall(BallParams { center: c.to_vec(), radius: r }))).unwrap()
}

fn curve(points: &[(f64, f64)]) -> ShadowCurve {
    ShadowCurve {
        dim_y: 1,
        chart_frame: None,
        direction: None,
        samples: points.iter().map(|&(y, gamma)| ShadowSample { y: vec![y], gamma, residual: 0.0 }).collect(),
        failures: vec![],
    }
}

fn axes() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.5f64..2.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shadow_is_upward_closed(a in axes(), seed in any::<u64>(), fy in -0.5f64..0.5, f1 in -1.0f64..1.0, f2 in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = ellipsoid(&a, None);
        let u = Direction::new(&random_unit(&mut rng, 3)).unwrap();
        let p = find_shadow_boundary_point(&body, &u, None).unwrap();
        let chart = chart_at(&body, &p).unwrap();
        let solver = ShadowSolver::new(&chart, &u).unwrap();
        let y2 = DVector::from_element(1, fy * chart.domain_radius());
        let t_max = solver.t_max(&y2).unwrap();
        let (t1, t2) = if f1 <= f2 { (f1 * t_max, f2 * t_max) } else { (f2 * t_max, f1 * t_max) };
        if solver.in_shadow(&y2, t1).unwrap() {
            prop_assert!(solver.in_shadow(&y2, t2).unwrap());
        }
    }

    #[test]
    fn silhouette_commutes_with_rotation(a in axes(), seed in any::<u64>(), fy in -0.5f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = ellipsoid(&a, None);
        let u = random_unit(&mut rng, 3);
        let rot = random_rotation(&mut rng, 3);
        let turned = ellipsoid(&a, Some(Pose::from_parts(&rot, &DVector::zeros(3))));
        let ru = Direction::new(&(&rot * &u)).unwrap();
        let p = find_shadow_boundary_point(&turned, &ru, None).unwrap();
        let chart = chart_at(&turned, &p).unwrap();
        let solver = ShadowSolver::new(&chart, &ru).unwrap();
        let y2 = DVector::from_element(1, fy * chart.domain_radius());
        let x = solver.world_point(&solver.gamma(&y2).unwrap()).unwrap();
        // Pull the point back: it must sit on the original silhouette.
        let back = rot.transpose() * x;
        let g = body.gradient(&back);
        prop_assert!(body.value(&back).abs() < 1e-7);
        prop_assert!(g.dot(&u).abs() < 1e-6 * g.norm());
    }

    #[test]
    fn jacobian_matches_central_differences(r1 in 0.4f64..1.0, r2 in 0.6f64..1.4, gap in 0.3f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_unit(&mut rng, 3) * (r1 + r2 + gap);
        let omega = ball(c.as_slice(), r1);
        let lambda = ball(&[0.0; 3], r2);
        let point = solve_boundary_point(&omega, &lambda, &seed_boundary(&omega, &lambda).unwrap()).unwrap();
        let z = point.packed();
        let j = jacobian(&omega, &lambda, &z);
        let h = 1e-6;
        for k in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let col = (residual_map(&omega, &lambda, &zp) - residual_map(&omega, &lambda, &zm)) / (2.0 * h);
            for i in 0..col.len() {
                prop_assert!((j[(i, k)] - col[i]).abs() <= 1e-6 * j[(i, k)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn holder_fit_recovers_power_laws(c in 0.2f64..5.0, beta in 0.1f64..1.4) {
        let mut pts = vec![(0.0, 0.0)];
        for k in 2..=14 {
            let y = 2f64.powi(-k);
            pts.push((y, c * y.powf(beta)));
            pts.push((-y, c * y.powf(beta)));
        }
        let fit = holder_fit(&curve(&pts), &[0.0]).unwrap();
        assert_relative_eq!(fit.alpha_hat, beta, epsilon = 1e-9);
        assert_relative_eq!(fit.c_hat, c, max_relative = 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
        prop_assert_eq!(fit.super_lipschitz, beta > 1.0);
    }

    #[test]
    fn box_counts_shrink_on_subsets(seed in any::<u64>(), keep in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<DVector<f64>> = (0..600).map(|_| random_unit(&mut rng, 3)).collect();
        let cut = (keep * all.len() as f64) as usize;
        let scales = [0.05, 0.1, 0.2, 0.4, 0.8];
        let whole = box_dimension(&all, &scales, seed).unwrap();
        let part = box_dimension(&all[..cut.max(100)], &scales, seed).unwrap();
        for (a, b) in part.counts.iter().zip(&whole.counts) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn cusp_certificate_is_monotone_in_its_constants(c in 0.1f64..3.0, beta in 0.3f64..1.0, alpha in 0.1f64..1.0, slope in 0.1f64..5.0) {
        let pts: Vec<(f64, f64)> = (-50..=50).map(|i| {
            let y = i as f64 / 50.0;
            (y, c * y.abs().powf(beta))
        }).collect();
        let cv = curve(&pts);
        let cert = cusp_check(&cv, &[0.0], slope, 1.0, alpha).unwrap();
        // On |y| <= 1 the cone y -> s|y|^a contains c|y|^b whenever c <= s and b >= a.
        if c <= slope && beta >= alpha {
            prop_assert!(cert.passed());
        }
        if cert.passed() {
            prop_assert!(cusp_check(&cv, &[0.0], 2.0 * slope, 1.0, alpha).unwrap().passed());
            prop_assert!(cusp_check(&cv, &[0.0], slope, 0.5, alpha).unwrap().passed());
        }
    }
}
