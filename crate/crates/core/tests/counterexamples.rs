use nalgebra::{DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use umbra::bodies::{check_chart_invariants, instantiate, BodySpec, CantorField, ConeParams, Family};
use umbra::counterexamples::{
    cantor_contact_pair, kiselman_chart, kiselman_shadow_solver, uniform_concavity_witnesses,
};
use umbra::illumination::dyadic_grid;
use umbra::projection::validate_disjoint;
use umbra::regularity::cusp_check;
use umbra::Error;

/// Hessian of `x^2 (4 - y + y^2/2) + y^{q+1}/(q+1) - y^{q+2}/(q+2)`, by hand.
fn kiselman_hessian(q: i32, x: f64, y: f64) -> Matrix2<f64> {
    let kxx = 2.0 * (4.0 - y + 0.5 * y * y);
    let kxy = 2.0 * x * (y - 1.0);
    let kyy = x * x + q as f64 * y.powi(q - 1) - (q + 1) as f64 * y.powi(q);
    Matrix2::new(kxx, kxy, kxy, kyy)
}

#[test]
fn kiselman_charts_are_strictly_but_not_uniformly_concave() {
    for q in [3, 5, 7] {
        let chart = kiselman_chart(q).unwrap();
        let rep = check_chart_invariants(&chart, None, 400, q as u64).unwrap();
        assert!(rep.passed(), "q = {q}: {rep:?}");

        // Positive definite off the origin on the chart disk.
        for i in -12..=12 {
            for j in -12..=12 {
                let (x, y) = (i as f64 * 0.035, j as f64 * 0.035);
                if (i, j) == (0, 0) || x.hypot(y) > 0.45 {
                    continue;
                }
                let h = kiselman_hessian(q as i32, x, y);
                assert!(h[(0, 0)] > 0.0 && h.determinant() > 0.0, "q = {q} at ({x}, {y})");
            }
        }

        // Along the y axis the smallest eigenvalue is q y^{q-1} + O(y^q).
        let ks: Vec<i32> = (3..=12).collect();
        let witnesses = uniform_concavity_witnesses(&chart, 1e-3, &ks).unwrap();
        assert!(!witnesses.is_empty());
        for w in &witnesses {
            let y = w.y[1];
            let expected = kiselman_hessian(q as i32, 0.0, y).symmetric_eigenvalues().min();
            assert!((w.modulus - expected).abs() <= 1e-9 + 1e-6 * expected, "{w:?} vs {expected}");
        }
    }
}

#[test]
fn cone_body_is_convex() {
    let cone = instantiate(&BodySpec::new(Family::ConeOverCircle(ConeParams::default()))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inside = Vec::new();
    while inside.len() < 300 {
        let p = DVector::from_vec(vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)]);
        if cone.value(&p) < 0.0 {
            inside.push(p);
        }
    }
    for pair in inside.chunks(2) {
        for k in 1..10 {
            let s = k as f64 / 10.0;
            let m = &pair[0] * (1.0 - s) + &pair[1] * s;
            assert!(cone.value(&m) <= 1e-12, "{m}");
        }
    }
}

#[test]
fn cantor_bodies_touch_without_crossing() {
    for depth in 1..=3 {
        let f = CantorField::new(1e-3, depth);
        let mut zero_runs = 0;
        let mut prev = false;
        for i in 0..=100_000 {
            let x = 1.0 + i as f64 / 100_000.0;
            let gap = f.f(x).0 - x * x;
            assert!(gap >= 0.0, "f below x^2 at {x}");
            if gap == 0.0 && !prev {
                zero_runs += 1;
            }
            prev = gap == 0.0;
        }
        let pair = cantor_contact_pair(1e-3, depth).unwrap();
        assert_eq!(pair.contact_count, zero_runs);
        assert!(!pair.degenerate);
        assert!(matches!(validate_disjoint(&pair.omega, &pair.lambda), Err(Error::Overlap { .. })));
    }
}

#[test]
fn kiselman_curve_breaks_every_lipschitz_cone() {
    let curve = kiselman_shadow_solver(3).unwrap().sweep(&dyadic_grid(1, 2..=20)).unwrap();
    for slope in [1.0, 10.0, 40.0] {
        let cert = cusp_check(&curve, &[0.0], slope, 1.0, 1.0).unwrap();
        // |y|^{2/3} exceeds slope * |y| once |y| < slope^{-3}.
        let expected = curve.samples.iter().filter(|s| s.y[0] != 0.0 && s.y[0].abs() < slope.powi(-3)).count();
        assert!(expected > 0);
        assert_eq!(cert.violations, expected, "slope {slope}");
    }
}
