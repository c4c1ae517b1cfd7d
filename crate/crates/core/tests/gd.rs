use longstep::certificate::lambda_cert;
use longstep::gd::{
    adversary_suite, bound_violations, gradient_check, objective_by_name, rate_fit, repeat_pattern, run,
    stage_boundary_check, strongly_convex_run, verify_descent_recurrence, DiagonalQuadratic, Huber1D, LogSumExp,
    Objective, Splice1D, OBJECTIVES,
};
use longstep::real::Precision;
use longstep::sequence::{build_schedule, DeltaSource, ScheduledStep, Sequences};
use longstep::verification::{bisect_delta, halved_instance, Tolerances};
use longstep::Error;
use proptest::prelude::*;

fn half_bisected(kmax: u32) -> Vec<f64> {
    let p = Precision::default();
    let seq = Sequences::new(p, kmax);
    let tol = Tolerances::for_precision(p);
    (1..=kmax)
        .map(|k| {
            let (steps, gamma) = halved_instance(&seq, k).unwrap();
            let lo = longstep::sequence::delta_conservative(p, k);
            bisect_delta(&steps, &lambda_cert(&seq, k), &gamma, &lo, 30, &tol).unwrap().delta.to_f64() * 0.5
        })
        .collect()
}

/// Runs the override schedule through stage `max_stage` and checks the
/// recurrence and the stage-boundary bound.
fn override_run(obj: &dyn Objective, x0: &[f64], max_stage: u32, deltas: &[f64]) {
    let p = Precision::default();
    let seq = Sequences::new(p, max_stage);
    let list = deltas.iter().map(|d| p.from_f64(*d)).collect();
    let sched = build_schedule(&seq, &p.ratio(1, 2), max_stage, Some(list)).unwrap();
    let budget = *sched.stage_starts.last().unwrap() as usize;
    let tr = run(obj, x0, sched.steps(), budget).unwrap();
    let sums: Vec<f64> = sched.stages.iter().map(|s| s.pattern.sum_h.to_f64()).collect();
    let active: Vec<f64> = std::iter::once(0.5).chain(deltas.iter().copied()).collect();
    let rep = verify_descent_recurrence(&tr, &sums, &active, obj.smoothness(), tr.radius);
    assert!(rep.ok(), "{}: {:?}", obj.name(), rep.violations.first());
    assert!(rep.checked > 0);
    for b in stage_boundary_check(&tr, &active, obj.smoothness(), tr.radius) {
        assert!(b.ok, "{}: {b:?}", obj.name());
    }
}

#[test]
fn recurrence_on_quadratic_stage_zero() {
    let obj = DiagonalQuadratic::scalar();
    let tr = run(&obj, &[1.0], repeat_pattern(&[1.0], 0), 20).unwrap();
    let rep = verify_descent_recurrence(&tr, &[1.0], &[0.5], 1.0, 1.0);
    assert!(rep.ok());
    assert_eq!(rep.checked, 20);
}

#[test]
fn recurrence_with_overrides() {
    let deltas = half_bisected(3);
    let q = DiagonalQuadratic::log_spaced(10, 1e-3, 1.0).unwrap();
    override_run(&q, &[1.0; 10], 2, &deltas);
    override_run(&Huber1D, &[-7.0], 2, &deltas);
    override_run(&LogSumExp { n: 4 }, &[3.0, -1.0, 0.5, 2.0], 2, &deltas);
}

/// Step 1 throughout with stage labels switching at 10·4^k.
fn labelled_constant(stages: u32) -> impl Iterator<Item = ScheduledStep> {
    (0u128..).map(move |i| {
        let k = (0..stages).rev().find(|k| i >= 10 * 4u128.pow(*k) - 10).unwrap_or(0);
        ScheduledStep { index: i, k, offset: 0, closes_pattern: true, h: 1.0 }
    })
}

#[test]
fn constant_step_rate_is_one_over_t() {
    let n = 20_000;
    let diag: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
    let x0: Vec<f64> = diag.iter().map(|l| 1.0 / (l * n as f64).sqrt()).collect();
    let obj = DiagonalQuadratic::new(diag).unwrap();
    let tr = run(&obj, &x0, labelled_constant(5), 2560).unwrap();
    let fit = rate_fit(&tr).unwrap();
    assert!((fit.slope + 1.0).abs() < 0.05, "{fit:?}");
}

#[test]
fn rate_fit_needs_three_stages() {
    let tr = run(&DiagonalQuadratic::scalar(), &[1.0], repeat_pattern(&[0.5], 0), 50).unwrap();
    assert!(matches!(rate_fit(&tr), Err(Error::InsufficientData(_))));
}

#[test]
fn strongly_convex_contractions() {
    for kappa in [10.0, 1e2, 1e3] {
        let obj = DiagonalQuadratic::log_spaced(8, 1.0 / kappa, 1.0).unwrap();
        let r = strongly_convex_run(&obj, &[1.0; 8], &DeltaSource::Conservative, 2000).unwrap();
        assert_eq!(r.k, 0);
        assert!(r.ok(), "{r:?}");
        assert!((r.per_application_bound - (1.0 - 0.5 / kappa)).abs() < 1e-12);
    }
    let p = Precision::default();
    let list = vec![p.from_f64(0.05), p.from_f64(7e-4), p.from_f64(1.5e-5)];
    let obj = DiagonalQuadratic::log_spaced(8, 1e-3, 1.0).unwrap();
    let r = strongly_convex_run(&obj, &[1.0; 8], &DeltaSource::Override(list), 7000).unwrap();
    assert_eq!(r.k, 2);
    assert_eq!(r.violations, 0, "{r:?}");
    assert!(strongly_convex_run(&Huber1D, &[2.0], &DeltaSource::Conservative, 10).is_err());
}

#[test]
fn adversary_examples() {
    let r = adversary_suite(&[2.0, 4.5, 2.0]).unwrap();
    assert!(!r.all_descended());
    let p = Precision::default();
    let h1 = Sequences::new(p, 1).building_block(1).to_f64();
    let scaled: Vec<f64> = h1.iter().map(|h| 0.9 * h).collect();
    assert!(adversary_suite(&scaled).unwrap().all_descended());
    let r = adversary_suite(&h1).unwrap();
    assert!(!r.product.descended);
    assert_eq!(r.product.x_final, -1.0);
    assert!(!adversary_suite(&[3.0]).unwrap().sum.descended);
}

#[test]
fn objectives_by_name() {
    for name in OBJECTIVES {
        let dim = if matches!(name, "diag-quadratic" | "logsumexp") { 5 } else { 1 };
        let o = objective_by_name(name, dim).unwrap();
        assert_eq!(o.dim(), dim);
        assert_eq!(o.gap(&o.minimizer()), 0.0);
    }
    assert!(objective_by_name("huber", 3).is_err());
    assert!(objective_by_name("rosenbrock", 2).is_err());
}

fn off_kink(x: f64) -> f64 {
    if (x.abs() - 1.0).abs() < 1e-3 {
        x + 0.01
    } else {
        x
    }
}

proptest! {
    #[test]
    fn gradients_match_differences(xs in prop::collection::vec(-6.0f64..6.0, 5)) {
        let objs: Vec<Box<dyn Objective>> = vec![
            Box::new(DiagonalQuadratic::log_spaced(5, 1e-2, 1.0).unwrap()),
            Box::new(LogSumExp { n: 5 }),
        ];
        for o in &objs {
            prop_assert!(gradient_check(o.as_ref(), &xs, 1e-5) < 1e-6, "{}", o.name());
        }
        let x = [off_kink(xs[0])];
        prop_assert!(gradient_check(&Huber1D, &x, 1e-5) < 1e-6);
        prop_assert!(gradient_check(&Splice1D, &x, 1e-5) < 1e-6);
        prop_assert!(gradient_check(&DiagonalQuadratic::scalar(), &x, 1e-5) < 1e-6);
        for o in &objs {
            prop_assert!(o.value(&xs) >= o.optimum_value());
        }
        prop_assert!(Splice1D.value(&x) >= 0.5);
    }

    // Each f64 step x - hx loses about ε/|1-h| relative accuracy; keeping
    // |1-h| ≥ 0.05 bounds the accumulated error over 40 steps below 1e-12.
    #[test]
    fn quadratic_product_identity(
        steps in prop::collection::vec((0.01f64..3.0).prop_filter("near one", |h| (1.0 - h).abs() >= 0.05), 1..40)
    ) {
        let tr = run(&DiagonalQuadratic::scalar(), &[1.0], repeat_pattern(&steps, 0), steps.len()).unwrap();
        let mut exact = rug::Float::with_val(256, 1u32);
        for h in &steps {
            exact *= rug::Float::with_val(256, 1u32) - rug::Float::with_val(256, *h);
        }
        let want = exact.to_f64();
        prop_assert!((tr.x_final[0] - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn traces_are_well_formed(steps in prop::collection::vec(0.05f64..2.5, 1..8), x0 in -5.0f64..5.0, n in 1usize..200) {
        for name in ["huber", "splice", "quadratic"] {
            let o = objective_by_name(name, 1).unwrap();
            let tr = run(o.as_ref(), &[x0], repeat_pattern(&steps, 0), n).unwrap();
            prop_assert_eq!(tr.len(), n + 1);
            prop_assert!(tr.gaps.iter().all(|g| *g >= 0.0));
            prop_assert!(tr.min_gap_prefix.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(tr.pattern_boundaries.len(), n / steps.len());
        }
    }

    #[test]
    fn violated_bounds_block_descent(a in 1u32..=10, b in 1u32..=10) {
        let steps = [0.25 * a as f64, b as f64, 0.25 * a as f64];
        let r = adversary_suite(&steps).unwrap();
        let v = bound_violations(&steps);
        prop_assert_eq!(v.product, !r.product.descended);
        for (i, bad) in v.sum.iter().enumerate() {
            prop_assert!(!bad || !r.sum_by_index[i]);
        }
        for (i, bad) in v.mixed.iter().enumerate() {
            prop_assert!(!bad || !r.mixed_by_index[i]);
        }
    }
}
