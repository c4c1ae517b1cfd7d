use std::process::ExitCode;
use std::time::{Duration, Instant};

use longstep::certificate::{lambda_cert, phi, Node};
use longstep::gd::{
    adversary_suite, bound_violations, rate_fit, run, stage_boundary_check, strongly_convex_run,
    verify_descent_recurrence, DiagonalQuadratic, GdTrace, Huber1D, Objective,
};
use longstep::real::{rel_err, Precision, Real};
use longstep::sequence::{build_schedule, closed_form_values, delta_conservative, DeltaSource, Sequences};
use longstep::verification::{
    assemble_m, bisect_delta, check_rank_one, check_rowcol, delta_composition, halved_instance, membership_s,
    second_eigenvalue_bound, superdiagonal_bound, superdiagonal_min, w2_second_eigenvalue, Tolerances,
};
use rug::Float;

type Outcome = Result<String, String>;

const BITS: u32 = 128;
const BISECT_ITERATIONS: u32 = 40;
const CAPS: [f64; 5] = [9.33e-2, 1.28e-2, 2.03e-3, 3.34e-4, 5.63e-5];

fn prec() -> Precision {
    Precision::new(BITS).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn f(x: &Real) -> f64 {
    x.to_f64()
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn check(&mut self, n: u32, name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = body();
        let took = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if took > l => Err(format!("runtime {:.1}s exceeds {:.0}s", took.as_secs_f64(), l.as_secs_f64())),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if result.is_err() {
            self.failures += 1;
        }
        println!("criterion {n:>2} {tag} {name} [{:.2}s]: {detail}", took.as_secs_f64());
    }
}

fn pattern_goldens() -> Outcome {
    let p = prec();
    let seq = Sequences::new(p, 3);
    let mut worst = 0.0f64;
    for k in 0..=3 {
        let want = closed_form_values(p, k).ok_or(format!("no closed form for k={k}"))?;
        let got = seq.building_block(k);
        ensure(want.len() == got.len(), || format!("k={k}: length {} vs {}", got.len(), want.len()))?;
        for (a, b) in want.iter().zip(&got.steps) {
            worst = worst.max(f(&rel_err(b, a, 0.0)));
        }
    }
    ensure(worst <= 1e-25, || format!("max relative error {worst:e} > 1e-25"))?;
    Ok(format!("k=0..3 max relative error {worst:.3e}"))
}

/// Printed λ⁽¹⁾ and λ⁽²⁾; row and column 0 belong to ⋆.
fn display_matrix(k: u32) -> Vec<Vec<Real>> {
    let p = prec();
    let r2 = p.sqrt2();
    let inv = Float::with_val(BITS, 1u32 / &r2);
    let half = p.ratio(1, 2);
    let n = (1usize << (k + 1)) + 1;
    let mut m = vec![vec![p.zero(); n]; n];
    let mut put = |i: usize, j: usize, v: Real| m[i][j] = v;
    if k == 1 {
        put(1, 2, p.int(2));
        put(2, 1, p.int(1));
        put(2, 3, half.clone());
        put(2, 4, half.clone());
        put(3, 4, half);
    } else {
        put(1, 2, p.int(2));
        put(2, 1, p.int(1));
        put(2, 3, r2.clone());
        put(2, 4, p.int(1));
        put(3, 4, Float::with_val(BITS, &r2 + 1u32) * 2u32);
        put(4, 2, r2.clone());
        put(4, 3, Float::with_val(BITS, &r2 + 2u32));
        put(4, 5, Float::with_val(BITS, &inv * 3u32) - 2u32);
        for j in 6..=8 {
            put(4, j, Float::with_val(BITS, 1u32 - &inv));
        }
        put(5, 6, Float::with_val(BITS, &inv - &half));
        put(6, 5, Float::with_val(BITS, p.ratio(3, 2) - &r2));
        put(6, 7, Float::with_val(BITS, &inv - &half));
        put(6, 8, Float::with_val(BITS, &inv - &half));
        put(7, 8, half);
    }
    m
}

fn certificate_goldens() -> Outcome {
    let seq = Sequences::new(prec(), 2);
    let mut worst = 0.0f64;
    for k in 1..=2 {
        let cert = lambda_cert(&seq, k);
        let want = display_matrix(k);
        for (r, row) in want.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                let got = cert.value(Node::from_slot(r), Node::from_slot(c));
                let e = if *w == 0 { f(&Float::with_val(BITS, got.abs_ref())) } else { f(&rel_err(&got, w, 0.0)) };
                ensure(e <= 1e-25, || format!("k={k} entry ({r},{c}): error {e:e}"))?;
                worst = worst.max(e);
            }
        }
    }
    Ok(format!("λ1 (5x5) and λ2 (9x9) entrywise, max error {worst:.3e}"))
}

fn identity_suite() -> Outcome {
    let seq = Sequences::new(prec(), 12);
    let mut worst = 0.0f64;
    for k in 1..=12 {
        let r = seq.identity_residuals(k).map_err(|e| e.to_string())?;
        let m = f(&r.max());
        ensure(m <= 1e-20, || format!("k={k}: residuals {r:?}"))?;
        worst = worst.max(m);
        let b = seq.bounds_check(k).map_err(|e| e.to_string())?;
        ensure(b.all(), || format!("k={k}: bracketing failed {b:?}"))?;
    }
    Ok(format!("k=1..12 max relative residual {worst:.3e}, all brackets hold"))
}

fn row_column_balance() -> Outcome {
    let seq = Sequences::new(prec(), 8);
    let mut worst = 0.0f64;
    for k in 1..=8 {
        let r = check_rowcol(&lambda_cert(&seq, k), 1e-20);
        ensure(r.ok, || format!("k={k}: residual {}", f(&r.max_residual)))?;
        worst = worst.max(f(&r.max_residual));
    }
    Ok(format!("k=1..8 max relative residual {worst:.3e}"))
}

fn rank_one() -> Outcome {
    let seq = Sequences::new(prec(), 8);
    let (mut dev, mut ratio) = (0.0f64, 0.0f64);
    for k in 1..=8 {
        let asm = assemble_m(&lambda_cert(&seq, k), &seq.building_block(k)).map_err(|e| e.to_string())?;
        let r = check_rank_one(&asm.m, &phi(&seq, k), 1e-20).map_err(|e| e.to_string())?;
        ensure(r.ok, || {
            format!("k={k}: deviation {:e}, singular ratio {:e}", f(&r.max_deviation), f(&r.singular_ratio))
        })?;
        dev = dev.max(f(&r.max_deviation));
        ratio = ratio.max(f(&r.singular_ratio));
    }
    Ok(format!("k=1..8 max |M-φφᵀ/2|/|M| {dev:.3e}, max σ2/σ1 {ratio:.3e}"))
}

fn eigen_bounds() -> Outcome {
    let p = prec();
    let seq = Sequences::new(p, 8);
    let (mut eig_margin, mut sd_margin) = (f64::INFINITY, f64::INFINITY);
    for k in 1..=8 {
        let cert = lambda_cert(&seq, k);
        let s = w2_second_eigenvalue(&cert).map_err(|e| e.to_string())?;
        let eb = second_eigenvalue_bound(p, k);
        ensure(s.second >= eb, || format!("k={k}: second eigenvalue {} < {}", f(&s.second), f(&eb)))?;
        let sd = superdiagonal_min(&cert);
        let sb = superdiagonal_bound(p, k);
        ensure(sd >= sb, || format!("k={k}: superdiagonal {} < {}", f(&sd), f(&sb)))?;
        eig_margin = eig_margin.min(f(&s.second) / f(&eb));
        sd_margin = sd_margin.min(f(&sd) / f(&sb));
    }
    Ok(format!("k=1..8 min eigenvalue/bound {eig_margin:.3}, min superdiagonal/bound {sd_margin:.3}"))
}

fn bisected(seq: &Sequences, k: u32) -> Result<(Real, bool), String> {
    let p = seq.precision();
    let tol = Tolerances::for_precision(p);
    let (steps, gamma) = halved_instance(seq, k).map_err(|e| e.to_string())?;
    let cert = lambda_cert(seq, k);
    let b = bisect_delta(&steps, &cert, &gamma, &delta_conservative(p, k), BISECT_ITERATIONS, &tol)
        .map_err(|e| e.to_string())?;
    Ok((b.delta, b.spot_checks_ok))
}

// The integer identity is part of the criterion even though it folds to a constant.
#[allow(clippy::eq_op)]
fn delta_pipeline() -> Outcome {
    let p = prec();
    ensure(286u64 * 21 * 128 == 768_768, || "286·21·128 != 768768".into())?;
    let mut worst = 0.0f64;
    for k in 1..=8 {
        let (composed, conservative) = delta_composition(p, k);
        let e = f(&rel_err(&composed, &conservative, 0.0));
        ensure(e <= 1e-25, || format!("k={k}: composed Δ off by {e:e}"))?;
        worst = worst.max(e);
        // The superdiagonal branch never binds at the bound-level inputs.
        let h_hi = p.sqrt2() * 4u32 * p.silver_pow(k as i64);
        ensure(superdiagonal_bound(p, k) / h_hi >= composed, || format!("k={k}: superdiagonal branch binds"))?;
    }
    let seq = Sequences::new(p, 5);
    let tol = Tolerances::for_precision(p);
    for k in 0..=5 {
        let (steps, gamma) = halved_instance(&seq, k).map_err(|e| e.to_string())?;
        let r = membership_s(&steps, &delta_conservative(p, k), &lambda_cert(&seq, k), &gamma, &tol)
            .map_err(|e| e.to_string())?;
        ensure(r.passed(), || format!("membership fails at k={k}: {r:?}"))?;
    }
    let mut found = Vec::new();
    for k in 1..=5u32 {
        let (d, spots) = bisected(&seq, k)?;
        let lo = delta_conservative(p, k);
        let cap = CAPS[k as usize - 1];
        ensure(d >= lo && f(&d) <= cap, || format!("k={k}: bisected {:e} outside [{:e}, {cap:e}]", f(&d), f(&lo)))?;
        ensure(spots, || format!("k={k}: membership fails below the bisected Δ"))?;
        found.push(format!("{:.4e}", f(&d)));
    }
    Ok(format!(
        "composition exact to {worst:.1e}; membership at Δ(k) k=0..5; bisected k=1..5 = [{}]",
        found.join(", ")
    ))
}

fn product_exact(steps: &[f64]) -> f64 {
    let mut x = Float::with_val(256, 1u32);
    for h in steps {
        x *= Float::with_val(256, 1u32) - Float::with_val(256, *h);
    }
    x.to_f64()
}

fn gd_properties() -> Outcome {
    let seq = Sequences::new(prec(), 4);
    let mut patterns: Vec<Vec<f64>> = Vec::new();
    for k in 0..=4 {
        let h = seq.building_block(k).to_f64();
        patterns.push(h.iter().map(|x| 0.9 * x).collect());
        patterns.push(h);
    }
    let mut worst = 0.0f64;
    for steps in &patterns {
        let tr = run(&DiagonalQuadratic::scalar(), &[1.0], longstep::gd::repeat_pattern(steps, 0), steps.len())
            .map_err(|e| e.to_string())?;
        let want = product_exact(steps);
        let e = (tr.x_final[0] - want).abs() / want.abs();
        ensure(e <= 1e-12, || format!("product identity off by {e:e} on {steps:?}"))?;
        worst = worst.max(e);
    }
    let (mut violated, mut region) = (0, 0);
    for a in 1..=10u32 {
        for b in 1..=10u32 {
            let (a, b) = (0.25 * a as f64, b as f64);
            let steps = [a, b, a];
            let r = adversary_suite(&steps).map_err(|e| e.to_string())?;
            let v = bound_violations(&steps);
            ensure(v.product == !r.product.descended, || format!("({a},{b}): product rule mismatch"))?;
            for (i, bad) in v.sum.iter().enumerate() {
                ensure(!bad || !r.sum_by_index[i], || format!("({a},{b}): sum rule at {i} descends"))?;
            }
            for (i, bad) in v.mixed.iter().enumerate() {
                ensure(!bad || !r.mixed_by_index[i], || format!("({a},{b}): mixed rule at {i} descends"))?;
            }
            let any = v.product || v.sum.iter().any(|x| *x) || v.mixed.iter().any(|x| *x);
            violated += any as usize;
            if 2.0 * a + b >= 8.0 {
                region += 1;
                ensure(any && !r.all_descended(), || format!("({a},{b}) with 2a+b >= 8 descends everywhere"))?;
            }
        }
    }
    let r = adversary_suite(&[2.25, 4.0, 2.25]).map_err(|e| e.to_string())?;
    ensure(!r.all_descended(), || "2a+b = 8.5 instance descends".into())?;
    Ok(format!(
        "product identity max error {worst:.2e}; 100-point grid: {violated} with a violated bound, {region} in 2a+b >= 8, all non-descent as predicted"
    ))
}

struct OverrideRuns {
    deltas: Vec<f64>,
}

fn override_deltas() -> Result<Vec<f64>, String> {
    let seq = Sequences::new(prec(), 4);
    (1..=4).map(|k| bisected(&seq, k).map(|(d, _)| 0.5 * f(&d))).collect()
}

fn run_overrides(obj: &dyn Objective, x0: &[f64], deltas: &[f64]) -> Result<(GdTrace, String), String> {
    let p = prec();
    let seq = Sequences::new(p, 3);
    let list = deltas.iter().map(|d| p.from_f64(*d)).collect();
    let sched = build_schedule(&seq, &p.ratio(1, 2), 3, Some(list)).map_err(|e| e.to_string())?;
    let budget = *sched.stage_starts.last().unwrap() as usize;
    let tr = run(obj, x0, sched.steps(), budget).map_err(|e| e.to_string())?;
    let sums: Vec<f64> = sched.stages.iter().map(|s| s.pattern.sum_h.to_f64()).collect();
    let active: Vec<f64> = std::iter::once(0.5).chain(deltas.iter().copied()).collect();
    let rep = verify_descent_recurrence(&tr, &sums, &active, obj.smoothness(), tr.radius);
    ensure(rep.ok() && rep.checked > 0, || format!("{}: {:?}", obj.name(), rep.violations.first()))?;
    let bounds = stage_boundary_check(&tr, &active, obj.smoothness(), tr.radius);
    ensure(bounds.len() == 4, || format!("{}: {} stage boundaries", obj.name(), bounds.len()))?;
    for b in &bounds {
        ensure(b.ok, || format!("{}: {b:?}", obj.name()))?;
    }
    let summary = format!("{} {} steps, {} checked", obj.name(), budget, rep.checked);
    Ok((tr, summary))
}

fn descent_recurrence(store: &mut Option<OverrideRuns>) -> Outcome {
    let deltas = override_deltas()?;
    let q = DiagonalQuadratic::log_spaced(10, 1e-3, 1.0).map_err(|e| e.to_string())?;
    let (_, qs) = run_overrides(&q, &[1.0; 10], &deltas)?;
    let (_, hs) = run_overrides(&Huber1D, &[-7.0], &deltas)?;
    let listed: Vec<String> = deltas.iter().map(|d| format!("{d:.3e}")).collect();
    *store = Some(OverrideRuns { deltas });
    Ok(format!("overrides [{}]; {qs}; {hs}; zero violations, boundary bounds hold", listed.join(", ")))
}

fn rate_behaviour(store: &Option<OverrideRuns>) -> Outcome {
    let runs = store.as_ref().ok_or("override runs unavailable")?;
    // Eigenvalues log-spaced down to 1e-12 with x0 = 1 keep the gap near
    // 1/Σh through every stage instead of collapsing geometrically.
    let slow = DiagonalQuadratic::log_spaced(100, 1e-12, 1.0).map_err(|e| e.to_string())?;
    let (tr, _) = run_overrides(&slow, &[1.0; 100], &runs.deltas)?;
    let fit = rate_fit(&tr).map_err(|e| e.to_string())?;
    let stages = tr.stage_starts.len();
    ensure(stages >= 4, || format!("trace spans {stages} stages"))?;
    ensure(fit.points.len() >= 4, || format!("only {} positive fit points", fit.points.len()))?;
    ensure(fit.slope <= -1.0, || format!("slope {:.3} > -1 over {:?}", fit.slope, fit.points))?;
    let mut amortized = Vec::new();
    for kappa in [1e2, 1e3, 1e4] {
        let obj = DiagonalQuadratic::log_spaced(8, 1.0 / kappa, 1.0).map_err(|e| e.to_string())?;
        let p = prec();
        let list = runs.deltas.iter().map(|d| p.from_f64(*d)).collect();
        for source in [DeltaSource::Conservative, DeltaSource::Override(list)] {
            let r = strongly_convex_run(&obj, &[1.0; 8], &source, 200_000).map_err(|e| e.to_string())?;
            ensure(r.ok(), || format!("κ={kappa:e} ({}): {r:?}", source.name()))?;
            amortized.push(format!(
                "κ={kappa:.0e} {} k={} {:.6}<={:.6}",
                source.name(),
                r.k,
                r.worst_amortized,
                r.rate_bound
            ));
        }
    }
    Ok(format!(
        "slope {:.3} over {stages} stages ({} points); {}",
        fit.slope,
        fit.points.len(),
        amortized.join(", ")
    ))
}

fn main() -> ExitCode {
    let mut r = Runner { failures: 0 };
    let secs = Duration::from_secs;
    r.check(1, "pattern goldens", Some(secs(1)), pattern_goldens);
    r.check(2, "certificate goldens", Some(secs(1)), certificate_goldens);
    r.check(3, "algebraic identities", Some(secs(10)), identity_suite);
    r.check(4, "row/column balance", Some(secs(60)), row_column_balance);
    r.check(5, "rank-one M", Some(secs(300)), rank_one);
    r.check(6, "eigenvalue and superdiagonal bounds", None, eigen_bounds);
    r.check(7, "delta pipeline", Some(secs(600)), delta_pipeline);
    r.check(8, "gradient descent properties", None, gd_properties);
    let mut runs = None;
    r.check(9, "descent recurrence", Some(secs(300)), || descent_recurrence(&mut runs));
    r.check(10, "rate behaviour", None, || rate_behaviour(&runs));
    println!("acceptance: {} of 10 criteria failed", r.failures);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
