mod args;
mod output;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use args::{Cli, Command, KRange, ScheduleArgs, TolArgs};
use longstep::certificate::lambda_cert;
use longstep::gd::{
    adversary_suite, bound_violations, iteration_bound, objective_by_name, rate_fit, run_with, stage_boundary_check,
    verify_descent_recurrence, BoundaryCheck, RateFit, RecurrenceReport, RATE_PROOF, RATE_STATED,
};
use longstep::real::{to_decimal, Precision, Real};
use longstep::sequence::{build_schedule, delta_conservative, PatternDump, Sequences};
use longstep::verification::{bisect_delta, halved_instance, verify_many, Tolerances, VerifyOptions};

/// Bad input: reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

/// Largest Δ found by an unconstrained SDP solve for k = 1..5, shown for comparison.
const NUMERICAL: [f64; 5] = [9.33e-2, 1.28e-2, 2.03e-3, 3.34e-4, 5.63e-5];

struct Ctx {
    precision: Option<Precision>,
}

impl Ctx {
    fn prec_for(&self, k: u32) -> Precision {
        self.precision.unwrap_or_else(|| Precision::for_stage(k))
    }

    fn tolerances(&self, prec: Precision, tol: &TolArgs) -> Result<Tolerances> {
        let mut t = Tolerances::for_precision(prec);
        if let Some(text) = &tol.psd_tol {
            let v = prec.parse(text).map_err(|e| usage(e.to_string()))?;
            if v < 0 {
                return Err(usage("--psd-tol must be nonnegative"));
            }
            t.psd = v;
        }
        Ok(t)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Ok(false) when a requested check failed.
fn dispatch(cli: Cli) -> Result<bool> {
    let precision = cli
        .precision
        .map(|b| Precision::new(b).map_err(|e| usage(e.to_string())))
        .transpose()?;
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global()?;
    }
    let ctx = Ctx { precision };
    match cli.command {
        Command::Pattern { k, out } => pattern(&ctx, k, out.as_deref()),
        Command::Schedule { schedule, out } => schedule_cmd(&ctx, &schedule, out.as_deref()),
        Command::Certify { k, bisect, tol, no_membership, out } => {
            certify(&ctx, k, bisect, &tol, !no_membership, out.as_deref())
        }
        Command::Delta { k, iterations, tol, out, emit_override, scale } => {
            delta(&ctx, k, iterations, &tol, out.as_deref(), emit_override.as_deref(), scale)
        }
        Command::Run { objective, dim, schedule, budget, x0, trace, out } => {
            run_cmd(&ctx, &objective, dim, &schedule, budget, x0, trace.as_deref(), out.as_deref())
        }
        Command::Adversary { steps, k, scale, out } => adversary(&ctx, steps, k, scale, out.as_deref()),
        Command::Sweep { k, bisect, tol, out, reports } => {
            sweep(&ctx, k, bisect, &tol, out.as_deref(), reports.as_deref())
        }
    }
}

fn pattern(ctx: &Ctx, k: KRange, out: Option<&Path>) -> Result<bool> {
    let docs: Vec<(u32, PatternDump)> = k
        .iter()
        .map(|k| {
            let seq = Sequences::new(ctx.prec_for(k), k);
            (k, PatternDump::new(&seq.building_block(k)))
        })
        .collect();
    output::emit_per_k(out, k.is_range(), &docs)?;
    Ok(true)
}

fn read_overrides(path: &Path, prec: Precision) -> Result<Vec<Real>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let items = value
        .as_array()
        .ok_or_else(|| usage(format!("{}: expected a JSON array", path.display())))?;
    items
        .iter()
        .map(|v| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                other => return Err(usage(format!("{}: {other} is not a number", path.display()))),
            };
            prec.parse(&s).map_err(|e| usage(e.to_string()))
        })
        .collect()
}

struct Built {
    prec: Precision,
    schedule: longstep::sequence::Schedule,
}

fn build(ctx: &Ctx, args: &ScheduleArgs) -> Result<Built> {
    let prec = ctx.precision.unwrap_or_default();
    let eta = prec.parse(&args.eta).map_err(|e| usage(e.to_string()))?;
    if eta <= 0 || eta >= 1 {
        return Err(usage("--eta must lie in (0, 1)"));
    }
    let overrides = args.delta_override.as_deref().map(|p| read_overrides(p, prec)).transpose()?;
    let stages = match (&args.stages, &overrides) {
        (Some(s), _) => *s,
        (None, Some(list)) if !list.is_empty() => list.len() as u32 - 1,
        (None, _) => 1,
    };
    let seq = Sequences::new(prec, stages);
    let schedule = build_schedule(&seq, &eta, stages, overrides).map_err(|e| usage(e.to_string()))?;
    Ok(Built { prec, schedule })
}

fn schedule_cmd(ctx: &Ctx, args: &ScheduleArgs, out: Option<&Path>) -> Result<bool> {
    let built = build(ctx, args)?;
    output::emit(out, &output::json(&built.schedule.summary())?)?;
    Ok(true)
}

fn verify_range(ctx: &Ctx, k: KRange, bisect: Option<u32>, tol: &TolArgs, membership: bool) -> Result<Vec<longstep::verification::VerificationReport>> {
    let ks: Vec<u32> = k.iter().collect();
    // Validate the tolerance once so a bad value is a usage error.
    ctx.tolerances(ctx.prec_for(k.lo), tol)?;
    let results = verify_many(&ks, |k| ctx.prec_for(k), |prec| {
        let mut o = VerifyOptions::new(prec);
        o.tolerances = ctx.tolerances(prec, tol).expect("validated above");
        o.bisect = bisect;
        o.membership = membership;
        o
    });
    ks.iter()
        .zip(results)
        .map(|(k, r)| r.with_context(|| format!("verifying k={k}")))
        .collect()
}

fn certify(ctx: &Ctx, k: KRange, bisect: Option<u32>, tol: &TolArgs, membership: bool, out: Option<&Path>) -> Result<bool> {
    let reports = verify_range(ctx, k, bisect, tol, membership)?;
    let mut ok = true;
    for r in &reports {
        if !r.passed() {
            eprintln!("k={}: verification failed", r.k);
            ok = false;
        }
    }
    let docs: Vec<_> = reports.iter().map(|r| (r.k, r.to_json())).collect();
    output::emit_per_k(out, k.is_range(), &docs)?;
    Ok(ok)
}

#[derive(Serialize)]
struct DeltaDoc {
    k: u32,
    precision_bits: u32,
    iterations: u32,
    delta_conservative: String,
    delta_bisected: String,
    first_failure: String,
    spot_checks_ok: bool,
}

fn delta(
    ctx: &Ctx,
    k: KRange,
    iterations: u32,
    tol: &TolArgs,
    out: Option<&Path>,
    emit_override: Option<&Path>,
    scale: f64,
) -> Result<bool> {
    if emit_override.is_some() && k.lo != 1 {
        return Err(usage("--emit-override needs a range starting at k = 1"));
    }
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(usage("--scale must lie in (0, 1]"));
    }
    let mut docs = Vec::new();
    let mut ok = true;
    let mut overrides = Vec::new();
    for k in k.iter() {
        let prec = ctx.prec_for(k);
        let tolerances = ctx.tolerances(prec, tol)?;
        let seq = Sequences::new(prec, k);
        let (steps, gamma) = halved_instance(&seq, k)?;
        let lower = delta_conservative(prec, k);
        let b = match bisect_delta(&steps, &lambda_cert(&seq, k), &gamma, &lower, iterations, &tolerances) {
            Ok(b) => b,
            Err(longstep::Error::Construction(msg)) => {
                eprintln!("k={k}: {msg}");
                ok = false;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        ok &= b.spot_checks_ok;
        overrides.push(to_decimal(&(b.delta.clone() * prec.from_f64(scale))));
        docs.push((
            k,
            DeltaDoc {
                k,
                precision_bits: prec.bits(),
                iterations,
                delta_conservative: to_decimal(&lower),
                delta_bisected: to_decimal(&b.delta),
                first_failure: to_decimal(&b.upper),
                spot_checks_ok: b.spot_checks_ok,
            },
        ));
    }
    if !docs.is_empty() {
        output::emit_per_k(out, k.is_range(), &docs)?;
    }
    if let Some(path) = emit_override {
        output::write_text(path, &output::json(&overrides)?)?;
    }
    Ok(ok)
}

#[derive(Serialize)]
struct RunDoc {
    objective: String,
    dim: usize,
    budget: usize,
    delta_source: String,
    last_stage: u32,
    smoothness: f64,
    radius: f64,
    initial_gap: f64,
    last_gap: f64,
    best_gap: f64,
    recurrence: RecurrenceReport,
    boundaries: Vec<BoundaryCheck>,
    rate_fit: Option<RateFit>,
    /// Iterations the rate guarantees for reaching the best gap seen.
    iteration_bound: Option<f64>,
    /// The same from the sharper, unreconciled constants.
    iteration_bound_unreconciled: Option<f64>,
    passed: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_cmd(
    ctx: &Ctx,
    name: &str,
    dim: usize,
    args: &ScheduleArgs,
    budget: usize,
    x0: f64,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<bool> {
    let obj = objective_by_name(name, dim).map_err(|e| usage(e.to_string()))?;
    if budget == 0 {
        return Err(usage("--budget must be positive"));
    }
    if !x0.is_finite() {
        return Err(usage("--x0 must be finite"));
    }
    let Built { prec, schedule } = build(ctx, args)?;
    let start = vec![x0; dim];
    let mut writer = trace.map(output::trace_writer).transpose()?;
    let tr = run_with(obj.as_ref(), &start, schedule.steps(), budget, |row| {
        if let Some(w) = writer.as_mut() {
            w.write_record([
                row.iter.to_string(),
                row.gap.to_string(),
                row.min_gap.to_string(),
                row.stage_k.to_string(),
                (row.pattern_boundary as u8).to_string(),
            ])
            .map_err(|e| longstep::Error::Invalid(format!("trace write failed: {e}")))?;
        }
        Ok(())
    })?;
    if let Some(mut w) = writer {
        w.flush()?;
        let mut inner = w.into_inner().map_err(|e| anyhow!("trace write failed: {e}"))?;
        inner.flush()?;
    }
    let sums: Vec<f64> = schedule.stages.iter().map(|s| s.pattern.sum_h.to_f64()).collect();
    let deltas: Vec<f64> = (0..=schedule.max_stage())
        .map(|k| schedule.delta_source.delta(prec, k).to_f64())
        .collect();
    let l = obj.smoothness();
    let recurrence = verify_descent_recurrence(&tr, &sums, &deltas, l, tr.radius);
    let boundaries = stage_boundary_check(&tr, &deltas, l, tr.radius);
    let passed = recurrence.ok() && boundaries.iter().all(|b| b.ok);
    let ratio = Some(l * tr.radius * tr.radius / tr.best_gap()).filter(|r| r.is_finite());
    let doc = RunDoc {
        objective: obj.name().to_string(),
        dim,
        budget,
        delta_source: schedule.delta_source.name().to_string(),
        last_stage: tr.stage_of.last().copied().unwrap_or(0),
        smoothness: l,
        radius: tr.radius,
        initial_gap: tr.gaps[0],
        last_gap: tr.last_gap(),
        best_gap: tr.best_gap(),
        recurrence,
        boundaries,
        rate_fit: rate_fit(&tr).ok(),
        iteration_bound: ratio.map(|r| iteration_bound(RATE_PROOF, r)),
        iteration_bound_unreconciled: ratio.map(|r| iteration_bound(RATE_STATED, r)),
        passed,
    };
    output::emit(out, &output::json(&doc)?)?;
    Ok(passed)
}

#[derive(Serialize)]
struct RuleDoc {
    descended: Vec<bool>,
    bound_violated: Vec<bool>,
    gap_start: f64,
    gap_end: f64,
}

#[derive(Serialize)]
struct AdversaryDoc {
    steps: Vec<f64>,
    product: RuleDoc,
    sum: RuleDoc,
    mixed: RuleDoc,
    all_descended: bool,
    /// Every violated bound came with a failure to descend.
    consistent: bool,
}

fn adversary(ctx: &Ctx, steps: Option<Vec<f64>>, k: Option<u32>, scale: f64, out: Option<&Path>) -> Result<bool> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(usage("--scale must be positive"));
    }
    let base = match (steps, k) {
        (Some(s), _) => s,
        (None, Some(k)) => Sequences::new(ctx.prec_for(k), k).building_block(k).to_f64(),
        (None, None) => bail!(usage("give --steps or --k")),
    };
    let steps: Vec<f64> = base.iter().map(|h| h * scale).collect();
    let r = adversary_suite(&steps).map_err(|e| usage(e.to_string()))?;
    let v = bound_violations(&steps);
    let implies = |bad: &[bool], desc: &[bool]| bad.iter().zip(desc).all(|(b, d)| !b || !d);
    let consistent = v.product == !r.product.descended
        && implies(&v.sum, &r.sum_by_index)
        && implies(&v.mixed, &r.mixed_by_index);
    let doc = AdversaryDoc {
        product: RuleDoc {
            descended: vec![r.product.descended],
            bound_violated: vec![v.product],
            gap_start: r.product.gap_start,
            gap_end: r.product.gap_end,
        },
        sum: RuleDoc {
            descended: r.sum_by_index.clone(),
            bound_violated: v.sum.clone(),
            gap_start: r.sum.gap_start,
            gap_end: r.sum.gap_end,
        },
        mixed: RuleDoc {
            descended: r.mixed_by_index.clone(),
            bound_violated: v.mixed.clone(),
            gap_start: r.mixed.gap_start,
            gap_end: r.mixed.gap_end,
        },
        all_descended: r.all_descended(),
        consistent,
        steps,
    };
    output::emit(out, &output::json(&doc)?)?;
    Ok(consistent)
}

fn sweep(ctx: &Ctx, k: KRange, bisect: u32, tol: &TolArgs, out: Option<&Path>, reports: Option<&Path>) -> Result<bool> {
    let results = verify_range(ctx, k, Some(bisect), tol, true)?;
    let mut md = String::from("| k | bits | Δ⁽ᵏ⁾ conservative | Δ bisected | Δ numerical | passed |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    let mut ok = true;
    for r in &results {
        ok &= r.passed();
        let bisected = r.delta_bisected.as_ref().map(|b| format!("{:.4e}", b.delta.to_f64())).unwrap_or_default();
        let numerical = match r.k {
            1..=5 => format!("{:.2e}", NUMERICAL[r.k as usize - 1]),
            _ => "-".into(),
        };
        md.push_str(&format!(
            "| {} | {} | {:.4e} | {} | {} | {} |\n",
            r.k,
            r.precision_bits,
            r.delta_conservative.to_f64(),
            bisected,
            numerical,
            if r.passed() { "yes" } else { "no" }
        ));
        if let Some(dir) = reports {
            output::write_text(&dir.join(format!("report_k{}.json", r.k)), &output::json(&r.to_json())?)?;
        }
    }
    output::emit(out, &md)?;
    Ok(ok)
}
