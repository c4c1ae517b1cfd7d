//! The full nonperiodic schedule: stage k applies (1-η)𝔥⁽ᵏ⁾ R_k times.

use rug::Float;
use serde::{Deserialize, Serialize};

use super::{delta_conservative, Sequences, StepPattern};
use crate::error::{Error, Result};
use crate::real::{to_decimal, Precision, Real};

/// Where the per-stage Δ values come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DeltaSource {
    Conservative,
    /// Δ⁽¹⁾, Δ⁽²⁾, …; Δ⁽⁰⁾ stays 1/2.
    Override(Vec<Real>),
}

impl DeltaSource {
    pub fn delta(&self, prec: Precision, k: u32) -> Real {
        match self {
            DeltaSource::Override(list) if k >= 1 => {
                Float::with_val(prec.bits(), &list[k as usize - 1])
            }
            _ => delta_conservative(prec, k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DeltaSource::Conservative => "conservative",
            DeltaSource::Override(_) => "override",
        }
    }
}

/// R_k = ⌈1/((1-η) H_k Δ⁽ᵏ⁺¹⁾)⌉, evaluated exactly on the extended-precision
/// quotient.
pub fn repetitions(seq: &Sequences, k: u32, eta: &Real, delta_next: &Real) -> Result<u128> {
    if *delta_next <= 0 {
        return Err(Error::Invalid("delta must be positive".into()));
    }
    check_eta(eta)?;
    let bits = seq.precision().bits();
    let scale = Float::with_val(bits, 1u32 - eta) * seq.pattern_sum(k) * delta_next;
    let q = Float::with_val(bits, 1u32) / scale;
    let ceil = q.ceil();
    let int = ceil
        .to_integer()
        .ok_or_else(|| Error::Invalid("repetition count is not finite".into()))?;
    int.to_u128()
        .ok_or_else(|| Error::Invalid(format!("repetition count {int} overflows u128")))
}

fn check_eta(eta: &Real) -> Result<()> {
    if *eta <= 0 || *eta >= 1 {
        return Err(Error::Invalid(format!("eta must lie in (0,1), got {}", eta.to_f64())));
    }
    Ok(())
}

/// One stage of the schedule.
#[derive(Clone, Debug)]
pub struct Stage {
    pub k: u32,
    /// The scaled pattern (1-η)𝔥⁽ᵏ⁾.
    pub pattern: StepPattern,
    pub reps: u128,
    steps_f64: Vec<f64>,
}

impl Stage {
    pub fn steps_f64(&self) -> &[f64] {
        &self.steps_f64
    }

    pub fn total_steps(&self) -> u128 {
        self.reps * self.pattern.len() as u128
    }
}

/// Concatenated repeated patterns with stage boundaries I_k.
///
/// Past I_{max_stage+1} the stream keeps applying the last stage, so every
/// iteration index has a step.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub eta: Real,
    pub stages: Vec<Stage>,
    /// I_0 = 0, …, I_{max_stage+1}.
    pub stage_starts: Vec<u128>,
    pub delta_source: DeltaSource,
}

/// Assemble stages `0..=max_stage`. With overrides, entry ℓ-1 is Δ⁽ˡ⁾ and at
/// least `max_stage + 1` entries are needed, one per stage boundary.
pub fn build_schedule(
    seq: &Sequences,
    eta: &Real,
    max_stage: u32,
    delta_overrides: Option<Vec<Real>>,
) -> Result<Schedule> {
    check_eta(eta)?;
    if max_stage > seq.max_stage() {
        return Err(Error::Invalid(format!(
            "memo table covers stages up to {}",
            seq.max_stage()
        )));
    }
    let source = match delta_overrides {
        None => DeltaSource::Conservative,
        Some(list) => {
            if list.len() < max_stage as usize + 1 {
                return Err(Error::Invalid(format!(
                    "{} delta overrides given, {} stage boundaries need one each",
                    list.len(),
                    max_stage + 1
                )));
            }
            if let Some(bad) = list.iter().find(|d| !d.is_finite() || **d <= 0) {
                return Err(Error::Invalid(format!(
                    "delta override {} is not positive",
                    to_decimal(bad)
                )));
            }
            DeltaSource::Override(list)
        }
    };
    let prec = seq.precision();
    let factor = Float::with_val(prec.bits(), 1u32 - eta);
    let mut stages = Vec::new();
    let mut starts = vec![0u128];
    for k in 0..=max_stage {
        let pattern = seq.building_block(k).scaled(&factor);
        let reps = repetitions(seq, k, eta, &source.delta(prec, k + 1))?;
        let len = pattern.len() as u128;
        let next = reps
            .checked_mul(len)
            .and_then(|n| n.checked_add(*starts.last().unwrap()))
            .ok_or_else(|| Error::Invalid("stage boundary overflows u128".into()))?;
        starts.push(next);
        let steps_f64 = pattern.to_f64();
        stages.push(Stage { k, pattern, reps, steps_f64 });
    }
    Ok(Schedule {
        eta: Float::with_val(prec.bits(), eta),
        stages,
        stage_starts: starts,
        delta_source: source,
    })
}

/// One emitted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduledStep {
    /// Global iteration index.
    pub index: u128,
    pub k: u32,
    /// Position inside the current pattern application.
    pub offset: usize,
    /// True when this step completes an application of the pattern.
    pub closes_pattern: bool,
    pub h: f64,
}

impl Schedule {
    pub fn max_stage(&self) -> u32 {
        self.stages.last().map(|s| s.k).unwrap_or(0)
    }

    /// Stage active at iteration n.
    pub fn stage_of(&self, n: u128) -> &Stage {
        let idx = match self.stage_starts.binary_search(&n) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        &self.stages[idx.min(self.stages.len() - 1)]
    }

    fn locate(&self, n: u128) -> (&Stage, usize) {
        let stage = self.stage_of(n);
        let start = self.stage_starts[stage.k as usize];
        let offset = ((n - start) % stage.pattern.len() as u128) as usize;
        (stage, offset)
    }

    /// Exact step at iteration n.
    pub fn step_exact(&self, n: u128) -> Real {
        let (stage, offset) = self.locate(n);
        stage.pattern.steps[offset].clone()
    }

    /// First n steps in extended precision.
    pub fn materialize(&self, n: usize) -> Vec<Real> {
        self.steps().take(n).map(|s| self.step_exact(s.index)).collect()
    }

    /// Unbounded lazy stream of steps in machine precision.
    pub fn steps(&self) -> ScheduleIter<'_> {
        ScheduleIter { schedule: self, index: 0, stage: 0, offset: 0 }
    }

    pub fn summary(&self) -> ScheduleSummary {
        let prec = Precision::new(self.eta.prec()).unwrap_or_default();
        ScheduleSummary {
            eta: to_decimal(&self.eta),
            delta_source: self.delta_source.name().to_string(),
            stages: self
                .stages
                .iter()
                .map(|s| StageSummary {
                    k: s.k,
                    length: s.pattern.len(),
                    reps: s.reps.to_string(),
                    start: self.stage_starts[s.k as usize].to_string(),
                    delta_next: to_decimal(&self.delta_source.delta(prec, s.k + 1)),
                    scaled_sum: to_decimal(&s.pattern.sum_h),
                })
                .collect(),
            end: self.stage_starts.last().unwrap().to_string(),
        }
    }
}

pub struct ScheduleIter<'a> {
    schedule: &'a Schedule,
    index: u128,
    stage: usize,
    offset: usize,
}

impl Iterator for ScheduleIter<'_> {
    type Item = ScheduledStep;

    fn next(&mut self) -> Option<ScheduledStep> {
        let stages = &self.schedule.stages;
        while self.stage + 1 < stages.len()
            && self.index >= self.schedule.stage_starts[self.stage + 1]
        {
            self.stage += 1;
            self.offset = 0;
        }
        let st = &stages[self.stage];
        let len = st.steps_f64.len();
        let out = ScheduledStep {
            index: self.index,
            k: st.k,
            offset: self.offset,
            closes_pattern: self.offset + 1 == len,
            h: st.steps_f64[self.offset],
        };
        self.index += 1;
        self.offset = (self.offset + 1) % len;
        Some(out)
    }
}

/// JSON-friendly view of a schedule; integers and reals as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub eta: String,
    pub delta_source: String,
    pub stages: Vec<StageSummary>,
    pub end: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub k: u32,
    pub length: usize,
    pub reps: String,
    pub start: String,
    pub delta_next: String,
    pub scaled_sum: String,
}
