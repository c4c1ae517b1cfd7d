use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nprecision: LONGSTEP_PRECISION or --precision bits for every stage; unset means 128 bits for k <= 8 and 256 bits above",
    "\npsd tolerance: min eigenvalue >= -2^(-bits/2) * (1 + ||A||_inf) unless --psd-tol is given",
    "\nidentity tolerance: 1e-20 relative",
    "\ngradient descent: f64 iterates, relative gap slack 1e-12",
);

#[derive(Debug, Parser)]
#[command(name = "longstep", version, long_version = LONG_VERSION)]
#[command(about = "Build long-step schedules, verify their certificates and run gradient descent experiments")]
pub struct Cli {
    /// Working precision in bits (at least 64).
    #[arg(long, global = true, env = "LONGSTEP_PRECISION")]
    pub precision: Option<u32>,

    /// Worker threads for parallel verification; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the building-block pattern as JSON decimal strings.
    Pattern {
        #[arg(long)]
        k: KRange,
        /// Output file; ranges write one file per k with a _k<K> suffix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage lengths, repetition counts and boundaries of the full schedule.
    Schedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the certificate of every requested stage; exits 1 if any check fails.
    Certify {
        #[arg(long)]
        k: KRange,
        /// Also bisect Δ with this many iterations.
        #[arg(long)]
        bisect: Option<u32>,
        #[command(flatten)]
        tol: TolArgs,
        /// Skip the membership test at the conservative Δ.
        #[arg(long)]
        no_membership: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the largest Δ the fixed certificate family certifies for the halved pattern.
    Delta {
        #[arg(long)]
        k: KRange,
        #[arg(long, default_value_t = 40)]
        iterations: u32,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write scale * bisected Δ for k = 1.. as a Δ-override file.
        #[arg(long)]
        emit_override: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
    },
    /// Run gradient descent on the schedule and check the descent recurrence.
    ///
    /// Conservative Δ values make stage 2 start after more than 10^9 steps, so
    /// without overrides the schedule stops advancing at stage 1.
    Run {
        #[arg(long)]
        objective: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        budget: usize,
        /// Every coordinate of the starting point.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        x0: f64,
        /// Per-iteration CSV; a .gz extension compresses it.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One pass of a pattern on the three one-dimensional adversarial objectives.
    Adversary {
        /// Comma-separated steps.
        #[arg(long, value_delimiter = ',', required_unless_present = "k", conflicts_with = "k")]
        steps: Option<Vec<f64>>,
        /// Use the building block of this stage instead.
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a k-range in parallel and tabulate the Δ values as markdown.
    Sweep {
        #[arg(long)]
        k: KRange,
        #[arg(long, default_value_t = 40)]
        bisect: u32,
        #[command(flatten)]
        tol: TolArgs,
        /// Markdown summary; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-stage JSON reports.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value = "0.5")]
    pub eta: String,
    /// Last stage; later steps repeat it. Defaults to 1, or to the number of
    /// overrides minus one.
    #[arg(long)]
    pub stages: Option<u32>,
    /// JSON array of Δ⁽¹⁾, Δ⁽²⁾, … as decimal strings or numbers.
    #[arg(long)]
    pub delta_override: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TolArgs {
    /// Absolute PSD tolerance replacing the default policy.
    #[arg(long)]
    pub psd_tol: Option<String>,
}

/// A single stage or an inclusive range a..b.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KRange {
    pub lo: u32,
    pub hi: u32,
}

impl KRange {
    pub fn iter(self) -> impl Iterator<Item = u32> {
        self.lo..=self.hi
    }

    pub fn is_range(self) -> bool {
        self.lo != self.hi
    }
}

impl std::str::FromStr for KRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("{t:?} is not a stage index"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
            None => {
                let k = num(s)?;
                (k, k)
            }
        };
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        if hi > 24 {
            return Err(format!("stage {hi} is beyond the supported 24"));
        }
        Ok(KRange { lo, hi })
    }
}
