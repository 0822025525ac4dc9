//! Flag definitions and config-file overlay.
//!
//! Every subcommand accepts `--config <path>`; the document's keys are the
//! long flag names and its values override the flags. Unknown keys are
//! rejected.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "ifslab",
    version,
    about = "Simulation and verification laboratory for iterated function systems \
             of affine expanding/contracting interval maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Derived data of a system: probabilities, breakpoints, Lyapunov exponent.
    SystemInfo(SystemInfoArgs),
    /// Iterate one or more starts under a word or a seeded symbol stream.
    Orbit(OrbitArgs),
    /// Exact transfer-sum stationarity check on a grid.
    TransferCheck(TransferArgs),
    /// Round-trip and projection checks for the invertible cube map.
    GammaCheck(GammaArgs),
    /// Exhaustive endpoint distribution over a two-letter word's fiber.
    Fiber(FiberArgs),
    /// Base-kappa interval containing the image of the unit interval.
    Strip(StripArgs),
    /// Simulate a two-step line walk.
    Walk(WalkArgs),
    /// First-passage and stopping-time statistics.
    Stopping(StoppingArgs),
    /// Coefficient sequence of the diagonal-square stationary measure.
    Stationary(StationaryArgs),
    /// Roots of the characteristic polynomial with unit-circle counts.
    Roots(RootsArgs),
    /// Mass of the diagonal strip under the analytic stationary measure.
    DeltaMass(DeltaMassArgs),
    /// Seeded Monte Carlo campaigns.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Run the acceptance criteria and exit nonzero on any failure.
    VerifyAll(VerifyArgs),
}

#[derive(Subcommand)]
pub enum ExperimentCommand {
    /// Pair-distance contraction at negative Lyapunov exponent.
    Sync(SyncArgs),
    /// Close-fraction and excursion statistics at zero Lyapunov exponent.
    Intermit(IntermitArgs),
    /// Close-time fraction scaling at positive Lyapunov exponent.
    Diverge(DivergeArgs),
    /// Binned orbit occupation against Lebesgue measure.
    Equi(EquiArgs),
    /// Two-point occupation histogram on a square mesh.
    Hist2d(Hist2dArgs),
}

/// Overlay of an optional config document onto parsed flags.
pub trait Overlay: Sized {
    fn overlay(self, over: Self) -> Self;
    fn config_path(&self) -> Option<&PathBuf>;
}

macro_rules! overlayable {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Overlay for $t {
            fn overlay(mut self, over: Self) -> Self {
                $( if over.$f.is_some() { self.$f = over.$f; } )*
                self
            }
            fn config_path(&self) -> Option<&PathBuf> {
                self.config.as_ref()
            }
        }
    };
}

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct SystemInfoArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(SystemInfoArgs { m, n, p0, out, format });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Fixed symbol word, digits in 0..=M (e.g. "3020020").
    #[arg(long)]
    pub word: Option<String>,
    /// Number of seeded random symbols when no word is given.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, env = "IFSLAB_SEED")]
    pub seed: Option<u64>,
    /// Comma-separated starting points in [0, 1).
    #[arg(long)]
    pub starts: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(OrbitArgs { m, n, p0, word, steps, seed, starts, out, format });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct TransferArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Grid points for the check.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(TransferArgs { m, n, p0, grid });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct GammaArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub points: Option<u64>,
    #[arg(long, env = "IFSLAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(GammaArgs { m, n, p0, points, seed });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct FiberArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Two-letter word over {0, 1} (e.g. "10110").
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(FiberArgs { m, n, p0, eta, out, format });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct StripArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    /// Unused by the strip arithmetic; defaults to 0.5.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Symbol word, digits in 0..=M.
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(StripArgs { m, n, p0, word });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, default)]
pub struct WalkArgs {
    #[arg(long)]
    pub step_down: Option<f64>,
    #[arg(long)]
    pub step_up: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub z0: Option<f64>,
    #[arg(long, env = "IFSLAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(WalkArgs { step_down, step_up, p0, steps, z0, seed, out, format });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingArgs {
    /// One of: passage, wald, martingale, escape, s-timedep, w, v.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub step_down: Option<f64>,
    #[arg(long)]
    pub step_up: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Step scale for the exactly-zero-drift construction (kind s-timedep).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub z0: Option<f64>,
    /// Upper barrier (kinds passage and escape).
    #[arg(long)]
    pub upper_k: Option<f64>,
    /// Strip width parameter (kinds s-timedep and w).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Tracked point (kind w).
    #[arg(long)]
    pub x_j: Option<f64>,
    /// Contraction word, digits in 1..=M (kind v).
    #[arg(long)]
    pub zeta: Option<String>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Censoring cap on the step count.
    #[arg(long)]
    pub cap: Option<u64>,
    #[arg(long, env = "IFSLAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(StoppingArgs {
    kind, step_down, step_up, p0, scale, z0, upper_k, eps, x_j, zeta, m, n, trials, cap, seed,
    out, format,
});

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Truncation level H (defaults from the decay ratio).
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(StationaryArgs { m, n, p0, truncation, out, format });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct RootsArgs {
    #[arg(long)]
    pub p0: Option<f64>,
    /// Expansion exponent k (alternative to --M/--N).
    #[arg(long)]
    pub k: Option<u32>,
    /// Contraction exponent l (alternative to --M/--N).
    #[arg(long)]
    pub l: Option<u32>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(RootsArgs { p0, k, l, m, n, out });

#[derive(Args, Deserialize, Clone, Default, Debug)]
#[serde(deny_unknown_fields, default)]
pub struct DeltaMassArgs {
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Explicit comma-separated strip widths.
    #[arg(long)]
    pub eps: Option<String>,
    /// Alternatively, evaluate at kappa^-1 .. kappa^-levels.
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
overlayable!(DeltaMassArgs { m, n, p0, eps, levels, out, format });

macro_rules! experiment_args {
    ($name:ident { $($extra:ident : $ty:ty),* $(,)? }) => {
        #[derive(Args, Deserialize, Clone, Default, Debug)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            #[arg(long = "M")]
            #[serde(rename = "M")]
            pub m: Option<u32>,
            #[arg(long = "N")]
            #[serde(rename = "N")]
            pub n: Option<u32>,
            #[arg(long)]
            pub p0: Option<f64>,
            #[arg(long)]
            pub steps: Option<u64>,
            #[arg(long)]
            pub trials: Option<u64>,
            #[arg(long, env = "IFSLAB_SEED")]
            pub seed: Option<u64>,
            $(
                #[arg(long)]
                pub $extra: Option<$ty>,
            )*
            #[arg(long)]
            pub out: Option<PathBuf>,
            #[arg(long)]
            pub format: Option<String>,
            #[arg(long)]
            #[serde(skip)]
            pub config: Option<PathBuf>,
        }
        overlayable!($name { m, n, p0, steps, trials, seed, $($extra,)* out, format });
    };
}

experiment_args!(SyncArgs {});
experiment_args!(IntermitArgs { eps: f64, beta: f64 });
experiment_args!(DivergeArgs { eps: String, levels: u32 });
experiment_args!(EquiArgs { bins: usize });
experiment_args!(Hist2dArgs { grid_res: usize });

#[derive(Args, Clone, Default, Debug)]
pub struct VerifyArgs {
    /// Comma-separated criterion ids to run (default: all).
    #[arg(long)]
    pub ids: Option<String>,
}
