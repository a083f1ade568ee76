//! Command-line definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vio_geom::io::Layout;

const AFTER_HELP: &str = "\
Configuration layers: built-in defaults, then <dataset>/config.toml, then
--config FILE; later layers override earlier ones key by key.
Every numeric default lives in the configuration; `viogeom config echo` prints
the resolved values.

Environment: each flag can also be set through VIOGEOM_<FLAG>, for example
VIOGEOM_CONFIG, VIOGEOM_DATASET, VIOGEOM_LAYOUT, VIOGEOM_OUT, VIOGEOM_LABELS,
VIOGEOM_SEED and VIOGEOM_WORKERS. Flags given on the command line win.

Output: human-readable notes go to stderr; a key=value summary goes to stdout
and to <out>/<command>_summary.txt when the command has an output directory.

Exit codes: 0 ok, 1 usage error, 2 unreadable or malformed input or
configuration, 3 numeric failure or failure fraction above
pipeline.max_failure_fraction.";

#[derive(Debug, Parser)]
#[command(name = "viogeom", version, about = "Stereo-inertial geometry toolkit", after_help = AFTER_HELP)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "VIOGEOM_CONFIG")]
    pub config: Option<PathBuf>,

    /// Replaces every seed in the configuration.
    #[arg(long, global = true, env = "VIOGEOM_SEED")]
    pub seed: Option<u64>,

    /// Worker threads; results do not depend on it. Defaults to one per
    /// core.
    #[arg(long, global = true, env = "VIOGEOM_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Kitti,
    Euroc,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Kitti => Layout::Kitti,
            LayoutArg::Euroc => Layout::Euroc,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct DatasetArgs {
    /// Dataset root.
    #[arg(long, env = "VIOGEOM_DATASET")]
    pub dataset: PathBuf,

    /// On-disk layout; detected from the directory structure when omitted.
    #[arg(long, value_enum, env = "VIOGEOM_LAYOUT")]
    pub layout: Option<LayoutArg>,
}

#[derive(Clone, Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "VIOGEOM_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct LabelArgs {
    /// Directory holding labels from earlier stages; defaults to --out.
    #[arg(long, env = "VIOGEOM_LABELS")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a synthetic dataset from the [synth] configuration.
    Synth {
        #[command(flatten)]
        out: OutArgs,
        /// Overrides synth.layout.
        #[arg(long, value_enum, env = "VIOGEOM_LAYOUT")]
        layout: Option<LayoutArg>,
    },
    /// Stereo ICP relative poses and 3D/2D flow labels per frame pair.
    Supervise {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// IMU relative poses and covariances per camera interval.
    Preintegrate {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        labels: LabelArgs,
        /// Bias timeline to preintegrate with; zero bias when omitted.
        #[arg(long)]
        bias: Option<PathBuf>,
    },
    /// Windowed bias update against stereo relative poses.
    UpdateBias {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Fused trajectory from stereo, bias-corrected IMU and held motion.
    Integrate {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// t_rel, r_rel and ATE of an estimate against ground truth.
    Eval {
        /// Estimated trajectory (timestamped poses, or KITTI poses with --times).
        #[arg(long)]
        est: PathBuf,
        /// Ground-truth trajectory, same formats.
        #[arg(long)]
        gt: PathBuf,
        /// KITTI times.txt used for files without timestamps.
        #[arg(long)]
        times: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-emit a dataset with the [degradation] conditions applied.
    Degrade {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Endpoint error between two .flo files.
    FlowCompare {
        a: PathBuf,
        b: PathBuf,
        /// Writes the summary here as well.
        #[arg(long, env = "VIOGEOM_OUT")]
        out: Option<PathBuf>,
    },
    /// supervise, preintegrate, update-bias, integrate and eval in one run.
    Pipeline {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the fully resolved configuration as TOML.
    Echo {
        /// Resolve against this dataset's config.toml.
        #[arg(long, env = "VIOGEOM_DATASET")]
        dataset: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Supervise { .. } => "supervise",
            Command::Preintegrate { .. } => "preintegrate",
            Command::UpdateBias { .. } => "update-bias",
            Command::Integrate { .. } => "integrate",
            Command::Eval { .. } => "eval",
            Command::Degrade { .. } => "degrade",
            Command::FlowCompare { .. } => "flow-compare",
            Command::Pipeline { .. } => "pipeline",
            Command::Config { .. } => "config",
        }
    }

    /// Directory that receives the summary file, if any.
    pub fn out_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::Synth { out, .. }
            | Command::Supervise { out, .. }
            | Command::Preintegrate { out, .. }
            | Command::UpdateBias { out, .. }
            | Command::Integrate { out, .. }
            | Command::Eval { out, .. }
            | Command::Degrade { out, .. }
            | Command::Pipeline { out, .. } => Some(&out.out),
            Command::FlowCompare { out, .. } => out.as_ref(),
            Command::Config { .. } => None,
        }
    }

    /// Dataset root used for configuration lookup.
    pub fn dataset(&self) -> Option<&PathBuf> {
        match self {
            Command::Supervise { dataset, .. }
            | Command::Preintegrate { dataset, .. }
            | Command::UpdateBias { dataset, .. }
            | Command::Integrate { dataset, .. }
            | Command::Degrade { dataset, .. }
            | Command::Pipeline { dataset, .. } => Some(&dataset.dataset),
            Command::Config {
                action: ConfigAction::Echo { dataset },
            } => dataset.as_ref(),
            _ => None,
        }
    }
}
