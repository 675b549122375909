//! `colink`: check-in based social-link inference and defense evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use colink_core::baselines::BaselineModel;
use colink_core::defense::{levels_name, parse_levels, GeoLevel, Mechanism, SemLevel};
use colink_core::similarity::Measure;

#[derive(Debug, Parser)]
#[command(name = "colink", version, about = "Infer social links from check-ins and evaluate location obfuscation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed. Every stage derives its own substream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker cap. Training runs relaxed-parallel when this exceeds 1 and
    /// `--deterministic` is absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Force sequential, bitwise reproducible training.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub min_checkins: Option<u64>,
    #[arg(long)]
    pub min_distinct_locations: Option<usize>,
    #[arg(long)]
    pub percentile_low: Option<f64>,
    #[arg(long)]
    pub percentile_high: Option<f64>,
    /// Snap locations to a grid of this many degrees.
    #[arg(long)]
    pub grid_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_users: Option<usize>,
    #[arg(long)]
    pub n_locations: Option<usize>,
    #[arg(long)]
    pub n_communities: Option<usize>,
    #[arg(long)]
    pub checkins_per_user: Option<usize>,
    #[arg(long)]
    pub intra_friend_prob: Option<f64>,
    #[arg(long)]
    pub noise_prob: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct WalkArgs {
    /// Traces started from every user (t_w).
    #[arg(long)]
    pub walk_times: Option<usize>,
    /// Nodes per trace (l_w).
    #[arg(long)]
    pub walk_length: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per positive pair.
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub unigram_power: Option<f64>,
    /// Similarity measure used to score pairs.
    #[arg(long)]
    pub measure: Option<Measure>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DefenseArgs {
    /// hiding, replacement or generalization.
    #[arg(long)]
    pub mechanism: Option<Mechanism>,
    /// Fraction of check-ins obfuscated by hiding or replacement.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Random-walk moves for replacement; must be odd.
    #[arg(long)]
    pub walk_steps: Option<usize>,
    /// Generalization level: lg-ls, lg-hs, hg-ls or hg-hs.
    #[arg(long)]
    pub levels: Option<Levels>,
    /// `location_id,checkin_count` file used by the recovery adversary.
    #[arg(long)]
    pub popularity: Option<PathBuf>,
}

/// Generalization level pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Levels(pub GeoLevel, pub SemLevel);

impl FromStr for Levels {
    type Err = colink_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_levels(s).map(|(g, m)| Levels(g, m))
    }
}

impl std::fmt::Display for Levels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(levels_name(self.0, self.1))
    }
}

/// `all` or a comma-separated list of baseline names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineList(pub Vec<BaselineModel>);

impl FromStr for BaselineList {
    type Err = colink_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" => Ok(BaselineList(BaselineModel::ALL.to_vec())),
            "" | "none" => Ok(BaselineList(Vec::new())),
            list => list.split(',').map(|m| m.trim().parse()).collect::<Result<_, _>>().map(BaselineList),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw inputs and write them back in canonical form.
    Ingest {
        #[arg(long)]
        checkins: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Filter users and optionally snap locations to a grid.
    Preprocess {
        #[arg(long)]
        checkins: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Also write the friendships restricted to the kept users.
        #[arg(long)]
        social: Option<PathBuf>,
        #[command(flatten)]
        pre: PreprocessArgs,
    },
    /// Generate a synthetic community dataset.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Generate random-walk traces from the user-location graph.
    Walk {
        #[arg(long)]
        checkins: Option<PathBuf>,
        #[command(flatten)]
        walk: WalkArgs,
    },
    /// Learn node embeddings from a walk dump.
    Train {
        #[arg(long)]
        walks: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Sample labeled pairs and score them with embeddings or a baseline.
    Score {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        checkins: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long)]
        measure: Option<Measure>,
        /// Score with this baseline instead of embeddings.
        #[arg(long)]
        model: Option<BaselineModel>,
    },
    /// AUC and ROC of a scores file.
    Evaluate {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Obfuscate a check-in dataset.
    Defend {
        #[arg(long)]
        checkins: Option<PathBuf>,
        #[command(flatten)]
        defense: DefenseArgs,
    },
    /// Per-user utility of an obfuscated dataset.
    Utility {
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long)]
        obfuscated: Option<PathBuf>,
    },
    /// Run a grid of experiments and write one report row per configuration.
    Sweep {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        defense: DefenseArgs,
        #[command(flatten)]
        grid: SweepArgs,
    },
    /// Full pipeline: preprocess, defend, walk, train, score, evaluate.
    Run {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        defense: DefenseArgs,
    },
}

/// Dataset inputs. Without `--checkins` the synthetic generator is used.
#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub checkins: Option<PathBuf>,
    #[arg(long)]
    pub social: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub grid_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub min_checkins_list: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub rho_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub levels_list: Option<Vec<Levels>>,
    /// Baselines to run alongside the attack: `all` or a list.
    #[arg(long)]
    pub baselines: Option<BaselineList>,
    /// Evaluate only pairs sharing exactly k locations, for k = 0..=this.
    #[arg(long)]
    pub common_locations: Option<usize>,
    /// Experiment name prefix in the report.
    #[arg(long)]
    pub name: Option<String>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::dispatch(cli) {
        eprintln!("colink: error: {e:#}");
        std::process::exit(1);
    }
}
