use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use visdet_core::barrier_distance::MbdConfig;
use visdet_core::box_fusion::{FusionConfig, ScoreMode};
use visdet_core::label_assignment::SamplingConfig;
use visdet_core::losses_metrics::EvalConfig;
use visdet_core::pipeline_io::{self as pio, json};
use visdet_core::visibility_grid::VisibilityThreshold;

#[derive(Parser)]
#[command(name = "visdet", version, about = "Visibility-guided detection label pipelines")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MbdArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed_step: usize,
    /// Forward/backward raster-scan pass pairs.
    #[arg(long, default_value_t = 3)]
    passes: usize,
}

impl MbdArgs {
    fn config(&self) -> MbdConfig {
        MbdConfig { alpha: self.alpha, seed_step: self.seed_step, passes: self.passes }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreModeArg {
    Geomean,
    Seed,
}

#[derive(Subcommand)]
enum Command {
    /// Per-annotation visibility distance maps as 16-bit PGM.
    Visibility {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mbd: MbdArgs,
    },
    /// Sparse label maps as JSON.
    Assign {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        strides: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[command(flatten)]
        mbd: MbdArgs,
    },
    /// Confidence-weighted fusion of raw predictions.
    Fuse {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        score_thr: f64,
        #[arg(long, default_value_t = 0.6)]
        cluster_iou: f64,
        #[arg(long, value_enum, default_value_t = ScoreModeArg::Geomean)]
        score_mode: ScoreModeArg,
    },
    /// COCO-style AP report on stdout.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long, default_value = "0.50:0.95:0.05")]
        iou_thrs: String,
    },
    /// Exact barrier map of a small image.
    MbdOracle {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed_step: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Visibility { images, annotations, out, mbd } => {
            let manifest = pio::load_manifest(&annotations)?.manifest;
            let res = pio::run_visibility(&images, &manifest, &out, &mbd.config(), threads)?;
            log::info!("wrote {} maps, skipped {}", res.written.len(), res.skipped.len());
        }
        Command::Assign { images, annotations, out, k, threshold, strides, rng_seed, mbd } => {
            let manifest = pio::load_manifest(&annotations)?.manifest;
            let cfg = SamplingConfig {
                k,
                threshold: VisibilityThreshold::new(threshold)?,
                rng_seed,
                strides,
            };
            let maps = pio::run_assign(&images, &manifest, &cfg, &mbd.config(), threads)?;
            write_text(&out, &pio::label_maps_to_json(&maps))?;
        }
        Command::Fuse { predictions, out, score_thr, cluster_iou, score_mode } => {
            let preds = pio::load_predictions(&predictions)?;
            let cfg = FusionConfig {
                score_threshold: score_thr,
                cluster_iou,
                score_mode: match score_mode {
                    ScoreModeArg::Geomean => ScoreMode::Geomean,
                    ScoreModeArg::Seed => ScoreMode::Seed,
                },
            };
            let dets = pio::run_fuse(&preds, &cfg, threads)?;
            write_text(&out, &json::to_string(&dets))?;
        }
        Command::Eval { detections, annotations, iou_thrs } => {
            let manifest = pio::load_manifest(&annotations)?.manifest;
            let dets = pio::load_detections(&detections)?;
            let cfg = EvalConfig::new(pio::parse_iou_range(&iou_thrs)?)?;
            let report = pio::run_eval(&dets, &manifest, &cfg)?;
            print!("{}", json::to_string(&report));
        }
        Command::MbdOracle { image, seed_step, out } => {
            pio::run_mbd_oracle(&image, seed_step, &out)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
