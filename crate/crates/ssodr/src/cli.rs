//! Command-line front end: one subcommand per stage plus the full loop.

use crate::config::{PipelineConfig, SEED_ENV};
use crate::error::{AppError, Result, StageContext};
use crate::formats::{self, Report};
use crate::pipeline::{self, OutputDir, Part};
use clap::{Args, Parser, Subcommand};
use ssodr_core::eval::mean_average_precision;
use ssodr_core::synth::generate;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "ssodr", version, about = "Self-supervised object detection from weakly labeled region proposals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed; wins over the config file and the SSODR_SEED variable.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".", global = true)]
    pub out: PathBuf,
    /// Overwrite outputs written under a different config.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct Input {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Frames to work on.
    #[arg(long, value_enum)]
    pub split: Option<Part>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a planted object cluster.
    GenSynth {
        #[command(flatten)]
        common: Common,
    },
    /// Initialize (or continue) and refine the clustering.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        /// Previous cluster state to refine further.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Rank clusters by potential score.
    Score {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        state: PathBuf,
    },
    /// Distill positives and hard negatives from the top clusters.
    Mine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        scorecard: PathBuf,
    },
    /// Train the detector on a mined set, warm-starting from a saved model.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        scorecard: PathBuf,
        #[arg(long)]
        mined: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Epochs to run; defaults to the length of the cycle the model is at.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score every region and keep the NMS survivors.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        model: PathBuf,
    },
    /// Average precision of detections, or mAP over several reports.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<Part>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, conflicts_with = "model")]
        detections: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Reports to average into mAP instead of evaluating.
        #[arg(long, num_args = 1.., conflicts_with_all = ["dataset", "gt", "detections", "model"])]
        combine: Vec<PathBuf>,
    },
    /// Nearest mined regions to the top cluster's centroid.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        scorecard: PathBuf,
        #[arg(long)]
        mined: PathBuf,
    },
    /// The whole loop: all cycles, then detection, evaluation and retrieval.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<(PipelineConfig, OutputDir)> {
        let env = std::env::var(SEED_ENV).ok();
        let cfg = PipelineConfig::load_with_seed(self.config.as_deref(), &self.overrides, self.seed, env.as_deref())?;
        let out = OutputDir::new(&self.out, &cfg, self.force);
        Ok((cfg, out))
    }
}

impl Input {
    fn load(&self, cfg: &PipelineConfig, default: Part) -> Result<ssodr_core::Dataset> {
        let ds = formats::read_dataset(&self.dataset)?;
        pipeline::select(&ds, cfg, self.split.unwrap_or(default))
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn print_report(r: &Report) {
    for (t, ap) in &r.ap_by_threshold {
        println!("AP@{} = {:.4}", t, ap);
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { common } => {
            let (cfg, out) = common.load()?;
            let synth = generate(&cfg.synth_config()).stage("synthgen", None)?;
            let paths = [out.path(pipeline::DATASET), out.path(pipeline::GROUND_TRUTH), out.path(pipeline::PLANT)];
            for p in &paths {
                out.guard(p)?;
            }
            formats::write_dataset(&synth.dataset, &paths[0], out.digest())?;
            formats::write_groundtruth(&synth.ground_truth, &paths[1], out.digest())?;
            formats::write_plant(&synth.plant, &paths[2], out.digest())?;
            println!(
                "{} frames, {} regions, {} planted object regions",
                synth.dataset.frames().len(),
                synth.dataset.n_regions(),
                synth.plant.object_region_ids.len()
            );
            paths.iter().for_each(|p| wrote(p));
        }
        Command::Cluster { common, input, state } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Train)?;
            let prev = state.as_deref().map(formats::read_state).transpose()?;
            let s = pipeline::cluster_step(&ds, prev, &cfg, None)?;
            let path = out.path(pipeline::STATE);
            out.write_state(&path, &s)?;
            println!("{} clusters, {} empty, {} refinement epochs", s.k, s.empty_clusters().len(), s.epoch);
            wrote(&path);
        }
        Command::Score { common, input, state } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Train)?;
            let card = pipeline::score_step(&ds, &formats::read_state(&state)?, &cfg, None)?;
            println!("{:>4} {:>6} {:>7} {:>9} {:>4} {:>9}", "k", "count", "P", "V", "U", "S");
            for k in card.ranking() {
                let c = &card.clusters[k];
                println!(
                    "{:>4} {:>6} {:>7.4} {:>9.4} {:>4} {:>9.6}",
                    k, c.stats.count, c.stats.positive_ratio, c.stats.variance, c.stats.unique_videos, c.score
                );
            }
            let path = out.path(pipeline::SCORECARD);
            out.write_scorecard(&path, &card)?;
            wrote(&path);
        }
        Command::Mine { common, input, state, scorecard } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Train)?;
            let s = formats::read_state(&state)?;
            let card = formats::read_scorecard(&scorecard)?;
            let mined = pipeline::mine_step(&ds, &s, &card, &cfg, None)?;
            println!("{} positives, {} hard negatives", mined.positives.len(), mined.hard_negatives.len());
            let path = out.path(pipeline::MINED);
            out.write_mined(&path, &mined)?;
            wrote(&path);
        }
        Command::Train { common, input, scorecard, mined, model, epochs } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Train)?;
            let card = formats::read_scorecard(&scorecard)?;
            let mined = formats::read_mined(&mined)?;
            let prev = model.as_deref().map(formats::read_model).transpose()?;
            let start = prev.as_ref().map_or(0, |p| p.global_epoch);
            let hyper = cfg.train_hyper();
            let epochs = match epochs {
                Some(e) => e,
                None => pipeline::cycle_at(&hyper, start).map(|c| hyper.cycle_epochs(c)).ok_or_else(|| {
                    AppError::Config(format!("model at epoch {} is not at the start of a cycle; pass --epochs", start))
                })?,
            };
            let p = pipeline::train_step(&ds, &mined, &card, prev, &cfg, epochs, None)?;
            println!("trained epochs {}..{}", start, p.global_epoch);
            let path = out.path(pipeline::MODEL);
            out.write_model(&path, &p)?;
            wrote(&path);
        }
        Command::Detect { common, input, model } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Test)?;
            let dets = pipeline::detect_step(&formats::read_model(&model)?, &ds, &cfg)?;
            println!("{} detections over {} frames", dets.len(), ds.frames().len());
            let path = out.path(pipeline::DETECTIONS);
            out.write_detections(&path, &dets)?;
            wrote(&path);
        }
        Command::Eval { common, dataset, split, gt, detections, model, combine } => {
            let (cfg, out) = common.load()?;
            if !combine.is_empty() {
                return combine_reports(&combine);
            }
            let missing = |f: &str| AppError::Config(format!("eval needs --{}", f));
            let input = Input { dataset: dataset.ok_or_else(|| missing("dataset"))?, split };
            let ds = input.load(&cfg, Part::Test)?;
            let gt = formats::read_groundtruth(&gt.ok_or_else(|| missing("gt"))?)?;
            let dets = match (detections, model) {
                (Some(d), _) => formats::read_detections(&d)?,
                (None, Some(m)) => pipeline::detect_step(&formats::read_model(&m)?, &ds, &cfg)?,
                (None, None) => return Err(missing("detections or --model")),
            };
            let eval = pipeline::eval_step(&ds, &gt, &dets, &cfg)?;
            let report = Report::new(&eval, cfg.seed, &out.digest);
            print_report(&report);
            let path = out.path(pipeline::REPORT);
            out.write_report(&path, &report)?;
            wrote(&path);
        }
        Command::Retrieve { common, input, state, scorecard, mined } => {
            let (cfg, out) = common.load()?;
            let ds = input.load(&cfg, Part::Train)?;
            let r = pipeline::retrieve_step(
                &ds,
                &formats::read_state(&state)?,
                &formats::read_scorecard(&scorecard)?,
                &formats::read_mined(&mined)?,
                &cfg,
            )?;
            println!("cluster {}", r.cluster);
            for x in &r.regions {
                let tag = if x.relaxed { " (same video)" } else { "" };
                println!("  region {} video {} distance {:.4}{}", x.region_id, x.video_id, x.distance, tag);
            }
            let path = out.path(pipeline::RETRIEVAL);
            out.write_retrieval(&path, &r)?;
            wrote(&path);
        }
        Command::Run { common, dataset, gt } => {
            let (cfg, out) = common.load()?;
            let ds = formats::read_dataset(&dataset)?;
            let gt = gt.as_deref().map(formats::read_groundtruth).transpose()?;
            let run = pipeline::run_pipeline(&cfg, &ds, gt.as_ref(), Some(&out), |c| {
                println!(
                    "cycle {}: top cluster {} (S = {:.4}), {} positives, {} hard negatives, epoch {}",
                    c.cycle, c.top_cluster, c.top_score, c.positives, c.hard_negatives, c.global_epoch
                );
            })?;
            print_report(&run.report);
            println!("outputs in {}", out.dir.display());
        }
    }
    Ok(())
}

fn combine_reports(paths: &[PathBuf]) -> Result<()> {
    let mut by_threshold: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in paths {
        let r = formats::read_report(p)?;
        for (t, ap) in r.ap_by_threshold {
            by_threshold.entry(t).or_default().push(ap);
        }
    }
    for (t, aps) in &by_threshold {
        if aps.len() != paths.len() {
            return Err(AppError::Config(format!("threshold {} is missing from some reports", t)));
        }
        let m = mean_average_precision(aps).stage("evaluation", None)?;
        println!("mAP@{} = {:.4} over {} reports", t, m, aps.len());
    }
    Ok(())
}
