//! Stage functions shared by the subcommands, and the full multi-cycle loop.

use crate::config::PipelineConfig;
use crate::error::{AppError, Result, StageContext};
use crate::formats::{self, Report};
use ssodr_core::detector::{self, DetectorParams, Detection, MinedSampler, TrainHyper};
use ssodr_core::dsd::{mine_regions, MinedSet};
use ssodr_core::eval::{evaluate_detections, retrieve_top_n, EvalReport, Retrieval};
use ssodr_core::model::{split_frames, Dataset, FrameId, GroundTruth};
use ssodr_core::scoring::{cluster_stats, potential_score, Scorecard};
use ssodr_core::wdec::{refine, ClusterState};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

pub const DATASET: &str = "dataset.jsonl";
pub const GROUND_TRUTH: &str = "gt.jsonl";
pub const PLANT: &str = "plant.json";
pub const CONFIG: &str = "config.txt";
pub const STATE: &str = "state.json";
pub const SCORECARD: &str = "scorecard.jsonl";
pub const MINED: &str = "mined.jsonl";
pub const MODEL: &str = "model.json";
pub const DETECTIONS: &str = "detections.jsonl";
pub const REPORT: &str = "report.json";
pub const RETRIEVAL: &str = "retrieval.jsonl";

/// Which frames of a dataset a stage works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Test,
    All,
}

/// Restricts a dataset to one side of the configured split. An empty test
/// side (test fraction 0) falls back to every frame.
pub fn select(dataset: &Dataset, cfg: &PipelineConfig, part: Part) -> Result<Dataset> {
    if part == Part::All {
        return Ok(dataset.clone());
    }
    let split = split_frames(dataset, cfg.test_fraction, cfg.fold, cfg.seed).stage("split", None)?;
    let keep = match part {
        Part::Train => split.train,
        _ if split.test.is_empty() => return Ok(dataset.clone()),
        _ => split.test,
    };
    dataset.subset(&keep).stage("split", None)
}

fn frame_ids(dataset: &Dataset) -> BTreeSet<FrameId> {
    dataset.frames().iter().map(|f| f.frame_id).collect()
}

/// Refines `previous`, or a fresh k-means++ start when there is none.
pub fn cluster_step(
    dataset: &Dataset,
    previous: Option<ClusterState>,
    cfg: &PipelineConfig,
    cycle: Option<usize>,
) -> Result<ClusterState> {
    let state = match previous {
        Some(s) => s,
        None => ClusterState::initialize(dataset.embeddings(), cfg.clusters(), cfg.seed, cfg.refine_epochs)
            .stage("wdec", cycle)?,
    };
    refine(&state, dataset.embeddings(), &dataset.labels(), cfg.refine_params()).stage("wdec", cycle)
}

pub fn score_step(dataset: &Dataset, state: &ClusterState, cfg: &PipelineConfig, cycle: Option<usize>) -> Result<Scorecard> {
    let stats = cluster_stats(dataset, state).stage("cluster_scoring", cycle)?;
    potential_score(&stats, cfg.tau).stage("cluster_scoring", cycle)
}

pub fn mine_step(
    dataset: &Dataset,
    state: &ClusterState,
    card: &Scorecard,
    cfg: &PipelineConfig,
    cycle: Option<usize>,
) -> Result<MinedSet> {
    mine_regions(dataset, state, card, cfg.mining_params()).stage("dsd_miner", cycle)
}

/// Warm-starts from `previous` (or a fresh network) and trains for `epochs` epochs.
pub fn train_step(
    dataset: &Dataset,
    mined: &MinedSet,
    card: &Scorecard,
    previous: Option<DetectorParams>,
    cfg: &PipelineConfig,
    epochs: usize,
    cycle: Option<usize>,
) -> Result<DetectorParams> {
    let params = match previous {
        Some(p) => p,
        None => DetectorParams::new(dataset.dim(), &cfg.hidden, cfg.seed).stage("detector", cycle)?,
    };
    let sampler = MinedSampler::new(dataset, mined, card).stage("detector", cycle)?;
    detector::train(params, &sampler, &cfg.train_hyper(), epochs).stage("detector", cycle)
}

/// The outer cycle that starts at `global_epoch`, if the epoch lies on a cycle boundary.
pub fn cycle_at(hyper: &TrainHyper, global_epoch: usize) -> Option<usize> {
    let mut start = 0;
    for c in 0..hyper.cycles {
        if start == global_epoch {
            return Some(c);
        }
        start += hyper.cycle_epochs(c);
    }
    None
}

pub fn detect_step(params: &DetectorParams, dataset: &Dataset, cfg: &PipelineConfig) -> Result<Vec<Detection>> {
    detector::detect_all(&params.mlp, dataset, cfg.detect_options()).stage("detector", None)
}

/// Scores detections against the annotations of the frames in `dataset`.
pub fn eval_step(dataset: &Dataset, gt: &GroundTruth, dets: &[Detection], cfg: &PipelineConfig) -> Result<EvalReport> {
    let gt = gt.restrict(&frame_ids(dataset));
    evaluate_detections(dets, dataset, &gt, &cfg.iou_thresholds).stage("evaluation", None)
}

pub fn retrieve_step(
    dataset: &Dataset,
    state: &ClusterState,
    card: &Scorecard,
    mined: &MinedSet,
    cfg: &PipelineConfig,
) -> Result<Retrieval> {
    retrieve_top_n(dataset, state, card, mined, cfg.retrieve_n).stage("retrieval", None)
}

/// Writes artifacts into a directory, refusing to replace files written under another config.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub digest: String,
    pub force: bool,
}

impl OutputDir {
    pub fn new(dir: impl Into<PathBuf>, cfg: &PipelineConfig, force: bool) -> Self {
        OutputDir { dir: dir.into(), digest: cfg.digest(), force }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn cycle_path(&self, cycle: usize, name: &str) -> PathBuf {
        self.dir.join(format!("cycle_{}", cycle + 1)).join(name)
    }

    /// Errors if `path` exists and was not written under the current config.
    pub fn guard(&self, path: &Path) -> Result<()> {
        if self.force || !path.exists() {
            return Ok(());
        }
        match formats::recorded_digest(path) {
            Some(d) if d == self.digest => Ok(()),
            found => Err(AppError::DigestMismatch {
                path: path.to_path_buf(),
                found: found.unwrap_or_else(|| "none".into()),
                expected: self.digest.clone(),
            }),
        }
    }

    pub fn digest(&self) -> Option<&str> {
        Some(&self.digest)
    }

    pub fn write_config(&self, cfg: &PipelineConfig) -> Result<PathBuf> {
        let path = self.path(CONFIG);
        self.guard(&path)?;
        fs::create_dir_all(&self.dir).map_err(|e| AppError::io(&self.dir, e))?;
        let text = format!("# config_digest = {}\n{}", self.digest, cfg.to_text());
        fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_state(&self, path: &Path, s: &ClusterState) -> Result<()> {
        self.guard(path)?;
        formats::write_state(s, path, self.digest())
    }

    pub fn write_scorecard(&self, path: &Path, c: &Scorecard) -> Result<()> {
        self.guard(path)?;
        formats::write_scorecard(c, path, self.digest())
    }

    pub fn write_mined(&self, path: &Path, m: &MinedSet) -> Result<()> {
        self.guard(path)?;
        formats::write_mined(m, path, self.digest())
    }

    pub fn write_model(&self, path: &Path, p: &DetectorParams) -> Result<()> {
        self.guard(path)?;
        formats::write_model(p, path, self.digest())
    }

    pub fn write_detections(&self, path: &Path, d: &[Detection]) -> Result<()> {
        self.guard(path)?;
        formats::write_detections(d, path, self.digest())
    }

    pub fn write_report(&self, path: &Path, r: &Report) -> Result<()> {
        self.guard(path)?;
        formats::write_report(r, path)
    }

    pub fn write_retrieval(&self, path: &Path, r: &Retrieval) -> Result<()> {
        self.guard(path)?;
        formats::write_retrieval(r, path, self.digest())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    pub cycle: usize,
    pub top_cluster: usize,
    pub top_score: f64,
    pub positives: usize,
    pub hard_negatives: usize,
    pub global_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: ClusterState,
    pub scorecard: Scorecard,
    pub mined: MinedSet,
    pub model: DetectorParams,
    pub detections: Vec<Detection>,
    /// Present when annotations were supplied.
    pub eval: Option<EvalReport>,
    pub report: Report,
    pub retrieval: Retrieval,
    pub cycles: Vec<CycleSummary>,
}

/// The full loop: per cycle refine, score, mine and warm-started training on
/// the train split; then detection, evaluation and retrieval.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    dataset: &Dataset,
    gt: Option<&GroundTruth>,
    out: Option<&OutputDir>,
    mut on_cycle: impl FnMut(&CycleSummary),
) -> Result<RunOutput> {
    cfg.validate()?;
    if let Some(o) = out {
        o.write_config(cfg)?;
    }
    let train_ds = select(dataset, cfg, Part::Train)?;
    let test_ds = select(dataset, cfg, Part::Test)?;
    let hyper = cfg.train_hyper();

    let mut state = None;
    let mut model = None;
    let mut last = None;
    let mut cycles = Vec::with_capacity(cfg.cycles);
    for c in 0..cfg.cycles {
        let s = cluster_step(&train_ds, state.take(), cfg, Some(c + 1))?;
        let card = score_step(&train_ds, &s, cfg, Some(c + 1))?;
        let mined = mine_step(&train_ds, &s, &card, cfg, Some(c + 1))?;
        let p = train_step(&train_ds, &mined, &card, model.take(), cfg, hyper.cycle_epochs(c), Some(c + 1))?;
        if let Some(o) = out {
            o.write_state(&o.cycle_path(c, STATE), &s)?;
            o.write_scorecard(&o.cycle_path(c, SCORECARD), &card)?;
            o.write_mined(&o.cycle_path(c, MINED), &mined)?;
            o.write_model(&o.cycle_path(c, MODEL), &p)?;
        }
        let summary = CycleSummary {
            cycle: c + 1,
            top_cluster: card.top(),
            top_score: card.clusters[card.top()].score,
            positives: mined.positives.len(),
            hard_negatives: mined.hard_negatives.len(),
            global_epoch: p.global_epoch,
        };
        on_cycle(&summary);
        cycles.push(summary);
        state = Some(s);
        model = Some(p);
        last = Some((card, mined));
    }
    let (state, model) = (state.expect("at least one cycle"), model.expect("at least one cycle"));
    let (scorecard, mined) = last.expect("at least one cycle");

    let detections = detect_step(&model, &test_ds, cfg)?;
    let eval = gt.map(|g| eval_step(&test_ds, g, &detections, cfg)).transpose()?;
    let retrieval = retrieve_step(&train_ds, &state, &scorecard, &mined, cfg)?;
    let digest = cfg.digest();
    let report = match &eval {
        Some(e) => Report::new(e, cfg.seed, &digest),
        None => Report::new(
            &EvalReport {
                object_name: dataset.object_name().into(),
                ap_by_threshold: Vec::new(),
                n_frames: test_ds.frames().len(),
                n_gt: 0,
            },
            cfg.seed,
            &digest,
        ),
    };
    if let Some(o) = out {
        o.write_state(&o.path(STATE), &state)?;
        o.write_scorecard(&o.path(SCORECARD), &scorecard)?;
        o.write_mined(&o.path(MINED), &mined)?;
        o.write_model(&o.path(MODEL), &model)?;
        o.write_detections(&o.path(DETECTIONS), &detections)?;
        o.write_retrieval(&o.path(RETRIEVAL), &retrieval)?;
        o.write_report(&o.path(REPORT), &report)?;
    }
    Ok(RunOutput { state, scorecard, mined, model, detections, eval, report, retrieval, cycles })
}
