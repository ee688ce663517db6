//! Flat `key = value` pipeline configuration.

use crate::error::{AppError, Result};
use sha2::{Digest, Sha256};
use ssodr_core::detector::{DetectOptions, TrainHyper};
use ssodr_core::dsd::MiningParams;
use ssodr_core::synth::SynthConfig;
use ssodr_core::wdec::RefineParams;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

pub const SEED_ENV: &str = "SSODR_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Default,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub profile: Profile,
    /// Cluster count when set explicitly; otherwise the profile decides.
    pub k: Option<usize>,
    pub tau: f64,
    pub refine_epochs: usize,
    pub refine_step: f64,
    pub grad_clip: f64,
    pub cycles: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub dropout_keep: f64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub hidden: Vec<usize>,
    pub edge_iou: f64,
    pub top_m: usize,
    pub nms_iou: f64,
    pub score_threshold: f64,
    pub iou_thresholds: Vec<f64>,
    pub seed: u64,
    pub test_fraction: f64,
    pub fold: u64,
    pub retrieve_n: usize,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            profile: Profile::Default,
            k: None,
            tau: 50.0,
            refine_epochs: 5,
            refine_step: 1e-2,
            grad_clip: 10.0,
            cycles: 5,
            epochs: 35,
            lr: 1e-4,
            lr_decay: 0.6,
            lr_decay_every: 6,
            dropout_keep: 0.8,
            batch_size: 64,
            batches_per_epoch: 24,
            hidden: vec![1024, 1024],
            edge_iou: 0.4,
            top_m: 3,
            nms_iou: 0.3,
            score_threshold: 0.5,
            iou_thresholds: vec![0.5, 0.3],
            seed: 0,
            test_fraction: 0.2,
            fold: 0,
            retrieve_n: 3,
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AppError::Config(format!("bad value '{}' for key {}", value, key)))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let value = value.trim().trim_start_matches('[').trim_end_matches(']');
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: std::fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|v| format!("{:?}", v)).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Defaults, then the file (if any), then each `key=value` override in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Ok(Self::load_tracking_seed(path, overrides)?.0)
    }

    /// Like [`PipelineConfig::load`], then applies the seed flag and the seed environment variable.
    pub fn load_with_seed(
        path: Option<&Path>,
        overrides: &[String],
        seed_flag: Option<u64>,
        env: Option<&str>,
    ) -> Result<Self> {
        let (mut cfg, configured) = Self::load_tracking_seed(path, overrides)?;
        if let Some(seed) = resolve_seed(seed_flag, configured, env)? {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn load_tracking_seed(path: Option<&Path>, overrides: &[String]) -> Result<(Self, bool)> {
        let mut cfg = PipelineConfig::default();
        let mut seed_set = false;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            seed_set |= cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("override '{}' is not key=value", o)))?;
            cfg.set(k.trim(), v.trim())?;
            seed_set |= k.trim() == "seed";
        }
        cfg.validate()?;
        Ok((cfg, seed_set))
    }

    /// Applies config-file text; returns whether it set the seed.
    pub fn apply_text(&mut self, text: &str) -> Result<bool> {
        let mut seed_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
            seed_set |= k.trim() == "seed";
        }
        Ok(seed_set)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "profile" => {
                self.profile = match value {
                    "default" => Profile::Default,
                    "synthetic" => Profile::Synthetic,
                    _ => return Err(AppError::Config(format!("bad value '{}' for key profile", value))),
                }
            }
            "k" => self.k = Some(parse(key, value)?),
            "tau" => self.tau = parse(key, value)?,
            "refine_epochs" => self.refine_epochs = parse(key, value)?,
            "refine_step" => self.refine_step = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "cycles" => self.cycles = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, value)?,
            "dropout_keep" => self.dropout_keep = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "batches_per_epoch" => self.batches_per_epoch = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "edge_iou" => self.edge_iou = parse(key, value)?,
            "top_m" => self.top_m = parse(key, value)?,
            "nms_iou" => self.nms_iou = parse(key, value)?,
            "score_threshold" => self.score_threshold = parse(key, value)?,
            "iou_thresholds" => self.iou_thresholds = parse_list(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "fold" => self.fold = parse(key, value)?,
            "retrieve_n" => self.retrieve_n = parse(key, value)?,
            "synth.object_name" => s.object_name = value.to_string(),
            "synth.n_videos" => s.n_videos = parse(key, value)?,
            "synth.frames_per_video" => s.frames_per_video = parse(key, value)?,
            "synth.regions_per_frame" => s.regions_per_frame = parse(key, value)?,
            "synth.dim" => s.dim = parse(key, value)?,
            "synth.noise_level" => s.noise_level = parse(key, value)?,
            "synth.n_distractor_clusters" => s.n_distractor_clusters = parse(key, value)?,
            "synth.n_background_clusters" => s.n_background_clusters = parse(key, value)?,
            "synth.object_spread" => s.object_spread = parse(key, value)?,
            "synth.distractor_spread" => s.distractor_spread = parse(key, value)?,
            "synth.background_spread" => s.background_spread = parse(key, value)?,
            "synth.object_box_scale" => s.object_box_scale = parse(key, value)?,
            "synth.object_regions_per_frame" => s.object_regions_per_frame = parse(key, value)?,
            "synth.min_object_iou" => s.min_object_iou = parse(key, value)?,
            "synth.near_miss_fraction" => s.near_miss_fraction = parse(key, value)?,
            "synth.near_miss_blend" => s.near_miss_blend = parse(key, value)?,
            "synth.distractor_rate_positive" => s.distractor_rate_positive = parse(key, value)?,
            "synth.distractor_rate_negative" => s.distractor_rate_negative = parse(key, value)?,
            _ => return Err(AppError::Config(format!("unknown key {}", key))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(AppError::Config(m.to_string()));
        if self.clusters() < 2 {
            return fail("k must be at least 2");
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return fail("tau must be finite and non-negative");
        }
        if self.cycles == 0 {
            return fail("cycles must be at least 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden must list positive layer widths");
        }
        if self.iou_thresholds.is_empty() || self.iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return fail("iou_thresholds must be a non-empty list within [0, 1]");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return fail("test_fraction must lie in [0, 1)");
        }
        if self.top_m == 0 || self.retrieve_n == 0 {
            return fail("top_m and retrieve_n must be at least 1");
        }
        if !(self.refine_step > 0.0 && self.grad_clip > 0.0) {
            return fail("refine_step and grad_clip must be positive");
        }
        self.train_hyper().validate().map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn clusters(&self) -> usize {
        self.k.unwrap_or(match self.profile {
            Profile::Default => 50,
            Profile::Synthetic => 10,
        })
    }

    pub fn refine_params(&self) -> RefineParams {
        RefineParams { epochs: self.refine_epochs, step_size: self.refine_step, grad_clip: self.grad_clip }
    }

    pub fn mining_params(&self) -> MiningParams {
        MiningParams { edge_iou: self.edge_iou, top_m: self.top_m }
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions { nms_iou: self.nms_iou, score_threshold: self.score_threshold }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            learning_rate: self.lr,
            decay_factor: self.lr_decay,
            decay_every: self.lr_decay_every,
            total_epochs: self.epochs,
            cycles: self.cycles,
            dropout_keep: self.dropout_keep,
            batch_size: self.batch_size,
            batches_per_epoch: self.batches_per_epoch,
            seed: self.seed,
        }
    }

    /// Generator settings; the generator shares the pipeline seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    /// Every key with its resolved value, sorted by key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let mut e: Vec<(&'static str, String)> = vec![
            ("profile", match self.profile {
                Profile::Default => "default".into(),
                Profile::Synthetic => "synthetic".into(),
            }),
            ("k", self.clusters().to_string()),
            ("tau", format!("{:?}", self.tau)),
            ("refine_epochs", self.refine_epochs.to_string()),
            ("refine_step", format!("{:?}", self.refine_step)),
            ("grad_clip", format!("{:?}", self.grad_clip)),
            ("cycles", self.cycles.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("lr_decay", format!("{:?}", self.lr_decay)),
            ("lr_decay_every", self.lr_decay_every.to_string()),
            ("dropout_keep", format!("{:?}", self.dropout_keep)),
            ("batch_size", self.batch_size.to_string()),
            ("batches_per_epoch", self.batches_per_epoch.to_string()),
            ("hidden", join(&self.hidden)),
            ("edge_iou", format!("{:?}", self.edge_iou)),
            ("top_m", self.top_m.to_string()),
            ("nms_iou", format!("{:?}", self.nms_iou)),
            ("score_threshold", format!("{:?}", self.score_threshold)),
            ("iou_thresholds", join(&self.iou_thresholds)),
            ("seed", self.seed.to_string()),
            ("test_fraction", format!("{:?}", self.test_fraction)),
            ("fold", self.fold.to_string()),
            ("retrieve_n", self.retrieve_n.to_string()),
            ("synth.object_name", s.object_name.clone()),
            ("synth.n_videos", s.n_videos.to_string()),
            ("synth.frames_per_video", s.frames_per_video.to_string()),
            ("synth.regions_per_frame", s.regions_per_frame.to_string()),
            ("synth.dim", s.dim.to_string()),
            ("synth.noise_level", format!("{:?}", s.noise_level)),
            ("synth.n_distractor_clusters", s.n_distractor_clusters.to_string()),
            ("synth.n_background_clusters", s.n_background_clusters.to_string()),
            ("synth.object_spread", format!("{:?}", s.object_spread)),
            ("synth.distractor_spread", format!("{:?}", s.distractor_spread)),
            ("synth.background_spread", format!("{:?}", s.background_spread)),
            ("synth.object_box_scale", format!("{:?}", s.object_box_scale)),
            ("synth.object_regions_per_frame", s.object_regions_per_frame.to_string()),
            ("synth.min_object_iou", format!("{:?}", s.min_object_iou)),
            ("synth.near_miss_fraction", format!("{:?}", s.near_miss_fraction)),
            ("synth.near_miss_blend", format!("{:?}", s.near_miss_blend)),
            ("synth.distractor_rate_positive", format!("{:?}", s.distractor_rate_positive)),
            ("synth.distractor_rate_negative", format!("{:?}", s.distractor_rate_negative)),
        ];
        e.sort_by_key(|(k, _)| *k);
        e
    }

    /// The resolved configuration as config-file text; loading it reproduces this config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{} = {}", k, v);
        }
        out
    }

    /// SHA-256 of the resolved configuration, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Seed order: explicit flag, then the configuration, then the environment.
pub fn resolve_seed(flag: Option<u64>, configured: bool, env: Option<&str>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if configured {
        return Ok(None);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| AppError::Config(format!("{} must be an unsigned integer, got '{}'", SEED_ENV, v))),
        None => Ok(None),
    }
}
