//! On-disk artifacts: line-delimited JSON metadata plus little-endian `f32` sidecars.

use crate::error::{AppError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ssodr_core::detector::{Adam, DetectorParams, Detection, Mlp};
use ssodr_core::dsd::{MinedPositive, MinedSet};
use ssodr_core::eval::{EvalReport, Retrieval};
use ssodr_core::model::{Dataset, FrameId, FrameRecord, GroundTruth, RegionId, RegionRecord, VideoId};
use ssodr_core::scoring::{ClusterScore, ClusterStats, Scorecard};
use ssodr_core::synth::PlantReport;
use ssodr_core::wdec::ClusterState;
use ssodr_core::BBox;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"SSOR";
pub const VERSION: u32 = 1;

/// Sidecar holding a dataset's embedding rows.
pub fn embedding_sidecar(path: &Path) -> PathBuf {
    path.with_extension("emb")
}

/// Sidecar holding cluster centroids or detector weights.
pub fn payload_sidecar(path: &Path) -> PathBuf {
    path.with_extension("bin")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| AppError::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Writes an `n_rows x dim` matrix of `f32` values.
pub fn write_matrix(path: &Path, n_rows: usize, dim: usize, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let too_big = |what: &str| AppError::format(path, format!("{} exceeds the 32-bit header field", what));
    let rows = u32::try_from(n_rows).map_err(|_| too_big("row count"))?;
    let cols = u32::try_from(dim).map_err(|_| too_big("dimension"))?;
    let mut w = create(path)?;
    let io = |e| AppError::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    for v in [VERSION, rows, cols] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    let mut written = 0usize;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
        written += 1;
    }
    if written != n_rows * dim {
        return Err(AppError::format(path, format!("wrote {} values for a {}x{} matrix", written, n_rows, dim)));
    }
    finish(w, path)
}

/// Reads a matrix written by [`write_matrix`] as `(n_rows, dim, values)`.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| AppError::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(AppError::format(path, "missing SSOR magic bytes"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (version, rows, dim) = (word(4), word(8) as usize, word(12) as usize);
    if version != VERSION {
        return Err(AppError::format(path, format!("unsupported sidecar version {}", version)));
    }
    let payload = &bytes[16..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| AppError::format(path, "header sizes overflow"))?;
    if payload.len() != expected {
        return Err(AppError::format(
            path,
            format!("header promises {}x{} values but the payload holds {} bytes", rows, dim, payload.len()),
        ));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((rows, dim, values))
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a serde_json::Value>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        serde_json::to_writer(&mut w, line).map_err(|e| AppError::format(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    }
    finish(w, path)
}

fn to_value<T: Serialize>(path: &Path, v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| AppError::format(path, e.to_string()))
}

fn write_records<H: Serialize, R: Serialize>(path: &Path, header: &H, records: &[R]) -> Result<()> {
    let mut lines = Vec::with_capacity(records.len() + 1);
    lines.push(to_value(path, header)?);
    for r in records {
        lines.push(to_value(path, r)?);
    }
    write_lines(path, &lines)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AppError::format(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    finish(w, path)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))
}

/// Non-empty lines of a text file, with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: DeserializeOwned>(path: &Path, (n, line): &(usize, String)) -> Result<T> {
    serde_json::from_str(line).map_err(|e| AppError::format(path, format!("line {}: {}", n, e)))
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(AppError::format(path, format!("expected format {}, found {}", expected, format)));
    }
    if version != VERSION {
        return Err(AppError::format(path, format!("unsupported version {}", version)));
    }
    Ok(())
}

/// Config digest recorded in an existing artifact, if it has one.
pub fn recorded_digest(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    if let Some(d) = text.lines().next()?.strip_prefix("# config_digest = ") {
        return Some(d.trim().to_string());
    }
    let first: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => serde_json::from_str(text.lines().next()?).ok()?,
    };
    first.get("config_digest")?.as_str().map(str::to_string)
}

fn label(positive: bool) -> u8 {
    u8::from(positive)
}

fn parse_label(path: &Path, v: u8) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(AppError::format(path, format!("label must be 0 or 1, got {}", v))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    object_name: String,
    dim: usize,
    n_frames: usize,
    n_regions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameLine {
    frame_id: u64,
    video_id: u64,
    frame_label: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionLine {
    region_id: u64,
    frame_id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    weak_label: u8,
    emb_row: usize,
}

pub fn write_dataset(dataset: &Dataset, path: &Path, digest: Option<&str>) -> Result<()> {
    let header = DatasetHeader {
        format: "ssodr-dataset".into(),
        version: VERSION,
        object_name: dataset.object_name().into(),
        dim: dataset.dim(),
        n_frames: dataset.frames().len(),
        n_regions: dataset.n_regions(),
        config_digest: digest.map(str::to_string),
    };
    let mut lines = vec![to_value(path, &header)?];
    for f in dataset.frames() {
        lines.push(to_value(
            path,
            &FrameLine { frame_id: f.frame_id.0, video_id: f.video_id.0, frame_label: label(f.positive) },
        )?);
    }
    for (row, r) in dataset.regions().iter().enumerate() {
        lines.push(to_value(
            path,
            &RegionLine {
                region_id: r.region_id.0,
                frame_id: r.frame_id.0,
                bbox: r.bbox.to_array(),
                weak_label: label(r.positive),
                emb_row: row,
            },
        )?);
    }
    write_matrix(
        &embedding_sidecar(path),
        dataset.n_regions(),
        dataset.dim(),
        dataset.embeddings().as_slice().iter().copied(),
    )?;
    write_lines(path, &lines)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let lines = read_lines(path)?;
    let first = lines.first().ok_or_else(|| AppError::format(path, "empty dataset file"))?;
    let header: DatasetHeader = parse_line(path, first)?;
    check_header(path, &header.format, header.version, "ssodr-dataset")?;
    if lines.len() != 1 + header.n_frames + header.n_regions {
        return Err(AppError::format(
            path,
            format!(
                "header declares {} frames and {} regions but the file has {} records",
                header.n_frames,
                header.n_regions,
                lines.len() - 1
            ),
        ));
    }
    let sidecar = embedding_sidecar(path);
    let (rows, dim, values) = read_matrix(&sidecar)?;
    if dim != header.dim {
        return Err(AppError::format(&sidecar, format!("sidecar dim {} differs from header dim {}", dim, header.dim)));
    }
    let frames = lines[1..1 + header.n_frames]
        .iter()
        .map(|l| {
            let f: FrameLine = parse_line(path, l)?;
            Ok(FrameRecord {
                frame_id: FrameId(f.frame_id),
                video_id: VideoId(f.video_id),
                positive: parse_label(path, f.frame_label)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut regions = Vec::with_capacity(header.n_regions);
    let mut embeddings = Vec::with_capacity(header.n_regions * dim);
    for l in &lines[1 + header.n_frames..] {
        let r: RegionLine = parse_line(path, l)?;
        if r.emb_row >= rows {
            return Err(AppError::format(path, format!("line {}: emb_row {} outside {} sidecar rows", l.0, r.emb_row, rows)));
        }
        let bbox = BBox::from_array(r.bbox).map_err(|e| AppError::format(path, format!("line {}: {}", l.0, e)))?;
        regions.push(RegionRecord {
            region_id: RegionId(r.region_id),
            frame_id: FrameId(r.frame_id),
            bbox,
            positive: parse_label(path, r.weak_label)?,
        });
        embeddings.extend_from_slice(&values[r.emb_row * dim..(r.emb_row + 1) * dim]);
    }
    Ok(Dataset::new(header.object_name, dim, frames, regions, embeddings)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

impl Header {
    fn new(format: &str, digest: Option<&str>) -> Self {
        Header { format: format.into(), version: VERSION, config_digest: digest.map(str::to_string) }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthLine {
    frame_id: u64,
    boxes: Vec<[f64; 4]>,
}

pub fn write_groundtruth(gt: &GroundTruth, path: &Path, digest: Option<&str>) -> Result<()> {
    let records: Vec<GroundTruthLine> = gt
        .iter()
        .map(|(f, boxes)| GroundTruthLine { frame_id: f.0, boxes: boxes.iter().map(|b| b.to_array()).collect() })
        .collect();
    write_records(path, &Header::new("ssodr-groundtruth", digest), &records)
}

/// Reads annotations; a leading header line is optional.
pub fn read_groundtruth(path: &Path) -> Result<GroundTruth> {
    let lines = read_lines(path)?;
    let mut gt = GroundTruth::new();
    for (i, l) in lines.iter().enumerate() {
        if i == 0 && l.1.contains("\"format\"") {
            let h: Header = parse_line(path, l)?;
            check_header(path, &h.format, h.version, "ssodr-groundtruth")?;
            continue;
        }
        let rec: GroundTruthLine = parse_line(path, l)?;
        let boxes = rec
            .boxes
            .iter()
            .map(|&b| BBox::from_array(b))
            .collect::<ssodr_core::Result<Vec<_>>>()
            .map_err(AppError::Core)?;
        gt.insert(FrameId(rec.frame_id), boxes)?;
    }
    Ok(gt)
}

#[derive(Debug, Serialize, Deserialize)]
struct StateHeader {
    format: String,
    version: u32,
    k: usize,
    dim: usize,
    epoch: usize,
    interval: usize,
    assignments: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

pub fn write_state(state: &ClusterState, path: &Path, digest: Option<&str>) -> Result<()> {
    let header = StateHeader {
        format: "ssodr-clusters".into(),
        version: VERSION,
        k: state.k,
        dim: state.dim,
        epoch: state.epoch,
        interval: state.interval,
        assignments: state.assignments.clone(),
        config_digest: digest.map(str::to_string),
    };
    write_matrix(&payload_sidecar(path), state.k, state.dim, state.centroids.iter().map(|&c| c as f32))?;
    write_json(path, &header)
}

pub fn read_state(path: &Path) -> Result<ClusterState> {
    let h: StateHeader = read_json(path)?;
    check_header(path, &h.format, h.version, "ssodr-clusters")?;
    let sidecar = payload_sidecar(path);
    let (rows, dim, values) = read_matrix(&sidecar)?;
    if rows != h.k || dim != h.dim {
        return Err(AppError::format(&sidecar, format!("payload is {}x{}, header says {}x{}", rows, dim, h.k, h.dim)));
    }
    let state = ClusterState {
        centroids: values.into_iter().map(f64::from).collect(),
        k: h.k,
        dim: h.dim,
        assignments: h.assignments,
        epoch: h.epoch,
        interval: h.interval,
    };
    state.validate(state.assignments.len())?;
    Ok(state)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScorecardHeader {
    format: String,
    version: u32,
    tau: f64,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ScoreLine {
    k: usize,
    count: usize,
    P: f64,
    V: f64,
    U: usize,
    raw: f64,
    S: f64,
    masked: bool,
}

pub fn write_scorecard(card: &Scorecard, path: &Path, digest: Option<&str>) -> Result<()> {
    let header = ScorecardHeader {
        format: "ssodr-scorecard".into(),
        version: VERSION,
        tau: card.tau,
        k: card.k(),
        config_digest: digest.map(str::to_string),
    };
    let records: Vec<ScoreLine> = card
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| ScoreLine {
            k,
            count: c.stats.count,
            P: c.stats.positive_ratio,
            V: c.stats.variance,
            U: c.stats.unique_videos,
            raw: c.raw,
            S: c.score,
            masked: c.masked,
        })
        .collect();
    write_records(path, &header, &records)
}

pub fn read_scorecard(path: &Path) -> Result<Scorecard> {
    let lines = read_lines(path)?;
    let first = lines.first().ok_or_else(|| AppError::format(path, "empty scorecard"))?;
    let h: ScorecardHeader = parse_line(path, first)?;
    check_header(path, &h.format, h.version, "ssodr-scorecard")?;
    let mut clusters = Vec::with_capacity(h.k);
    for (j, l) in lines[1..].iter().enumerate() {
        let r: ScoreLine = parse_line(path, l)?;
        if r.k != j {
            return Err(AppError::format(path, format!("line {}: expected cluster {}, found {}", l.0, j, r.k)));
        }
        clusters.push(ClusterScore {
            stats: ClusterStats { count: r.count, positive_ratio: r.P, variance: r.V, unique_videos: r.U },
            raw: r.raw,
            score: r.S,
            masked: r.masked,
        });
    }
    if clusters.len() != h.k {
        return Err(AppError::format(path, format!("header declares {} clusters, file has {}", h.k, clusters.len())));
    }
    Ok(Scorecard { tau: h.tau, clusters })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MinedLine {
    Positive { region_id: u64, cluster_id: usize },
    HardNegative { region_id: u64 },
}

pub fn write_mined(mined: &MinedSet, path: &Path, digest: Option<&str>) -> Result<()> {
    let records: Vec<MinedLine> = mined
        .positives
        .iter()
        .map(|p| MinedLine::Positive { region_id: p.region_id.0, cluster_id: p.cluster })
        .chain(mined.hard_negatives.iter().map(|r| MinedLine::HardNegative { region_id: r.0 }))
        .collect();
    write_records(path, &Header::new("ssodr-mined", digest), &records)
}

pub fn read_mined(path: &Path) -> Result<MinedSet> {
    let lines = read_lines(path)?;
    let first = lines.first().ok_or_else(|| AppError::format(path, "empty mined set"))?;
    let h: Header = parse_line(path, first)?;
    check_header(path, &h.format, h.version, "ssodr-mined")?;
    let mut mined = MinedSet::default();
    for l in &lines[1..] {
        match parse_line(path, l)? {
            MinedLine::Positive { region_id, cluster_id } => {
                mined.positives.push(MinedPositive { region_id: RegionId(region_id), cluster: cluster_id })
            }
            MinedLine::HardNegative { region_id } => mined.hard_negatives.push(RegionId(region_id)),
        }
    }
    Ok(mined)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    dims: Vec<usize>,
    global_epoch: usize,
    adam_step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    n_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

/// Header plus a three-row payload: weights, first moments, second moments.
pub fn write_model(params: &DetectorParams, path: &Path, digest: Option<&str>) -> Result<()> {
    let n = params.mlp.parameter_count();
    let header = ModelHeader {
        format: "ssodr-model".into(),
        version: VERSION,
        dims: params.mlp.dims().to_vec(),
        global_epoch: params.global_epoch,
        adam_step: params.optimizer.step,
        beta1: params.optimizer.beta1,
        beta2: params.optimizer.beta2,
        eps: params.optimizer.eps,
        n_params: n,
        config_digest: digest.map(str::to_string),
    };
    let lossy = params.mlp.params().iter().chain(&params.optimizer.m).chain(&params.optimizer.v).any(|&x| x as f32 as f64 != x);
    if lossy {
        return Err(AppError::format(path, "detector state is not f32-representable"));
    }
    let values = params.mlp.params().iter().chain(&params.optimizer.m).chain(&params.optimizer.v).map(|&x| x as f32);
    write_matrix(&payload_sidecar(path), 3, n, values)?;
    write_json(path, &header)
}

pub fn read_model(path: &Path) -> Result<DetectorParams> {
    let h: ModelHeader = read_json(path)?;
    check_header(path, &h.format, h.version, "ssodr-model")?;
    let sidecar = payload_sidecar(path);
    let (rows, n, values) = read_matrix(&sidecar)?;
    if rows != 3 || n != h.n_params {
        return Err(AppError::format(&sidecar, format!("payload is {}x{}, expected 3x{}", rows, n, h.n_params)));
    }
    let mut it = values.into_iter().map(f64::from);
    let params: Vec<f64> = it.by_ref().take(n).collect();
    let m: Vec<f64> = it.by_ref().take(n).collect();
    let v: Vec<f64> = it.collect();
    let mlp = Mlp::from_params(&h.dims, params)?;
    let optimizer = Adam { beta1: h.beta1, beta2: h.beta2, eps: h.eps, step: h.adam_step, m, v };
    Ok(DetectorParams::from_parts(mlp, optimizer, h.global_epoch)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionLine {
    frame_id: u64,
    region_id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
}

pub fn write_detections(dets: &[Detection], path: &Path, digest: Option<&str>) -> Result<()> {
    let records: Vec<DetectionLine> = dets
        .iter()
        .map(|d| DetectionLine { frame_id: d.frame_id.0, region_id: d.region_id.0, bbox: d.bbox.to_array(), score: d.score })
        .collect();
    write_records(path, &Header::new("ssodr-detections", digest), &records)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let lines = read_lines(path)?;
    let first = lines.first().ok_or_else(|| AppError::format(path, "empty detections file"))?;
    let h: Header = parse_line(path, first)?;
    check_header(path, &h.format, h.version, "ssodr-detections")?;
    lines[1..]
        .iter()
        .map(|l| {
            let d: DetectionLine = parse_line(path, l)?;
            if !(0.0..=1.0).contains(&d.score) {
                return Err(AppError::format(path, format!("line {}: score {} outside [0, 1]", l.0, d.score)));
            }
            let bbox = BBox::from_array(d.bbox).map_err(|e| AppError::format(path, format!("line {}: {}", l.0, e)))?;
            Ok(Detection { frame_id: FrameId(d.frame_id), region_id: RegionId(d.region_id), bbox, score: d.score })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub object_name: String,
    /// Keyed by the threshold as written in the config.
    pub ap_by_threshold: BTreeMap<String, f64>,
    pub n_frames: usize,
    pub n_gt: usize,
    pub seed: u64,
    pub config_digest: String,
}

impl Report {
    pub fn new(eval: &EvalReport, seed: u64, digest: &str) -> Self {
        Report {
            object_name: eval.object_name.clone(),
            ap_by_threshold: eval.ap_by_threshold.iter().map(|(t, ap)| (format!("{:?}", t), *ap)).collect(),
            n_frames: eval.n_frames,
            n_gt: eval.n_gt,
            seed,
            config_digest: digest.into(),
        }
    }

    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.ap_by_threshold.get(&format!("{:?}", threshold)).copied()
    }
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<Report> {
    read_json(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct RetrievalLine {
    rank: usize,
    region_id: u64,
    video_id: u64,
    distance: f64,
    relaxed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RetrievalHeader {
    format: String,
    version: u32,
    cluster: usize,
    relaxed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

pub fn write_retrieval(r: &Retrieval, path: &Path, digest: Option<&str>) -> Result<()> {
    let header = RetrievalHeader {
        format: "ssodr-retrieval".into(),
        version: VERSION,
        cluster: r.cluster,
        relaxed: r.relaxed(),
        config_digest: digest.map(str::to_string),
    };
    let records: Vec<RetrievalLine> = r
        .regions
        .iter()
        .enumerate()
        .map(|(rank, x)| RetrievalLine {
            rank,
            region_id: x.region_id.0,
            video_id: x.video_id.0,
            distance: x.distance,
            relaxed: x.relaxed,
        })
        .collect();
    write_records(path, &header, &records)
}

#[derive(Debug, Serialize, Deserialize)]
struct PlantFile {
    format: String,
    version: u32,
    object_centroid_index: usize,
    object_region_ids: Vec<u64>,
    near_miss_region_ids: Vec<u64>,
    clean_frame_ids: Vec<u64>,
    noisy_frame_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

pub fn write_plant(plant: &PlantReport, path: &Path, digest: Option<&str>) -> Result<()> {
    let ids = |v: &[RegionId]| v.iter().map(|r| r.0).collect();
    let frames = |v: &[FrameId]| v.iter().map(|f| f.0).collect();
    write_json(
        path,
        &PlantFile {
            format: "ssodr-plant".into(),
            version: VERSION,
            object_centroid_index: plant.object_centroid_index,
            object_region_ids: ids(&plant.object_region_ids),
            near_miss_region_ids: ids(&plant.near_miss_region_ids),
            clean_frame_ids: frames(&plant.clean_frame_ids),
            noisy_frame_ids: frames(&plant.noisy_frame_ids),
            config_digest: digest.map(str::to_string),
        },
    )
}

/// Planted object region ids from a plant report.
pub fn read_plant_objects(path: &Path) -> Result<Vec<RegionId>> {
    let p: PlantFile = read_json(path)?;
    check_header(path, &p.format, p.version, "ssodr-plant")?;
    Ok(p.object_region_ids.into_iter().map(RegionId).collect())
}
