//! Frames, region proposals and their embeddings.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::math;
use crate::rng::{self, Stage};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(FrameId);
id_type!(RegionId);
id_type!(VideoId);

/// A key frame. `positive` is the frame-level weak label: the object was
/// mentioned (positive) or the frame comes from an unrelated video (negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_id: FrameId,
    pub video_id: VideoId,
    pub positive: bool,
}

/// A region proposal. The weak label is inherited from the owning frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionRecord {
    pub region_id: RegionId,
    pub frame_id: FrameId,
    pub bbox: BBox,
    pub positive: bool,
}

/// Row-major read-only view over an `n x dim` embedding matrix.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingView<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> EmbeddingView<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "embedding buffer of length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(EmbeddingView { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// A validated collection of frames and region proposals for one object class.
///
/// Region `i`'s embedding is row `i` of the contiguous embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    object_name: String,
    dim: usize,
    frames: Vec<FrameRecord>,
    regions: Vec<RegionRecord>,
    embeddings: Vec<f32>,
    frame_index: BTreeMap<FrameId, usize>,
    region_index: BTreeMap<RegionId, usize>,
    frame_regions: Vec<Vec<usize>>,
    region_frame: Vec<usize>,
}

impl Dataset {
    pub fn new(
        object_name: impl Into<String>,
        dim: usize,
        frames: Vec<FrameRecord>,
        regions: Vec<RegionRecord>,
        embeddings: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        if embeddings.len() != regions.len() * dim {
            return Err(Error::validation(format!(
                "expected {} embedding values for {} regions of dim {}, got {}",
                regions.len() * dim,
                regions.len(),
                dim,
                embeddings.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite embedding value in row {} (region {})",
                pos / dim,
                regions[pos / dim].region_id
            )));
        }

        let mut frame_index = BTreeMap::new();
        for (i, f) in frames.iter().enumerate() {
            if frame_index.insert(f.frame_id, i).is_some() {
                return Err(Error::validation(format!("duplicate frame id {}", f.frame_id)));
            }
        }
        if !frames.iter().any(|f| f.positive) || !frames.iter().any(|f| !f.positive) {
            return Err(Error::validation(
                "dataset needs at least one positive and one negative frame",
            ));
        }

        let mut region_index = BTreeMap::new();
        let mut frame_regions = alloc::vec![Vec::new(); frames.len()];
        let mut region_frame = Vec::with_capacity(regions.len());
        for (i, r) in regions.iter().enumerate() {
            if region_index.insert(r.region_id, i).is_some() {
                return Err(Error::validation(format!("duplicate region id {}", r.region_id)));
            }
            let fi = *frame_index.get(&r.frame_id).ok_or_else(|| {
                Error::validation(format!(
                    "region {} references unknown frame {}",
                    r.region_id, r.frame_id
                ))
            })?;
            if r.positive != frames[fi].positive {
                return Err(Error::validation(format!(
                    "region {} weak label differs from frame {} label",
                    r.region_id, r.frame_id
                )));
            }
            r.bbox
                .validate()
                .map_err(|e| Error::validation(format!("region {}: {}", r.region_id, e)))?;
            frame_regions[fi].push(i);
            region_frame.push(fi);
        }
        if let Some(fi) = frame_regions.iter().position(Vec::is_empty) {
            return Err(Error::validation(format!(
                "frame {} has no regions",
                frames[fi].frame_id
            )));
        }

        Ok(Dataset {
            object_name: object_name.into(),
            dim,
            frames,
            regions,
            embeddings,
            frame_index,
            region_index,
            frame_regions,
            region_frame,
        })
    }

    pub fn object_name(&self) -> &str {
        &self.object_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn regions(&self) -> &[RegionRecord] {
        &self.regions
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn embeddings(&self) -> EmbeddingView<'_> {
        EmbeddingView { data: &self.embeddings, dim: self.dim }
    }

    pub fn embedding(&self, region: usize) -> &[f32] {
        &self.embeddings[region * self.dim..(region + 1) * self.dim]
    }

    /// Weak labels in region order.
    pub fn labels(&self) -> Vec<bool> {
        self.regions.iter().map(|r| r.positive).collect()
    }

    pub fn frame_position(&self, id: FrameId) -> Option<usize> {
        self.frame_index.get(&id).copied()
    }

    pub fn region_position(&self, id: RegionId) -> Option<usize> {
        self.region_index.get(&id).copied()
    }

    /// Indices of the regions belonging to frame position `frame`.
    pub fn frame_regions(&self, frame: usize) -> &[usize] {
        &self.frame_regions[frame]
    }

    pub fn frame_of_region(&self, region: usize) -> &FrameRecord {
        &self.frames[self.region_frame[region]]
    }

    /// Mean number of proposals per frame, rounded.
    pub fn regions_per_frame(&self) -> usize {
        math::round(self.regions.len() as f64 / self.frames.len() as f64) as usize
    }

    /// Restricts the dataset to the given frames, preserving original order.
    pub fn subset(&self, keep: &BTreeSet<FrameId>) -> Result<Dataset> {
        let frames: Vec<FrameRecord> =
            self.frames.iter().filter(|f| keep.contains(&f.frame_id)).copied().collect();
        let mut regions = Vec::new();
        let mut embeddings = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            if keep.contains(&r.frame_id) {
                regions.push(*r);
                embeddings.extend_from_slice(self.embedding(i));
            }
        }
        Dataset::new(self.object_name.clone(), self.dim, frames, regions, embeddings)
    }
}

/// Annotated object boxes per frame. Used only for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    boxes: BTreeMap<FrameId, Vec<BBox>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: FrameId, boxes: Vec<BBox>) -> Result<()> {
        for b in &boxes {
            b.validate()?;
        }
        self.boxes.insert(frame, boxes);
        Ok(())
    }

    pub fn get(&self, frame: FrameId) -> &[BBox] {
        self.boxes.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameId, &[BBox])> {
        self.boxes.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn total_boxes(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }

    /// Checks every annotated frame against `dataset`.
    pub fn bind(&self, dataset: &Dataset) -> Result<()> {
        for frame in self.boxes.keys() {
            if dataset.frame_position(*frame).is_none() {
                return Err(Error::validation(format!(
                    "ground truth references frame {} which is not in dataset '{}'",
                    frame,
                    dataset.object_name()
                )));
            }
        }
        Ok(())
    }

    pub fn restrict(&self, keep: &BTreeSet<FrameId>) -> GroundTruth {
        GroundTruth {
            boxes: self
                .boxes
                .iter()
                .filter(|(k, _)| keep.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }
}

/// Mutually exclusive train/test frame sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSplit {
    pub train: BTreeSet<FrameId>,
    pub test: BTreeSet<FrameId>,
}

/// Randomized frame-level split. Each fold is an independent shuffle of all
/// frames; frames of one video may land on both sides.
pub fn split_frames(dataset: &Dataset, test_fraction: f64, fold: u64, seed: u64) -> Result<FrameSplit> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction {} must lie in [0, 1)",
            test_fraction
        )));
    }
    let mut ids: Vec<FrameId> = dataset.frames().iter().map(|f| f.frame_id).collect();
    if test_fraction == 0.0 {
        return Ok(FrameSplit { train: ids.into_iter().collect(), test: BTreeSet::new() });
    }
    let mut rng = rng::stream(seed, Stage::Split, &[fold]);
    ids.shuffle(&mut rng);
    let n_test = (math::round(ids.len() as f64 * test_fraction) as usize).clamp(1, ids.len() - 1);
    let test = ids[..n_test].iter().copied().collect();
    let train = ids[n_test..].iter().copied().collect();
    Ok(FrameSplit { train, test })
}
