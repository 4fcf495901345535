//! On-disk formats owned by the tubelet stage.
//!
//! * Landmark file: JSON lines `{"video_id", "frame_index", "points": [[x, y] × 68]}`.
//! * Crop cache: per tubelet, `<id>.f32` holds raw little-endian float32
//!   values of shape `T × 224 × 224 × 3` (row-major, channel-last) and
//!   `<id>.json` holds a [`CacheSidecar`].

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AlignmentMode, Label, Point2, Tubelet, CROP_SIZE, DENSE_LANDMARK_COUNT};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub points: Vec<Point2>,
}

/// Landmarks keyed by `(video_id, frame_index)`.
pub type LandmarkTable = HashMap<(String, usize), Vec<Point2>>;

pub fn read_landmarks(path: &Path) -> Result<LandmarkTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = HashMap::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LandmarkRecord =
            serde_json::from_str(&line).map_err(|e| Error::json(format!("{}:{}", path.display(), line_no + 1), e))?;
        if rec.points.len() != DENSE_LANDMARK_COUNT {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected {DENSE_LANDMARK_COUNT} points, got {}",
                path.display(),
                line_no + 1,
                rec.points.len()
            )));
        }
        table.insert((rec.video_id, rec.frame_index), rec.points);
    }
    Ok(table)
}

pub fn write_landmarks<'a>(path: &Path, records: impl IntoIterator<Item = &'a LandmarkRecord>) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| Error::json("landmark record", e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

pub const CACHE_DTYPE: &str = "float32-le";
pub const CACHE_LAYOUT: &str = "row-major THWC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheSidecar {
    pub sample_id: String,
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    pub label: u8,
    pub alignment_mode: AlignmentMode,
    pub shape: [usize; 4],
    pub dtype: String,
    pub layout: String,
}

/// A tubelet read back from the cache.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedTubelet {
    pub meta: CacheSidecar,
    /// `T × 224 × 224 × 3` values in `[0, 1]`.
    pub data: Vec<f32>,
}

impl CachedTubelet {
    pub fn frames(&self) -> usize {
        self.meta.shape[0]
    }

    pub fn label(&self) -> Result<Label> {
        Label::from_u8(self.meta.label)
    }
}

/// Directory of cached tubelets.
#[derive(Clone, Debug)]
pub struct CropCache {
    root: PathBuf,
}

impl CropCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_path(&self, sample_id: &str) -> PathBuf {
        self.root.join(format!("{sample_id}.f32"))
    }

    pub fn sidecar_path(&self, sample_id: &str) -> PathBuf {
        self.root.join(format!("{sample_id}.json"))
    }

    pub fn sidecar_for(sample_id: &str, tubelet: &Tubelet) -> CacheSidecar {
        CacheSidecar {
            sample_id: sample_id.to_string(),
            video_id: tubelet.video_id.clone(),
            frame_indices: tubelet.frame_indices.clone(),
            label: tubelet.label.as_u8(),
            alignment_mode: tubelet.alignment_mode().unwrap_or(AlignmentMode::None),
            shape: [tubelet.len(), CROP_SIZE, CROP_SIZE, 3],
            dtype: CACHE_DTYPE.to_string(),
            layout: CACHE_LAYOUT.to_string(),
        }
    }

    /// True when an entry with exactly this metadata is already present
    /// and its data file has the expected size.
    pub fn is_current(&self, meta: &CacheSidecar) -> bool {
        let Ok(text) = fs::read_to_string(self.sidecar_path(&meta.sample_id)) else {
            return false;
        };
        let Ok(existing) = serde_json::from_str::<CacheSidecar>(&text) else {
            return false;
        };
        let expected = meta.shape.iter().product::<usize>() as u64 * 4;
        existing == *meta
            && fs::metadata(self.data_path(&meta.sample_id))
                .map(|m| m.len() == expected)
                .unwrap_or(false)
    }

    pub fn write(&self, sample_id: &str, tubelet: &Tubelet) -> Result<CacheSidecar> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let meta = Self::sidecar_for(sample_id, tubelet);
        let mut bytes = Vec::with_capacity(meta.shape.iter().product::<usize>() * 4);
        for v in tubelet.to_array() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let data_path = self.data_path(sample_id);
        fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("cache sidecar", e))?;
        let side = self.sidecar_path(sample_id);
        fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
        Ok(meta)
    }

    pub fn read(&self, sample_id: &str) -> Result<CachedTubelet> {
        let load_err = |reason: String| Error::Load {
            what: format!("cached tubelet {sample_id}"),
            reason,
        };
        let side = self.sidecar_path(sample_id);
        let text = fs::read_to_string(&side).map_err(|e| load_err(format!("{}: {e}", side.display())))?;
        let meta: CacheSidecar = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        if meta.dtype != CACHE_DTYPE || meta.layout != CACHE_LAYOUT {
            return Err(load_err(format!(
                "unsupported encoding {} / {}",
                meta.dtype, meta.layout
            )));
        }
        let data_path = self.data_path(sample_id);
        let bytes = fs::read(&data_path).map_err(|e| load_err(format!("{}: {e}", data_path.display())))?;
        let expected = meta.shape.iter().product::<usize>();
        if bytes.len() != expected * 4 {
            return Err(load_err(format!("{} bytes, expected {}", bytes.len(), expected * 4)));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(CachedTubelet { meta, data })
    }
}
