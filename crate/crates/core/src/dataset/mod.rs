//! Video collections indexed into fixed-length windows, the synthetic
//! temporal-artifact benchmark, and batch loading.
//!
//! Layout of a dataset root:
//!
//! ```text
//! root/real/<video_id>/frame_000000.png
//! root/fake/<video_id>/frame_000000.png
//! root/splits.json            {"<video_id>": "train" | "val" | "test", ...}
//! root/manipulations.json     optional {"<video_id>": "deepfake" | ..., ...}
//! root/masks/<video_id>/frame_000000.png   optional
//! root/landmarks.jsonl        optional
//! ```

pub mod loader;
pub mod preprocess;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tubelet::Label;

pub use loader::{load_batch, Batch, BatchIter, CacheSource, Normalization, SampleSource};
pub use preprocess::{preprocess, PreprocessMode, PreprocessSummary};
pub use synth::{synth_generate, SynthConfig, SynthSource};

pub const SPLITS_FILE: &str = "splits.json";
pub const MANIPULATIONS_FILE: &str = "manipulations.json";
pub const LANDMARKS_FILE: &str = "landmarks.jsonl";
pub const MASKS_DIR: &str = "masks";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manipulation {
    Deepfake,
    Face2face,
    Faceswap,
    Synthetic,
    None,
}

impl std::fmt::Display for Manipulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Manipulation::Deepfake => "Deepfake",
            Manipulation::Face2face => "Face2Face",
            Manipulation::Faceswap => "FaceSwap",
            Manipulation::Synthetic => "Synthetic",
            Manipulation::None => "None",
        })
    }
}

/// One window of consecutive frames from one video.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    pub label: Label,
    pub split: Split,
    pub manipulation: Manipulation,
}

impl SampleDescriptor {
    /// `<video_id>_<first frame, 6 digits>`.
    pub fn sample_id(&self) -> String {
        format!("{}_{:06}", self.video_id, self.frame_indices[0])
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    /// The same window cut down to its first `t` frames.
    pub fn truncated(&self, t: usize) -> Self {
        Self {
            frame_indices: self.frame_indices[..t.min(self.len())].to_vec(),
            ..self.clone()
        }
    }

    /// One single-frame descriptor per frame of the window.
    pub fn single_frames(&self) -> impl Iterator<Item = SampleDescriptor> + '_ {
        self.frame_indices.iter().map(|&f| Self {
            frame_indices: vec![f],
            ..self.clone()
        })
    }
}

/// Result of indexing a dataset root.
#[derive(Clone, Debug, Default)]
pub struct DatasetIndex {
    pub samples: Vec<SampleDescriptor>,
    /// Videos skipped, with the reason.
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn split(&self, split: Split) -> Vec<SampleDescriptor> {
        self.samples.iter().filter(|s| s.split == split).cloned().collect()
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

pub fn video_dir(root: &Path, label: Label, video_id: &str) -> PathBuf {
    root.join(label_dir(label)).join(video_id)
}

pub fn label_dir(label: Label) -> &'static str {
    match label {
        Label::Real => "real",
        Label::Fake => "fake",
    }
}

fn read_json_map<T: serde::de::DeserializeOwned>(path: &Path) -> Result<BTreeMap<String, T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Sorted frame indices present in a video directory.
pub fn list_frames(dir: &Path) -> Result<Vec<usize>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_frame_name) {
            frames.push(i);
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

/// Start positions of every `t`-frame window over `n` frames whose start
/// is a multiple of `stride`.
pub fn window_starts(n: usize, t: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..n.saturating_sub(t - 1)).step_by(stride)
}

/// Emits every `t`-frame window with start position ≡ 0 (mod `stride`)
/// for each video, ordered by label directory, video id and start.
/// Videos with fewer than `t` frames are skipped with a warning.
pub fn index_dataset(root: &Path, t: usize, stride: usize) -> Result<DatasetIndex> {
    if t == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window length and stride must be >= 1 (got {t}, {stride})"
        )));
    }
    let splits_path = root.join(SPLITS_FILE);
    if !splits_path.is_file() {
        return Err(Error::Data(format!("missing split manifest {}", splits_path.display())));
    }
    let splits: BTreeMap<String, Split> = read_json_map(&splits_path)?;
    let manip_path = root.join(MANIPULATIONS_FILE);
    let manipulations: BTreeMap<String, Manipulation> = if manip_path.is_file() {
        read_json_map(&manip_path)?
    } else {
        BTreeMap::new()
    };

    let mut index = DatasetIndex::default();
    let mut seen = HashSet::new();
    for label in [Label::Real, Label::Fake] {
        let dir = root.join(label_dir(label));
        if !dir.is_dir() {
            index.warnings.push(format!("no {} directory", dir.display()));
            continue;
        }
        let mut videos: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        videos.sort();
        for video_id in videos {
            if !seen.insert(video_id.clone()) {
                return Err(Error::Data(format!(
                    "video {video_id} appears under both real and fake"
                )));
            }
            let split = *splits
                .get(&video_id)
                .ok_or_else(|| Error::Data(format!("video {video_id} has no entry in {SPLITS_FILE}")))?;
            let manipulation = match label {
                Label::Real => Manipulation::None,
                Label::Fake => manipulations.get(&video_id).copied().unwrap_or(Manipulation::Synthetic),
            };
            let frames = list_frames(&dir.join(&video_id))?;
            if frames.len() < t {
                let msg = format!(
                    "video {video_id}: {} frames, fewer than window length {t}; skipped",
                    frames.len()
                );
                log::warn!("{msg}");
                index.warnings.push(msg);
                continue;
            }
            for start in window_starts(frames.len(), t, stride) {
                index.samples.push(SampleDescriptor {
                    video_id: video_id.clone(),
                    frame_indices: frames[start..start + t].to_vec(),
                    label,
                    split,
                    manipulation,
                });
            }
        }
    }
    Ok(index)
}

/// Video ids that occur in more than one split.
pub fn split_violations(samples: &[SampleDescriptor]) -> Vec<String> {
    let mut first: BTreeMap<&str, Split> = BTreeMap::new();
    let mut bad = BTreeMap::new();
    for s in samples {
        match first.get(s.video_id.as_str()) {
            Some(&sp) if sp != s.split => {
                bad.insert(s.video_id.clone(), ());
            }
            Some(_) => {}
            None => {
                first.insert(&s.video_id, s.split);
            }
        }
    }
    bad.into_keys().collect()
}
