//! Builds and caches the tubelet of every descriptor of a dataset tree.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frame_file_name, video_dir, SampleDescriptor, Split, LANDMARKS_FILE, MASKS_DIR};
use crate::error::{Error, Result};
use crate::tubelet::io::{read_landmarks, CacheSidecar, CropCache, LandmarkTable, CACHE_DTYPE, CACHE_LAYOUT};
use crate::tubelet::{
    build_tubelet, select_landmarks, AlignmentMode, CropSettings, Frame, FrameGuide, Label, LandmarkSet, Mask,
    CROP_SIZE,
};

/// How crops are located in each frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    /// Similarity alignment from the landmark file.
    Landmark,
    /// Bounding box of the per-frame mask.
    Mask,
    /// Whole frame resized to the crop size.
    None,
}

impl PreprocessMode {
    pub fn alignment(self) -> AlignmentMode {
        match self {
            PreprocessMode::Landmark => AlignmentMode::Landmark,
            PreprocessMode::Mask => AlignmentMode::MaskBbox,
            PreprocessMode::None => AlignmentMode::None,
        }
    }
}

impl FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "landmark" => Ok(PreprocessMode::Landmark),
            "mask" => Ok(PreprocessMode::Mask),
            "none" => Ok(PreprocessMode::None),
            other => Err(Error::Config(format!("unknown preprocess mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for PreprocessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PreprocessMode::Landmark => "landmark",
            PreprocessMode::Mask => "mask",
            PreprocessMode::None => "none",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreprocessSummary {
    pub written: usize,
    /// Entries already cached with identical metadata.
    pub unchanged: usize,
    /// `(sample_id, error)` for every descriptor that could not be built.
    pub failures: Vec<(String, String)>,
    /// Cached descriptors per split and label.
    pub counts: BTreeMap<(Split, Label), usize>,
}

impl PreprocessSummary {
    pub fn count(&self, split: Split) -> usize {
        self.counts
            .iter()
            .filter(|((s, _), _)| *s == split)
            .map(|(_, n)| n)
            .sum()
    }
}

/// Sidecar the cache entry of `desc` will carry.
pub fn expected_sidecar(desc: &SampleDescriptor, mode: PreprocessMode) -> CacheSidecar {
    CacheSidecar {
        sample_id: desc.sample_id(),
        video_id: desc.video_id.clone(),
        frame_indices: desc.frame_indices.clone(),
        label: desc.label.as_u8(),
        alignment_mode: mode.alignment(),
        shape: [desc.len(), CROP_SIZE, CROP_SIZE, 3],
        dtype: CACHE_DTYPE.to_string(),
        layout: CACHE_LAYOUT.to_string(),
    }
}

fn build_one(
    root: &Path,
    desc: &SampleDescriptor,
    mode: PreprocessMode,
    landmarks: Option<&LandmarkTable>,
    settings: &CropSettings,
    cache: &CropCache,
) -> Result<()> {
    let dir = video_dir(root, desc.label, &desc.video_id);
    let frames = desc
        .frame_indices
        .iter()
        .map(|&f| Frame::load_png(&dir.join(frame_file_name(f))))
        .collect::<Result<Vec<_>>>()?;
    let tubelet = match mode {
        PreprocessMode::Landmark => {
            let table = landmarks.expect("landmark table loaded for landmark mode");
            let sets = desc
                .frame_indices
                .iter()
                .map(|&f| {
                    let dense = table
                        .get(&(desc.video_id.clone(), f))
                        .ok_or_else(|| Error::Data(format!("no landmarks for {} frame {f}", desc.video_id)))?;
                    select_landmarks(dense)
                })
                .collect::<Result<Vec<LandmarkSet>>>()?;
            build_tubelet(
                &frames,
                &desc.frame_indices,
                FrameGuide::Landmarks(&sets),
                desc.label,
                &desc.video_id,
                settings,
            )?
        }
        PreprocessMode::Mask => {
            let mask_dir = root.join(MASKS_DIR).join(&desc.video_id);
            let masks = desc
                .frame_indices
                .iter()
                .map(|&f| Mask::load_png(&mask_dir.join(frame_file_name(f))))
                .collect::<Result<Vec<_>>>()?;
            build_tubelet(
                &frames,
                &desc.frame_indices,
                FrameGuide::Masks(&masks),
                desc.label,
                &desc.video_id,
                settings,
            )?
        }
        PreprocessMode::None => build_tubelet(
            &frames,
            &desc.frame_indices,
            FrameGuide::Unaligned,
            desc.label,
            &desc.video_id,
            settings,
        )?,
    };
    cache.write(&desc.sample_id(), &tubelet)?;
    Ok(())
}

/// Caches a tubelet for every descriptor under `cache_dir`. Entries whose
/// sidecar already matches are left untouched. Per-sample failures are
/// collected in the summary rather than aborting the run.
pub fn preprocess(
    root: &Path,
    samples: &[SampleDescriptor],
    mode: PreprocessMode,
    cache_dir: &Path,
    settings: &CropSettings,
) -> Result<PreprocessSummary> {
    let landmarks = match mode {
        PreprocessMode::Landmark => Some(read_landmarks(&root.join(LANDMARKS_FILE))?),
        _ => None,
    };
    let cache = CropCache::new(cache_dir);
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let outcomes: Vec<(usize, std::result::Result<bool, String>)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, desc)| {
            if cache.is_current(&expected_sidecar(desc, mode)) {
                return (i, Ok(false));
            }
            let r = build_one(root, desc, mode, landmarks.as_ref(), settings, &cache);
            (i, r.map(|_| true).map_err(|e| e.to_string()))
        })
        .collect();
    let mut summary = PreprocessSummary::default();
    for (i, outcome) in outcomes {
        let desc = &samples[i];
        match outcome {
            Ok(written) => {
                if written {
                    summary.written += 1;
                } else {
                    summary.unchanged += 1;
                }
                *summary.counts.entry((desc.split, desc.label)).or_default() += 1;
            }
            Err(e) => {
                log::warn!("{}: {e}", desc.sample_id());
                summary.failures.push((desc.sample_id(), e));
            }
        }
    }
    Ok(summary)
}
