//! Seeded batch iteration over sample descriptors.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SampleDescriptor;
use crate::error::{Error, Result};
use crate::model::frames_to_nchw;
use crate::tensor::{Scalar, Tensor};
use crate::tubelet::io::{CacheSidecar, CropCache};
use crate::tubelet::{Label, CROP_SIZE};

const FRAME_VALUES: usize = CROP_SIZE * CROP_SIZE * 3;

/// Anything that can produce the crops of a window as channel-last
/// `T × 224 × 224 × 3` values in `[0, 1]`.
pub trait SampleSource: Sync {
    fn load(&self, desc: &SampleDescriptor) -> Result<Vec<f32>>;
}

/// Reads crops from a tubelet cache. Frames are located by
/// `(video_id, frame_index)`, so any window whose frames were cached in
/// some tubelet can be served (e.g. single frames out of 5-frame
/// windows).
#[derive(Clone, Debug)]
pub struct CacheSource {
    cache: CropCache,
    frames: HashMap<(String, usize), (String, usize)>,
}

impl CacheSource {
    pub fn open(dir: &Path) -> Result<Self> {
        let cache = CropCache::new(dir);
        let mut frames = HashMap::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut sidecars: Vec<_> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        sidecars.sort();
        for path in sidecars {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let Ok(meta) = serde_json::from_str::<CacheSidecar>(&text) else {
                continue;
            };
            for (pos, &f) in meta.frame_indices.iter().enumerate() {
                frames
                    .entry((meta.video_id.clone(), f))
                    .or_insert_with(|| (meta.sample_id.clone(), pos));
            }
        }
        Ok(Self { cache, frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

impl SampleSource for CacheSource {
    fn load(&self, desc: &SampleDescriptor) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(desc.len() * FRAME_VALUES);
        let mut bytes = vec![0u8; FRAME_VALUES * 4];
        for &f in &desc.frame_indices {
            let (sample_id, pos) = self
                .frames
                .get(&(desc.video_id.clone(), f))
                .ok_or_else(|| Error::Load {
                    what: format!("sample {}", desc.sample_id()),
                    reason: format!("frame {f} of {} is not in the cache", desc.video_id),
                })?;
            let path = self.cache.data_path(sample_id);
            let mut file = fs::File::open(&path).map_err(|e| Error::Load {
                what: format!("sample {}", desc.sample_id()),
                reason: format!("{}: {e}", path.display()),
            })?;
            file.seek(SeekFrom::Start((pos * FRAME_VALUES * 4) as u64))
                .and_then(|_| file.read_exact(&mut bytes))
                .map_err(|e| Error::Load {
                    what: format!("sample {}", desc.sample_id()),
                    reason: format!("{}: {e}", path.display()),
                })?;
            out.extend(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        Ok(out)
    }
}

/// Per-channel normalisation applied to crops before the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

impl Normalization {
    pub fn apply(&self, data: &mut [f32]) {
        for px in data.chunks_exact_mut(3) {
            for ((v, m), s) in px.iter_mut().zip(self.mean).zip(self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// A batch of normalised windows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub sample_ids: Vec<String>,
    pub labels: Vec<Label>,
    /// `B × T × 224 × 224 × 3`, channel-last.
    pub frames: Vec<f32>,
    pub time: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Network input `[B·T, 3, 224, 224]`.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        frames_to_nchw(&self.frames, self.len() * self.time, CROP_SIZE, CROP_SIZE)
    }

    pub fn targets<S: Scalar>(&self) -> Vec<S> {
        self.labels.iter().map(|l| S::from_f64(l.as_target())).collect()
    }
}

/// Iterator returned by [`load_batch`].
pub struct BatchIter<'a> {
    order: Vec<&'a SampleDescriptor>,
    source: &'a dyn SampleSource,
    batch_size: usize,
    norm: Normalization,
    pos: usize,
}

impl<'a> BatchIter<'a> {
    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Sample ids in emission order.
    pub fn order(&self) -> Vec<String> {
        self.order.iter().map(|d| d.sample_id()).collect()
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let chunk = &self.order[self.pos..(self.pos + self.batch_size).min(self.order.len())];
        self.pos += chunk.len();
        let time = chunk[0].len();
        if let Some(bad) = chunk.iter().find(|d| d.len() != time) {
            return Some(Err(Error::InvalidInput(format!(
                "sample {} has {} frames, batch expects {time}",
                bad.sample_id(),
                bad.len()
            ))));
        }
        // Parallel reads; collect keeps the emission order.
        let loaded: Result<Vec<Vec<f32>>> = chunk.par_iter().map(|d| self.source.load(d)).collect();
        let loaded = match loaded {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        let mut frames = Vec::with_capacity(chunk.len() * time * FRAME_VALUES);
        for (d, data) in chunk.iter().zip(loaded) {
            if data.len() != time * FRAME_VALUES {
                return Some(Err(Error::Load {
                    what: format!("sample {}", d.sample_id()),
                    reason: format!("{} values, expected {}", data.len(), time * FRAME_VALUES),
                }));
            }
            frames.extend_from_slice(&data);
        }
        self.norm.apply(&mut frames);
        Some(Ok(Batch {
            sample_ids: chunk.iter().map(|d| d.sample_id()).collect(),
            labels: chunk.iter().map(|d| d.label).collect(),
            frames,
            time,
        }))
    }
}

/// Batches over `descriptors`, shuffled by `shuffle_seed` when given.
/// The last batch may be partial.
pub fn load_batch<'a>(
    descriptors: &'a [SampleDescriptor],
    source: &'a dyn SampleSource,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    norm: Normalization,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<&SampleDescriptor> = descriptors.iter().collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter {
        order,
        source,
        batch_size,
        norm,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Manipulation, Split};
    use crate::tubelet::{build_tubelet, CropSettings, Frame, FrameGuide};

    /// Every value of a window equals its first frame index.
    struct Constant;

    impl SampleSource for Constant {
        fn load(&self, desc: &SampleDescriptor) -> Result<Vec<f32>> {
            Ok(desc
                .frame_indices
                .iter()
                .flat_map(|&f| std::iter::repeat_n(f as f32 / 100.0, FRAME_VALUES))
                .collect())
        }
    }

    fn descs(n: usize) -> Vec<SampleDescriptor> {
        (0..n)
            .map(|i| SampleDescriptor {
                video_id: format!("v{i}"),
                frame_indices: vec![i],
                label: if i % 2 == 0 { Label::Real } else { Label::Fake },
                split: Split::Train,
                manipulation: Manipulation::None,
            })
            .collect()
    }

    #[test]
    fn batch_sizes() {
        let d = descs(10);
        let sizes: Vec<usize> = load_batch(&d, &Constant, 4, None, Normalization::default())
            .unwrap()
            .map(|b| b.unwrap().len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn seeded_order_is_reproducible_permutation() {
        let d = descs(10);
        let ids = |seed| -> Vec<String> {
            load_batch(&d, &Constant, 3, seed, Normalization::default())
                .unwrap()
                .flat_map(|b| b.unwrap().sample_ids)
                .collect()
        };
        let a = ids(Some(5));
        assert_eq!(a, ids(Some(5)));
        let plain = ids(None);
        assert_ne!(a, plain);
        let (mut x, mut y) = (a.clone(), plain);
        x.sort();
        y.sort();
        assert_eq!(x, y);
    }

    #[test]
    fn normalisation_is_applied() {
        let d = descs(3);
        let b = load_batch(&d, &Constant, 3, None, Normalization::default())
            .unwrap()
            .next()
            .unwrap()
            .unwrap();
        assert_eq!(b.frames[2 * FRAME_VALUES], (0.02 - 0.5) / 0.5);
        let t = b.to_tensor::<f32>();
        assert_eq!(t.shape(), &[3, 3, CROP_SIZE, CROP_SIZE]);
        assert_eq!(b.targets::<f32>(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cache_source_serves_single_frames() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CropCache::new(dir.path());
        let frames: Vec<Frame> = (0..3)
            .map(|t| {
                Frame::from_fn(CROP_SIZE, CROP_SIZE, move |x, _| {
                    [t as f32 / 4.0, x as f32 / 224.0, 0.0]
                })
            })
            .collect();
        let tub = build_tubelet(
            &frames,
            &[10, 11, 12],
            FrameGuide::Unaligned,
            Label::Fake,
            "vid",
            &CropSettings::default(),
        )
        .unwrap();
        cache.write("vid_000010", &tub).unwrap();
        let source = CacheSource::open(dir.path()).unwrap();
        assert_eq!(source.frame_count(), 3);
        let window = SampleDescriptor {
            video_id: "vid".into(),
            frame_indices: vec![10, 11, 12],
            label: Label::Fake,
            split: Split::Test,
            manipulation: Manipulation::Synthetic,
        };
        assert_eq!(source.load(&window).unwrap(), tub.to_array());
        let single = window.single_frames().nth(2).unwrap();
        assert_eq!(source.load(&single).unwrap(), &tub.to_array()[2 * FRAME_VALUES..]);

        let missing = SampleDescriptor {
            frame_indices: vec![13],
            ..window
        };
        let err = source.load(&missing).unwrap_err();
        assert!(matches!(err, Error::Load { .. }));
        assert!(err.to_string().contains("vid_000013"));
    }
}
