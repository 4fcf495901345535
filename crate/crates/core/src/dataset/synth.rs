//! Synthetic benchmark whose classes differ only across frames.
//!
//! Every video shows a disc with a low-frequency sinusoidal texture on a
//! flat background, plus fresh Gaussian pixel noise in every frame. Real
//! videos advance the texture phase at a constant `drift_rate` per frame
//! from a uniform random start; fake videos draw every frame's phase
//! uniformly and jitter the disc radius by up to `flicker_amplitude`
//! pixels. A single frame therefore has the same distribution in both
//! classes (up to the tiny radius jitter), and the label is only visible
//! in how consecutive frames relate.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loader::SampleSource;
use super::{
    frame_file_name, label_dir, window_starts, Manipulation, SampleDescriptor, Split, LANDMARKS_FILE,
    MANIPULATIONS_FILE, MASKS_DIR, SPLITS_FILE,
};
use crate::error::{Error, Result};
use crate::tubelet::io::{write_landmarks, LandmarkRecord};
use crate::tubelet::{crop_full_frame, Frame, Label, Mask, Point2, ReferenceTemplate, CROP_SIZE, DENSE_LANDMARK_COUNT};

pub const CONFIG_FILE: &str = "synth_config.json";

/// Standard deviation of the per-pixel noise, in intensity units.
pub const NOISE_STD: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_videos_per_class: usize,
    pub frames_per_video: usize,
    pub image_size: usize,
    /// Peak radius jitter of fake videos, pixels, in `[0, image_size / 16]`.
    pub flicker_amplitude: f64,
    /// Phase advance of real videos, radians per frame, in `[0, π]`.
    pub drift_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos_per_class: 200,
            frames_per_video: 10,
            image_size: CROP_SIZE,
            flicker_amplitude: 1.5,
            drift_rate: 0.2,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_videos_per_class == 0 || self.frames_per_video == 0 || self.image_size < 8 {
            return fail("synthetic counts must be positive and image_size >= 8".into());
        }
        if self.n_videos_per_class > 9999 {
            return fail("at most 9999 videos per class".into());
        }
        let max_flicker = self.image_size as f64 / 16.0;
        if !(0.0..=max_flicker).contains(&self.flicker_amplitude) {
            return fail(format!("flicker_amplitude must lie in [0, {max_flicker}]"));
        }
        if !(0.0..=PI).contains(&self.drift_rate) {
            return fail("drift_rate must lie in [0, π]".into());
        }
        Ok(())
    }
}

/// Split of the `i`-th video of a class: 3 of every 20 go to validation
/// and 3 to test.
pub fn split_for_index(i: usize) -> Split {
    match i % 20 {
        3 | 10 | 17 => Split::Val,
        6 | 13 | 19 => Split::Test,
        _ => Split::Train,
    }
}

pub fn video_id(label: Label, index: usize) -> String {
    format!("{}_{index:04}", label_dir(label))
}

pub fn parse_video_id(id: &str) -> Option<(Label, usize)> {
    let (class, num) = id.split_once('_')?;
    let label = match class {
        "real" => Label::Real,
        "fake" => Label::Fake,
        _ => return None,
    };
    Some((label, num.parse().ok()?))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-video scene parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthVideo {
    pub label: Label,
    pub index: usize,
    pub centre: Point2,
    pub radius: f64,
    pub wavelength: f64,
    pub orientation: f64,
    pub tint: [f64; 3],
    pub background: f64,
    pub phase0: f64,
    pub direction: f64,
    seed: u64,
    size: usize,
    flicker: f64,
    drift: f64,
}

impl SynthVideo {
    pub fn new(cfg: &SynthConfig, label: Label, index: usize) -> Self {
        let seed = splitmix(splitmix(cfg.seed) ^ ((label.as_u8() as u64) << 40) ^ index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = cfg.image_size as f64;
        let radius = rng.random_range(0.22..0.32) * s;
        let centre = [
            (s - 1.0) / 2.0 + rng.random_range(-0.08..0.08) * s,
            (s - 1.0) / 2.0 + rng.random_range(-0.08..0.08) * s,
        ];
        Self {
            label,
            index,
            centre,
            radius,
            wavelength: rng.random_range(5.0..10.0) * radius,
            orientation: rng.random_range(0.0..PI),
            tint: [
                rng.random_range(0.7..1.0),
                rng.random_range(0.7..1.0),
                rng.random_range(0.7..1.0),
            ],
            background: rng.random_range(0.2..0.8),
            phase0: rng.random_range(0.0..TAU),
            direction: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            seed,
            size: cfg.image_size,
            flicker: cfg.flicker_amplitude,
            drift: cfg.drift_rate,
        }
    }

    pub fn id(&self) -> String {
        video_id(self.label, self.index)
    }

    fn frame_rng(&self, t: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(t as u64 + 1)))
    }

    /// Texture phase and disc radius of frame `t`, plus the RNG that
    /// supplies the frame's pixel noise.
    fn frame_state(&self, t: usize) -> (f64, f64, ChaCha8Rng) {
        let mut rng = self.frame_rng(t);
        match self.label {
            Label::Real => (self.phase0 + self.direction * self.drift * t as f64, self.radius, rng),
            Label::Fake => {
                let phase = rng.random_range(0.0..TAU);
                let radius = self.radius + self.flicker * rng.random_range(-1.0..=1.0);
                (phase, radius, rng)
            }
        }
    }

    /// Frame `t`, quantised to 8 bits like the PNG written to disk.
    pub fn render(&self, t: usize) -> Frame {
        let (phase, radius, mut rng) = self.frame_state(t);
        let noise = Normal::new(0.0, NOISE_STD).expect("finite std");
        let (c, s) = (self.orientation.cos(), self.orientation.sin());
        let k = TAU / self.wavelength;
        let n = self.size;
        let mut data = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            let dy = y as f64 - self.centre[1];
            for x in 0..n {
                let dx = x as f64 - self.centre[0];
                let alpha = (radius - (dx * dx + dy * dy).sqrt() + 0.5).clamp(0.0, 1.0);
                let v = 0.5 + 0.4 * (k * (dx * c + dy * s) + phase).sin();
                for tint in self.tint {
                    let clean = alpha * v * tint + (1.0 - alpha) * self.background;
                    let px = (clean + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    data.push(((px * 255.0).round() / 255.0) as f32);
                }
            }
        }
        Frame::from_vec(n, n, data).expect("sized buffer")
    }

    /// Disc pixels of frame `t`.
    pub fn mask(&self, t: usize) -> Mask {
        let (_, radius, _) = self.frame_state(t);
        Mask::from_fn(self.size, self.size, |x, y| {
            let (dx, dy) = (x as f64 - self.centre[0], y as f64 - self.centre[1]);
            (dx * dx + dy * dy).sqrt() <= radius
        })
    }

    /// Dense landmarks: the canonical layout mapped onto the base disc.
    pub fn landmarks(&self) -> Vec<Point2> {
        let mid = CROP_SIZE as f64 / 2.0;
        let scale = self.radius / LAYOUT_RADIUS;
        canonical_dense_layout()
            .iter()
            .map(|p| {
                [
                    self.centre[0] + (p[0] - mid) * scale,
                    self.centre[1] + (p[1] - mid) * scale,
                ]
            })
            .collect()
    }
}

/// Radius, in crop pixels, of the disc that the canonical layout fills.
pub const LAYOUT_RADIUS: f64 = 80.0;

/// A frontal 68-point layout in 224-pixel crop coordinates whose seven
/// alignment points coincide with the default reference template.
pub fn canonical_dense_layout() -> Vec<Point2> {
    let mut pts = vec![[0.0; 2]; DENSE_LANDMARK_COUNT];
    // Jaw 0-16 along the lower half circle.
    for (i, p) in pts.iter_mut().enumerate().take(17) {
        let a = PI * (i as f64 / 16.0);
        *p = [112.0 - 70.0 * a.cos(), 112.0 + 70.0 * a.sin() * 0.9];
    }
    // Brows 17-26.
    for i in 0..10 {
        let side = if i < 5 { -1.0 } else { 1.0 };
        let k = (i % 5) as f64;
        let x = if side < 0.0 { 62.0 + 9.0 * k } else { 126.0 + 9.0 * k };
        pts[17 + i] = [x, 76.0 - 3.0 * (2.0 - (k - 2.0).abs())];
    }
    // Nose bridge 27-30 and base 31-35.
    for i in 0..4 {
        pts[27 + i] = [112.0, 96.0 + 32.8 * i as f64 / 3.0];
    }
    for i in 0..5 {
        pts[31 + i] = [100.0 + 6.0 * i as f64, 134.0];
    }
    // Eyes 36-41 and 42-47; corners come from the template.
    let template = ReferenceTemplate::default();
    let tp = template.points_array();
    for (base, outer, inner) in [(36usize, tp[0], tp[1]), (42, tp[2], tp[3])] {
        let (a, b) = (outer, inner);
        pts[base] = a;
        pts[base + 3] = b;
        let lerp = |f: f64, dy: f64| [a[0] + (b[0] - a[0]) * f, a[1] + dy];
        pts[base + 1] = lerp(1.0 / 3.0, -4.0);
        pts[base + 2] = lerp(2.0 / 3.0, -4.0);
        pts[base + 4] = lerp(2.0 / 3.0, 4.0);
        pts[base + 5] = lerp(1.0 / 3.0, 4.0);
    }
    pts[30] = tp[4];
    // Mouth 48-67, corners from the template.
    let (ml, mr) = (tp[5], tp[6]);
    for i in 0..12 {
        let a = TAU * i as f64 / 12.0;
        pts[48 + i] = [112.0 - (mr[0] - ml[0]) / 2.0 * a.cos(), ml[1] + 8.0 * a.sin()];
    }
    for i in 0..8 {
        let a = TAU * i as f64 / 8.0;
        pts[60 + i] = [112.0 - 15.0 * a.cos(), ml[1] + 3.0 * a.sin()];
    }
    pts[48] = ml;
    pts[54] = mr;
    pts
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the benchmark under `out` (which must be absent or empty) and
/// returns the dataset root.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if entries.next().is_some() {
            return Err(Error::Config(format!(
                "output directory {} is not empty",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let videos: Vec<SynthVideo> = [Label::Real, Label::Fake]
        .iter()
        .flat_map(|&l| (0..cfg.n_videos_per_class).map(move |i| SynthVideo::new(cfg, l, i)))
        .collect();
    videos.par_iter().try_for_each(|v| -> Result<()> {
        let id = v.id();
        let dir = out.join(label_dir(v.label)).join(&id);
        let mask_dir = out.join(MASKS_DIR).join(&id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
        for t in 0..cfg.frames_per_video {
            v.render(t).save_png(&dir.join(frame_file_name(t)))?;
            v.mask(t).save_png(&mask_dir.join(frame_file_name(t)))?;
        }
        Ok(())
    })?;

    let mut splits = BTreeMap::new();
    let mut manipulations = BTreeMap::new();
    let mut records = Vec::new();
    for v in &videos {
        splits.insert(v.id(), split_for_index(v.index));
        if v.label == Label::Fake {
            manipulations.insert(v.id(), Manipulation::Synthetic);
        }
        let points = v.landmarks();
        for t in 0..cfg.frames_per_video {
            records.push(LandmarkRecord {
                video_id: v.id(),
                frame_index: t,
                points: points.clone(),
            });
        }
    }
    write_json(&out.join(SPLITS_FILE), &splits)?;
    write_json(&out.join(MANIPULATIONS_FILE), &manipulations)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    write_landmarks(&out.join(LANDMARKS_FILE), &records)?;
    Ok(out.to_path_buf())
}

/// Renders benchmark windows on demand instead of reading them from disk.
/// Frames are quantised exactly as the written PNGs and, like the
/// unaligned preprocessing mode, resized as whole frames to the crop size.
#[derive(Clone, Debug)]
pub struct SynthSource {
    cfg: SynthConfig,
}

impl SynthSource {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Descriptors in the order [`super::index_dataset`] produces for the
    /// generated tree.
    pub fn descriptors(&self, t: usize, stride: usize) -> Vec<SampleDescriptor> {
        let mut out = Vec::new();
        for label in [Label::Real, Label::Fake] {
            for i in 0..self.cfg.n_videos_per_class {
                if self.cfg.frames_per_video < t {
                    continue;
                }
                for start in window_starts(self.cfg.frames_per_video, t, stride) {
                    out.push(SampleDescriptor {
                        video_id: video_id(label, i),
                        frame_indices: (start..start + t).collect(),
                        label,
                        split: split_for_index(i),
                        manipulation: match label {
                            Label::Real => Manipulation::None,
                            Label::Fake => Manipulation::Synthetic,
                        },
                    });
                }
            }
        }
        out
    }
}

impl SampleSource for SynthSource {
    fn load(&self, desc: &SampleDescriptor) -> Result<Vec<f32>> {
        let (label, index) = parse_video_id(&desc.video_id)
            .filter(|&(l, i)| l == desc.label && i < self.cfg.n_videos_per_class)
            .ok_or_else(|| Error::Load {
                what: format!("sample {}", desc.sample_id()),
                reason: "not a video of this synthetic benchmark".into(),
            })?;
        let video = SynthVideo::new(&self.cfg, label, index);
        let mut out = Vec::with_capacity(desc.len() * CROP_SIZE * CROP_SIZE * 3);
        for &t in &desc.frame_indices {
            if t >= self.cfg.frames_per_video {
                return Err(Error::Load {
                    what: format!("sample {}", desc.sample_id()),
                    reason: format!("frame {t} beyond the video length"),
                });
            }
            let frame = video.render(t);
            if self.cfg.image_size == CROP_SIZE {
                out.extend_from_slice(frame.data());
            } else {
                out.extend_from_slice(crop_full_frame(&frame).image.data());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tubelet::{estimate_similarity, select_landmarks};

    fn small(n: usize, frames: usize) -> SynthConfig {
        SynthConfig {
            n_videos_per_class: n,
            frames_per_video: frames,
            image_size: 64,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_frames_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let root = synth_generate(&small(1, 5), &dir.path().join("d")).unwrap();
        let count = ["real", "fake"]
            .iter()
            .flat_map(|c| fs::read_dir(root.join(c)).unwrap())
            .flat_map(|v| fs::read_dir(v.unwrap().path()).unwrap())
            .count();
        assert_eq!(count, 10);
    }

    #[test]
    fn generation_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(2, 3);
        let a = synth_generate(&cfg, &dir.path().join("a")).unwrap();
        let b = synth_generate(&cfg, &dir.path().join("b")).unwrap();
        for rel in [
            "fake/fake_0001/frame_000002.png",
            "real/real_0000/frame_000000.png",
            "masks/fake_0000/frame_000001.png",
            LANDMARKS_FILE,
            SPLITS_FILE,
        ] {
            assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
        }
    }

    #[test]
    fn refuses_non_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), b"").unwrap();
        assert!(matches!(
            synth_generate(&small(1, 1), dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn source_matches_written_frames() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            image_size: CROP_SIZE,
            ..small(1, 2)
        };
        let root = synth_generate(&cfg, &dir.path().join("d")).unwrap();
        let src = SynthSource::new(cfg).unwrap();
        let desc = &src.descriptors(2, 2)[1];
        assert_eq!(desc.video_id, "fake_0000");
        let loaded = src.load(desc).unwrap();
        let disk = Frame::load_png(&root.join("fake/fake_0000/frame_000001.png")).unwrap();
        assert_eq!(&loaded[CROP_SIZE * CROP_SIZE * 3..], disk.data());
    }

    #[test]
    fn descriptors_match_index() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(4, 7);
        let root = synth_generate(&cfg, &dir.path().join("d")).unwrap();
        let idx = super::super::index_dataset(&root, 3, 2).unwrap();
        assert!(idx.warnings.is_empty());
        assert_eq!(idx.samples, SynthSource::new(cfg).unwrap().descriptors(3, 2));
    }

    #[test]
    fn layout_hits_template() {
        let dense = canonical_dense_layout();
        let sparse = select_landmarks(&dense).unwrap();
        assert_eq!(sparse.points_array(), ReferenceTemplate::default().points_array());
    }

    #[test]
    fn landmarks_align_disc_to_template() {
        let cfg = SynthConfig::default();
        let v = SynthVideo::new(&cfg, Label::Fake, 3);
        let sparse = select_landmarks(&v.landmarks()).unwrap();
        let t = estimate_similarity(&sparse, &ReferenceTemplate::default()).unwrap();
        assert!((t.scale - LAYOUT_RADIUS / v.radius).abs() < 1e-9);
        assert!(t.rotation.abs() < 1e-9);
        let c = t.apply(v.centre);
        assert!((c[0] - 112.0).abs() < 1e-6 && (c[1] - 112.0).abs() < 1e-6);
    }

    #[test]
    fn real_phase_drifts_and_fake_radius_flickers() {
        let cfg = SynthConfig::default();
        let real = SynthVideo::new(&cfg, Label::Real, 0);
        let (p0, r0, _) = real.frame_state(0);
        let (p1, r1, _) = real.frame_state(1);
        assert!(((p1 - p0).abs() - 0.2).abs() < 1e-12);
        assert_eq!(r0, r1);
        let fake = SynthVideo::new(&cfg, Label::Fake, 0);
        let radii: Vec<f64> = (0..10).map(|t| fake.frame_state(t).1).collect();
        assert!(radii.iter().all(|r| (r - fake.radius).abs() <= 1.5));
        assert!(radii.iter().any(|r| (r - fake.radius).abs() > 0.1));
    }

    #[test]
    fn split_rule_is_by_video() {
        let splits: Vec<Split> = (0..20).map(split_for_index).collect();
        assert_eq!(splits.iter().filter(|&&s| s == Split::Val).count(), 3);
        assert_eq!(splits.iter().filter(|&&s| s == Split::Test).count(), 3);
        assert_eq!(parse_video_id("fake_0012"), Some((Label::Fake, 12)));
        assert_eq!(parse_video_id("other_1"), None);
    }

    #[test]
    fn config_ranges() {
        assert!(SynthConfig {
            flicker_amplitude: -1.0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            drift_rate: 4.0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            n_videos_per_class: 0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig::default().validate().is_ok());
    }
}
