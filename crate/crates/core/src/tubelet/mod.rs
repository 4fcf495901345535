//! Face tubelets: sequences of face crops registered to a common reference
//! frame so that rigid head motion is removed before detection.
//!
//! Three cropping modes are supported:
//! * `landmark` – seven sparse landmarks are fitted to a fixed reference
//!   template with a similarity transform and the frame is warped into a
//!   224×224 crop;
//! * `mask_bbox` – the bounding box of a face mask, grown by a margin,
//!   is resized to 224×224 (no rotation or scale normalisation);
//! * `none` – the whole frame is resized.

pub mod image;
pub mod io;
pub mod similarity;

use serde::{Deserialize, Serialize};

pub use self::image::{Frame, Mask, PixelBox};
use crate::error::{Error, Result};
pub use similarity::{estimate_similarity, fit_similarity, SimilarityTransform};

pub type Point2 = [f64; 2];

/// Side length of every face crop.
pub const CROP_SIZE: usize = 224;

/// Default growth of the mask bounding box on each side, as a fraction of
/// the box size.
pub const DEFAULT_MASK_MARGIN: f64 = 0.3;

/// Indices into the 68-point iBUG layout: outer/inner left eye corner,
/// inner/outer right eye corner, nose tip, left and right mouth corner.
pub const DENSE_TO_SPARSE: [usize; 7] = [36, 39, 42, 45, 30, 48, 54];

pub const DENSE_LANDMARK_COUNT: usize = 68;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(Error::InvalidInput(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub fn as_target(self) -> f64 {
        self.as_u8() as f64
    }
}

/// The seven sparse landmarks, in frame pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: [Point2; 7],
}

impl LandmarkSet {
    pub fn new(points: [Point2; 7]) -> Result<Self> {
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidInput("landmark coordinates must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn points_array(&self) -> &[Point2; 7] {
        &self.points
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> Self {
        Self {
            points: self.points.map(|p| t.apply(p)),
        }
    }
}

/// Picks the seven alignment landmarks out of a dense 68-point annotation.
pub fn select_landmarks(dense: &[Point2]) -> Result<LandmarkSet> {
    if dense.len() != DENSE_LANDMARK_COUNT {
        return Err(Error::InvalidInput(format!(
            "expected {DENSE_LANDMARK_COUNT} dense landmarks, got {}",
            dense.len()
        )));
    }
    LandmarkSet::new(DENSE_TO_SPARSE.map(|i| dense[i]))
}

/// Canonical landmark positions inside the crop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTemplate {
    points: [Point2; 7],
    crop_size: usize,
}

impl Default for ReferenceTemplate {
    /// Frontal layout for a loose 224 crop: eye corners on y = 0.4·224,
    /// nose tip at (0.5, 0.575)·224, mouth corners on y = 0.7·224.
    fn default() -> Self {
        Self {
            points: [
                [67.2, 89.6],
                [94.08, 89.6],
                [129.92, 89.6],
                [156.8, 89.6],
                [112.0, 128.8],
                [89.6, 156.8],
                [134.4, 156.8],
            ],
            crop_size: CROP_SIZE,
        }
    }
}

impl ReferenceTemplate {
    /// Validates containment in the crop, left-to-right eye order and
    /// mirror symmetry about the vertical midline.
    pub fn new(points: [Point2; 7], crop_size: usize) -> Result<Self> {
        let size = crop_size as f64;
        if points
            .iter()
            .any(|p| !(0.0..size).contains(&p[0]) || !(0.0..size).contains(&p[1]))
        {
            return Err(Error::InvalidInput("template points must lie inside the crop".into()));
        }
        if !(points[0][0] < points[1][0] && points[1][0] < points[2][0] && points[2][0] < points[3][0]) {
            return Err(Error::InvalidInput("eye corners must be ordered left to right".into()));
        }
        let mid = size / 2.0;
        let mirrored = |a: Point2, b: Point2| ((a[0] - mid) + (b[0] - mid)).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9;
        if !(mirrored(points[0], points[3])
            && mirrored(points[1], points[2])
            && mirrored(points[5], points[6])
            && (points[4][0] - mid).abs() < 1e-9)
        {
            return Err(Error::InvalidInput(
                "template must be symmetric about the midline".into(),
            ));
        }
        Ok(Self { points, crop_size })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn points_array(&self) -> &[Point2; 7] {
        &self.points
    }

    pub fn crop_size(&self) -> usize {
        self.crop_size
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    Landmark,
    MaskBbox,
    None,
}

impl std::fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlignmentMode::Landmark => "landmark",
            AlignmentMode::MaskBbox => "mask_bbox",
            AlignmentMode::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceCrop {
    pub image: Frame,
    pub source_frame_index: usize,
    pub alignment_mode: AlignmentMode,
}

/// Warps `frame` by `t` (frame → crop coordinates) into a 224×224 crop.
pub fn warp_crop(frame: &Frame, t: &SimilarityTransform) -> FaceCrop {
    FaceCrop {
        image: image::warp_similarity(frame, t, CROP_SIZE),
        source_frame_index: 0,
        alignment_mode: AlignmentMode::Landmark,
    }
}

/// Continuous crop window `(x0, y0, w, h)` for a mask: the foreground
/// bounding box grown by `margin` of its size on every side, clamped to
/// the frame.
pub fn mask_window(mask: &Mask, margin: f64) -> Result<(f64, f64, f64, f64)> {
    let b = mask.bounding_box().ok_or(Error::EmptyMask)?;
    let (bw, bh) = ((b.x1 - b.x0 + 1) as f64, (b.y1 - b.y0 + 1) as f64);
    let x0 = (b.x0 as f64 - margin * bw).max(0.0);
    let y0 = (b.y0 as f64 - margin * bh).max(0.0);
    let x1 = ((b.x1 + 1) as f64 + margin * bw).min(mask.width() as f64);
    let y1 = ((b.y1 + 1) as f64 + margin * bh).min(mask.height() as f64);
    Ok((x0, y0, x1 - x0, y1 - y0))
}

pub fn crop_from_mask(frame: &Frame, mask: &Mask, margin: f64) -> Result<FaceCrop> {
    if mask.width() != frame.width() || mask.height() != frame.height() {
        return Err(Error::InvalidInput(format!(
            "mask is {}x{} but frame is {}x{}",
            mask.width(),
            mask.height(),
            frame.width(),
            frame.height()
        )));
    }
    let (x0, y0, w, h) = mask_window(mask, margin)?;
    Ok(FaceCrop {
        image: image::resize_window(frame, x0, y0, w, h, CROP_SIZE),
        source_frame_index: 0,
        alignment_mode: AlignmentMode::MaskBbox,
    })
}

/// Whole-frame resize with no alignment.
pub fn crop_full_frame(frame: &Frame) -> FaceCrop {
    FaceCrop {
        image: image::resize_window(frame, 0.0, 0.0, frame.width() as f64, frame.height() as f64, CROP_SIZE),
        source_frame_index: 0,
        alignment_mode: AlignmentMode::None,
    }
}

/// Per-frame guidance for [`build_tubelet`].
#[derive(Clone, Copy, Debug)]
pub enum FrameGuide<'a> {
    Landmarks(&'a [LandmarkSet]),
    Masks(&'a [Mask]),
    Unaligned,
}

impl FrameGuide<'_> {
    pub fn mode(&self) -> AlignmentMode {
        match self {
            FrameGuide::Landmarks(_) => AlignmentMode::Landmark,
            FrameGuide::Masks(_) => AlignmentMode::MaskBbox,
            FrameGuide::Unaligned => AlignmentMode::None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CropSettings {
    pub reference: ReferenceTemplate,
    pub mask_margin: f64,
}

impl Default for CropSettings {
    fn default() -> Self {
        Self {
            reference: ReferenceTemplate::default(),
            mask_margin: DEFAULT_MASK_MARGIN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tubelet {
    pub crops: Vec<FaceCrop>,
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    pub label: Label,
}

impl Tubelet {
    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn alignment_mode(&self) -> Option<AlignmentMode> {
        self.crops.first().map(|c| c.alignment_mode)
    }

    /// Row-major `T × 224 × 224 × 3` values.
    pub fn to_array(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.crops.len() * CROP_SIZE * CROP_SIZE * 3);
        for c in &self.crops {
            out.extend_from_slice(c.image.data());
        }
        out
    }
}

/// Crops and aligns `frames` and assembles them into a tubelet.
pub fn build_tubelet(
    frames: &[Frame],
    frame_indices: &[usize],
    guide: FrameGuide<'_>,
    label: Label,
    video_id: &str,
    settings: &CropSettings,
) -> Result<Tubelet> {
    let t = frames.len();
    if t == 0 {
        return Err(Error::InvalidInput("a tubelet needs at least one frame".into()));
    }
    if frame_indices.len() != t {
        return Err(Error::InvalidInput(format!(
            "{} frame indices for {t} frames",
            frame_indices.len()
        )));
    }
    if frame_indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("frame indices must be strictly increasing".into()));
    }
    let guide_len = match guide {
        FrameGuide::Landmarks(l) => Some(l.len()),
        FrameGuide::Masks(m) => Some(m.len()),
        FrameGuide::Unaligned => None,
    };
    if let Some(n) = guide_len {
        if n != t {
            return Err(Error::InvalidInput(format!("{n} annotations for {t} frames")));
        }
    }

    let mut crops = Vec::with_capacity(t);
    for (i, (frame, &index)) in frames.iter().zip(frame_indices).enumerate() {
        let crop = match guide {
            FrameGuide::Landmarks(l) => estimate_similarity(&l[i], &settings.reference).map(|tr| warp_crop(frame, &tr)),
            FrameGuide::Masks(m) => crop_from_mask(frame, &m[i], settings.mask_margin),
            FrameGuide::Unaligned => Ok(crop_full_frame(frame)),
        }
        .map_err(|e| e.in_frame(index))?;
        crops.push(FaceCrop {
            source_frame_index: index,
            ..crop
        });
    }
    Ok(Tubelet {
        crops,
        video_id: video_id.to_string(),
        frame_indices: frame_indices.to_vec(),
        label,
    })
}
