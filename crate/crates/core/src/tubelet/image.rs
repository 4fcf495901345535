//! Frames, masks and the resampling routines used to cut face crops.

use std::path::Path;

use image::{GrayImage, RgbImage};

use super::similarity::SimilarityTransform;
use crate::error::{Error, Result};

/// RGB image, row-major channel-last, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "frame buffer of {} values does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    /// Quantises to 8 bits with rounding.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer sized from dimensions")
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres at
    /// integers); neighbours outside the frame contribute zero.
    #[inline]
    pub fn sample_zero(&self, x: f64, y: f64) -> [f32; 3] {
        let (fx, fy) = (x.floor(), y.floor());
        let (ax, ay) = ((x - fx) as f32, (y - fy) as f32);
        let (x0, y0) = (fx as isize, fy as isize);
        let fetch = |xx: isize, yy: isize| {
            if xx < 0 || yy < 0 || xx >= self.width as isize || yy >= self.height as isize {
                [0.0; 3]
            } else {
                self.pixel(xx as usize, yy as usize)
            }
        };
        blend(
            fetch(x0, y0),
            fetch(x0 + 1, y0),
            fetch(x0, y0 + 1),
            fetch(x0 + 1, y0 + 1),
            ax,
            ay,
        )
    }

    /// Bilinear sample with edge replication.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> [f32; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (fx, fy) = (x.floor(), y.floor());
        let (ax, ay) = ((x - fx) as f32, (y - fy) as f32);
        let (x0, y0) = (fx as usize, fy as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        blend(
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
            ax,
            ay,
        )
    }
}

#[inline]
fn blend(v00: [f32; 3], v01: [f32; 3], v10: [f32; 3], v11: [f32; 3], ax: f32, ay: f32) -> [f32; 3] {
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = v00[c] + (v01[c] - v00[c]) * ax;
        let bottom = v10[c] + (v11[c] - v10[c]) * ax;
        out[c] = top + (bottom - top) * ay;
    }
    out
}

/// Binary face mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

/// Inclusive pixel bounds of a mask's foreground.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Mask {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Nonzero pixels of a single-channel PNG are foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma8();
        Ok(Self {
            width: gray.width() as usize,
            height: gray.height() as usize,
            data: gray.as_raw().iter().map(|&v| v != 0).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer sized from dimensions")
            .save(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn bounding_box(&self) -> Option<PixelBox> {
        let mut bbox: Option<PixelBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                bbox = Some(match bbox {
                    None => PixelBox {
                        x0: x,
                        y0: y,
                        x1: x,
                        y1: y,
                    },
                    Some(b) => PixelBox {
                        x0: b.x0.min(x),
                        y0: b.y0.min(y),
                        x1: b.x1.max(x),
                        y1: b.y1.max(y),
                    },
                });
            }
        }
        bbox
    }
}

/// Output pixel `(x, y)` takes the bilinear sample of `frame` at
/// `t⁻¹(x, y)`; samples that fall outside the frame are zero-filled.
pub fn warp_similarity(frame: &Frame, t: &SimilarityTransform, size: usize) -> Frame {
    let inv = t.inverse();
    let m = inv.matrix();
    let mut out = Frame::zeros(size, size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let sx = m[0][0] * xf + m[0][1] * yf + m[0][2];
            let sy = m[1][0] * xf + m[1][1] * yf + m[1][2];
            out.set_pixel(x, y, frame.sample_zero(sx, sy));
        }
    }
    out
}

/// Resamples the continuous window `[x0, x0 + w) × [y0, y0 + h)` to
/// `size × size` using pixel-centre alignment and edge replication.
pub fn resize_window(frame: &Frame, x0: f64, y0: f64, w: f64, h: f64, size: usize) -> Frame {
    let (sx, sy) = (w / size as f64, h / size as f64);
    let mut out = Frame::zeros(size, size);
    for y in 0..size {
        let src_y = y0 + (y as f64 + 0.5) * sy - 0.5;
        for x in 0..size {
            let src_x = x0 + (x as f64 + 0.5) * sx - 0.5;
            out.set_pixel(x, y, frame.sample_clamped(src_x, src_y));
        }
    }
    out
}
