//! Four-degree-of-freedom similarity transforms and their closed-form
//! least-squares estimation from point correspondences.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{LandmarkSet, Point2, ReferenceTemplate};
use crate::error::{Error, Result};

/// `p ↦ s·R(θ)·p + t`, mapping frame coordinates to crop coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians in `(-π, π]`.
    pub rotation: f64,
    pub translation: Point2,
}

fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            translation: [0.0, 0.0],
        }
    }

    /// Panics if `scale` is not a positive finite number.
    pub fn new(scale: f64, rotation: f64, translation: Point2) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "similarity scale must be positive");
        Self {
            scale,
            rotation: wrap_angle(rotation),
            translation,
        }
    }

    /// `[[s·cosθ, −s·sinθ, tx], [s·sinθ, s·cosθ, ty]]`.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let (a, b) = (self.scale * cos, self.scale * sin);
        [[a, -b, self.translation[0]], [b, a, self.translation[1]]]
    }

    /// Inverse of [`matrix`](Self::matrix). Fails when the matrix is not a
    /// similarity (unequal column norms, shear or reflection).
    pub fn from_matrix(m: [[f64; 3]; 2]) -> Result<Self> {
        let (a, b) = (m[0][0], m[1][0]);
        let tol = 1e-9 * (a.abs() + b.abs()).max(1.0);
        if (m[1][1] - a).abs() > tol || (m[0][1] + b).abs() > tol {
            return Err(Error::InvalidInput("matrix is not a similarity transform".into()));
        }
        let scale = a.hypot(b);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Degenerate("similarity matrix has zero scale".into()));
        }
        Ok(Self {
            scale,
            rotation: wrap_angle(b.atan2(a)),
            translation: [m[0][2], m[1][2]],
        })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = self.matrix();
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv = Self {
            scale: 1.0 / self.scale,
            rotation: wrap_angle(-self.rotation),
            translation: [0.0, 0.0],
        };
        let t = inv.apply(self.translation);
        Self {
            translation: [-t[0], -t[1]],
            ..inv
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Self {
        let t = self.apply(first.translation);
        Self {
            scale: self.scale * first.scale,
            rotation: wrap_angle(self.rotation + first.rotation),
            translation: t,
        }
    }
}

/// Sum of squared distances `Σ‖T(srcᵢ) − dstᵢ‖²`.
pub fn alignment_residual(src: &[Point2], dst: &[Point2], t: &SimilarityTransform) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(&p, &q)| {
            let r = t.apply(p);
            (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
        })
        .sum()
}

/// Least-squares similarity between two equally sized point sets.
pub fn fit_similarity(src: &[Point2], dst: &[Point2]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::InvalidInput(format!(
            "point sets differ in size ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.iter().chain(dst).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("non-finite landmark coordinate".into()));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point2]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    };
    let (ms, md) = (mean(src), mean(dst));

    // With centred coordinates the optimal (s·cosθ, s·sinθ) pair is
    // (Σ p·q, Σ p×q) / Σ‖p‖².
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p[0] - ms[0], p[1] - ms[1]);
        let (qx, qy) = (q[0] - md[0], q[1] - md[1]);
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
        norm += px * px + py * py;
    }
    let spread = src.iter().map(|p| p[0].abs().max(p[1].abs())).fold(1.0, f64::max);
    if norm <= 1e-12 * spread * spread * n {
        return Err(Error::Degenerate("source landmarks are coincident".into()));
    }
    let (a, b) = (dot / norm, cross / norm);
    let scale = a.hypot(b);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate("reference points are coincident".into()));
    }
    let rotation = b.atan2(a);
    let tx = md[0] - (a * ms[0] - b * ms[1]);
    let ty = md[1] - (b * ms[0] + a * ms[1]);
    Ok(SimilarityTransform {
        scale,
        rotation: wrap_angle(rotation),
        translation: [tx, ty],
    })
}

/// Transform that maps the observed landmarks onto the reference template.
pub fn estimate_similarity(src: &LandmarkSet, reference: &ReferenceTemplate) -> Result<SimilarityTransform> {
    fit_similarity(src.points(), reference.points())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_round_trip() {
        let t = SimilarityTransform::new(1.7, -2.9, [12.5, -3.25]);
        let back = SimilarityTransform::from_matrix(t.matrix()).unwrap();
        assert!((back.scale - t.scale).abs() < 1e-12);
        assert!((back.rotation - t.rotation).abs() < 1e-12);
        assert_eq!(back.translation, t.translation);
    }

    #[test]
    fn rotation_stays_in_half_open_interval() {
        let t = SimilarityTransform::new(1.0, -PI, [0.0, 0.0]);
        assert!((t.rotation - PI).abs() < 1e-15);
        let t = SimilarityTransform::new(1.0, 3.0 * PI, [0.0, 0.0]);
        assert!((t.rotation - PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_shear() {
        let m = [[1.0, 0.2, 0.0], [0.0, 1.0, 0.0]];
        assert!(SimilarityTransform::from_matrix(m).is_err());
    }

    #[test]
    fn identity_and_pure_translation() {
        let reference = ReferenceTemplate::default();
        let t = estimate_similarity(&LandmarkSet::new(*reference.points_array()).unwrap(), &reference).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation[0].abs() < 1e-9 && t.translation[1].abs() < 1e-9);

        let shifted = reference.points_array().map(|p| [p[0] + 10.0, p[1] - 5.0]);
        let src = LandmarkSet::new(shifted).unwrap();
        let t = estimate_similarity(&src, &reference).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!((t.translation[0] + 10.0).abs() < 1e-9);
        assert!((t.translation[1] - 5.0).abs() < 1e-9);
        assert!(alignment_residual(src.points(), reference.points(), &t) < 1e-18);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let src = LandmarkSet::new([[5.0, 5.0]; 7]).unwrap();
        let err = estimate_similarity(&src, &ReferenceTemplate::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    proptest! {
        #[test]
        fn composition_multiplies_scales(
            s1 in 0.1f64..5.0, s2 in 0.1f64..5.0,
            r1 in -3.0f64..3.0, r2 in -3.0f64..3.0,
            tx in -50.0f64..50.0, ty in -50.0f64..50.0,
            px in -100.0f64..100.0, py in -100.0f64..100.0,
        ) {
            let a = SimilarityTransform::new(s1, r1, [tx, ty]);
            let b = SimilarityTransform::new(s2, r2, [ty, tx]);
            let c = a.compose(&b);
            prop_assert!((c.scale - s1 * s2).abs() < 1e-12 * s1 * s2);
            let direct = a.apply(b.apply([px, py]));
            let composed = c.apply([px, py]);
            prop_assert!((direct[0] - composed[0]).abs() < 1e-9);
            prop_assert!((direct[1] - composed[1]).abs() < 1e-9);
            let back = a.inverse().apply(a.apply([px, py]));
            prop_assert!((back[0] - px).abs() < 1e-9 && (back[1] - py).abs() < 1e-9);
        }

        #[test]
        fn parameter_matrix_round_trip(s in 0.01f64..100.0, r in -3.1f64..3.1, tx in -1e3f64..1e3, ty in -1e3f64..1e3) {
            let t = SimilarityTransform::new(s, r, [tx, ty]);
            let back = SimilarityTransform::from_matrix(t.matrix()).unwrap();
            prop_assert!((back.scale - s).abs() < 1e-10 * s.max(1.0));
            prop_assert!((back.rotation - t.rotation).abs() < 1e-10);
            prop_assert!((back.translation[0] - tx).abs() < 1e-10);
            prop_assert!((back.translation[1] - ty).abs() < 1e-10);
        }
    }
}
