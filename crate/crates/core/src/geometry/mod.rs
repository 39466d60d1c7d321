//! Point clouds, triangle meshes and the canonical `[-1, 1]^3` domain.

mod mesh;
pub mod primitives;

pub use mesh::{extract_edges, sample_surface, TriMesh};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// A non-empty, unordered set of 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: &[Vec3]) -> Self {
        let mut bb = Self::empty();
        for p in points {
            bb.grow(p);
        }
        bb
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

/// Isotropic similarity mapping raw coordinates into the canonical domain:
/// `normalized = (raw - center) * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Fits the longest axis of `bb` to `[-1, 1]`, centered at the origin.
    pub fn fit(bb: &Aabb) -> Self {
        let longest = bb.extent().max();
        let scale = if longest > 0.0 { 2.0 / longest } else { 1.0 };
        let c = bb.center();
        Self {
            center: [c.x, c.y, c.z],
            scale,
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center()) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.center()
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    pub fn invert_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.invert(p)).collect()
    }
}

/// Frames `0..=T` of a point-cloud sequence sharing one normalization.
#[derive(Clone, Debug)]
pub struct PointCloudSequence {
    frames: Vec<PointCloud>,
    normalization: NormalizationTransform,
}

impl PointCloudSequence {
    /// Wraps raw frames; the normalization is the identity until
    /// [`normalize_sequence`] is applied.
    pub fn new(frames: Vec<PointCloud>) -> Result<Self> {
        Self::with_normalization(frames, NormalizationTransform::identity())
    }

    pub fn with_normalization(
        frames: Vec<PointCloud>,
        normalization: NormalizationTransform,
    ) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::invalid(format!(
                "a sequence needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        Ok(Self {
            frames,
            normalization,
        })
    }

    pub fn frames(&self) -> &[PointCloud] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &PointCloud {
        &self.frames[t]
    }

    /// Number of frames, `T + 1`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Index of the last frame, `T`.
    pub fn last_index(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn normalization(&self) -> &NormalizationTransform {
        &self.normalization
    }

    pub fn joint_bounding_box(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for f in &self.frames {
            bb.merge(&f.bounding_box());
        }
        bb
    }
}

/// Maps every frame into `[-1, 1]^3` with one transform fitted to the joint
/// bounding box of the whole sequence.
///
/// The returned sequence records the composition of any normalization the
/// input already carried, so `normalization().invert` always goes back to
/// the original input units.
pub fn normalize_sequence(
    raw: &PointCloudSequence,
) -> Result<(PointCloudSequence, NormalizationTransform)> {
    if let Some(t) = raw.frames.iter().position(|f| f.is_empty()) {
        return Err(Error::invalid(format!("frame {t} is empty")));
    }
    let tf = NormalizationTransform::fit(&raw.joint_bounding_box());
    let frames = raw
        .frames
        .iter()
        .map(|f| PointCloud::new(tf.apply_all(f.points())))
        .collect::<Result<Vec<_>>>()?;
    let prior = raw.normalization;
    // raw = (orig - c0) * s0, out = (raw - c1) * s1
    //     = (orig - (c0 + c1 / s0)) * (s0 * s1)
    let composed_center = prior.center() + tf.center() / prior.scale;
    let composed = NormalizationTransform {
        center: [composed_center.x, composed_center.y, composed_center.z],
        scale: prior.scale * tf.scale,
    };
    Ok((PointCloudSequence::with_normalization(frames, composed)?, tf))
}
