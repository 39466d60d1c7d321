//! Reconstruction metrics: Chamfer distance, normal consistency, F-scores
//! and tracking error against synthetic ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{sample_surface, Aabb, TriMesh, Vec3};
use crate::spatial::NnIndex;
use crate::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 100_000;
/// CD values are commonly tabulated in units of 1e-5.
pub const CD_REPORT_SCALE: f64 = 1e5;

/// Maps a box into [0,1]^3 with its longest side becoming 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitBox {
    pub origin: [f64; 3],
    pub scale: f64,
}

impl UnitBox {
    pub fn fit(bb: &Aabb) -> Result<Self> {
        let longest = bb.extent().max();
        if !(longest > 0.0 && longest.is_finite()) {
            return Err(Error::DegenerateGeometry(format!("bounding box has longest side {longest}")));
        }
        Ok(Self {
            origin: [bb.min.x, bb.min.y, bb.min.z],
            scale: 1.0 / longest,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.origin)) * self.scale
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// How the F-score thresholds are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBase {
    /// fraction of the unit-box diagonal, sqrt(3)
    #[default]
    Diagonal,
    /// fraction of the unit-box edge
    Edge,
}

impl ThresholdBase {
    pub fn length(self) -> f64 {
        match self {
            ThresholdBase::Diagonal => 3f64.sqrt(),
            ThresholdBase::Edge => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub samples: usize,
    pub threshold_base: ThresholdBase,
    pub f_thresholds: [f64; 2],
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            threshold_base: ThresholdBase::Diagonal,
            f_thresholds: [0.005, 0.01],
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub cd: f64,
    /// `cd` in units of 1e-5
    pub cd_e5: f64,
    pub nc: f64,
    pub f_half: f64,
    pub f_one: f64,
    pub corr: Option<f64>,
}

/// Surface samples with their unit normals.
#[derive(Clone, Debug)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl SurfaceSamples {
    pub fn from_mesh(mesh: &TriMesh, n: usize, seed: u64) -> Result<Self> {
        let (cloud, normals) = sample_surface(mesh, n, seed)?;
        Ok(Self {
            points: cloud.into_points(),
            normals,
        })
    }
}

fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

struct OneWay {
    mean_d2: f64,
    mean_abs_cos: f64,
    within: [f64; 2],
}

fn one_way(from: &SurfaceSamples, to: &SurfaceSamples, index: &NnIndex, radii: [f64; 2]) -> OneWay {
    let hits: Vec<(usize, f64)> = from.points.par_iter().map(|p| index.nearest(p)).collect();
    let n = from.points.len() as f64;
    let (mut d2_sum, mut cos_sum) = (0.0, 0.0);
    let mut counts = [0usize; 2];
    for (i, &(j, d2)) in hits.iter().enumerate() {
        d2_sum += d2;
        cos_sum += from.normals[i].dot(&to.normals[j]).abs();
        let d = d2.sqrt();
        for k in 0..2 {
            if d < radii[k] {
                counts[k] += 1;
            }
        }
    }
    OneWay {
        mean_d2: d2_sum / n,
        mean_abs_cos: cos_sum / n,
        within: [counts[0] as f64 / n, counts[1] as f64 / n],
    }
}

/// Metrics between two sample sets already in unit-box coordinates.
pub fn metrics_from_samples(pred: &SurfaceSamples, gt: &SurfaceSamples, config: &MetricsConfig) -> Result<FrameMetrics> {
    let base = config.threshold_base.length();
    let radii = [config.f_thresholds[0] * base, config.f_thresholds[1] * base];
    let to_gt = one_way(pred, gt, &NnIndex::build(&gt.points)?, radii);
    let to_pred = one_way(gt, pred, &NnIndex::build(&pred.points)?, radii);
    let cd = to_gt.mean_d2 + to_pred.mean_d2;
    Ok(FrameMetrics {
        cd,
        cd_e5: cd * CD_REPORT_SCALE,
        nc: 0.5 * (to_gt.mean_abs_cos + to_pred.mean_abs_cos),
        f_half: f_score(to_gt.within[0], to_pred.within[0]),
        f_one: f_score(to_gt.within[1], to_pred.within[1]),
        corr: None,
    })
}

/// Normalizes both meshes by the ground truth's bounding box, samples each
/// with the configured seed and compares.
pub fn evaluate_frame(pred: &TriMesh, gt: &TriMesh, config: &MetricsConfig) -> Result<FrameMetrics> {
    let unit = UnitBox::fit(&gt.bounding_box())?;
    let pred = pred.map_vertices(|v| unit.apply(v));
    let gt = gt.map_vertices(|v| unit.apply(v));
    let a = SurfaceSamples::from_mesh(&pred, config.samples, config.seed)?;
    let b = SurfaceSamples::from_mesh(&gt, config.samples, config.seed)?;
    metrics_from_samples(&a, &b, config)
}

/// Mean distance between matching points of two tracks.
pub fn track_error(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid(format!("track sizes differ or are empty: {} vs {}", pred.len(), gt.len())));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).norm()).sum::<f64>() / pred.len() as f64)
}

/// Mean over frames and points of the distance between predicted and true
/// positions of the same material points.
pub fn correspondence_error(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid(format!("frame counts differ or are zero: {} vs {}", pred.len(), gt.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.len() != g.len() {
            return Err(Error::invalid(format!("frame {t}: {} predicted points vs {} true", p.len(), g.len())));
        }
        total += p.iter().zip(g).map(|(a, b)| (a - b).norm()).sum::<f64>();
        count += p.len();
    }
    if count == 0 {
        return Err(Error::invalid("tracks are empty"));
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub frames: Vec<FrameMetrics>,
    pub mean: FrameMetrics,
}

impl SequenceReport {
    pub fn new(frames: Vec<FrameMetrics>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("no frames to summarize"));
        }
        let n = frames.len() as f64;
        let avg = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
        let corr = if frames.iter().all(|f| f.corr.is_some()) {
            Some(frames.iter().map(|f| f.corr.unwrap()).sum::<f64>() / n)
        } else {
            None
        };
        let mean = FrameMetrics {
            cd: avg(|f| f.cd),
            cd_e5: avg(|f| f.cd_e5),
            nc: avg(|f| f.nc),
            f_half: avg(|f| f.f_half),
            f_one: avg(|f| f.f_one),
            corr,
        };
        Ok(Self { frames, mean })
    }

    /// CSV with the usual table columns; CD in units of 1e-5.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,CD,NC,F-0.5%,F-1%,Corr\n");
        let row = |label: &str, m: &FrameMetrics| {
            let corr = m.corr.map(|c| c.to_string()).unwrap_or_default();
            format!("{label},{},{},{},{},{corr}\n", m.cd_e5, m.nc, m.f_half, m.f_one)
        };
        for (t, m) in self.frames.iter().enumerate() {
            out.push_str(&row(&t.to_string(), m));
        }
        out.push_str(&row("mean", &self.mean));
        out
    }
}

#[cfg(test)]
mod tests;
