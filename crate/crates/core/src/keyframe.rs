//! Keyframe selection by voxel coverage weighted toward the middle of the
//! sequence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::geometry::{PointCloud, PointCloudSequence, Vec3};

pub const OCCUPANCY_RESOLUTION: usize = 128;
pub const CENTRALITY_GAMMA: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeReport {
    pub keyframe: usize,
    pub occupancy: Vec<usize>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Cell index along one axis of the occupancy grid over [-1, 1]. Cells are
/// half-open; the top face and anything outside is clamped to the border.
pub fn voxel_coord(x: f64, resolution: usize) -> usize {
    let s = ((x + 1.0) * 0.5 * resolution as f64).floor();
    if s.is_nan() || s < 0.0 {
        0
    } else {
        (s as usize).min(resolution - 1)
    }
}

pub fn voxel_of(p: &Vec3, resolution: usize) -> [usize; 3] {
    [voxel_coord(p.x, resolution), voxel_coord(p.y, resolution), voxel_coord(p.z, resolution)]
}

pub fn occupancy(cloud: &PointCloud, resolution: usize) -> usize {
    let cells: HashSet<[usize; 3]> = cloud.points().iter().map(|p| voxel_of(p, resolution)).collect();
    cells.len()
}

/// exp(-gamma (t - T/2)^2) with T the frame count.
pub fn centrality_weight(t: usize, frames: usize, gamma: f64) -> f64 {
    let d = t as f64 - frames as f64 / 2.0;
    (-gamma * d * d).exp()
}

pub fn select_keyframe(seq: &PointCloudSequence) -> KeyframeReport {
    select_keyframe_with(seq, OCCUPANCY_RESOLUTION, CENTRALITY_GAMMA)
}

pub fn select_keyframe_with(seq: &PointCloudSequence, resolution: usize, gamma: f64) -> KeyframeReport {
    let frames = seq.len();
    let occupancy: Vec<usize> = seq.frames().par_iter().map(|f| occupancy(f, resolution)).collect();
    let weights: Vec<f64> = (0..frames).map(|t| centrality_weight(t, frames, gamma)).collect();
    let scores: Vec<f64> = weights.iter().zip(&occupancy).map(|(w, &c)| w * c as f64).collect();
    let mut keyframe = 0;
    for (t, s) in scores.iter().enumerate() {
        if *s > scores[keyframe] {
            keyframe = t;
        }
    }
    KeyframeReport {
        keyframe,
        occupancy,
        weights,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(frames: Vec<Vec<Vec3>>) -> PointCloudSequence {
        PointCloudSequence::new(frames.into_iter().map(|p| PointCloud::new(p).unwrap()).collect()).unwrap()
    }

    // reference: dense boolean grid, explicit loops
    fn brute_scores(frames: &[Vec<Vec3>]) -> Vec<f64> {
        let n = OCCUPANCY_RESOLUTION;
        let t_half = frames.len() as f64 / 2.0;
        frames
            .iter()
            .enumerate()
            .map(|(t, pts)| {
                let mut grid = vec![false; n * n * n];
                for p in pts {
                    let mut idx = [0usize; 3];
                    for k in 0..3 {
                        let cell = (p[k] + 1.0) / (2.0 / n as f64);
                        let mut c = cell.floor() as i64;
                        c = c.clamp(0, n as i64 - 1);
                        idx[k] = c as usize;
                    }
                    grid[(idx[0] * n + idx[1]) * n + idx[2]] = true;
                }
                let count = grid.iter().filter(|&&b| b).count();
                (-0.001 * (t as f64 - t_half).powi(2)).exp() * count as f64
            })
            .collect()
    }

    fn lattice_points(step: f64, count: usize, offset: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..count {
            for j in 0..count {
                pts.push(Vec3::new(-0.9 + step * i as f64 + offset, -0.9 + step * j as f64, 0.1));
            }
        }
        pts
    }

    #[test]
    fn identical_frames_pick_the_middle() {
        let pts = lattice_points(0.05, 10, 0.0);
        assert_eq!(select_keyframe(&seq(vec![pts.clone(); 8])).keyframe, 4);
        assert_eq!(select_keyframe(&seq(vec![pts.clone(); 7])).keyframe, 3);
        assert_eq!(select_keyframe(&seq(vec![pts; 2])).keyframe, 1);
    }

    #[test]
    fn doubled_coverage_at_the_start() {
        // 16 frames, frame 0 covers twice the cells: 2c e^{-0.064} > c
        let base = lattice_points(0.05, 10, 0.0);
        let mut first = base.clone();
        first.extend(lattice_points(0.05, 10, 0.9));
        let mut frames = vec![base; 16];
        frames[0] = first;
        let report = select_keyframe(&seq(frames.clone()));
        assert_eq!(report.occupancy[0], 2 * report.occupancy[1]);
        let c = report.occupancy[1] as f64;
        assert!((report.scores[0] - 2.0 * c * (-0.064f64).exp()).abs() < 1e-12);
        assert_eq!(report.scores[8], c);
        assert_eq!(report.keyframe, 0);
        assert_eq!(report.scores, brute_scores(&frames));
    }

    #[test]
    fn coincident_points_occupy_one_cell() {
        let cloud = PointCloud::new(vec![Vec3::new(0.3, -0.2, 0.7); 1000]).unwrap();
        assert_eq!(occupancy(&cloud, OCCUPANCY_RESOLUTION), 1);
    }

    #[test]
    fn binning_edges() {
        assert_eq!(voxel_coord(-1.0, 128), 0);
        assert_eq!(voxel_coord(1.0, 128), 127);
        assert_eq!(voxel_coord(0.0, 128), 64);
        assert_eq!(voxel_coord(-1.0 + 2.0 / 128.0, 128), 1);
        assert_eq!(voxel_coord(5.0, 128), 127);
        assert_eq!(voxel_coord(-5.0, 128), 0);
    }

    fn cloud_strategy() -> impl Strategy<Value = Vec<Vec<Vec3>>> {
        let point = (-1.0f64..=1.0, -1.0f64..=1.0, -1.0f64..=1.0).prop_map(|(x, y, z)| Vec3::new(x, y, z));
        prop::collection::vec(prop::collection::vec(point, 1..60), 2..7)
    }

    proptest! {
        #[test]
        fn scores_match_brute_force(frames in cloud_strategy()) {
            let report = select_keyframe(&seq(frames.clone()));
            prop_assert_eq!(&report.scores, &brute_scores(&frames));
            let best = report.scores.iter().cloned().fold(f64::MIN, f64::max);
            let first = report.scores.iter().position(|&s| s == best).unwrap();
            prop_assert_eq!(report.keyframe, first);
        }

        #[test]
        fn duplication_and_permutation_do_not_matter(frames in cloud_strategy(), rot in 0usize..50) {
            let a = select_keyframe(&seq(frames.clone()));
            let shuffled: Vec<Vec<Vec3>> = frames
                .iter()
                .map(|f| {
                    let mut g = f.clone();
                    let k = rot % g.len();
                    g.rotate_left(k);
                    g.reverse();
                    g.extend_from_slice(&f[..f.len().min(5)]);
                    g
                })
                .collect();
            let b = select_keyframe(&seq(shuffled));
            prop_assert_eq!(a, b);
        }
    }
}
