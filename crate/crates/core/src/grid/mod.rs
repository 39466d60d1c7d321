//! Multi-resolution lattices of local rigid motions.
//!
//! Each frame transition owns a [`DeformationGrid`]. A query point gathers a
//! trilinear blend of 6D parameters from every level, averages the levels in
//! parameter space and applies the resulting motion `R(z) x + t`. Motions
//! are chained outward from the keyframe in both temporal directions.

pub mod checkpoint;
mod level;
mod transform;

pub use level::{nearest_vertex, GridLevel, Stencil, PRUNE_RADIUS};
pub use transform::{apply_transform, cayley_pullback, cayley_rotation, Transform6};

pub(crate) use level::INACTIVE;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud, PointCloudSequence, Vec3};
use crate::{Error, Result};

/// Which levels a grid carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub level_count: u32,
    /// `false` keeps only the finest level.
    pub multires: bool,
}

impl GridLayout {
    pub fn new(level_count: u32) -> Self {
        Self {
            level_count,
            multires: true,
        }
    }

    pub fn level_indices(&self) -> Vec<u32> {
        if self.multires {
            (1..=self.level_count).collect()
        } else {
            vec![self.level_count]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Maps frame `t - 1` to `t`.
    Forward,
    /// Maps frame `t + 1` to `t`.
    Backward,
}

/// Deformation of one frame transition.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationGrid {
    direction: Direction,
    levels: Vec<GridLevel>,
}

impl DeformationGrid {
    pub fn from_levels(direction: Direction, levels: Vec<GridLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("a deformation grid needs at least one level"));
        }
        Ok(Self { direction, levels })
    }

    pub fn dense(direction: Direction, layout: &GridLayout) -> Self {
        let levels = layout.level_indices().into_iter().map(GridLevel::dense).collect();
        Self { direction, levels }
    }

    /// Active vertices come from the union of the transition's endpoint frames.
    pub fn pruned(direction: Direction, layout: &GridLayout, frames: &[&PointCloud]) -> Self {
        let levels = layout
            .level_indices()
            .into_iter()
            .map(|l| GridLevel::pruned(l, frames.iter().flat_map(|f| f.points().iter())))
            .collect();
        Self { direction, levels }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn levels(&self) -> &[GridLevel] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [GridLevel] {
        &mut self.levels
    }

    /// Level-averaged 6D parameters at `x`.
    pub fn interpolate(&self, x: &Vec3) -> Transform6 {
        let mut acc = Transform6::IDENTITY;
        for lvl in &self.levels {
            acc.add_scaled(&lvl.interpolate(x), 1.0);
        }
        acc.scaled(1.0 / self.levels.len() as f64)
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        apply_transform(&self.interpolate(x), x)
    }

    pub fn transform_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        points
            .par_iter()
            .with_min_len(256)
            .map(|p| self.transform_point(p))
            .collect()
    }

    /// Deformed points together with the interpolated parameters used for
    /// each, as needed by the backward pass.
    pub fn transform_points_with_params(&self, points: &[Vec3]) -> (Vec<Vec3>, Vec<Transform6>) {
        points
            .par_iter()
            .with_min_len(256)
            .map(|p| {
                let tf = self.interpolate(p);
                (apply_transform(&tf, p), tf)
            })
            .unzip()
    }

    pub fn active_parameter_count(&self) -> usize {
        6 * self.levels.iter().map(GridLevel::active_count).sum::<usize>()
    }

    pub fn dense_parameter_count(&self) -> usize {
        6 * self.levels.iter().map(GridLevel::dense_count).sum::<usize>()
    }
}

/// Active and dense parameter totals of a grid sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub active: usize,
    pub dense: usize,
}

impl ParameterCounts {
    pub fn fraction(&self) -> f64 {
        self.active as f64 / self.dense as f64
    }
}

/// All transition grids of a sequence, anchored at a keyframe.
///
/// `forward[k]` maps frame `key + k` to `key + k + 1`; `backward[k]` maps
/// frame `key - k` to `key - k - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSequence {
    keyframe: usize,
    forward: Vec<DeformationGrid>,
    backward: Vec<DeformationGrid>,
}

impl GridSequence {
    pub fn from_parts(
        keyframe: usize,
        forward: Vec<DeformationGrid>,
        backward: Vec<DeformationGrid>,
    ) -> Result<Self> {
        if backward.len() != keyframe {
            return Err(Error::invalid(format!(
                "keyframe {keyframe} needs {keyframe} backward grids, got {}",
                backward.len()
            )));
        }
        let wrong_dir = forward.iter().any(|g| g.direction != Direction::Forward)
            || backward.iter().any(|g| g.direction != Direction::Backward);
        if wrong_dir {
            return Err(Error::invalid("grid direction does not match its slot"));
        }
        Ok(Self {
            keyframe,
            forward,
            backward,
        })
    }

    /// Dense identity grids for `frame_count` frames.
    pub fn identity(layout: &GridLayout, frame_count: usize, keyframe: usize) -> Result<Self> {
        check_keyframe(frame_count, keyframe)?;
        Self::from_parts(
            keyframe,
            (keyframe + 1..frame_count)
                .map(|_| DeformationGrid::dense(Direction::Forward, layout))
                .collect(),
            (0..keyframe)
                .map(|_| DeformationGrid::dense(Direction::Backward, layout))
                .collect(),
        )
    }

    /// Identity grids pruned to the occupied region of each transition.
    pub fn build_pruned(
        layout: &GridLayout,
        seq: &PointCloudSequence,
        keyframe: usize,
    ) -> Result<Self> {
        check_keyframe(seq.len(), keyframe)?;
        let forward = (keyframe..seq.last_index())
            .into_par_iter()
            .map(|t| {
                DeformationGrid::pruned(
                    Direction::Forward,
                    layout,
                    &[seq.frame(t), seq.frame(t + 1)],
                )
            })
            .collect();
        let backward = (1..=keyframe)
            .rev()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|t| {
                DeformationGrid::pruned(
                    Direction::Backward,
                    layout,
                    &[seq.frame(t), seq.frame(t - 1)],
                )
            })
            .collect();
        Self::from_parts(keyframe, forward, backward)
    }

    pub fn keyframe(&self) -> usize {
        self.keyframe
    }

    pub fn frame_count(&self) -> usize {
        self.keyframe + self.forward.len() + 1
    }

    pub fn forward(&self) -> &[DeformationGrid] {
        &self.forward
    }

    pub fn backward(&self) -> &[DeformationGrid] {
        &self.backward
    }

    pub fn grid_count(&self) -> usize {
        self.forward.len() + self.backward.len()
    }

    /// Forward grids first, then backward, each in order of distance from
    /// the keyframe.
    pub fn grids(&self) -> impl Iterator<Item = &DeformationGrid> {
        self.forward.iter().chain(self.backward.iter())
    }

    pub fn grids_mut(&mut self) -> impl Iterator<Item = &mut DeformationGrid> {
        self.forward.iter_mut().chain(self.backward.iter_mut())
    }

    pub fn grid(&self, index: usize) -> &DeformationGrid {
        if index < self.forward.len() {
            &self.forward[index]
        } else {
            &self.backward[index - self.forward.len()]
        }
    }

    /// Position in [`grids`](Self::grids) of the grid that produces frame `t`
    /// from its neighbour one step closer to the keyframe.
    pub fn grid_index_into(&self, t: usize) -> Option<usize> {
        if t > self.keyframe && t < self.frame_count() {
            Some(t - self.keyframe - 1)
        } else if t < self.keyframe {
            Some(self.forward.len() + self.keyframe - t - 1)
        } else {
            None
        }
    }

    /// Neighbour of `t` one step closer to the keyframe.
    pub fn source_frame(&self, t: usize) -> Option<usize> {
        if t > self.keyframe && t < self.frame_count() {
            Some(t - 1)
        } else if t < self.keyframe {
            Some(t + 1)
        } else {
            None
        }
    }

    /// Frames reached by chaining along `direction`, nearest first.
    pub fn chain_frames(&self, direction: Direction) -> Vec<usize> {
        match direction {
            Direction::Forward => (self.keyframe + 1..self.frame_count()).collect(),
            Direction::Backward => (0..self.keyframe).rev().collect(),
        }
    }

    pub fn chain_grids(&self, direction: Direction) -> &[DeformationGrid] {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    /// Keyframe positions followed by their image after each step along
    /// `direction`: entry `k` holds the positions `k` transitions away.
    pub fn chain(&self, base: &[Vec3], direction: Direction) -> Vec<Vec<Vec3>> {
        let grids = self.chain_grids(direction);
        let mut out = Vec::with_capacity(grids.len() + 1);
        out.push(base.to_vec());
        for g in grids {
            let next = g.transform_points(out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// Carries keyframe positions to `target`, re-evaluating each grid at the
    /// already-deformed positions.
    pub fn deform_points(&self, base: &[Vec3], target: usize) -> Result<Vec<Vec3>> {
        if target >= self.frame_count() {
            return Err(Error::invalid(format!(
                "frame {target} outside 0..={}",
                self.frame_count() - 1
            )));
        }
        let (grids, steps) = if target >= self.keyframe {
            (&self.forward, target - self.keyframe)
        } else {
            (&self.backward, self.keyframe - target)
        };
        let mut pts = base.to_vec();
        for g in &grids[..steps] {
            pts = g.transform_points(&pts);
        }
        Ok(pts)
    }

    pub fn parameter_counts(&self) -> ParameterCounts {
        ParameterCounts {
            active: self.grids().map(DeformationGrid::active_parameter_count).sum(),
            dense: self.grids().map(DeformationGrid::dense_parameter_count).sum(),
        }
    }

    /// Whether `other` has the same keyframe, levels and active vertices.
    pub fn matches_layout(&self, other: &GridSequence) -> bool {
        self.keyframe == other.keyframe
            && self.grid_count() == other.grid_count()
            && self.grids().zip(other.grids()).all(|(a, b)| {
                a.direction == b.direction
                    && a.levels.len() == b.levels.len()
                    && a
                        .levels
                        .iter()
                        .zip(&b.levels)
                        .all(|(x, y)| x.level() == y.level() && x.coords() == y.coords())
            })
    }
}

fn check_keyframe(frame_count: usize, keyframe: usize) -> Result<()> {
    if frame_count < 2 {
        return Err(Error::invalid("a grid sequence needs at least 2 frames"));
    }
    if keyframe >= frame_count {
        return Err(Error::invalid(format!(
            "keyframe {keyframe} outside 0..{frame_count}"
        )));
    }
    Ok(())
}
