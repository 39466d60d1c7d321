//! Loss terms: robust Chamfer fitting, confidence weighting and isometry.
//!
//! One [`Objective`] holds the fixed data of a run (input clouds and their
//! search trees, template topology, weights). [`Objective::evaluate`] runs
//! the forward pass and records everything the backward pass needs,
//! including the nearest-neighbour pairings and confidence weights, which
//! are treated as constants for differentiation.

mod chamfer;

pub use chamfer::{robust_chamfer, ChamferMatch, RobustChamferParams, DEFAULT_ALPHA};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloudSequence, TriMesh, Vec3};
use crate::grid::{Direction, GridSequence, Transform6};
use crate::spatial::NnIndex;
use crate::{Error, Result};

pub const DEFAULT_W_ISOMETRY: f64 = 250.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub chamfer: RobustChamferParams,
    pub w_isometry: f64,
    pub isometry: bool,
    pub max_epochs: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            chamfer: RobustChamferParams::default(),
            w_isometry: DEFAULT_W_ISOMETRY,
            isometry: true,
            max_epochs: 2000,
        }
    }
}

impl ObjectiveConfig {
    pub fn effective_isometry_weight(&self) -> f64 {
        if self.isometry {
            self.w_isometry
        } else {
            0.0
        }
    }
}

/// Catch-up exponent `δ = 1 - sqrt(e / e_max)`.
pub fn catch_up_exponent(epoch: usize, max_epochs: usize) -> f64 {
    if max_epochs == 0 {
        return 0.0;
    }
    1.0 - (epoch.min(max_epochs) as f64 / max_epochs as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceState {
    pub epoch: usize,
    pub max_epochs: usize,
    pub cd_max: f64,
}

impl ConfidenceState {
    pub fn delta(&self) -> f64 {
        catch_up_exponent(self.epoch, self.max_epochs)
    }
}

/// Cumulative confidence products running outward from `keyframe`.
///
/// `frame_cd[t]` is the mesh-to-cloud robust Chamfer of frame `t`; the
/// keyframe's entry is ignored and its weight is 1.
pub fn confidence_weights(state: &ConfidenceState, keyframe: usize, frame_cd: &[f64]) -> Vec<f64> {
    let delta = state.delta();
    let factor = |cd: f64| (1.0 / (1.0 + (cd - state.cd_max).max(0.0))).powf(delta);
    let mut w = vec![1.0; frame_cd.len()];
    let mut acc = 1.0;
    for t in keyframe + 1..frame_cd.len() {
        acc *= factor(frame_cd[t]);
        w[t] = acc;
    }
    acc = 1.0;
    for t in (0..keyframe.min(frame_cd.len())).rev() {
        acc *= factor(frame_cd[t]);
        w[t] = acc;
    }
    w
}

/// Loss values of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mesh: f64,
    pub transform: f64,
    pub isometry: f64,
    pub total: f64,
    pub cd_max: f64,
    /// Robust Chamfer between the deformed template vertices and each
    /// frame's cloud; the keyframe entry equals the mesh loss.
    pub frame_cd: Vec<f64>,
    /// Robust Chamfer between each frame and its one-step transported
    /// neighbour; zero at the keyframe.
    pub transport_cd: Vec<f64>,
    pub confidence: Vec<f64>,
}

/// Pairings and weights held constant while differentiating.
#[derive(Clone, Debug)]
pub struct FrozenTerms {
    pub key: ChamferMatch,
    /// Per frame, `None` at the keyframe.
    pub mesh: Vec<Option<ChamferMatch>>,
    pub transport: Vec<Option<ChamferMatch>>,
    pub confidence: Vec<f64>,
}

/// Positions of the template along one chain and the parameters each
/// grid interpolated for them.
#[derive(Clone, Debug)]
pub struct ChainRecord {
    /// `positions[k]` are the template vertices `k` transitions away.
    pub positions: Vec<Vec<Vec3>>,
    /// `params[k]` were interpolated by grid `k` at `positions[k]`.
    pub params: Vec<Vec<Transform6>>,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub frozen: FrozenTerms,
    pub forward: ChainRecord,
    pub backward: ChainRecord,
    /// Per frame, the parameters interpolated at the source cloud's points
    /// by the grid leading into that frame.
    pub transport_params: Vec<Option<Vec<Transform6>>>,
}

impl Evaluation {
    pub fn chain(&self, direction: Direction) -> &ChainRecord {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }
}

/// Fixed data of an optimization problem.
#[derive(Clone, Debug)]
pub struct Objective {
    seq: PointCloudSequence,
    trees: Vec<NnIndex>,
    edges: Vec<(u32, u32)>,
    vertex_count: usize,
    keyframe: usize,
    config: ObjectiveConfig,
}

impl Objective {
    pub fn new(
        seq: PointCloudSequence,
        template: &TriMesh,
        keyframe: usize,
        config: ObjectiveConfig,
    ) -> Result<Self> {
        if keyframe >= seq.len() {
            return Err(Error::invalid(format!(
                "keyframe {keyframe} outside a {}-frame sequence",
                seq.len()
            )));
        }
        if config.isometry && template.edges().is_empty() {
            return Err(Error::invalid("isometry loss needs a mesh with edges"));
        }
        RobustChamferParams::new(config.chamfer.alpha)?;
        let trees = seq
            .frames()
            .par_iter()
            .map(|f| NnIndex::build(f.points()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seq,
            trees,
            edges: template.edges().to_vec(),
            vertex_count: template.vertices().len(),
            keyframe,
            config,
        })
    }

    pub fn sequence(&self) -> &PointCloudSequence {
        &self.seq
    }

    pub fn keyframe(&self) -> usize {
        self.keyframe
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn frame_count(&self) -> usize {
        self.seq.len()
    }

    pub fn nonkey_count(&self) -> usize {
        self.seq.len() - 1
    }

    /// Number of consecutive frame pairs in the isometry sum.
    pub fn isometry_pair_count(&self) -> usize {
        self.seq.len() - 1
    }

    fn check_shapes(&self, grids: &GridSequence, vertices: &[Vec3]) -> Result<()> {
        if grids.frame_count() != self.seq.len() || grids.keyframe() != self.keyframe {
            return Err(Error::invalid(format!(
                "grids cover {} frames from keyframe {}, sequence has {} frames from keyframe {}",
                grids.frame_count(),
                grids.keyframe(),
                self.seq.len(),
                self.keyframe
            )));
        }
        if vertices.len() != self.vertex_count {
            return Err(Error::invalid(format!(
                "template has {} vertices, objective expects {}",
                vertices.len(),
                self.vertex_count
            )));
        }
        Ok(())
    }

    /// Forward pass at `epoch`: recomputes pairings, `cd_max` and confidence
    /// weights, then the loss.
    pub fn evaluate(&self, grids: &GridSequence, vertices: &[Vec3], epoch: usize) -> Result<Evaluation> {
        self.check_shapes(grids, vertices)?;
        let forward = record_chain(grids, vertices, Direction::Forward);
        let backward = record_chain(grids, vertices, Direction::Backward);
        let n = self.seq.len();
        let alpha = &self.config.chamfer;

        let transported: Vec<Option<(Vec<Vec3>, Vec<Transform6>)>> = (0..n)
            .map(|t| {
                let src = grids.source_frame(t)?;
                let g = grids.grid(grids.grid_index_into(t).unwrap());
                Some(g.transform_points_with_params(self.seq.frame(src).points()))
            })
            .collect();

        for t in 0..n {
            let finite = |pts: &[Vec3]| pts.iter().all(|p| p.iter().all(|v| v.is_finite()));
            let moved_ok = transported[t].as_ref().is_none_or(|(p, _)| finite(p));
            if !finite(chain_positions(&forward, &backward, self.keyframe, t)) || !moved_ok {
                return Err(non_finite_error(grids, t));
            }
        }

        let key_match = ChamferMatch::compute(vertices, self.seq.frame(self.keyframe).points(), &self.trees[self.keyframe], alpha)?;
        let mut mesh = Vec::with_capacity(n);
        let mut transport = Vec::with_capacity(n);
        for t in 0..n {
            if t == self.keyframe {
                mesh.push(None);
                transport.push(None);
                continue;
            }
            let target = self.seq.frame(t).points();
            let x = chain_positions(&forward, &backward, self.keyframe, t);
            mesh.push(Some(ChamferMatch::compute(x, target, &self.trees[t], alpha)?));
            let p = &transported[t].as_ref().unwrap().0;
            transport.push(Some(ChamferMatch::compute(p, target, &self.trees[t], alpha)?));
        }

        let (frame_cd, transport_cd) = self.term_values(&key_match, &mesh, &transport, &forward, &backward, &transported);
        let cd_max = transport_cd.iter().copied().fold(0.0, f64::max);
        let state = ConfidenceState {
            epoch,
            max_epochs: self.config.max_epochs,
            cd_max,
        };
        let confidence = confidence_weights(&state, self.keyframe, &frame_cd);
        let frozen = FrozenTerms {
            key: key_match,
            mesh,
            transport,
            confidence,
        };
        let loss = self.combine(&frozen, frame_cd, transport_cd, cd_max, &forward, &backward);
        Ok(Evaluation {
            loss,
            frozen,
            forward,
            backward,
            transport_params: transported.into_iter().map(|o| o.map(|(_, p)| p)).collect(),
        })
    }

    /// Loss with every pairing and confidence weight held at `frozen`.
    pub fn frozen_loss(&self, frozen: &FrozenTerms, grids: &GridSequence, vertices: &[Vec3]) -> Result<LossBreakdown> {
        self.check_shapes(grids, vertices)?;
        let forward = record_chain(grids, vertices, Direction::Forward);
        let backward = record_chain(grids, vertices, Direction::Backward);
        let transported: Vec<Option<(Vec<Vec3>, Vec<Transform6>)>> = (0..self.seq.len())
            .map(|t| {
                let src = grids.source_frame(t)?;
                let g = grids.grid(grids.grid_index_into(t).unwrap());
                Some(g.transform_points_with_params(self.seq.frame(src).points()))
            })
            .collect();
        let (frame_cd, transport_cd) =
            self.term_values(&frozen.key, &frozen.mesh, &frozen.transport, &forward, &backward, &transported);
        let cd_max = transport_cd.iter().copied().fold(0.0, f64::max);
        Ok(self.combine(frozen, frame_cd, transport_cd, cd_max, &forward, &backward))
    }

    fn term_values(
        &self,
        key: &ChamferMatch,
        mesh: &[Option<ChamferMatch>],
        transport: &[Option<ChamferMatch>],
        forward: &ChainRecord,
        backward: &ChainRecord,
        transported: &[Option<(Vec<Vec3>, Vec<Transform6>)>],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.seq.len();
        let mut frame_cd = vec![0.0; n];
        let mut transport_cd = vec![0.0; n];
        frame_cd[self.keyframe] = key.value(&forward.positions[0], self.seq.frame(self.keyframe).points());
        for t in 0..n {
            if t == self.keyframe {
                continue;
            }
            let target = self.seq.frame(t).points();
            let x = chain_positions(forward, backward, self.keyframe, t);
            frame_cd[t] = mesh[t].as_ref().unwrap().value(x, target);
            let p = &transported[t].as_ref().unwrap().0;
            transport_cd[t] = transport[t].as_ref().unwrap().value(p, target);
        }
        (frame_cd, transport_cd)
    }

    fn combine(
        &self,
        frozen: &FrozenTerms,
        frame_cd: Vec<f64>,
        transport_cd: Vec<f64>,
        cd_max: f64,
        forward: &ChainRecord,
        backward: &ChainRecord,
    ) -> LossBreakdown {
        let mesh = frame_cd[self.keyframe];
        let mut sum = 0.0;
        for t in 0..self.seq.len() {
            if t != self.keyframe {
                sum += frozen.confidence[t] * frame_cd[t] + transport_cd[t];
            }
        }
        let transform = if self.nonkey_count() > 0 {
            sum / self.nonkey_count() as f64
        } else {
            0.0
        };
        let isometry = self.isometry_value(forward, backward);
        let total = mesh + transform + self.config.effective_isometry_weight() * isometry;
        LossBreakdown {
            mesh,
            transform,
            isometry,
            total,
            cd_max,
            frame_cd,
            transport_cd,
            confidence: frozen.confidence.clone(),
        }
    }

    fn isometry_value(&self, forward: &ChainRecord, backward: &ChainRecord) -> f64 {
        self.isometry_of_chains(&[&forward.positions, &backward.positions])
    }

    fn isometry_of_chains(&self, chains: &[&[Vec<Vec3>]]) -> f64 {
        if self.edges.is_empty() || self.isometry_pair_count() == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for chain in chains {
            let lens: Vec<Vec<f64>> = chain.iter().map(|x| edge_lengths(x, &self.edges)).collect();
            for pair in lens.windows(2) {
                sum += pair[1].iter().zip(&pair[0]).map(|(a, b)| (a - b).abs()).sum::<f64>();
            }
        }
        sum / (self.isometry_pair_count() * self.edges.len()) as f64
    }

    /// Unweighted isometry term for explicit per-frame vertex positions,
    /// chained outward from the keyframe as in the objective.
    pub fn isometry_of_tracks(&self, tracks: &[Vec<Vec3>]) -> Result<f64> {
        if tracks.len() != self.seq.len() || tracks.iter().any(|x| x.len() != self.vertex_count) {
            return Err(Error::invalid(format!(
                "tracks must cover {} frames of {} vertices",
                self.seq.len(),
                self.vertex_count
            )));
        }
        let forward: Vec<Vec<Vec3>> = tracks[self.keyframe..].to_vec();
        let backward: Vec<Vec<Vec3>> = tracks[..=self.keyframe].iter().rev().cloned().collect();
        Ok(self.isometry_of_chains(&[&forward, &backward]))
    }

    /// Pure evaluation of `cd_max`, the largest transported-cloud Chamfer.
    pub fn cd_max(&self, grids: &GridSequence) -> Result<f64> {
        let mut best = 0.0f64;
        for t in 0..self.seq.len() {
            if let Some(src) = grids.source_frame(t) {
                let g = grids.grid(grids.grid_index_into(t).unwrap());
                let p = g.transform_points(self.seq.frame(src).points());
                let m = ChamferMatch::compute(&p, self.seq.frame(t).points(), &self.trees[t], &self.config.chamfer)?;
                best = best.max(m.value(&p, self.seq.frame(t).points()));
            }
        }
        Ok(best)
    }
}

/// Names the frame and the first level along its chain holding a
/// non-finite parameter.
fn non_finite_error(grids: &GridSequence, t: usize) -> Error {
    let key = grids.keyframe();
    let (direction, steps) = if t > key {
        (Direction::Forward, t - key)
    } else {
        (Direction::Backward, key - t)
    };
    let level = grids.chain_grids(direction)[..steps]
        .iter()
        .flat_map(|g| g.levels())
        .find(|l| !l.params.iter().all(Transform6::is_finite))
        .map_or(0, |l| l.level() as usize);
    Error::Numerical {
        frame: t,
        level,
        message: "non-finite deformed positions".into(),
    }
}

pub(crate) fn edge_lengths(x: &[Vec3], edges: &[(u32, u32)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(a, b)| (x[a as usize] - x[b as usize]).norm())
        .collect()
}

pub(crate) fn record_chain(grids: &GridSequence, base: &[Vec3], direction: Direction) -> ChainRecord {
    let mut positions = vec![base.to_vec()];
    let mut params = Vec::new();
    for g in grids.chain_grids(direction) {
        let (next, p) = g.transform_points_with_params(positions.last().unwrap());
        positions.push(next);
        params.push(p);
    }
    ChainRecord { positions, params }
}

/// Template positions at frame `t`.
pub(crate) fn chain_positions<'a>(
    forward: &'a ChainRecord,
    backward: &'a ChainRecord,
    keyframe: usize,
    t: usize,
) -> &'a [Vec3] {
    if t >= keyframe {
        &forward.positions[t - keyframe]
    } else {
        &backward.positions[keyframe - t]
    }
}

#[cfg(test)]
mod tests;
