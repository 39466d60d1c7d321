//! Laplacian-preconditioned Adam over all grid levels and the template.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::gradients::{backward, grid_target_frame, GradientBundle};
use crate::grid::{GridLevel, GridSequence, Transform6};
use crate::objective::{LossBreakdown, Objective};
use crate::precond::LaplacianOperator;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSchedule {
    /// Learning rate of level 1.
    pub base_lr: f64,
    /// Per-level learning-rate multiplier.
    pub lr_growth: f64,
    /// Smoothing strength of level 1.
    pub base_lambda: f64,
    pub lambda_growth: f64,
    pub mesh_lr: f64,
    pub mesh_lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimSchedule {
    fn default() -> Self {
        Self {
            base_lr: 5e-3,
            lr_growth: 1.1,
            base_lambda: 0.25,
            lambda_growth: 1.5,
            mesh_lr: 1e-4,
            mesh_lambda: 16.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimSchedule {
    pub fn level_lr(&self, level: u32) -> f64 {
        self.base_lr * self.lr_growth.powi(level as i32 - 1)
    }

    pub fn level_lambda(&self, level: u32) -> f64 {
        self.base_lambda * self.lambda_growth.powi(level as i32 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_lr", self.base_lr),
            ("lr_growth", self.lr_growth),
            ("base_lambda", self.base_lambda),
            ("lambda_growth", self.lambda_growth),
            ("mesh_lr", self.mesh_lr),
            ("mesh_lambda", self.mesh_lambda),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionOrder {
    /// Smooth the raw gradient, then run Adam on it.
    #[default]
    BeforeAdam,
    /// Run Adam on the raw gradient, then smooth its step direction.
    AfterAdam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub schedule: OptimSchedule,
    pub order: PreconditionOrder,
    pub smooth_grids: bool,
    pub smooth_mesh: bool,
    pub optimize_mesh: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            schedule: OptimSchedule::default(),
            order: PreconditionOrder::BeforeAdam,
            smooth_grids: true,
            smooth_mesh: true,
            optimize_mesh: true,
        }
    }
}

/// Adam moments and optional smoothing operator of one parameter group.
#[derive(Clone, Debug)]
struct Group {
    lr: f64,
    op: Option<LaplacianOperator>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Group {
    fn new(lr: f64, op: Option<LaplacianOperator>, len: usize) -> Self {
        Self {
            lr,
            op,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Returns the parameter increment for `grad` (node-major, `channels`
    /// values per node).
    fn update(&mut self, grad: &[f64], channels: usize, step: i32, s: &OptimizerSettings) -> Result<Vec<f64>> {
        let smoothed;
        let g = match (&self.op, s.order) {
            (Some(op), PreconditionOrder::BeforeAdam) => {
                smoothed = op.smooth(grad, channels)?;
                &smoothed
            }
            _ => grad,
        };
        let (b1, b2) = (s.schedule.beta1, s.schedule.beta2);
        let c1 = 1.0 - b1.powi(step);
        let c2 = 1.0 - b2.powi(step);
        let mut dir = Vec::with_capacity(g.len());
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            dir.push((*m / c1) / ((*v / c2).sqrt() + s.schedule.epsilon));
        }
        if let (Some(op), PreconditionOrder::AfterAdam) = (&self.op, s.order) {
            dir = op.smooth(&dir, channels)?;
        }
        for d in dir.iter_mut() {
            *d *= -self.lr;
        }
        Ok(dir)
    }
}

/// Optimizer state: per-level and mesh Adam groups with their cached
/// Laplacian factorizations.
#[derive(Clone, Debug)]
pub struct Optimizer {
    settings: OptimizerSettings,
    /// `levels[g][l]`, in [`GridSequence::grids`] order.
    levels: Vec<Vec<Group>>,
    mesh: Group,
    step: u64,
    factorizations: usize,
}

impl Optimizer {
    /// Factorizes one operator per grid level and one for the template.
    pub fn new(settings: OptimizerSettings, grids: &GridSequence, vertex_count: usize, edges: &[(u32, u32)]) -> Result<Self> {
        settings.schedule.validate()?;
        let s = &settings.schedule;
        let levels: Vec<&GridLevel> = grids.grids().flat_map(|g| g.levels()).collect();
        let built: Vec<Group> = levels
            .par_iter()
            .map(|lvl| {
                let op = if settings.smooth_grids {
                    Some(LaplacianOperator::for_grid_level(lvl, s.level_lambda(lvl.level()))?)
                } else {
                    None
                };
                Ok(Group::new(s.level_lr(lvl.level()), op, 6 * lvl.active_count()))
            })
            .collect::<Result<_>>()?;
        let mut factorizations = built.iter().filter(|g| g.op.is_some()).count();
        let mut it = built.into_iter();
        let levels = grids
            .grids()
            .map(|g| it.by_ref().take(g.levels().len()).collect())
            .collect();
        let mesh_op = if settings.smooth_mesh && settings.optimize_mesh {
            factorizations += 1;
            Some(LaplacianOperator::from_edges(vertex_count, edges, s.mesh_lambda)?)
        } else {
            None
        };
        Ok(Self {
            settings,
            levels,
            mesh: Group::new(s.mesh_lr, mesh_op, 3 * vertex_count),
            step: 0,
            factorizations,
        })
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Number of Laplacian factorizations performed since construction.
    pub fn factorization_count(&self) -> usize {
        self.factorizations
    }

    /// One Adam step on every group.
    pub fn step(&mut self, grids: &mut GridSequence, vertices: &mut [Vec3], grad: &GradientBundle) -> Result<()> {
        let shapes_match = grad.grids.len() == self.levels.len()
            && grad.vertices.len() * 3 == self.mesh.m.len()
            && grids.grid_count() == self.levels.len()
            && grids.grids().zip(&grad.grids).zip(&self.levels).all(|((g, gg), groups)| {
                g.levels().len() == gg.len()
                    && groups.len() == gg.len()
                    && g.levels().iter().zip(gg).zip(groups).all(|((l, lg), grp)| {
                        l.active_count() == lg.len() && grp.m.len() == 6 * lg.len()
                    })
            });
        if !shapes_match {
            return Err(Error::invalid("gradient or grid topology does not match the optimizer"));
        }
        for (gi, g) in grad.grids.iter().enumerate() {
            for (l, lvl) in g.iter().enumerate() {
                if !lvl.iter().all(Transform6::is_finite) {
                    return Err(Error::Numerical {
                        frame: grid_target_frame(grids, gi),
                        level: grids.grid(gi).levels()[l].level() as usize,
                        message: "non-finite gradient passed to the optimizer".into(),
                    });
                }
            }
        }
        if !grad.vertices.iter().all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::Numerical {
                frame: grids.keyframe(),
                level: 0,
                message: "non-finite template gradient passed to the optimizer".into(),
            });
        }
        self.step += 1;
        let step = self.step.min(i32::MAX as u64) as i32;
        let view = self.settings;

        let mut targets: Vec<(&mut GridLevel, &mut Group, &Vec<Transform6>)> = grids
            .grids_mut()
            .flat_map(|g| g.levels_mut().iter_mut())
            .zip(self.levels.iter_mut().flatten())
            .zip(grad.grids.iter().flatten())
            .map(|((l, grp), g)| (l, grp, g))
            .collect();
        targets.par_iter_mut().try_for_each(|(lvl, grp, g)| -> Result<()> {
            let flat: Vec<f64> = g.iter().flat_map(|t| t.0).collect();
            let delta = grp.update(&flat, 6, step, &view)?;
            for (p, d) in lvl.params.iter_mut().zip(delta.chunks_exact(6)) {
                for k in 0..6 {
                    p.0[k] += d[k];
                }
            }
            Ok(())
        })?;

        if self.settings.optimize_mesh {
            let flat: Vec<f64> = grad.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
            let delta = self.mesh.update(&flat, 3, step, &view)?;
            for (v, d) in vertices.iter_mut().zip(delta.chunks_exact(3)) {
                *v += Vec3::new(d[0], d[1], d[2]);
            }
        }
        Ok(())
    }
}

/// One logged evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Best-loss snapshot.
    pub grids: GridSequence,
    pub vertices: Vec<Vec3>,
    pub best_epoch: usize,
    pub best_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
    pub history: Vec<HistoryEntry>,
}

/// Evaluate, differentiate and step for `epochs` epochs, then evaluate the
/// final parameters once more. Every evaluation is a snapshot candidate;
/// the one with the lowest total loss is returned. `on_log` sees every
/// `log_interval`-th evaluation and the last one.
pub fn run(
    objective: &Objective,
    mut grids: GridSequence,
    mut vertices: Vec<Vec3>,
    optimizer: &mut Optimizer,
    epochs: usize,
    log_interval: usize,
    mut on_log: impl FnMut(&HistoryEntry),
) -> Result<RunOutcome> {
    let start = Instant::now();
    let interval = log_interval.max(1);
    let mut history = Vec::new();
    let mut best: Option<(usize, LossBreakdown, GridSequence, Vec<Vec3>)> = None;
    for epoch in 0..=epochs {
        let eval = objective.evaluate(&grids, &vertices, epoch)?;
        if !eval.loss.total.is_finite() {
            return Err(Error::Numerical {
                frame: objective.keyframe(),
                level: 0,
                message: format!("total loss became {} at epoch {epoch}", eval.loss.total),
            });
        }
        if epoch % interval == 0 || epoch == epochs {
            let entry = HistoryEntry {
                epoch,
                loss: eval.loss.clone(),
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            on_log(&entry);
            history.push(entry);
        }
        if best.as_ref().is_none_or(|b| eval.loss.total < b.1.total) {
            best = Some((epoch, eval.loss.clone(), grids.clone(), vertices.clone()));
        }
        if epoch == epochs {
            let (best_epoch, best_loss, grids, vertices) = best.unwrap();
            return Ok(RunOutcome {
                grids,
                vertices,
                best_epoch,
                best_loss,
                final_loss: eval.loss,
                history,
            });
        }
        let grad = backward(objective, &eval, &grids, &vertices)?;
        optimizer.step(&mut grids, &mut vertices, &grad)?;
    }
    unreachable!("the loop returns at the final epoch")
}
