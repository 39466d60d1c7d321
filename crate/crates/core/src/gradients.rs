//! Reverse-mode gradients of the objective and a finite-difference harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{primitives, PointCloud, PointCloudSequence, TriMesh, Vec3};
use crate::grid::{
    apply_transform, cayley_pullback, cayley_rotation, DeformationGrid, Direction, GridLayout, GridSequence,
    Transform6, INACTIVE,
};
use crate::objective::{edge_lengths, Evaluation, Objective, ObjectiveConfig};
use crate::{Error, Result};

/// Gradients shaped like the parameters: `grids[g][l][slot]` follows
/// [`GridSequence::grids`] order, `vertices` the template.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub grids: Vec<Vec<Vec<Transform6>>>,
    pub vertices: Vec<Vec3>,
}

impl GradientBundle {
    pub fn zeros(grids: &GridSequence, vertex_count: usize) -> Self {
        Self {
            grids: grids
                .grids()
                .map(|g| g.levels().iter().map(|l| vec![Transform6::IDENTITY; l.active_count()]).collect())
                .collect(),
            vertices: vec![Vec3::zeros(); vertex_count],
        }
    }

    pub fn get(&self, p: ParamRef) -> f64 {
        match p {
            ParamRef::Grid {
                grid,
                level,
                slot,
                component,
            } => self.grids[grid][level][slot].0[component],
            ParamRef::Vertex { index, component } => self.vertices[index][component],
        }
    }

    pub fn get_mut(&mut self, p: ParamRef) -> &mut f64 {
        match p {
            ParamRef::Grid {
                grid,
                level,
                slot,
                component,
            } => &mut self.grids[grid][level][slot].0[component],
            ParamRef::Vertex { index, component } => &mut self.vertices[index][component],
        }
    }
}

/// Address of one scalar parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamRef {
    Grid {
        grid: usize,
        level: usize,
        slot: usize,
        component: usize,
    },
    Vertex {
        index: usize,
        component: usize,
    },
}

/// Every scalar parameter, grids first.
pub fn parameter_refs(grids: &GridSequence, vertex_count: usize) -> Vec<ParamRef> {
    let mut out = Vec::new();
    for (g, grid) in grids.grids().enumerate() {
        for (l, lvl) in grid.levels().iter().enumerate() {
            for slot in 0..lvl.active_count() {
                for component in 0..6 {
                    out.push(ParamRef::Grid {
                        grid: g,
                        level: l,
                        slot,
                        component,
                    });
                }
            }
        }
    }
    for index in 0..vertex_count {
        for component in 0..3 {
            out.push(ParamRef::Vertex { index, component });
        }
    }
    out
}

fn param_mut<'a>(grids: &'a mut GridSequence, vertices: &'a mut [Vec3], p: ParamRef) -> &'a mut f64 {
    match p {
        ParamRef::Grid {
            grid,
            level,
            slot,
            component,
        } => {
            let g = grids.grids_mut().nth(grid).unwrap();
            &mut g.levels_mut()[level].params[slot].0[component]
        }
        ParamRef::Vertex { index, component } => &mut vertices[index][component],
    }
}

/// Vector-Jacobian product of one grid applied to `xs`.
///
/// `tfs` are the parameters interpolated at `xs` in the forward pass and
/// `gys` the gradients at the outputs. Parameter gradients are added to
/// `out` (one vector per level); input gradients are returned on request.
pub fn grid_vjp(
    grid: &DeformationGrid,
    xs: &[Vec3],
    tfs: &[Transform6],
    gys: &[Vec3],
    out: &mut [Vec<Transform6>],
    want_input: bool,
) -> Option<Vec<Vec3>> {
    let inv_levels = 1.0 / grid.levels().len() as f64;
    // gradient with respect to the level-averaged parameters, pre-divided by
    // the level count, and the direct input gradient R^T g_y
    let local: Vec<(Transform6, Vec3)> = xs
        .par_iter()
        .zip(tfs.par_iter())
        .zip(gys.par_iter())
        .with_min_len(256)
        .map(|((x, tf), gy)| {
            let z = tf.z();
            let r = cayley_rotation(&z);
            let gz = cayley_pullback(&z, &r, &(gy * x.transpose()));
            (Transform6::from_parts(gz, *gy).scaled(inv_levels), r.transpose() * gy)
        })
        .collect();

    let per_level: Vec<Option<Vec<Vec3>>> = grid
        .levels()
        .par_iter()
        .zip(out.par_iter_mut())
        .map(|(lvl, acc)| {
            let mut gx = want_input.then(|| vec![Vec3::zeros(); xs.len()]);
            for (i, x) in xs.iter().enumerate() {
                let gt = &local[i].0;
                if gt.0.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let st = lvl.stencil(x);
                let mut dx = [0.0; 3];
                for c in 0..st.count {
                    let slot = st.slots[c];
                    if slot == INACTIVE {
                        continue;
                    }
                    acc[slot as usize].add_scaled(gt, st.weights[c]);
                    if gx.is_some() {
                        let s = lvl.params[slot as usize].dot(gt);
                        for a in 0..3 {
                            dx[a] += st.grads[c][a] * s;
                        }
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    gx[i] += Vec3::new(dx[0], dx[1], dx[2]);
                }
            }
            gx
        })
        .collect();

    want_input.then(|| {
        let mut gx: Vec<Vec3> = local.iter().map(|l| l.1).collect();
        for lvl in per_level.into_iter().flatten() {
            for (g, d) in gx.iter_mut().zip(lvl) {
                *g += d;
            }
        }
        gx
    })
}

/// Frame produced by the grid at `index` in [`GridSequence::grids`] order.
pub(crate) fn grid_target_frame(grids: &GridSequence, index: usize) -> usize {
    let nf = grids.forward().len();
    if index < nf {
        grids.keyframe() + index + 1
    } else {
        grids.keyframe() - (index - nf) - 1
    }
}

/// Gradient of the frozen objective recorded in `eval`.
pub fn backward(
    obj: &Objective,
    eval: &Evaluation,
    grids: &GridSequence,
    vertices: &[Vec3],
) -> Result<GradientBundle> {
    let key = obj.keyframe();
    let seq = obj.sequence();
    let nonkey = obj.nonkey_count().max(1) as f64;
    let mut bundle = GradientBundle::zeros(grids, vertices.len());

    eval.frozen
        .key
        .accumulate_gradient(vertices, seq.frame(key).points(), 1.0, &mut bundle.vertices);

    let edges = obj.edges();
    let w_iso = obj.config().effective_isometry_weight();
    let iso_scale = if edges.is_empty() || obj.isometry_pair_count() == 0 {
        0.0
    } else {
        w_iso / (obj.isometry_pair_count() * edges.len()) as f64
    };

    let forward_count = grids.forward().len();
    for direction in [Direction::Forward, Direction::Backward] {
        let chain = eval.chain(direction);
        let frames = grids.chain_frames(direction);
        let steps = frames.len();
        let mut gpos: Vec<Vec<Vec3>> = vec![vec![Vec3::zeros(); vertices.len()]; steps + 1];
        for (k, &t) in frames.iter().enumerate() {
            let m = eval.frozen.mesh[t].as_ref().unwrap();
            let scale = eval.frozen.confidence[t] / nonkey;
            m.accumulate_gradient(&chain.positions[k + 1], seq.frame(t).points(), scale, &mut gpos[k + 1]);
        }
        if iso_scale != 0.0 && steps > 0 {
            let lens: Vec<Vec<f64>> = chain.positions.iter().map(|x| edge_lengths(x, edges)).collect();
            for k in 0..steps {
                for (e, &(a, b)) in edges.iter().enumerate() {
                    let diff = lens[k + 1][e] - lens[k][e];
                    if diff == 0.0 {
                        continue;
                    }
                    let s = iso_scale * diff.signum();
                    let (a, b) = (a as usize, b as usize);
                    for (kk, sign) in [(k + 1, s), (k, -s)] {
                        let len = lens[kk][e];
                        if len > 0.0 {
                            let u = (chain.positions[kk][a] - chain.positions[kk][b]) * (sign / len);
                            gpos[kk][a] += u;
                            gpos[kk][b] -= u;
                        }
                    }
                }
            }
        }
        let offset = match direction {
            Direction::Forward => 0,
            Direction::Backward => forward_count,
        };
        let chain_grids = grids.chain_grids(direction);
        for k in (1..=steps).rev() {
            let gy = std::mem::take(&mut gpos[k]);
            let gin = grid_vjp(
                &chain_grids[k - 1],
                &chain.positions[k - 1],
                &chain.params[k - 1],
                &gy,
                &mut bundle.grids[offset + k - 1],
                true,
            )
            .unwrap();
            for (g, d) in gpos[k - 1].iter_mut().zip(gin) {
                *g += d;
            }
        }
        for (g, d) in bundle.vertices.iter_mut().zip(&gpos[0]) {
            *g += d;
        }
    }

    for t in 0..seq.len() {
        let (Some(src), Some(gi)) = (grids.source_frame(t), grids.grid_index_into(t)) else {
            continue;
        };
        let xs = seq.frame(src).points();
        let tfs = eval.transport_params[t].as_ref().unwrap();
        let moved: Vec<Vec3> = xs.iter().zip(tfs).map(|(x, tf)| apply_transform(tf, x)).collect();
        let mut gy = vec![Vec3::zeros(); xs.len()];
        eval.frozen.transport[t].as_ref().unwrap().accumulate_gradient(
            &moved,
            seq.frame(t).points(),
            1.0 / nonkey,
            &mut gy,
        );
        grid_vjp(grids.grid(gi), xs, tfs, &gy, &mut bundle.grids[gi], false);
    }

    for (gi, g) in bundle.grids.iter().enumerate() {
        for (l, lvl) in g.iter().enumerate() {
            if !lvl.iter().all(Transform6::is_finite) {
                return Err(Error::Numerical {
                    frame: grid_target_frame(grids, gi),
                    level: grids.grid(gi).levels()[l].level() as usize,
                    message: "non-finite grid parameter gradient".into(),
                });
            }
        }
    }
    if !bundle.vertices.iter().all(|v| v.iter().all(|x| x.is_finite())) {
        return Err(Error::Numerical {
            frame: key,
            level: 0,
            message: "non-finite template vertex gradient".into(),
        });
    }
    Ok(bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for FdTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-4,
            absolute: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdEntry {
    pub param: ParamRef,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub checked: usize,
    pub passed: bool,
    /// Over entries whose error exceeds the absolute floor.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub tolerance: FdTolerance,
    pub failures: Vec<FdEntry>,
}

/// Compares `analytic` with central differences of the objective frozen at
/// `eval`, one scalar parameter at a time.
pub fn finite_difference_check(
    obj: &Objective,
    eval: &Evaluation,
    grids: &GridSequence,
    vertices: &[Vec3],
    analytic: &GradientBundle,
    tol: FdTolerance,
) -> Result<FdReport> {
    let refs = parameter_refs(grids, vertices.len());
    let results: Vec<Result<FdEntry>> = refs
        .par_iter()
        .map(|&p| {
            let mut g = grids.clone();
            let mut v = vertices.to_vec();
            let theta = *param_mut(&mut g, &mut v, p);
            let h = theta.abs().max(1.0) * 1e-5;
            *param_mut(&mut g, &mut v, p) = theta + h;
            let plus = obj.frozen_loss(&eval.frozen, &g, &v)?.total;
            *param_mut(&mut g, &mut v, p) = theta - h;
            let minus = obj.frozen_loss(&eval.frozen, &g, &v)?.total;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(p);
            let scale = a.abs().max(numeric.abs());
            Ok(FdEntry {
                param: p,
                analytic: a,
                numeric,
                relative_error: if scale > 0.0 { (a - numeric).abs() / scale } else { 0.0 },
            })
        })
        .collect();
    let mut failures = Vec::new();
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    for r in results {
        let e = r?;
        let err = (e.analytic - e.numeric).abs();
        max_abs = max_abs.max(err);
        let bound = (tol.relative * e.analytic.abs().max(e.numeric.abs())).max(tol.absolute);
        if err > tol.absolute {
            max_rel = max_rel.max(e.relative_error);
        }
        if !(err <= bound) {
            failures.push(e);
        }
    }
    Ok(FdReport {
        checked: refs.len(),
        passed: failures.is_empty(),
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        tolerance: tol,
        failures,
    })
}

/// Randomized small problem for gradient verification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdInstance {
    pub levels: u32,
    pub frames: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for FdInstance {
    fn default() -> Self {
        Self {
            levels: 2,
            frames: 3,
            points: 50,
            seed: 0,
        }
    }
}

pub struct FdProblem {
    pub objective: Objective,
    pub grids: GridSequence,
    pub vertices: Vec<Vec3>,
    pub epoch: usize,
}

impl FdInstance {
    /// A 20-vertex sphere template, random clouds and grid parameters drawn
    /// from `[-0.5, 0.5]`, keyframe in the middle.
    pub fn build(&self) -> Result<FdProblem> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let mut unit = || rng.random::<f64>() * 2.0 - 1.0;
        let frames = (0..self.frames)
            .map(|_| PointCloud::new((0..self.points).map(|_| Vec3::new(unit(), unit(), unit()) * 0.6).collect()))
            .collect::<Result<Vec<_>>>()?;
        let seq = PointCloudSequence::new(frames)?;
        // off-axis shift keeps vertices away from lattice cell faces
        let shift = Vec3::new(0.031, -0.047, 0.023);
        let template: TriMesh = primitives::uv_sphere(3, 6, 0.45).map_vertices(|v| v + shift);
        let keyframe = self.frames / 2;
        let mut grids = GridSequence::identity(&GridLayout::new(self.levels), self.frames, keyframe)?;
        for g in grids.grids_mut() {
            for lvl in g.levels_mut() {
                for p in lvl.params.iter_mut() {
                    for v in p.0.iter_mut() {
                        *v = 0.5 * unit();
                    }
                }
            }
        }
        let config = ObjectiveConfig {
            max_epochs: 10,
            ..Default::default()
        };
        let vertices = template.vertices().to_vec();
        let objective = Objective::new(seq, &template, keyframe, config)?;
        Ok(FdProblem {
            objective,
            grids,
            vertices,
            epoch: 3,
        })
    }
}

impl FdProblem {
    pub fn evaluate(&self) -> Result<(Evaluation, GradientBundle)> {
        let eval = self.objective.evaluate(&self.grids, &self.vertices, self.epoch)?;
        let grad = backward(&self.objective, &eval, &self.grids, &self.vertices)?;
        Ok((eval, grad))
    }

    pub fn check(&self, analytic: &GradientBundle, eval: &Evaluation, tol: FdTolerance) -> Result<FdReport> {
        finite_difference_check(&self.objective, eval, &self.grids, &self.vertices, analytic, tol)
    }
}
