//! Self-checks runnable from the command line: gradients against finite
//! differences, the smoothing solve, and the grid algebra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

use crate::geometry::{primitives, Vec3};
use crate::gradients::{FdInstance, FdReport, FdTolerance, ParamRef};
use crate::grid::{cayley_rotation, GridLayout, GridLevel, GridSequence};
use crate::optim::OptimSchedule;
use crate::precond::LaplacianOperator;
use crate::Result;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheck {
    pub instance: FdInstance,
    /// Entry deliberately doubled before comparing, if any.
    pub corrupted: Option<ParamRef>,
    pub report: FdReport,
    pub seconds: f64,
    pub passed: bool,
}

/// Compares every analytic gradient entry of a random instance with central
/// differences. With `corrupt`, one entry is doubled first so the check is
/// expected to fail on exactly that entry.
pub fn grad_check(instance: FdInstance, corrupt: bool) -> Result<GradCheck> {
    let start = Instant::now();
    let problem = instance.build()?;
    let (eval, mut grad) = problem.evaluate()?;
    let mut corrupted = None;
    if corrupt {
        // the largest grid entry is far above the absolute floor
        let refs = crate::gradients::parameter_refs(&problem.grids, problem.vertices.len());
        let target = refs
            .into_iter()
            .filter(|r| matches!(r, ParamRef::Grid { .. }))
            .max_by(|a, b| grad.get(*a).abs().total_cmp(&grad.get(*b).abs()))
            .expect("instances have grid parameters");
        *grad.get_mut(target) *= 2.0;
        corrupted = Some(target);
    }
    let report = problem.check(&grad, &eval, FdTolerance::default())?;
    Ok(GradCheck {
        instance,
        corrupted,
        passed: report.passed,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondCase {
    pub kind: String,
    pub nodes: usize,
    pub lambda: f64,
    /// max over channels of |(I + lambda L)^2 x - g| / |g|
    pub residual: f64,
    /// largest deviation when smoothing a constant field
    pub constant_error: f64,
    /// |x| / |g|, never above 1
    pub norm_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondCheck {
    pub cases: Vec<PrecondCase>,
    pub seconds: f64,
    pub passed: bool,
}

pub const PRECOND_RESIDUAL_TOL: f64 = 1e-8;
pub const PRECOND_CONSTANT_TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn precond_case(kind: String, op: &LaplacianOperator, rng: &mut ChaCha8Rng) -> Result<PrecondCase> {
    const CH: usize = 6;
    let n = op.node_count();
    let g: Vec<f64> = (0..n * CH).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let x = op.smooth(&g, CH)?;
    let mut residual = 0.0f64;
    for c in 0..CH {
        let xc: Vec<f64> = (0..n).map(|i| x[i * CH + c]).collect();
        let gc: Vec<f64> = (0..n).map(|i| g[i * CH + c]).collect();
        let back = op.apply_shifted(&op.apply_shifted(&xc));
        let r: Vec<f64> = back.iter().zip(&gc).map(|(a, b)| a - b).collect();
        residual = residual.max(norm(&r) / norm(&gc));
    }
    let constant: Vec<f64> = (0..n * CH).map(|i| 0.5 + (i % CH) as f64).collect();
    let smoothed = op.smooth(&constant, CH)?;
    let constant_error = smoothed.iter().zip(&constant).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let norm_ratio = norm(&x) / norm(&g);
    Ok(PrecondCase {
        kind,
        nodes: n,
        lambda: op.lambda(),
        residual,
        constant_error,
        norm_ratio,
        passed: residual < PRECOND_RESIDUAL_TOL && constant_error < PRECOND_CONSTANT_TOL && norm_ratio <= 1.0,
    })
}

/// Random six-channel gradients on dense lattices with up to `max_side`
/// vertices per axis and on icospheres up to 642 vertices.
pub fn precond_check(max_side: u32, seed: u64) -> Result<PrecondCheck> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = OptimSchedule::default();
    let mut cases = Vec::new();
    let mut level = 2;
    while GridLevel::resolution_for(level) <= max_side {
        let lvl = GridLevel::dense(level);
        let r = lvl.resolution();
        for lambda in [schedule.level_lambda(level), schedule.level_lambda(10)] {
            let op = LaplacianOperator::for_grid_level(&lvl, lambda)?;
            cases.push(precond_case(format!("lattice {r}^3"), &op, &mut rng)?);
        }
        level += 1;
    }
    for sub in 1..=3 {
        let mesh = primitives::icosphere(sub);
        let op = LaplacianOperator::for_mesh(&mesh, schedule.mesh_lambda)?;
        cases.push(precond_case(format!("icosphere {}", mesh.vertices().len()), &op, &mut rng)?);
    }
    Ok(PrecondCheck {
        passed: cases.iter().all(|c| c.passed),
        cases,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpCheck {
    pub rotations: usize,
    pub max_orthogonality_error: f64,
    pub max_determinant_error: f64,
    pub queries: usize,
    pub max_partition_error: f64,
    pub identity_exact: bool,
    pub passed: bool,
}

pub const CAYLEY_TOL: f64 = 1e-9;
pub const PARTITION_TOL: f64 = 1e-12;

/// Cayley orthogonality over random `z` with |z| up to 10, trilinear weight
/// sums over random queries (some outside the domain), and exact identity
/// of all-zero grids.
pub fn interp_check(samples: usize, seed: u64) -> Result<InterpCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || Vec3::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
    let (mut orth, mut det) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let mut z = unit();
        if z.norm() > 1.0 {
            z /= z.norm();
        }
        let r = cayley_rotation(&(z * 10.0));
        orth = orth.max((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max());
        det = det.max((r.determinant() - 1.0).abs());
    }
    let levels: Vec<GridLevel> = (1..=10).map(GridLevel::dense).collect();
    let mut partition = 0.0f64;
    for _ in 0..samples {
        let x = unit() * 1.2;
        for lvl in &levels {
            let st = lvl.stencil(&x);
            let sum: f64 = st.weights[..st.count].iter().sum();
            partition = partition.max((sum - 1.0).abs());
        }
    }
    let grids = GridSequence::identity(&GridLayout::new(10), 4, 1)?;
    let points: Vec<Vec3> = (0..samples.min(2000)).map(|_| unit() * 1.1).collect();
    let identity_exact = (0..4).all(|t| grids.deform_points(&points, t).map(|p| p == points).unwrap_or(false));
    Ok(InterpCheck {
        rotations: samples,
        max_orthogonality_error: orth,
        max_determinant_error: det,
        queries: samples,
        max_partition_error: partition,
        identity_exact,
        passed: orth < CAYLEY_TOL && det < CAYLEY_TOL && partition < PARTITION_TOL && identity_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_check_passes_and_catches_corruption() {
        let ok = grad_check(FdInstance::default(), false).unwrap();
        assert!(ok.passed);
        assert_eq!(ok.corrupted, None);
        let bad = grad_check(FdInstance::default(), true).unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.report.failures.len(), 1);
        assert_eq!(Some(bad.report.failures[0].param), bad.corrupted);
    }

    #[test]
    fn precond_check_on_small_lattices() {
        let report = precond_check(5, 3).unwrap();
        // 3^3 and 5^3 at two strengths, three spheres
        assert_eq!(report.cases.len(), 7);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn interp_check_passes() {
        let report = interp_check(2000, 1).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
