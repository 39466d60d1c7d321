//! In-memory pipeline: normalize, pick the keyframe, build grids, optimize.

use log::warn;

use crate::config::RunConfig;
use crate::geometry::{normalize_sequence, NormalizationTransform, PointCloudSequence, TriMesh, Vec3};
use crate::grid::{Direction, GridSequence, ParameterCounts};
use crate::keyframe::{select_keyframe, KeyframeReport};
use crate::objective::Objective;
use crate::optim::{run, HistoryEntry, Optimizer, RunOutcome};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Prepared {
    /// Frames mapped into [-1, 1]^3.
    pub sequence: PointCloudSequence,
    /// Input units to normalized units.
    pub normalization: NormalizationTransform,
    /// The template in normalized units.
    pub template: TriMesh,
    pub keyframe: usize,
    pub report: KeyframeReport,
}

/// Normalizes the frames, selects the keyframe and maps the template into
/// the same units. A template tied to a frame other than the selected one
/// wins, since the mesh describes that frame; the mismatch is logged.
pub fn prepare(raw: &PointCloudSequence, template: &TriMesh, template_frame: Option<usize>) -> Result<Prepared> {
    let (sequence, tf) = normalize_sequence(raw)?;
    let report = select_keyframe(&sequence);
    let keyframe = match template_frame {
        Some(t) if t >= sequence.len() => {
            return Err(Error::Config(format!("template frame {t} outside a {}-frame sequence", sequence.len())));
        }
        Some(t) => {
            if t != report.keyframe {
                warn!("template is from frame {t} but frame {} scores highest; using frame {t}", report.keyframe);
            }
            t
        }
        None => report.keyframe,
    };
    let normalization = *sequence.normalization();
    Ok(Prepared {
        template: template.map_vertices(|v| tf.apply(v)),
        sequence,
        normalization,
        keyframe,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub outcome: RunOutcome,
    pub counts: ParameterCounts,
    pub epochs: usize,
}

pub fn solve(
    prepared: &Prepared,
    config: &RunConfig,
    initial: Option<GridSequence>,
    on_log: impl FnMut(&HistoryEntry),
) -> Result<Solution> {
    let frames = prepared.sequence.len();
    let epochs = config.epochs_for(frames);
    let objective = Objective::new(
        prepared.sequence.clone(),
        &prepared.template,
        prepared.keyframe,
        config.objective(frames),
    )?;
    let grids = match initial {
        Some(g) => {
            if g.frame_count() != frames || g.keyframe() != prepared.keyframe {
                return Err(Error::invalid(format!(
                    "checkpoint covers {} frames from keyframe {}, run has {} frames from keyframe {}",
                    g.frame_count(),
                    g.keyframe(),
                    frames,
                    prepared.keyframe
                )));
            }
            g
        }
        None => GridSequence::build_pruned(&config.layout(), &prepared.sequence, prepared.keyframe)?,
    };
    let counts = grids.parameter_counts();
    let vertices = prepared.template.vertices().to_vec();
    let mut optimizer = Optimizer::new(config.optimizer(), &grids, vertices.len(), prepared.template.edges())?;
    let outcome = run(&objective, grids, vertices, &mut optimizer, epochs, config.log_interval, on_log)?;
    Ok(Solution { outcome, counts, epochs })
}

/// Template positions carried to every frame, chaining outward from the
/// keyframe.
pub fn deform_all(grids: &GridSequence, base: &[Vec3]) -> Vec<Vec<Vec3>> {
    let mut out = vec![Vec::new(); grids.frame_count()];
    out[grids.keyframe()] = base.to_vec();
    for dir in [Direction::Forward, Direction::Backward] {
        let mut pts = base.to_vec();
        for (t, g) in grids.chain_frames(dir).into_iter().zip(grids.chain_grids(dir)) {
            pts = g.transform_points(&pts);
            out[t] = pts.clone();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{primitives, PointCloud};

    #[test]
    fn deform_all_matches_per_frame_chains() {
        let mesh = primitives::icosphere(1).map_vertices(|v| v * 0.5);
        let mut grids = GridSequence::identity(&crate::grid::GridLayout::new(2), 5, 2).unwrap();
        let mut k = 0.0f64;
        for g in grids.grids_mut() {
            for l in g.levels_mut() {
                for p in l.params.iter_mut() {
                    for v in p.0.iter_mut() {
                        k += 1.0;
                        *v = 0.05 * (0.9 * k).sin();
                    }
                }
            }
        }
        let all = deform_all(&grids, mesh.vertices());
        for (t, frame) in all.iter().enumerate() {
            assert_eq!(frame, &grids.deform_points(mesh.vertices(), t).unwrap());
        }
    }

    #[test]
    fn static_scene_stays_on_the_template() {
        let mesh = primitives::icosphere(2).map_vertices(|v| v * 3.0 + Vec3::new(10.0, 0.0, 0.0));
        let seq = PointCloudSequence::new(vec![PointCloud::new(mesh.vertices().to_vec()).unwrap(); 3]).unwrap();
        let prepared = prepare(&seq, &mesh, None).unwrap();
        assert_eq!(prepared.keyframe, 1);
        let config = RunConfig {
            levels: 3,
            epochs: Some(5),
            ..Default::default()
        };
        let sol = solve(&prepared, &config, None, |_| {}).unwrap();
        assert_eq!(sol.outcome.best_loss.total, 0.0);
        for frame in deform_all(&sol.outcome.grids, &sol.outcome.vertices) {
            for (p, q) in frame.iter().zip(mesh.vertices()) {
                assert!((prepared.normalization.invert(p) - q).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn template_frame_overrides_and_is_checked() {
        let mesh = primitives::icosphere(1);
        let seq = PointCloudSequence::new(vec![PointCloud::new(mesh.vertices().to_vec()).unwrap(); 4]).unwrap();
        assert_eq!(prepare(&seq, &mesh, Some(0)).unwrap().keyframe, 0);
        assert!(matches!(prepare(&seq, &mesh, Some(4)), Err(Error::Config(_))));
    }
}
