//! Recovers a rigidly moving lumpy sphere and reports how close the tracked
//! template stays to the ground truth.
//!
//! cargo run --release --example rigid_recovery -- [epochs]

use gridtrack::config::RunConfig;
use gridtrack::geometry::PointCloudSequence;
use gridtrack::metrics::{correspondence_error, UnitBox};
use gridtrack::objective::{robust_chamfer, RobustChamferParams};
use gridtrack::pipeline::{deform_all, prepare, solve};
use gridtrack::synth::{generate, SceneKind, SceneParams};

fn main() -> gridtrack::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse().expect("epochs")).unwrap_or(2000);
    let scene = generate(&SceneParams::new(SceneKind::RigidSphere))?;
    let raw = PointCloudSequence::new(scene.clouds.clone())?;
    let key = gridtrack::keyframe::select_keyframe(&gridtrack::geometry::normalize_sequence(&raw)?.0).keyframe;
    let prepared = prepare(&raw, &scene.meshes[key], Some(key))?;
    let config = RunConfig {
        epochs: Some(epochs),
        log_interval: 100,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let sol = solve(&prepared, &config, None, |h| {
        println!(
            "epoch {:5}  total {:.3e}  mesh {:.3e}  transform {:.3e}  iso {:.3e}  {:.0}s",
            h.epoch, h.loss.total, h.loss.mesh, h.loss.transform, h.loss.isometry, h.wall_time_s
        )
    })?;
    println!("keyframe {key}, best epoch {}, {:.0}s", sol.outcome.best_epoch, start.elapsed().as_secs_f64());
    println!("active parameters {:.1}% of dense", 100.0 * sol.counts.fraction());

    let tracks = deform_all(&sol.outcome.grids, &sol.outcome.vertices);
    let params = RobustChamferParams::default();
    let (mut pred_unit, mut gt_unit) = (Vec::new(), Vec::new());
    for (t, x) in tracks.iter().enumerate() {
        let gt = prepared.normalization.apply_all(scene.meshes[t].vertices());
        let cd = robust_chamfer(x, &gt, &params)?;
        println!("frame {t}: robust CD to the true mesh {cd:.3e}");
        let unit = UnitBox::fit(&scene.meshes[t].bounding_box())?;
        pred_unit.push(unit.apply_all(&prepared.normalization.invert_all(x)));
        gt_unit.push(unit.apply_all(scene.meshes[t].vertices()));
    }
    println!("correspondence error {:.4}", correspondence_error(&pred_unit, &gt_unit)?);
    Ok(())
}
