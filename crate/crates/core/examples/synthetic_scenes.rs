//! Generates the three synthetic scenes and shows how much each one
//! stretches its surface from frame to frame.
//!
//! cargo run --release --example synthetic_scenes

use gridtrack::synth::{generate, SceneKind, SceneParams};

fn main() -> gridtrack::Result<()> {
    for kind in [SceneKind::RigidSphere, SceneKind::BendingBar, SceneKind::ScalingCube] {
        let scene = generate(&SceneParams::new(kind))?;
        let mesh = &scene.meshes[0];
        println!("{kind:?}: {} vertices, {} triangles, {} points per frame", mesh.vertices().len(), mesh.triangles().len(), scene.clouds[0].len());
        let tracks = scene.tracks();
        for t in 1..tracks.len() {
            // mean absolute edge-length change against the previous frame
            let change: f64 = mesh
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let (i, j) = (i as usize, j as usize);
                    ((tracks[t][i] - tracks[t][j]).norm() - (tracks[t - 1][i] - tracks[t - 1][j]).norm()).abs()
                })
                .sum::<f64>()
                / mesh.edges().len() as f64;
            let bb = scene.clouds[t].bounding_box();
            println!("  frame {t}: edge change {change:.2e}, cloud extent {:.3?}", (bb.max - bb.min).as_slice());
        }
    }
    Ok(())
}
