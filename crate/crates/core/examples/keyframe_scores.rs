//! Keyframe choice on a bending bar: occupancy, centrality and their product.
//!
//! cargo run --release --example keyframe_scores

use gridtrack::geometry::normalize_sequence;
use gridtrack::keyframe::select_keyframe;
use gridtrack::synth::{generate, SceneKind, SceneParams};

fn main() -> gridtrack::Result<()> {
    let params = SceneParams {
        frames: 12,
        ..SceneParams::new(SceneKind::BendingBar)
    };
    let (seq, _) = normalize_sequence(&generate(&params)?.sequence()?)?;
    let report = select_keyframe(&seq);
    println!("frame  occupied  centrality  score");
    for t in 0..seq.len() {
        let mark = if t == report.keyframe { "  <- keyframe" } else { "" };
        println!("{t:5}  {:8}  {:10.4}  {:8.2}{mark}", report.occupancy[t], report.weights[t], report.scores[t]);
    }
    Ok(())
}
