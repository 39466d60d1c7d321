//! Pruned grids for a thin bending bar, saved and loaded back.
//!
//! cargo run --release --example grid_checkpoint

use gridtrack::geometry::normalize_sequence;
use gridtrack::grid::{checkpoint, GridLayout, GridSequence};
use gridtrack::synth::{generate, SceneKind, SceneParams};

fn main() -> gridtrack::Result<()> {
    let (seq, _) = normalize_sequence(&generate(&SceneParams::new(SceneKind::BendingBar))?.sequence()?)?;
    let mut grids = GridSequence::build_pruned(&GridLayout::new(10), &seq, 4)?;
    for (k, g) in grids.grids_mut().enumerate() {
        for level in g.levels_mut() {
            for (i, p) in level.params.iter_mut().enumerate() {
                p.0[3] = 1e-3 * (k + i) as f64;
            }
        }
    }
    let counts = grids.parameter_counts();
    println!("{} grids, {} of {} parameters active ({:.1}%)", grids.grid_count(), counts.active, counts.dense, 100.0 * counts.fraction());

    let dir = std::env::temp_dir().join("gridtrack-example");
    std::fs::create_dir_all(&dir).map_err(|e| gridtrack::Error::InvalidInput(e.to_string()))?;
    let path = dir.join("grids.bin");
    checkpoint::save(&path, &grids)?;
    let back = checkpoint::load(&path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("{} bytes at {}, identical after reload: {}", size, path.display(), back == grids);
    Ok(())
}
