//! What (I + lambda L)^-2 does to a single spike on a lattice level: the
//! update spreads over neighbouring cells and loses height, more so for
//! larger lambda.
//!
//! cargo run --release --example gradient_smoothing

use gridtrack::grid::GridLevel;
use gridtrack::optim::OptimSchedule;
use gridtrack::precond::LaplacianOperator;

fn main() -> gridtrack::Result<()> {
    let level = GridLevel::dense(6);
    let r = level.resolution();
    let centre = [r / 2; 3];
    let slot = level.slot(centre).expect("dense level");
    let mut spike = vec![0.0; level.active_count()];
    spike[slot] = 1.0;
    let schedule = OptimSchedule::default();
    for lambda in [0.25, schedule.level_lambda(6), schedule.level_lambda(10), 16.0] {
        let op = LaplacianOperator::for_grid_level(&level, lambda)?;
        let x = op.smooth(&spike, 1)?;
        let along: Vec<String> = (0..=4)
            .map(|d| format!("{:.4}", x[level.slot([centre[0] + d, centre[1], centre[2]]).unwrap()]))
            .collect();
        let total: f64 = x.iter().sum();
        println!("lambda {lambda:7.3}: profile [{}], total {total:.6}, factor nnz {}", along.join(", "), op.factor_nnz());
    }
    Ok(())
}
