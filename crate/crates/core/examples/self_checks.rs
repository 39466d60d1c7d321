//! The three verification harnesses behind `gridtrack check`.
//!
//! cargo run --release --example self_checks

use gridtrack::checks::{grad_check, interp_check, precond_check};
use gridtrack::gradients::FdInstance;

fn main() -> gridtrack::Result<()> {
    let g = grad_check(FdInstance::default(), false)?;
    println!("gradients: {} coordinates, largest error {:.2e}, passed {}", g.report.checked, g.report.max_absolute_error, g.passed);
    let bad = grad_check(FdInstance::default(), true)?;
    println!("  with one entry doubled: passed {}, flagged {:?}", bad.passed, bad.report.failures.first().map(|f| f.param));
    let p = precond_check(9, 0)?;
    for c in &p.cases {
        println!("smoothing {:>14} lambda {:8.3}: residual {:.1e}, |x|/|g| {:.3}", c.kind, c.lambda, c.residual, c.norm_ratio);
    }
    let i = interp_check(10_000, 0)?;
    println!(
        "grid algebra: orthogonality {:.1e}, partition of unity {:.1e}, identity exact {}",
        i.max_orthogonality_error, i.max_partition_error, i.identity_exact
    );
    Ok(())
}
