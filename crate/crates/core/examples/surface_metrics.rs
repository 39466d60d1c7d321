//! Chamfer distance, normal consistency and F-scores of a sphere against
//! increasingly perturbed copies.
//!
//! cargo run --release --example surface_metrics

use gridtrack::geometry::{primitives, Vec3};
use gridtrack::metrics::{evaluate_frame, MetricsConfig};

fn main() -> gridtrack::Result<()> {
    let gt = primitives::icosphere(4);
    let config = MetricsConfig::default();
    println!("amplitude   CD (1e-5)      NC  F-0.5%    F-1%");
    for amp in [0.0, 0.002, 0.005, 0.01, 0.02, 0.05] {
        let pred = gt.map_vertices(|v| v * (1.0 + amp * (9.0 * v.x).sin() * (7.0 * v.y).cos()) + Vec3::new(amp, 0.0, 0.0));
        let m = evaluate_frame(&pred, &gt, &config)?;
        println!("{amp:9.3}  {:10.3}  {:.4}  {:.4}  {:.4}", m.cd_e5, m.nc, m.f_half, m.f_one);
    }
    Ok(())
}
