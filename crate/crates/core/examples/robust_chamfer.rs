//! Outliers move the plain squared Chamfer distance a lot and the robust one
//! hardly at all.
//!
//! cargo run --release --example robust_chamfer

use gridtrack::geometry::{primitives, sample_surface, Vec3};
use gridtrack::objective::{robust_chamfer, RobustChamferParams};
use rand::{Rng, SeedableRng};

fn plain(p: &[Vec3], q: &[Vec3]) -> gridtrack::Result<f64> {
    // alpha -> 0 turns every weight into 1
    robust_chamfer(p, q, &RobustChamferParams::new(1e-300)?)
}

fn main() -> gridtrack::Result<()> {
    let sphere = primitives::icosphere(3).map_vertices(|v| v * 0.5);
    let clean = sample_surface(&sphere, 3000, 1)?.0.into_points();
    let reference = sample_surface(&sphere, 3000, 2)?.0.into_points();
    let robust = RobustChamferParams::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    println!("outliers   plain CD  robust CD");
    for share in [0.0, 0.01, 0.05, 0.2] {
        let mut noisy = clean.clone();
        let n = (share * noisy.len() as f64) as usize;
        for p in noisy.iter_mut().take(n) {
            *p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        println!("{:7.0}%  {:.3e}  {:.3e}", 100.0 * share, plain(&noisy, &reference)?, robust_chamfer(&noisy, &reference, &robust)?);
    }
    Ok(())
}
