//! Exact nearest-neighbour queries against a brute-force scan.
//!
//! cargo run --release --example nearest_neighbours

use gridtrack::geometry::{primitives, sample_surface, Vec3};
use gridtrack::spatial::{brute_force_nearest, NnIndex};
use std::time::Instant;

fn main() -> gridtrack::Result<()> {
    let points = sample_surface(&primitives::icosphere(3), 100_000, 0)?.0.into_points();
    let start = Instant::now();
    let index = NnIndex::build(&points)?;
    println!("indexed {} points in {:.1} ms", index.len(), start.elapsed().as_secs_f64() * 1e3);
    let queries: Vec<Vec3> = (0..2000).map(|i| Vec3::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), (i as f64 * 0.07).sin()) * 1.3).collect();
    let start = Instant::now();
    let fast: Vec<(usize, f64)> = queries.iter().map(|q| index.nearest(q)).collect();
    let t_index = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let slow: Vec<(usize, f64)> = queries.iter().map(|q| brute_force_nearest(&points, q)).collect();
    let t_brute = start.elapsed().as_secs_f64();
    let agree = fast.iter().zip(&slow).filter(|(a, b)| a.1 == b.1).count();
    println!("{agree}/{} distances identical; index {:.2} ms, brute force {:.0} ms", queries.len(), t_index * 1e3, t_brute * 1e3);
    Ok(())
}
