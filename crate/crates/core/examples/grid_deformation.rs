//! A grid whose every vertex stores the same motion applies exactly that
//! motion everywhere; a grid that varies in space bends the points.
//!
//! cargo run --release --example grid_deformation

use gridtrack::geometry::{primitives, Vec3};
use gridtrack::grid::{apply_transform, cayley_rotation, DeformationGrid, Direction, GridLayout, Transform6};

fn main() {
    let layout = GridLayout::new(4);
    let motion = Transform6::from_parts(Vec3::new(0.0, 0.0, (15f64.to_radians() / 2.0).tan()), Vec3::new(0.1, 0.0, 0.0));
    let r = cayley_rotation(&motion.z());
    println!("Cayley rotation angle {:.4} deg, det {:.15}", ((r.trace() - 1.0) / 2.0).acos().to_degrees(), r.determinant());

    let mut rigid = DeformationGrid::dense(Direction::Forward, &layout);
    for level in rigid.levels_mut() {
        level.params.fill(motion);
    }
    let points = primitives::icosphere(2).map_vertices(|v| v * 0.6).vertices().to_vec();
    let moved = rigid.transform_points(&points);
    let err = points.iter().zip(&moved).map(|(p, q)| (apply_transform(&motion, p) - q).norm()).fold(0.0, f64::max);
    println!("uniform grid vs direct motion: max difference {err:.2e}");

    // twist about z growing with height, stored only on the finest level
    let mut twist = DeformationGrid::dense(Direction::Forward, &layout);
    let finest = twist.levels_mut().last_mut().unwrap();
    for (slot, c) in finest.coords().to_vec().into_iter().enumerate() {
        let h = finest.vertex_position(c).z;
        finest.params[slot] = Transform6::from_parts(Vec3::new(0.0, 0.0, 0.3 * h), Vec3::zeros());
    }
    for z in [-0.5, 0.0, 0.5] {
        let p = Vec3::new(0.5, 0.0, z);
        let q = twist.transform_point(&p);
        println!("twist: ({:.2}, {:.2}, {:.2}) -> ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z, q.x, q.y, q.z);
    }
}
