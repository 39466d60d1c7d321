use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{primitives, sample_surface, PointCloud};
use crate::grid::{DeformationGrid, GridLayout};

fn state(epoch: usize, max_epochs: usize, cd_max: f64) -> ConfidenceState {
    ConfidenceState {
        epoch,
        max_epochs,
        cd_max,
    }
}

#[test]
fn delta_schedule_endpoints() {
    assert_eq!(catch_up_exponent(0, 2000), 1.0);
    assert_eq!(catch_up_exponent(2000, 2000), 0.0);
    let mut prev = f64::INFINITY;
    for e in 0..=100 {
        let d = catch_up_exponent(e, 100);
        assert!(d < prev && (0.0..=1.0).contains(&d));
        prev = d;
    }
}

#[test]
fn weights_are_one_below_cd_max() {
    let w = confidence_weights(&state(0, 10, 0.5), 2, &[0.1, 0.5, 9.0, 0.2, 0.49]);
    assert_eq!(w, vec![1.0; 5]);
}

#[test]
fn weights_are_one_at_final_epoch() {
    let w = confidence_weights(&state(10, 10, 0.0), 0, &[0.0, 3.0, 7.0, 1.0]);
    assert_eq!(w, vec![1.0; 4]);
}

#[test]
fn weight_product_by_hand() {
    let cd_max = 0.25;
    let w = confidence_weights(&state(0, 10, cd_max), 0, &[0.0, cd_max + 1.0, cd_max + 3.0]);
    assert_eq!(w[0], 1.0);
    assert!((w[1] - 0.5).abs() < 1e-12);
    assert!((w[2] - 0.5 * 0.25).abs() < 1e-12);

    // interior keyframe, δ = 1 - sqrt(1/4) = 0.5, backward direction
    let w = confidence_weights(&state(1, 4, 0.0), 2, &[1.0, 3.0, 100.0, 0.0]);
    assert!((w[1] - 0.25f64.sqrt()).abs() < 1e-12);
    assert!((w[0] - 0.25f64.sqrt() * 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(w[2], 1.0);
    assert_eq!(w[3], 1.0);
}

proptest::proptest! {
    #[test]
    fn weights_shrink_outward(
        cds in proptest::collection::vec(0.0f64..2.0, 2..12),
        key_frac in 0.0f64..1.0,
        epoch in 0usize..100,
        cd_max in 0.0f64..1.0,
    ) {
        let key = ((cds.len() - 1) as f64 * key_frac) as usize;
        let w = confidence_weights(&state(epoch, 100, cd_max), key, &cds);
        proptest::prop_assert_eq!(w[key], 1.0);
        for t in key + 1..cds.len() {
            proptest::prop_assert!(w[t] <= w[t - 1] && w[t] > 0.0);
        }
        for t in (0..key).rev() {
            proptest::prop_assert!(w[t] <= w[t + 1] && w[t] > 0.0);
        }
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| (Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0)) * scale)
        .collect()
}

fn fill_random(grids: &mut GridSequence, rng: &mut ChaCha8Rng, scale: f64) {
    for g in grids.grids_mut() {
        for lvl in g.levels_mut() {
            for p in lvl.params.iter_mut() {
                for v in p.0.iter_mut() {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * scale;
                }
            }
        }
    }
}

fn tetra_mesh(vertices: Vec<Vec3>) -> TriMesh {
    TriMesh::new(vertices, vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]]).unwrap()
}

fn sequence(frames: Vec<Vec<Vec3>>) -> PointCloudSequence {
    PointCloudSequence::new(frames.into_iter().map(|f| PointCloud::new(f).unwrap()).collect()).unwrap()
}

#[test]
fn static_scene_with_perfect_template_is_zero() {
    let mesh = primitives::icosphere(1).map_vertices(|v| v * 0.5);
    let frames = vec![mesh.vertices().to_vec(); 4];
    let obj = Objective::new(sequence(frames), &mesh, 1, ObjectiveConfig::default()).unwrap();
    let grids = GridSequence::identity(&GridLayout::new(3), 4, 1).unwrap();
    let ev = obj.evaluate(&grids, mesh.vertices(), 0).unwrap();
    assert_eq!(ev.loss.mesh, 0.0);
    assert_eq!(ev.loss.transform, 0.0);
    assert_eq!(ev.loss.isometry, 0.0);
    assert_eq!(ev.loss.total, 0.0);
    assert_eq!(obj.cd_max(&grids).unwrap(), 0.0);
}

#[test]
fn single_level_rigid_motion_is_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p0 = random_cloud(&mut rng, 60, 0.5);
    let z = Vec3::new(0.1, -0.2, 0.15);
    let t = Vec3::new(0.05, 0.0, -0.03);
    let rot = crate::grid::cayley_rotation(&z);
    let p1: Vec<Vec3> = p0.iter().map(|p| rot * p + t).collect();
    let layout = GridLayout {
        level_count: 1,
        multires: false,
    };
    let mut grids = GridSequence::identity(&layout, 2, 0).unwrap();
    grids.grids_mut().next().unwrap().levels_mut()[0].params[0] = Transform6::from_parts(z, t);
    // a template made of the cloud itself, so both terms can vanish
    let tris: Vec<[u32; 3]> = (0..20).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
    let template = TriMesh::new(p0.clone(), tris).unwrap();
    let obj = Objective::new(sequence(vec![p0, p1]), &template, 0, ObjectiveConfig::default()).unwrap();
    let ev = obj.evaluate(&grids, template.vertices(), 0).unwrap();
    assert!(ev.loss.transport_cd[1] < 1e-10);
    assert!(ev.loss.frame_cd[1] < 1e-10);
    assert_eq!(ev.loss.mesh, 0.0);
}

#[test]
fn mismatched_grids_are_rejected() {
    let mesh = primitives::icosphere(0);
    let obj = Objective::new(sequence(vec![mesh.vertices().to_vec(); 3]), &mesh, 1, ObjectiveConfig::default()).unwrap();
    let grids = GridSequence::identity(&GridLayout::new(2), 4, 1).unwrap();
    assert!(obj.evaluate(&grids, mesh.vertices(), 0).is_err());
    let grids = GridSequence::identity(&GridLayout::new(2), 3, 0).unwrap();
    assert!(obj.evaluate(&grids, mesh.vertices(), 0).is_err());
}

#[test]
fn cd_max_of_shifted_single_points() {
    let frames: Vec<Vec<Vec3>> = (0..4).map(|t| vec![Vec3::new(0.1 * t as f64 * t as f64, 0.0, 0.0)]).collect();
    let mesh = tetra_mesh(vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]);
    let obj = Objective::new(sequence(frames), &mesh, 0, ObjectiveConfig::default()).unwrap();
    let grids = GridSequence::identity(&GridLayout::new(2), 4, 0).unwrap();
    // steps between consecutive frames are 0.1, 0.3, 0.5
    let cd = |d: f64| 2.0 * (-5.56 * d * d).exp() * d * d;
    let expected = cd(0.1).max(cd(0.3)).max(cd(0.5));
    let got = obj.cd_max(&grids).unwrap();
    assert!((got - expected).abs() < 1e-15);
    let ev = obj.evaluate(&grids, mesh.vertices(), 0).unwrap();
    assert_eq!(ev.loss.cd_max.to_bits(), got.to_bits());
}

#[test]
fn template_vertices_against_sphere_samples() {
    let mesh = primitives::icosphere(3);
    let (cloud, _) = sample_surface(&mesh, 5000, 4).unwrap();
    let params = RobustChamferParams::default();
    let v = robust_chamfer(mesh.vertices(), cloud.points(), &params).unwrap();
    let brute = |from: &[Vec3], to: &[Vec3]| {
        from.iter()
            .map(|a| {
                let d2 = to.iter().map(|b| (a - b).norm_squared()).fold(f64::INFINITY, f64::min);
                (-5.56 * d2).exp() * d2
            })
            .sum::<f64>()
            / from.len() as f64
    };
    let oracle = brute(mesh.vertices(), cloud.points()) + brute(cloud.points(), mesh.vertices());
    assert!((v - oracle).abs() < 1e-12);
}

#[test]
fn isometry_vanishes_under_rigid_motion() {
    let mesh = primitives::icosphere(1).map_vertices(|v| v * 0.4);
    let frames = vec![mesh.vertices().to_vec(); 5];
    let obj = Objective::new(sequence(frames), &mesh, 2, ObjectiveConfig::default()).unwrap();
    let mut grids = GridSequence::identity(&GridLayout::new(3), 5, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for g in grids.grids_mut() {
        let tf = Transform6(std::array::from_fn(|_| rng.random::<f64>() * 0.4 - 0.2));
        for lvl in g.levels_mut() {
            lvl.params.iter_mut().for_each(|p| *p = tf);
        }
    }
    let ev = obj.evaluate(&grids, mesh.vertices(), 0).unwrap();
    assert!(ev.loss.isometry < 1e-9);
}

#[test]
fn isometry_of_uniform_scaling() {
    // unit-edge square with a diagonal
    let x0 = vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()];
    let mesh = TriMesh::new(x0.clone(), vec![[0, 1, 2], [0, 2, 3]]).unwrap();
    let s: f64 = 1.1;
    let frames: Vec<Vec<Vec3>> = (0..4).map(|t| x0.iter().map(|p| p * s.powi(t)).collect()).collect();
    let obj = Objective::new(sequence(frames.clone()), &mesh, 0, ObjectiveConfig::default()).unwrap();
    let chain = ChainRecord {
        positions: frames,
        params: vec![],
    };
    let empty = ChainRecord {
        positions: vec![x0],
        params: vec![],
    };
    let lens = [1.0, 1.0, 2f64.sqrt(), 1.0, 1.0];
    let total_len: f64 = lens.iter().sum();
    let expected: f64 = (0..3).map(|k| (s - 1.0) * s.powi(k) * total_len).sum::<f64>() / (3.0 * 5.0);
    let got = obj.isometry_value(&chain, &empty);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert!(got > 0.0);
}

/// Straight-line evaluation of the whole objective: brute-force neighbours,
/// explicit grid lookups, one frame at a time.
fn reference_loss(
    frames: &[Vec<Vec3>],
    vertices: &[Vec3],
    edges: &[(u32, u32)],
    grids: &GridSequence,
    key: usize,
    epoch: usize,
    max_epochs: usize,
) -> (f64, f64, f64, f64) {
    let alpha = 5.56;
    let cd = |a: &[Vec3], b: &[Vec3]| {
        let dir = |from: &[Vec3], to: &[Vec3]| {
            let mut s = 0.0;
            for p in from {
                let mut best = f64::INFINITY;
                for q in to {
                    best = best.min((p - q).norm_squared());
                }
                s += (-alpha * best).exp() * best;
            }
            s / from.len() as f64
        };
        dir(a, b) + dir(b, a)
    };
    let n = frames.len();
    let grid_into = |t: usize| -> &DeformationGrid {
        if t > key {
            &grids.forward()[t - key - 1]
        } else {
            &grids.backward()[key - t - 1]
        }
    };
    let source = |t: usize| if t > key { t - 1 } else { t + 1 };
    let x: Vec<Vec<Vec3>> = (0..n).map(|t| grids.deform_points(vertices, t).unwrap()).collect();

    let mesh = cd(vertices, &frames[key]);
    let mut cd_mesh = vec![0.0; n];
    let mut cd_trans = vec![0.0; n];
    for t in 0..n {
        if t == key {
            continue;
        }
        cd_mesh[t] = cd(&x[t], &frames[t]);
        let g = grid_into(t);
        let moved: Vec<Vec3> = frames[source(t)].iter().map(|p| g.transform_point(p)).collect();
        cd_trans[t] = cd(&moved, &frames[t]);
    }
    let cd_max = cd_trans.iter().copied().fold(0.0, f64::max);
    let delta = 1.0 - (epoch as f64 / max_epochs as f64).sqrt();
    let mut transform = 0.0;
    for t in 0..n {
        if t == key {
            continue;
        }
        let mut w = 1.0;
        let mut tau = t;
        loop {
            w *= (1.0 / (1.0 + (cd_mesh[tau] - cd_max).max(0.0))).powf(delta);
            tau = source(tau);
            if tau == key {
                break;
            }
        }
        transform += w * cd_mesh[t] + cd_trans[t];
    }
    transform /= (n - 1) as f64;
    let mut iso = 0.0;
    for t in 0..n {
        if t == key {
            continue;
        }
        let s = source(t);
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            iso += ((x[t][a] - x[t][b]).norm() - (x[s][a] - x[s][b]).norm()).abs();
        }
    }
    iso /= ((n - 1) * edges.len()) as f64;
    (mesh, transform, iso, mesh + transform + 250.0 * iso)
}

#[test]
fn matches_reference_implementation() {
    for (seed, key) in [(11u64, 0usize), (12, 2), (13, 4)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Vec<Vec3>> = (0..5).map(|_| random_cloud(&mut rng, 40, 0.7)).collect();
        let mesh = primitives::uv_sphere(3, 6, 0.5);
        let vertices: Vec<Vec3> = mesh.vertices().iter().map(|v| v + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.05).collect();
        let mut grids = GridSequence::identity(&GridLayout::new(2), 5, key).unwrap();
        fill_random(&mut grids, &mut rng, 0.3);
        let config = ObjectiveConfig {
            max_epochs: 50,
            ..Default::default()
        };
        let obj = Objective::new(sequence(frames.clone()), &mesh, key, config).unwrap();
        let epoch = 7;
        let ev = obj.evaluate(&grids, &vertices, epoch).unwrap();
        let (m, tr, iso, total) = reference_loss(&frames, &vertices, mesh.edges(), &grids, key, epoch, 50);
        assert!((ev.loss.mesh - m).abs() < 1e-12);
        assert!((ev.loss.transform - tr).abs() < 1e-12);
        assert!((ev.loss.isometry - iso).abs() < 1e-12);
        assert!((ev.loss.total - total).abs() < 1e-12);
        assert!((ev.loss.total - (ev.loss.mesh + ev.loss.transform + 250.0 * ev.loss.isometry)).abs() < 1e-15);

        // the frozen objective reproduces the live value at the same point
        let frozen = obj.frozen_loss(&ev.frozen, &grids, &vertices).unwrap();
        assert_eq!(frozen.total, ev.loss.total);
    }
}

#[test]
fn rotation_oracle_for_level_one() {
    // a level-1 grid holds a single global motion
    let z = Vec3::new(0.0, 0.0, (10f64.to_radians() / 2.0).tan());
    let r = crate::grid::cayley_rotation(&z);
    let expected = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::z()), 10f64.to_radians());
    assert!((r - expected.matrix()).abs().max() < 1e-12);
}
