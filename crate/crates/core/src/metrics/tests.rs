use super::*;
use crate::geometry::primitives;
use crate::spatial::brute_force_nearest;
use proptest::prelude::*;

fn small(samples: usize, seed: u64) -> MetricsConfig {
    MetricsConfig {
        samples,
        seed,
        ..Default::default()
    }
}

// straight loops over all pairs
fn brute(pred: &SurfaceSamples, gt: &SurfaceSamples, config: &MetricsConfig) -> FrameMetrics {
    let r = [config.f_thresholds[0] * 3f64.sqrt(), config.f_thresholds[1] * 3f64.sqrt()];
    let side = |a: &SurfaceSamples, b: &SurfaceSamples| {
        let mut d2s = 0.0;
        let mut cos = 0.0;
        let mut within = [0.0; 2];
        for (p, n) in a.points.iter().zip(&a.normals) {
            let (j, d2) = brute_force_nearest(&b.points, p);
            d2s += d2;
            cos += n.dot(&b.normals[j]).abs();
            for k in 0..2 {
                if d2.sqrt() < r[k] {
                    within[k] += 1.0;
                }
            }
        }
        let m = a.points.len() as f64;
        (d2s / m, cos / m, [within[0] / m, within[1] / m])
    };
    let (d_ab, c_ab, w_ab) = side(pred, gt);
    let (d_ba, c_ba, w_ba) = side(gt, pred);
    let f = |p: f64, q: f64| if p + q > 0.0 { 2.0 * p * q / (p + q) } else { 0.0 };
    FrameMetrics {
        cd: d_ab + d_ba,
        cd_e5: (d_ab + d_ba) * 1e5,
        nc: 0.5 * (c_ab + c_ba),
        f_half: f(w_ab[0], w_ba[0]),
        f_one: f(w_ab[1], w_ba[1]),
        corr: None,
    }
}

fn unit_samples(mesh: &TriMesh, gt: &TriMesh, config: &MetricsConfig) -> SurfaceSamples {
    let unit = UnitBox::fit(&gt.bounding_box()).unwrap();
    SurfaceSamples::from_mesh(&mesh.map_vertices(|v| unit.apply(v)), config.samples, config.seed).unwrap()
}

fn close(a: &FrameMetrics, b: &FrameMetrics, tol: f64) {
    assert!((a.cd - b.cd).abs() <= tol, "cd {} vs {}", a.cd, b.cd);
    assert!((a.nc - b.nc).abs() <= tol, "nc {} vs {}", a.nc, b.nc);
    assert!((a.f_half - b.f_half).abs() <= tol);
    assert!((a.f_one - b.f_one).abs() <= tol);
}

#[test]
fn identical_meshes_score_perfectly() {
    let mesh = primitives::icosphere(2);
    let m = evaluate_frame(&mesh, &mesh, &small(2000, 4)).unwrap();
    assert_eq!(m.cd, 0.0);
    assert_eq!(m.cd_e5, 0.0);
    assert!((m.nc - 1.0).abs() < 1e-12);
    assert_eq!((m.f_half, m.f_one), (1.0, 1.0));
}

#[test]
fn offset_plate_misses_both_thresholds() {
    // the plate spans [0,1]^2 so the unit box leaves it unscaled; both
    // meshes are sampled with one seed, so every sample of one sits exactly
    // `offset` above or below a sample of the other
    let gt = primitives::plate(1.0, 1.0, [4, 4]);
    let config = small(5000, 1);
    let lifted = |dz: f64| gt.map_vertices(|v| v + Vec3::new(0.0, 0.0, dz));

    // 0.02 exceeds both 0.005 sqrt3 and 0.01 sqrt3
    let m = evaluate_frame(&lifted(0.02), &gt, &config).unwrap();
    assert_eq!((m.f_half, m.f_one), (0.0, 0.0));
    assert!((m.nc - 1.0).abs() < 1e-12);
    assert!((m.cd - 2.0 * 0.02f64.powi(2)).abs() < 1e-15, "{}", m.cd);

    // 0.012 lies between the two diagonal thresholds
    let m = evaluate_frame(&lifted(0.012), &gt, &config).unwrap();
    assert_eq!((m.f_half, m.f_one), (0.0, 1.0));
    // and above the 1% edge threshold
    let edge = MetricsConfig {
        threshold_base: ThresholdBase::Edge,
        ..config
    };
    assert_eq!(evaluate_frame(&lifted(0.012), &gt, &edge).unwrap().f_one, 0.0);
}

#[test]
fn harness_matches_brute_force() {
    for seed in 0..4 {
        let gt = primitives::icosphere(1);
        let pred = gt.map_vertices(|v| Vec3::new(v.x * 1.05, v.y + 0.01 * (seed as f64), v.z * (0.97 + 0.01 * seed as f64)));
        let config = small(1000, seed);
        let a = unit_samples(&pred, &gt, &config);
        let b = unit_samples(&gt, &gt, &config);
        let got = metrics_from_samples(&a, &b, &config).unwrap();
        close(&got, &brute(&a, &b, &config), 1e-12);
        close(&evaluate_frame(&pred, &gt, &config).unwrap(), &got, 0.0);
    }
}

#[test]
fn degenerate_meshes_are_rejected() {
    let flat = TriMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 2]]).unwrap();
    let ok = primitives::icosphere(1);
    assert!(matches!(evaluate_frame(&ok, &flat, &small(10, 0)), Err(Error::DegenerateGeometry(_))));
    assert!(matches!(evaluate_frame(&flat, &ok, &small(10, 0)), Err(Error::DegenerateGeometry(_))));
}

#[test]
fn seeds_agree_on_large_samples() {
    let gt = primitives::icosphere(2);
    let pred = gt.map_vertices(|v| v * 1.02 + Vec3::new(0.01, 0.0, 0.0));
    let a = evaluate_frame(&pred, &gt, &small(100_000, 1)).unwrap();
    let b = evaluate_frame(&pred, &gt, &small(100_000, 2)).unwrap();
    assert!((a.cd - b.cd).abs() < 0.05 * a.cd, "{} vs {}", a.cd, b.cd);
}

#[test]
fn correspondence_cases() {
    let gt = vec![primitives::icosphere(1).vertices().to_vec(); 3];
    assert_eq!(correspondence_error(&gt, &gt).unwrap(), 0.0);
    let d = Vec3::new(0.003, -0.004, 0.0);
    let shifted: Vec<Vec<Vec3>> = gt.iter().map(|f| f.iter().map(|p| p + d).collect()).collect();
    assert!((correspondence_error(&shifted, &gt).unwrap() - 0.005).abs() < 1e-15);
    // direct mean on an irregular case
    let pred = vec![vec![Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()], vec![Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 3.0)]];
    let truth = vec![vec![Vec3::zeros(); 2]; 2];
    assert_eq!(correspondence_error(&pred, &truth).unwrap(), (1.0 + 0.0 + 2.0 + 3.0) / 4.0);
    assert!(matches!(correspondence_error(&pred, &truth[..1]), Err(Error::InvalidInput(_))));
    assert!(matches!(correspondence_error(&pred, &[vec![Vec3::zeros()], vec![Vec3::zeros()]]), Err(Error::InvalidInput(_))));
}

#[test]
fn report_means_and_csv() {
    let f = |cd: f64, corr| FrameMetrics {
        cd,
        cd_e5: cd * 1e5,
        nc: 0.9,
        f_half: 0.5,
        f_one: 0.75,
        corr,
    };
    let r = SequenceReport::new(vec![f(2e-5, Some(0.1)), f(4e-5, Some(0.3))]).unwrap();
    assert!((r.mean.cd - 3e-5).abs() < 1e-20);
    assert!((r.mean.corr.unwrap() - 0.2).abs() < 1e-15);
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "frame,CD,NC,F-0.5%,F-1%,Corr");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,3"));
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<SequenceReport>(&json).unwrap(), r);
    let partial = SequenceReport::new(vec![f(1e-5, None), f(1e-5, Some(1.0))]).unwrap();
    assert_eq!(partial.mean.corr, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metric_invariants(sx in 0.8f64..1.2, dz in -0.05f64..0.05, seed in 0u64..1000) {
        let gt = primitives::icosphere(1);
        let pred = gt.map_vertices(|v| Vec3::new(v.x * sx, v.y, v.z + dz));
        let config = small(400, seed);
        let a = unit_samples(&pred, &gt, &config);
        let b = unit_samples(&gt, &gt, &config);
        let ab = metrics_from_samples(&a, &b, &config).unwrap();
        let ba = metrics_from_samples(&b, &a, &config).unwrap();
        prop_assert_eq!(ab.cd, ba.cd);
        prop_assert!((ab.nc - ba.nc).abs() < 1e-15);
        prop_assert_eq!((ab.f_half, ab.f_one), (ba.f_half, ba.f_one));
        prop_assert!(ab.cd >= 0.0);
        prop_assert!(ab.nc >= 0.0 && ab.nc <= 1.0 + 1e-12);
        prop_assert!(ab.f_half <= ab.f_one);
        prop_assert!(ab.f_one <= 1.0);
    }
}
