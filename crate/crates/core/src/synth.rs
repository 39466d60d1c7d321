//! Analytic deforming scenes with known material-point trajectories.

use nalgebra::{Rotation3, Unit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{primitives, sample_surface, PointCloud, PointCloudSequence, TriMesh, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Lumpy sphere under a constant per-frame rotation and translation.
    RigidSphere,
    /// Square bar bent along its axis with a growing, uniform curvature.
    BendingBar,
    /// Cube stretched along x by a constant factor per frame.
    ScalingCube,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub kind: SceneKind,
    pub frames: usize,
    pub points: usize,
    pub seed: u64,
    /// rigid-sphere rotation per frame
    pub degrees_per_frame: f64,
    /// rigid-sphere translation per frame
    pub step_per_frame: f64,
    /// bending-bar bend at the last frame
    pub max_bend_degrees: f64,
    /// scaling-cube stretch per frame
    pub scale_per_frame: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            kind: SceneKind::RigidSphere,
            frames: 8,
            points: 2000,
            seed: 0,
            degrees_per_frame: 5.0,
            step_per_frame: 0.02,
            max_bend_degrees: 45.0,
            scale_per_frame: 1.1,
        }
    }
}

impl SceneParams {
    pub fn new(kind: SceneKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }
}

/// Ground-truth meshes share topology, so vertex `i` of every frame is the
/// same material point and the vertex arrays double as tracks.
#[derive(Clone, Debug)]
pub struct Scene {
    pub params: SceneParams,
    pub meshes: Vec<TriMesh>,
    pub clouds: Vec<PointCloud>,
}

impl Scene {
    pub fn tracks(&self) -> Vec<Vec<Vec3>> {
        self.meshes.iter().map(|m| m.vertices().to_vec()).collect()
    }

    pub fn sequence(&self) -> Result<PointCloudSequence> {
        PointCloudSequence::new(self.clouds.clone())
    }
}

/// The rest shape: a 642-vertex icosphere with smooth, asymmetric bumps so
/// that no rotation maps it onto itself.
pub fn lumpy_sphere() -> TriMesh {
    primitives::icosphere(3).map_vertices(|v| {
        let n = v.normalize();
        let r = 1.0 + 0.12 * (3.0 * n.x + 0.4).sin() * (2.0 * n.y).cos() + 0.08 * n.z * n.z + 0.05 * n.x * n.y;
        n * (0.5 * r)
    })
}

pub fn bar() -> TriMesh {
    primitives::box_surface(Vec3::new(-1.0, -0.15, -0.15), Vec3::new(1.0, 0.15, 0.15), [24, 4, 4])
}

pub fn cube() -> TriMesh {
    primitives::box_surface(Vec3::repeat(-0.5), Vec3::repeat(0.5), [6, 6, 6])
}

fn rigid_axis() -> Unit<Vec3> {
    Unit::new_normalize(Vec3::new(0.3, 1.0, 0.5))
}

/// Position of a rest point in frame `t`.
pub fn deform(params: &SceneParams, t: usize, p: &Vec3) -> Vec3 {
    let tf = t as f64;
    match params.kind {
        SceneKind::RigidSphere => {
            let rot = Rotation3::from_axis_angle(&rigid_axis(), (params.degrees_per_frame * tf).to_radians());
            rot * p + Vec3::new(params.step_per_frame * tf, 0.0, 0.0)
        }
        SceneKind::BendingBar => {
            // curvature grows linearly so the last frame bends by the maximum
            let last = params.frames.saturating_sub(1).max(1) as f64;
            let total = params.max_bend_degrees.to_radians() * tf / last;
            // the bar spans x in [-1, 1]: curvature = angle / length
            let kappa = total / 2.0;
            if kappa == 0.0 {
                return *p;
            }
            let phi = kappa * p.x;
            let (s, c) = phi.sin_cos();
            let r = 1.0 / kappa - p.y;
            Vec3::new(r * s, 1.0 / kappa - r * c, p.z)
        }
        SceneKind::ScalingCube => Vec3::new(p.x * params.scale_per_frame.powi(t as i32), p.y, p.z),
    }
}

pub fn rest_mesh(kind: SceneKind) -> TriMesh {
    match kind {
        SceneKind::RigidSphere => lumpy_sphere(),
        SceneKind::BendingBar => bar(),
        SceneKind::ScalingCube => cube(),
    }
}

pub fn generate(params: &SceneParams) -> Result<Scene> {
    if params.frames < 2 || params.points == 0 {
        return Err(Error::invalid(format!(
            "a scene needs at least 2 frames and 1 point, got {} and {}",
            params.frames, params.points
        )));
    }
    let rest = rest_mesh(params.kind);
    let mut meshes = Vec::with_capacity(params.frames);
    let mut clouds = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        let mesh = rest.map_vertices(|p| deform(params, t, p));
        let (cloud, _) = sample_surface(&mesh, params.points, params.seed.wrapping_add(t as u64))?;
        meshes.push(mesh);
        clouds.push(cloud);
    }
    Ok(Scene {
        params: *params,
        meshes,
        clouds,
    })
}

/// Adds isotropic Gaussian noise with standard deviation `percent`% of the
/// cloud's bounding-box diagonal.
pub fn add_noise(cloud: &PointCloud, percent: f64, seed: u64) -> Result<PointCloud> {
    if !(percent >= 0.0 && percent.is_finite()) {
        return Err(Error::invalid(format!("noise percentage must be non-negative, got {percent}")));
    }
    if percent == 0.0 {
        return Ok(cloud.clone());
    }
    let sigma = percent / 100.0 * cloud.bounding_box().diagonal();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        cloud
            .points()
            .iter()
            .map(|p| p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::edge_lengths;

    fn lengths(m: &TriMesh) -> Vec<f64> {
        edge_lengths(m.vertices(), m.edges())
    }

    #[test]
    fn rigid_sphere_keeps_edge_lengths() {
        let scene = generate(&SceneParams::new(SceneKind::RigidSphere)).unwrap();
        assert_eq!(scene.meshes[0].vertices().len(), 642);
        assert_eq!(scene.clouds.len(), 8);
        assert_eq!(scene.clouds[3].len(), 2000);
        let rest = lengths(&scene.meshes[0]);
        for m in &scene.meshes[1..] {
            for (a, b) in lengths(m).iter().zip(&rest) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // the motion between consecutive frames is the same rigid step
        let step = Rotation3::from_axis_angle(&rigid_axis(), 5f64.to_radians());
        let (a, b) = (scene.meshes[2].vertices(), scene.meshes[3].vertices());
        let c2 = Vec3::new(0.04, 0.0, 0.0);
        for (p, q) in a.iter().zip(b) {
            let expected = step * (p - c2) + c2 + Vec3::new(0.02, 0.0, 0.0);
            assert!((q - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn bending_bar_bends_by_the_maximum() {
        let scene = generate(&SceneParams::new(SceneKind::BendingBar)).unwrap();
        let first = scene.meshes[0].vertices();
        let last = scene.meshes[7].vertices();
        assert_eq!(first, bar().vertices());
        // the centerline tangent at the ends differs by 45 degrees
        let tangent = |x: f64| {
            let p = |x| deform(&scene.params, 7, &Vec3::new(x, 0.0, 0.0));
            (p(x + 1e-6) - p(x - 1e-6)).normalize()
        };
        let angle = tangent(-1.0).dot(&tangent(1.0)).acos().to_degrees();
        assert!((angle - 45.0).abs() < 1e-6, "{angle}");
        // the centerline keeps its length
        let p = |x: f64| deform(&scene.params, 7, &Vec3::new(x, 0.0, 0.0));
        let arc: f64 = (0..2000).map(|i| (p(-1.0 + (i + 1) as f64 * 1e-3) - p(-1.0 + i as f64 * 1e-3)).norm()).sum();
        assert!((arc - 2.0).abs() < 1e-6);
        assert_ne!(first, last);
    }

    #[test]
    fn scaling_cube_isometry_closed_form() {
        use crate::objective::{Objective, ObjectiveConfig};
        let params = SceneParams {
            frames: 3,
            points: 50,
            ..SceneParams::new(SceneKind::ScalingCube)
        };
        let scene = generate(&params).unwrap();
        let rest = scene.meshes[0].clone();
        // per edge and consecutive pair |S_t e| - |S_{t-1} e|, S_t = diag(1.1^t, 1, 1)
        let len = |e: &Vec3, t: i32| Vec3::new(1.1f64.powi(t) * e.x, e.y, e.z).norm();
        let mut expected = 0.0;
        for t in 1..3 {
            for &(i, j) in rest.edges() {
                let e = rest.vertices()[j as usize] - rest.vertices()[i as usize];
                expected += (len(&e, t) - len(&e, t - 1)).abs();
            }
        }
        expected /= (2 * rest.edges().len()) as f64;
        assert!(expected > 0.0);
        // the objective's isometry term on the ground-truth tracks: keyframe
        // 0, and the tracked positions come from the true meshes
        let seq = PointCloudSequence::new(scene.clouds.clone()).unwrap();
        let obj = Objective::new(seq, &rest, 0, ObjectiveConfig::default()).unwrap();
        let iso = obj.isometry_of_tracks(&scene.tracks()).unwrap();
        assert!((iso - expected).abs() < 1e-12 * expected, "{iso} vs {expected}");
    }

    #[test]
    fn same_seed_same_scene() {
        for kind in [SceneKind::RigidSphere, SceneKind::BendingBar, SceneKind::ScalingCube] {
            let p = SceneParams {
                points: 300,
                ..SceneParams::new(kind)
            };
            let a = generate(&p).unwrap();
            let b = generate(&p).unwrap();
            assert_eq!(a.clouds, b.clouds);
            assert_eq!(a.tracks(), b.tracks());
            let c = generate(&SceneParams { seed: 1, ..p }).unwrap();
            assert_ne!(a.clouds, c.clouds);
        }
    }

    #[test]
    fn noise_scales_with_the_diagonal() {
        let cloud = generate(&SceneParams::default()).unwrap().clouds[0].clone();
        assert_eq!(add_noise(&cloud, 0.0, 3).unwrap(), cloud);
        let noisy = add_noise(&cloud, 1.0, 3).unwrap();
        let diag = cloud.bounding_box().diagonal();
        let n = cloud.len() as f64;
        let var: f64 = noisy.points().iter().zip(cloud.points()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / (3.0 * n);
        let sigma = var.sqrt();
        assert!((sigma / (0.01 * diag) - 1.0).abs() < 0.05, "{sigma}");
        assert!(add_noise(&cloud, -1.0, 0).is_err());
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        assert!(generate(&SceneParams { frames: 1, ..Default::default() }).is_err());
        assert!(generate(&SceneParams { points: 0, ..Default::default() }).is_err());
    }
}
