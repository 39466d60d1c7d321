use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Aabb, PointCloud, Vec3};
use crate::{Error, Result};

/// Triangle mesh with a derived, deduplicated edge set.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    edges: Vec<(u32, u32)>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        for (i, tri) in triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(format!(
                    "triangle {i} repeats a vertex index: {tri:?}"
                )));
            }
        }
        let edges = extract_edges(&triangles, vertices.len())?;
        Ok(Self {
            vertices,
            triangles,
            edges,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Unordered edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Same topology, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::invalid(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            triangles: self.triangles.clone(),
            edges: self.edges.clone(),
        })
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    fn corners(&self, tri: &[u32; 3]) -> [Vec3; 3] {
        tri.map(|i| self.vertices[i as usize])
    }

    /// Area of every triangle.
    pub fn triangle_areas(&self) -> Vec<f64> {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }
}

/// Unique undirected edges of a triangle list, as sorted `(min, max)` pairs.
pub fn extract_edges(triangles: &[[u32; 3]], vertex_count: usize) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::with_capacity(triangles.len() * 3);
    for (i, tri) in triangles.iter().enumerate() {
        if let Some(&bad) = tri.iter().find(|&&v| v as usize >= vertex_count) {
            return Err(Error::invalid(format!(
                "triangle {i} references vertex {bad}, mesh has {vertex_count}"
            )));
        }
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Draws `n` points uniformly by area, each paired with the unit normal of
/// the triangle it was drawn from.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<(PointCloud, Vec<Vec3>)> {
    let areas = mesh.triangle_areas();
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut total = 0.0;
    for a in &areas {
        total += a;
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateGeometry(
            "mesh has zero surface area".into(),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }

    let normals: Vec<Vec3> = mesh
        .triangles()
        .iter()
        .zip(&areas)
        .map(|(t, &area)| {
            if area > 0.0 {
                let [a, b, c] = mesh.corners(t);
                (b - a).cross(&(c - a)).normalize()
            } else {
                Vec3::zeros()
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut point_normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        // first triangle whose cumulative area exceeds r; zero-area triangles
        // never satisfy this strictly
        let tri = cumulative
            .partition_point(|&c| c <= r)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.corners(&mesh.triangles()[tri]);
        let s = rng.random::<f64>().sqrt();
        let v = rng.random::<f64>();
        points.push(a * (1.0 - s) + b * (s * (1.0 - v)) + c * (s * v));
        point_normals.push(normals[tri]);
    }
    Ok((PointCloud::new(points)?, point_normals))
}
