//! Procedural meshes used by the synthetic scenes, tests and examples.

use std::collections::HashMap;

use super::{TriMesh, Vec3};

/// Unit icosphere: the icosahedron subdivided `subdivisions` times
/// (12, 42, 162, 642, ... vertices), outward-oriented.
pub fn icosphere(subdivisions: u32) -> TriMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from(*v).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    TriMesh::new(vertices, triangles).expect("icosphere topology is valid")
}

/// Latitude/longitude sphere with `rings` interior latitude rings of
/// `segments` vertices each, plus two poles.
pub fn uv_sphere(rings: u32, segments: u32, radius: f64) -> TriMesh {
    assert!(rings >= 1 && segments >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for r in 1..=rings {
        let theta = std::f64::consts::PI * r as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(
                Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * radius,
            );
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |r: u32, s: u32| 1 + (r - 1) * segments + (s % segments);

    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for s in 0..segments {
        triangles.push([south, ring(rings, s + 1), ring(rings, s)]);
    }
    TriMesh::new(vertices, triangles).expect("uv sphere topology is valid")
}

/// Closed surface of the box `[min, max]` tessellated into a
/// `cells[0] x cells[1] x cells[2]` lattice, outward-oriented.
pub fn box_surface(min: Vec3, max: Vec3, cells: [u32; 3]) -> TriMesh {
    assert!(cells.iter().all(|&c| c >= 1));
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |ijk: [u32; 3], vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(ijk).or_insert_with(|| {
            let p = Vec3::from_fn(|a, _| {
                min[a] + (max[a] - min[a]) * ijk[a] as f64 / cells[a] as f64
            });
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };

    let mut triangles = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, cells[axis]] {
            for i in 0..cells[u] {
                for j in 0..cells[v] {
                    let at = |di: u32, dj: u32| {
                        let mut c = [0u32; 3];
                        c[axis] = side;
                        c[u] = i + di;
                        c[v] = j + dj;
                        c
                    };
                    let q = [at(0, 0), at(1, 0), at(1, 1), at(0, 1)]
                        .map(|c| vertex(c, &mut vertices));
                    // e_u x e_v = e_axis, so (q0, q1, q2) faces +axis
                    if side == 0 {
                        triangles.push([q[0], q[2], q[1]]);
                        triangles.push([q[0], q[3], q[2]]);
                    } else {
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, triangles).expect("box topology is valid")
}

/// Flat `[0, width] x [0, height]` plate in the z = 0 plane.
pub fn plate(width: f64, height: f64, cells: [u32; 2]) -> TriMesh {
    let (nx, ny) = (cells[0], cells[1]);
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
                0.0,
            ));
        }
    }
    let id = |i: u32, j: u32| j * (nx + 1) + i;
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, triangles).expect("plate topology is valid")
}
