//! Mesh and point-cloud files: PLY, OBJ and whitespace-separated XYZ.

pub mod obj;
pub mod ply;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::geometry::{PointCloud, TriMesh, Vec3};
use crate::{Error, Result};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Fan-triangulates polygons.
fn triangulate(faces: Vec<Vec<u32>>) -> Vec<[u32; 3]> {
    let mut tris = Vec::with_capacity(faces.len());
    for f in faces {
        for k in 1..f.len() - 1 {
            tris.push([f[0], f[k], f[k + 1]]);
        }
    }
    tris
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, faces) = match extension(path).as_str() {
        "ply" => {
            let d = ply::parse(&bytes).map_err(|m| Error::parse(path, m))?;
            (d.vertices, d.faces)
        }
        "obj" => {
            let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, "not utf-8"))?;
            obj::parse(&text).map_err(|m| Error::parse(path, m))?
        }
        other => {
            return Err(Error::invalid(format!(
                "unsupported mesh extension '{other}' for {}",
                path.display()
            )))
        }
    };
    if faces.iter().any(|f| f.len() < 3) {
        return Err(Error::parse(path, "face with fewer than 3 vertices"));
    }
    if faces.is_empty() {
        return Err(Error::parse(path, "mesh has no faces"));
    }
    TriMesh::new(vertices, triangulate(faces))
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let points = match extension(path).as_str() {
        "ply" => ply::parse(&bytes).map_err(|m| Error::parse(path, m))?.vertices,
        "xyz" | "txt" => {
            let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, "not utf-8"))?;
            parse_xyz(&text).map_err(|m| Error::parse(path, m))?
        }
        other => {
            return Err(Error::invalid(format!(
                "unsupported point-cloud extension '{other}' for {}",
                path.display()
            )))
        }
    };
    PointCloud::new(points).map_err(|_| Error::parse(path, "point cloud is empty"))
}

/// One point per line, the first three numbers are x y z; `#` starts a comment.
pub fn parse_xyz(text: &str) -> std::result::Result<Vec<Vec3>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let c: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .take(3)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("line {}: bad number", i + 1))?;
        if c.len() < 3 {
            return Err(format!("line {}: expected 3 coordinates", i + 1));
        }
        out.push(Vec3::new(c[0], c[1], c[2]));
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    obj::write(&mut w, mesh.vertices(), mesh.triangles())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_ply_points(path: impl AsRef<Path>, points: &[Vec3]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    ply::write(&mut w, points, &[])
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_xyz(path: impl AsRef<Path>, points: &[Vec3]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: std::io::Result<()> = points
        .iter()
        .try_for_each(|p| writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z));
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
