use std::io::Write;

use crate::geometry::Vec3;

/// Parses `v` and `f` records; other records are ignored. Face indices are
/// 1-based and may carry `/vt/vn` suffixes; negative indices are relative.
pub fn parse(text: &str) -> Result<(Vec<Vec3>, Vec<Vec<u32>>), String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    let t = tok
                        .next()
                        .ok_or(format!("line {}: vertex needs 3 coordinates", lineno + 1))?;
                    *slot = t
                        .parse()
                        .map_err(|_| format!("line {}: bad coordinate '{t}'", lineno + 1))?;
                }
                vertices.push(Vec3::from(c));
            }
            Some("f") => {
                let mut face = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let raw: i64 = head
                        .parse()
                        .map_err(|_| format!("line {}: bad face index '{t}'", lineno + 1))?;
                    let idx = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(format!("line {}: face index 0 is invalid", lineno + 1));
                    };
                    if idx < 0 {
                        return Err(format!("line {}: face index {raw} out of range", lineno + 1));
                    }
                    face.push(idx as u32);
                }
                if face.len() < 3 {
                    return Err(format!("line {}: face needs at least 3 vertices", lineno + 1));
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Writes vertices with full round-trip precision followed by one `f` block.
pub fn write<W: Write>(mut w: W, vertices: &[Vec3], triangles: &[[u32; 3]]) -> std::io::Result<()> {
    for v in vertices {
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_slashes_and_negative_indices() {
        let src = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 3 -1\n";
        let (v, f) = parse(src).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(f, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn rejects_zero_index() {
        assert!(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
    }

    #[test]
    fn write_then_parse() {
        let v = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 1e-300, 2.5), Vec3::x()];
        let mut buf = Vec::new();
        write(&mut buf, &v, &[[0, 2, 1]]).unwrap();
        let (v2, f) = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(v2, v);
        assert_eq!(f, vec![vec![0, 2, 1]]);
    }
}
