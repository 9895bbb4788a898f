//! Wavefront OBJ subset: `v`, `vn`, `vt`, `f` records.

use std::fmt::Write as _;

use super::{face_normal, planar_texcoords, Corner, Mesh, Vec2, Vec3};
use crate::error::{Error, Result};

struct RawCorner {
    position: usize,
    texcoord: Option<usize>,
    normal: Option<usize>,
}

fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_floats<const N: usize>(fields: &[&str], line: usize, record: &str) -> Result<[f64; N]> {
    if fields.len() < N {
        return Err(parse_error(
            line,
            format!("`{record}` needs {N} components, found {}", fields.len()),
        ));
    }
    let mut out = [0.0; N];
    for (slot, field) in out.iter_mut().zip(fields) {
        let v: f64 = field
            .parse()
            .map_err(|_| parse_error(line, format!("bad number `{field}`")))?;
        if !v.is_finite() {
            return Err(parse_error(line, format!("non-finite number `{field}`")));
        }
        *slot = v;
    }
    Ok(out)
}

/// Resolve a 1-based or negative (relative) OBJ index against `count`
/// elements defined so far.
fn resolve_index(field: &str, count: usize, line: usize, what: &str) -> Result<usize> {
    let raw: i64 = field
        .parse()
        .map_err(|_| parse_error(line, format!("bad {what} index `{field}`")))?;
    let resolved = match raw {
        0 => None,
        r if r > 0 => Some(r as usize - 1),
        r => (count as i64 + r).try_into().ok(),
    };
    match resolved {
        Some(i) if i < count => Ok(i),
        _ => Err(parse_error(
            line,
            format!("{what} index {raw} out of range ({count} defined)"),
        )),
    }
}

/// Parse OBJ text into a mesh of the given category.
///
/// Polygons are fan-triangulated from their first corner. Corners without a
/// normal get the flat normal of their face; corners without a texcoord get a
/// planar projection of their position.
pub fn parse_obj(text: &str, category: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut texcoords = Vec::new();
    let mut faces: Vec<(usize, Vec<RawCorner>)> = Vec::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&rest, line_no, "v")?;
                positions.push(Vec3::new(x, y, z));
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(&rest, line_no, "vn")?;
                let n = Vec3::new(x, y, z);
                let len = n.norm();
                if !(len > 0.0) {
                    return Err(parse_error(line_no, "zero-length normal"));
                }
                // Leave already-unit normals bit-exact so serialization round-trips.
                normals.push(if (len - 1.0).abs() > 1e-12 { n / len } else { n });
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(&rest, line_no, "vt")?;
                texcoords.push(Vec2::new(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_error(line_no, "face needs at least 3 corners"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for field in &rest {
                    let mut parts = field.split('/');
                    let p = parts.next().unwrap_or("");
                    let t = parts.next().filter(|s| !s.is_empty());
                    let n = parts.next().filter(|s| !s.is_empty());
                    corners.push(RawCorner {
                        position: resolve_index(p, positions.len(), line_no, "vertex")?,
                        texcoord: t
                            .map(|t| resolve_index(t, texcoords.len(), line_no, "texcoord"))
                            .transpose()?,
                        normal: n
                            .map(|n| resolve_index(n, normals.len(), line_no, "normal"))
                            .transpose()?,
                    });
                }
                faces.push((line_no, corners));
            }
            "mtllib" | "usemtl" | "g" | "o" | "s" => {
                log::warn!("line {line_no}: ignoring `{tag}` record");
            }
            other => {
                log::warn!("line {line_no}: ignoring unsupported record `{other}`");
            }
        }
    }

    if positions.is_empty() || faces.is_empty() {
        return Err(Error::EmptyMesh);
    }

    let needs_planar = faces
        .iter()
        .any(|(_, cs)| cs.iter().any(|c| c.texcoord.is_none()));
    let planar_base = texcoords.len();
    if needs_planar {
        texcoords.extend(planar_texcoords(&positions));
    }

    let mut triangles = Vec::new();
    for (_, corners) in &faces {
        let flat_index = if corners.iter().any(|c| c.normal.is_none()) {
            let n = face_normal(
                &positions[corners[0].position],
                &positions[corners[1].position],
                &positions[corners[2].position],
            );
            normals.push(n);
            Some(normals.len() - 1)
        } else {
            None
        };
        let resolve = |c: &RawCorner| Corner {
            position: c.position,
            normal: c.normal.or(flat_index).expect("flat normal assigned"),
            texcoord: c.texcoord.unwrap_or(planar_base + c.position),
        };
        for k in 1..corners.len() - 1 {
            triangles.push([
                resolve(&corners[0]),
                resolve(&corners[k]),
                resolve(&corners[k + 1]),
            ]);
        }
    }

    Ok(Mesh {
        positions,
        normals,
        texcoords,
        triangles,
        category: category.to_string(),
    })
}

/// Serialize to the same OBJ subset `parse_obj` reads. Every corner is
/// written fully indexed (`p/t/n`), so the round trip is exact.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# category {}", mesh.category);
    for p in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in &mesh.texcoords {
        let _ = writeln!(out, "vt {} {}", t.x, t.y);
    }
    for n in &mesh.normals {
        let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
    }
    for tri in &mesh.triangles {
        out.push('f');
        for c in tri {
            let _ = write!(out, " {}/{}/{}", c.position + 1, c.texcoord + 1, c.normal + 1);
        }
        out.push('\n');
    }
    out
}
