//! Procedural meshes used as stand-ins for CAD models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{face_normal, planar_texcoords, Corner, Mesh, Vec2, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    /// Axis-aligned box with the given edge lengths.
    Cube { size: [f64; 3] },
    /// Ellipsoid tessellated into latitude stacks and longitude slices.
    UvSphere {
        stacks: usize,
        slices: usize,
        radii: [f64; 3],
    },
    Torus {
        major_segments: usize,
        minor_segments: usize,
        major_radius: f64,
        minor_radius: f64,
    },
    /// Prism over a (possibly star-shaped) polygon in the xy plane.
    /// Odd-numbered outline vertices sit at `radius * inner_ratio`.
    ExtrudedPolygon {
        sides: usize,
        radius: f64,
        inner_ratio: f64,
        depth: f64,
    },
}

impl FixtureSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FixtureSpec::Cube { .. } => "cube",
            FixtureSpec::UvSphere { .. } => "uv_sphere",
            FixtureSpec::Torus { .. } => "torus",
            FixtureSpec::ExtrudedPolygon { .. } => "extruded_polygon",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let bad = |msg: &str| Err(Error::invalid("fixture", msg.to_string()));
        match *self {
            FixtureSpec::Cube { size } => {
                if !size.iter().all(|&s| positive(s)) {
                    return bad("cube sizes must be positive");
                }
            }
            FixtureSpec::UvSphere { stacks, slices, radii } => {
                if stacks < 2 {
                    return bad("stacks must be >= 2");
                }
                if slices < 3 {
                    return bad("slices must be >= 3");
                }
                if !radii.iter().all(|&r| positive(r)) {
                    return bad("sphere radii must be positive");
                }
            }
            FixtureSpec::Torus {
                major_segments,
                minor_segments,
                major_radius,
                minor_radius,
            } => {
                if major_segments < 3 || minor_segments < 3 {
                    return bad("torus segment counts must be >= 3");
                }
                if !positive(major_radius) || !positive(minor_radius) || minor_radius >= major_radius
                {
                    return bad("torus needs 0 < minor_radius < major_radius");
                }
            }
            FixtureSpec::ExtrudedPolygon {
                sides,
                radius,
                inner_ratio,
                depth,
            } => {
                if sides < 3 {
                    return bad("polygon needs >= 3 sides");
                }
                if !positive(radius) || !positive(depth) || !(inner_ratio > 0.0 && inner_ratio <= 1.0)
                {
                    return bad("polygon needs radius, depth > 0 and inner_ratio in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

fn corner(position: usize, normal: usize, texcoord: usize) -> Corner {
    Corner {
        position,
        normal,
        texcoord,
    }
}

/// Build the procedural mesh described by `spec`. Deterministic; the
/// category is the fixture kind name.
pub fn make_fixture(spec: &FixtureSpec) -> Result<Mesh> {
    spec.validate()?;
    let mut mesh = match *spec {
        FixtureSpec::Cube { size } => cube(size),
        FixtureSpec::UvSphere { stacks, slices, radii } => uv_sphere(stacks, slices, radii),
        FixtureSpec::Torus {
            major_segments,
            minor_segments,
            major_radius,
            minor_radius,
        } => torus(major_segments, minor_segments, major_radius, minor_radius),
        FixtureSpec::ExtrudedPolygon {
            sides,
            radius,
            inner_ratio,
            depth,
        } => extruded_polygon(sides, radius, inner_ratio, depth),
    };
    mesh.category = spec.kind_name().to_string();
    Ok(mesh)
}

fn cube(size: [f64; 3]) -> Mesh {
    let h = Vec3::new(size[0], size[1], size[2]) * 0.5;
    let mut mesh = Mesh::empty("cube");
    for i in 0..8 {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        mesh.positions.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
    }
    mesh.texcoords = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    // Quads listed counter-clockwise seen from outside.
    let quads: [([usize; 4], Vec3); 6] = [
        ([0, 2, 3, 1], -Vec3::z()),
        ([4, 5, 7, 6], Vec3::z()),
        ([0, 1, 5, 4], -Vec3::y()),
        ([2, 6, 7, 3], Vec3::y()),
        ([0, 4, 6, 2], -Vec3::x()),
        ([1, 3, 7, 5], Vec3::x()),
    ];
    for (face, (q, n)) in quads.iter().enumerate() {
        mesh.normals.push(*n);
        let c = |k: usize| corner(q[k], face, k);
        mesh.triangles.push([c(0), c(1), c(2)]);
        mesh.triangles.push([c(0), c(2), c(3)]);
    }
    mesh
}

fn uv_sphere(stacks: usize, slices: usize, radii: [f64; 3]) -> Mesh {
    let [a, b, c] = radii;
    let mut mesh = Mesh::empty("uv_sphere");
    let point = |theta: f64, phi: f64| {
        Vec3::new(
            a * theta.sin() * phi.cos(),
            b * theta.cos(),
            c * theta.sin() * phi.sin(),
        )
    };
    let normal_at = |p: &Vec3| {
        let n = Vec3::new(p.x / (a * a), p.y / (b * b), p.z / (c * c));
        n.normalize()
    };

    // Poles first, then rings top to bottom.
    mesh.positions.push(Vec3::new(0.0, b, 0.0));
    mesh.positions.push(Vec3::new(0.0, -b, 0.0));
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = 2.0 * PI * j as f64 / slices as f64;
            mesh.positions.push(point(theta, phi));
        }
    }
    mesh.normals = mesh.positions.iter().map(normal_at).collect();
    for i in 0..=stacks {
        for j in 0..=slices {
            mesh.texcoords
                .push(Vec2::new(j as f64 / slices as f64, i as f64 / stacks as f64));
        }
    }

    let ring = |i: usize, j: usize| 2 + (i - 1) * slices + (j % slices);
    let tex = |i: usize, j: usize| i * (slices + 1) + j;
    let pc = |p: usize, t: usize| corner(p, p, t);
    for j in 0..slices {
        // Top cap.
        mesh.triangles
            .push([pc(0, tex(0, j)), pc(ring(1, j + 1), tex(1, j + 1)), pc(ring(1, j), tex(1, j))]);
        // Bottom cap.
        let last = stacks - 1;
        mesh.triangles.push([
            pc(1, tex(stacks, j)),
            pc(ring(last, j), tex(last, j)),
            pc(ring(last, j + 1), tex(last, j + 1)),
        ]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let a0 = pc(ring(i, j), tex(i, j));
            let a1 = pc(ring(i, j + 1), tex(i, j + 1));
            let b0 = pc(ring(i + 1, j), tex(i + 1, j));
            let b1 = pc(ring(i + 1, j + 1), tex(i + 1, j + 1));
            mesh.triangles.push([a0, a1, b1]);
            mesh.triangles.push([a0, b1, b0]);
        }
    }
    mesh
}

fn torus(major_segments: usize, minor_segments: usize, major: f64, minor: f64) -> Mesh {
    let mut mesh = Mesh::empty("torus");
    for i in 0..major_segments {
        let u = 2.0 * PI * i as f64 / major_segments as f64;
        let center = Vec3::new(major * u.cos(), 0.0, major * u.sin());
        for j in 0..minor_segments {
            let v = 2.0 * PI * j as f64 / minor_segments as f64;
            let n = Vec3::new(v.cos() * u.cos(), v.sin(), v.cos() * u.sin());
            mesh.positions.push(center + n * minor);
            mesh.normals.push(n.normalize());
        }
    }
    for i in 0..=major_segments {
        for j in 0..=minor_segments {
            mesh.texcoords.push(Vec2::new(
                i as f64 / major_segments as f64,
                j as f64 / minor_segments as f64,
            ));
        }
    }
    let idx = |i: usize, j: usize| (i % major_segments) * minor_segments + (j % minor_segments);
    let tex = |i: usize, j: usize| i * (minor_segments + 1) + j;
    let pc = |i: usize, j: usize| corner(idx(i, j), idx(i, j), tex(i, j));
    for i in 0..major_segments {
        for j in 0..minor_segments {
            mesh.triangles.push([pc(i, j), pc(i, j + 1), pc(i + 1, j + 1)]);
            mesh.triangles.push([pc(i, j), pc(i + 1, j + 1), pc(i + 1, j)]);
        }
    }
    mesh
}

fn extruded_polygon(sides: usize, radius: f64, inner_ratio: f64, depth: f64) -> Mesh {
    let mut mesh = Mesh::empty("extruded_polygon");
    let half = depth * 0.5;
    let outline: Vec<(f64, f64)> = (0..sides)
        .map(|i| {
            let angle = PI / 2.0 + 2.0 * PI * i as f64 / sides as f64;
            let r = if i % 2 == 1 { radius * inner_ratio } else { radius };
            (r * angle.cos(), r * angle.sin())
        })
        .collect();
    // Front ring [0, n), back ring [n, 2n), then the two cap centers.
    for &z in &[half, -half] {
        for &(x, y) in &outline {
            mesh.positions.push(Vec3::new(x, y, z));
        }
    }
    let front_center = 2 * sides;
    let back_center = 2 * sides + 1;
    mesh.positions.push(Vec3::new(0.0, 0.0, half));
    mesh.positions.push(Vec3::new(0.0, 0.0, -half));
    mesh.texcoords = planar_texcoords(&mesh.positions);

    mesh.normals.push(Vec3::z());
    mesh.normals.push(-Vec3::z());
    let pc = |p: usize, n: usize| corner(p, n, p);
    for i in 0..sides {
        let j = (i + 1) % sides;
        mesh.triangles.push([pc(front_center, 0), pc(i, 0), pc(j, 0)]);
        mesh.triangles
            .push([pc(back_center, 1), pc(sides + j, 1), pc(sides + i, 1)]);
    }
    for i in 0..sides {
        let j = (i + 1) % sides;
        let (a, b, c, d) = (i, j, sides + j, sides + i);
        let n = face_normal(&mesh.positions[a], &mesh.positions[d], &mesh.positions[b]);
        mesh.normals.push(n);
        let ni = mesh.normals.len() - 1;
        mesh.triangles.push([pc(a, ni), pc(d, ni), pc(c, ni)]);
        mesh.triangles.push([pc(a, ni), pc(c, ni), pc(b, ni)]);
    }
    mesh
}
