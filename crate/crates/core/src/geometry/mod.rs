//! Triangle meshes: OBJ ingestion, procedural fixtures, and normalization.

mod fixtures;
mod obj;

pub use fixtures::{make_fixture, FixtureSpec};
pub use obj::{parse_obj, write_obj};

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// One triangle corner: indices into the position, normal, and texcoord lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Corner {
    pub position: usize,
    pub normal: usize,
    pub texcoord: usize,
}

pub type Triangle = [Corner; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub texcoords: Vec<Vec2>,
    pub triangles: Vec<Triangle>,
    pub category: String,
}

impl Mesh {
    pub fn empty(category: impl Into<String>) -> Self {
        Self {
            positions: Vec::new(),
            normals: Vec::new(),
            texcoords: Vec::new(),
            triangles: Vec::new(),
            category: category.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty() || self.positions.is_empty()
    }

    /// Axis-aligned bounds `(min, max)` of the vertex positions.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Check the structural invariants: in-bounds indices, unit normals,
    /// texcoords inside the unit square.
    pub fn validate(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            for c in tri {
                if c.position >= self.positions.len()
                    || c.normal >= self.normals.len()
                    || c.texcoord >= self.texcoords.len()
                {
                    return Err(Error::invalid(
                        "mesh",
                        format!("triangle {t} references an index out of bounds"),
                    ));
                }
            }
        }
        if let Some(i) = self
            .normals
            .iter()
            .position(|n| (n.norm() - 1.0).abs() > 1e-6)
        {
            return Err(Error::invalid("mesh", format!("normal {i} is not unit length")));
        }
        if let Some(i) = self
            .texcoords
            .iter()
            .position(|t| !(0.0..=1.0).contains(&t.x) || !(0.0..=1.0).contains(&t.y))
        {
            return Err(Error::invalid("mesh", format!("texcoord {i} outside [0,1]^2")));
        }
        Ok(())
    }
}

/// Translate and uniformly scale so the bounding-box center is the origin
/// and the largest extent is 1. Normals are left untouched.
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let extent = (hi - lo).max();
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::DegenerateMesh);
    }
    let center = (lo + hi) * 0.5;
    let scale = 1.0 / extent;
    let mut out = mesh.clone();
    for p in &mut out.positions {
        *p = (*p - center) * scale;
    }
    Ok(out)
}

/// Flat normal of a triangle, or +z for a degenerate one.
pub(crate) fn face_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 && len.is_finite() {
        n / len
    } else {
        Vec3::z()
    }
}

/// Planar projection of positions onto the plane of the two largest
/// bounding-box extents, scaled into the unit square.
pub(crate) fn planar_texcoords(positions: &[Vec3]) -> Vec<Vec2> {
    let Some(first) = positions.first() else {
        return Vec::new();
    };
    let (lo, hi) = positions
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let ext = hi - lo;
    let mut axes = [0usize, 1, 2];
    // Stable sort keeps x before y before z on ties.
    axes.sort_by(|&a, &b| ext[b].partial_cmp(&ext[a]).unwrap());
    let (u_axis, v_axis) = (axes[0], axes[1]);
    let coord = |p: &Vec3, axis: usize| {
        if ext[axis] > 0.0 {
            ((p[axis] - lo[axis]) / ext[axis]).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    positions
        .iter()
        .map(|p| Vec2::new(coord(p, u_axis), coord(p, v_axis)))
        .collect()
}
