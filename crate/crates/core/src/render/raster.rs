use nalgebra::{Vector2, Vector3};

use super::{project_camera_point, Camera, Material, Pose, TextureMapping, TextureMode, ViewFrame};
use crate::error::Result;
use crate::geometry::Mesh;
use crate::imaging::RgbaImage;

/// Clip-space vertex: camera-space position plus the attributes we
/// interpolate.
#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    cam: Vector3<f64>,
    normal: Vector3<f64>,
    uv: Vector2<f64>,
}

impl ClipVertex {
    fn lerp(&self, other: &Self, t: f64) -> Self {
        Self {
            cam: self.cam + (other.cam - self.cam) * t,
            normal: self.normal + (other.normal - self.normal) * t,
            uv: self.uv + (other.uv - self.uv) * t,
        }
    }
}

/// Sutherland-Hodgman against the plane `z = near`.
fn clip_near(poly: &[ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &poly[i];
        let b = &poly[(i + 1) % 3];
        let a_in = a.cam.z >= near;
        let b_in = b.cam.z >= near;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let t = (near - a.cam.z) / (b.cam.z - a.cam.z);
            out.push(a.lerp(b, t));
        }
    }
    out
}

struct ScreenVertex {
    xy: Vector2<f64>,
    inv_z: f64,
    normal_over_z: Vector3<f64>,
    uv_over_z: Vector2<f64>,
}

#[derive(Clone, Copy)]
struct Fragment {
    depth: f64,
    normal: Vector3<f64>,
    uv: Vector2<f64>,
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Z-buffered rasterization of `mesh` seen from `pose`.
///
/// Pixels are sampled at their centers; covered pixels get alpha 1, others
/// stay `(0, 0, 0, 0)`. Both triangle windings are drawn and lighting is
/// two-sided. Triangles are processed in mesh order and depth ties keep the
/// earlier triangle, so output is a pure function of the inputs.
pub fn rasterize(mesh: &Mesh, pose: &Pose, camera: &Camera, material: &Material) -> Result<RgbaImage> {
    camera.validate()?;
    pose.validate()?;
    material.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut out = RgbaImage::transparent(w, h);
    if mesh.is_empty() {
        return Ok(out);
    }
    mesh.validate()?;

    let frame = ViewFrame::new(pose);
    let mut frags: Vec<Option<Fragment>> = vec![None; w * h];

    for tri in &mesh.triangles {
        let verts = tri.map(|c| ClipVertex {
            cam: frame.camera_point(&mesh.positions[c.position]),
            normal: frame.normal_to_view(&mesh.normals[c.normal]),
            uv: mesh.texcoords[c.texcoord],
        });
        let poly = clip_near(&verts, camera.near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex> = poly
            .iter()
            .map(|v| {
                let p = project_camera_point(camera, &v.cam);
                let inv_z = 1.0 / v.cam.z;
                ScreenVertex {
                    xy: Vector2::new(p.pixel[0], p.pixel[1]),
                    inv_z,
                    normal_over_z: v.normal * inv_z,
                    uv_over_z: v.uv * inv_z,
                }
            })
            .collect();
        for k in 1..screen.len() - 1 {
            draw_triangle([&screen[0], &screen[k], &screen[k + 1]], camera, &mut frags);
        }
    }

    let bounds = frags
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_some())
        .fold(None, |acc: Option<(usize, usize, usize, usize)>, (i, _)| {
            let (x, y) = (i % w, i / w);
            Some(match acc {
                None => (x, y, x + 1, y + 1),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
            })
        });

    for (i, frag) in frags.iter().enumerate() {
        let Some(frag) = frag else { continue };
        let (x, y) = (i % w, i / w);
        let mut n = frag.normal;
        let len = n.norm();
        n = if len > 0.0 { n / len } else { Vector3::z() };
        if n.z < 0.0 {
            n = -n;
        }
        let albedo = match material.texture_mode {
            TextureMode::UniformGray => [material.albedo_gray; 3],
            TextureMode::RealRgb => {
                let tex = material
                    .texture_image
                    .as_ref()
                    .expect("validated: real_rgb has a texture");
                let (tw, th) = (tex.width(), tex.height());
                let (tx, ty) = match material.mapping {
                    TextureMapping::ScreenSpace => {
                        let (x0, y0, x1, y1) = bounds.expect("covered pixel implies bounds");
                        (
                            (x as f64 + 0.5 - x0 as f64) / (x1 - x0) as f64,
                            (y as f64 + 0.5 - y0 as f64) / (y1 - y0) as f64,
                        )
                    }
                    TextureMapping::Uv => (frag.uv.x, 1.0 - frag.uv.y),
                };
                tex.sample_bilinear_in(
                    tx * tw as f64 - 0.5,
                    ty * th as f64 - 0.5,
                    (0, 0, tw - 1, th - 1),
                )
            }
        };
        let s = material.shading_factor(&n) as f32;
        let [r, g, b] = albedo.map(|c| c * s);
        out.set(x, y, [r, g, b, 1.0]);
    }
    Ok(out)
}

fn draw_triangle(v: [&ScreenVertex; 3], camera: &Camera, frags: &mut [Option<Fragment>]) {
    let (w, h) = (camera.width, camera.height);
    let area = edge(&v[0].xy, &v[1].xy, &v[2].xy);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = v.iter().map(|p| p.xy.x).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p.xy.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p.xy.y).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p.xy.y).fold(f64::NEG_INFINITY, f64::max);
    // Pixel i is sampled at i + 0.5.
    let x_start = (min_x - 0.5).ceil().max(0.0);
    let x_end = (max_x - 0.5).floor().min(w as f64 - 1.0);
    let y_start = (min_y - 0.5).ceil().max(0.0);
    let y_end = (max_y - 0.5).floor().min(h as f64 - 1.0);
    if x_start > x_end || y_start > y_end {
        return;
    }
    let inv_area = 1.0 / area;
    for py in y_start as usize..=y_end as usize {
        for px in x_start as usize..=x_end as usize {
            let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
            let l0 = edge(&v[1].xy, &v[2].xy, &p) * inv_area;
            let l1 = edge(&v[2].xy, &v[0].xy, &p) * inv_area;
            let l2 = edge(&v[0].xy, &v[1].xy, &p) * inv_area;
            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                continue;
            }
            let inv_z = l0 * v[0].inv_z + l1 * v[1].inv_z + l2 * v[2].inv_z;
            if !(inv_z > 0.0) {
                continue;
            }
            let depth = 1.0 / inv_z;
            if depth > camera.far {
                continue;
            }
            let slot = &mut frags[py * w + px];
            if matches!(slot, Some(f) if f.depth <= depth) {
                continue;
            }
            let normal = (v[0].normal_over_z * l0 + v[1].normal_over_z * l1 + v[2].normal_over_z * l2)
                * depth;
            let uv = (v[0].uv_over_z * l0 + v[1].uv_over_z * l1 + v[2].uv_over_z * l2) * depth;
            *slot = Some(Fragment { depth, normal, uv });
        }
    }
}
