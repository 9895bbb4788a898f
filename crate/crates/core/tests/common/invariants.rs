//! Rendering and dataset-protocol invariant suites. Each check returns a
//! description of the first violation it finds.

use std::collections::BTreeMap;
use std::sync::Arc;

use synthdet::experiments::world::family_meshes;
use synthdet::experiments::{filter_views, Removal, CATEGORY_NAMES};
use synthdet::geometry::{make_fixture, normalize_mesh, Corner, FixtureSpec, Mesh, Vec2, Vec3};
use synthdet::imaging::{RgbImage, RgbaImage};
use synthdet::render::{project, rasterize, Camera, Material, Pose, PoseSpec};
use synthdet::scene::pools::{background_pool, texture_pool};
use synthdet::scene::{generate_batch, read_manifest, write_manifest, Dataset, Preset, SceneConfig, ViewTag};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Square in the plane `z`, centered at `(cx, cy)`, with one shading normal.
pub fn square(cx: f64, cy: f64, z: f64, side: f64, normal: Vec3) -> Mesh {
    let h = side / 2.0;
    let mut m = Mesh::empty("square");
    m.positions = vec![
        Vec3::new(cx - h, cy - h, z),
        Vec3::new(cx + h, cy - h, z),
        Vec3::new(cx + h, cy + h, z),
        Vec3::new(cx - h, cy + h, z),
    ];
    m.normals = vec![normal];
    m.texcoords = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    let c = |i| Corner {
        position: i,
        normal: 0,
        texcoord: i,
    };
    m.triangles = vec![[c(0), c(1), c(2)], [c(0), c(2), c(3)]];
    m
}

/// Concatenate meshes, keeping triangle order.
pub fn merge(parts: &[&Mesh]) -> Mesh {
    let mut out = Mesh::empty("merged");
    for p in parts {
        let (np, nn, nt) = (out.positions.len(), out.normals.len(), out.texcoords.len());
        out.positions.extend(&p.positions);
        out.normals.extend(&p.normals);
        out.texcoords.extend(&p.texcoords);
        out.triangles.extend(p.triangles.iter().map(|t| {
            t.map(|c| Corner {
                position: c.position + np,
                normal: c.normal + nn,
                texcoord: c.texcoord + nt,
            })
        }));
    }
    out
}

fn fixtures() -> Vec<Mesh> {
    let specs = [
        FixtureSpec::Cube { size: [1.0, 0.6, 0.8] },
        FixtureSpec::UvSphere {
            stacks: 10,
            slices: 16,
            radii: [1.0, 0.7, 0.5],
        },
        FixtureSpec::Torus {
            major_segments: 20,
            minor_segments: 10,
            major_radius: 1.0,
            minor_radius: 0.3,
        },
        FixtureSpec::ExtrudedPolygon {
            sides: 10,
            radius: 1.0,
            inner_ratio: 0.5,
            depth: 0.4,
        },
    ];
    specs
        .iter()
        .map(|s| normalize_mesh(&make_fixture(s).unwrap()).unwrap())
        .collect()
}

fn poses() -> Vec<Pose> {
    vec![
        Pose::new(0.0, 0.0, 2.5, 0.0),
        Pose::new(37.0, 20.0, 2.3, 5.0),
        Pose::new(135.0, -10.0, 2.8, -8.0),
        Pose::new(260.0, 45.0, 2.5, 0.0),
    ]
}

fn same_bits(a: &RgbaImage, b: &RgbaImage) -> bool {
    a.width() == b.width()
        && a.pixels()
            .iter()
            .zip(b.pixels())
            .all(|(p, q)| p.iter().zip(q).all(|(x, y)| x.to_bits() == y.to_bits()))
}

/// Re-renders are bit-identical, also when rendered from thread pools of
/// different sizes; alpha is exactly 0 or 1; empty meshes draw nothing.
pub fn check_determinism_and_alpha() -> Check {
    let camera = Camera::default();
    let texture = texture_pool(1, 64, 3).remove(0);
    let materials = [Material::default(), Material::textured(texture)];
    let mut jobs: Vec<(Mesh, Pose, Material)> = Vec::new();
    for m in fixtures() {
        for p in poses() {
            for mat in &materials {
                jobs.push((m.clone(), p, mat.clone()));
            }
        }
    }
    let render_all = |threads: usize| -> Vec<RgbaImage> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter()
                .map(|(m, p, mat)| rasterize(m, p, &camera, mat).unwrap())
                .collect()
        })
    };
    let one = render_all(1);
    let again = render_all(1);
    let four = render_all(4);
    for (i, img) in one.iter().enumerate() {
        ensure(same_bits(img, &again[i]), || format!("job {i}: re-render differs"))?;
        ensure(same_bits(img, &four[i]), || format!("job {i}: differs across thread counts"))?;
        ensure(img.covered_count() > 0, || format!("job {i}: nothing drawn"))?;
        ensure(img.pixels().iter().all(|p| p[3] == 0.0 || p[3] == 1.0), || {
            format!("job {i}: fractional alpha")
        })?;
        ensure(
            img.pixels().iter().all(|p| p[3] == 1.0 || *p == [0.0; 4]),
            || format!("job {i}: uncovered pixel is not (0, 0, 0, 0)"),
        )?;
    }
    let empty = rasterize(&Mesh::empty("none"), &poses()[0], &camera, &Material::default()).unwrap();
    ensure(empty.covered_count() == 0, || "empty mesh drew pixels".into())
}

/// A camera-facing square renders as a solid rectangle whose bounds match
/// the projected corners within one pixel.
pub fn check_square_bounds() -> Check {
    let camera = Camera::default();
    for (cx, cy, side, dist) in [(0.0, 0.0, 1.0, 2.5), (0.3, -0.2, 0.8, 3.0), (-0.4, 0.1, 0.5, 2.0)] {
        let pose = Pose::new(0.0, 0.0, dist, 0.0);
        let img = rasterize(&square(cx, cy, 0.0, side, Vec3::z()), &pose, &camera, &Material::default()).unwrap();
        let h = side / 2.0;
        let corners: Vec<[f64; 2]> = [(-h, -h), (h, -h), (h, h), (-h, h)]
            .iter()
            .map(|(dx, dy)| project(&pose, &camera, [cx + dx, cy + dy, 0.0]).pixel)
            .collect();
        let lo_x = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
        let hi_x = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
        let hi_y = corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
        let (x0, y0, x1, y1) = img.alpha_bounds().ok_or("square not drawn")?;
        let near = |a: usize, b: f64| (a as f64 - b).abs() <= 1.0;
        ensure(near(x0, lo_x) && near(x1, hi_x) && near(y0, lo_y) && near(y1, hi_y), || {
            format!("bounds ({x0}, {y0}, {x1}, {y1}) vs projected ({lo_x:.2}, {lo_y:.2}, {hi_x:.2}, {hi_y:.2})")
        })?;
        ensure(img.covered_count() == (x1 - x0) * (y1 - y0), || {
            "square coverage is not a solid rectangle".into()
        })?;
    }
    Ok(())
}

/// Of two overlapping squares, every doubly covered pixel shows the nearer
/// one, whatever the triangle order.
pub fn check_depth() -> Check {
    let camera = Camera::default();
    let pose = Pose::new(0.0, 0.0, 3.0, 0.0);
    let material = Material::default();
    // A tilted shading normal makes the far square a different gray.
    let near = square(0.25, 0.1, 0.4, 0.7, Vec3::z());
    let far = square(-0.1, 0.0, -0.4, 1.2, Vec3::new(-0.6, 0.0, 0.8));
    let near_only = rasterize(&near, &pose, &camera, &material).unwrap();
    let far_only = rasterize(&far, &pose, &camera, &material).unwrap();
    let mut overlap = 0;
    for mesh in [merge(&[&near, &far]), merge(&[&far, &near])] {
        let both = rasterize(&mesh, &pose, &camera, &material).unwrap();
        for y in 0..camera.height {
            for x in 0..camera.width {
                if near_only.alpha(x, y) == 1.0 && far_only.alpha(x, y) == 1.0 {
                    overlap += 1;
                    ensure(both.get(x, y) == near_only.get(x, y), || {
                        format!("pixel ({x}, {y}) shows {:?}, nearer square is {:?}", both.get(x, y), near_only.get(x, y))
                    })?;
                }
            }
        }
    }
    ensure(overlap > 100, || format!("only {overlap} doubly covered pixels"))?;
    ensure(near_only.get(32, 32) != far_only.get(30, 32), || "squares shade identically".into())
}

fn is_gray(p: [f32; 3]) -> bool {
    p[0] == p[1] && p[1] == p[2]
}

/// Uniform-gray renders are achromatic; under the RG-UG and W-UG presets the
/// whole composite is; under RR-UG every object pixel is.
pub fn check_achromatic() -> Check {
    let camera = Camera::default();
    for (i, m) in fixtures().iter().enumerate() {
        for p in poses() {
            let img = rasterize(m, &p, &camera, &Material::default()).unwrap();
            ensure(
                img.pixels().iter().all(|q| q[3] == 0.0 || is_gray([q[0], q[1], q[2]])),
                || format!("fixture {i}: colored uniform-gray pixel"),
            )?;
        }
    }
    let meshes = small_world();
    for preset in [Preset::RgUg, Preset::WUg, Preset::RrUg] {
        let mut scene = scene(preset);
        scene.keep_foreground = true;
        let ds = generate_batch(&meshes, &scene, 24, 5).map_err(|e| e.to_string())?;
        for item in &ds.items {
            let fg = item.foreground.as_ref().unwrap();
            for y in 0..item.image.height() {
                for x in 0..item.image.width() {
                    let object = fg.alpha(x, y) == 1.0;
                    if (object || preset != Preset::RrUg) && !is_gray(item.image.get(x, y)) {
                        return Err(format!("{preset}: colored pixel ({x}, {y}) in {}", item.id));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Rotating a cube's azimuth by 180 degrees mirrors its mask horizontally,
/// up to a one-pixel dilation.
pub fn check_mirror() -> Check {
    let camera = Camera::default();
    let cube = normalize_mesh(&make_fixture(&FixtureSpec::Cube { size: [1.0, 1.0, 1.0] }).unwrap()).unwrap();
    for (az, el) in [(0.0, 0.0), (0.0, 20.0), (45.0, 15.0)] {
        let m = Material::default();
        let a = rasterize(&cube, &Pose::new(az, el, 2.6, 0.0), &camera, &m).unwrap();
        let b = rasterize(&cube, &Pose::new(az + 180.0, el, 2.6, 0.0), &camera, &m).unwrap();
        let w = camera.width;
        let covered = |img: &RgbaImage, x: i64, y: i64| {
            x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < camera.height && img.alpha(x as usize, y as usize) == 1.0
        };
        let dilated = |img: &RgbaImage, x: i64, y: i64| {
            (-1..=1).any(|dy| (-1..=1).any(|dx| covered(img, x + dx, y + dy)))
        };
        for y in 0..camera.height as i64 {
            for x in 0..w as i64 {
                let mx = w as i64 - 1 - x;
                ensure(!covered(&a, x, y) || dilated(&b, mx, y), || {
                    format!("az {az}: ({x}, {y}) has no mirrored counterpart")
                })?;
                ensure(!covered(&b, mx, y) || dilated(&a, x, y), || {
                    format!("az {az}: mirrored ({mx}, {y}) has no counterpart")
                })?;
            }
        }
    }
    Ok(())
}

/// Every composited label box is exactly the tight bounds of its object's
/// alpha mask.
pub fn check_tight_boxes() -> Check {
    let meshes = small_world();
    for preset in Preset::ALL {
        let mut scene = scene(preset);
        scene.keep_foreground = true;
        let ds = generate_batch(&meshes, &scene, 16, 9).map_err(|e| e.to_string())?;
        for item in &ds.items {
            let fg = item.foreground.as_ref().unwrap();
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for y in 0..fg.height() {
                for x in 0..fg.width() {
                    if fg.alpha(x, y) > 0.0 {
                        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1));
                    }
                }
            }
            let b = item.boxes[0].bbox;
            ensure(
                (b.x0, b.y0, b.x1, b.y1) == (x0 as i32, y0 as i32, x1 as i32, y1 as i32),
                || format!("{preset} {}: box {b:?} vs mask ({x0}, {y0}, {x1}, {y1})", item.id),
            )?;
        }
    }
    Ok(())
}

pub fn check_render_suite() -> Check {
    check_determinism_and_alpha()?;
    check_square_bounds()?;
    check_depth()?;
    check_achromatic()?;
    check_mirror()?;
    check_tight_boxes()
}

// ---------------------------------------------------------------- protocols

/// Two meshes for each toy category.
pub fn small_world() -> Vec<Mesh> {
    CATEGORY_NAMES
        .iter()
        .flat_map(|c| family_meshes(c, 2, 0.5, 13).unwrap())
        .collect()
}

pub fn scene(preset: Preset) -> SceneConfig {
    scene_with(preset, PoseSpec::default())
}

pub fn scene_with(preset: Preset, pose: PoseSpec) -> SceneConfig {
    let bg: Vec<Arc<RgbImage>> = background_pool(4, 64, 21);
    let tex: Vec<Arc<RgbImage>> = texture_pool(4, 64, 22);
    SceneConfig::from_preset(preset, pose, Camera::default(), bg, tex)
}

fn counts(ds: &Dataset) -> BTreeMap<String, usize> {
    ds.images_per_category()
}

/// `generate_batch` yields exactly `n` items, balanced across categories to
/// within one, for several `n` including 2000.
pub fn check_batch_counts() -> Check {
    let meshes = small_world();
    for (n, preset) in [(1, Preset::WUg), (7, Preset::RrRr), (41, Preset::RgRr), (2000, Preset::WUg)] {
        let ds = generate_batch(&meshes, &scene(preset), n, 3).map_err(|e| e.to_string())?;
        ensure(ds.len() == n, || format!("n = {n}: got {} items", ds.len()))?;
        let c = counts(&ds);
        let total: usize = c.values().sum();
        ensure(total == n, || format!("n = {n}: category counts sum to {total}"))?;
        let lo = c.values().min().copied().unwrap_or(0);
        let hi = c.values().max().copied().unwrap_or(0);
        let all_present = n < CATEGORY_NAMES.len() || c.len() == CATEGORY_NAMES.len();
        ensure(hi - lo <= 1 && all_present, || format!("n = {n}: unbalanced {c:?}"))?;
    }
    Ok(())
}

/// Removing a view leaves no item holding that view, and only such items
/// are removed.
pub fn check_view_filters() -> Check {
    let ds = generate_batch(&small_world(), &scene(Preset::RrRr), 200, 4).map_err(|e| e.to_string())?;
    let has = |it: &synthdet::scene::LabeledImage, v: ViewTag| it.boxes.iter().any(|b| b.view == v);
    for (removal, view) in [(Removal::Front, ViewTag::Front), (Removal::Side, ViewTag::Side)] {
        let kept = filter_views(&ds, removal, 1);
        let left = kept.items.iter().filter(|it| has(it, view)).count();
        ensure(left == 0, || format!("{removal:?}: {left} items still hold the view"))?;
        let expected = ds.items.iter().filter(|it| !has(it, view)).count();
        ensure(kept.len() == expected, || format!("{removal:?}: kept {} of {expected}", kept.len()))?;
        ensure(expected < ds.len(), || format!("{removal:?}: fixture has no such views"))?;
    }
    let front = ds.items.iter().filter(|it| has(it, ViewTag::Front)).count();
    let random = filter_views(&ds, Removal::Random, 1);
    ensure(random.len() == ds.len() - front, || "random removal drops a different count".into())?;
    ensure(filter_views(&ds, Removal::None, 1).len() == ds.len(), || "none removal dropped items".into())
}

/// write, read, write again: identical manifest bytes and image bytes.
pub fn check_manifest_round_trip() -> Check {
    let ds = generate_batch(&small_world(), &scene(Preset::RrRr), 12, 8).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a/manifest.jsonl"), dir.path().join("b/manifest.jsonl"));
    std::fs::create_dir_all(a.parent().unwrap()).unwrap();
    std::fs::create_dir_all(b.parent().unwrap()).unwrap();
    write_manifest(&ds, &a).map_err(|e| e.to_string())?;
    let back = read_manifest(&a).map_err(|e| e.to_string())?;
    write_manifest(&back, &b).map_err(|e| e.to_string())?;
    let bytes = |p: &std::path::Path| std::fs::read(p).unwrap();
    ensure(bytes(&a) == bytes(&b), || "manifest bytes differ".into())?;
    for item in &ds.items {
        let rel = format!("images/{}.png", item.id);
        ensure(
            bytes(&a.parent().unwrap().join(&rel)) == bytes(&b.parent().unwrap().join(&rel)),
            || format!("{rel} differs"),
        )?;
    }
    for (x, y) in ds.items.iter().zip(&back.items) {
        ensure(x.id == y.id && x.boxes == y.boxes, || format!("{} labels changed", x.id))?;
        ensure(x.image.pixels() == y.image.pixels(), || format!("{} pixels changed", x.id))?;
    }
    Ok(())
}

pub fn check_protocol_suite() -> Check {
    check_batch_counts()?;
    check_view_filters()?;
    check_manifest_round_trip()
}
