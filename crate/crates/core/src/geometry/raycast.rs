use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use super::camera::CameraPose;
use super::mesh::{Mesh, Vec3};
use crate::error::{Error, Result};

pub const RAY_EPS: f64 = 1e-8;
const LEAF_SIZE: usize = 4;

/// Determinant-based ray/triangle test, backface-agnostic. Returns the hit
/// distance and barycentric weights of the three corners.
pub fn ray_triangle_intersect(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < RAY_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t <= RAY_EPS {
        return None;
    }
    Some((t, [1.0 - u - v, u, v]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub normal: Vec3,
    pub face_id: usize,
    pub t: f64,
    pub bary: [f64; 3],
}

/// Per-pixel first intersections for one view, row-major.
#[derive(Debug, Clone)]
pub struct IntersectionBuffer {
    pub height: usize,
    pub width: usize,
    pub origin: Vec3,
    /// Unit ray direction through each pixel (defined for misses too).
    pub view_dirs: Vec<Vec3>,
    pub hits: Vec<Option<Hit>>,
}

impl IntersectionBuffer {
    pub fn hit_count(&self) -> usize {
        self.hits.iter().filter(|h| h.is_some()).count()
    }

    /// Pixel indices of hits in scan order.
    pub fn hit_pixels(&self) -> Vec<usize> {
        self.hits
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.map(|_| i))
            .collect()
    }

    pub fn hit_points(&self) -> Vec<Vec3> {
        self.hits.iter().flatten().map(|h| h.point).collect()
    }

    pub fn hitmap(&self) -> HitMap {
        HitMap {
            height: self.height,
            width: self.width,
            data: self.hits.iter().map(Option::is_some).collect(),
        }
    }
}

/// Binary image, true where a ray meets the mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HitMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl HitMap {
    pub fn empty(height: usize, width: usize) -> Self {
        HitMap {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Rows packed MSB-first, one bit per pixel, 1 = hit.
    pub fn packed_rows(&self) -> Vec<u8> {
        let stride = self.width.div_ceil(8);
        let mut out = vec![0u8; stride * self.height];
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    out[r * stride + c / 8] |= 0x80 >> (c % 8);
                }
            }
        }
        out
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut w = enc.write_header()?;
        w.write_image_data(&self.packed_rows())?;
        w.finish()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Node {
    min: Vec3,
    max: Vec3,
    // leaf: faces order[start..start + count]; internal: count == 0, children left/right
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

/// Bounding volume hierarchy over mesh faces. Queries return exactly what
/// an all-faces scan returns: nearest t, ties to the lowest face id.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        let n = mesh.num_faces();
        let bounds: Vec<(Vec3, Vec3)> = (0..n)
            .map(|f| {
                let t = mesh.triangle(f);
                let lo = t[0].inf(&t[1]).inf(&t[2]);
                let hi = t[0].sup(&t[1]).sup(&t[2]);
                let pad = 1e-9 * (1.0 + (hi - lo).amax());
                (lo.add_scalar(-pad), hi.add_scalar(pad))
            })
            .collect();
        let centroids: Vec<Vec3> = bounds.iter().map(|(a, b)| (a + b) * 0.5).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            order: (0..n).collect(),
        };
        bvh.split(0, n, &bounds, &centroids);
        bvh
    }

    fn split(&mut self, start: usize, end: usize, bounds: &[(Vec3, Vec3)], centroids: &[Vec3]) -> usize {
        let items = &self.order[start..end];
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &f in items {
            lo = lo.inf(&bounds[f].0);
            hi = hi.sup(&bounds[f].1);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            min: lo,
            max: hi,
            start,
            count: end - start,
            left: 0,
            right: 0,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut clo = Vec3::repeat(f64::INFINITY);
        let mut chi = Vec3::repeat(f64::NEG_INFINITY);
        for &f in items {
            clo = clo.inf(&centroids[f]);
            chi = chi.sup(&centroids[f]);
        }
        let axis = (chi - clo).imax();
        let mid = start + (end - start) / 2;
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let left = self.split(start, mid, bounds, centroids);
        let right = self.split(mid, end, bounds, centroids);
        let node = &mut self.nodes[id];
        node.count = 0;
        node.left = left;
        node.right = right;
        id
    }

    /// Nearest hit along the ray, as (face, t, bary).
    pub fn intersect(&self, mesh: &Mesh, origin: &Vec3, dir: &Vec3) -> Option<(usize, f64, [f64; 3])> {
        let mut best: Option<(usize, f64, [f64; 3])> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let limit = best.map_or(f64::INFINITY, |b| b.1);
            if !slab(origin, dir, &node.min, &node.max, limit) {
                continue;
            }
            if node.count == 0 {
                stack.push(node.right);
                stack.push(node.left);
                continue;
            }
            for &f in &self.order[node.start..node.start + node.count] {
                if let Some((t, bary)) = ray_triangle_intersect(origin, dir, &mesh.triangle(f)) {
                    let better = match best {
                        None => true,
                        Some((bf, bt, _)) => t < bt || (t == bt && f < bf),
                    };
                    if better {
                        best = Some((f, t, bary));
                    }
                }
            }
        }
        best
    }
}

fn slab(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3, limit: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = limit;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut near, mut far) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        // a hair of slack keeps exact ties at the current best distance alive
        t0 = t0.max(near);
        t1 = t1.min(far * (1.0 + 1e-12) + 1e-12);
        if t0 > t1 + 1e-12 * (1.0 + t1.abs()) {
            return false;
        }
    }
    true
}

/// Mesh plus its acceleration structure, reusable across views.
#[derive(Debug, Clone)]
pub struct Raycaster {
    pub mesh: Mesh,
    bvh: Bvh,
}

impl Raycaster {
    pub fn new(mesh: Mesh) -> Self {
        let bvh = Bvh::build(&mesh);
        Raycaster { mesh, bvh }
    }

    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        self.bvh.intersect(&self.mesh, origin, dir).map(|(f, t, bary)| Hit {
            point: origin + dir * t,
            normal: self.mesh.face_normals[f],
            face_id: f,
            t,
            bary,
        })
    }

    /// First intersections for every pixel of one view.
    pub fn geometry_pass(&self, pose: &CameraPose, height: usize, width: usize) -> IntersectionBuffer {
        let origin = pose.position();
        let basis = pose.basis();
        let view_dirs: Vec<Vec3> = (0..height * width)
            .map(|i| pose.ray_dir_in(&basis, i / width, i % width, height, width))
            .collect();
        let mut hits = vec![None; height * width];
        hits.par_chunks_mut(width.max(1))
            .zip(view_dirs.par_chunks(width.max(1)))
            .for_each(|(row, dirs)| {
                for (h, d) in row.iter_mut().zip(dirs) {
                    *h = self.cast(&origin, d);
                }
            });
        IntersectionBuffer {
            height,
            width,
            origin,
            view_dirs,
            hits,
        }
    }
}

/// One-shot geometry pass; builds the acceleration structure each call.
pub fn render_geometry_pass(mesh: &Mesh, pose: &CameraPose, resolution: (usize, usize)) -> (IntersectionBuffer, HitMap) {
    let rc = Raycaster::new(mesh.clone());
    let buf = rc.geometry_pass(pose, resolution.0, resolution.1);
    let map = buf.hitmap();
    (buf, map)
}
