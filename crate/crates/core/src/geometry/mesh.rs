use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Fixed triangle mesh. Face indices are 0-based internally; OBJ files use
/// the usual 1-based (or negative relative) convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_normals: Vec<Vec3>,
    /// Zero-area faces dropped while loading.
    pub dropped_degenerate: usize,
}

impl Mesh {
    /// Builds a mesh, computing face normals and dropping zero-area faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for (fi, f) in faces.into_iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "face {fi} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let len = n.norm();
            if len <= 1e-300 || !len.is_finite() {
                dropped += 1;
                continue;
            }
            kept.push(f);
            normals.push(n / len);
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Mesh {
            vertices,
            faces: kept,
            face_normals: normals,
            dropped_degenerate: dropped,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn max_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Concatenates meshes into one scene.
    pub fn merge(parts: &[Mesh]) -> Result<Mesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for p in parts {
            let base = vertices.len();
            vertices.extend_from_slice(&p.vertices);
            faces.extend(p.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        Mesh::new(vertices, faces)
    }

    /// Number of pieces connected through shared vertices; coincident
    /// vertex positions count as shared.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let union = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra.max(rb)] = ra.min(rb);
            }
        };
        let mut seen = std::collections::HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            let first = *seen.entry(key).or_insert(i);
            union(&mut parent, first, i);
        }
        for f in &self.faces {
            union(&mut parent, f[0], f[1]);
            union(&mut parent, f[1], f[2]);
        }
        let mut roots: Vec<usize> = self.faces.iter().map(|f| find(&mut parent, f[0])).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a Wavefront OBJ triangle mesh; polygons are fan-triangulated.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parses OBJ text. Only `v` and `f` records are used; `vn`, `vt`, groups,
/// materials and comments are ignored.
pub fn parse_obj(text: &str, source: &str) -> Result<Mesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(line_no, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(line_no, "vertex needs three finite coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = it
                    .map(|tok| {
                        tok.split('/')
                            .next()
                            .unwrap_or("")
                            .parse::<i64>()
                            .map_err(|e| err(line_no, format!("bad face index {tok:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err(line_no, format!("face with {} vertices cannot be triangulated", idx.len())));
                }
                polys.push((line_no, idx));
            }
            _ => {}
        }
    }
    let nv = vertices.len() as i64;
    for (line_no, idx) in polys {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&i| {
                let r = if i > 0 { i - 1 } else { nv + i };
                if i == 0 || r < 0 || r >= nv {
                    Err(err(line_no, format!("face index {i} out of range for {nv} vertices")))
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    if vertices.is_empty() || faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Mesh::new(vertices, faces)
}

/// Translates the centroid to the origin and scales so the farthest vertex
/// lies on the unit sphere.
pub fn normalize_unit_sphere(mesh: &Mesh) -> Result<Mesh> {
    let c = mesh.centroid();
    let shifted: Vec<Vec3> = mesh.vertices.iter().map(|v| v - c).collect();
    let scale = shifted.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale <= 1e-12 {
        return Err(Error::Degenerate("all vertices coincide".into()));
    }
    Ok(Mesh {
        vertices: shifted.into_iter().map(|v| v / scale).collect(),
        faces: mesh.faces.clone(),
        face_normals: mesh.face_normals.clone(),
        dropped_degenerate: mesh.dropped_degenerate,
    })
}

/// Geodesic sphere from a subdivided icosahedron, outward-facing.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| center + v * radius).collect();
    Mesh::new(vertices, faces).expect("icosphere is well formed")
}

/// Two equal spheres side by side on the x axis, already inside the unit
/// sphere with the centroid at the origin.
pub fn two_spheres(subdivisions: u32) -> Mesh {
    let left = icosphere(Vec3::new(-0.55, 0.0, 0.0), 0.45, subdivisions);
    let right = icosphere(Vec3::new(0.55, 0.0, 0.0), 0.45, subdivisions);
    Mesh::merge(&[left, right]).expect("non-empty parts")
}

/// Axis-aligned unit square in the z=0 plane facing +z, as two triangles.
pub fn unit_quad() -> Mesh {
    let v = vec![
        Vec3::new(-0.5, -0.5, 0.0),
        Vec3::new(0.5, -0.5, 0.0),
        Vec3::new(0.5, 0.5, 0.0),
        Vec3::new(-0.5, 0.5, 0.0),
    ];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("quad")
}
