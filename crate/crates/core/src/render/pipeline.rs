use std::rc::Rc;

use super::image::Image;
use super::sg::SGLight;
use super::shade::{shade_pixel, shade_tape, ShadingInputs};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::geometry::{CameraPose, IntersectionBuffer, Vec3};
use crate::sceneparse::CrossModalGraph;
use crate::stylefield::{FieldInputs, FieldOutputs, FieldVars, StyleField};

/// Mid-gray background; it sits at the encoder's zero point.
pub const DEFAULT_BACKGROUND: [f64; 3] = [0.5, 0.5, 0.5];

/// Key, fill and back lobes placed relative to the camera frame.
pub fn default_lights(pose: &CameraPose) -> Vec<SGLight> {
    let (right, up, fwd) = pose.basis();
    let to_cam = -fwd;
    let mk = |d: Vec3, sharp: f64, amp: f64| SGLight::new(d, sharp, [amp; 3]).expect("valid preset light");
    vec![
        mk(to_cam + up * 0.5 + right * 0.4, 6.0, 2.5),
        mk(to_cam - right * 0.6 - up * 0.2, 3.0, 0.8),
        mk(-to_cam + up * 0.8, 4.0, 0.6),
    ]
}

/// Single lobe from the camera, used for material-free renders.
pub fn frontal_light(pose: &CameraPose) -> SGLight {
    let (_, _, fwd) = pose.basis();
    SGLight::new(-fwd, 4.0, [3.0; 3]).expect("valid preset light")
}

/// Flat 0.5-gray diffuse render of the bare mesh under a frontal light.
pub fn neutral_render(buffer: &IntersectionBuffer, pose: &CameraPose, background: [f64; 3]) -> Result<Image> {
    let light = [frontal_light(pose)];
    let mut img = Image::filled(buffer.height, buffer.width, background);
    for (p, hit) in buffer.hits.iter().enumerate() {
        if let Some(h) = hit {
            let rgb = shade_pixel(
                &ShadingInputs {
                    normal: h.normal,
                    to_eye: -buffer.view_dirs[p],
                    diffuse: [0.5; 3],
                    roughness: 1.0,
                    specular: [0.0; 3],
                },
                &light,
            )?;
            img.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
        }
    }
    Ok(img)
}

/// Hit-point attributes of several views stacked into one batch.
#[derive(Debug, Clone)]
pub struct PointBatch {
    pub points: Tensor,
    pub normals: Tensor,
    pub view_dirs: Tensor,
    /// Row range of each view inside the batch.
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl PointBatch {
    pub fn from_buffers(buffers: &[IntersectionBuffer]) -> Result<Self> {
        let (mut pts, mut nrm, mut dirs, mut ranges) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for b in buffers {
            let start = pts.len() / 3;
            for (h, d) in b.hits.iter().zip(&b.view_dirs) {
                if let Some(h) = h {
                    pts.extend(h.point.iter());
                    nrm.extend(h.normal.iter());
                    dirs.extend(d.iter());
                }
            }
            ranges.push(start..pts.len() / 3);
        }
        let n = pts.len() / 3;
        Ok(PointBatch {
            points: Tensor::new(vec![n, 3], pts)?,
            normals: Tensor::new(vec![n, 3], nrm)?,
            view_dirs: Tensor::new(vec![n, 3], dirs)?,
            ranges,
        })
    }

    pub fn len(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point_list(&self) -> Vec<Vec3> {
        self.points.data().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }
}

/// Images `[H*W, 3]` of every view plus the field outputs behind them.
pub struct RenderedViews {
    pub images: Vec<Var>,
    pub field: FieldOutputs,
}

/// Shades every hit pixel with the style field and fills misses with the
/// background. The images stay differentiable in the field parameters.
#[allow(clippy::too_many_arguments)]
pub fn render_views(
    t: &mut Tape,
    field: &StyleField,
    vars: &FieldVars,
    buffers: &[IntersectionBuffer],
    batch: &PointBatch,
    graph: &CrossModalGraph,
    words: Var,
    lights: &[Vec<SGLight>],
    background: [f64; 3],
) -> Result<RenderedViews> {
    let out = field.forward(
        t,
        vars,
        &FieldInputs {
            points: &batch.points,
            normals: &batch.normals,
            view_dirs: &batch.view_dirs,
            words,
            graph,
        },
    )?;
    let to_eye = t.constant(Tensor::new(
        vec![batch.len(), 3],
        batch.view_dirs.data().iter().map(|v| -v).collect(),
    )?);
    let bg = t.constant(Tensor::new(vec![1, 3], background.to_vec())?);
    let mut images = Vec::with_capacity(buffers.len());
    for (v, buf) in buffers.iter().enumerate() {
        let range = batch.ranges[v].clone();
        let n = range.len();
        let idx = Rc::new(range.collect::<Vec<_>>());
        let pick = |t: &mut Tape, x: Var| t.gather_rows(x, idx.clone());
        let img = if n == 0 {
            let all = Rc::new(vec![0usize; buf.height * buf.width]);
            t.gather_rows(bg, all)?
        } else {
            let normal = pick(t, out.normal)?;
            let eye = pick(t, to_eye)?;
            let diffuse = pick(t, out.diffuse)?;
            let rough = pick(t, out.roughness)?;
            let spec = pick(t, out.specular)?;
            let shaded = shade_tape(t, normal, eye, diffuse, rough, spec, &lights[v])?;
            let table = t.concat(&[shaded, bg], 0)?;
            let mut k = 0;
            let scatter: Vec<usize> = buf
                .hits
                .iter()
                .map(|h| {
                    if h.is_some() {
                        k += 1;
                        k - 1
                    } else {
                        n
                    }
                })
                .collect();
            t.gather_rows(table, Rc::new(scatter))?
        };
        images.push(img);
    }
    Ok(RenderedViews { images, field: out })
}

/// Single-view convenience wrapper of [`render_views`] that evaluates the
/// field without tracking gradients.
pub fn render_image(
    field: &StyleField,
    buffer: &IntersectionBuffer,
    graph: &CrossModalGraph,
    word_features: &Tensor,
    lights: &[SGLight],
    background: [f64; 3],
) -> Result<Image> {
    let mut t = Tape::new();
    let vars = field.bind_constant(&mut t);
    let words = t.constant(word_features.clone());
    let batch = PointBatch::from_buffers(std::slice::from_ref(buffer))?;
    let r = render_views(
        &mut t,
        field,
        &vars,
        std::slice::from_ref(buffer),
        &batch,
        graph,
        words,
        &[lights.to_vec()],
        background,
    )?;
    Image::from_tensor(buffer.height, buffer.width, t.value(r.images[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_coords;
    use crate::geometry::{two_spheres, Raycaster};
    use crate::sceneparse::{build_graph, extract_noun_phrases, ObjectAssignment};
    use crate::stylefield::FieldConfig;

    fn setup(res: usize) -> (StyleField, IntersectionBuffer, CrossModalGraph, Tensor, CameraPose) {
        let field = StyleField::new(
            FieldConfig {
                width: 16,
                attn_dim: 8,
                word_dim: 8,
                ..FieldConfig::default()
            },
            7,
        )
        .unwrap();
        let pose = CameraPose::looking_at_origin(Vec3::new(0.3, 0.4, 2.5)).unwrap();
        let rc = Raycaster::new(two_spheres(1));
        let buf = rc.geometry_pass(&pose, res, res);
        let phrases = extract_noun_phrases("a red sphere").unwrap();
        let graph = build_graph(
            &ObjectAssignment {
                cluster_of_point: vec![0; buf.hit_count()],
                phrase_of_cluster: vec![0],
            },
            &phrases,
            3,
        )
        .unwrap();
        let words = Tensor::new(vec![3, 8], (0..24).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        (field, buf, graph, words, pose)
    }

    #[test]
    fn fresh_field_renders_finite_nonnegative() {
        let (field, buf, graph, words, pose) = setup(16);
        let img = render_image(&field, &buf, &graph, &words, &default_lights(&pose), DEFAULT_BACKGROUND).unwrap();
        assert!(img.data.iter().all(|v| v.is_finite() && *v >= 0.0));
        for (p, h) in buf.hits.iter().enumerate() {
            if h.is_none() {
                assert_eq!(img.pixel(p / 16, p % 16), DEFAULT_BACKGROUND);
            }
        }
    }

    #[test]
    fn empty_view_is_background() {
        let (field, _, _, words, _) = setup(4);
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, 6.0), Vec3::y(), 45.0).unwrap();
        let buf = Raycaster::new(two_spheres(1)).geometry_pass(&pose, 5, 5);
        let graph = CrossModalGraph {
            num_points: 0,
            num_words: 3,
            edges: vec![],
        };
        let img = render_image(&field, &buf, &graph, &words, &default_lights(&pose), [1.0; 3]).unwrap();
        assert_eq!(img, Image::filled(5, 5, [1.0; 3]));
    }

    #[test]
    fn neutral_render_is_gray_only() {
        let (_, buf, _, _, pose) = setup(12);
        let img = neutral_render(&buf, &pose, DEFAULT_BACKGROUND).unwrap();
        for px in img.data.chunks(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }

    #[test]
    fn mean_pixel_gradient_wrt_diffuse_head() {
        let (field, buf, graph, words, pose) = setup(8);
        let lights = vec![default_lights(&pose)];
        let idx = field.names().iter().position(|n| n == "refl.diffuse.w").unwrap();
        let x = field.values()[idx].clone();
        let coords: Vec<usize> = (0..x.numel()).step_by(5).collect();
        let batch = PointBatch::from_buffers(std::slice::from_ref(&buf)).unwrap();
        let r = grad_check_coords(
            |t, w| {
                let mut vars = field.bind_constant(t);
                vars.vars[idx] = w;
                let wv = t.constant(words.clone());
                let out = render_views(t, &field, &vars, std::slice::from_ref(&buf), &batch, &graph, wv, &lights, DEFAULT_BACKGROUND)?;
                Ok(t.mean(out.images[0]))
            },
            &x,
            &coords,
            1e-4,
            1e-3,
        )
        .unwrap();
        assert!(r.passed, "{}", r.max_rel_error);
    }
}
