use std::f64::consts::PI;

use super::sg::{clamped_cosine_integral, SGLight, MIN_SHARPNESS};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Folded geometry/shadowing factor of the specular lobe.
pub const VISIBILITY: f64 = 0.25;
const MIN_NDOTV: f64 = 1e-4;

/// Per-point inputs of the reflection integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingInputs {
    pub normal: Vec3,
    /// Unit vector from the surface toward the camera.
    pub to_eye: Vec3,
    pub diffuse: [f64; 3],
    pub roughness: f64,
    pub specular: [f64; 3],
}

/// Specular lobe of the BRDF as an SG around the mirror direction:
/// `(sharpness, amplitude, axis)`.
pub fn specular_lobe(normal: &Vec3, to_eye: &Vec3, roughness: f64) -> (f64, f64, Vec3) {
    let m2 = roughness * roughness;
    let ndv = normal.dot(to_eye);
    let sharp = 2.0 / m2 / (4.0 * ndv.max(MIN_NDOTV));
    let axis = normal * (2.0 * ndv) - to_eye;
    (sharp, 1.0 / (PI * m2), axis)
}

/// BRDF value for incident direction `w`.
pub fn brdf_eval(inp: &ShadingInputs, w: &Vec3) -> [f64; 3] {
    let (ls, amp, axis) = specular_lobe(&inp.normal, &inp.to_eye, inp.roughness);
    let lobe = VISIBILITY * amp * (ls * (w.dot(&axis) - 1.0)).exp();
    std::array::from_fn(|k| inp.diffuse[k] / PI + inp.specular[k] * lobe)
}

/// Outgoing radiance toward the eye under SG lights, integrating the
/// diffuse and specular lobes against the clamped cosine analytically.
pub fn shade_pixel(inp: &ShadingInputs, lights: &[SGLight]) -> Result<[f64; 3]> {
    let n = inp
        .normal
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Degenerate("zero-length shading normal".into()))?;
    let (ls, amp, axis) = specular_lobe(&n, &inp.to_eye, inp.roughness);
    let mut out = [0.0; 3];
    for light in lights {
        let xi = light.axis();
        let (ed, _, _) = clamped_cosine_integral(light.sharpness, xi.dot(&n));
        let v = xi * light.sharpness + axis * ls;
        let lp = v.norm().max(MIN_SHARPNESS);
        let (es, _, _) = clamped_cosine_integral(lp, v.dot(&n) / lp);
        let spec = VISIBILITY * amp * (lp - light.sharpness - ls).exp() * es;
        for k in 0..3 {
            out[k] += light.amplitude[k] * (inp.diffuse[k] / PI * ed + inp.specular[k] * spec);
        }
    }
    Ok(out)
}

/// Differentiable batched counterpart of [`shade_pixel`]. `normal`,
/// `to_eye`, `diffuse`, `specular` are `[P,3]`, `roughness` is `[P,1]`;
/// returns `[P,3]` radiance. Normals must already be unit length.
pub fn shade_tape(
    t: &mut Tape,
    normal: Var,
    to_eye: Var,
    diffuse: Var,
    roughness: Var,
    specular: Var,
    lights: &[SGLight],
) -> Result<Var> {
    let p = t.shape(normal)[0];
    let nv = t.mul(normal, to_eye)?;
    let ndv = t.sum_axis(nv, 1)?;
    let ndv_c = t.clamp_min(ndv, MIN_NDOTV);
    let m2 = t.mul(roughness, roughness)?;
    let denom = t.mul(m2, ndv_c)?;
    let denom = t.scale(denom, 2.0);
    let one = t.constant(Tensor::full(vec![p, 1], 1.0));
    let lobe_sharp = t.div(one, denom)?;
    let inv_m2 = t.div(one, m2)?;
    let amp = t.scale(inv_m2, VISIBILITY / PI);
    let two_ndv = t.scale(ndv, 2.0);
    let mirrored = t.mul(normal, two_ndv)?;
    let axis = t.sub(mirrored, to_eye)?;
    let warped = t.mul(axis, lobe_sharp)?;
    let diffuse_k = t.scale(diffuse, 1.0 / PI);

    let mut total: Option<Var> = None;
    for light in lights {
        let xi = t.constant(Tensor::new(vec![3, 1], light.axis.to_vec())?);
        let mu = t.constant(Tensor::new(vec![1, 3], light.amplitude.to_vec())?);
        let c = t.matmul(normal, xi)?;
        let lam = light.sharpness;
        let ed = t.map1(c, |c| {
            let (v, dc, _) = clamped_cosine_integral(lam, c);
            (v, dc)
        });
        let diff = t.mul(diffuse_k, ed)?;

        let lxi = t.constant(Tensor::new(vec![1, 3], light.axis.iter().map(|a| a * lam).collect())?);
        let v = t.add(warped, lxi)?;
        let lp = t.l2_norm(v, 1)?;
        let lp = t.clamp_min(lp, MIN_SHARPNESS);
        let vn = t.mul(v, normal)?;
        let vn = t.sum_axis(vn, 1)?;
        let cp = t.div(vn, lp)?;
        let es = t.map2(lp, cp, |l, c| {
            let (v, dc, dl) = clamped_cosine_integral(l, c);
            (v, dl, dc)
        })?;
        let expo = t.sub(lp, lobe_sharp)?;
        let expo = t.add_scalar(expo, -lam);
        let mu_p = t.exp(expo);
        let k = t.mul(amp, mu_p)?;
        let k = t.mul(k, es)?;
        let spec = t.mul(specular, k)?;
        let sum = t.add(diff, spec)?;
        let rad = t.mul(sum, mu)?;
        total = Some(match total {
            None => rad,
            Some(acc) => t.add(acc, rad)?,
        });
    }
    Ok(match total {
        Some(v) => v,
        None => t.constant(Tensor::zeros(vec![p, 3])),
    })
}
