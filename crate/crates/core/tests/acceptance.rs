//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Criterion numbers given as arguments
//! select a subset, e.g. `cargo test --test acceptance -- 2 10`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use temo_core::autodiff::{grad_check, grad_check_coords, Tape, Tensor, Var};
use temo_core::embed::{ColorSemanticsProvider, Crop, EmbeddingProvider};
use temo_core::geometry::{icosphere, render_geometry_pass, two_spheres, unit_quad, CameraPose, Mesh, Vec3};
use temo_core::render::{shade_pixel, shade_tape, SGLight, ShadingInputs};
use temo_core::sceneparse::{extract_noun_phrases, gmm_fit};
use temo_core::stylefield::{dga_attend, DgaMode, DgaParams, DgaVars, FieldConfig, FieldInputs, StyleField};
use temo_core::supervision::{cgc_loss, cgc_objective, fine_from_map, CgcWeights};
use temo_core::trainer::{
    evaluate, lr_at, metrics_csv, step_loss, train, EvalReport, EvalSpec, FineRows, Lighting, LossSpec, Scene,
    SetupSpec, StepBatch, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Some(u) = v.try_normalize(1e-9) {
            return u;
        }
    }
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

fn tiny_scene(provider: &ColorSemanticsProvider) -> Scene {
    Scene::prepare(
        icosphere(Vec3::zeros(), 0.7, 1),
        "a red ball",
        provider,
        &SetupSpec {
            views: 2,
            resolution: 8,
            radius: 2.5,
            elevation_deg: 10.0,
            seed: 0,
        },
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let provider = ColorSemanticsProvider::new(11);
    let scene = tiny_scene(&provider);
    let poses = vec![
        CameraPose::looking_at_origin(Vec3::new(0.0, 0.3, 2.0)).unwrap(),
        CameraPose::looking_at_origin(Vec3::new(1.6, 0.2, -1.2)).unwrap(),
    ];
    let crops = vec![
        Crop::FULL,
        Crop {
            top: 0.4,
            left: 0.7,
            scale: 0.7,
        },
    ];
    let batch = StepBatch::from_poses(&scene, poses, 4, crops, &Lighting::default()).unwrap();
    let field = StyleField::new(
        FieldConfig {
            width: 8,
            attn_dim: 4,
            fourier_bands: 2,
            ..FieldConfig::default()
        },
        2,
    )
    .unwrap();
    let spec = LossSpec {
        weights: CgcWeights::default(),
        fine_rows: FineRows::Crops,
    };
    let mut pipeline_err = 0.0f64;
    let mut checked = 0;
    for (idx, x) in field.values().iter().enumerate() {
        let coords: Vec<usize> = (0..x.numel()).step_by((x.numel() / 6).max(1)).collect();
        checked += coords.len();
        let r = grad_check_coords(
            |t: &mut Tape, v| {
                let mut vars = field.bind_constant(t);
                vars.vars[idx] = v;
                Ok(step_loss(t, &field, &vars, &scene.words, &scene.global_text, &batch, &provider, &spec)?.total)
            },
            x,
            &coords,
            1e-5,
            1e-3,
        )
        .unwrap();
        pipeline_err = pipeline_err.max(r.max_rel_error);
    }

    let mut module_errs: Vec<(&str, f64)> = Vec::new();
    let mut check = |name: &'static str, f: &dyn Fn(&mut Tape, Var) -> temo_core::Result<Var>, x: &Tensor| {
        let r = grad_check(f, x, 1e-5, 1e-4).unwrap();
        module_errs.push((name, r.max_rel_error));
    };

    let w = random_tensor(&[5, 4], 1, -1.0, 1.0);
    check(
        "autodiff chain",
        &|t, v| {
            let c = t.constant(w.clone());
            let h = t.matmul(v, c)?;
            let h = t.tanh(h);
            let s = t.softmax(h, 1)?;
            let l = t.log(s)?;
            let m = t.mul(l, h)?;
            Ok(t.mean(m))
        },
        &random_tensor(&[3, 5], 2, -1.0, 1.0),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = 6;
    let normals: Vec<f64> = (0..p)
        .flat_map(|_| {
            let mut n = unit(&mut rng);
            n.z = n.z.abs() + 0.3;
            let n = n.normalize();
            [n.x, n.y, n.z]
        })
        .collect();
    let normals = Tensor::new(vec![p, 3], normals).unwrap();
    let eye = Tensor::new(vec![p, 3], (0..p).flat_map(|_| [0.0, 0.0, 1.0]).collect()).unwrap();
    let lights = vec![
        SGLight::new(Vec3::new(0.3, 0.5, 1.0), 8.0, [2.0, 1.5, 1.0]).unwrap(),
        SGLight::new(Vec3::new(-0.6, 0.1, 0.8), 3.0, [0.5, 0.7, 0.9]).unwrap(),
    ];
    let diffuse = random_tensor(&[p, 3], 4, 0.1, 0.9);
    let rough = random_tensor(&[p, 1], 5, 0.25, 0.9);
    let specular = random_tensor(&[p, 3], 6, 0.0, 1.0);
    let (n2, e2, r2, s2, l2) = (normals.clone(), eye.clone(), rough.clone(), specular.clone(), lights.clone());
    check(
        "shading / albedo",
        &move |t, v| {
            let (n, e, r, s) = (t.constant(n2.clone()), t.constant(e2.clone()), t.constant(r2.clone()), t.constant(s2.clone()));
            let y = shade_tape(t, n, e, v, r, s, &l2)?;
            Ok(t.mean(y))
        },
        &diffuse,
    );
    let (n2, e2, d2, s2, l2) = (normals.clone(), eye.clone(), diffuse.clone(), specular.clone(), lights.clone());
    check(
        "shading / roughness",
        &move |t, v| {
            let (n, e, d, s) = (t.constant(n2.clone()), t.constant(e2.clone()), t.constant(d2.clone()), t.constant(s2.clone()));
            let y = shade_tape(t, n, e, d, v, s, &l2)?;
            Ok(t.mean(y))
        },
        &rough,
    );

    let img = random_tensor(&[16 * 16, 3], 7, 0.0, 1.0);
    let prov = ColorSemanticsProvider::new(2);
    let probe = random_tensor(&[1, 512], 8, -1.0, 1.0);
    let pr = probe.clone();
    check(
        "embedding / pixels",
        &move |t, v| {
            let f = prov.image_features(t, &[v], 16, 16)?;
            let c = t.constant(pr.clone());
            let m = t.mul(f, c)?;
            Ok(t.sum(m))
        },
        &img,
    );
    let crop = Crop {
        top: 1.3,
        left: 2.6,
        scale: 0.65,
    };
    let pr = random_tensor(&[16 * 16, 3], 9, -1.0, 1.0);
    check(
        "augmentation / pixels",
        &move |t, v| {
            let y = t.row_mix(v, Rc::new(crop.mix(16, 16)))?;
            let c = t.constant(pr.clone());
            let m = t.mul(y, c)?;
            Ok(t.sum(m))
        },
        &img,
    );
    let words = random_tensor(&[3, 16], 10, -1.0, 1.0);
    let gt = random_tensor(&[1, 16], 11, -1.0, 1.0);
    check(
        "contrast loss / features",
        &move |t, v| {
            let (w, g) = (t.constant(words.clone()), t.constant(gt.clone()));
            Ok(cgc_objective(t, v, w, g, &CgcWeights::default())?.total)
        },
        &random_tensor(&[4, 16], 12, -1.0, 1.0),
    );
    let dga_words = random_tensor(&[3, 6], 13, -1.0, 1.0);
    let dparams = DgaParams {
        wq: random_tensor(&[5, 4], 14, -0.5, 0.5),
        bq: random_tensor(&[1, 4], 15, -0.5, 0.5),
        wk: random_tensor(&[6, 4], 16, -0.5, 0.5),
        bk: random_tensor(&[1, 4], 17, -0.5, 0.5),
        wv: random_tensor(&[6, 5], 18, -0.5, 0.5),
        bv: random_tensor(&[1, 5], 19, -0.5, 0.5),
    };
    let mask = Rc::new((0..4 * 3).map(|i| (i / 3 + i % 3) % 2 == 0).collect::<Vec<_>>());
    check(
        "graph attention / features",
        &move |t, v| {
            let w = t.constant(dga_words.clone());
            let vars = DgaVars {
                wq: t.constant(dparams.wq.clone()),
                bq: t.constant(dparams.bq.clone()),
                wk: t.constant(dparams.wk.clone()),
                bk: t.constant(dparams.bk.clone()),
                wv: t.constant(dparams.wv.clone()),
                bv: t.constant(dparams.bv.clone()),
            };
            let (out, _) = dga_attend(t, v, w, &vars, mask.clone())?;
            let s = t.sin(out);
            Ok(t.sum(s))
        },
        &random_tensor(&[4, 5], 15, -1.0, 1.0),
    );

    let secs = start.elapsed().as_secs_f64();
    let module_max = module_errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let worst = module_errs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    outcome(
        pipeline_err < 1e-3 && module_max < 1e-4 && secs < 60.0,
        format!(
            "pipeline max rel err {pipeline_err:.2e} over {checked} coords (< 1e-3); module max {module_max:.2e} at {} (< 1e-4); {secs:.1}s (< 60s)",
            worst.0
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. renderer fidelity against hemisphere quadrature

/// 2562 directions (vertices of a 4x subdivided icosahedron) with weights
/// equal to a third of the adjacent spherical triangle areas.
fn sphere_quadrature() -> Vec<(Vec3, f64)> {
    let ico = icosphere(Vec3::zeros(), 1.0, 4);
    let dirs: Vec<Vec3> = ico.vertices.iter().map(|v| v.normalize()).collect();
    let mut w = vec![0.0; dirs.len()];
    for f in &ico.faces {
        let (a, b, c) = (dirs[f[0]], dirs[f[1]], dirs[f[2]]);
        let num = a.dot(&b.cross(&c)).abs();
        let den = 1.0 + a.dot(&b) + b.dot(&c) + c.dot(&a);
        let area = 2.0 * num.atan2(den);
        for &i in f {
            w[i] += area / 3.0;
        }
    }
    dirs.into_iter().zip(w).collect()
}

fn quadrature_radiance(q: &[(Vec3, f64)], inp: &ShadingInputs, lights: &[SGLight]) -> [f64; 3] {
    let n = inp.normal;
    let m2 = inp.roughness * inp.roughness;
    let ndv = n.dot(&inp.to_eye).max(1e-4);
    let lobe_sharp = 1.0 / (2.0 * m2 * ndv);
    let lobe_axis = n * (2.0 * n.dot(&inp.to_eye)) - inp.to_eye;
    let mut out = [0.0; 3];
    for (w, dw) in q {
        let cos = w.dot(&n);
        if cos <= 0.0 {
            continue;
        }
        let spec = 0.25 / (PI * m2) * (lobe_sharp * (w.dot(&lobe_axis) - 1.0)).exp();
        for l in lights {
            let li = (l.sharpness * (w.dot(&l.axis()) - 1.0)).exp();
            for k in 0..3 {
                let f = inp.diffuse[k] / PI + inp.specular[k] * spec;
                out[k] += dw * l.amplitude[k] * li * f * cos;
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let q = sphere_quadrature();
    let total_w: f64 = q.iter().map(|x| x.1).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_d, mut worst_s) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = unit(&mut rng);
        let to_eye = loop {
            let v = unit(&mut rng);
            if v.dot(&n) > 0.2 {
                break v;
            }
        };
        let count = rng.gen_range(1..=3);
        let lights: Vec<SGLight> = (0..count)
            .map(|_| {
                let axis = loop {
                    let v = unit(&mut rng);
                    if v.dot(&n) > 0.2 {
                        break v;
                    }
                };
                let amp = [rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0)];
                SGLight::new(axis, rng.gen_range(1.0..30.0), amp).unwrap()
            })
            .collect();
        let albedo = [rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)];
        let mut inp = ShadingInputs {
            normal: n,
            to_eye,
            diffuse: albedo,
            roughness: 0.5,
            specular: [0.0; 3],
        };
        let a = shade_pixel(&inp, &lights).unwrap();
        let b = quadrature_radiance(&q, &inp, &lights);
        for k in 0..3 {
            worst_d = worst_d.max((a[k] - b[k]).abs() / b[k]);
        }
        inp.diffuse = [0.0; 3];
        inp.specular = [rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)];
        inp.roughness = rng.gen_range(0.2..1.0);
        let a = shade_pixel(&inp, &lights).unwrap();
        let b = quadrature_radiance(&q, &inp, &lights);
        for k in 0..3 {
            worst_s = worst_s.max((a[k] - b[k]).abs() / b[k]);
        }
    }
    outcome(
        worst_d < 0.02 && worst_s < 0.05 && q.len() == 2562 && start.elapsed().as_secs() < 60,
        format!(
            "{} directions (weights sum {:.6} vs 4pi); worst diffuse rel err {:.3}% (< 2%), specular {:.3}% (< 5%), 100 configs, {:.1}s",
            q.len(),
            total_w,
            worst_d * 100.0,
            worst_s * 100.0,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. parsing against the golden corpus

#[derive(serde::Deserialize)]
struct GoldenPhrase {
    adjectives: Vec<String>,
    noun: String,
    span: (usize, usize),
}

#[derive(serde::Deserialize)]
struct GoldenPrompt {
    prompt: String,
    phrases: Vec<GoldenPhrase>,
}

fn criterion_3() -> Outcome {
    let golden: Vec<GoldenPrompt> = serde_json::from_str(include_str!("data/phrases_golden.json")).unwrap();
    let mut bad = Vec::new();
    for g in &golden {
        let got = extract_noun_phrases(&g.prompt).unwrap();
        let same = got.len() == g.phrases.len()
            && got.iter().zip(&g.phrases).enumerate().all(|(i, (p, w))| {
                p.phrase_id == i && p.adjectives == w.adjectives && p.head_noun == w.noun && p.span == w.span
            });
        if !same {
            bad.push(g.prompt.clone());
        }
    }
    outcome(
        bad.is_empty() && golden.len() == 20,
        format!("{}/{} prompts match exactly{}", golden.len() - bad.len(), golden.len(), if bad.is_empty() { String::new() } else { format!("; mismatches: {bad:?}") }),
    )
}

// ---------------------------------------------------------------------------
// 4. clustering

fn criterion_4() -> Outcome {
    let mut worst_acc = 1.0f64;
    let mut worst_drop = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut pts = Vec::new();
        for cx in [-5.0, 5.0] {
            for _ in 0..100 {
                pts.push(Vec3::new(cx + noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)));
            }
        }
        let model = gmm_fit(&pts, 2, seed).unwrap();
        let labels = temo_core::sceneparse::assign_clusters(&model, &pts);
        // nearest-centroid oracle against the generating centers
        let oracle: Vec<usize> = pts.iter().map(|p| usize::from(p.x > 0.0)).collect();
        let direct = labels.iter().zip(&oracle).filter(|(a, b)| a == b).count();
        let flipped = labels.iter().zip(&oracle).filter(|(a, b)| **a != **b).count();
        worst_acc = worst_acc.min(direct.max(flipped) as f64 / pts.len() as f64);
        for w in model.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    outcome(
        worst_acc == 1.0 && worst_drop <= 1e-9,
        format!("worst partition agreement {:.1}% over 10 seeds; largest log-likelihood decrease {worst_drop:.1e}", worst_acc * 100.0),
    )
}

// ---------------------------------------------------------------------------
// 5. graph structure and isolation

fn three_objects() -> Mesh {
    Mesh::merge(&[
        icosphere(Vec3::new(-0.65, 0.0, 0.0), 0.3, 2),
        icosphere(Vec3::new(0.0, 0.2, 0.0), 0.3, 2),
        icosphere(Vec3::new(0.65, -0.1, 0.1), 0.3, 2),
    ])
    .unwrap()
}

fn criterion_5() -> Outcome {
    let provider = ColorSemanticsProvider::new(5);
    let scenes: Vec<(Mesh, &str)> = vec![
        (two_spheres(2), "a red sphere and a blue sphere"),
        (three_objects(), "a red ball, a green cube and a blue cone"),
        (icosphere(Vec3::zeros(), 0.8, 2), "a wood vase on a table"),
        (two_spheres(2), "a fire dragon and an ice dragon"),
    ];
    let field = StyleField::new(
        FieldConfig {
            width: 16,
            attn_dim: 8,
            fourier_bands: 2,
            dga: DgaMode::Graph,
            ..FieldConfig::default()
        },
        9,
    )
    .unwrap();
    let cfg = TrainConfig {
        views_per_iter: 2,
        resolution: 24,
        ..TrainConfig::default()
    };
    let mut problems = Vec::new();
    let mut edges_checked = 0usize;
    for (si, (mesh, prompt)) in scenes.into_iter().enumerate() {
        let scene = Scene::prepare(
            mesh,
            prompt,
            &provider,
            &SetupSpec {
                views: 6,
                resolution: 32,
                radius: 2.5,
                elevation_deg: 20.0,
                seed: si as u64,
            },
        )
        .unwrap();
        let batch = StepBatch::sample(&scene, &cfg, si, &Lighting::default()).unwrap();
        let pts = batch.points.point_list();
        let (assign, graph) = scene.graph_for(&pts).unwrap();
        let m = scene.tokens.len();
        // oracle edge set from the rule, checked over every pair
        let edges: BTreeSet<(usize, usize)> = graph.edges.iter().copied().collect();
        if edges.len() != graph.edges.len() {
            problems.push(format!("{prompt}: duplicate edges"));
        }
        let mut want = 0usize;
        for (i, &c) in assign.cluster_of_point.iter().enumerate() {
            let ph = &scene.phrases[scene.phrase_of_cluster[c]];
            for j in 0..m {
                let rule = j >= ph.span.0 && j <= ph.span.1;
                want += usize::from(rule);
                if rule != edges.contains(&(i, j)) {
                    problems.push(format!("{prompt}: edge ({i},{j}) violates the rule"));
                }
            }
        }
        if want != edges.len() || edges.iter().any(|&(i, j)| i >= pts.len() || j >= m) {
            problems.push(format!("{prompt}: edge count or node ranges wrong"));
        }
        edges_checked += pts.len() * m;

        // isolation: perturb each phrase's word rows in turn
        let run = |words: &Tensor| {
            let mut t = Tape::new();
            let vars = field.bind_constant(&mut t);
            let w = t.constant(words.clone());
            let out = field
                .forward(
                    &mut t,
                    &vars,
                    &FieldInputs {
                        points: &batch.points.points,
                        normals: &batch.points.normals,
                        view_dirs: &batch.points.view_dirs,
                        words: w,
                        graph: &graph,
                    },
                )
                .unwrap();
            [out.normal, out.diffuse, out.roughness, out.specular].map(|v| t.value(v).clone())
        };
        let base = run(&scene.words);
        for (pi, ph) in scene.phrases.iter().enumerate() {
            let mut w = scene.words.clone();
            let d = w.shape()[1];
            let mut rng = ChaCha8Rng::seed_from_u64(77 + pi as u64);
            for j in ph.word_indices() {
                for k in 0..d {
                    w.data_mut()[j * d + k] += rng.gen_range(-0.5..0.5);
                }
            }
            let pert = run(&w);
            let cluster = scene.phrase_of_cluster.iter().position(|&p| p == pi).unwrap();
            let mut changed_in = 0;
            let mut count_in = 0;
            for (i, &c) in assign.cluster_of_point.iter().enumerate() {
                let same = base.iter().zip(&pert).all(|(a, b)| {
                    let width = a.shape()[1];
                    a.row(i).iter().zip(b.row(i)).all(|(x, y)| x.to_bits() == y.to_bits()) && width > 0
                });
                if c == cluster {
                    count_in += 1;
                    changed_in += usize::from(!same);
                } else if !same {
                    problems.push(format!("{prompt}: point {i} outside phrase {pi} changed"));
                }
            }
            if changed_in != count_in {
                problems.push(format!("{prompt}: only {changed_in}/{count_in} points of phrase {pi} responded"));
            }
        }
    }
    problems.dedup();
    outcome(
        problems.is_empty(),
        format!(
            "4 scenes, {edges_checked} point-word pairs checked against the edge rule; isolation exact{}",
            if problems.is_empty() { String::new() } else { format!("; {} problems, first: {}", problems.len(), problems[0]) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. loss identities and schedule

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let s = rng.gen_range(-1.0..1.0);
        let (n, m) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let v = fine_from_map(&Tensor::full(vec![n, m], s)).unwrap();
        worst = worst.max((v + s).abs());
    }
    let single = fine_from_map(&Tensor::full(vec![1, 1], 0.42)).unwrap();
    let w = CgcWeights::default();
    let mut t = Tape::new();
    let (c, f) = (t.scalar(-1.0), t.scalar(-1.0));
    let l = cgc_loss(&mut t, c, f, &w).unwrap();
    let combined = t.value(l).item();
    let cfg = TrainConfig::default();
    let lrs = [lr_at(0, &cfg), lr_at(500, &cfg), lr_at(1000, &cfg)];
    let lr_ok = (lrs[0] - 5e-4).abs() < 1e-15 && (lrs[1] - 3.5e-4).abs() < 1e-15 && (lrs[2] - 2.45e-4).abs() < 1e-15;
    outcome(
        worst < 1e-12 && (single + 0.42).abs() < 1e-15 && w.lambda_c == 1.0 && w.lambda_f == 0.33 && (combined + 1.33).abs() < 1e-15 && lr_ok,
        format!(
            "constant-map worst |fine + s| {worst:.1e}; 1x1 map {single}; weights ({}, {}), cgc(-1,-1) = {combined}; lr {:e}/{:e}/{:e}",
            w.lambda_c, w.lambda_f, lrs[0], lrs[1], lrs[2]
        ),
    )
}

// ---------------------------------------------------------------------------
// 7-9. toy stylization runs

const TOY_PROMPT: &str = "a red sphere and a blue sphere";
const SEEDS: [u64; 3] = [0, 1, 2];

fn toy_config(seed: u64, dga: DgaMode, lambda_f: f64) -> TrainConfig {
    TrainConfig {
        iterations: 600,
        resolution: 64,
        seed,
        lambda_f,
        field: FieldConfig {
            width: 64,
            attn_dim: 64,
            dga,
            ..FieldConfig::default()
        },
        ..TrainConfig::default()
    }
}

struct ToyRun {
    csv: String,
    report: EvalReport,
}

impl ToyRun {
    /// Distances to the red and blue targets, in that order.
    fn distances(&self) -> [f64; 2] {
        let d = |w: &str| {
            self.report
                .objects
                .iter()
                .find(|o| o.target_word.as_deref() == Some(w))
                .and_then(|o| o.distance)
                .unwrap_or(f64::NAN)
        };
        [d("red"), d("blue")]
    }
}

fn toy_run(seed: u64, dga: DgaMode, lambda_f: f64) -> ToyRun {
    let start = Instant::now();
    let provider = ColorSemanticsProvider::new(0);
    let scene = Scene::prepare(
        two_spheres(3),
        TOY_PROMPT,
        &provider,
        &SetupSpec {
            views: 8,
            resolution: 64,
            radius: 2.5,
            elevation_deg: 20.0,
            seed,
        },
    )
    .unwrap();
    let cfg = toy_config(seed, dga, lambda_f);
    let out = train(&scene, &cfg, &provider, &Lighting::default(), None).unwrap();
    let (report, _) = evaluate(&out.state.field, &scene, &provider, &Lighting::default(), &EvalSpec::default()).unwrap();
    let run = ToyRun {
        csv: metrics_csv(&out.metrics),
        report,
    };
    let d = run.distances();
    eprintln!(
        "  toy run seed {seed} dga {dga:?} lambda_f {lambda_f}: red {:.4} blue {:.4} word sim {:.4} ({:.0}s)",
        d[0],
        d[1],
        run.report.word_similarity,
        start.elapsed().as_secs_f64()
    );
    run
}

struct ToyRuns {
    graph: Vec<ToyRun>,
    dense: Vec<ToyRun>,
    coarse: Vec<ToyRun>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_7(runs: &ToyRuns) -> Outcome {
    let g: Vec<[f64; 2]> = runs.graph.iter().map(ToyRun::distances).collect();
    let d: Vec<[f64; 2]> = runs.dense.iter().map(ToyRun::distances).collect();
    let absolute = g.iter().all(|x| x[0] < 0.15 && x[1] < 0.15);
    let gm = [mean(g.iter().map(|x| x[0])), mean(g.iter().map(|x| x[1]))];
    let dm = [mean(d.iter().map(|x| x[0])), mean(d.iter().map(|x| x[1]))];
    let comparative = dm[0] > gm[0] || dm[1] > gm[1];
    outcome(
        absolute && comparative,
        format!(
            "graph attention mean distance red {:.4} blue {:.4} (need < 0.15 each, per seed: {}); dense attention red {:.4} blue {:.4} (at least one above graph: {})",
            gm[0],
            gm[1],
            if absolute { "met" } else { "not met" },
            dm[0],
            dm[1],
            if comparative { "yes" } else { "no" }
        ),
    )
}

fn criterion_8(runs: &ToyRuns) -> Outcome {
    let full = mean(runs.graph.iter().map(|r| r.report.word_similarity));
    let coarse = mean(runs.coarse.iter().map(|r| r.report.word_similarity));
    outcome(
        coarse <= full,
        format!("word-level similarity: coarse only {coarse:.4}, full contrast {full:.4} (mean of 3 seeds)"),
    )
}

fn criterion_9(runs: &ToyRuns) -> Outcome {
    let again = toy_run(SEEDS[0], DgaMode::Graph, 0.33);
    let same = again.csv == runs.graph[0].csv;
    outcome(
        same && again.csv.lines().count() == 601,
        format!("{} metric rows, byte-identical: {same}", again.csv.lines().count() - 1),
    )
}

// ---------------------------------------------------------------------------
// 10. raycaster against brute force

fn brute_force(mesh: &Mesh, origin: &Vec3, dir: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (f, tri) in mesh.faces.iter().enumerate() {
        let (a, b, c) = (mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-8 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let t = e2.dot(&q) * inv;
        if t > 1e-8 && best.is_none_or(|(_, bt)| t < bt) {
            best = Some((f, t));
        }
    }
    best
}

fn soup(seed: u64, n: usize) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::new();
    let mut f = Vec::new();
    for i in 0..n {
        let c = unit(&mut rng) * rng.gen_range(0.0..0.7);
        for _ in 0..3 {
            v.push(c + unit(&mut rng) * 0.25);
        }
        f.push([3 * i, 3 * i + 1, 3 * i + 2]);
    }
    Mesh::new(v, f).unwrap()
}

fn terrain(n: usize) -> Mesh {
    let mut v = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let (x, z) = (i as f64 / n as f64 * 1.6 - 0.8, j as f64 / n as f64 * 1.6 - 0.8);
            v.push(Vec3::new(x, 0.2 * (3.0 * x).sin() * (2.0 * z).cos(), z));
        }
    }
    let mut f = Vec::new();
    let id = |i: usize, j: usize| i * (n + 1) + j;
    for i in 0..n {
        for j in 0..n {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(v, f).unwrap()
}

fn criterion_10() -> Outcome {
    let meshes = [
        ("icosphere", icosphere(Vec3::zeros(), 0.9, 2)),
        ("two spheres", two_spheres(2)),
        ("quad", unit_quad()),
        ("triangle soup", soup(10, 400)),
        ("terrain", terrain(20)),
    ];
    let poses = [
        Vec3::new(0.0, 0.0, 2.5),
        Vec3::new(1.7, 1.2, 1.1),
        Vec3::new(-0.4, 2.3, -0.9),
    ];
    let mut mismatches = 0usize;
    let mut max_dt = 0.0f64;
    let mut pixels = 0usize;
    let mut hits = 0usize;
    for (_, mesh) in &meshes {
        assert!(mesh.num_faces() <= 1000);
        for p in &poses {
            let pose = CameraPose::looking_at_origin(*p).unwrap();
            let (buf, map) = render_geometry_pass(mesh, &pose, (48, 48));
            for (i, h) in buf.hits.iter().enumerate() {
                pixels += 1;
                let oracle = brute_force(mesh, &buf.origin, &buf.view_dirs[i]);
                match (h, oracle) {
                    (None, None) => {}
                    (Some(h), Some((f, t))) if h.face_id == f => {
                        hits += 1;
                        max_dt = max_dt.max((h.t - t).abs());
                        if h.t != t {
                            mismatches += 1;
                        }
                    }
                    _ => mismatches += 1,
                }
                if map.data[i] != h.is_some() {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("5 meshes x 3 views, {pixels} pixels ({hits} hits): {mismatches} mismatches in hit, face or distance (max |dt| {max_dt:.1e})"),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);

    let names = [
        "gradient integrity",
        "renderer fidelity",
        "parsing correctness",
        "clustering",
        "graph structure",
        "loss identities",
        "end-to-end toy stylization",
        "contrast ablation",
        "determinism",
        "oracle equivalence",
    ];
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let s = Instant::now();
        let o = f();
        (o, s.elapsed().as_secs_f64())
    };
    for (n, f) in [
        (1u32, criterion_1 as fn() -> Outcome),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (10, criterion_10),
    ] {
        if want(n) {
            let (o, s) = timed(&f);
            results.push((n, o, s));
        }
    }
    if want(7) || want(8) || want(9) {
        let s = Instant::now();
        let runs = ToyRuns {
            graph: SEEDS.iter().map(|&s| toy_run(s, DgaMode::Graph, 0.33)).collect(),
            dense: if want(7) { SEEDS.iter().map(|&s| toy_run(s, DgaMode::Dense, 0.33)).collect() } else { Vec::new() },
            coarse: if want(8) { SEEDS.iter().map(|&s| toy_run(s, DgaMode::Graph, 0.0)).collect() } else { Vec::new() },
        };
        let shared = s.elapsed().as_secs_f64();
        if want(7) {
            results.push((7, criterion_7(&runs), shared));
        }
        if want(8) {
            results.push((8, criterion_8(&runs), shared));
        }
        if want(9) {
            let (o, s) = timed(&|| criterion_9(&runs));
            results.push((9, o, s));
        }
    }
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    println!();
    for (n, o, secs) in &results {
        println!(
            "criterion {n:>2} {:<28} {} [{secs:.1}s] {}",
            names[*n as usize - 1],
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
