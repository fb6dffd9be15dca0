use super::*;
use crate::autodiff::{grad_check_coords, Tape};
use crate::embed::{ColorSemanticsProvider, Crop};
use crate::error::Error;
use crate::geometry::{two_spheres, CameraPose, Vec3};
use crate::stylefield::{DgaMode, FieldConfig};

fn small_cfg() -> TrainConfig {
    TrainConfig {
        iterations: 3,
        views_per_iter: 2,
        crops_per_view: 2,
        resolution: 16,
        setup_views: 4,
        checkpoint_every: 2,
        seed: 5,
        field: FieldConfig {
            width: 16,
            attn_dim: 8,
            fourier_bands: 2,
            ..FieldConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn scene(prompt: &str, provider: &ColorSemanticsProvider) -> crate::Result<Scene> {
    Scene::prepare(
        two_spheres(1),
        prompt,
        provider,
        &SetupSpec {
            views: 4,
            resolution: 24,
            radius: 2.5,
            elevation_deg: 20.0,
            seed: 1,
        },
    )
}

#[test]
fn two_sphere_setup_splits_left_and_right() {
    let p = ColorSemanticsProvider::new(3);
    let s = scene("a red sphere and a blue sphere", &p).unwrap();
    assert_eq!(s.num_objects(), 2);
    let mut xs: Vec<f64> = s.gmm.means.iter().map(|m| m[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert!(xs[0] < -0.3 && xs[1] > 0.3, "{xs:?}");
    let mut sorted = s.phrase_of_cluster.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1]);
    let (a, g) = s.graph_for(&[Vec3::new(-0.5, 0.0, 0.0), Vec3::new(0.6, 0.1, 0.0)]).unwrap();
    assert_ne!(a.cluster_of_point[0], a.cluster_of_point[1]);
    assert_eq!(g.edges.len(), 2 * 2);
    let r = s.report();
    assert_eq!(r.k, 2);
    assert_eq!(r.mesh_components, 2);
}

#[test]
fn one_phrase_on_two_objects_is_a_count_mismatch() {
    let p = ColorSemanticsProvider::new(3);
    match scene("a red sphere", &p) {
        Err(Error::CountMismatch { phrases, clusters }) => assert_eq!((phrases, clusters), (1, 2)),
        other => panic!("{:?}", other.err()),
    }
}

#[test]
fn zero_iterations_return_initial_field() {
    let p = ColorSemanticsProvider::new(3);
    let s = scene("a red sphere and a blue sphere", &p).unwrap();
    let cfg = TrainConfig {
        iterations: 0,
        ..small_cfg()
    };
    let out = train(&s, &cfg, &p, &Lighting::default(), None).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.state.field, TrainState::fresh(&cfg).unwrap().field);
}

#[test]
fn same_seed_same_curve_and_resume_matches() {
    let p = ColorSemanticsProvider::new(3);
    let s = scene("a red sphere and a blue sphere", &p).unwrap();
    let cfg = small_cfg();
    let dir = tempfile::tempdir().unwrap();
    let a = train(&s, &cfg, &p, &Lighting::default(), Some(dir.path())).unwrap();
    let b = train(&s, &cfg, &p, &Lighting::default(), None).unwrap();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
    assert!(a.metrics.iter().all(|r| r.total.is_finite()));
    assert_eq!(a.metrics.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv, metrics_csv(&a.metrics));
    assert_eq!(a.checkpoints, vec![checkpoint_path(dir.path(), 2), checkpoint_path(dir.path(), 3)]);
    assert!(dir.path().join("field.json").exists());

    let mid = TrainState::load(checkpoint_path(dir.path(), 2)).unwrap();
    assert_eq!(mid.iteration, 2);
    assert_eq!(mid.optimizer.step, 2);
    let c = train_from(&s, &cfg, &p, &Lighting::default(), mid, Some(dir.path())).unwrap();
    assert_eq!(c.metrics.len(), 1);
    assert_eq!(c.metrics[0].iter, 2);
    assert_eq!(c.state, a.state);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv, metrics_csv(&a.metrics));

    let other = TrainConfig { seed: 6, ..cfg };
    let d = train(&s, &other, &p, &Lighting::default(), None).unwrap();
    assert_ne!(metrics_csv(&a.metrics), metrics_csv(&d.metrics));
}

#[test]
fn zero_weights_give_exactly_zero_gradients() {
    let p = ColorSemanticsProvider::new(3);
    let s = scene("a red sphere and a blue sphere", &p).unwrap();
    let cfg = TrainConfig {
        lambda_c: 0.0,
        lambda_f: 0.0,
        ..small_cfg()
    };
    let field = TrainState::fresh(&cfg).unwrap().field;
    let (_, g) = loss_and_grads(&s, &cfg, &p, &Lighting::default(), &field, 0).unwrap();
    assert!(g.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    // coarse-only gradients do not depend on the fine term at all
    let coarse = TrainConfig { lambda_c: 1.0, ..cfg.clone() };
    let (_, g1) = loss_and_grads(&s, &coarse, &p, &Lighting::default(), &field, 0).unwrap();
    let scaled = TrainConfig { lambda_c: 2.0, ..cfg };
    let (_, g2) = loss_and_grads(&s, &scaled, &p, &Lighting::default(), &field, 0).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn eval_names_and_targets() {
    let p = ColorSemanticsProvider::new(3);
    let s = scene("a red sphere and a blue sphere", &p).unwrap();
    let cfg = small_cfg();
    let field = TrainState::fresh(&cfg).unwrap().field;
    let spec = EvalSpec {
        resolution: 16,
        ..EvalSpec::default()
    };
    let (r, imgs) = evaluate(&field, &s, &p, &Lighting::default(), &spec).unwrap();
    let names: Vec<_> = imgs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["view_000", "view_045", "view_090", "view_135", "view_180", "view_225", "view_270", "view_315"]
    );
    assert_eq!(r.objects.len(), 2);
    for o in &r.objects {
        assert!(o.points > 0);
        assert!(o.distance.unwrap().is_finite());
    }
    let words: Vec<_> = r.objects.iter().map(|o| o.target_word.clone().unwrap()).collect();
    assert!(words.contains(&"red".to_string()) && words.contains(&"blue".to_string()));
    assert!(r.sentence_similarity.abs() <= 1.0 && r.word_similarity.abs() <= 1.0);
}

#[test]
fn full_pipeline_gradient_on_tiny_instance() {
    let p = ColorSemanticsProvider::new(3);
    let s = Scene::prepare(
        crate::geometry::icosphere(Vec3::zeros(), 0.8, 1),
        "a red ball",
        &p,
        &SetupSpec {
            views: 2,
            resolution: 8,
            radius: 2.5,
            elevation_deg: 10.0,
            seed: 0,
        },
    )
    .unwrap();
    assert_eq!(s.tokens.len(), 3);
    let poses = vec![
        CameraPose::looking_at_origin(Vec3::new(0.0, 0.3, 2.0)).unwrap(),
        CameraPose::looking_at_origin(Vec3::new(1.6, 0.2, -1.2)).unwrap(),
    ];
    let crops = vec![Crop::FULL, Crop { top: 0.4, left: 0.7, scale: 0.7 }];
    let batch = StepBatch::from_poses(&s, poses, 4, crops, &Lighting::default()).unwrap();
    assert_eq!(batch.crops_per_view(), 1);
    let cfg = FieldConfig {
        width: 8,
        attn_dim: 4,
        fourier_bands: 2,
        dga: DgaMode::Graph,
        ..FieldConfig::default()
    };
    let field = crate::stylefield::StyleField::new(cfg, 2).unwrap();
    let spec = LossSpec {
        weights: Default::default(),
        fine_rows: FineRows::Crops,
    };
    for name in ["refl.diffuse.w", "refl.dga.v.b", "normal.l1.w"] {
        let idx = field.names().iter().position(|n| n == name).unwrap();
        let x = field.values()[idx].clone();
        let coords: Vec<usize> = (0..x.numel()).step_by((x.numel() / 12).max(1)).collect();
        let r = grad_check_coords(
            |t: &mut Tape, v| {
                let mut vars = field.bind_constant(t);
                vars.vars[idx] = v;
                Ok(step_loss(t, &field, &vars, &s.words, &s.global_text, &batch, &p, &spec)?.total)
            },
            &x,
            &coords,
            1e-5,
            1e-3,
        )
        .unwrap();
        assert!(r.passed, "{name}: {}", r.max_rel_error);
    }
}
