use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use temo_core::geometry::normalize_unit_sphere;
use temo_core::stylefield::{load_field, CHECKPOINT_FORMAT};
use temo_core::trainer::{evaluate, train_from, EvalReport, Lighting, Scene, TrainState, STATE_FORMAT};
use temo_core::{load_mesh, EmbeddingProvider, Error, StyleField};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// Files written by a command, checked before it reports success.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    fn add(&mut self, p: PathBuf) {
        self.files.push(p);
    }

    fn verify(self) -> CliResult<Self> {
        for f in &self.files {
            match fs::metadata(f) {
                Ok(m) if m.len() > 0 => {}
                _ => return Err(CliError::MissingArtifact(f.clone())),
            }
        }
        Ok(self)
    }
}

fn mkdir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write(p: &Path, text: &str) -> CliResult<()> {
    fs::write(p, text).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> CliResult<()> {
    write(p, &serde_json::to_string_pretty(v).map_err(Error::from)?)
}

/// Creates the run directory and stores the resolved config in it.
fn start_run(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    cfg.validate()?;
    mkdir(&cfg.output_dir)?;
    let p = cfg.output_dir.join(RESOLVED_CONFIG);
    write(&p, &cfg.to_toml())?;
    art.add(p);
    Ok(())
}

fn prepare(cfg: &RunConfig) -> CliResult<(Scene, Box<dyn EmbeddingProvider>)> {
    let mut mesh = load_mesh(&cfg.mesh)?;
    if cfg.normalize_mesh {
        mesh = normalize_unit_sphere(&mesh)?;
    }
    let provider = cfg.provider.build()?;
    let scene = Scene::prepare(mesh, &cfg.prompt, provider.as_ref(), &cfg.setup_spec())?;
    Ok((scene, provider))
}

/// Phrases, clusters, matching, per-object masks and the point/word graph
/// of the setup orbit.
pub fn cmd_parse(cfg: &RunConfig) -> CliResult<Artifacts> {
    let mut art = Artifacts::default();
    start_run(cfg, &mut art)?;
    let (scene, _) = prepare(cfg)?;
    let dir = cfg.output_dir.join("parse");
    let masks = dir.join("masks");
    mkdir(&masks)?;
    let p = dir.join("parse.json");
    write_json(&p, &scene.report())?;
    art.add(p);
    for (v, buf) in scene.setup_buffers.iter().enumerate() {
        let p = masks.join(format!("view_{v:02}_hitmap.png"));
        buf.hitmap().write_png(&p)?;
        art.add(p);
        for (c, m) in scene.object_masks[v].iter().enumerate() {
            let p = masks.join(format!("view_{v:02}_object_{c}.png"));
            m.write_png(&p)?;
            art.add(p);
        }
    }
    let points: Vec<_> = scene.setup_buffers.iter().flat_map(|b| b.hit_points()).collect();
    let (assignment, graph) = scene.graph_for(&points)?;
    let p = dir.join("graph.json");
    write_json(
        &p,
        &serde_json::json!({
            "num_points": graph.num_points,
            "num_words": graph.num_words,
            "words": scene.tokens,
            "num_edges": graph.edges.len(),
            "phrase_of_cluster": assignment.phrase_of_cluster,
            "cluster_of_point": assignment.cluster_of_point,
            "edges": graph.edges,
        }),
    )?;
    art.add(p);
    art.verify()
}

fn write_eval(
    field: &StyleField,
    scene: &Scene,
    provider: &dyn EmbeddingProvider,
    cfg: &RunConfig,
    dir: &Path,
    report_name: &str,
    art: &mut Artifacts,
) -> CliResult<EvalReport> {
    mkdir(dir)?;
    let (report, images) = evaluate(field, scene, provider, &Lighting::default(), &cfg.eval_spec())?;
    for (name, img) in &images {
        let p = dir.join(format!("{name}.png"));
        img.write_png(&p)?;
        art.add(p);
    }
    let p = dir.join(report_name);
    write_json(&p, &report)?;
    art.add(p);
    Ok(report)
}

/// Full optimization, then final renders and evaluation. With `resume`,
/// continues from a training state file.
pub fn cmd_stylize(cfg: &RunConfig, resume: Option<&Path>) -> CliResult<Artifacts> {
    let mut art = Artifacts::default();
    start_run(cfg, &mut art)?;
    let (scene, provider) = prepare(cfg)?;
    let out = &cfg.output_dir;
    let state = match resume {
        Some(p) => TrainState::load(p)?,
        None => {
            let s = TrainState::fresh(&cfg.train)?;
            write_eval(&s.field, &scene, provider.as_ref(), cfg, &out.join("baseline"), "eval.json", &mut art)?;
            s
        }
    };
    let result = train_from(&scene, &cfg.train, provider.as_ref(), &Lighting::default(), state, Some(out))?;
    art.add(out.join("metrics.csv"));
    art.add(out.join("field.json"));
    art.files.extend(result.checkpoints);
    write_eval(&result.state.field, &scene, provider.as_ref(), cfg, &out.join("renders"), "eval.json", &mut art)?;
    art.verify()
}

/// Loads either a bare field or a training state file.
pub fn load_checkpoint(path: &Path) -> CliResult<StyleField> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    match v.get("format").and_then(|f| f.as_str()) {
        Some(STATE_FORMAT) => Ok(TrainState::load(path)?.field),
        Some(CHECKPOINT_FORMAT) => Ok(load_field(path)?),
        _ => Err(Error::MissingKey(format!("format (in {})", path.display())).into()),
    }
}

fn checkpoint_or_default(cfg: &RunConfig, checkpoint: Option<&Path>) -> PathBuf {
    checkpoint.map_or_else(|| cfg.output_dir.join("field.json"), Path::to_path_buf)
}

/// Renders the evaluation orbit of a trained field.
pub fn cmd_render(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<Artifacts> {
    let mut art = Artifacts::default();
    start_run(cfg, &mut art)?;
    let field = load_checkpoint(&checkpoint_or_default(cfg, checkpoint))?;
    let (scene, provider) = prepare(cfg)?;
    write_eval(&field, &scene, provider.as_ref(), cfg, &cfg.output_dir.join("renders"), "eval.json", &mut art)?;
    art.verify()
}

/// Scores a trained field over the evaluation orbit.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<(Artifacts, EvalReport)> {
    let mut art = Artifacts::default();
    start_run(cfg, &mut art)?;
    let field = load_checkpoint(&checkpoint_or_default(cfg, checkpoint))?;
    let (scene, provider) = prepare(cfg)?;
    let report = write_eval(&field, &scene, provider.as_ref(), cfg, &cfg.output_dir.join("eval"), "eval.json", &mut art)?;
    Ok((art.verify()?, report))
}
