use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adamw::{adamw_step, AdamWParams, OptimizerState};
use super::config::{lr_at, TrainConfig};
use super::scene::Scene;
use super::step::{step_loss, Lighting, LossSpec, StepBatch};
use crate::autodiff::{Tape, Tensor};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::stylefield::{field_from_json, field_to_json, save_field, NamedTensor, StyleField};

pub const METRICS_HEADER: &str = "iter,lr,coarse,fine,total";
pub const STATE_FORMAT: &str = "temo-train-state";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub iter: usize,
    pub lr: f64,
    pub coarse: f64,
    pub fine: f64,
    pub total: f64,
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{}", self.iter, self.lr, self.coarse, self.fine, self.total)
    }
}

/// Field, optimizer moments and the number of completed iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub iteration: usize,
    pub field: StyleField,
    pub optimizer: OptimizerState,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    iteration: usize,
    step: u64,
    field: serde_json::Value,
    m: Vec<NamedTensor>,
    v: Vec<NamedTensor>,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig) -> Result<TrainState> {
        let field = StyleField::new(cfg.field.clone(), cfg.seed)?;
        let optimizer = OptimizerState::new(field.values());
        Ok(TrainState {
            iteration: 0,
            field,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let moments = |src: &[Vec<f64>]| {
            self.field
                .names()
                .iter()
                .zip(self.field.values())
                .zip(src)
                .map(|((n, p), d)| NamedTensor {
                    name: n.clone(),
                    shape: p.shape().to_vec(),
                    data: d.clone(),
                })
                .collect()
        };
        let file = StateFile {
            format: STATE_FORMAT.into(),
            version: 1,
            iteration: self.iteration,
            step: self.optimizer.step,
            field: field_to_json(&self.field),
            m: moments(&self.optimizer.m),
            v: moments(&self.optimizer.v),
        };
        fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainState> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: StateFile = serde_json::from_str(&text)?;
        if file.format != STATE_FORMAT || file.version != 1 {
            return Err(Error::InvalidArgument(format!(
                "{} is not a training state file",
                path.display()
            )));
        }
        let field = field_from_json(file.field)?;
        let unpack = |src: Vec<NamedTensor>| -> Result<Vec<Vec<f64>>> {
            if src.len() != field.names().len() {
                return Err(Error::shape("TrainState::load", "moment count differs from parameter count"));
            }
            src.into_iter()
                .zip(field.names().iter().zip(field.values()))
                .map(|(nt, (name, p))| {
                    if &nt.name != name || nt.data.len() != p.numel() {
                        return Err(Error::shape("TrainState::load", format!("moment {} vs {name}", nt.name)));
                    }
                    Ok(nt.data)
                })
                .collect()
        };
        let optimizer = OptimizerState {
            step: file.step,
            m: unpack(file.m)?,
            v: unpack(file.v)?,
        };
        Ok(TrainState {
            iteration: file.iteration,
            field,
            optimizer,
        })
    }
}

pub struct TrainOutput {
    pub state: TrainState,
    pub metrics: Vec<MetricRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Loss and parameter gradients of one iteration, without updating.
pub fn loss_and_grads(
    scene: &Scene,
    cfg: &TrainConfig,
    provider: &dyn EmbeddingProvider,
    lighting: &Lighting,
    field: &StyleField,
    iter: usize,
) -> Result<([f64; 3], Vec<Tensor>)> {
    let batch = StepBatch::sample(scene, cfg, iter, lighting)?;
    let mut t = Tape::new();
    let vars = field.bind(&mut t);
    let loss = step_loss(&mut t, field, &vars, &scene.words, &scene.global_text, &batch, provider, &LossSpec::from(cfg))?;
    let vals = [t.value(loss.coarse).item(), t.value(loss.fine).item(), t.value(loss.total).item()];
    if !vals.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLoss(iter));
    }
    t.backward(loss.total)?;
    let grads = vars
        .vars
        .iter()
        .zip(field.values())
        .map(|(v, p)| t.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    Ok((vals, grads))
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("state_{iteration:06}.json"))
}

/// Trains from a fresh field.
pub fn train(
    scene: &Scene,
    cfg: &TrainConfig,
    provider: &dyn EmbeddingProvider,
    lighting: &Lighting,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    train_from(scene, cfg, provider, lighting, TrainState::fresh(cfg)?, out_dir)
}

/// Continues `state` until `cfg.iterations`. With an output directory,
/// appends to `metrics.csv`, writes a training state every
/// `checkpoint_every` iterations and at the end, and saves the final
/// field as `field.json`.
pub fn train_from(
    scene: &Scene,
    cfg: &TrainConfig,
    provider: &dyn EmbeddingProvider,
    lighting: &Lighting,
    mut state: TrainState,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if state.field.config != cfg.field {
        return Err(Error::InvalidArgument("checkpoint field config differs from the run config".into()));
    }
    let hp = AdamWParams {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
        weight_decay: cfg.weight_decay,
    };
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let csv = match out_dir {
        Some(dir) => Some(MetricsFile::open(dir, state.iteration)?),
        None => None,
    };
    while state.iteration < cfg.iterations {
        let iter = state.iteration;
        let lr = lr_at(iter, cfg);
        let ([coarse, fine, total], grads) = loss_and_grads(scene, cfg, provider, lighting, &state.field, iter)?;
        let names = state.field.names().to_vec();
        adamw_step(state.field.values_mut(), &grads, &names, &mut state.optimizer, lr, &hp)?;
        state.iteration += 1;
        let row = MetricRow {
            iter,
            lr,
            coarse,
            fine,
            total,
        };
        if let Some(f) = csv.as_ref() {
            f.push(&row)?;
        }
        metrics.push(row);
        if let Some(dir) = out_dir {
            if state.iteration % cfg.checkpoint_every == 0 || state.iteration == cfg.iterations {
                let p = checkpoint_path(dir, state.iteration);
                state.save(&p)?;
                checkpoints.push(p);
            }
        }
    }
    if let Some(dir) = out_dir {
        save_field(&state.field, dir.join("field.json"))?;
    }
    Ok(TrainOutput {
        state,
        metrics,
        checkpoints,
    })
}

struct MetricsFile {
    path: PathBuf,
}

impl MetricsFile {
    /// Keeps rows of iterations before `resume_at` from an earlier run.
    fn open(dir: &Path, resume_at: usize) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        let mut text = format!("{METRICS_HEADER}\n");
        if resume_at > 0 {
            if let Ok(old) = fs::read_to_string(&path) {
                for line in old.lines().skip(1) {
                    match line.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
                        Some(i) if i < resume_at => {
                            let _ = writeln!(text, "{line}");
                        }
                        _ => {}
                    }
                }
            }
        }
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        Ok(MetricsFile { path })
    }

    fn push(&self, row: &MetricRow) -> Result<()> {
        use std::io::Write;
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{}", row.csv_line()).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}
