use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use temo_core::trainer::{EvalSpec, SetupSpec, TrainConfig};
use temo_core::{ColorSemanticsProvider, EmbeddingProvider, FileProvider};

use crate::error::{CliError, CliResult};

/// Overrides `output_dir` when set.
pub const OUT_DIR_ENV: &str = "TEMO_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    Toy { seed: u64 },
    /// Text features from an embedding manifest; images use the toy
    /// encoder with the manifest's seed.
    File { manifest: PathBuf },
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Toy { seed: 0 }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> CliResult<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderSpec::Toy { seed } => Box::new(ColorSemanticsProvider::new(*seed)),
            ProviderSpec::File { manifest } => Box::new(FileProvider::load(manifest)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    pub resolution: usize,
    pub eval_views: usize,
    pub radius: f64,
    pub elevation_deg: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            resolution: 64,
            eval_views: 8,
            radius: 2.5,
            elevation_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub prompt: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Center the mesh and scale it into the unit sphere on load.
    #[serde(default = "yes")]
    pub normalize_mesh: bool,
    #[serde(default)]
    pub provider: ProviderSpec,
    #[serde(default)]
    pub render: RenderSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn yes() -> bool {
    true
}

fn bad(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Core(temo_core::Error::Config {
        path: path.into(),
        msg: msg.into(),
    })
}

impl RunConfig {
    pub fn from_toml(text: &str, file: &Path) -> CliResult<RunConfig> {
        toml::from_str(text).map_err(|e| CliError::ConfigFile {
            file: file.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Reads a config and makes its relative paths relative to the file.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| temo_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.mesh);
        fix(&mut self.output_dir);
        if let ProviderSpec::File { manifest } = &mut self.provider {
            fix(manifest);
        }
    }

    /// Applies the command-line seed and output directory, then the
    /// environment override when no directory was given on the command line.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        match out {
            Some(o) => self.output_dir = o,
            None => {
                if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
                    self.output_dir = PathBuf::from(env);
                }
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !self.mesh.is_file() {
            return Err(CliError::Core(temo_core::Error::Io {
                path: self.mesh.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "mesh file not found"),
            }));
        }
        if self.prompt.trim().is_empty() {
            return Err(bad("prompt", "must not be empty"));
        }
        if let ProviderSpec::File { manifest } = &self.provider {
            if !manifest.is_file() {
                return Err(CliError::Core(temo_core::Error::Io {
                    path: manifest.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "embedding manifest not found"),
                }));
            }
        }
        if self.render.resolution < 16 {
            return Err(bad("render.resolution", format!("must be >= 16, got {}", self.render.resolution)));
        }
        if self.train.resolution < 16 {
            return Err(bad("train.resolution", format!("must be >= 16, got {}", self.train.resolution)));
        }
        if self.render.eval_views == 0 {
            return Err(bad("render.eval_views", "must be >= 1"));
        }
        if !(self.render.radius > 1.05) {
            return Err(bad("render.radius", "cameras must sit outside the unit sphere"));
        }
        if self.train.iterations == 0 {
            return Err(bad("train.iterations", "must be >= 1"));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn setup_spec(&self) -> SetupSpec {
        SetupSpec {
            views: self.train.setup_views,
            resolution: self.train.resolution,
            radius: self.train.camera_radius,
            elevation_deg: self.train.setup_elevation_deg,
            seed: self.train.seed,
        }
    }

    pub fn eval_spec(&self) -> EvalSpec {
        EvalSpec {
            views: self.render.eval_views,
            resolution: self.render.resolution,
            radius: self.render.radius,
            elevation_deg: self.render.elevation_deg,
        }
    }
}
