use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use temo_cli::{cmd_eval, cmd_parse, cmd_render, cmd_stylize, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "temo", version, about = "Text-driven multi-object mesh stylization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` and the TEMO_OUT_DIR variable.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the prompt, cluster the mesh and match phrases to objects.
    Parse(Common),
    /// Optimize the style field and write checkpoints, metrics and renders.
    Stylize {
        #[command(flatten)]
        common: Common,
        /// Training state file to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Render the evaluation views of a trained field.
    Render {
        #[command(flatten)]
        common: Common,
        /// Field or training state file; defaults to `<out>/field.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a trained field over the evaluation views.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Field or training state file; defaults to `<out>/field.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply_overrides(c.seed, c.out.clone());
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Parse(c) => {
            let art = cmd_parse(&config(&c)?)?;
            println!("parse: wrote {} files", art.files.len());
        }
        Command::Stylize { common, resume } => {
            let cfg = config(&common)?;
            let art = cmd_stylize(&cfg, resume.as_deref())?;
            println!("stylize: wrote {} files to {}", art.files.len(), cfg.output_dir.display());
        }
        Command::Render { common, checkpoint } => {
            let art = cmd_render(&config(&common)?, checkpoint.as_deref())?;
            println!("render: wrote {} files", art.files.len());
        }
        Command::Eval { common, checkpoint } => {
            let (_, r) = cmd_eval(&config(&common)?, checkpoint.as_deref())?;
            println!("{} ({})", r.similarity_note, r.provider);
            println!("sentence similarity {:.4}", r.sentence_similarity);
            println!("word similarity     {:.4}", r.word_similarity);
            for o in &r.objects {
                match o.distance {
                    Some(d) => println!(
                        "object {} \"{}\": mean diffuse {:.3?}, distance to {} {:.4}",
                        o.cluster,
                        o.text,
                        o.mean_diffuse,
                        o.target_word.as_deref().unwrap_or("?"),
                        d
                    ),
                    None => println!("object {} \"{}\": mean diffuse {:.3?}", o.cluster, o.text, o.mean_diffuse),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
