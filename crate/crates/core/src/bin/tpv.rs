use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tpv_core::algebra::{apply_tpv, make_tpv_with, negate_tpv, sum_tpvs, MakeOptions};
use tpv_core::experiments::{
    cmd_combine_eval, cmd_cross_init, cmd_fewshot, cmd_similarity, cmd_train, ExperimentManifest,
    Lab, RunRecord,
};
use tpv_core::geometry::SelfPairPolicy;
use tpv_core::store::{
    load_prompt, load_tpv, read_sidecar, read_tensor, save_prompt, save_tpv, Sidecar,
};

#[derive(Parser)]
#[command(
    name = "tpv",
    version,
    about = "Task prompt vectors over tuned soft prompts"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the manifest's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Comma-separated λ values in (0, 1].
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Drop every cosine equal to 1 from aggregates, not only exact self-pairs.
    #[arg(long, global = true, visible_alias = "omit-exact-ones")]
    strict_paper_aggregation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tune one prompt per task and init seed.
    Train,
    /// Apply each task's vector across inits and compare with direct tuning.
    CrossInit,
    /// Cosine similarity of prompts and vectors across tasks and inits.
    Similarity,
    /// Evaluate λ-swept pairwise combinations.
    CombineEval,
    /// Few-shot curves per initialization method.
    Fewshot,
    /// Tensor-level vector arithmetic.
    #[command(subcommand)]
    Tpv(TpvCommand),
    /// Print shape, provenance and norms of a TPV1 file.
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum TpvCommand {
    /// Vector from a pre-tuning prompt and its tuned counterpart.
    Make {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        ft: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Accept a tuned prompt that started from a different init.
        #[arg(long)]
        allow_cross_init: bool,
    },
    /// Base prompt plus λ times a vector.
    Apply {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        tpv: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Sum of two or more vectors.
    Add {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    Negate {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn load_manifest(g: &Global) -> anyhow::Result<ExperimentManifest> {
    let path = g
        .manifest
        .as_ref()
        .context("--manifest is required for this command")?;
    let mut m =
        ExperimentManifest::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = &g.out {
        m.output_dir = out.clone();
    }
    if let Some(seed) = g.seed {
        m.seed = seed;
    }
    if let Some(grid) = &g.lambda_grid {
        m.lambda_grid = grid.clone();
    }
    if g.strict_paper_aggregation {
        m.aggregation = SelfPairPolicy::OmitExactOnes;
    }
    m.validate()?;
    Ok(m)
}

fn report(record: &RunRecord) -> anyhow::Result<()> {
    println!(
        "{}: {} cells, {} failed, {:.2}s",
        record.command,
        record.cells.len(),
        record.failures(),
        record.elapsed_secs
    );
    for c in record.cells.iter().filter(|c| !c.ok) {
        eprintln!("  {}: {}", c.id, c.error.as_deref().unwrap_or(""));
    }
    for o in &record.outputs {
        println!("  wrote {}", o.display());
    }
    if record.failures() > 0 {
        bail!(
            "{} of {} cells failed",
            record.failures(),
            record.cells.len()
        );
    }
    Ok(())
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

fn inspect(path: &Path) -> anyhow::Result<()> {
    let (shape, data) = read_tensor(path)?;
    let sidecar = read_sidecar(path).ok();
    let kind = match &sidecar {
        Some(Sidecar::SoftPrompt { .. }) => "soft_prompt",
        Some(Sidecar::TaskPromptVector { .. }) => "task_prompt_vector",
        None => "tensor",
    };
    let out = json!({
        "path": path,
        "kind": kind,
        "prompt_len": shape.prompt_len,
        "embed_dim": shape.embed_dim,
        "l2_norm": norm(&data),
        "max_abs": data.iter().fold(0.0f32, |m, x| m.max(x.abs())),
        "sidecar": sidecar,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run_tpv(cmd: TpvCommand) -> anyhow::Result<()> {
    match cmd {
        TpvCommand::Make {
            pre,
            ft,
            output,
            allow_cross_init,
        } => {
            let v = make_tpv_with(
                &load_prompt(&pre)?,
                &load_prompt(&ft)?,
                MakeOptions { allow_cross_init },
            )?;
            save_tpv(&v, &output)?;
        }
        TpvCommand::Apply {
            base,
            tpv,
            lambda,
            output,
        } => {
            let p = apply_tpv(&load_prompt(&base)?, &load_tpv(&tpv)?, lambda)?;
            save_prompt(&p, &output)?;
        }
        TpvCommand::Add { inputs, output } => {
            let vs = inputs
                .iter()
                .map(|p| load_tpv(p))
                .collect::<Result<Vec<_>, _>>()?;
            save_tpv(&sum_tpvs(&vs)?, &output)?;
        }
        TpvCommand::Negate { input, output } => {
            save_tpv(&negate_tpv(&load_tpv(&input)?), &output)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let lab =
        || -> anyhow::Result<Lab> { Ok(Lab::new(load_manifest(&cli.global)?, cli.global.jobs)?) };
    match cli.command {
        Command::Train => report(&cmd_train(&lab()?)?),
        Command::CrossInit => {
            let out = cmd_cross_init(&lab()?)?;
            for s in &out.summaries {
                println!(
                    "{}: direct {:.3} ± {:.3}, cross-init {:.3} ± {:.3} {}",
                    s.task,
                    s.direct_mean,
                    s.direct_std,
                    s.cross_mean,
                    s.cross_std,
                    s.marker()
                );
            }
            report(&out.record)
        }
        Command::Similarity => {
            let out = cmd_similarity(&lab()?)?;
            for (name, h) in [("prompts", &out.prompts), ("tpvs", &out.tpvs)] {
                println!(
                    "{name}: same-task {:.3}, cross-task {:.3}",
                    h.same_task_mean, h.cross_task_mean
                );
            }
            report(&out.record)
        }
        Command::CombineEval => {
            let out = cmd_combine_eval(&lab()?)?;
            for r in &out.rows {
                println!(
                    "{}+{} {} λ={}: relative {:.3} / {:.3}{}",
                    r.task_a,
                    r.task_b,
                    r.init,
                    r.lambda,
                    r.relative_a,
                    r.relative_b,
                    if r.degenerate { " (self pair)" } else { "" }
                );
            }
            report(&out.record)
        }
        Command::Fewshot => report(&cmd_fewshot(&lab()?)?.record),
        Command::Tpv(cmd) => run_tpv(cmd),
        Command::Inspect { path } => inspect(&path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
