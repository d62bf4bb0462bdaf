//! `socialnav` — dataset generation, rollouts, benchmarking, training,
//! and replay verification over the simulation library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use socialnav::commands::{
    cmd_eval, cmd_gen, cmd_replay, cmd_run, cmd_train, CmdError,
};
use socialnav::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "socialnav", version, about = "2D social-navigation laboratory")]
struct Cli {
    /// Configuration file (.toml or .json). Omitted: built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scene and episode JSON files.
    Gen {
        /// Number of scenes.
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        /// Episodes per scene.
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: the configured bench.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll one episode under one controller and write a JSONL trace.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        episode: PathBuf,
        /// astar | orca | precog | policy
        #[arg(long, default_value = "orca")]
        controller: String,
        /// Checkpoint file; required by the policy controller.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the episode's crowd seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trace file to write (default: <out_dir>/trace.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark controllers over an episode set (paired seeds).
    Eval {
        /// Scene files or directories of them.
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        /// Episode files or directories of them.
        #[arg(long, num_args = 1.., required = true)]
        episodes: Vec<PathBuf>,
        /// Repeatable: astar | orca | precog | policy
        #[arg(long = "controller", required = true)]
        controllers: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the configured bench seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the recurrent policy with its auxiliary heads.
    Train {
        /// Scene files or directories; omitted: four generated scenes.
        #[arg(long, num_args = 0..)]
        scenes: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment steps to train for.
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        /// Save a checkpoint every N updates (0: only the final one).
        #[arg(long, default_value_t = 10)]
        checkpoint_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a trace and verify it byte for byte.
    Replay {
        trace: PathBuf,
        /// Checkpoint file, when the trace was recorded by `policy`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also export the per-step table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Expand directories into their sorted *.json members.
fn expand_json(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CmdError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut members: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CmdError::Validation(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            members.sort();
            out.extend(members);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CmdError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            ConfigError::UnknownFormat { .. } => CmdError::Usage(e.to_string()),
            other => CmdError::Validation(other.to_string()),
        }),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn real_main(cli: Cli) -> Result<(), CmdError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Cmd::Gen { scenes, episodes, seed, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.bench.out_dir));
            let summary = cmd_gen(&cfg, scenes, episodes, seed, &out)?;
            println!(
                "wrote {} scenes and {} episodes under {}",
                summary.scene_paths.len(),
                summary.episode_paths.len(),
                out.display()
            );
        }
        Cmd::Run { scene, episode, controller, checkpoint, seed, out } => {
            let out = out
                .unwrap_or_else(|| Path::new(&cfg.bench.out_dir).join("trace.jsonl"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| {
                    CmdError::Runtime(format!("cannot create {}: {e}", dir.display()))
                })?;
            }
            let summary =
                cmd_run(&cfg, &scene, &episode, &controller, checkpoint.as_deref(), seed, &out)?;
            println!(
                "{}: {} in {} steps",
                summary.trace_path.display(),
                if summary.success { "success" } else { "failure" },
                summary.steps
            );
        }
        Cmd::Eval { scenes, episodes, controllers, checkpoint, seeds, jobs, out } => {
            if let Some(seeds) = seeds {
                cfg.bench.seeds = seeds;
            }
            cfg.validate().map_err(|e| CmdError::Validation(e.to_string()))?;
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.bench.out_dir));
            let summary = cmd_eval(
                &cfg,
                &expand_json(&scenes)?,
                &expand_json(&episodes)?,
                &controllers,
                checkpoint.as_deref(),
                jobs.unwrap_or_else(default_jobs),
                &out,
            )?;
            println!("method      suc          spl          stl          psc          hcoll");
            for m in &summary.report.methods {
                let a = &m.aggregate;
                println!(
                    "{:<10}{}",
                    m.method,
                    [a.suc, a.spl, a.stl, a.psc, a.hcoll]
                        .iter()
                        .map(|s| format!("  {:>5.2}±{:<5.2}", s.mean, s.std))
                        .collect::<String>()
                );
            }
            println!("reports: {} {}", summary.csv_path.display(), summary.json_path.display());
        }
        Cmd::Train { scenes, seed, steps, checkpoint_every, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.bench.out_dir));
            let summary = cmd_train(
                &cfg,
                &expand_json(&scenes)?,
                seed,
                steps,
                checkpoint_every,
                &out,
            )?;
            if let Some(reason) = &summary.aborted {
                eprintln!(
                    "training aborted after {} steps: {reason}; diagnostic state in {}",
                    summary.env_steps,
                    summary.checkpoint_path.display()
                );
                return Err(CmdError::Runtime(format!("training aborted: {reason}")));
            }
            println!(
                "trained {} steps over {} updates (final success rate {:.2}); checkpoint {}",
                summary.env_steps,
                summary.updates,
                summary.final_success_rate,
                summary.checkpoint_path.display()
            );
        }
        Cmd::Replay { trace, checkpoint, csv } => {
            let summary = cmd_replay(&cfg, &trace, checkpoint.as_deref(), csv.as_deref())?;
            println!("bit-identical ({} steps)", summary.steps);
            if let Some(p) = summary.csv_path {
                println!("csv: {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes exit 1; --help/--version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
