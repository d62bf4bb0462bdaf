//! The five commands behind the CLI binary, as plain library functions:
//! generate datasets, roll one episode to a trace, benchmark methods,
//! train a policy, and verify a trace by re-simulation. Artifacts are
//! written atomically (temp file + rename) and a failing command removes
//! whatever it had already produced.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::bench::{report_csv, report_json, run_benchmark, BenchError, BenchReport, MethodSpec};
use crate::config::RunConfig;
use crate::episode::{run_episode, Controller, Episode};
use crate::gen::{generate_episode, generate_scene};
use crate::learn::{
    load_checkpoint, save_checkpoint, train, Checkpoint, ParamStore, PolicyController, PolicyNet,
};
use crate::planners::{AstarController, OrcaController, PrecogController};
use crate::rng::{indexed_stream, stream};
use crate::scene::Scene;
use crate::traceio::{parse_trace, trace_csv, trace_to_jsonl, TraceHeader, TRACE_VERSION};

/// Command failure, tagged with how the process should exit:
/// 1 usage, 2 validation, 3 runtime.
#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Validation(_) => 2,
            CmdError::Runtime(_) => 3,
        }
    }
}

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

fn validation(msg: impl Into<String>) -> CmdError {
    CmdError::Validation(msg.into())
}

fn runtime(msg: impl Into<String>) -> CmdError {
    CmdError::Runtime(msg.into())
}

/// Temp-file-then-rename; readers never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Files a command has produced so far; dropped ones are deleted when
/// the command fails partway.
#[derive(Default)]
struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
        write_atomic(path, bytes)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        self.created.push(path.to_path_buf());
        Ok(())
    }

    fn discard(&self) {
        for p in &self.created {
            let _ = fs::remove_file(p);
        }
    }
}

fn read_scene(path: &Path, resolution: f64) -> Result<Scene, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read scene {}: {e}", path.display())))?;
    Scene::from_json_str(&text, resolution)
        .map_err(|e| validation(format!("scene {}: {e}", path.display())))
}

fn read_episode(path: &Path) -> Result<Episode, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read episode {}: {e}", path.display())))?;
    Episode::from_json_str(&text)
        .map_err(|e| validation(format!("episode {}: {e}", path.display())))
}

/// Build a controller by name. `policy` needs a checkpoint; a hash
/// mismatch there only warns, since evaluating under tweaked reward or
/// bench settings is legitimate (replay, by contrast, rejects).
pub fn make_controller(
    name: &str,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<Box<dyn Controller>, CmdError> {
    match name {
        "astar" => Ok(Box::new(AstarController::default())),
        "orca" => Ok(Box::new(OrcaController::default())),
        "precog" => Ok(Box::new(PrecogController::new(cfg.precog))),
        "policy" => {
            let path = checkpoint
                .ok_or_else(|| usage("controller `policy` needs --checkpoint <file>"))?;
            let ck = load_checkpoint(path)
                .map_err(|e| validation(format!("checkpoint {}: {e}", path.display())))?;
            if ck.config_hash != cfg.hash() {
                eprintln!(
                    "warning: checkpoint {} was trained under config {}, live config is {}",
                    path.display(),
                    &ck.config_hash[..12.min(ck.config_hash.len())],
                    &cfg.hash()[..12]
                );
            }
            Ok(Box::new(policy_from_checkpoint(&ck, cfg)?))
        }
        other => Err(usage(format!(
            "unknown controller `{other}`; expected astar, orca, precog, or policy"
        ))),
    }
}

fn policy_from_checkpoint(ck: &Checkpoint, cfg: &RunConfig) -> Result<PolicyController, CmdError> {
    let mut store = ParamStore::new();
    let mut init = stream(0, "policy-init");
    let net = PolicyNet::new(&mut store, &mut init, &cfg.learning, &cfg.world);
    ck.apply(&mut store)
        .map_err(|e| validation(format!("checkpoint does not fit the configured network: {e}")))?;
    Ok(PolicyController::new(net, store))
}

#[derive(Debug)]
pub struct GenSummary {
    pub scene_paths: Vec<PathBuf>,
    pub episode_paths: Vec<PathBuf>,
}

/// Generate `n_scenes` scenes and `episodes_per_scene` episodes each,
/// written as JSON under `out_dir/scenes` and `out_dir/episodes`.
/// Fully determined by `seed` — same seed, same bytes.
pub fn cmd_gen(
    cfg: &RunConfig,
    n_scenes: usize,
    episodes_per_scene: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<GenSummary, CmdError> {
    if n_scenes == 0 || episodes_per_scene == 0 {
        return Err(usage("gen needs at least one scene and one episode per scene"));
    }
    let mut outputs = Outputs::default();
    let result = gen_inner(cfg, n_scenes, episodes_per_scene, seed, out_dir, &mut outputs);
    if result.is_err() {
        outputs.discard();
    }
    result
}

fn gen_inner(
    cfg: &RunConfig,
    n_scenes: usize,
    episodes_per_scene: usize,
    seed: u64,
    out_dir: &Path,
    outputs: &mut Outputs,
) -> Result<GenSummary, CmdError> {
    let scene_dir = out_dir.join("scenes");
    let ep_dir = out_dir.join("episodes");
    for d in [&scene_dir, &ep_dir] {
        fs::create_dir_all(d)
            .map_err(|e| runtime(format!("cannot create {}: {e}", d.display())))?;
    }

    let mut summary = GenSummary { scene_paths: vec![], episode_paths: vec![] };
    for i in 0..n_scenes {
        let name = format!("scene-{i:03}");
        let mut srng = indexed_stream(seed, "gen-scene", i as u64);
        let scene_seed = srng.gen::<u64>();
        let scene = generate_scene(&name, scene_seed, &mut srng, cfg.world.r_grid)
            .map_err(|e| validation(format!("scene {name}: {e}")))?;

        let scene_json = serde_json::to_string_pretty(&scene.to_file()).expect("scene serializes");
        let scene_path = scene_dir.join(format!("{name}.json"));
        outputs.write(&scene_path, format!("{scene_json}\n").as_bytes())?;
        summary.scene_paths.push(scene_path);

        for j in 0..episodes_per_scene {
            let index = (i * episodes_per_scene + j) as u64;
            let mut erng = indexed_stream(seed, "gen-episode", index);
            let ep_seed = erng.gen::<u64>();
            let episode = generate_episode(&scene, ep_seed, &mut erng, &cfg.world)
                .map_err(|e| validation(format!("episode {j} of {name}: {e}")))?;
            episode
                .validate(&scene, &cfg.world)
                .map_err(|e| runtime(format!("generated episode violates its contract: {e}")))?;

            let ep_json = serde_json::to_string_pretty(&episode).expect("episode serializes");
            let ep_path = ep_dir.join(format!("{name}-ep-{j:02}.json"));
            outputs.write(&ep_path, format!("{ep_json}\n").as_bytes())?;
            summary.episode_paths.push(ep_path);
        }
    }
    Ok(summary)
}

#[derive(Debug)]
pub struct RunSummary {
    pub trace_path: PathBuf,
    pub success: bool,
    pub steps: usize,
}

/// Roll one episode under one controller and write the trace.
pub fn cmd_run(
    cfg: &RunConfig,
    scene_path: &Path,
    episode_path: &Path,
    controller_name: &str,
    checkpoint: Option<&Path>,
    seed_override: Option<u64>,
    out_path: &Path,
) -> Result<RunSummary, CmdError> {
    let scene = read_scene(scene_path, cfg.world.r_grid)?;
    let mut episode = read_episode(episode_path)?;
    if let Some(seed) = seed_override {
        episode.seed = seed;
    }
    episode
        .validate(&scene, &cfg.world)
        .map_err(|e| validation(format!("episode {}: {e}", episode_path.display())))?;

    let mut controller = make_controller(controller_name, cfg, checkpoint)?;
    let trace =
        run_episode(&scene, &episode, controller.as_mut(), &cfg.rewards, &cfg.world, true);

    let header = TraceHeader {
        version: TRACE_VERSION,
        config_hash: cfg.hash(),
        controller: controller_name.to_string(),
        scene: scene.to_file(),
        episode,
    };
    let text = trace_to_jsonl(&header, &trace);
    let mut outputs = Outputs::default();
    outputs.write(out_path, text.as_bytes())?;
    Ok(RunSummary {
        trace_path: out_path.to_path_buf(),
        success: trace.success(),
        steps: trace.steps(),
    })
}

#[derive(Debug)]
pub struct EvalSummary {
    pub report: BenchReport,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

/// Benchmark the named methods over an episode set, paired across
/// methods and seeds, and write `report.csv` + `report.json`.
pub fn cmd_eval(
    cfg: &RunConfig,
    scene_paths: &[PathBuf],
    episode_paths: &[PathBuf],
    methods: &[String],
    checkpoint: Option<&Path>,
    jobs: usize,
    out_dir: &Path,
) -> Result<EvalSummary, CmdError> {
    if methods.is_empty() {
        return Err(usage("eval needs at least one --controller"));
    }
    if episode_paths.is_empty() {
        return Err(validation("eval needs a non-empty episode list"));
    }
    let mut scenes = Vec::with_capacity(scene_paths.len());
    for p in scene_paths {
        scenes.push(read_scene(p, cfg.world.r_grid)?);
    }
    let mut episodes = Vec::with_capacity(episode_paths.len());
    for p in episode_paths {
        episodes.push(read_episode(p)?);
    }
    if cfg.bench.episodes > 0 {
        episodes.truncate(cfg.bench.episodes);
    }

    let mut specs = Vec::with_capacity(methods.len());
    for name in methods {
        // Surface bad names or checkpoints before any work happens.
        make_controller(name, cfg, checkpoint)?;
        let spec = match name.as_str() {
            "astar" => MethodSpec::new("astar", || Box::new(AstarController::default())),
            "orca" => MethodSpec::new("orca", || Box::new(OrcaController::default())),
            "precog" => {
                let pc = cfg.precog;
                MethodSpec::new("precog", move || Box::new(PrecogController::new(pc)))
            }
            "policy" => {
                let ck = load_checkpoint(checkpoint.expect("validated above"))
                    .expect("validated above");
                let cfg = cfg.clone();
                MethodSpec::new("policy", move || {
                    Box::new(policy_from_checkpoint(&ck, &cfg).expect("validated above"))
                })
            }
            _ => unreachable!("make_controller validated the name"),
        };
        specs.push(spec);
    }

    let report = run_benchmark(
        &specs,
        &scenes,
        &episodes,
        &cfg.bench.seeds,
        &cfg.world,
        &cfg.rewards,
        &cfg.hash(),
        jobs,
    )
    .map_err(|e| match e {
        BenchError::BadTrace { .. } => runtime(e.to_string()),
        other => validation(other.to_string()),
    })?;

    fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("report.csv");
    let json_path = out_dir.join("report.json");
    let mut outputs = Outputs::default();
    let written = outputs
        .write(&csv_path, report_csv(&report).as_bytes())
        .and_then(|_| outputs.write(&json_path, report_json(&report).as_bytes()));
    if let Err(e) = written {
        outputs.discard();
        return Err(e);
    }
    Ok(EvalSummary { report, csv_path, json_path })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub csv_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub env_steps: u64,
    pub updates: usize,
    pub final_success_rate: f64,
    /// Why training stopped early; the checkpoint then holds the state
    /// at abort time for diagnosis.
    pub aborted: Option<String>,
}

/// Train a policy on the given scenes (or, when none are given, on a
/// procedurally generated quartet). Writes `train.csv` row by row,
/// a checkpoint every `checkpoint_every` updates, and `policy.json`
/// at the end — or `diagnostic.json` when the run aborts.
pub fn cmd_train(
    cfg: &RunConfig,
    scene_paths: &[PathBuf],
    seed: u64,
    total_steps: u64,
    checkpoint_every: usize,
    out_dir: &Path,
) -> Result<TrainSummary, CmdError> {
    if total_steps == 0 {
        return Err(usage("train needs --steps > 0"));
    }
    let mut scenes = Vec::new();
    if scene_paths.is_empty() {
        for i in 0..4u64 {
            let mut srng = indexed_stream(seed, "train-scene", i);
            let scene_seed = srng.gen::<u64>();
            let scene =
                generate_scene(&format!("train-{i:03}"), scene_seed, &mut srng, cfg.world.r_grid)
                    .map_err(|e| validation(format!("training scene {i}: {e}")))?;
            scenes.push(scene);
        }
    } else {
        for p in scene_paths {
            scenes.push(read_scene(p, cfg.world.r_grid)?);
        }
    }

    fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("train.csv");
    let mut csv = fs::File::create(&csv_path)
        .map_err(|e| runtime(format!("cannot write {}: {e}", csv_path.display())))?;
    writeln!(csv, "{}", crate::learn::UpdateStats::csv_header())
        .map_err(|e| runtime(format!("training log: {e}")))?;

    let hash = cfg.hash();
    let mut io_err: Option<String> = None;
    let report = train(
        &scenes,
        &cfg.world,
        &cfg.rewards,
        &cfg.learning,
        seed,
        total_steps,
        |row, store| {
            if let Err(e) = writeln!(csv, "{}", row.csv_row()).and_then(|_| csv.flush()) {
                io_err.get_or_insert(format!("training log: {e}"));
            }
            if checkpoint_every > 0 && (row.update + 1) % checkpoint_every == 0 {
                let path = out_dir.join(format!("ckpt-{:09}.json", row.env_steps));
                if let Err(e) = save_checkpoint(&path, store, &hash, row.env_steps) {
                    io_err.get_or_insert(format!("checkpoint {}: {e}", path.display()));
                }
            }
        },
    );
    if let Some(e) = io_err {
        return Err(runtime(e));
    }

    let checkpoint_path =
        out_dir.join(if report.abort.is_some() { "diagnostic.json" } else { "policy.json" });
    save_checkpoint(&checkpoint_path, &report.store, &hash, report.env_steps)
        .map_err(|e| runtime(format!("checkpoint {}: {e}", checkpoint_path.display())))?;

    Ok(TrainSummary {
        csv_path,
        checkpoint_path,
        env_steps: report.env_steps,
        updates: report.stats.len(),
        final_success_rate: report.stats.last().map_or(0.0, |s| s.success_rate),
        aborted: report.abort,
    })
}

#[derive(Debug)]
pub struct ReplaySummary {
    pub steps: usize,
    pub csv_path: Option<PathBuf>,
}

/// Re-simulate a trace from its embedded scene + episode and require the
/// regenerated file to equal the original byte for byte. Optionally
/// exports the per-step table as CSV.
pub fn cmd_replay(
    cfg: &RunConfig,
    trace_path: &Path,
    checkpoint: Option<&Path>,
    csv_out: Option<&Path>,
) -> Result<ReplaySummary, CmdError> {
    let original = fs::read_to_string(trace_path)
        .map_err(|e| validation(format!("cannot read trace {}: {e}", trace_path.display())))?;
    let file = parse_trace(&original)
        .map_err(|e| validation(format!("trace {}: {e}", trace_path.display())))?;

    if file.header.config_hash != cfg.hash() {
        return Err(validation(format!(
            "trace was recorded under config {}, live config is {}",
            file.header.config_hash,
            cfg.hash()
        )));
    }
    let scene = Scene::build(&file.header.scene, cfg.world.r_grid)
        .map_err(|e| validation(format!("embedded scene: {e}")))?;
    file.header
        .episode
        .validate(&scene, &cfg.world)
        .map_err(|e| validation(format!("embedded episode: {e}")))?;

    let mut controller = make_controller(&file.header.controller, cfg, checkpoint)?;
    let trace = run_episode(
        &scene,
        &file.header.episode,
        controller.as_mut(),
        &cfg.rewards,
        &cfg.world,
        true,
    );
    let regenerated = trace_to_jsonl(&file.header, &trace);
    if regenerated != original {
        let diverged = original
            .lines()
            .zip(regenerated.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| original.lines().count().min(regenerated.lines().count()) + 1);
        return Err(runtime(format!(
            "replay diverged from the recorded trace at line {diverged}"
        )));
    }

    let mut csv_path = None;
    if let Some(out) = csv_out {
        let mut outputs = Outputs::default();
        outputs.write(out, trace_csv(&file.records).as_bytes())?;
        csv_path = Some(out.to_path_buf());
    }
    Ok(ReplaySummary { steps: file.records.len(), csv_path })
}
