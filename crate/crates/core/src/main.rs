use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gestnav::config::Config;
use gestnav::eval::{evaluate, Agent, Budget, EvalRun, OracleAgent, PolicyAgent, RandomAgent};
use gestnav::gateway::{Gateway, SessionConfig};
use gestnav::gesture::dataset::{write_dataset, GestureLabel};
use gestnav::gesture::{intervention_gesture, referencing_gesture, GestureAnatomy, NUM_INTERVENTION_TEMPLATES};
use gestnav::manifest::{scenes_hash, RunManifest};
use gestnav::policy::load_checkpoint;
use gestnav::ppo::{train, TrainSetup};
use gestnav::scene::{Scene, SceneType, Split};
use gestnav::sim::{render_text_map, replay, Condition, EpisodeLog, GestureBank};
use gestnav::Error;

#[derive(Parser)]
#[command(name = "gestnav", version, about = "Gesture-instructed object-goal navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes of a split, one JSON file per scene.
    GenScenes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write labelled gesture samples to a GESTDATA1 file.
    GenGestures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_enum, default_value = "mixed")]
        kind: GestureChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a policy under one gesture condition.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        condition: Condition,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, the oracle or the random agent.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_if_eq("method", "policy"))]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "policy")]
        method: Method,
        /// Defaults to the checkpoint's condition.
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Comma-separated stop budgets, e.g. `1,2,3,inf`.
        #[arg(long)]
        budgets: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_csv: bool,
    },
    /// Re-simulate a logged episode and draw its trajectory.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Episode JSONL log written by `eval`.
        #[arg(long)]
        log: PathBuf,
        /// Episode id; defaults to the first line.
        #[arg(long)]
        episode: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the live steering server.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        pace: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Load scenes from this directory instead of generating them.
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    scene_type: Option<SceneType>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GestureChoice {
    Referencing,
    Intervention,
    Mixed,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Policy,
    Oracle,
    Random,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParams(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

impl Common {
    fn config(&self) -> CliResult<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => {
                let mut c = Config::default();
                c.apply_seed_override(std::env::var(gestnav::config::SEED_ENV).ok().as_deref())?;
                c
            }
        };
        if let Some(t) = self.scene_type {
            cfg.scene.scene_type = t;
        }
        Ok(cfg)
    }

    fn scenes(&self, cfg: &Config, split: Split) -> CliResult<Vec<Arc<Scene>>> {
        match &self.scenes {
            Some(dir) => load_scene_dir(dir),
            None => Ok(cfg.scene.generate(split)?),
        }
    }
}

fn load_scene_dir(dir: &Path) -> CliResult<Vec<Arc<Scene>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no scene files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            Scene::from_json(&text)
                .map(Arc::new)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::GenScenes { common, split, out } => {
            let cfg = common.config()?;
            fs::create_dir_all(&out)?;
            for scene in cfg.scene.generate(split)? {
                let path = out.join(format!("{}.json", scene.scene_id()));
                fs::write(&path, scene.to_json()?)?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::GenGestures {
            common,
            out,
            count,
            kind,
            seed,
        } => {
            let cfg = common.config()?;
            let anatomy = GestureAnatomy::from_seed(cfg.gesture.anatomy_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut records = Vec::with_capacity(count);
            for i in 0..count {
                let referencing = match kind {
                    GestureChoice::Referencing => true,
                    GestureChoice::Intervention => false,
                    GestureChoice::Mixed => i % 2 == 0,
                };
                if referencing {
                    let bearing = rng.random_range(-PI..PI);
                    let g = referencing_gesture(bearing, &anatomy, rng.random(), cfg.gesture.noise_sigma)?;
                    records.push((g, GestureLabel::Referencing { bearing_rad: bearing }));
                } else {
                    let t = rng.random_range(0..NUM_INTERVENTION_TEMPLATES);
                    records.push((intervention_gesture(t, &anatomy)?, GestureLabel::Intervention { template: t }));
                }
            }
            write_dataset(BufWriter::new(File::create(&out)?), &records)?;
            eprintln!("wrote {count} gestures to {}", out.display());
            Ok(())
        }
        Command::Train { common, condition, out } => {
            let cfg = common.config()?;
            let scenes = common.scenes(&cfg, Split::Train)?;
            fs::create_dir_all(&out)?;
            let mut manifest = RunManifest::new(
                &format!("train {}", condition.as_str()),
                serde_json::to_value(&cfg)?,
                scenes_hash(scenes.iter().map(|s| s.as_ref()))?,
                cfg.ppo.seed,
            );
            let setup = TrainSetup {
                scenes,
                condition,
                model: cfg.model,
                ppo: cfg.ppo.clone(),
                anatomy_seed: cfg.gesture.anatomy_seed,
                noise_sigma: cfg.gesture.noise_sigma,
                out_dir: Some(out.clone()),
            };
            let outcome = train(&setup, |row| {
                eprintln!(
                    "update {} steps {} reward {:.4} sr {:.3} entropy {:.3} kl {:.4}",
                    row.update, row.env_steps, row.mean_episode_reward, row.rolling_sr, row.entropy, row.approx_kl
                );
            })?;
            let mut artifacts: Vec<String> = outcome.checkpoints.iter().map(|p| path_str(p)).collect();
            artifacts.push(path_str(&out.join("metrics.jsonl")));
            manifest.finish(artifacts);
            manifest.write(&out.join("manifest.json"))?;
            Ok(())
        }
        Command::Eval {
            common,
            checkpoint,
            method,
            condition,
            split,
            budgets,
            episodes,
            out,
            emit_csv,
        } => {
            let mut cfg = common.config()?;
            if let Some(b) = budgets {
                cfg.eval.budgets = Budget::parse_list(&b)?;
            }
            if let Some(n) = episodes {
                cfg.eval.episodes_per_scene = n;
            }
            cfg.validate()?;
            let scenes = common.scenes(&cfg, split)?;
            let loaded = match &checkpoint {
                Some(p) => Some(load_checkpoint(p)?),
                None => None,
            };
            let condition = condition
                .or(loaded.as_ref().and_then(|(_, m)| m.condition))
                .ok_or_else(|| Failure::Usage("--condition is required without a checkpoint condition".into()))?;
            let anatomy_seed = loaded.as_ref().map_or(cfg.gesture.anatomy_seed, |(_, m)| m.anatomy_seed);
            let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(anatomy_seed)));
            let opts = cfg.eval_options();
            let (name, run): (String, EvalRun) = match method {
                Method::Policy => {
                    let (params, _) = loaded.as_ref().expect("clap requires a checkpoint");
                    let mut agent = PolicyAgent::new(params);
                    (condition.as_str().into(), evaluate(&scenes, condition, &bank, &mut agent, condition.as_str(), &opts)?)
                }
                Method::Oracle => ("oracle".into(), eval_with(&scenes, condition, &bank, &mut OracleAgent::default(), "oracle", &opts)?),
                Method::Random => ("random".into(), eval_with(&scenes, condition, &bank, &mut RandomAgent::default(), "random", &opts)?),
            };
            let report = serde_json::to_string_pretty(&run.report)?;
            println!("{report}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let mut manifest = RunManifest::new(
                    &format!("eval {name}"),
                    serde_json::to_value(&cfg)?,
                    scenes_hash(scenes.iter().map(|s| s.as_ref()))?,
                    cfg.eval.seed,
                );
                let mut artifacts = vec![dir.join("report.json"), dir.join("episodes.jsonl")];
                fs::write(&artifacts[0], report + "\n")?;
                let mut w = BufWriter::new(File::create(&artifacts[1])?);
                for log in run.logs() {
                    serde_json::to_writer(&mut w, log)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
                if emit_csv {
                    artifacts.push(dir.join("report.csv"));
                    fs::write(&artifacts[2], run.report.to_csv())?;
                }
                manifest.finish(artifacts.iter().map(|p| path_str(p)).collect());
                manifest.write(&dir.join("manifest.json"))?;
            }
            Ok(())
        }
        Command::Replay {
            common,
            log,
            episode,
            out,
        } => {
            let cfg = common.config()?;
            let entry = read_log(&log, episode)?;
            let scene = find_scene(&common, &cfg, &entry.scene_id)?;
            let rerun = replay(&scene, &entry)?;
            let mut text = render_text_map(&scene, &entry, &rerun.trajectory);
            text.push_str(&format!(
                "episode {} scene {} steps {} success {} p {:.3} m l {:.3} m\n",
                entry.episode_id, entry.scene_id, entry.steps, rerun.success, rerun.p_len_m, entry.l_len_m
            ));
            match &out {
                Some(p) => fs::write(p, &text)?,
                None => print!("{text}"),
            }
            if rerun.rewards != entry.rewards || rerun.success != entry.success {
                return Err(Failure::Runtime("re-simulated rewards differ from the log".into()));
            }
            eprintln!("rewards reproduced exactly ({} steps)", rerun.rewards.len());
            Ok(())
        }
        Command::Serve {
            common,
            checkpoint,
            condition,
            split,
            host,
            port,
            pace,
        } => {
            let cfg = common.config()?;
            let scenes = common.scenes(&cfg, split)?;
            let (params, meta) = load_checkpoint(&checkpoint)?;
            let condition = condition.or(meta.condition).unwrap_or(Condition::Baseline);
            let pace_sps = pace.unwrap_or(gestnav::gateway::DEFAULT_PACE_SPS);
            if !(pace_sps.is_finite() && pace_sps > 0.0) {
                return Err(Failure::Usage("--pace must be positive".into()));
            }
            let gateway = Gateway::new(SessionConfig {
                scenes,
                params: Arc::new(params),
                bank: Arc::new(GestureBank::new(GestureAnatomy::from_seed(meta.anatomy_seed))),
                condition,
                noise_sigma: cfg.gesture.noise_sigma,
                pace_sps,
                seed: cfg.eval.seed,
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Failure::Runtime(format!("cannot bind {host}:{port}: {e}")))?;
                eprintln!("serving on http://{}", listener.local_addr()?);
                gestnav::gateway::serve(listener, gateway).await?;
                Ok(())
            })
        }
    }
}

fn eval_with(
    scenes: &[Arc<Scene>],
    condition: Condition,
    bank: &Arc<GestureBank>,
    agent: &mut dyn Agent,
    name: &str,
    opts: &gestnav::eval::EvalOptions,
) -> CliResult<EvalRun> {
    Ok(evaluate(scenes, condition, bank, agent, name, opts)?)
}

fn read_log(path: &Path, episode: Option<u64>) -> CliResult<EpisodeLog> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let log: EpisodeLog = serde_json::from_str(&line)?;
        if episode.is_none_or(|id| id == log.episode_id) {
            return Ok(log);
        }
    }
    Err(Failure::Usage(format!("episode not found in {}", path.display())))
}

/// Looks the scene up in `--scenes`, or regenerates it from its id
/// (`<type>_<seed>`) with the configured generator parameters.
fn find_scene(common: &Common, cfg: &Config, scene_id: &str) -> CliResult<Arc<Scene>> {
    if common.scenes.is_some() {
        let scenes = common.scenes(cfg, Split::Train)?;
        return scenes
            .into_iter()
            .find(|s| s.scene_id() == scene_id)
            .ok_or_else(|| Failure::Usage(format!("scene {scene_id} not in --scenes")));
    }
    let (ty, seed) = scene_id
        .rsplit_once('_')
        .ok_or_else(|| Failure::Runtime(format!("unrecognized scene id {scene_id}")))?;
    let ty: SceneType = ty.parse()?;
    let seed: u64 = seed
        .parse()
        .map_err(|_| Failure::Runtime(format!("unrecognized scene id {scene_id}")))?;
    Ok(Arc::new(gestnav::scene::generate_scene(seed, ty, &cfg.scene.params)?))
}
