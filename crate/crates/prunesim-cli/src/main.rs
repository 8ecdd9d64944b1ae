//! Command-line front end: tree-bank generation, episode sampling, policy
//! rollouts, oracle planning, analysis artifacts, observation rendering,
//! and the environment server.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prunesim::analysis;
use prunesim::env::EnvConfig;
use prunesim::episodes::{
    self, make_eval_set, make_training_episode, read_episode_file, write_episode_file,
    EpisodeConfig, ReachableRegion, StartFeasibility,
};
use prunesim::perception::{self, CameraModel};
use prunesim::planner::{
    plan_to_cutpoint, validate_path, CollisionChecker, PlanRequest, PlanStatus,
};
use prunesim::policy::{
    run_rollouts, write_records, Controller, PrivilegedServo, RolloutRecord, RolloutSetup,
    ZeroPolicy,
};
use prunesim::robot::KinematicModel;
use prunesim::scene::SceneConfig;
use prunesim::server::{serve_lines, serve_tcp, SessionContext};
use prunesim::treegen::{default_grammar, generate_bank, load_bank, save_bank, TrellisSpec};

/// Aggregated configuration; every field has working defaults and can be
/// overridden from a JSON file via `--config`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct AppConfig {
    trellis: TrellisSpec,
    scene: SceneConfig,
    episodes: EpisodeConfig,
    env: EnvConfig,
    region: ReachableRegion,
    robot: KinematicModel,
    camera: CameraModel,
    plan: PlanRequest,
    /// Growth cycles per tree.
    years: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            trellis: TrellisSpec::default(),
            scene: SceneConfig::default(),
            episodes: EpisodeConfig::default(),
            env: EnvConfig::default(),
            region: ReachableRegion::default(),
            robot: KinematicModel::default(),
            camera: CameraModel::default(),
            plan: PlanRequest::default(),
            years: 4,
        }
    }
}

impl AppConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).context("parsing config")
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "prunesim",
    about = "V-trellis orchard pruning-reach simulation toolkit",
    version
)]
struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic tree bank.
    Grow(GrowArgs),
    /// Sample training/evaluation/grid episode sets against a bank.
    Episodes(EpisodesArgs),
    /// Run a controller over an episode set and record results.
    Rollout(RolloutArgs),
    /// Run the oracle RRT-Connect planner over an episode set.
    Plan(PlanArgs),
    /// Aggregate result records into grid CSV/SVG artifacts.
    Analyze(AnalyzeArgs),
    /// Render observations (depth, flow, cutpoint marker) for one episode.
    Render(RenderArgs),
    /// Serve environments over stdio or TCP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GrowArgs {
    /// Number of trees.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Output bank directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write OBJ meshes.
    #[arg(long)]
    meshes: bool,
}

#[derive(Args)]
struct EpisodesArgs {
    /// Bank directory.
    #[arg(long)]
    bank: PathBuf,
    /// Output episode file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Training episodes to sample.
    #[arg(long, conflicts_with_all = ["orientations", "grid_per_cell"])]
    train: Option<usize>,
    /// Evaluation orientations (Fibonacci sphere).
    #[arg(long)]
    orientations: Option<usize>,
    /// Positions per orientation for evaluation sets.
    #[arg(long, default_value_t = 3)]
    positions: usize,
    /// Per-cell episode count for the 648-bin grid set.
    #[arg(long)]
    grid_per_cell: Option<usize>,
    /// Coverage report output path (JSON).
    #[arg(long)]
    coverage: Option<PathBuf>,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// Controller: "servo" (privileged) or "zero".
    #[arg(long, default_value = "servo")]
    policy: String,
    #[arg(long)]
    out: PathBuf,
    /// Optional step-by-step JSON-lines trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Render flow/cutpoint images during rollouts.
    #[arg(long)]
    render: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// Goal configurations sampled per cutpoint.
    #[arg(long, default_value_t = 100)]
    goals: usize,
    /// Time budget per episode, seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Result record files (JSON lines), repeatable.
    #[arg(long, required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    episodes: PathBuf,
    /// Output directory for CSV/SVG artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// Episode id to render.
    #[arg(long, default_value_t = 0)]
    episode: u64,
    /// Action applied between the two rendered frames.
    #[arg(long, value_delimiter = ',', num_args = 6, default_value = "0.5,0,0,0,0,0")]
    action: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// Serve a single session on stdin/stdout.
    #[arg(long, conflicts_with = "port")]
    stdio: bool,
    /// TCP port for concurrent sessions.
    #[arg(long)]
    port: Option<u16>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_bank_dir(path: &Path) -> Result<Vec<prunesim::treegen::TreeModel>> {
    let (_, trees) =
        load_bank(path).with_context(|| format!("loading bank {}", path.display()))?;
    Ok(trees)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Grow(args) => {
            let grammar = default_grammar();
            let trees = generate_bank(&cfg.trellis, &grammar, cfg.years, args.count, cli.seed)?;
            let index = save_bank(&trees, &args.out, args.meshes)?;
            let warnings: usize = index.trees.iter().map(|t| t.warning_count).sum();
            println!(
                "wrote {} trees to {} (content hash {}, {} warnings)",
                index.trees.len(),
                args.out.display(),
                index.content_hash,
                warnings
            );
        }
        Command::Episodes(args) => {
            let (index, bank) = load_bank(&args.bank)?;
            let feasibility =
                StartFeasibility::new(&cfg.robot, &cfg.env.start_q, &cfg.episodes, &cfg.trellis);
            if let Some(n) = args.train {
                let mut episode_list = Vec::with_capacity(n);
                let mut failures = 0usize;
                for k in 0..n as u64 {
                    match make_training_episode(
                        &bank,
                        &cfg.region,
                        &cfg.episodes,
                        &cfg.scene,
                        &feasibility,
                        k,
                        prunesim::derive_seed(cli.seed, k),
                    ) {
                        Ok(ep) => episode_list.push(ep),
                        Err(_) => failures += 1,
                    }
                }
                write_episode_file(&episode_list, &index.content_hash, &args.out)?;
                println!(
                    "wrote {} training episodes to {} ({failures} sampling failures)",
                    episode_list.len(),
                    args.out.display()
                );
            } else if let Some(per_cell) = args.grid_per_cell {
                let (episode_list, unfilled) = analysis::build_grid_eval_set(
                    &bank,
                    per_cell,
                    &cfg.region,
                    &cfg.episodes,
                    &cfg.scene,
                    &feasibility,
                    cli.seed,
                );
                write_episode_file(&episode_list, &index.content_hash, &args.out)?;
                println!(
                    "wrote {} grid episodes to {} ({} of 648 cells unfilled)",
                    episode_list.len(),
                    args.out.display(),
                    unfilled.len()
                );
            } else {
                let n = args.orientations.unwrap_or(1000);
                let (episode_list, report) = make_eval_set(
                    &bank,
                    n,
                    args.positions,
                    &cfg.region,
                    &cfg.episodes,
                    &cfg.scene,
                    &feasibility,
                    cli.seed,
                );
                write_episode_file(&episode_list, &index.content_hash, &args.out)?;
                if let Some(cov) = &args.coverage {
                    std::fs::write(cov, serde_json::to_string_pretty(&report)?)?;
                }
                println!(
                    "wrote {} evaluation episodes to {} ({} of {} orientations matched)",
                    episode_list.len(),
                    args.out.display(),
                    report.matched,
                    report.orientations
                );
            }
        }
        Command::Rollout(args) => {
            let bank = load_bank_dir(&args.bank)?;
            let (_, episode_list) = read_episode_file(&args.episodes)?;
            let setup = RolloutSetup {
                bank: &bank,
                spec: &cfg.trellis,
                scene_cfg: &cfg.scene,
                model: cfg.robot.clone(),
                camera: cfg.camera.clone(),
                env_cfg: EnvConfig { render_images: args.render, ..cfg.env.clone() },
            };
            let mut controller: Box<dyn Controller> = match args.policy.as_str() {
                "servo" => Box::new(PrivilegedServo::default()),
                "zero" => Box::new(ZeroPolicy),
                other => bail!("unknown policy `{other}` (expected `servo` or `zero`)"),
            };
            let mut trace_file = match &args.trace {
                Some(path) => Some(std::fs::File::create(path)?),
                None => None,
            };
            let records = run_rollouts(
                &setup,
                &episode_list,
                controller.as_mut(),
                trace_file.as_mut().map(|f| f as &mut dyn std::io::Write),
            );
            write_records(&records, &args.out)?;
            let successes = records.iter().filter(|r| r.success).count();
            println!(
                "{}: {}/{} successes -> {}",
                args.policy,
                successes,
                records.len(),
                args.out.display()
            );
        }
        Command::Plan(args) => {
            let bank = load_bank_dir(&args.bank)?;
            let (_, episode_list) = read_episode_file(&args.episodes)?;
            let request = PlanRequest {
                n_goal_samples: args.goals,
                time_budget: args.budget,
                ..cfg.plan.clone()
            };
            let records = plan_episodes(&cfg, &bank, &episode_list, &request, cli.seed)?;
            write_records(&records, &args.out)?;
            let successes = records.iter().filter(|r| r.success).count();
            println!(
                "rrt-connect: {}/{} successes -> {}",
                successes,
                records.len(),
                args.out.display()
            );
        }
        Command::Analyze(args) => {
            let (_, episode_list) = read_episode_file(&args.episodes)?;
            let mut records = Vec::new();
            for path in &args.results {
                records.extend(prunesim::policy::read_records(path)?);
            }
            let report = analysis::aggregate(&records, &episode_list)?;
            std::fs::create_dir_all(&args.out)?;
            for (name, method) in &report.methods {
                let safe: String =
                    name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect();
                analysis::emit_csv(method, &args.out.join(format!("grid_{safe}.csv")))?;
                analysis::emit_svg_heatmap(method, &args.out.join(format!("grid_{safe}.svg")))?;
                println!(
                    "{name}: {} episodes, success rate {:.4}",
                    method.total,
                    method.global_success_rate()
                );
            }
            std::fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        }
        Command::Render(args) => {
            let bank = load_bank_dir(&args.bank)?;
            let (_, episode_list) = read_episode_file(&args.episodes)?;
            let episode = episode_list
                .iter()
                .find(|e| e.id == args.episode)
                .with_context(|| format!("episode {} not in the set", args.episode))?;
            let mut env = episodes::env_from_episode(
                &bank,
                episode,
                &cfg.trellis,
                &cfg.scene,
                cfg.robot.clone(),
                cfg.camera.clone(),
                EnvConfig { render_images: true, ..cfg.env.clone() },
            )?;
            let _ = env.reset();
            let mut action = [0.0; 6];
            for (i, v) in args.action.iter().take(6).enumerate() {
                action[i] = *v;
            }
            let result = env.step(action).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            std::fs::create_dir_all(&args.out)?;
            let depth = perception::render_depth(&env.scene, &env.camera_pose(), &env.camera);
            let depth_px: Vec<u8> = depth
                .depth
                .iter()
                .map(|d| if d.is_finite() { 255 - ((d * 64.0).min(255.0) as u8) } else { 0 })
                .collect();
            perception::write_pgm(
                &depth_px,
                depth.width,
                depth.height,
                &args.out.join("depth.pgm"),
            )?;
            perception::write_flo(&result.observation.flow, &args.out.join("flow.flo"))?;
            perception::write_pgm(
                &result.observation.cutpoint_img.pixels,
                env.camera.width,
                env.camera.height,
                &args.out.join("cutpoint.pgm"),
            )?;
            perception::write_debug_ppm(
                &result.observation.flow,
                &result.observation.cutpoint_img,
                &args.out.join("composite.ppm"),
            )?;
            println!("rendered episode {} to {}", args.episode, args.out.display());
        }
        Command::Serve(args) => {
            let bank = load_bank_dir(&args.bank)?;
            let (_, episode_list) = read_episode_file(&args.episodes)?;
            let ctx = SessionContext {
                bank,
                episodes: episode_list,
                spec: cfg.trellis.clone(),
                scene_cfg: cfg.scene.clone(),
                model: cfg.robot.clone(),
                camera: cfg.camera.clone(),
                env_cfg: EnvConfig { render_images: true, ..cfg.env.clone() },
            };
            if let Some(port) = args.port {
                let listener = std::net::TcpListener::bind(("127.0.0.1", port))?;
                eprintln!("serving on 127.0.0.1:{port}");
                serve_tcp(&ctx, listener)?;
            } else {
                let stdin = std::io::stdin();
                let stdout = std::io::stdout();
                serve_lines(&ctx, stdin.lock(), stdout.lock())?;
            }
        }
    }
    Ok(())
}

/// One oracle plan per episode, recorded in the shared result schema.
fn plan_episodes(
    cfg: &AppConfig,
    bank: &[prunesim::treegen::TreeModel],
    episode_list: &[prunesim::episodes::Episode],
    request: &PlanRequest,
    seed: u64,
) -> Result<Vec<RolloutRecord>> {
    let mut records = Vec::with_capacity(episode_list.len());
    for episode in episode_list {
        let env = episodes::env_from_episode(
            bank,
            episode,
            &cfg.trellis,
            &cfg.scene,
            cfg.robot.clone(),
            cfg.camera.clone(),
            EnvConfig { render_images: false, ..cfg.env.clone() },
        );
        let record = match env {
            Err(e) => RolloutRecord {
                episode: episode.id,
                method: "rrt-connect".into(),
                steps: 0,
                success: false,
                final_distance: None,
                pointing_error_deg: None,
                perpendicular_error_deg: None,
                collisions: Default::default(),
                reward_sum: 0.0,
                error: Some(e.to_string()),
            },
            Ok(env) => {
                let per_episode = PlanRequest {
                    seed: prunesim::derive_seed(seed, episode.id),
                    ..request.clone()
                };
                let result = plan_to_cutpoint(
                    &env.scene,
                    &cfg.robot,
                    env.base_pose,
                    &env.cutpoint,
                    &cfg.env.criteria,
                    &cfg.env.start_q,
                    &per_episode,
                );
                let mut error = None;
                if result.status == PlanStatus::Success {
                    let checker = CollisionChecker {
                        scene: &env.scene,
                        model: &cfg.robot,
                        base_pose: env.base_pose,
                        ignore_cutter_on: Some((env.cutpoint.tree, env.cutpoint.branch)),
                    };
                    if let Err(v) =
                        validate_path(&result.path, &checker, request.edge_resolution / 2.0)
                    {
                        eprintln!(
                            "episode {}: path failed re-validation at edge {}",
                            episode.id, v.edge
                        );
                        error = Some(format!("validation failure at edge {}", v.edge));
                    }
                }
                RolloutRecord {
                    episode: episode.id,
                    method: "rrt-connect".into(),
                    steps: result.path.len(),
                    success: result.status == PlanStatus::Success && error.is_none(),
                    final_distance: None,
                    pointing_error_deg: None,
                    perpendicular_error_deg: None,
                    collisions: Default::default(),
                    reward_sum: 0.0,
                    error,
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}
