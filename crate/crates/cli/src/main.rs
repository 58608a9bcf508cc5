//! `artikit` command line: validate URDFs, score predictions against ground
//! truth, convert scenes, and sample meshes.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or I/O error.

mod config;
mod eval;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use artikit::geometry::{load_mesh, normalize_part, sample_surface, write_cloud_ply, GeometryError, MeshFormat, StubBackend};
use artikit::llm::BackendConfig;
use artikit::scene::{load_gt, load_scene, run_scene, MeshMode, PipelineConfig, SceneError, Status};
use artikit::urdf::{parse_urdf, Strictness};
use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;

use config::{CliConfig, OutputFormat};

#[derive(Parser)]
#[command(name = "artikit", version, about = "Articulated-object URDF toolkit")]
struct Cli {
    /// CLI configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format on stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a URDF file.
    Validate {
        urdf: PathBuf,
        /// Enforce the URDF subset (default).
        #[arg(long, conflicts_with = "lenient")]
        strict: bool,
        /// Accept standard URDF extras such as inertial and collision.
        #[arg(long)]
        lenient: bool,
    },
    /// Score predicted URDFs against ground truth, paired by file name.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file with `id` and `ood` object lists.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Convert the articulable objects of a scene into URDFs.
    Convert {
        scene: PathBuf,
        /// Backend configuration (TOML).
        #[arg(long)]
        backend: Option<PathBuf>,
        /// Output root; files go to `<out>/<scene_id>/`.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth directory with `gt.json` and `<asset_id>.urdf`.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "copy")]
        mesh_mode: MeshModeArg,
    },
    /// Sample a point cloud from a mesh surface and write it as PLY.
    Sample {
        mesh: PathBuf,
        #[arg(long, default_value_t = 8192)]
        n: usize,
        /// Center on the centroid and scale to the unit sphere.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MeshModeArg {
    Copy,
    Reference,
}

/// Failure carrying its exit code.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure(2, msg.into())
    }
    fn domain(msg: impl Into<String>) -> Self {
        Failure(1, msg.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match CliConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    info!("effective config: {}", serde_json::to_string(&cfg).unwrap_or_default());

    let result = match cli.command {
        Command::Validate { urdf, lenient, .. } => {
            validate(&urdf, if lenient { Strictness::Lenient } else { Strictness::Strict })
        }
        Command::Eval { pred_dir, gt_dir, out, split } => cmd_eval(&cfg, &pred_dir, &gt_dir, out.as_deref(), split.as_deref()),
        Command::Convert { scene, backend, out, gt, mesh_mode } => {
            let mode = match mesh_mode {
                MeshModeArg::Copy => MeshMode::Copy,
                MeshModeArg::Reference => MeshMode::Reference,
            };
            convert(&cfg, &scene, backend.or(cfg.backend.clone()), &out, gt.as_deref(), mode)
        }
        Command::Sample { mesh, n, normalize, out } => sample(&cfg, &mesh, n, normalize, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn validate(path: &Path, strictness: Strictness) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    match parse_urdf(&text, strictness) {
        Ok(doc) => {
            println!("{}: ok ({} links, {} joints)", path.display(), doc.tree.links().len(), doc.tree.joints().len());
            Ok(())
        }
        Err(e) => {
            let kind = format!("{e:?}");
            let kind = kind.split([' ', '{', '(']).next().unwrap_or_default();
            println!("{}: byte {}: {kind}: {e}", path.display(), e.position());
            Err(Failure::domain(format!("{} is not valid", path.display())))
        }
    }
}

fn cmd_eval(cfg: &CliConfig, pred_dir: &Path, gt_dir: &Path, out: Option<&Path>, split: Option<&Path>) -> CmdResult {
    let split = match split {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str::<eval::SplitFile>(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let report = eval::run_eval(pred_dir, gt_dir, split.as_ref(), &cfg.metrics.to_config())
        .map_err(|e| Failure::usage(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = out {
        fs::write(out, format!("{json}\n")).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    }
    match cfg.format {
        OutputFormat::Json => println!("{json}"),
        OutputFormat::Markdown => print!("{}", eval::markdown(&report)),
    }
    if report.any_failed() {
        return Err(Failure::domain("some objects could not be evaluated"));
    }
    Ok(())
}

fn convert(cfg: &CliConfig, scene_path: &Path, backend: Option<PathBuf>, out: &Path, gt: Option<&Path>, mesh_mode: MeshMode) -> CmdResult {
    let Some(backend_path) = backend else {
        return Err(Failure::usage("no backend configured: pass --backend <file.toml> or set `backend` in --config"));
    };
    let backend = BackendConfig::load(&backend_path)
        .and_then(|c| c.build())
        .map_err(|e| Failure::usage(e.to_string()))?;
    let scene = load_scene(scene_path).map_err(|e| match e {
        SceneError::Io { .. } => Failure::usage(e.to_string()),
        e => Failure::domain(e.to_string()),
    })?;
    let gt = match gt {
        Some(dir) => Some(load_gt(dir).map_err(|e| Failure::usage(e.to_string()))?),
        None => None,
    };
    let config = PipelineConfig {
        n_global: cfg.samples.global,
        n_part: cfg.samples.part,
        seed: cfg.seed,
        metrics: cfg.metrics.to_config(),
        mesh_mode,
        ..PipelineConfig::default()
    };
    let manifest = run_scene(&scene, backend.as_ref(), &StubBackend, gt.as_ref(), out, config)
        .map_err(|e| Failure::domain(e.to_string()))?;

    match cfg.format {
        OutputFormat::Markdown => {
            for r in &manifest.results {
                let detail = match &r.status {
                    Status::Ok => format!("{}.urdf", r.asset_id),
                    Status::IdentifiedNotConverted { stage, error } => format!("{stage:?} stage: {}: {error}", error.kind()),
                    Status::NotArticulable => String::new(),
                };
                println!("{:<24} {:<26} {detail}", r.asset_id, r.status.label());
            }
            if let Some(report) = &manifest.report {
                println!("Sim-Id {}  Sim-Us {}", report.sim_id_objects, report.sim_us_objects);
            }
            println!("manifest {}", manifest.manifest_path.display());
            println!("canonical_hash {}", manifest.canonical_hash);
        }
        OutputFormat::Json => {
            let summary = json!({
                "manifest": manifest.manifest_path,
                "canonical_hash": manifest.canonical_hash,
                "results": manifest.results.iter().map(|r| json!({"asset_id": r.asset_id, "status": r.status.label()})).collect::<Vec<_>>(),
                "sim_id": manifest.report.as_ref().map(|r| r.sim_id_objects.to_string()),
                "sim_us": manifest.report.as_ref().map(|r| r.sim_us_objects.to_string()),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
        }
    }
    Ok(())
}

fn geometry_failure(e: GeometryError) -> Failure {
    match e {
        GeometryError::Io { .. } => Failure::usage(e.to_string()),
        e => Failure::domain(e.to_string()),
    }
}

fn sample(cfg: &CliConfig, mesh_path: &Path, n: usize, normalize: bool, out: &Path) -> CmdResult {
    let format = MeshFormat::from_path(mesh_path).map_err(geometry_failure)?;
    let mesh = load_mesh(mesh_path, format).map_err(geometry_failure)?;
    let mut cloud = sample_surface(&mesh, n, cfg.seed).map_err(geometry_failure)?;
    if normalize {
        cloud = normalize_part(&cloud).map_err(geometry_failure)?;
    }
    let file = fs::File::create(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let mut writer = BufWriter::new(file);
    write_cloud_ply(&cloud, &mut writer)
        .and_then(|()| writer.flush())
        .map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    println!("{}: {} points", out.display(), cloud.points.len());
    Ok(())
}
