//! `lrfuse` command-line interface.
//!
//! Exit codes: 0 success, 1 validation error, 2 property failure,
//! 3 I/O or format error.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrfuse::harness::{
    eval_detections, oracle_suite, read_detections_jsonl, run_pipeline, simulate,
    write_detections_jsonl, write_map, Fault, Model, PipelineConfig, PipelineRun, Scale,
};
use lrfuse::scene::{load_cloud, write_cloud, Cloud, RadarCloud, RadarVariant, Scene};
use lrfuse::{Error, Result};

#[derive(Parser)]
#[command(name = "lrfuse", version, about = "LiDAR/Radar BEV fusion pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON pipeline configuration; overrides --scale.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// paper | desk
    #[arg(long, global = true, default_value = "desk")]
    scale: String,
    /// a | b
    #[arg(long, global = true)]
    radar_variant: Option<String>,
    /// Test-only fault injection, e.g. ball-radius-as-r.
    #[arg(long, global = true)]
    fault: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene and write its clouds and ground truth.
    Generate,
    /// Run the pipeline and write detections and stage statistics.
    Run(Inputs),
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        /// Scene JSON written by `generate`.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run the oracle suite.
    Check {
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Write one intermediate feature map as a BLRM file.
    DumpMap {
        /// m_l | m_r | enhanced | fused | encoded | heatmap
        #[arg(long)]
        map: String,
        #[command(flatten)]
        inputs: Inputs,
    },
}

/// Cloud files to run on. Without them the frame is simulated from --seed.
#[derive(Args)]
struct Inputs {
    #[arg(long, requires = "radar")]
    lidar: Option<PathBuf>,
    #[arg(long, requires = "lidar")]
    radar: Option<PathBuf>,
}

enum Failure {
    Error(Error),
    Property,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

/// `println!` that tolerates a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) => 3,
        _ => 1,
    }
}

fn config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::for_scale(g.scale.parse::<Scale>()?),
    };
    if let Some(v) = &g.radar_variant {
        cfg.radar_variant = v.parse::<RadarVariant>()?;
    }
    if let Some(f) = fault(g)? {
        f.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fault(g: &Global) -> Result<Option<Fault>> {
    g.fault.as_deref().map(str::parse).transpose()
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn load_inputs(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    seed: u64,
) -> Result<(Vec<lrfuse::scene::LidarPoint>, RadarCloud)> {
    match (&inputs.lidar, &inputs.radar) {
        (Some(l), Some(r)) => {
            let lidar = match load_cloud(l)? {
                Cloud::Lidar { points } => points,
                Cloud::Radar(_) => {
                    return Err(Error::Argument(format!("{} is a Radar cloud", l.display())))
                }
            };
            let radar = match load_cloud(r)? {
                Cloud::Radar(c) => c,
                Cloud::Lidar { .. } => {
                    return Err(Error::Argument(format!("{} is a LiDAR cloud", r.display())))
                }
            };
            Ok((lidar, radar))
        }
        _ => {
            let frame = simulate(cfg, seed)?;
            Ok((frame.lidar, frame.radar))
        }
    }
}

fn pipeline(g: &Global, inputs: &Inputs) -> Result<PipelineRun> {
    let cfg = config(g)?;
    let model = Model::build(&cfg)?;
    let (lidar, radar) = load_inputs(&cfg, inputs, g.seed)?;
    run_pipeline(&cfg, &model, &lidar, &radar)
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate => {
            let cfg = config(g)?;
            let frame = simulate(&cfg, g.seed)?;
            create_out(&g.out)?;
            write_cloud(
                &Cloud::Lidar {
                    points: frame.lidar,
                },
                g.out.join("lidar.blrf"),
            )?;
            write_cloud(&Cloud::Radar(frame.radar), g.out.join("radar.blrf"))?;
            write_json(&g.out.join("scene.json"), &frame.scene)?;
            write_json(&g.out.join("config.json"), &cfg)?;
            say!("wrote {}", g.out.display());
        }
        Command::Run(inputs) => {
            let run = pipeline(g, inputs)?;
            create_out(&g.out)?;
            let path = g.out.join("detections.jsonl");
            let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
            write_detections_jsonl(&run.detections, BufWriter::new(file))?;
            write_json(&g.out.join("stats.json"), &run.stats)?;
            say!("{} detections", run.detections.len());
        }
        Command::Eval { detections, gt } => {
            let text = fs::read_to_string(detections).map_err(|e| io_error(detections, e))?;
            let dets = read_detections_jsonl(&text)?;
            let gt_text = fs::read_to_string(gt).map_err(|e| io_error(gt, e))?;
            let scene: Scene = serde_json::from_str(&gt_text).map_err(Error::from)?;
            let result = eval_detections(&dets, &scene.objects);
            create_out(&g.out)?;
            write_json(&g.out.join("eval.json"), &result)?;
            say!(
                "{}",
                serde_json::to_string_pretty(&result).map_err(Error::from)?
            );
        }
        Command::Check { seeds } => {
            let report = oracle_suite(*seeds, fault(g)?);
            for p in &report.properties {
                let status = if p.passed { "PASS" } else { "FAIL" };
                let detail = p.detail.as_deref().unwrap_or("");
                say!(
                    "{status} {} ({} cases, {} failures) {detail}",
                    p.name,
                    p.cases,
                    p.failures
                );
            }
            create_out(&g.out)?;
            write_json(&g.out.join("check.json"), &report)?;
            if !report.passed {
                return Err(Failure::Property);
            }
        }
        Command::DumpMap { map, inputs } => {
            let run = pipeline(g, inputs)?;
            let fm = run.maps.get(map.as_str()).ok_or_else(|| {
                let known: Vec<&str> = run.maps.keys().map(String::as_str).collect();
                Error::Argument(format!("unknown map `{map}`; known: {}", known.join(", ")))
            })?;
            create_out(&g.out)?;
            let path = g.out.join(format!("{map}.blrm"));
            write_map(fm, &path)?;
            let [c, h, w] = fm.shape();
            say!("wrote {} ({c}x{h}x{w})", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property) => {
            eprintln!("error: property failures");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
