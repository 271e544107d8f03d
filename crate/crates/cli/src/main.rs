use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsnav_core::evaluation::{self, SceneSpec};
use fsnav_core::extraction::{self, ExtractionConfig, Method};
use fsnav_core::imaging::{self, BlurFactor, CropMeta, NETWORK_INPUT};
use fsnav_core::pipeline::{self, CostmapSettings, PipelineConfig};
use fsnav_core::projection::{self, CameraModel, ProjectionConfig};
use fsnav_core::{ply, pnm, Error, FreespaceMap, Result, SegmenterSpec};
use log::info;
use serde_json::json;

/// Freespace-map postprocessing: gradients, border points, ground-plane
/// point clouds and costmaps.
#[derive(Parser)]
#[command(name = "fsnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sobel X, Sobel Y and Laplacian planes (half resolution) as 16-bit PGMs.
    Gradients {
        image: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Blur factor of an image, as JSON.
    Blur {
        image: PathBuf,
        /// Divide by the pixel count (true variance).
        #[arg(long)]
        normalized: bool,
    },
    /// Border points of a freespace mask, as CSV.
    Extract {
        mask: PathBuf,
        #[command(flatten)]
        extraction: ExtractArgs,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Projects border points (CSV) onto the ground plane, as PLY.
    Project {
        points: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Source frame used for the blur weight; without it every point
        /// gets weight 0.5.
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        beta0: f64,
        #[arg(long, default_value_t = 10.0)]
        max_range: f64,
        /// PLY path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the full pipeline over a directory of frames.
    Pipeline {
        frames: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for clouds, costmap and timing report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores a segmenter against truth masks, or against a synthetic corpus.
    Eval {
        /// Frames directory (with --truth).
        frames: Option<PathBuf>,
        /// Directory of `<index>.pgm` truth masks.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Render this many synthetic scenes instead of reading frames.
        #[arg(long, conflicts_with_all = ["frames", "truth"])]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "flood")]
        segmenter: SegmenterSpec,
    },
    /// Per-stage timing over repeated passes through a frame directory.
    Bench {
        frames: PathBuf,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[command(flatten)]
        run: RunArgs,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Renders synthetic scenes with truth masks and a camera file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Render one scene from JSON instead of a random corpus.
        #[arg(long, conflicts_with_all = ["count", "seed"])]
        scene: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, default_value = "polar")]
    method: Method,
    /// Scan lines or rays.
    #[arg(long, default_value_t = 64)]
    count: usize,
    /// Keep every n-th contour point.
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Emit the far end of lines that never meet an obstacle.
    #[arg(long)]
    max_range_markers: bool,
}

impl ExtractArgs {
    fn config(&self) -> Result<ExtractionConfig> {
        let config = ExtractionConfig {
            method: self.method,
            count: self.count,
            contour_stride: self.stride,
            max_range_markers: self.max_range_markers,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    camera: PathBuf,
    #[arg(long, default_value = "flood")]
    segmenter: SegmenterSpec,
    #[command(flatten)]
    extraction: ExtractArgs,
    /// Blur normalisation; defaults to the median β of the frames.
    #[arg(long)]
    beta0: Option<f64>,
    /// Costmap cell size in metres.
    #[arg(long, default_value_t = 0.05)]
    resolution: f64,
    /// Costmap side in metres.
    #[arg(long, default_value_t = 20.0)]
    size: f64,
    #[arg(long, default_value_t = 10.0)]
    max_range: f64,
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::new(CameraModel::load(&self.camera)?, self.segmenter.clone());
        config.extraction = self.extraction.config()?;
        config.beta0 = self.beta0;
        config.max_range = self.max_range;
        config.costmap = CostmapSettings {
            resolution: self.resolution,
            size_m: self.size,
            ..CostmapSettings::default()
        };
        config.threads = threads_from_env()?;
        config.validate()?;
        Ok(config)
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("FSNAV_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("FSNAV_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn load_gray(path: &Path) -> Result<fsnav_core::ByteImage> {
    let img = pnm::read(path)?;
    match img.channels() {
        1 => Ok(img),
        _ => imaging::to_grayscale(&img),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gradients(image: &Path, out: &Path) -> Result<()> {
    let stack = imaging::gradient_stack(&load_gray(image)?)?;
    fs::create_dir_all(out)?;
    let mut scales = serde_json::Map::new();
    for (name, plane) in stack.planes() {
        let (samples, m) = imaging::plane_to_gray16(plane);
        fs::write(
            out.join(format!("{name}.pgm")),
            pnm::encode_gray16(plane.width(), plane.height(), &samples)?,
        )?;
        scales.insert(name.to_string(), json!(m));
    }
    let sidecar = json!({ "width": stack.width(), "height": stack.height(), "scale": scales });
    fs::write(out.join("gradients.json"), serde_json::to_string_pretty(&sidecar)?)?;
    print_json(&sidecar)
}

fn blur(image: &Path, normalized: bool) -> Result<()> {
    let b = imaging::blur_factor(&load_gray(image)?)?;
    let beta = if normalized { b.normalized() } else { b.beta };
    print_json(&json!({
        "beta": beta,
        "normalized": normalized,
        "beta_mean_abs": b.beta_mean_abs,
        "pixel_count": b.pixel_count,
    }))
}

fn extract(mask: &Path, args: &ExtractArgs, out: Option<&Path>) -> Result<()> {
    let map = FreespaceMap::read_pgm(mask)?;
    let points = extraction::extract(&map, &args.config()?)?;
    info!("{} border points", points.len());
    let mut w = output(out)?;
    extraction::write_csv(&mut w, &points)?;
    w.flush()?;
    Ok(())
}

fn project(
    points: &Path,
    camera: &Path,
    frame: Option<&Path>,
    config: ProjectionConfig,
    out: Option<&Path>,
) -> Result<()> {
    config.validate()?;
    let cam = CameraModel::load(camera)?;
    let points = extraction::read_csv(BufReader::new(fs::File::open(points)?))?;
    let crop = CropMeta::bottom_two_thirds(cam.width, cam.height, NETWORK_INPUT)?;
    let blur = match frame {
        Some(path) => {
            let rgb = pipeline::load_frame(path)?;
            pipeline::prepare_frame(&rgb)?.blur
        }
        None => BlurFactor {
            beta: config.beta0,
            beta_mean_abs: 0.0,
            pixel_count: 0,
        },
    };
    let frame_id = frame
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into());
    let cloud = projection::build_pointcloud(&points, &cam, &crop, &blur, &config, &frame_id)?;
    info!("{} of {} points projected", cloud.points.len(), points.len());
    let mut w = output(out)?;
    ply::write_ply(&mut w, &cloud)?;
    w.flush()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gradients { image, out } => gradients(&image, &out),
        Command::Blur { image, normalized } => blur(&image, normalized),
        Command::Extract { mask, extraction, out } => extract(&mask, &extraction, out.as_deref()),
        Command::Project {
            points,
            camera,
            frame,
            beta0,
            max_range,
            out,
        } => project(
            &points,
            &camera,
            frame.as_deref(),
            ProjectionConfig { beta0, max_range },
            out.as_deref(),
        ),
        Command::Pipeline { frames, run, out } => {
            let result = pipeline::run_pipeline(&frames, &run.config()?, Some(&out))?;
            print_json(&result.report)
        }
        Command::Eval {
            frames,
            truth,
            synthetic,
            seed,
            segmenter,
        } => {
            let mut backend = segmenter.build()?;
            let report = match (synthetic, frames, truth) {
                (Some(n), _, _) => pipeline::evaluate_scenes(&evaluation::synthetic_corpus(n, seed), backend.as_mut())?,
                (None, Some(frames), Some(truth)) => pipeline::evaluate_dirs(&frames, &truth, backend.as_mut())?,
                _ => {
                    return Err(Error::Config(
                        "eval needs <frames> --truth <dir>, or --synthetic <n>".into(),
                    ))
                }
            };
            print_json(&report)
        }
        Command::Bench {
            frames,
            iterations,
            run,
            out,
        } => {
            let report = pipeline::bench(&frames, iterations, &run.config()?)?;
            if let Some(out) = out {
                fs::write(out, serde_json::to_string_pretty(&report)?)?;
            }
            print_json(&report)
        }
        Command::Synth {
            out,
            count,
            seed,
            scene,
        } => {
            let scenes = match scene {
                Some(path) => vec![SceneSpec::from_json(&fs::read_to_string(path)?)?],
                None => evaluation::synthetic_corpus(count, seed),
            };
            pipeline::write_synthetic_set(&out, &scenes)?;
            print_json(&json!({ "scenes": scenes.len(), "out": out }))
        }
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[UsageError]: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed stdout (e.g. piped into `head`) is not a failure
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
