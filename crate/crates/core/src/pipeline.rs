//! End-to-end frame processing, per-stage timing and synthetic data sets.
//!
//! Per frame: preprocess → gradients → blur → segment → extract → project →
//! integrate. Preprocessing and blur estimation of all frames run in
//! parallel; segmentation and costmap integration run in frame order so the
//! final costmap is deterministic.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmap::{Costmap, CostmapParams, RobotPose};
use crate::error::{Error, Result};
use crate::evaluation::{self, render_scene, resample_to_map, MetricReport, SceneSpec};
use crate::extraction::{self, ExtractionConfig};
use crate::freespace::FreespaceMap;
use crate::image::ByteImage;
use crate::imaging::{self, BlurFactor, GradientStack, PreprocessedFrame, NETWORK_INPUT};
use crate::ply;
use crate::pnm;
use crate::projection::{self, CameraModel, PointCloud3D, ProjectionConfig};
use crate::segmenter::{SegmenterBackend, SegmenterSpec};

pub const STAGES: [&str; 7] = [
    "preprocess",
    "gradients",
    "blur",
    "segment",
    "extract",
    "project",
    "integrate",
];

/// Frames processed before timing starts in [`bench_images`].
pub const WARMUP_FRAMES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostmapSettings {
    pub resolution: f64,
    /// Side of the square map in metres, centred on the start pose.
    pub size_m: f64,
    pub params: CostmapParams,
}

impl Default for CostmapSettings {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            size_m: 20.0,
            params: CostmapParams::default(),
        }
    }
}

impl CostmapSettings {
    pub fn build(&self) -> Result<Costmap> {
        Ok(Costmap::centered(self.resolution, self.size_m)?.with_params(self.params))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub segmenter: SegmenterSpec,
    pub extraction: ExtractionConfig,
    pub camera: CameraModel,
    pub costmap: CostmapSettings,
    /// Blur normalisation; `None` uses the median β of the run's frames.
    pub beta0: Option<f64>,
    pub max_range: f64,
    /// Worker cap for the parallel stages; `None` lets rayon decide.
    pub threads: Option<usize>,
    pub pose: RobotPose,
}

impl PipelineConfig {
    pub fn new(camera: CameraModel, segmenter: SegmenterSpec) -> Self {
        Self {
            segmenter,
            extraction: ExtractionConfig::default(),
            camera,
            costmap: CostmapSettings::default(),
            beta0: None,
            max_range: ProjectionConfig::default().max_range,
            threads: None,
            pose: RobotPose::ORIGIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.extraction.validate()?;
        if let Some(b) = self.beta0 {
            ProjectionConfig {
                beta0: b,
                max_range: self.max_range,
            }
            .validate()?;
        }
        if self.max_range.is_nan() || self.max_range <= 0.0 {
            return Err(Error::Config("max range must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub samples: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            samples: n,
            median_ms: median,
            p95_ms: sorted[rank - 1],
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    #[serde(flatten)]
    pub stats: StageStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub frames: usize,
    pub skipped: usize,
    pub stages: Vec<StageTiming>,
    /// Whole-frame time.
    pub total: StageStats,
    /// Whole-frame time minus segmentation.
    pub without_segmentation: StageStats,
    /// `1000 / total.median_ms`.
    pub fps: f64,
    pub beta0: f64,
}

impl TimingReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name).map(|s| &s.stats)
    }
}

#[derive(Default)]
struct Samples {
    stages: [Vec<f64>; 7],
    total: Vec<f64>,
    without_segmentation: Vec<f64>,
}

impl Samples {
    fn report(&self, frames: usize, skipped: usize, beta0: f64) -> TimingReport {
        let total = StageStats::from_samples(&self.total);
        TimingReport {
            frames,
            skipped,
            stages: STAGES
                .iter()
                .zip(&self.stages)
                .map(|(name, s)| StageTiming {
                    stage: name.to_string(),
                    stats: StageStats::from_samples(s),
                })
                .collect(),
            total,
            without_segmentation: StageStats::from_samples(&self.without_segmentation),
            fps: if total.median_ms > 0.0 {
                1000.0 / total.median_ms
            } else {
                0.0
            },
            beta0,
        }
    }
}

#[inline]
fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Image files (`.ppm`, `.pgm`) in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| crate::error::io_at(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

/// Reads a frame as RGB; gray frames are replicated into three channels.
pub fn load_frame(path: &Path) -> Result<ByteImage> {
    let img = pnm::read(path)?;
    match img.channels() {
        3 => Ok(img),
        _ => img.gray_to_rgb(),
    }
}

/// Output of the per-frame work that does not depend on other frames.
pub struct PreparedFrame {
    pub frame: PreprocessedFrame,
    pub gradients: GradientStack,
    pub blur: BlurFactor,
    timings: [f64; 3],
}

pub fn prepare_frame(rgb: &ByteImage) -> Result<PreparedFrame> {
    let t = Instant::now();
    let frame = imaging::preprocess_frame(rgb, NETWORK_INPUT)?;
    let t_pre = elapsed_ms(t);

    let t = Instant::now();
    let gray = imaging::to_grayscale(&frame.rgb)?;
    let [sx, sy, lap] = imaging::gradient_planes(&gray)?;
    let gradients = GradientStack {
        sobel_x: imaging::downsample2x(&sx)?,
        sobel_y: imaging::downsample2x(&sy)?,
        laplacian: imaging::downsample2x(&lap)?,
    };
    let t_grad = elapsed_ms(t);

    let t = Instant::now();
    let blur = imaging::blur_factor_from_laplacian(&lap);
    let t_blur = elapsed_ms(t);

    Ok(PreparedFrame {
        frame,
        gradients,
        blur,
        timings: [t_pre, t_grad, t_blur],
    })
}

fn check_frame_size(rgb: &ByteImage, cam: &CameraModel) -> Result<()> {
    if rgb.width() != cam.width || rgb.height() != cam.height {
        return Err(Error::Shape(format!(
            "frame is {}x{}, camera expects {}x{}",
            rgb.width(),
            rgb.height(),
            cam.width,
            cam.height
        )));
    }
    Ok(())
}

/// Median β, or 1 when every frame is featureless.
pub fn median_beta(blurs: &[BlurFactor]) -> f64 {
    let betas: Vec<f64> = blurs.iter().map(|b| b.beta).collect();
    let m = StageStats::from_samples(&betas).median_ms;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Debug)]
pub struct FrameResult {
    pub name: String,
    pub map: FreespaceMap,
    pub points: extraction::BorderPointSet,
    pub cloud: PointCloud3D,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub costmap: Costmap,
    pub frames: Vec<FrameResult>,
    pub report: TimingReport,
}

/// Runs the pipeline over every frame in `frames_dir`.
///
/// With `out_dir`, writes `clouds/<frame>.ply`, `costmap.pgm` +
/// `costmap.json` and `timing.json`. Malformed frames are skipped and
/// counted; a segmenter failure aborts the run.
pub fn run_pipeline(frames_dir: &Path, config: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineOutput> {
    config.validate()?;
    let paths = list_frames(frames_dir)?;
    let mut backend = config.segmenter.build()?;
    let named: Vec<(String, PathBuf)> = paths
        .into_iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (stem, p)
        })
        .collect();

    let prepared: Vec<Result<PreparedFrame>> = with_threads(config.threads, || {
        named
            .par_iter()
            .map(|(_, path)| {
                let rgb = load_frame(path)?;
                check_frame_size(&rgb, &config.camera)?;
                prepare_frame(&rgb)
            })
            .collect()
    })?;
    run_prepared(named, prepared, backend.as_mut(), config, out_dir)
}

/// Runs the pipeline over in-memory frames named `frame_000000`, ….
pub fn run_pipeline_images(
    frames: &[ByteImage],
    backend: &mut dyn SegmenterBackend,
    config: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let named = (0..frames.len())
        .map(|i| (format!("frame_{i:06}"), PathBuf::new()))
        .collect();
    let prepared = with_threads(config.threads, || {
        frames
            .par_iter()
            .map(|rgb| {
                check_frame_size(rgb, &config.camera)?;
                prepare_frame(rgb)
            })
            .collect()
    })?;
    run_prepared(named, prepared, backend, config, out_dir)
}

fn run_prepared(
    named: Vec<(String, PathBuf)>,
    prepared: Vec<Result<PreparedFrame>>,
    backend: &mut dyn SegmenterBackend,
    config: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    let mut skipped = 0;
    let mut good = Vec::with_capacity(prepared.len());
    for ((name, path), p) in named.into_iter().zip(prepared) {
        match p {
            Ok(p) => good.push((name, p)),
            Err(e) => {
                warn!("skipping frame {name} ({}): {e}", path.display());
                skipped += 1;
            }
        }
    }
    let blurs: Vec<BlurFactor> = good.iter().map(|(_, p)| p.blur).collect();
    let beta0 = config.beta0.unwrap_or_else(|| median_beta(&blurs));
    let projection = ProjectionConfig {
        beta0,
        max_range: config.max_range,
    };
    info!("{} frame(s), {skipped} skipped, beta0 = {beta0}", good.len());

    if let Some(out) = out_dir {
        fs::create_dir_all(out.join("clouds"))?;
    }
    let mut costmap = config.costmap.build()?;
    let mut samples = Samples::default();
    let mut results = Vec::with_capacity(good.len());
    for (index, (name, p)) in good.into_iter().enumerate() {
        let wrap = |e: Error| Error::Frame {
            index,
            source: Box::new(e),
        };
        let t = Instant::now();
        let map = backend.segment(index as u32, &p.frame.rgb).map_err(wrap)?;
        let t_seg = elapsed_ms(t);

        let t = Instant::now();
        let points = extraction::extract(&map, &config.extraction).map_err(wrap)?;
        let t_ext = elapsed_ms(t);

        let t = Instant::now();
        let cloud = projection::build_pointcloud(&points, &config.camera, &p.frame.crop, &p.blur, &projection, &name)
            .map_err(wrap)?;
        let t_proj = elapsed_ms(t);

        let t = Instant::now();
        costmap.integrate_pointcloud(&cloud, &config.pose);
        let t_int = elapsed_ms(t);

        let times = [p.timings[0], p.timings[1], p.timings[2], t_seg, t_ext, t_proj, t_int];
        for (s, v) in samples.stages.iter_mut().zip(times) {
            s.push(v);
        }
        let total: f64 = times.iter().sum();
        samples.total.push(total);
        samples.without_segmentation.push(total - t_seg);

        if let Some(out) = out_dir {
            let file = fs::File::create(out.join("clouds").join(format!("{name}.ply")))?;
            ply::write_ply(std::io::BufWriter::new(file), &cloud)?;
        }
        results.push(FrameResult {
            name,
            map,
            points,
            cloud,
        });
    }
    let report = samples.report(results.len(), skipped, beta0);
    if let Some(out) = out_dir {
        costmap.export(out.join("costmap.pgm"))?;
        fs::write(out.join("timing.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(PipelineOutput {
        costmap,
        frames: results,
        report,
    })
}

/// Times every stage over `iterations` passes through `frames`, after
/// [`WARMUP_FRAMES`] untimed frames.
pub fn bench_images(
    frames: &[ByteImage],
    iterations: usize,
    backend: &mut dyn SegmenterBackend,
    config: &PipelineConfig,
) -> Result<TimingReport> {
    config.validate()?;
    if iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let total_frames = frames.len();
    let frames: Vec<&ByteImage> = frames
        .iter()
        .filter(|f| match check_frame_size(f, &config.camera) {
            Ok(()) => true,
            Err(e) => {
                warn!("skipping frame: {e}");
                false
            }
        })
        .collect();
    let skipped = total_frames - frames.len();
    if frames.is_empty() {
        return Ok(Samples::default().report(0, skipped, config.beta0.unwrap_or(1.0)));
    }
    let beta0 = match config.beta0 {
        Some(b) => b,
        None => {
            let blurs = frames
                .iter()
                .map(|f| prepare_frame(f).map(|p| p.blur))
                .collect::<Result<Vec<_>>>()?;
            median_beta(&blurs)
        }
    };
    let projection = ProjectionConfig {
        beta0,
        max_range: config.max_range,
    };
    let mut costmap = config.costmap.build()?;
    let mut samples = Samples::default();

    let mut run_one = |index: usize, rgb: &ByteImage, samples: Option<&mut Samples>| -> Result<()> {
        let start = Instant::now();
        let p = prepare_frame(rgb)?;
        let t = Instant::now();
        let map = backend.segment(index as u32, &p.frame.rgb)?;
        let t_seg = elapsed_ms(t);
        let t = Instant::now();
        let points = extraction::extract(&map, &config.extraction)?;
        let t_ext = elapsed_ms(t);
        let t = Instant::now();
        let cloud =
            projection::build_pointcloud(&points, &config.camera, &p.frame.crop, &p.blur, &projection, "bench")?;
        let t_proj = elapsed_ms(t);
        let t = Instant::now();
        costmap.integrate_pointcloud(&cloud, &config.pose);
        let t_int = elapsed_ms(t);
        let total = elapsed_ms(start);
        if let Some(samples) = samples {
            let times = [p.timings[0], p.timings[1], p.timings[2], t_seg, t_ext, t_proj, t_int];
            for (s, v) in samples.stages.iter_mut().zip(times) {
                s.push(v);
            }
            samples.total.push(total);
            samples.without_segmentation.push(total - t_seg);
        }
        Ok(())
    };

    for i in 0..WARMUP_FRAMES {
        let index = i % frames.len();
        run_one(index, frames[index], None)?;
    }
    for _ in 0..iterations {
        for (index, rgb) in frames.iter().enumerate() {
            run_one(index, rgb, Some(&mut samples))?;
        }
    }
    Ok(samples.report(frames.len(), skipped, beta0))
}

/// [`bench_images`] over the frames of a directory.
pub fn bench(frames_dir: &Path, iterations: usize, config: &PipelineConfig) -> Result<TimingReport> {
    let mut skipped = 0;
    let mut frames = Vec::new();
    for path in list_frames(frames_dir)? {
        match load_frame(&path) {
            Ok(f) => frames.push(f),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    let mut backend = config.segmenter.build()?;
    let mut report = bench_images(&frames, iterations, backend.as_mut(), config)?;
    report.skipped += skipped;
    Ok(report)
}

/// Writes `frames/frame_NNNNNN.ppm`, map-space truth masks `masks/<i>.pgm`,
/// `scenes.json` and `camera.json` (all scenes must share one camera).
pub fn write_synthetic_set(out_dir: &Path, scenes: &[SceneSpec]) -> Result<()> {
    let Some(first) = scenes.first() else {
        return Err(Error::Config("no scenes to render".into()));
    };
    if scenes.iter().any(|s| s.camera != first.camera) {
        return Err(Error::Scene("all scenes in a set must share one camera".into()));
    }
    let frames = out_dir.join("frames");
    let masks = out_dir.join("masks");
    fs::create_dir_all(&frames)?;
    fs::create_dir_all(&masks)?;
    let crop = imaging::CropMeta::bottom_two_thirds(first.camera.width, first.camera.height, NETWORK_INPUT)?;
    let rendered = scenes.par_iter().map(render_scene).collect::<Result<Vec<_>>>()?;
    for (i, r) in rendered.iter().enumerate() {
        pnm::write(frames.join(format!("frame_{i:06}.ppm")), &r.rgb)?;
        resample_to_map(&r.truth, &crop).write_pgm(masks.join(format!("{i}.pgm")))?;
    }
    fs::write(out_dir.join("camera.json"), first.camera.to_json())?;
    fs::write(out_dir.join("scenes.json"), serde_json::to_string_pretty(scenes)?)?;
    Ok(())
}

/// Renders each scene, segments its network frame and scores it against the
/// map-space truth.
pub fn evaluate_scenes(scenes: &[SceneSpec], backend: &mut dyn SegmenterBackend) -> Result<MetricReport> {
    let mut reports = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let r = render_scene(scene)?;
        let frame = imaging::preprocess_frame(&r.rgb, NETWORK_INPUT)?;
        let pred = backend.segment(i as u32, &frame.rgb)?;
        let truth = resample_to_map(&r.truth, &frame.crop);
        reports.push(evaluation::miou(&pred, &truth)?);
    }
    Ok(MetricReport::average(&reports))
}

/// Scores a segmenter over `frames_dir` against masks `<i>.pgm` in
/// `truth_dir`, frame `i` being the i-th frame in name order.
pub fn evaluate_dirs(frames_dir: &Path, truth_dir: &Path, backend: &mut dyn SegmenterBackend) -> Result<MetricReport> {
    let mut reports = Vec::new();
    for (i, path) in list_frames(frames_dir)?.iter().enumerate() {
        let rgb = load_frame(path)?;
        let frame = imaging::preprocess_frame(&rgb, NETWORK_INPUT)?;
        let pred = backend.segment(i as u32, &frame.rgb)?;
        let truth = FreespaceMap::read_pgm(truth_dir.join(format!("{i}.pgm")))?;
        reports.push(evaluation::miou(&pred, &truth)?);
    }
    Ok(MetricReport::average(&reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_percentiles() {
        let s = StageStats::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.samples, s.median_ms, s.p95_ms, s.mean_ms), (5, 3.0, 5.0, 3.0));
        let s = StageStats::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.median_ms, 2.5);
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(StageStats::from_samples(&xs).p95_ms, 95.0);
        assert_eq!(StageStats::from_samples(&[]), StageStats::default());
    }

    #[test]
    fn median_beta_fallback() {
        let b = |beta| BlurFactor {
            beta,
            beta_mean_abs: 0.0,
            pixel_count: 1,
        };
        assert_eq!(median_beta(&[b(0.0), b(0.0)]), 1.0);
        assert_eq!(median_beta(&[b(1.0), b(9.0), b(4.0)]), 4.0);
    }
}
