use std::fs;
use std::path::Path;

use fsnav_core::evaluation::{render_scene, standard_camera, synthetic_corpus, Rect};
use fsnav_core::pipeline::{self, PipelineConfig, STAGES};
use fsnav_core::segmenter::{Capabilities, SegmenterBackend};
use fsnav_core::{ByteImage, Error, FreespaceMap, SceneSpec, SegmenterSpec};

fn wall_scene(depth: f64) -> SceneSpec {
    SceneSpec {
        ground: None,
        walls: vec![Rect::new(depth, depth + 1.0, -20.0, 20.0)],
        holes: vec![],
        floor_color: [60, 140, 60],
        obstacle_color: [220, 220, 220],
        camera: standard_camera(),
    }
}

fn synth(dir: &Path, scenes: &[SceneSpec]) -> PipelineConfig {
    pipeline::write_synthetic_set(dir, scenes).unwrap();
    PipelineConfig::new(standard_camera(), SegmenterSpec::file(dir.join("masks")))
}

#[test]
fn empty_frames_dir_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    let out = pipeline::run_pipeline(&frames, &config, Some(&dir.path().join("out"))).unwrap();
    assert_eq!(out.report.frames, 0);
    assert_eq!(out.report.skipped, 0);
    assert_eq!(out.costmap.lethal_count(), 0);
    assert!(out.costmap.cells().iter().all(|&c| c == 0));
    assert!(dir.path().join("out/timing.json").exists());
}

#[test]
fn wall_frames_build_lethal_band_at_wall_depth() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), &vec![wall_scene(2.0); 10]);
    let out_dir = dir.path().join("out");
    let out = pipeline::run_pipeline(&dir.path().join("frames"), &config, Some(&out_dir)).unwrap();
    assert_eq!(out.report.frames, 10);
    let cm = &out.costmap;
    let res = cm.resolution();
    let mut lethal = 0;
    for r in 0..cm.height() {
        for c in 0..cm.width() {
            if cm.cost(c, r) >= cm.params().lethal_threshold {
                let (x, _) = cm.cell_center(c, r);
                // wall face at 2.0 m; the last free row backprojects to 1.974 m
                assert!((x - 2.0).abs() <= 1.5 * res, "lethal cell at x = {x}");
                lethal += 1;
            }
        }
    }
    assert!(lethal > 20, "{lethal} lethal cells");
    assert!(cm.is_traversable(1.5, 0.0, 0.1));
    for i in 0..10 {
        assert!(out_dir.join(format!("clouds/frame_{i:06}.ply")).exists());
    }
    assert!(out_dir.join("costmap.pgm").exists());
    assert!(out_dir.join("costmap.json").exists());
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["frames"], 10);
    assert_eq!(timing["stages"].as_array().unwrap().len(), STAGES.len());
}

#[test]
fn pipeline_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = synth(dir.path(), &synthetic_corpus(6, 11));
    let frames = dir.path().join("frames");
    let a = pipeline::run_pipeline(&frames, &config, None).unwrap();
    config.threads = Some(1);
    let b = pipeline::run_pipeline(&frames, &config, None).unwrap();
    assert_eq!(a.costmap.cells(), b.costmap.cells());
    assert_eq!(a.report.beta0, b.report.beta0);
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        assert_eq!(fa.points, fb.points);
        assert_eq!(fa.cloud.points, fb.cloud.points);
    }
}

#[test]
fn flood_on_uniform_floor_marks_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    for i in 0..3 {
        fsnav_core::pnm::write(frames.join(format!("{i}.ppm")), &ByteImage::filled(224, 336, 3, 90)).unwrap();
    }
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    let out = pipeline::run_pipeline(&frames, &config, None).unwrap();
    assert_eq!(out.report.frames, 3);
    assert!(out.frames.iter().all(|f| f.points.is_empty()));
    assert_eq!(out.costmap.lethal_count(), 0);
}

#[test]
fn malformed_frames_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), &[wall_scene(2.0)]);
    let frames = dir.path().join("frames");
    fs::write(frames.join("frame_000001.ppm"), b"P6\n4 4\n255\nshort").unwrap();
    fsnav_core::pnm::write(frames.join("frame_000002.ppm"), &ByteImage::filled(100, 80, 3, 0)).unwrap();
    let out = pipeline::run_pipeline(&frames, &config, None).unwrap();
    assert_eq!(out.report.frames, 1);
    assert_eq!(out.report.skipped, 2);
}

#[test]
fn backend_failure_reports_frame_index() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), &[wall_scene(2.0), wall_scene(3.0)]);
    fs::remove_file(dir.path().join("masks/1.pgm")).unwrap();
    let err = pipeline::run_pipeline(&dir.path().join("frames"), &config, None).unwrap_err();
    match &err {
        Error::Frame { index, .. } => assert_eq!(*index, 1),
        other => panic!("expected frame error, got {other:?}"),
    }
    assert_eq!(err.kind(), "BackendError");
}

struct AllFree;

impl SegmenterBackend for AllFree {
    fn capabilities(&self) -> Capabilities {
        Capabilities::new("all-free")
    }

    fn segment(&mut self, _frame_index: u32, _rgb: &ByteImage) -> fsnav_core::Result<FreespaceMap> {
        Ok(FreespaceMap::all_free(224, 224))
    }
}

#[test]
fn bench_counts_samples_and_derives_fps() {
    let frame = render_scene(&wall_scene(2.0)).unwrap().rgb;
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    let report = pipeline::bench_images(&[frame], 100, &mut AllFree, &config).unwrap();
    assert_eq!(report.frames, 1);
    for s in &report.stages {
        assert_eq!(s.stats.samples, 100, "{}", s.stage);
    }
    assert_eq!(report.total.samples, 100);
    let fps = 1000.0 / report.total.median_ms;
    assert!((report.fps - fps).abs() <= 1e-9 * fps);
    // stage medians sum to no more than the whole-frame median plus 10%
    let sum: f64 = report.stages.iter().map(|s| s.stats.median_ms).sum();
    assert!(
        sum <= report.total.median_ms * 1.1,
        "{sum} vs {}",
        report.total.median_ms
    );
}

#[test]
fn bench_skips_mis_sized_frames() {
    let good = render_scene(&wall_scene(2.0)).unwrap().rgb;
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    let frames = [good, ByteImage::filled(64, 64, 3, 0)];
    let report = pipeline::bench_images(&frames, 2, &mut AllFree, &config).unwrap();
    assert_eq!((report.frames, report.skipped, report.total.samples), (1, 1, 2));
}

#[test]
fn bench_rejects_zero_iterations() {
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    let err = pipeline::bench_images(&[], 0, &mut AllFree, &config).unwrap_err();
    assert_eq!(err.kind(), "ConfigError");
}

#[test]
fn synthetic_set_and_dir_evaluation_agree() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = synthetic_corpus(4, 12);
    pipeline::write_synthetic_set(dir.path(), &scenes).unwrap();
    let mut truth = SegmenterSpec::file(dir.path().join("masks")).build().unwrap();
    let perfect =
        pipeline::evaluate_dirs(&dir.path().join("frames"), &dir.path().join("masks"), truth.as_mut()).unwrap();
    assert_eq!(perfect.miou, 1.0);
    assert_eq!(perfect.frame_count, 4);
    let cam = fsnav_core::CameraModel::load(dir.path().join("camera.json")).unwrap();
    assert_eq!(cam, standard_camera());
}
