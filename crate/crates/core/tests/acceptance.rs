//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use fsnav_core::evaluation::{
    miou, poly_lr, relu6_rewrite, render_scene, resample_to_map, standard_camera, synthetic_corpus, Rect,
};
use fsnav_core::extraction::{self, border_predicate, extract_contours, polar_angle};
use fsnav_core::imaging::{self, NETWORK_INPUT};
use fsnav_core::pipeline::{self, PipelineConfig};
use fsnav_core::segmenter::{Capabilities, ExecBackend, FloodBackend, SegmenterBackend};
use fsnav_core::{
    ByteImage, Error, ExtractionConfig, FreespaceMap, Method, Plane, PointKind, SceneSpec, SegmenterSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        {
            let ok: bool = $cond;
            if !ok {
                return Err(format!($($msg)+));
            }
        }
    };
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("geometry round trip (wall at 2.0 m)", geometry_round_trip),
        ("negative obstacle (drop-off at 1.5 m)", negative_obstacle),
        ("border predicate soundness", predicate_soundness),
        ("kernel oracle equivalence", kernel_oracle),
        ("blur invariants", blur_invariants),
        ("mIoU oracle", miou_oracle),
        ("poly learning-rate schedule", poly_schedule),
        ("relu6 rewrite", relu6),
        ("non-NN throughput", throughput),
        ("flood segmenter mIoU on synthetic corpus", flood_miou),
        ("contour of a centred square", contour_count),
        ("FSEG protocol soak and fixtures", fseg_protocol),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2}: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name} ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn scene(walls: Vec<Rect>, holes: Vec<Rect>) -> SceneSpec {
    SceneSpec {
        ground: None,
        walls,
        holes,
        floor_color: [90, 160, 90],
        obstacle_color: [200, 60, 60],
        camera: standard_camera(),
    }
}

fn run_scene(dir: &Path, spec: &SceneSpec, copies: usize) -> Result<pipeline::PipelineOutput, String> {
    let scenes = vec![spec.clone(); copies];
    pipeline::write_synthetic_set(dir, &scenes).map_err(|e| e.to_string())?;
    let config = PipelineConfig::new(standard_camera(), SegmenterSpec::file(dir.join("masks")));
    pipeline::run_pipeline(&dir.join("frames"), &config, Some(&dir.join("out"))).map_err(|e| e.to_string())
}

/// Polar rays (k = 64) that reach map row `row` before leaving the sides,
/// with a 2 px margin.
fn rays_reaching(row: usize) -> Vec<u32> {
    let rise = (NETWORK_INPUT - row) as f64;
    (0..64)
        .filter(|&j| {
            let theta = polar_angle(j, 64);
            (theta.cos() / theta.sin()).abs() * rise < NETWORK_INPUT as f64 / 2.0 - 2.0
        })
        .map(|j| j as u32)
        .collect()
}

fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = run_scene(dir.path(), &scene(vec![Rect::new(2.0, 3.0, -20.0, 20.0)], vec![]), 1)?;
    let cloud = &out.frames[0].cloud;
    let points = &out.frames[0].points;
    // wall foot at image row cy + fy·h/2 = 243, map row 131
    let expected = rays_reaching(131);
    ensure!(
        expected.len() >= 30,
        "only {} rays expected to reach the wall",
        expected.len()
    );
    let mut worst: f64 = 0.0;
    for j in &expected {
        let Some(idx) = points
            .iter()
            .position(|p| p.ray_index == Some(*j) && p.kind == PointKind::Border)
        else {
            return Err(format!("ray {j} has no border point"));
        };
        // border points and cloud points stay aligned when nothing is dropped
        ensure!(cloud.points.len() == points.len(), "cloud dropped points");
        let depth = cloud.points[idx].x;
        worst = worst.max((depth - 2.0).abs() / 2.0);
    }
    ensure!(worst <= 0.02, "worst depth error {:.2}%", worst * 100.0);
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "{} rays, worst error {:.2}%, {:.0} ms",
        expected.len(),
        worst * 100.0,
        elapsed.as_secs_f64() * 1e3
    ))
}

fn negative_obstacle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = scene(vec![], vec![Rect::new(1.5, 4.0, -20.0, 20.0)]);
    let out = run_scene(dir.path(), &spec, 10)?;
    let frame = &out.frames[0];
    // drop-off edge at image row cy + fy·h/1.5 = 268, map row 156
    let expected = rays_reaching(156);
    let mut worst: f64 = 0.0;
    for j in &expected {
        let Some(idx) = frame.points.iter().position(|p| p.ray_index == Some(*j)) else {
            return Err(format!("ray {j} has no border point"));
        };
        let depth = frame.cloud.points[idx].x;
        worst = worst.max((depth - 1.5).abs() / 1.5);
    }
    ensure!(worst <= 0.02, "worst depth error {:.2}%", worst * 100.0);

    let costmap = &out.costmap;
    let lethal = costmap.params().lethal_threshold;
    for p in &frame.cloud.points {
        let (c, r) = costmap.world_to_cell(p.x, p.y).ok_or("point outside the costmap")?;
        ensure!(
            costmap.cost(c, r) >= lethal,
            "cell of ({:.3}, {:.3}) not lethal",
            p.x,
            p.y
        );
    }
    let mut band = 0;
    for r in 0..costmap.height() {
        for c in 0..costmap.width() {
            if costmap.cost(c, r) >= lethal {
                let (x, _) = costmap.cell_center(c, r);
                ensure!((1.4..1.6).contains(&x), "lethal cell at x = {x:.3}");
                band += 1;
            }
        }
    }
    ensure!(
        costmap.is_traversable(1.0, 0.0, 0.2),
        "approach to the drop-off is not traversable"
    );
    Ok(format!(
        "{} rays, worst error {:.2}%, {band} lethal cells in x∈[1.4, 1.6)",
        expected.len(),
        worst * 100.0
    ))
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FreespaceMap {
    let mut map = FreespaceMap::all_free(w, h);
    for _ in 0..rng.gen_range(1..8) {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = ((x0 + rng.gen_range(1..80)).min(w), (y0 + rng.gen_range(1..80)).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                map.set(x, y, false);
            }
        }
    }
    let noise = rng.gen_range(0.0..0.05);
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(noise) {
                map.set(x, y, !map.is_free(x, y));
            }
        }
    }
    map
}

fn predicate_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..50 {
        let map = random_mask(&mut rng, 224, 224);
        for method in Method::ALL {
            let config = ExtractionConfig {
                method,
                ..Default::default()
            };
            for p in extraction::extract(&map, &config).map_err(|e| e.to_string())? {
                if p.kind == PointKind::MinimalRange {
                    continue;
                }
                ensure!(
                    border_predicate(&map, p.u, p.v).map_err(|e| e.to_string())?,
                    "{method} point ({}, {}) fails the predicate",
                    p.u,
                    p.v
                );
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} points checked"))
}

fn naive(img: &ByteImage, k: &[[f32; 3]; 3]) -> Plane {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let at = |x: i64, y: i64| f32::from(img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize, 0));
    Plane::from_fn(img.width(), img.height(), |x, y| {
        let mut s = 0.0;
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                s += kv * at(x as i64 + dx as i64 - 1, y as i64 + dy as i64 - 1);
            }
        }
        s
    })
}

fn kernel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kernels = [imaging::SOBEL_X, imaging::SOBEL_Y, imaging::LAPLACIAN];
    let mut worst = 0.0f32;
    for _ in 0..20 {
        let img = ByteImage::from_fn(64, 64, |_, _| rng.gen());
        let planes = imaging::gradient_planes(&img).map_err(|e| e.to_string())?;
        for (plane, k) in planes.iter().zip(&kernels) {
            let reference = naive(&img, k);
            for (a, b) in plane.data().iter().zip(reference.data()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure!(worst <= 1e-4, "max difference {worst}");
    Ok(format!("max difference {worst}"))
}

fn blur_invariants() -> Outcome {
    for value in [0u8, 77, 255] {
        let flat = ByteImage::filled(40, 30, 1, value);
        let b = imaging::blur_factor(&flat).map_err(|e| e.to_string())?.beta;
        ensure!(b == 0.0, "constant {value} gives beta {b}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let img = ByteImage::from_fn(48, 40, |_, _| rng.gen_range(0..=127));
        let doubled = img.map(|v| v * 2);
        let b1 = imaging::blur_factor(&img).map_err(|e| e.to_string())?.beta;
        let b2 = imaging::blur_factor(&doubled).map_err(|e| e.to_string())?.beta;
        ensure!(b2 == 4.0 * b1, "beta(2I) = {b2}, 4 beta(I) = {}", 4.0 * b1);
    }
    Ok("constant and scaling checks exact".into())
}

fn miou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = FreespaceMap::from_fn(16, 16, |_, _| rng.gen());
    let inv = FreespaceMap::from_fn(16, 16, |x, y| !a.is_free(x, y));
    let same = miou(&a, &a).map_err(|e| e.to_string())?.miou;
    let disjoint = miou(&a, &inv).map_err(|e| e.to_string())?.miou;
    ensure!(same == 1.0, "identity gives {same}");
    ensure!(disjoint == 0.0, "disjoint gives {disjoint}");
    for _ in 0..100 {
        let p = FreespaceMap::from_fn(16, 16, |_, _| rng.gen_bool(0.6));
        let g = FreespaceMap::from_fn(16, 16, |_, _| rng.gen_bool(0.6));
        let mut counts = [[0u32; 2]; 2];
        for y in 0..16 {
            for x in 0..16 {
                counts[p.is_free(x, y) as usize][g.is_free(x, y) as usize] += 1;
            }
        }
        let iou = |c: usize| {
            let inter = counts[c][c];
            let union = counts[c][0] + counts[c][1] + counts[0][c] + counts[1][c] - inter;
            if union == 0 {
                1.0
            } else {
                f64::from(inter) / f64::from(union)
            }
        };
        let expected = (iou(1) + iou(0)) / 2.0;
        let got = miou(&p, &g).map_err(|e| e.to_string())?.miou;
        ensure!(got == expected, "got {got}, oracle {expected}");
    }
    Ok("identity 1, disjoint 0, 100 random pairs exact".into())
}

fn poly_schedule() -> Outcome {
    let lr = |e: f64| poly_lr(e).map_err(|e| e.to_string());
    ensure!(lr(0.0)? == 0.0006, "poly_lr(0) = {}", lr(0.0)?);
    ensure!(lr(1000.0)? == 0.0, "poly_lr(1000) = {}", lr(1000.0)?);
    let mut prev = lr(0.0)?;
    for e in 1..=1000 {
        let cur = lr(f64::from(e))?;
        ensure!(cur < prev, "not decreasing at epoch {e}");
        prev = cur;
    }
    Ok("endpoints exact, strictly decreasing".into())
}

fn relu6() -> Outcome {
    for i in -1000..=1000 {
        let x = f64::from(i) * 0.01;
        let got = relu6_rewrite(x);
        ensure!(got == x.clamp(0.0, 6.0), "relu6_rewrite({x}) = {got}");
    }
    Ok("2001 samples exact".into())
}

/// Replays precomputed masks, so timing covers only the non-NN stages.
struct Replay(Vec<FreespaceMap>);

impl SegmenterBackend for Replay {
    fn capabilities(&self) -> Capabilities {
        Capabilities::new("replay")
    }

    fn segment(&mut self, frame_index: u32, _rgb: &ByteImage) -> fsnav_core::Result<FreespaceMap> {
        Ok(self.0[frame_index as usize % self.0.len()].clone())
    }
}

fn throughput() -> Outcome {
    let scenes = synthetic_corpus(8, 9);
    let mut frames = Vec::new();
    let mut masks = Vec::new();
    for s in &scenes {
        let r = render_scene(s).map_err(|e| e.to_string())?;
        let crop = imaging::CropMeta::bottom_two_thirds(r.rgb.width(), r.rgb.height(), NETWORK_INPUT)
            .map_err(|e| e.to_string())?;
        masks.push(resample_to_map(&r.truth, &crop));
        frames.push(r.rgb);
    }
    let mut config = PipelineConfig::new(standard_camera(), SegmenterSpec::Flood(30.0));
    config.extraction = ExtractionConfig {
        method: Method::Polar,
        count: 64,
        ..Default::default()
    };
    let report = pipeline::bench_images(&frames, 25, &mut Replay(masks), &config).map_err(|e| e.to_string())?;
    let median = report.without_segmentation.median_ms;
    ensure!(median <= 5.0, "median non-NN time {median:.3} ms");
    Ok(format!(
        "median {median:.3} ms/frame ({:.0} fps), {} samples",
        1000.0 / median,
        report.without_segmentation.samples
    ))
}

fn flood_miou() -> Outcome {
    let scenes = synthetic_corpus(50, 10);
    let report = pipeline::evaluate_scenes(&scenes, &mut FloodBackend::default()).map_err(|e| e.to_string())?;
    ensure!(report.miou >= 0.95, "mIoU {:.4}", report.miou);
    Ok(format!("mIoU {:.4} over {} scenes", report.miou, report.frame_count))
}

fn contour_count() -> Outcome {
    let map = FreespaceMap::from_fn(224, 224, |x, y| (62..162).contains(&x) && (62..162).contains(&y));
    let contours = extract_contours(&map);
    ensure!(contours.len() == 1, "{} contours", contours.len());
    ensure!(contours[0].points.len() == 396, "{} points", contours[0].points.len());
    Ok("1 contour, 396 points".into())
}

fn fd_count() -> usize {
    std::fs::read_dir("/proc/self/fd").map(|d| d.count()).unwrap_or(0)
}

fn thread_count() -> usize {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("Threads:").and_then(|v| v.trim().parse().ok()))
        })
        .unwrap_or(0)
}

fn fseg_protocol() -> Outcome {
    let echo = env!("CARGO_BIN_EXE_fseg-echo");
    let frame = ByteImage::filled(224, 224, 3, 128);
    let (fds_before, threads_before) = (fd_count(), thread_count());
    let mut fds_mid = 0;
    {
        let mut backend = ExecBackend::spawn(&format!("'{echo}' free")).map_err(|e| e.to_string())?;
        for i in 0..1000u32 {
            let map = backend.segment(i, &frame).map_err(|e| format!("frame {i}: {e}"))?;
            ensure!(map.free_count() == 224 * 224, "frame {i}: wrong mask");
            if i == 10 {
                fds_mid = fd_count();
            }
        }
        ensure!(
            fd_count() == fds_mid,
            "descriptors grew from {fds_mid} to {}",
            fd_count()
        );
    }
    ensure!(
        fd_count() == fds_before,
        "descriptors leaked: {fds_before} -> {}",
        fd_count()
    );
    ensure!(thread_count() == threads_before, "threads leaked");

    for mode in ["truncate", "bad-magic"] {
        let mut backend = ExecBackend::spawn(&format!("'{echo}' {mode}")).map_err(|e| e.to_string())?;
        match backend.segment(0, &frame) {
            Err(e @ Error::Protocol(_)) => ensure!(e.kind() == "ProtocolError", "kind {}", e.kind()),
            other => return Err(format!("{mode}: expected ProtocolError, got {other:?}")),
        }
    }
    Ok(format!("1000 frames, {fds_before} descriptors before and after"))
}
