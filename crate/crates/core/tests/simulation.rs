//! End-to-end simulator runs: synthetic scenes, file-backed scenarios and
//! the throughput accounting at full camera resolution.

use std::fs;
use std::path::Path;

use mvmask::error::Error;
use mvmask::geometry::format_calibration;
use mvmask::imageio::{save_image, RasterImage};
use mvmask::sim::synthetic::{SceneConfig, SyntheticScene};
use mvmask::sim::{self, DropoutPolicy, Scenario};
use mvmask::wire::HeaderPolicy;

fn scene(cameras: usize, width: u32, height: u32) -> SyntheticScene {
    SyntheticScene::new(SceneConfig {
        cameras,
        width,
        height,
        focal: width as f64 * 0.7,
        area: 6.0,
        walkers: 6,
        camera_radius: 7.0,
        camera_height: 4.0,
        frame_rate: 2.0,
        seed: 3,
    })
    .unwrap()
}

#[test]
fn half_dropout_averages_half_the_cameras() {
    let scenario = Scenario {
        dropout: 0.5,
        base_seed: 2024,
        patch_size: 8,
        ..Scenario::synthetic(scene(7, 64, 48), 400)
    };
    let run = sim::run(&scenario).unwrap();
    let mean = run.summary.mean_active_cameras;
    assert!((mean - 3.5).abs() <= 0.3, "mean active cameras {mean}");
    for f in &run.frames {
        assert_eq!(f.comm.cameras, f.active_cameras.len());
        assert_eq!(f.cameras.len(), f.active_cameras.len());
    }
}

#[test]
fn throughput_at_full_resolution() {
    let scenario = Scenario {
        header_policy: HeaderPolicy::PayloadOnly,
        ..Scenario::synthetic(scene(7, 1280, 720), 2)
    };
    let run = sim::run(&scenario).unwrap();
    for f in &run.frames {
        assert_eq!(f.comm.total_bits, 11_625_600);
    }
    let bps = sim::throughput(&run.frames, 2.0).unwrap();
    assert_eq!(bps, 23_251_200.0);
    assert_eq!(run.summary.throughput_bps, bps);
}

#[test]
fn fixed_dropout_is_constant_over_time() {
    let scenario = Scenario {
        dropout: 0.5,
        dropout_policy: DropoutPolicy::Fixed,
        patch_size: 8,
        ..Scenario::synthetic(scene(7, 64, 48), 5)
    };
    let run = sim::run(&scenario).unwrap();
    for f in &run.frames {
        assert_eq!(f.active_cameras, vec![3, 4, 5, 6]);
    }
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario {
        patch_size: 8,
        ..Scenario::synthetic(scene(2, 64, 48), 3)
    };
    let run = sim::run(&scenario).unwrap();
    sim::write_outputs(&run, dir.path(), true).unwrap();
    let csv = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), sim::FRAME_CSV_HEADER);
    assert_eq!(csv.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["frames"], 3);
    assert_eq!(report["mode"], "semantic");
    for frame in 0..3 {
        assert!(dir.path().join(format!("bev_{frame:06}.pgm")).is_file());
    }
}

/// Writes a two-camera, three-frame sequence rendered from a synthetic scene.
fn write_sequence(dir: &Path, frames: u32) -> String {
    let scene = scene(2, 64, 48);
    let mut config = String::from("frames = 3\npatch_size = 8\nbev.rows = 60\nbev.cols = 60\n");
    for (c, cam) in scene.cameras().iter().enumerate() {
        fs::write(dir.join(format!("c{c}.txt")), format_calibration(cam)).unwrap();
        fs::create_dir_all(dir.join(format!("c{c}"))).unwrap();
        for f in 0..frames {
            let (img, mask) = scene.render(c, f);
            save_image(&img, dir.join(format!("c{c}/img_{f:03}.ppm"))).unwrap();
            let gray = RasterImage::new(64, 48, 1, mask.data().iter().map(|&m| m * 255).collect()).unwrap();
            save_image(&gray, dir.join(format!("c{c}/mask_{f:03}.pgm"))).unwrap();
        }
        config.push_str(&format!(
            "camera.{c}.calibration = c{c}.txt\ncamera.{c}.images = c{c}/img_{{frame:03}}.ppm\ncamera.{c}.masks = c{c}/mask_{{frame:03}}.pgm\n"
        ));
    }
    config
}

#[test]
fn file_backed_scenario_matches_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_sequence(dir.path(), 3);
    fs::write(dir.path().join("scenario.cfg"), &config).unwrap();
    let from_files = Scenario::load(dir.path().join("scenario.cfg")).unwrap();
    let synthetic = Scenario {
        patch_size: 8,
        ..Scenario::synthetic(scene(2, 64, 48), 3)
    };
    let (a, b) = (sim::run(&from_files).unwrap(), sim::run(&synthetic).unwrap());
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        assert_eq!(fa.comm, fb.comm);
        assert_eq!(fa.cameras, fb.cameras);
        assert_eq!(fa.covered_cells, fb.covered_cells);
    }
}

#[test]
fn missing_frame_reports_its_index() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_sequence(dir.path(), 2);
    let scenario = Scenario::parse(&config, dir.path()).unwrap();
    match sim::run(&scenario) {
        Err(Error::FrameInput { frame, camera, source }) => {
            assert_eq!((frame, camera), (2, 0));
            assert!(matches!(*source, Error::Io { .. }));
        }
        other => panic!("expected a frame input error, got {other:?}"),
    }
}
