use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvmask::geometry::format_calibration;
use mvmask::imageio::{binarize_mask, downsample_by_2, encode_pnm, load_image, save_image, RasterImage};
use mvmask::masking::semantic_plan;
use mvmask::patch_grid::{make_grid, MaskingRatio};
use mvmask::reconstruct::{fill_baseline, FillMethod};
use mvmask::sim::synthetic::{SceneConfig, SyntheticScene};
use mvmask::wire;

fn mvmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvmask")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene() -> SyntheticScene {
    SyntheticScene::new(SceneConfig {
        cameras: 2,
        width: 160,
        height: 120,
        focal: 110.0,
        area: 6.0,
        walkers: 6,
        camera_radius: 7.0,
        camera_height: 4.0,
        frame_rate: 2.0,
        seed: 5,
    })
    .unwrap()
}

/// Writes frame 0 of camera 0 as `img.ppm` / `seg.pgm`.
fn write_frame(dir: &Path) -> (PathBuf, PathBuf) {
    let (img, mask) = scene().render(0, 0);
    let (ip, sp) = (dir.join("img.ppm"), dir.join("seg.pgm"));
    save_image(&img, &ip).unwrap();
    save_image(&mask.to_visual(), &sp).unwrap();
    (ip, sp)
}

#[test]
fn report_matches_table_volume() {
    let out = mvmask(&["report", "--cameras", "7", "--ratio", "0.7", "--header-policy", "payload-only"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("11625600 bits (11.63 Mb"), "{text}");
    assert!(text.contains("154.83 Mb"));
}

#[test]
fn usage_errors_exit_one() {
    let out = mvmask(&["report", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mvmask(&["report", "--ratio", "1.5"]).status.code(), Some(1));
    assert_eq!(mvmask(&[]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let (img, _) = write_frame(dir.path());
    let out = mvmask(&["mask", s(&img), "-o", s(&dir.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(1), "semantic mode without a mask");
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"MVPF\x09rest").unwrap();
    let out = mvmask(&["decode", s(&junk), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let missing = dir.path().join("missing.ppm");
    assert_eq!(mvmask(&["mask", "--mode", "random", s(&missing), "-o", "x"]).status.code(), Some(2));
}

#[test]
fn mask_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (img, seg) = write_frame(dir.path());
    let plans: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("plan{i}.bin"));
            let args = ["mask", "--ratio", "0.7", "--kappa", "0.15", "--mode", "semantic", "--seed", "42"];
            let status = mvmask(&[&args[..], &[s(&img), s(&seg), "-o", s(&out)]].concat()).status;
            assert!(status.success());
            fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(plans[0], plans[1]);
    let plan = mvmask::MaskPlan::from_json(&plans[0]).unwrap();
    assert_eq!(plan.grid().patch_count(), 4 * 3);
    assert_eq!(plan.seed(), 42);
}

#[test]
fn encode_decode_fill_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (img, seg) = write_frame(dir.path());
    let frame = dir.path().join("frame.mvp");
    let flags = ["--ratio", "0.5", "--seed", "9", "--patch-size", "10", "--camera", "3", "--frame", "17"];
    assert!(mvmask(&[&["encode"][..], &flags, &[s(&img), s(&seg), "-o", s(&frame)]].concat()).status.success());
    let outdir = dir.path().join("decoded");
    assert!(mvmask(&["decode", s(&frame), "-o", s(&outdir)]).status.success());
    let sparse = outdir.join("c003_f000017.ppm");
    let plan = outdir.join("c003_f000017.plan.json");
    let filled = dir.path().join("filled.ppm");
    let out = mvmask(&["fill", "--fill-method", "nearest-patch", "--plan", s(&plan), s(&sparse), "-o", s(&filled)]);
    assert!(out.status.success());

    // the same composition through the library
    let full = downsample_by_2(&load_image(&img).unwrap()).unwrap();
    let mask = binarize_mask(&load_image(&seg).unwrap(), 128).unwrap().downsample_by_2().unwrap();
    let grid = make_grid(80, 60, 10).unwrap();
    let lib_plan = semantic_plan(&mask, &grid, 0.15, MaskingRatio::new(0.5).unwrap(), 9).unwrap();
    let bytes = wire::encode(&full, &lib_plan, 3, 17).unwrap();
    assert_eq!(fs::read(&frame).unwrap(), bytes);
    let decoded = wire::decode(&bytes).unwrap();
    assert_eq!(fs::read(&sparse).unwrap(), encode_pnm(decoded.sparse.image()));
    let lib_filled = fill_baseline(&decoded.sparse, &decoded.plan, FillMethod::NearestPatch).unwrap();
    assert_eq!(fs::read(&filled).unwrap(), encode_pnm(&lib_filled));
}

#[test]
fn decode_reads_record_streams() {
    let dir = tempfile::tempdir().unwrap();
    let grid = make_grid(40, 20, 10).unwrap();
    let img = RasterImage::filled(40, 20, &[1, 2, 3]).unwrap();
    let mut stream = Vec::new();
    for f in 0..3 {
        let plan = mvmask::masking::sample_random(&grid, MaskingRatio::new(0.5).unwrap(), f).unwrap();
        wire::write_record(&mut stream, &wire::encode(&img, &plan, 1, f as u32).unwrap()).unwrap();
    }
    let path = dir.path().join("stream.rec");
    fs::write(&path, stream).unwrap();
    let out = mvmask(&["decode", s(&path), "-o", s(dir.path())]);
    assert!(out.status.success());
    for f in 0..3 {
        assert!(dir.path().join(format!("c001_f{f:06}.plan.json")).is_file());
    }
}

#[test]
fn project_points_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene();
    let cal = dir.path().join("cam.txt");
    fs::write(&cal, format_calibration(&sc.cameras()[0])).unwrap();
    let out = mvmask(&["project", "--calibration", s(&cal), "--no-resize", "--ground", "3,3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pixel (80.000000, 60.000000)"), "{text}");

    let (img, seg) = write_frame(dir.path());
    let plan = dir.path().join("plan.json");
    assert!(mvmask(&["mask", "--patch-size", "10", s(&img), s(&seg), "-o", s(&plan)]).status.success());
    let heat = dir.path().join("bev.pgm");
    let csv = dir.path().join("bev.csv");
    let out = mvmask(&[
        "project", "--calibration", s(&cal), "--plan", s(&plan), "--bev-rows", "60", "--bev-cols", "60",
        "-o", s(&heat), "--csv", s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("covered cells: "));
    assert_eq!(load_image(&heat).unwrap().width(), 60);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 3600);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    fs::write(
        &cfg,
        "synthetic.cameras = 3\nsynthetic.width = 96\nsynthetic.height = 64\nsynthetic.focal = 70\n\
         synthetic.area = 4\nsynthetic.camera_radius = 5\nsynthetic.camera_height = 3\n\
         frames = 6\npatch_size = 8\ndropout = 0.3\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = mvmask(&["simulate", "--scenario", s(&cfg), "--seed", "5", "-o", s(&out_dir), "--heatmaps"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["frames"], 6);
        assert!(out_dir.join("bev_000005.pgm").is_file());
        (
            fs::read(out_dir.join("frames.csv")).unwrap(),
            fs::read(out_dir.join("report.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
    let bad = mvmask(&["simulate", "--scenario", s(&cfg), "--dropout", "2", "-o", s(dir.path())]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (_, seg) = write_frame(dir.path());
    let csv = dir.path().join("sweep.csv");
    let out = mvmask(&["sweep", "--ratio", "0,1", "--seeds", "2", "--patch-size", "10", s(&seg), "-o", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mode,r,kappa,seed,frame,retention_ratio,payload_bits");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1].starts_with("semantic,0,0.15,0,0,1.000000,"));
}

