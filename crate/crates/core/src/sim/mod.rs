//! In-process multi-camera network simulation.
//!
//! Each frame, the link drops some cameras; the rest halve their frame, pick
//! a mask plan and encode it. The server decodes each frame, fills the gaps,
//! splats kept patches onto the BEV grid and sums the layers.
//!
//! Seeds: camera `c` at frame `f` masks with `mix_seed([PLAN, base, c, f])`;
//! Bernoulli dropout for frame `f` draws from `mix_seed([DROPOUT, base, f])`,
//! one draw per camera in id order. Cameras run in parallel but nothing
//! depends on scheduling order.

mod scenario;
pub mod synthetic;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use scenario::{frame_path, CameraSource, DropoutPolicy, FrameSource, Scenario};

use crate::error::{Error, Result};
use crate::geometry::{aggregate, splat_coverage, BevGrid};
use crate::imageio::{downsample_by_2, save_image};
use crate::masking::{sample_random, semantic_plan, MaskMode};
use crate::metrics::{retention, RetentionStats};
use crate::patch_grid::make_grid;
use crate::reconstruct::{fill_baseline, masked_mae};
use crate::rng::{mix_seed, MaskRng};
use crate::wire::{comm_report, decode, encode, CommReport, HeaderPolicy};

const PLAN_STREAM: u64 = 0x706c_616e;
const DROPOUT_STREAM: u64 = 0x6472_6f70;

/// Seed a camera uses for its mask plan at a given frame.
pub fn camera_seed(base_seed: u64, camera: u16, frame: u32) -> u64 {
    mix_seed(&[PLAN_STREAM, base_seed, camera as u64, frame as u64])
}

/// Camera ids that reach the server at `frame`, ascending.
pub fn active_cameras(scenario: &Scenario, frame: u32) -> Vec<u16> {
    let n = scenario.cameras.len();
    match scenario.dropout_policy {
        DropoutPolicy::Bernoulli => {
            let mut rng = MaskRng::new(mix_seed(&[DROPOUT_STREAM, scenario.base_seed, frame as u64]));
            (0..n as u16).filter(|_| !rng.chance(scenario.dropout)).collect()
        }
        DropoutPolicy::Fixed => {
            // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
            let down = ((scenario.dropout * n as f64) + 1e-9).floor() as usize;
            (down.min(n) as u16..n as u16).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CameraResult {
    pub camera: u16,
    pub retention: RetentionStats,
    /// Mean absolute error of the fill over masked pixels.
    pub recon_mae: Option<f64>,
    /// Bytes actually put on the link.
    pub frame_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame_id: u32,
    pub active_cameras: Vec<u16>,
    pub comm: CommReport,
    pub covered_cells: usize,
    pub mean_multiplicity: f64,
    pub cameras: Vec<CameraResult>,
    #[serde(skip)]
    pub bev: BevGrid,
}

impl FrameResult {
    pub fn retention(&self) -> RetentionStats {
        self.cameras
            .iter()
            .fold(RetentionStats::default(), |acc, c| acc.merge(&c.retention))
    }
}

/// Run-level summary, serialized as the JSON report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub frames: usize,
    pub cameras: usize,
    pub frame_rate: f64,
    pub ratio: f64,
    pub kappa: Option<f64>,
    pub mode: MaskMode,
    pub base_seed: u64,
    pub dropout: f64,
    pub dropout_policy: String,
    pub header_policy: HeaderPolicy,
    pub mean_active_cameras: f64,
    pub comm: CommReport,
    pub mean_bits_per_frame: f64,
    pub throughput_bps: f64,
    pub mean_covered_cells: f64,
    pub mean_multiplicity: f64,
    pub retention: RetentionStats,
    pub retention_ratio: Option<f64>,
    pub mean_recon_mae: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub frames: Vec<FrameResult>,
    pub summary: SimSummary,
}

pub fn run(scenario: &Scenario) -> Result<SimRun> {
    scenario.validate()?;
    for frame in 0..scenario.frame_count {
        for (id, cam) in scenario.cameras.iter().enumerate() {
            cam.frames.check(frame).map_err(|e| Error::FrameInput {
                frame,
                camera: id as u16,
                source: Box::new(e),
            })?;
        }
    }
    let scaled: Vec<_> = scenario
        .cameras
        .iter()
        .map(|c| if scenario.resize { c.model.scaled(0.5) } else { Ok(c.model.clone()) })
        .collect::<Result<_>>()?;

    let mut frames = Vec::with_capacity(scenario.frame_count as usize);
    for frame in 0..scenario.frame_count {
        let active = active_cameras(scenario, frame);
        let outcomes: Vec<(CameraResult, CommReport, BevGrid)> = active
            .par_iter()
            .map(|&id| {
                process_camera(scenario, &scaled[id as usize], id, frame).map_err(|e| Error::FrameInput {
                    frame,
                    camera: id,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;

        let comm = outcomes
            .iter()
            .fold(CommReport::default(), |acc, (_, c, _)| acc.merge(c));
        let layers: Vec<BevGrid> = outcomes.iter().map(|(_, _, l)| l.clone()).collect();
        let bev = if layers.is_empty() { scenario.bev.blank() } else { aggregate(&layers)? };
        frames.push(FrameResult {
            frame_id: frame,
            active_cameras: active,
            comm,
            covered_cells: bev.covered_cells(),
            mean_multiplicity: bev.mean_multiplicity(),
            cameras: outcomes.into_iter().map(|(c, _, _)| c).collect(),
            bev,
        });
    }
    let summary = summarize(scenario, &frames);
    Ok(SimRun { frames, summary })
}

fn process_camera(
    scenario: &Scenario,
    model: &crate::geometry::CameraModel,
    id: u16,
    frame: u32,
) -> Result<(CameraResult, CommReport, BevGrid)> {
    // camera side
    let (mut img, mut mask) = scenario.cameras[id as usize].frames.load(frame)?;
    if scenario.resize {
        img = downsample_by_2(&img)?;
        mask = mask.downsample_by_2()?;
    }
    let grid = make_grid(img.width(), img.height(), scenario.patch_size)?;
    let seed = camera_seed(scenario.base_seed, id, frame);
    let plan = match scenario.mode {
        MaskMode::Semantic => semantic_plan(&mask, &grid, scenario.kappa, scenario.ratio, seed)?,
        MaskMode::Random => sample_random(&grid, scenario.ratio, seed)?,
    };
    let bytes = encode(&img, &plan, id, frame)?;

    // server side
    let received = decode(&bytes)?;
    let scale = if scenario.resize { 2 } else { 1 };
    let comm = comm_report(std::slice::from_ref(&received.plan), scenario.header_policy, scale);
    debug_assert_eq!(
        comm_report(std::slice::from_ref(&received.plan), HeaderPolicy::Include, scale).total_bits,
        bytes.len() as u64 * 8
    );
    let recon_mae = if received.plan.kept_count() == 0 {
        None
    } else {
        let filled = fill_baseline(&received.sparse, &received.plan, scenario.fill)?;
        masked_mae(&filled, &img, &received.plan)?
    };
    let layer = splat_coverage(model, &received.plan, &scenario.bev)?;
    Ok((
        CameraResult {
            camera: id,
            retention: retention(&mask, &plan)?,
            recon_mae,
            frame_bytes: bytes.len(),
        },
        comm,
        layer,
    ))
}

fn summarize(scenario: &Scenario, frames: &[FrameResult]) -> SimSummary {
    let n = frames.len().max(1) as f64;
    let comm = frames
        .iter()
        .fold(CommReport::default(), |acc, f| acc.merge(&f.comm));
    let retention = frames
        .iter()
        .fold(RetentionStats::default(), |acc, f| acc.merge(&f.retention()));
    let maes: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.cameras.iter().filter_map(|c| c.recon_mae))
        .collect();
    let mean_bits = comm.total_bits as f64 / n;
    SimSummary {
        frames: frames.len(),
        cameras: scenario.cameras.len(),
        frame_rate: scenario.frame_rate,
        ratio: scenario.ratio.value(),
        kappa: (scenario.mode == MaskMode::Semantic).then_some(scenario.kappa),
        mode: scenario.mode,
        base_seed: scenario.base_seed,
        dropout: scenario.dropout,
        dropout_policy: scenario.dropout_policy.to_string(),
        header_policy: scenario.header_policy,
        mean_active_cameras: frames.iter().map(|f| f.active_cameras.len()).sum::<usize>() as f64 / n,
        comm,
        mean_bits_per_frame: mean_bits,
        throughput_bps: mean_bits * scenario.frame_rate,
        mean_covered_cells: frames.iter().map(|f| f.covered_cells).sum::<usize>() as f64 / n,
        mean_multiplicity: frames.iter().map(|f| f.mean_multiplicity).sum::<f64>() / n,
        retention,
        retention_ratio: retention.ratio(),
        mean_recon_mae: (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64),
    }
}

/// Mean per-frame bits times the frame rate.
pub fn throughput(results: &[FrameResult], frame_rate: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("throughput needs at least one frame"));
    }
    let bits: u64 = results.iter().map(|f| f.comm.total_bits).sum();
    Ok(bits as f64 / results.len() as f64 * frame_rate)
}

pub const FRAME_CSV_HEADER: &str =
    "frame,active_cameras,active_ids,payload_bits,header_bits,index_bits,total_bits,covered_cells,mean_multiplicity,retention_ratio,recon_mae";

pub fn write_frames_csv<W: Write>(frames: &[FrameResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{FRAME_CSV_HEADER}")?;
    for f in frames {
        let ids: Vec<String> = f.active_cameras.iter().map(|c| c.to_string()).collect();
        let ret = f.retention().ratio().map(|r| format!("{r:.6}")).unwrap_or_default();
        let maes: Vec<f64> = f.cameras.iter().filter_map(|c| c.recon_mae).collect();
        let mae = if maes.is_empty() {
            String::new()
        } else {
            format!("{:.4}", maes.iter().sum::<f64>() / maes.len() as f64)
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.4},{},{}",
            f.frame_id,
            f.active_cameras.len(),
            ids.join(";"),
            f.comm.payload_bits,
            f.comm.header_bits,
            f.comm.index_bits,
            f.comm.total_bits,
            f.covered_cells,
            f.mean_multiplicity,
            ret,
            mae
        )?;
    }
    Ok(())
}

pub fn summary_json(summary: &SimSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Writes `frames.csv`, `report.json` and, if asked, `bev_NNNNNN.pgm` per
/// frame into `dir`.
pub fn write_outputs(run: &SimRun, dir: impl AsRef<Path>, heatmaps: bool) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("frames.csv");
    let mut buf = Vec::new();
    write_frames_csv(&run.frames, &mut buf).expect("writing to memory");
    std::fs::write(&csv, buf).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("report.json");
    std::fs::write(&json, summary_json(&run.summary) + "\n").map_err(|e| Error::io(&json, e))?;
    if heatmaps {
        for f in &run.frames {
            save_image(&f.bev.to_heatmap(), dir.join(format!("bev_{:06}.pgm", f.frame_id)))?;
        }
    }
    Ok(())
}
