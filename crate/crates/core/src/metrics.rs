//! Retention of target pixels under masking, and ratio sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imageio::SegMask;
use crate::masking::{sample_random, semantic_plan, MaskMode, MaskPlan};
use crate::patch_grid::{make_grid, MaskingRatio};
use crate::wire::{comm_report, HeaderPolicy};

/// Target pixels inside the patch footprint and how many of them were kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RetentionStats {
    pub mask_pixels_total: u64,
    pub mask_pixels_kept: u64,
}

impl RetentionStats {
    /// `kept / total`; absent for a frame without targets.
    pub fn ratio(&self) -> Option<f64> {
        (self.mask_pixels_total > 0).then(|| self.mask_pixels_kept as f64 / self.mask_pixels_total as f64)
    }

    pub fn merge(&self, other: &RetentionStats) -> RetentionStats {
        RetentionStats {
            mask_pixels_total: self.mask_pixels_total + other.mask_pixels_total,
            mask_pixels_kept: self.mask_pixels_kept + other.mask_pixels_kept,
        }
    }
}

/// Per-patch target pixel counts over the grid footprint.
pub(crate) fn patch_mask_counts(mask: &SegMask, plan: &MaskPlan) -> Result<Vec<u64>> {
    let grid = plan.grid();
    if mask.width() != grid.image_width() || mask.height() != grid.image_height() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}, plan grid expects {}x{}",
            mask.width(),
            mask.height(),
            grid.image_width(),
            grid.image_height()
        )));
    }
    let (fw, fh) = grid.footprint();
    let mut counts = vec![0u64; grid.patch_count()];
    for y in 0..fh {
        for x in 0..fw {
            if mask.get(x, y) == 1 {
                counts[grid.patch_at(x, y).expect("inside footprint")] += 1;
            }
        }
    }
    Ok(counts)
}

pub fn retention(mask: &SegMask, plan: &MaskPlan) -> Result<RetentionStats> {
    let counts = patch_mask_counts(mask, plan)?;
    Ok(RetentionStats {
        mask_pixels_total: counts.iter().sum(),
        mask_pixels_kept: plan.unmasked().iter().map(|&i| counts[i as usize]).sum(),
    })
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub ratios: Vec<MaskingRatio>,
    pub kappa: f64,
    pub modes: Vec<MaskMode>,
    pub seeds: Vec<u64>,
    pub patch_size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: MaskMode,
    pub ratio: MaskingRatio,
    pub kappa: Option<f64>,
    pub seed: u64,
    pub frame: usize,
    pub retention: Option<f64>,
    pub payload_bits: u64,
}

/// Every (mode, ratio, seed, frame) combination, ordered by that key.
pub fn sweep(frames: &[SegMask], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if frames.is_empty() {
        return Err(Error::Empty("sweep needs at least one frame"));
    }
    if cfg.ratios.is_empty() || cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Empty("sweep needs ratios, modes and seeds"));
    }
    let mut cells = Vec::new();
    for &mode in &cfg.modes {
        for &ratio in &cfg.ratios {
            for &seed in &cfg.seeds {
                for frame in 0..frames.len() {
                    cells.push((mode, ratio, seed, frame));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(mode, ratio, seed, frame)| {
            let mask = &frames[frame];
            let grid = make_grid(mask.width(), mask.height(), cfg.patch_size)?;
            let plan = match mode {
                MaskMode::Semantic => semantic_plan(mask, &grid, cfg.kappa, ratio, seed)?,
                MaskMode::Random => sample_random(&grid, ratio, seed)?,
            };
            let stats = retention(mask, &plan)?;
            Ok(SweepRow {
                mode,
                ratio,
                kappa: (mode == MaskMode::Semantic).then_some(cfg.kappa),
                seed,
                frame,
                retention: stats.ratio(),
                payload_bits: comm_report(&[plan], HeaderPolicy::PayloadOnly, 1).payload_bits,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "mode,r,kappa,seed,frame,retention_ratio,payload_bits";

/// CSV with [`SWEEP_CSV_HEADER`]; absent values are left empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        let kappa = row.kappa.map(|k| k.to_string()).unwrap_or_default();
        let ret = row.retention.map(|r| format!("{r:.6}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.mode, row.ratio, kappa, row.seed, row.frame, ret, row.payload_bits
        )?;
    }
    Ok(())
}
