//! Closed-form fills for the patches a receiver never got.
//!
//! Output covers the whole-patch footprint of the grid; trailing margins are
//! cropped away. Received pixels pass through untouched.

use crate::error::{Error, Result};
use crate::imageio::RasterImage;
use crate::masking::MaskPlan;
use crate::wire::SparseImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillMethod {
    Zero,
    /// Per-channel mean of every received pixel, rounded half-up.
    GlobalMean,
    /// Copy of the received patch whose centre is nearest; ties go to the
    /// lower index.
    NearestPatch,
}

impl std::str::FromStr for FillMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(FillMethod::Zero),
            "global-mean" => Ok(FillMethod::GlobalMean),
            "nearest-patch" => Ok(FillMethod::NearestPatch),
            other => Err(Error::Config(format!("unknown fill method '{other}'"))),
        }
    }
}

pub fn fill_baseline(sparse: &SparseImage, plan: &MaskPlan, method: FillMethod) -> Result<RasterImage> {
    let grid = plan.grid();
    let img = sparse.image();
    grid.matches(img)?;
    let (fw, fh) = grid.footprint();
    let kept = plan.unmasked();
    if kept.is_empty() && method != FillMethod::Zero {
        return Err(Error::EmptyFrame);
    }
    let channels = img.channels() as usize;
    let mut out = img.crop(fw, fh)?;
    let fill_grid = crate::patch_grid::make_grid(fw, fh, grid.patch_size())?;
    let flags = plan.kept_flags();

    match method {
        FillMethod::Zero => {
            let block = vec![0u8; crate::wire::payload_len(grid, 1) / 3 * channels];
            for (i, _) in flags.iter().enumerate().filter(|(_, &k)| !k) {
                fill_grid.put_patch(i, &mut out, &block)?;
            }
        }
        FillMethod::GlobalMean => {
            let mut sums = vec![0u64; channels];
            let mut count = 0u64;
            for &i in kept {
                let block = grid.patch_pixels(i as usize, img)?;
                for px in block.chunks_exact(channels) {
                    for (s, &v) in sums.iter_mut().zip(px) {
                        *s += v as u64;
                    }
                }
                count += (block.len() / channels) as u64;
            }
            let mean: Vec<u8> = sums.iter().map(|&s| ((2 * s + count) / (2 * count)) as u8).collect();
            let p = grid.patch_size() as usize;
            let block = mean.repeat(p * p);
            for (i, _) in flags.iter().enumerate().filter(|(_, &k)| !k) {
                fill_grid.put_patch(i, &mut out, &block)?;
            }
        }
        FillMethod::NearestPatch => {
            let blocks: Vec<Vec<u8>> = kept
                .iter()
                .map(|&i| grid.patch_pixels(i as usize, img))
                .collect::<Result<_>>()?;
            for (i, _) in flags.iter().enumerate().filter(|(_, &k)| !k) {
                let (col, row) = grid.cell(i);
                let nearest = kept
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &j)| {
                        let (c, r) = grid.cell(j as usize);
                        let (dc, dr) = (c as i64 - col as i64, r as i64 - row as i64);
                        // centres sit on the patch lattice, so squared lattice
                        // distance orders them exactly; min_by_key keeps the
                        // first (lowest index) minimum
                        dc * dc + dr * dr
                    })
                    .map(|(k, _)| k)
                    .expect("kept set is nonempty");
                fill_grid.put_patch(i, &mut out, &blocks[nearest])?;
            }
        }
    }
    Ok(out)
}

/// Mean absolute error per sample over the pixels of masked patches.
/// `None` when every patch was received.
pub fn masked_mae(filled: &RasterImage, truth: &RasterImage, plan: &MaskPlan) -> Result<Option<f64>> {
    let grid = plan.grid();
    let (fw, fh) = grid.footprint();
    let truth = truth.crop(fw, fh)?;
    if filled.width() != fw || filled.height() != fh || filled.channels() != truth.channels() {
        return Err(Error::DimensionMismatch("filled image does not match the grid footprint".into()));
    }
    let flags = plan.kept_flags();
    let mut err = 0u64;
    let mut samples = 0u64;
    for y in 0..fh {
        for x in 0..fw {
            let i = grid.patch_at(x, y).expect("inside footprint");
            if flags[i] {
                continue;
            }
            for (a, b) in filled.pixel(x, y).iter().zip(truth.pixel(x, y)) {
                err += a.abs_diff(*b) as u64;
                samples += 1;
            }
        }
    }
    Ok((samples > 0).then(|| err as f64 / samples as f64))
}
