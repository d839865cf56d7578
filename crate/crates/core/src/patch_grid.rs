//! Square patch tiling and the patch-count arithmetic.
//!
//! An image of `W x H` pixels split into `p x p` patches has
//! `N = floor(W/p) * floor(H/p)` patches, indexed row-major. Pixels past the
//! last full patch column or row belong to no patch. Keeping a fraction
//! `1 - r` of them means sending `S = ceil(N * (1 - r))` patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::RasterImage;

/// Masking ratio `r` (fraction of patches withheld) in thousandths.
///
/// Ratios are carried in milli-units so that every node computes the same
/// patch budget with integer arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MaskingRatio(u16);

impl MaskingRatio {
    pub const NONE: MaskingRatio = MaskingRatio(0);
    pub const ALL: MaskingRatio = MaskingRatio(1000);

    /// Accepts `r` in `[0, 1]` that is a whole number of thousandths.
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Range(format!("masking ratio {r} outside [0, 1]")));
        }
        let scaled = r * 1000.0;
        let milli = scaled.round();
        if (scaled - milli).abs() > 1e-6 {
            return Err(Error::Range(format!(
                "masking ratio {r} is not a multiple of 0.001"
            )));
        }
        Ok(Self(milli as u16))
    }

    pub fn from_milli(milli: u16) -> Result<Self> {
        if milli > 1000 {
            return Err(Error::Range(format!("masking ratio {milli}/1000 above 1")));
        }
        Ok(Self(milli))
    }

    pub fn milli(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl TryFrom<f64> for MaskingRatio {
    type Error = Error;

    fn try_from(r: f64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<MaskingRatio> for f64 {
    fn from(r: MaskingRatio) -> f64 {
        r.value()
    }
}

impl std::fmt::Display for MaskingRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridDims", into = "GridDims")]
pub struct PatchGrid {
    width: u32,
    height: u32,
    patch: u32,
    cols: u32,
    rows: u32,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct GridDims {
    width: u32,
    height: u32,
    patch_size: u32,
}

impl TryFrom<GridDims> for PatchGrid {
    type Error = Error;

    fn try_from(d: GridDims) -> Result<Self> {
        make_grid(d.width, d.height, d.patch_size)
    }
}

impl From<PatchGrid> for GridDims {
    fn from(g: PatchGrid) -> Self {
        GridDims {
            width: g.width,
            height: g.height,
            patch_size: g.patch,
        }
    }
}

/// Patch address: its index and top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRef {
    pub index: usize,
    pub x: u32,
    pub y: u32,
}

pub fn make_grid(width: u32, height: u32, patch: u32) -> Result<PatchGrid> {
    if patch == 0 || width < patch || height < patch {
        return Err(Error::Dimension(format!(
            "{width}x{height} image cannot hold a {patch}x{patch} patch"
        )));
    }
    Ok(PatchGrid {
        width,
        height,
        patch,
        cols: width / patch,
        rows: height / patch,
    })
}

/// `S = ceil(N * (1 - r))`.
pub fn unmasked_count(grid: &PatchGrid, ratio: MaskingRatio) -> usize {
    keep_count(grid.patch_count(), ratio)
}

pub(crate) fn keep_count(n: usize, ratio: MaskingRatio) -> usize {
    let kept = n as u64 * (1000 - ratio.milli() as u64);
    kept.div_ceil(1000) as usize
}

impl PatchGrid {
    pub fn image_width(&self) -> u32 {
        self.width
    }

    pub fn image_height(&self) -> u32 {
        self.height
    }

    pub fn patch_size(&self) -> u32 {
        self.patch
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn patch_count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    /// Width and height of the region covered by whole patches.
    pub fn footprint(&self) -> (u32, u32) {
        (self.cols * self.patch, self.rows * self.patch)
    }

    /// Bits needed to address one patch, `ceil(log2 N)`.
    pub fn index_bits(&self) -> u32 {
        let n = self.patch_count() as u64;
        if n <= 1 {
            0
        } else {
            64 - (n - 1).leading_zeros()
        }
    }

    pub fn patch(&self, index: usize) -> Result<PatchRef> {
        self.check_index(index)?;
        let (row, col) = (index as u32 / self.cols, index as u32 % self.cols);
        Ok(PatchRef {
            index,
            x: col * self.patch,
            y: row * self.patch,
        })
    }

    /// Patch column and row of `index`.
    pub fn cell(&self, index: usize) -> (u32, u32) {
        (index as u32 % self.cols, index as u32 / self.cols)
    }

    /// Patch containing pixel `(x, y)`, if any.
    pub fn patch_at(&self, x: u32, y: u32) -> Option<usize> {
        let (col, row) = (x / self.patch, y / self.patch);
        (col < self.cols && row < self.rows).then(|| (row * self.cols + col) as usize)
    }

    pub fn matches(&self, img: &RasterImage) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}, grid expects {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.patch_count() {
            return Err(Error::Index {
                index,
                count: self.patch_count(),
            });
        }
        Ok(())
    }

    /// Copies the `p x p` block of patch `index`, row-major, all channels.
    pub fn patch_pixels(&self, index: usize, img: &RasterImage) -> Result<Vec<u8>> {
        self.matches(img)?;
        let at = self.patch(index)?;
        let c = img.channels() as usize;
        let (p, stride) = (self.patch as usize, self.width as usize * c);
        let mut block = Vec::with_capacity(p * p * c);
        for dy in 0..p {
            let start = (at.y as usize + dy) * stride + at.x as usize * c;
            block.extend_from_slice(&img.data()[start..start + p * c]);
        }
        Ok(block)
    }

    /// Writes a block produced by [`PatchGrid::patch_pixels`] back in place.
    pub fn put_patch(&self, index: usize, img: &mut RasterImage, block: &[u8]) -> Result<()> {
        self.matches(img)?;
        let at = self.patch(index)?;
        let c = img.channels() as usize;
        let (p, stride) = (self.patch as usize, self.width as usize * c);
        if block.len() != p * p * c {
            return Err(Error::DimensionMismatch(format!(
                "patch block has {} samples, expected {}",
                block.len(),
                p * p * c
            )));
        }
        let data = img.data_mut();
        for dy in 0..p {
            let start = (at.y as usize + dy) * stride + at.x as usize * c;
            data[start..start + p * c].copy_from_slice(&block[dy * p * c..(dy + 1) * p * c]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ratio(r: f64) -> MaskingRatio {
        MaskingRatio::new(r).unwrap()
    }

    #[test]
    fn table_one_grid_has_576_patches() {
        let grid = make_grid(640, 360, 20).unwrap();
        assert_eq!((grid.cols(), grid.rows()), (32, 18));
        assert_eq!(grid.patch_count(), 576);
        assert_eq!(grid.index_bits(), 10);
    }

    #[test]
    fn single_patch_and_trailing_pixels() {
        assert_eq!(make_grid(20, 20, 20).unwrap().patch_count(), 1);
        let grid = make_grid(45, 25, 20).unwrap();
        assert_eq!((grid.cols(), grid.rows(), grid.patch_count()), (2, 1, 2));
        assert_eq!(grid.footprint(), (40, 20));
        assert_eq!(grid.patch_at(41, 3), None);
        assert_eq!(grid.patch_at(39, 19), Some(1));
        assert_eq!(grid.patch_at(10, 21), None);
    }

    #[test]
    fn grid_smaller_than_patch_is_rejected() {
        assert!(matches!(make_grid(19, 40, 20), Err(Error::Dimension(_))));
        assert!(matches!(make_grid(40, 19, 20), Err(Error::Dimension(_))));
        assert!(matches!(make_grid(40, 40, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn keep_counts() {
        let grid = make_grid(640, 360, 20).unwrap();
        assert_eq!(unmasked_count(&grid, ratio(0.7)), 173);
        assert_eq!(unmasked_count(&grid, ratio(1.0)), 0);
        assert_eq!(unmasked_count(&grid, ratio(0.0)), 576);
    }

    #[test]
    fn ceiling_and_floor_agree_on_integral_budgets() {
        let grid = make_grid(640, 360, 20).unwrap();
        for r in [0.0f64, 0.5, 0.75, 1.0] {
            let floor = (576.0 * (1.0 - r)).floor() as usize;
            assert_eq!(unmasked_count(&grid, ratio(r)), floor, "r = {r}");
        }
    }

    #[test]
    fn ratio_validation() {
        assert!(matches!(MaskingRatio::new(-0.1), Err(Error::Range(_))));
        assert!(matches!(MaskingRatio::new(1.01), Err(Error::Range(_))));
        assert!(matches!(MaskingRatio::new(f64::NAN), Err(Error::Range(_))));
        assert!(matches!(MaskingRatio::new(0.0005), Err(Error::Range(_))));
        assert_eq!(ratio(0.7).milli(), 700);
        assert_eq!(ratio(0.1 + 0.2).milli(), 300);
        assert!(MaskingRatio::from_milli(1001).is_err());
    }

    #[test]
    fn patch_pixels_addressing() {
        let img = RasterImage::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        let grid = make_grid(2, 2, 1).unwrap();
        assert_eq!(grid.patch_pixels(3, &img).unwrap(), vec![4]);
        assert!(matches!(
            grid.patch_pixels(4, &img),
            Err(Error::Index { index: 4, count: 4 })
        ));
        let other = RasterImage::new(3, 2, 1, vec![0; 6]).unwrap();
        assert!(matches!(
            grid.patch_pixels(0, &other),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn constant_image_has_identical_blocks() {
        let img = RasterImage::filled(60, 40, &[5, 6, 7]).unwrap();
        let grid = make_grid(60, 40, 20).unwrap();
        let first = grid.patch_pixels(0, &img).unwrap();
        assert_eq!(first.len(), 20 * 20 * 3);
        for i in 1..grid.patch_count() {
            assert_eq!(grid.patch_pixels(i, &img).unwrap(), first);
        }
    }

    #[test]
    fn patch_origin_is_row_major() {
        let grid = make_grid(640, 360, 20).unwrap();
        let at = grid.patch(33).unwrap();
        assert_eq!((at.x, at.y), (20, 20));
        assert_eq!(grid.cell(33), (1, 1));
    }

    proptest! {
        #[test]
        fn reassembly_reproduces_cropped_image(
            w in 1u32..40, h in 1u32..40, p in 1u32..9, seed in any::<u64>()
        ) {
            prop_assume!(w >= p && h >= p);
            let mut rng = crate::rng::MaskRng::new(seed);
            let data = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
            let img = RasterImage::new(w, h, 3, data).unwrap();
            let grid = make_grid(w, h, p).unwrap();
            let mut rebuilt = RasterImage::filled(w, h, &[0, 0, 0]).unwrap();
            for i in 0..grid.patch_count() {
                let block = grid.patch_pixels(i, &img).unwrap();
                grid.put_patch(i, &mut rebuilt, &block).unwrap();
            }
            let (fw, fh) = grid.footprint();
            prop_assert_eq!(rebuilt.crop(fw, fh).unwrap(), img.crop(fw, fh).unwrap());
        }

        #[test]
        fn keep_count_matches_real_ceiling(n in 1usize..5000, milli in 0u16..=1000) {
            let s = keep_count(n, MaskingRatio::from_milli(milli).unwrap());
            // smallest s with s >= n(1 - r), in exact integers
            let need = n as u64 * (1000 - milli as u64);
            let s = s as u64;
            prop_assert!(s * 1000 >= need);
            prop_assert!(s == 0 || (s - 1) * 1000 < need);
            prop_assert!(s <= n as u64);
        }
    }
}
