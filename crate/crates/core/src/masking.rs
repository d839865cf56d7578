//! Semantic-guided and random patch selection.
//!
//! Semantic mode scores each patch by the number of target pixels in its
//! 3x3 patch neighbourhood, raises the scores to the power `kappa`,
//! normalises them into a distribution and draws the kept patches one at a
//! time without replacement. Random mode keeps a uniform subset of the same
//! size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{RasterImage, SegMask};
use crate::patch_grid::{unmasked_count, MaskingRatio, PatchGrid};
use crate::rng::MaskRng;

pub const DEFAULT_KAPPA: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Random,
    Semantic,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskMode::Random),
            "semantic" => Ok(MaskMode::Semantic),
            other => Err(Error::Config(format!("unknown masking mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskMode::Random => "random",
            MaskMode::Semantic => "semantic",
        })
    }
}

/// Per-patch activity: target pixels in the patch and its in-bounds
/// neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityMap {
    levels: Vec<u64>,
}

impl ActivityMap {
    pub fn levels(&self) -> &[u64] {
        &self.levels
    }
}

/// Normalised selection probabilities over patches.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    probs: Vec<f64>,
    kappa: f64,
}

impl SelectionDistribution {
    /// Wraps raw probabilities. They must be non-negative and sum to one.
    pub fn from_probs(probs: Vec<f64>, kappa: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("selection distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Range("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Range(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs, kappa })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// The kept patches of one frame and everything needed to reproduce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    grid: PatchGrid,
    mode: MaskMode,
    ratio: MaskingRatio,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    seed: u64,
    unmasked: Vec<u32>,
}

impl MaskPlan {
    /// Validates a kept-patch list: exactly `S` distinct ascending indices
    /// below `N`.
    pub fn new(
        grid: PatchGrid,
        mode: MaskMode,
        ratio: MaskingRatio,
        kappa: Option<f64>,
        seed: u64,
        unmasked: Vec<u32>,
    ) -> Result<Self> {
        let expected = unmasked_count(&grid, ratio);
        if unmasked.len() != expected {
            return Err(Error::Frame(format!(
                "plan keeps {} patches, ratio {ratio} requires {expected}",
                unmasked.len()
            )));
        }
        if unmasked.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Frame("kept patch indices must be strictly ascending".into()));
        }
        if let Some(&last) = unmasked.last() {
            if last as usize >= grid.patch_count() {
                return Err(Error::Index {
                    index: last as usize,
                    count: grid.patch_count(),
                });
            }
        }
        Ok(Self {
            grid,
            mode,
            ratio,
            kappa,
            seed,
            unmasked,
        })
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn ratio(&self) -> MaskingRatio {
        self.ratio
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Kept patch indices, ascending.
    pub fn unmasked(&self) -> &[u32] {
        &self.unmasked
    }

    pub fn kept_count(&self) -> usize {
        self.unmasked.len()
    }

    /// Per-patch flag, `true` for kept patches.
    pub fn kept_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.grid.patch_count()];
        for &i in &self.unmasked {
            flags[i as usize] = true;
        }
        flags
    }

    /// Same selection, ignoring `kappa` (which never travels on the wire).
    pub fn same_selection(&self, other: &MaskPlan) -> bool {
        self.grid == other.grid
            && self.mode == other.mode
            && self.ratio == other.ratio
            && self.seed == other.seed
            && self.unmasked == other.unmasked
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MaskPlan =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad plan file: {e}")))?;
        // re-run the invariant checks skipped by the derive
        Self::new(raw.grid, raw.mode, raw.ratio, raw.kappa, raw.seed, raw.unmasked)
    }
}

pub fn activity_map(mask: &SegMask, grid: &PatchGrid) -> Result<ActivityMap> {
    if mask.width() != grid.image_width() || mask.height() != grid.image_height() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}, grid expects {}x{}",
            mask.width(),
            mask.height(),
            grid.image_width(),
            grid.image_height()
        )));
    }
    let (cols, rows) = (grid.cols() as usize, grid.rows() as usize);
    let p = grid.patch_size() as usize;
    let width = mask.width() as usize;
    let data = mask.data();

    let mut own = vec![0u64; cols * rows];
    for y in 0..rows * p {
        let line = &data[y * width..y * width + cols * p];
        let row = y / p;
        for (col, chunk) in line.chunks_exact(p).enumerate() {
            own[row * cols + col] += chunk.iter().map(|&v| v as u64).sum::<u64>();
        }
    }

    let mut levels = vec![0u64; cols * rows];
    for row in 0..rows {
        for col in 0..cols {
            let mut sum = 0;
            for r in row.saturating_sub(1)..=(row + 1).min(rows - 1) {
                for c in col.saturating_sub(1)..=(col + 1).min(cols - 1) {
                    sum += own[r * cols + c];
                }
            }
            levels[row * cols + col] = sum;
        }
    }
    Ok(ActivityMap { levels })
}

/// `A^kappa`, normalised. `0^kappa = 0` for `kappa > 0`, `x^0 = 1` for all
/// `x`, and an all-zero result falls back to uniform.
pub fn selection_distribution(act: &ActivityMap, kappa: f64) -> Result<SelectionDistribution> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Range(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    let n = act.levels.len();
    if n == 0 {
        return Err(Error::Empty("activity map"));
    }
    let powered: Vec<f64> = act
        .levels
        .iter()
        .map(|&a| {
            if kappa == 0.0 {
                1.0
            } else if a == 0 {
                0.0
            } else {
                (a as f64).powf(kappa)
            }
        })
        .collect();
    let total: f64 = powered.iter().sum();
    let probs = if total > 0.0 {
        powered.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    Ok(SelectionDistribution { probs, kappa })
}

/// Draws the kept set: repeatedly pick one patch with probability
/// proportional to the remaining weights, then remove it. Once every
/// remaining weight is zero the rest are drawn uniformly.
pub fn sample_unmasked(
    dist: &SelectionDistribution,
    grid: &PatchGrid,
    ratio: MaskingRatio,
    seed: u64,
) -> Result<MaskPlan> {
    let n = grid.patch_count();
    if dist.probs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "distribution covers {} patches, grid has {n}",
            dist.probs.len()
        )));
    }
    let s = unmasked_count(grid, ratio);
    let mut rng = MaskRng::new(seed);
    let mut picked = weighted_without_replacement(&dist.probs, s, &mut rng);
    picked.sort_unstable();
    MaskPlan::new(*grid, MaskMode::Semantic, ratio, Some(dist.kappa), seed, picked)
}

/// Uniform kept set of size `S`. The receiver regenerates it from the seed.
pub fn sample_random(grid: &PatchGrid, ratio: MaskingRatio, seed: u64) -> Result<MaskPlan> {
    let s = unmasked_count(grid, ratio);
    let mut rng = MaskRng::new(seed);
    let mut picked = uniform_without_replacement(grid.patch_count(), s, &mut rng);
    picked.sort_unstable();
    MaskPlan::new(*grid, MaskMode::Random, ratio, None, seed, picked)
}

/// Activity map, distribution and draw in one call.
pub fn semantic_plan(
    mask: &SegMask,
    grid: &PatchGrid,
    kappa: f64,
    ratio: MaskingRatio,
    seed: u64,
) -> Result<MaskPlan> {
    let act = activity_map(mask, grid)?;
    let dist = selection_distribution(&act, kappa)?;
    sample_unmasked(&dist, grid, ratio, seed)
}

/// Zeroes every pixel outside the kept patches, trailing margins included.
pub fn apply_mask(img: &RasterImage, plan: &MaskPlan) -> Result<RasterImage> {
    plan.grid.matches(img)?;
    let mut out = RasterImage::new(
        img.width(),
        img.height(),
        img.channels(),
        vec![0; img.data().len()],
    )?;
    for &i in &plan.unmasked {
        let block = plan.grid.patch_pixels(i as usize, img)?;
        plan.grid.put_patch(i as usize, &mut out, &block)?;
    }
    Ok(out)
}

fn uniform_without_replacement(n: usize, count: usize, rng: &mut MaskRng) -> Vec<u32> {
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for k in 0..count {
        let j = k + rng.below((n - k) as u64) as usize;
        pool.swap(k, j);
    }
    pool.truncate(count);
    pool
}

fn weighted_without_replacement(weights: &[f64], count: usize, rng: &mut MaskRng) -> Vec<u32> {
    let n = weights.len();
    let mut remaining = weights.to_vec();
    let mut live = remaining.iter().filter(|&&w| w > 0.0).count();
    let mut tree = Fenwick::new(&remaining);
    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(count);

    while picked.len() < count && live > 0 {
        let total = tree.total();
        let target = rng.next_f64() * total;
        let mut i = tree.search(target);
        if i >= n || remaining[i] <= 0.0 {
            // accumulated rounding in the tree; settle it with a direct scan
            i = linear_pick(&remaining, target);
        }
        tree.add(i, -remaining[i]);
        remaining[i] = 0.0;
        taken[i] = true;
        live -= 1;
        picked.push(i as u32);
    }

    if picked.len() < count {
        let rest: Vec<u32> = (0..n as u32).filter(|&i| !taken[i as usize]).collect();
        let extra = uniform_without_replacement(rest.len(), count - picked.len(), rng);
        picked.extend(extra.into_iter().map(|k| rest[k as usize]));
    }
    picked
}

fn linear_pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if acc > target {
                return i;
            }
        }
    }
    last
}

/// Binary indexed tree over f64 weights.
struct Fenwick {
    tree: Vec<f64>,
    top: usize,
}

impl Fenwick {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self { tree, top }
    }

    fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut i = self.tree.len() - 1;
        let mut sum = 0.0;
        while i > 0 {
            sum += self.tree[i];
            i &= i - 1;
        }
        sum
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn search(&self, mut target: f64) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}
