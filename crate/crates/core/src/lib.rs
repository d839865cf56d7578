//! Semantic-guided patch masking for bandwidth-limited multiview camera
//! networks: patch selection, a compact wire format, closed-form gap fills
//! and ground-plane (BEV) coverage, plus a network simulator.

pub mod error;
pub mod geometry;
pub mod imageio;
pub mod masking;
pub mod metrics;
pub mod patch_grid;
pub mod reconstruct;
pub mod rng;
pub mod sim;
pub mod wire;

pub use error::{Error, Result};
pub use geometry::{BevGrid, CameraModel, ProjectionError};
pub use imageio::{RasterImage, SegMask};
pub use masking::{ActivityMap, MaskMode, MaskPlan, SelectionDistribution};
pub use patch_grid::{MaskingRatio, PatchGrid, PatchRef};
pub use reconstruct::FillMethod;
pub use wire::{CommReport, DecodedFrame, HeaderPolicy, SparseImage};
