//! Pinhole cameras, the ground-plane homography and bird's-eye-view grids.
//!
//! A camera maps world points through `P = K [R | t]`. For points on the
//! ground (`z = 0`) the third column of `P` drops out, leaving the 3x3
//! homography `P'` between ground coordinates and pixels. Pixel `(i, j)`
//! spans `[i, i + 1) x [j, j + 1)` in continuous image coordinates.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::imageio::RasterImage;
use crate::masking::MaskPlan;

pub const BEV_CELL_SIZE: f64 = 0.10;

const DEGENERATE_DET: f64 = 1e-12;
const INFINITY_EPS: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("pixel maps to a ground point at infinity")]
    AtInfinity,
    #[error("camera has a singular ground-plane homography")]
    DegenerateCamera,
}

impl From<ProjectionError> for Error {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::DegenerateCamera => Error::DegenerateCamera,
            other => Error::Camera(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    projection: Matrix3x4<f64>,
    ground: Matrix3<f64>,
    ground_inv: Option<Matrix3<f64>>,
}

impl CameraModel {
    /// Checks `R` is a proper rotation and `K` is upper-triangular with
    /// positive focal lengths. A singular `P'` is allowed but marks the
    /// camera degenerate.
    pub fn new(intrinsics: Matrix3<f64>, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::Camera("intrinsic matrix must be upper-triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::Camera("focal lengths must be positive".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho >= ROTATION_TOL {
            return Err(Error::Camera(format!("rotation is not orthonormal (error {ortho:e})")));
        }
        if (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Camera("rotation determinant is not +1".into()));
        }
        if intrinsics.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Camera("non-finite calibration value".into()));
        }

        let mut extrinsic = Matrix3x4::zeros();
        extrinsic.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        extrinsic.set_column(3, &translation);
        let projection = intrinsics * extrinsic;
        let ground = ground_homography(&projection);
        let ground_inv = if ground.determinant().abs() > DEGENERATE_DET {
            ground.try_inverse()
        } else {
            None
        };
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            projection,
            ground,
            ground_inv,
        })
    }

    /// Camera at `position` looking at `target`, world `z` up.
    pub fn look_at(intrinsics: Matrix3<f64>, position: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let forward = (target - position).normalize();
        let right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            return Err(Error::Camera("look-at direction is vertical".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * position);
        Self::new(intrinsics, rotation, translation)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `P = K [R | t]`.
    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    /// `P'`: columns 1, 2 and 4 of `P`.
    pub fn ground_homography(&self) -> &Matrix3<f64> {
        &self.ground
    }

    pub fn is_degenerate(&self) -> bool {
        self.ground_inv.is_none()
    }

    /// Same camera for an image resampled by `factor` (0.5 after halving).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let scale = Matrix3::from_diagonal(&Vector3::new(factor, factor, 1.0));
        Self::new(scale * self.intrinsics, self.rotation, self.translation)
    }

    /// Projects a world point with the full `P`; `None` when not in front.
    pub fn project_point(&self, point: Vector3<f64>) -> Option<(f64, f64)> {
        let h = self.projection * point.push(1.0);
        (h.z > 0.0).then(|| (h.x / h.z, h.y / h.z))
    }
}

/// Drops the third (z) column of a 3x4 projection.
pub fn ground_homography(projection: &Matrix3x4<f64>) -> Matrix3<f64> {
    Matrix3::from_columns(&[
        projection.column(0).into_owned(),
        projection.column(1).into_owned(),
        projection.column(3).into_owned(),
    ])
}

/// Homogeneous transform of `(x, y)`, without any sign check.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let v = h * Vector3::new(x, y, 1.0);
    (v.z.abs() >= INFINITY_EPS).then(|| (v.x / v.z, v.y / v.z))
}

pub fn project_ground_to_pixel(cam: &CameraModel, x: f64, y: f64) -> Result<(f64, f64), ProjectionError> {
    if cam.is_degenerate() {
        return Err(ProjectionError::DegenerateCamera);
    }
    let v = cam.ground * Vector3::new(x, y, 1.0);
    if v.z <= 0.0 {
        return Err(ProjectionError::BehindCamera);
    }
    Ok((v.x / v.z, v.y / v.z))
}

pub fn project_pixel_to_ground(cam: &CameraModel, u: f64, v: f64) -> Result<(f64, f64), ProjectionError> {
    let inv = cam.ground_inv.as_ref().ok_or(ProjectionError::DegenerateCamera)?;
    let g = inv * Vector3::new(u, v, 1.0);
    if g.z.abs() < INFINITY_EPS {
        return Err(ProjectionError::AtInfinity);
    }
    Ok((g.x / g.z, g.y / g.z))
}

/// Ground lattice of square cells, row `i` along world `y`, column `j`
/// along world `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct BevGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: (f64, f64),
    values: Vec<u32>,
}

impl BevGrid {
    /// Empty grid; `origin` is the world position of the centre of cell (0, 0).
    pub fn new(rows: usize, cols: usize, origin: (f64, f64)) -> Result<Self> {
        Self::with_cell_size(rows, cols, origin, BEV_CELL_SIZE)
    }

    pub fn with_cell_size(rows: usize, cols: usize, origin: (f64, f64), cell_size: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("BEV grid {rows}x{cols} is empty")));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Dimension(format!("bad BEV cell size {cell_size}")));
        }
        Ok(Self {
            rows,
            cols,
            cell_size,
            origin,
            values: vec![0; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.values[row * self.cols + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.cell_size,
            self.origin.1 + row as f64 * self.cell_size,
        )
    }

    /// Empty grid with the same shape.
    pub fn blank(&self) -> Self {
        Self {
            values: vec![0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn same_shape(&self, other: &BevGrid) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.cell_size == other.cell_size
            && self.origin == other.origin
    }

    pub fn covered_cells(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0).count()
    }

    /// Mean count over covered cells; zero when nothing is covered.
    pub fn mean_multiplicity(&self) -> f64 {
        let covered = self.covered_cells();
        if covered == 0 {
            0.0
        } else {
            self.values.iter().map(|&v| v as f64).sum::<f64>() / covered as f64
        }
    }

    /// Grayscale heatmap, counts scaled so the maximum maps to 255.
    pub fn to_heatmap(&self) -> RasterImage {
        let max = self.values.iter().copied().max().unwrap_or(0) as u64;
        let data = self
            .values
            .iter()
            .map(|&v| (v as u64 * 255 + max / 2).checked_div(max).unwrap_or(0) as u8)
            .collect();
        RasterImage::new(self.cols as u32, self.rows as u32, 1, data).expect("grid is nonempty")
    }

    /// `row,col,x,y,value` lines with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,x,y,value")?;
        for row in 0..self.rows {
            for col in 0..self.cols {
                let (x, y) = self.cell_center(row, col);
                writeln!(out, "{row},{col},{x:.3},{y:.3},{}", self.get(row, col))?;
            }
        }
        Ok(())
    }
}

/// Marks each cell whose centre projects, in front of the camera, into a
/// kept patch of `plan`.
pub fn splat_coverage(cam: &CameraModel, plan: &MaskPlan, grid: &BevGrid) -> Result<BevGrid> {
    if cam.is_degenerate() {
        return Err(Error::DegenerateCamera);
    }
    let patches = plan.grid();
    let flags = plan.kept_flags();
    let (w, h) = (patches.image_width() as f64, patches.image_height() as f64);
    let mut layer = grid.blank();
    if plan.kept_count() == 0 {
        return Ok(layer);
    }
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (x, y) = grid.cell_center(row, col);
            let Ok((u, v)) = project_ground_to_pixel(cam, x, y) else {
                continue;
            };
            if !(u >= 0.0 && v >= 0.0 && u < w && v < h) {
                continue;
            }
            if let Some(i) = patches.patch_at(u as u32, v as u32) {
                if flags[i] {
                    layer.values[row * grid.cols + col] = 1;
                }
            }
        }
    }
    Ok(layer)
}

/// Per-cell sum of layers.
pub fn aggregate(layers: &[BevGrid]) -> Result<BevGrid> {
    let first = layers
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no layers to aggregate".into()))?;
    let mut total = first.blank();
    for layer in layers {
        if !layer.same_shape(first) {
            return Err(Error::DimensionMismatch("BEV layers differ in shape or origin".into()));
        }
        for (t, v) in total.values.iter_mut().zip(&layer.values) {
            *t += v;
        }
    }
    Ok(total)
}

/// Parses a calibration file: 9 numbers of `K` (row-major), 9 of `R`, then
/// 3 of `t`, whitespace-separated, `#` starting a comment.
pub fn parse_calibration(text: &str) -> Result<CameraModel> {
    let numbers: Vec<f64> = text
        .lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("calibration: '{tok}' is not a number")))
        })
        .collect::<Result<_>>()?;
    if numbers.len() != 21 {
        return Err(Error::Config(format!(
            "calibration needs 21 numbers (K, R, t), found {}",
            numbers.len()
        )));
    }
    let k = Matrix3::from_row_slice(&numbers[0..9]);
    let r = Matrix3::from_row_slice(&numbers[9..18]);
    let t = Vector3::from_row_slice(&numbers[18..21]);
    CameraModel::new(k, r, t)
}

pub fn format_calibration(cam: &CameraModel) -> String {
    let mut out = String::from("# K (row-major)\n");
    let row = |m: &Matrix3<f64>, r: usize| format!("{:?} {:?} {:?}\n", m[(r, 0)], m[(r, 1)], m[(r, 2)]);
    for r in 0..3 {
        out += &row(&cam.intrinsics, r);
    }
    out += "# R (row-major)\n";
    for r in 0..3 {
        out += &row(&cam.rotation, r);
    }
    let t = &cam.translation;
    out += &format!("# t (metres)\n{:?} {:?} {:?}\n", t.x, t.y, t.z);
    out
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CameraModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text)
}
