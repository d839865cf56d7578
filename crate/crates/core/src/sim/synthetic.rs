//! Synthetic multiview scenes with exactly known target masks.
//!
//! A textured ground plane is watched by cameras spaced on a circle and
//! aimed at the middle of a square walking area. Pedestrians are upright
//! 0.5 m x 1.7 m billboards that face each camera and bounce around the
//! area at constant speed. Their pixels form the segmentation mask.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{BevGrid, CameraModel, BEV_CELL_SIZE};
use crate::imageio::{RasterImage, SegMask};
use crate::rng::MaskRng;

const WALKER_WIDTH: f64 = 0.5;
const WALKER_HEIGHT: f64 = 1.7;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub cameras: usize,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    /// Side of the square walking area in metres; the area starts at (0, 0).
    pub area: f64,
    pub walkers: usize,
    /// Distance of the cameras from the area centre, metres.
    pub camera_radius: f64,
    pub camera_height: f64,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            cameras: 7,
            width: 1280,
            height: 720,
            focal: 1000.0,
            area: 12.0,
            walkers: 20,
            camera_radius: 14.0,
            camera_height: 5.0,
            frame_rate: 2.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
struct Walker {
    start: (f64, f64),
    velocity: (f64, f64),
    color: [u8; 3],
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    config: SceneConfig,
    cameras: Vec<CameraModel>,
    walkers: Vec<Walker>,
    backgrounds: Vec<RasterImage>,
}

impl SyntheticScene {
    pub fn new(config: SceneConfig) -> Result<Self> {
        if config.cameras == 0 || config.width == 0 || config.height == 0 {
            return Err(Error::Config("synthetic scene needs cameras and a nonzero image size".into()));
        }
        if !(config.area > 2.0 * WALKER_WIDTH && config.focal > 0.0 && config.frame_rate > 0.0) {
            return Err(Error::Config("synthetic scene area, focal length and frame rate must be positive".into()));
        }
        if config.camera_radius <= config.area / 2.0 || config.camera_height <= WALKER_HEIGHT {
            return Err(Error::Config("synthetic cameras must stand outside the area, above head height".into()));
        }
        let mid = config.area / 2.0;
        let k = Matrix3::new(
            config.focal,
            0.0,
            config.width as f64 / 2.0,
            0.0,
            config.focal,
            config.height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let cameras = (0..config.cameras)
            .map(|i| {
                let angle = std::f64::consts::TAU * i as f64 / config.cameras as f64 + 0.3;
                let position = Vector3::new(
                    mid + config.camera_radius * angle.cos(),
                    mid + config.camera_radius * angle.sin(),
                    config.camera_height,
                );
                CameraModel::look_at(k, position, Vector3::new(mid, mid, 0.0))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rng = MaskRng::new(config.seed);
        let margin = WALKER_WIDTH;
        let walkers = (0..config.walkers)
            .map(|_| {
                let start = (
                    margin + rng.next_f64() * (config.area - 2.0 * margin),
                    margin + rng.next_f64() * (config.area - 2.0 * margin),
                );
                let heading = rng.next_f64() * std::f64::consts::TAU;
                let speed = 0.4 + rng.next_f64() * 0.9;
                let color = [
                    40 + rng.below(200) as u8,
                    20 + rng.below(120) as u8,
                    60 + rng.below(190) as u8,
                ];
                Walker {
                    start,
                    velocity: (speed * heading.cos(), speed * heading.sin()),
                    color,
                }
            })
            .collect();

        let backgrounds = cameras
            .iter()
            .map(|cam| render_background(cam, config.width, config.height))
            .collect();
        Ok(Self {
            config,
            cameras,
            walkers,
            backgrounds,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cameras
    }

    /// BEV grid covering the walking area at 10 cm cells.
    pub fn bev_grid(&self) -> BevGrid {
        let cells = (self.config.area / BEV_CELL_SIZE).round().max(1.0) as usize;
        BevGrid::new(cells, cells, (BEV_CELL_SIZE / 2.0, BEV_CELL_SIZE / 2.0)).expect("positive size")
    }

    /// Ground positions of every pedestrian at `frame`.
    pub fn walker_positions(&self, frame: u32) -> Vec<(f64, f64)> {
        let t = frame as f64 / self.config.frame_rate;
        let (lo, hi) = (WALKER_WIDTH, self.config.area - WALKER_WIDTH);
        self.walkers
            .iter()
            .map(|w| {
                (
                    bounce(w.start.0 + w.velocity.0 * t, lo, hi),
                    bounce(w.start.1 + w.velocity.1 * t, lo, hi),
                )
            })
            .collect()
    }

    /// Image and exact target mask seen by `camera` at `frame`.
    pub fn render(&self, camera: usize, frame: u32) -> (RasterImage, SegMask) {
        let cam = &self.cameras[camera];
        let mut img = self.backgrounds[camera].clone();
        let (w, h) = (self.config.width, self.config.height);
        let mut mask = SegMask::empty(w, h).expect("nonzero size");

        let rot = cam.rotation();
        let right = Vector3::new(rot[(0, 0)], rot[(0, 1)], 0.0);
        let right = if right.norm() > 1e-9 { right.normalize() } else { Vector3::x() };
        let centre = -(rot.transpose() * cam.translation());

        let mut order: Vec<(f64, usize, (f64, f64))> = self
            .walker_positions(frame)
            .into_iter()
            .enumerate()
            .map(|(i, p)| ((p.0 - centre.x).hypot(p.1 - centre.y), i, p))
            .collect();
        // far to near so closer pedestrians occlude
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        for (_, i, (x, y)) in order {
            let foot = Vector3::new(x, y, 0.0);
            let half = right * (WALKER_WIDTH / 2.0);
            let up = Vector3::new(0.0, 0.0, WALKER_HEIGHT);
            let corners = [foot - half, foot + half, foot + half + up, foot - half + up];
            let Some(quad) = corners
                .iter()
                .map(|c| cam.project_point(*c))
                .collect::<Option<Vec<(f64, f64)>>>()
            else {
                continue;
            };
            paint_quad(&mut img, &mut mask, &quad, self.walkers[i].color);
        }
        (img, mask)
    }
}

fn bounce(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let m = (x - lo).rem_euclid(2.0 * span);
    lo + if m <= span { m } else { 2.0 * span - m }
}

fn tri(x: f64) -> f64 {
    (x - x.floor() - 0.5).abs() * 2.0
}

fn ground_color(x: f64, y: f64) -> [u8; 3] {
    let mut r = 70.0 + 90.0 * tri(x / 7.0) + 30.0 * tri(y / 3.0);
    let mut g = 80.0 + 80.0 * tri(y / 6.0) + 25.0 * tri(x / 2.5);
    let mut b = 60.0 + 70.0 * tri((x + y) / 9.0);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    if fx < 0.04 || fy < 0.04 {
        r *= 0.7;
        g *= 0.7;
        b *= 0.7;
    }
    [r as u8, g as u8, b as u8]
}

fn render_background(cam: &CameraModel, width: u32, height: u32) -> RasterImage {
    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    let inv = cam.ground_homography().try_inverse();
    for v in 0..height {
        for u in 0..width {
            let (pu, pv) = (u as f64 + 0.5, v as f64 + 0.5);
            let ground = inv.as_ref().and_then(|inv| {
                let g = inv * Vector3::new(pu, pv, 1.0);
                // positive depth iff the homogeneous weight is positive
                (g.z > 1e-12).then(|| (g.x / g.z, g.y / g.z))
            });
            let px = match ground {
                Some((x, y)) => ground_color(x, y),
                None => {
                    let t = v as f64 / height as f64;
                    [(150.0 + 60.0 * t) as u8, (180.0 + 40.0 * t) as u8, 235]
                }
            };
            data.extend_from_slice(&px);
        }
    }
    RasterImage::new(width, height, 3, data).expect("sized buffer")
}

fn paint_quad(img: &mut RasterImage, mask: &mut SegMask, quad: &[(f64, f64)], color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let min_u = quad.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).max(0.0);
    let max_u = quad.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).min(w);
    let min_v = quad.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(0.0);
    let max_v = quad.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).min(h);
    if min_u >= max_u || min_v >= max_v {
        return;
    }
    let (top, bottom) = (
        quad.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        quad.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    for v in min_v.floor() as u32..(max_v.ceil() as u32).min(img.height()) {
        for u in min_u.floor() as u32..(max_u.ceil() as u32).min(img.width()) {
            let p = (u as f64 + 0.5, v as f64 + 0.5);
            if !inside_convex(quad, p) {
                continue;
            }
            // head band in skin tone, the rest in clothing colour
            let rel = (p.1 - top) / (bottom - top).max(1e-9);
            let px = if rel < 0.13 { [224, 172, 140] } else { color };
            img.pixel_mut(u, v).copy_from_slice(&px);
            mask.set(u, v);
        }
    }
}

fn inside_convex(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut sign = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Fixed five-frame corpus at 1280x720: one frame from each of five views
/// of the default scene.
pub fn corpus() -> Vec<(RasterImage, SegMask)> {
    let scene = SyntheticScene::new(SceneConfig {
        cameras: 5,
        ..SceneConfig::default()
    })
    .expect("default scene is valid");
    (0..5).map(|i| scene.render(i, 10 * i as u32)).collect()
}
