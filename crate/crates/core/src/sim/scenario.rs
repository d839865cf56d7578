//! Scenario description and its flat `key = value` config format.
//!
//! ```text
//! # shared settings
//! frames = 200
//! frame_rate = 2
//! ratio = 0.7
//! kappa = 0.15
//! mode = semantic            # or random
//! base_seed = 42
//! dropout = 0.3
//! dropout_policy = bernoulli # or fixed
//! patch_size = 20
//! resize = true
//! fill = nearest-patch       # zero | global-mean | nearest-patch
//! header_policy = payload-only
//! mask_threshold = 128
//! bev.rows = 120
//! bev.cols = 120
//! bev.origin_x = 0.05
//! bev.origin_y = 0.05
//! bev.cell_size = 0.1
//!
//! # cameras read from disk; {frame} or {frame:04} is replaced by the index
//! camera.0.calibration = cams/c0.txt
//! camera.0.images = seq/c0/{frame:04}.ppm
//! camera.0.masks = seq/c0/{frame:04}.pgm
//!
//! # ... or a generated scene instead of camera.N entries
//! synthetic.cameras = 7
//! synthetic.width = 320
//! synthetic.height = 240
//! synthetic.focal = 250
//! synthetic.area = 12
//! synthetic.walkers = 20
//! synthetic.camera_radius = 14
//! synthetic.camera_height = 5
//! synthetic.seed = 1
//! ```
//!
//! Relative paths are resolved against the config file's directory. BEV
//! settings default to the synthetic walking area when a scene is generated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{load_calibration, BevGrid, CameraModel, BEV_CELL_SIZE};
use crate::imageio::{binarize_mask, load_image, RasterImage, SegMask, DEFAULT_MASK_THRESHOLD};
use crate::masking::{MaskMode, DEFAULT_KAPPA};
use crate::patch_grid::MaskingRatio;
use crate::reconstruct::FillMethod;
use crate::wire::HeaderPolicy;

use super::synthetic::{SceneConfig, SyntheticScene};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutPolicy {
    /// Every camera drops independently each frame with probability `d`.
    Bernoulli,
    /// The `floor(d * cameras)` lowest-id cameras are down for the whole run.
    Fixed,
}

impl FromStr for DropoutPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(DropoutPolicy::Bernoulli),
            "fixed" | "fixed-subset" => Ok(DropoutPolicy::Fixed),
            other => Err(Error::Config(format!("unknown dropout policy '{other}'"))),
        }
    }
}

impl std::fmt::Display for DropoutPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropoutPolicy::Bernoulli => "bernoulli",
            DropoutPolicy::Fixed => "fixed",
        })
    }
}

#[derive(Clone, Debug)]
pub enum FrameSource {
    Files { images: String, masks: String, threshold: u8 },
    Synthetic { scene: Arc<SyntheticScene>, camera: usize },
}

impl FrameSource {
    /// Full-resolution frame and target mask.
    pub fn load(&self, frame: u32) -> Result<(RasterImage, SegMask)> {
        match self {
            FrameSource::Files {
                images,
                masks,
                threshold,
            } => {
                let img = load_image(frame_path(images, frame)?)?;
                let mask = binarize_mask(&load_image(frame_path(masks, frame)?)?, *threshold)?;
                if (img.width(), img.height()) != (mask.width(), mask.height()) {
                    return Err(Error::DimensionMismatch(format!(
                        "image is {}x{} but mask is {}x{}",
                        img.width(),
                        img.height(),
                        mask.width(),
                        mask.height()
                    )));
                }
                Ok((img, mask))
            }
            FrameSource::Synthetic { scene, camera } => Ok(scene.render(*camera, frame)),
        }
    }

    /// Fails with an I/O error if the frame's files are missing.
    pub fn check(&self, frame: u32) -> Result<()> {
        if let FrameSource::Files { images, masks, .. } = self {
            for pattern in [images, masks] {
                let path = PathBuf::from(frame_path(pattern, frame)?);
                if !path.is_file() {
                    return Err(Error::Io {
                        path,
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Substitutes `{frame}` or a zero-padded `{frame:0N}` in `pattern`.
pub fn frame_path(pattern: &str, frame: u32) -> Result<String> {
    let Some(start) = pattern.find("{frame") else {
        return Err(Error::Config(format!("sequence pattern '{pattern}' has no {{frame}} field")));
    };
    let end = pattern[start..]
        .find('}')
        .map(|e| start + e)
        .ok_or_else(|| Error::Config(format!("unterminated field in '{pattern}'")))?;
    let spec = &pattern[start + "{frame".len()..end];
    let number = match spec {
        "" => frame.to_string(),
        s if s.starts_with(":0") => {
            let width: usize = s[2..]
                .parse()
                .map_err(|_| Error::Config(format!("bad width in '{pattern}'")))?;
            format!("{frame:0width$}")
        }
        _ => return Err(Error::Config(format!("bad frame field in '{pattern}'"))),
    };
    Ok(format!("{}{}{}", &pattern[..start], number, &pattern[end + 1..]))
}

#[derive(Clone, Debug)]
pub struct CameraSource {
    /// Calibration at the captured resolution.
    pub model: CameraModel,
    pub frames: FrameSource,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub cameras: Vec<CameraSource>,
    pub frame_count: u32,
    pub frame_rate: f64,
    pub ratio: MaskingRatio,
    pub kappa: f64,
    pub mode: MaskMode,
    pub base_seed: u64,
    pub dropout: f64,
    pub dropout_policy: DropoutPolicy,
    pub patch_size: u32,
    /// Halve frames (and intrinsics) before masking.
    pub resize: bool,
    pub fill: FillMethod,
    pub header_policy: HeaderPolicy,
    /// Empty grid defining the BEV extent.
    pub bev: BevGrid,
}

impl Scenario {
    /// Default settings for the given cameras.
    pub fn with_defaults(cameras: Vec<CameraSource>, bev: BevGrid, frame_count: u32) -> Scenario {
        Scenario {
            cameras,
            frame_count,
            frame_rate: 2.0,
            ratio: MaskingRatio::from_milli(700).expect("in range"),
            kappa: DEFAULT_KAPPA,
            mode: MaskMode::Semantic,
            base_seed: 0,
            dropout: 0.0,
            dropout_policy: DropoutPolicy::Bernoulli,
            patch_size: 20,
            resize: true,
            fill: FillMethod::NearestPatch,
            header_policy: HeaderPolicy::PayloadOnly,
            bev,
        }
    }

    /// Default settings over a generated scene, sized to its walking area.
    pub fn synthetic(scene: SyntheticScene, frame_count: u32) -> Scenario {
        let bev = scene.bev_grid();
        let frame_rate = scene.config().frame_rate;
        let scene = Arc::new(scene);
        let cameras = scene
            .cameras()
            .iter()
            .enumerate()
            .map(|(camera, model)| CameraSource {
                model: model.clone(),
                frames: FrameSource::Synthetic {
                    scene: Arc::clone(&scene),
                    camera,
                },
            })
            .collect();
        Scenario {
            frame_rate,
            ..Scenario::with_defaults(cameras, bev, frame_count)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Config("scenario has no cameras".into()));
        }
        if self.cameras.len() > u16::MAX as usize + 1 {
            return Err(Error::Config("too many cameras".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1]", self.dropout)));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config("kappa must be a finite non-negative number".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Scenario> {
        let mut kv = parse_pairs(text)?;

        let mut synth = None;
        if kv.keys().any(|k| k.starts_with("synthetic.")) {
            let d = SceneConfig::default();
            let cfg = SceneConfig {
                cameras: take(&mut kv, "synthetic.cameras")?.unwrap_or(d.cameras),
                width: take(&mut kv, "synthetic.width")?.unwrap_or(d.width),
                height: take(&mut kv, "synthetic.height")?.unwrap_or(d.height),
                focal: take(&mut kv, "synthetic.focal")?.unwrap_or(d.focal),
                area: take(&mut kv, "synthetic.area")?.unwrap_or(d.area),
                walkers: take(&mut kv, "synthetic.walkers")?.unwrap_or(d.walkers),
                camera_radius: take(&mut kv, "synthetic.camera_radius")?.unwrap_or(d.camera_radius),
                camera_height: take(&mut kv, "synthetic.camera_height")?.unwrap_or(d.camera_height),
                frame_rate: take(&mut kv, "frame_rate")?.unwrap_or(d.frame_rate),
                seed: take(&mut kv, "synthetic.seed")?.unwrap_or(d.seed),
            };
            synth = Some(SyntheticScene::new(cfg)?);
        }

        let threshold = take(&mut kv, "mask_threshold")?.unwrap_or(DEFAULT_MASK_THRESHOLD);
        let mut cameras = Vec::new();
        for id in 0.. {
            let prefix = format!("camera.{id}.");
            if !kv.keys().any(|k| k.starts_with(&prefix)) {
                break;
            }
            let mut field = |name: &str| -> Result<PathBuf> {
                let key = format!("{prefix}{name}");
                let value: String = take(&mut kv, &key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))?;
                Ok(base.join(value))
            };
            let model = load_calibration(field("calibration")?)?;
            let images = field("images")?.to_string_lossy().into_owned();
            let masks = field("masks")?.to_string_lossy().into_owned();
            cameras.push(CameraSource {
                model,
                frames: FrameSource::Files {
                    images,
                    masks,
                    threshold,
                },
            });
        }

        let bev = if ["bev.rows", "bev.cols", "bev.origin_x", "bev.origin_y", "bev.cell_size"]
            .iter()
            .any(|k| kv.contains_key(*k))
        {
            let rows = take(&mut kv, "bev.rows")?.ok_or_else(|| Error::Config("missing key bev.rows".into()))?;
            let cols = take(&mut kv, "bev.cols")?.ok_or_else(|| Error::Config("missing key bev.cols".into()))?;
            let cell = take(&mut kv, "bev.cell_size")?.unwrap_or(BEV_CELL_SIZE);
            let ox = take(&mut kv, "bev.origin_x")?.unwrap_or(cell / 2.0);
            let oy = take(&mut kv, "bev.origin_y")?.unwrap_or(cell / 2.0);
            Some(BevGrid::with_cell_size(rows, cols, (ox, oy), cell)?)
        } else {
            None
        };

        let frame_count = take(&mut kv, "frames")?;
        let mut scenario = match (synth, cameras.is_empty()) {
            (Some(scene), true) => {
                let mut s = Scenario::synthetic(scene, frame_count.unwrap_or(200));
                if let Some(bev) = bev {
                    s.bev = bev;
                }
                s
            }
            (Some(_), false) => {
                return Err(Error::Config("use either synthetic.* or camera.N.* keys, not both".into()))
            }
            (None, true) => return Err(Error::Config("scenario has no cameras".into())),
            (None, false) => Scenario::with_defaults(
                cameras,
                bev.ok_or_else(|| Error::Config("file-backed scenarios need bev.rows and bev.cols".into()))?,
                frame_count.ok_or_else(|| Error::Config("missing key frames".into()))?,
            ),
        };

        if let Some(v) = take(&mut kv, "frame_rate")? {
            scenario.frame_rate = v;
        }
        if let Some(v) = take::<f64>(&mut kv, "ratio")? {
            scenario.ratio = MaskingRatio::new(v)?;
        }
        if let Some(v) = take(&mut kv, "kappa")? {
            scenario.kappa = v;
        }
        if let Some(v) = take(&mut kv, "mode")? {
            scenario.mode = v;
        }
        if let Some(v) = take(&mut kv, "base_seed")? {
            scenario.base_seed = v;
        }
        if let Some(v) = take(&mut kv, "dropout")? {
            scenario.dropout = v;
        }
        if let Some(v) = take(&mut kv, "dropout_policy")? {
            scenario.dropout_policy = v;
        }
        if let Some(v) = take(&mut kv, "patch_size")? {
            scenario.patch_size = v;
        }
        if let Some(v) = take(&mut kv, "resize")? {
            scenario.resize = v;
        }
        if let Some(v) = take(&mut kv, "fill")? {
            scenario.fill = v;
        }
        if let Some(v) = take(&mut kv, "header_policy")? {
            scenario.header_policy = v;
        }

        if let Some(key) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().to_string();
        if kv.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(kv)
}

fn take<T>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T: FromStr,
{
    kv.remove(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
        })
        .transpose()
}
