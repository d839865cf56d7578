//! Shared fixtures for the criterion benches: one synthetic camera frame at
//! the default operating point (1280x720 captured, halved, 20 px patches).

use mvmask::geometry::{BevGrid, CameraModel};
use mvmask::imageio::{downsample_by_2, RasterImage, SegMask};
use mvmask::patch_grid::{make_grid, PatchGrid};
use mvmask::sim::synthetic::{SceneConfig, SyntheticScene};

pub struct Fixture {
    pub image: RasterImage,
    pub mask: SegMask,
    pub grid: PatchGrid,
    /// Calibration matching the halved frame.
    pub camera: CameraModel,
    pub bev: BevGrid,
}

pub fn fixture() -> Fixture {
    let scene = SyntheticScene::new(SceneConfig {
        cameras: 1,
        ..SceneConfig::default()
    })
    .expect("default scene is valid");
    let (image, mask) = scene.render(0, 0);
    let image = downsample_by_2(&image).expect("even size");
    let mask = mask.downsample_by_2().expect("even size");
    Fixture {
        grid: make_grid(image.width(), image.height(), 20).expect("valid grid"),
        camera: scene.cameras()[0].scaled(0.5).expect("positive scale"),
        bev: scene.bev_grid(),
        image,
        mask,
    }
}
