use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mvmask::geometry::{
    aggregate, load_calibration, project_ground_to_pixel, project_pixel_to_ground, splat_coverage, BevGrid,
    CameraModel,
};
use mvmask::imageio::{binarize_mask, downsample_by_2, load_image, save_image, RasterImage, SegMask};
use mvmask::masking::{sample_random, semantic_plan, MaskMode, MaskPlan};
use mvmask::metrics::{sweep as run_sweep, write_sweep_csv, SweepConfig};
use mvmask::patch_grid::{make_grid, unmasked_count};
use mvmask::reconstruct::fill_baseline;
use mvmask::sim::{self, Scenario};
use mvmask::wire::{self, comm_report, SparseImage, MAGIC};

use crate::{
    DecodeArgs, EncodeArgs, FillArgs, MaskArgs, MaskingOpts, ProjectArgs, ReportArgs, SimulateArgs, SweepArgs,
};

/// Errors in how the command was invoked, as opposed to in its data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_frame(opts: &MaskingOpts, image: &Path, seg: Option<&Path>) -> Result<(RasterImage, Option<SegMask>)> {
    let mut img = load_image(image)?;
    let mut mask = seg
        .map(|p| -> Result<SegMask> { Ok(binarize_mask(&load_image(p)?, opts.threshold)?) })
        .transpose()?;
    if !opts.no_resize {
        img = downsample_by_2(&img)?;
        mask = mask.map(|m| m.downsample_by_2()).transpose()?;
    }
    Ok((img, mask))
}

fn make_plan(opts: &MaskingOpts, img: &RasterImage, mask: Option<&SegMask>) -> Result<MaskPlan> {
    let grid = make_grid(img.width(), img.height(), opts.patch_size)?;
    Ok(match (opts.mode, mask) {
        (MaskMode::Semantic, Some(mask)) => semantic_plan(mask, &grid, opts.kappa, opts.ratio, opts.seed)?,
        (MaskMode::Semantic, None) => return Err(usage("semantic mode needs a segmentation mask")),
        (MaskMode::Random, _) => sample_random(&grid, opts.ratio, opts.seed)?,
    })
}

fn read_plan(path: &Path) -> Result<MaskPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MaskPlan::from_json(&text).with_context(|| format!("parsing plan {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn mask(a: MaskArgs) -> Result<()> {
    let (img, mask) = load_frame(&a.masking, &a.image, a.seg.as_deref())?;
    let plan = make_plan(&a.masking, &img, mask.as_ref())?;
    write(&a.out, plan.to_json() + "\n")?;
    eprintln!(
        "kept {} of {} patches",
        plan.kept_count(),
        plan.grid().patch_count()
    );
    Ok(())
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    let (img, mask) = load_frame(&a.masking, &a.image, a.seg.as_deref())?;
    let plan = match &a.plan {
        Some(path) => read_plan(path)?,
        None => make_plan(&a.masking, &img, mask.as_ref())?,
    };
    let bytes = wire::encode(&img, &plan, a.camera, a.frame)?;
    write(&a.out, &bytes)?;
    eprintln!("{} bytes", bytes.len());
    Ok(())
}

/// Output stem for a decoded frame: `c{camera:03}_f{frame:06}`.
pub fn frame_stem(camera: u16, frame: u32) -> String {
    format!("c{camera:03}_f{frame:06}")
}

pub fn decode(a: DecodeArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for input in &a.inputs {
        let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
        let frames = if bytes.starts_with(&MAGIC) {
            vec![bytes]
        } else {
            wire::read_records(&bytes).with_context(|| format!("reading records from {}", input.display()))?
        };
        for raw in frames {
            let frame = wire::decode(&raw).with_context(|| format!("decoding {}", input.display()))?;
            let stem = a.out.join(frame_stem(frame.camera_id, frame.frame_id));
            save_image(frame.sparse.image(), stem.with_extension("ppm"))?;
            write(&stem.with_extension("plan.json"), frame.plan.to_json() + "\n")?;
            println!("{}", stem.with_extension("ppm").display());
        }
    }
    Ok(())
}

pub fn fill(a: FillArgs) -> Result<()> {
    let plan = read_plan(&a.plan)?;
    let sparse = SparseImage::from_parts(load_image(&a.sparse)?, &plan)?;
    let filled = fill_baseline(&sparse, &plan, a.fill_method)?;
    save_image(&filled, &a.out)?;
    Ok(())
}

fn camera_for(path: &Path, no_resize: bool) -> Result<CameraModel> {
    let cam = load_calibration(path)?;
    Ok(if no_resize { cam } else { cam.scaled(0.5)? })
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let cams: Vec<CameraModel> = a
        .calibration
        .iter()
        .map(|p| camera_for(p, a.no_resize))
        .collect::<Result<_>>()?;
    if let Some((x, y)) = a.ground {
        for (path, cam) in a.calibration.iter().zip(&cams) {
            match project_ground_to_pixel(cam, x, y) {
                Ok((u, v)) => println!("{}: ({x}, {y}) -> pixel ({u:.6}, {v:.6})", path.display()),
                Err(e) => println!("{}: ({x}, {y}) -> {e}", path.display()),
            }
        }
    }
    if let Some((u, v)) = a.pixel {
        for (path, cam) in a.calibration.iter().zip(&cams) {
            match project_pixel_to_ground(cam, u, v) {
                Ok((x, y)) => println!("{}: pixel ({u}, {v}) -> ground ({x:.6}, {y:.6})", path.display()),
                Err(e) => println!("{}: pixel ({u}, {v}) -> {e}", path.display()),
            }
        }
    }
    if a.plan.is_empty() {
        if a.ground.is_none() && a.pixel.is_none() {
            return Err(usage("give --ground, --pixel or --plan"));
        }
        return Ok(());
    }
    if a.plan.len() != cams.len() {
        return Err(usage("--plan and --calibration must be given the same number of times"));
    }
    let grid = BevGrid::with_cell_size(a.bev_rows, a.bev_cols, a.bev_origin, a.cell_size)?;
    let layers: Vec<BevGrid> = a
        .plan
        .iter()
        .zip(&cams)
        .map(|(p, cam)| Ok(splat_coverage(cam, &read_plan(p)?, &grid)?))
        .collect::<Result<_>>()?;
    let total = aggregate(&layers)?;
    println!(
        "covered cells: {} of {}; mean multiplicity {:.4}",
        total.covered_cells(),
        total.rows() * total.cols(),
        total.mean_multiplicity()
    );
    if let Some(out) = &a.out {
        save_image(&total.to_heatmap(), out)?;
    }
    if let Some(csv) = &a.csv {
        let file = fs::File::create(csv).with_context(|| format!("creating {}", csv.display()))?;
        total.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    if a.cameras == 0 {
        return Err(usage("--cameras must be at least 1"));
    }
    let scale = if a.no_resize { 1 } else { 2 };
    if a.width % scale != 0 || a.height % scale != 0 {
        bail!("{}x{} cannot be halved", a.width, a.height);
    }
    let grid = make_grid(a.width / scale, a.height / scale, a.patch_size)?;
    let kept = unmasked_count(&grid, a.ratio);
    // bit counts depend only on the grid, mode and kept count
    let plan = MaskPlan::new(
        grid,
        a.mode,
        a.ratio,
        (a.mode == MaskMode::Semantic).then_some(mvmask::masking::DEFAULT_KAPPA),
        0,
        (0..kept as u32).collect(),
    )?;
    let plans = vec![plan; a.cameras];
    let r = comm_report(&plans, a.header_policy, scale);
    println!("cameras        {}", r.cameras);
    println!(
        "grid           {}x{}, p={}, N={}, S={}",
        grid.image_width(),
        grid.image_height(),
        grid.patch_size(),
        grid.patch_count(),
        kept
    );
    println!("payload        {} bits", r.payload_bits);
    println!("header         {} bits", r.header_bits);
    println!("index          {} bits", r.index_bits);
    println!("total          {} bits ({:.2} Mb, {})", r.total_bits, r.total_megabits(), policy_name(a.header_policy));
    println!("baseline       {} bits ({:.2} Mb)", r.baseline_full_bits, r.baseline_megabits());
    match r.reduction_factor() {
        Some(f) => println!("reduction      {f:.2}x"),
        None => println!("reduction      n/a"),
    }
    println!(
        "throughput     {:.2} Mb/s at {} fps",
        r.total_bits as f64 * a.frame_rate / 1e6,
        a.frame_rate
    );
    Ok(())
}

fn policy_name(p: mvmask::wire::HeaderPolicy) -> &'static str {
    match p {
        mvmask::wire::HeaderPolicy::Include => "with headers",
        mvmask::wire::HeaderPolicy::PayloadOnly => "payload only",
    }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut s: Scenario = Scenario::load(&a.scenario)?;
    if let Some(v) = a.ratio {
        s.ratio = v;
    }
    if let Some(v) = a.kappa {
        s.kappa = v;
    }
    if let Some(v) = a.mode {
        s.mode = v;
    }
    if let Some(v) = a.seed {
        s.base_seed = v;
    }
    if let Some(v) = a.dropout {
        s.dropout = v;
    }
    if let Some(v) = a.dropout_policy {
        s.dropout_policy = v;
    }
    if let Some(v) = a.fill_method {
        s.fill = v;
    }
    if let Some(v) = a.header_policy {
        s.header_policy = v;
    }
    if let Some(v) = a.frames {
        s.frame_count = v;
    }
    s.validate()?;
    let run = sim::run(&s)?;
    sim::write_outputs(&run, &a.out, a.heatmaps)?;
    println!("{}", sim::summary_json(&run.summary));
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let masks: Vec<SegMask> = a
        .masks
        .iter()
        .map(|p| -> Result<SegMask> {
            let m = binarize_mask(&load_image(p)?, a.threshold)?;
            Ok(if a.no_resize { m } else { m.downsample_by_2()? })
        })
        .collect::<Result<_>>()?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let cfg = SweepConfig {
        ratios: a.ratio,
        kappa: a.kappa,
        modes: a.mode,
        seeds: (a.seed..a.seed + a.seeds).collect(),
        patch_size: a.patch_size,
    };
    let rows = run_sweep(&masks, &cfg)?;
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_sweep_csv(&rows, std::io::BufWriter::new(file))?;
        }
        None => write_sweep_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}
