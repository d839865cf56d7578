mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvmask::masking::{MaskMode, DEFAULT_KAPPA};
use mvmask::patch_grid::MaskingRatio;
use mvmask::reconstruct::FillMethod;
use mvmask::wire::HeaderPolicy;

/// Semantic-guided patch masking for multiview camera networks.
#[derive(Parser, Debug)]
#[command(name = "mvmask", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose the patches a camera keeps and write the plan as JSON.
    Mask(MaskArgs),
    /// Encode a frame for transmission.
    Encode(EncodeArgs),
    /// Decode frames into sparse images and plans.
    Decode(DecodeArgs),
    /// Fill the missing patches of a decoded sparse image.
    Fill(FillArgs),
    /// Ground-plane projection: point queries or BEV coverage of plans.
    Project(ProjectArgs),
    /// Communication volume for a camera network.
    Report(ReportArgs),
    /// Run the network simulator on a scenario file.
    Simulate(SimulateArgs),
    /// Retention sweep over masking ratios, modes and seeds.
    Sweep(SweepArgs),
}

fn parse_ratio(s: &str) -> Result<MaskingRatio, String> {
    let r: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    MaskingRatio::new(r).map_err(|e| e.to_string())
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated numbers")?;
    let a = a.trim().parse().map_err(|_| format!("'{a}' is not a number"))?;
    let b = b.trim().parse().map_err(|_| format!("'{b}' is not a number"))?;
    Ok((a, b))
}

#[derive(Args, Debug, Clone)]
struct MaskingOpts {
    /// Fraction of patches withheld, in thousandths.
    #[arg(long, default_value = "0.7", value_parser = parse_ratio)]
    ratio: MaskingRatio,
    /// Exponent applied to patch activity.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value = "semantic", value_parser = parse_from_str::<MaskMode>)]
    mode: MaskMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    patch_size: u32,
    /// Inputs are already at transmission size; skip the 2x downscale.
    #[arg(long)]
    no_resize: bool,
    /// Mask pixels at or above this value are targets.
    #[arg(long, default_value_t = mvmask::imageio::DEFAULT_MASK_THRESHOLD)]
    threshold: u8,
}

#[derive(Args, Debug)]
struct MaskArgs {
    #[command(flatten)]
    masking: MaskingOpts,
    /// Camera frame (PPM).
    image: PathBuf,
    /// Segmentation mask (PGM); required in semantic mode.
    seg: Option<PathBuf>,
    /// Plan output (JSON).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    masking: MaskingOpts,
    /// Use this plan instead of computing one.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    camera: u16,
    #[arg(long, default_value_t = 0)]
    frame: u32,
    image: PathBuf,
    seg: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Encoded frames or length-prefixed record streams.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FillArgs {
    #[arg(long, default_value = "nearest-patch", value_parser = parse_from_str::<FillMethod>)]
    fill_method: FillMethod,
    /// Plan written by `decode`.
    #[arg(long)]
    plan: PathBuf,
    /// Sparse image written by `decode`.
    sparse: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Calibration file(s) at capture resolution, paired in order with --plan.
    #[arg(long, required = true)]
    calibration: Vec<PathBuf>,
    #[arg(long)]
    plan: Vec<PathBuf>,
    /// Ground point x,y in metres to map to a pixel.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    ground: Option<(f64, f64)>,
    /// Pixel u,v to map to the ground.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pixel: Option<(f64, f64)>,
    /// Plans and pixels refer to frames at capture resolution.
    #[arg(long)]
    no_resize: bool,
    #[arg(long, default_value_t = 120)]
    bev_rows: usize,
    #[arg(long, default_value_t = 120)]
    bev_cols: usize,
    /// Centre of BEV cell (0, 0), metres.
    #[arg(long, value_parser = parse_pair, default_value = "0.05,0.05", allow_hyphen_values = true)]
    bev_origin: (f64, f64),
    #[arg(long, default_value_t = mvmask::geometry::BEV_CELL_SIZE)]
    cell_size: f64,
    /// Coverage heatmap (PGM).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Coverage grid as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, default_value_t = 7)]
    cameras: usize,
    #[arg(long, default_value = "0.7", value_parser = parse_ratio)]
    ratio: MaskingRatio,
    #[arg(long, default_value = "payload-only", value_parser = parse_from_str::<HeaderPolicy>)]
    header_policy: HeaderPolicy,
    #[arg(long, default_value = "random", value_parser = parse_from_str::<MaskMode>)]
    mode: MaskMode,
    /// Capture width in pixels.
    #[arg(long, default_value_t = 1280)]
    width: u32,
    #[arg(long, default_value_t = 720)]
    height: u32,
    #[arg(long, default_value_t = 20)]
    patch_size: u32,
    #[arg(long)]
    no_resize: bool,
    #[arg(long, default_value_t = 2.0)]
    frame_rate: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override settings from the scenario file.
    #[arg(long, value_parser = parse_ratio)]
    ratio: Option<MaskingRatio>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_parser = parse_from_str::<MaskMode>)]
    mode: Option<MaskMode>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, value_parser = parse_from_str::<mvmask::sim::DropoutPolicy>)]
    dropout_policy: Option<mvmask::sim::DropoutPolicy>,
    #[arg(long, value_parser = parse_from_str::<FillMethod>)]
    fill_method: Option<FillMethod>,
    #[arg(long, value_parser = parse_from_str::<HeaderPolicy>)]
    header_policy: Option<HeaderPolicy>,
    #[arg(long)]
    frames: Option<u32>,
    /// Output directory for frames.csv and report.json.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write a BEV heatmap per frame.
    #[arg(long)]
    heatmaps: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9", value_parser = parse_ratio)]
    ratio: Vec<MaskingRatio>,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, value_delimiter = ',', default_value = "semantic,random", value_parser = parse_from_str::<MaskMode>)]
    mode: Vec<MaskMode>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 20)]
    patch_size: u32,
    #[arg(long)]
    no_resize: bool,
    #[arg(long, default_value_t = mvmask::imageio::DEFAULT_MASK_THRESHOLD)]
    threshold: u8,
    /// Segmentation masks (PGM), one per frame.
    #[arg(required = true)]
    masks: Vec<PathBuf>,
    /// CSV output; standard output if absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Mask(a) => commands::mask(a),
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Fill(a) => commands::fill(a),
        Command::Project(a) => commands::project(a),
        Command::Report(a) => commands::report(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
