use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "fisheye-distance",
    version,
    about = "Estimate distances between people seen by an overhead fisheye camera"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write a machine-readable JSON report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub output_json: Option<PathBuf>,
    /// JSON or TOML file with defaults for any option.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for outputs that are not given an explicit path.
    #[arg(
        long,
        global = true,
        env = "FISHEYE_DISTANCE_OUT_DIR",
        default_value = "."
    )]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit camera intrinsics to 3D-to-pixel correspondences.
    Calibrate(CalibrateArgs),
    /// Generate synthetic training grids, scenes or classroom collections.
    #[command(group(ArgGroup::new("mode").required(true).multiple(false)))]
    Synth(SynthArgs),
    /// Train the distance regressor on grid pairs.
    Train(TrainArgs),
    /// Estimate distances between all people in each image.
    Estimate(EstimateArgs),
    /// Score estimators against ground truth.
    Evaluate(EvaluateArgs),
    /// MAE per category over a range of shared alpha values.
    SweepAlpha(SweepArgs),
    /// Summary statistics of a ground-truth file.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV with columns x_in,y_in,z_in,u_px,v_px.
    #[arg(long)]
    pub correspondences: Option<PathBuf>,
    /// Starting camera JSON; defaults to the synthetic camera.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Camera height above the floor, inches.
    #[arg(long)]
    pub mount_height: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Fitted camera JSON [default: <out-dir>/camera.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CollectionKind {
    Fixed,
    Varying,
}

#[derive(Debug, Args)]
#[group(skip)]
pub struct SynthArgs {
    /// Virtual calibration grid pairs, written as CSV.
    #[arg(long, group = "mode")]
    pub grid: bool,
    /// One image of randomly placed people.
    #[arg(long, group = "mode")]
    pub scene: bool,
    /// Classroom pair collection, one image per pair.
    #[arg(long, value_enum, group = "mode")]
    pub collection: Option<CollectionKind>,
    /// Camera JSON; defaults to the synthetic camera.
    #[arg(long)]
    pub camera: Option<PathBuf>,

    /// Grid spacing, inches.
    #[arg(long, help_heading = "Grid")]
    pub spacing: Option<f64>,
    #[arg(long, help_heading = "Grid")]
    pub rows: Option<usize>,
    #[arg(long, help_heading = "Grid")]
    pub cols: Option<usize>,
    /// Height of the grid plane above the floor, inches.
    #[arg(long, help_heading = "Grid")]
    pub plane_height: Option<f64>,
    /// Number of grid pairs to sample [default: 20000].
    #[arg(long, help_heading = "Grid")]
    pub pairs: Option<usize>,

    #[arg(long, help_heading = "Scene")]
    pub people: Option<usize>,
    #[arg(long, help_heading = "Scene")]
    pub height_min: Option<f64>,
    #[arg(long, help_heading = "Scene")]
    pub height_max: Option<f64>,
    /// Probability that a person is occluded.
    #[arg(long, help_heading = "Scene")]
    pub occluded_probability: Option<f64>,
    /// Hidden fraction of an occluded person's height.
    #[arg(long, help_heading = "Scene")]
    pub occlusion: Option<f64>,

    /// Round pixel coordinates to whole pixels.
    #[arg(long)]
    pub quantize: bool,
    /// Output path for --grid [default: <out-dir>/grid.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Grid pairs CSV written by `synth --grid`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Model JSON [default: <out-dir>/model.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Layer widths, e.g. 3,100,100,100,100,1.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Side of the square image, pixels.
    #[arg(long)]
    pub image_side: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Inverse projection with an assumed person height.
    #[arg(long, conflicts_with = "mlp")]
    pub geometry: bool,
    /// Trained regressor.
    #[arg(long)]
    pub mlp: bool,
    /// Camera JSON, required with --geometry.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Model JSON, required with --mlp.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Assumed person height, inches [default: 65].
    #[arg(long)]
    pub height: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// Shared center adjustment factor in [-0.1, 1.0).
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["alpha_visible", "alpha_occluded"])]
    pub alpha: Option<f64>,
    /// Adjustment for visible people.
    #[arg(long, allow_hyphen_values = true, requires = "alpha_occluded")]
    pub alpha_visible: Option<f64>,
    /// Adjustment for occluded people.
    #[arg(long, allow_hyphen_values = true, requires = "alpha_visible")]
    pub alpha_occluded: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Detections JSONL.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub alpha: AlphaArgs,
    /// Side of the square image, pixels [default: 2048].
    #[arg(long)]
    pub image_side: Option<f64>,
    /// CSV id_a,id_b,distance_in [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Ground-truth CSV id_a,id_b,distance_in,category.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Include the geometric estimator (one row per --height).
    #[arg(long)]
    pub geometry: bool,
    /// Include the regressor.
    #[arg(long)]
    pub mlp: bool,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Assumed person heights, inches [default: 65].
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub height: Vec<f64>,
    #[command(flatten)]
    pub alpha: AlphaArgs,
    /// Violation threshold, inches [default: 72].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub image_side: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub image_side: Option<f64>,
    /// CSV alpha,category,mae_in [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Detections to check the ground truth against.
    #[arg(long)]
    pub detections: Option<PathBuf>,
}
