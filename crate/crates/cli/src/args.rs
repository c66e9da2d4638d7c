//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdgeo::geodesy::BaseModel;
use rdgeo::{BearingModel, GeoPoint, SearchConfig};

#[derive(Debug, Parser)]
#[command(name = "rdgeo", version, about = "Rate-distortion analysis of oriented geographic sites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress the sites at one slope and report the reconstruction points.
    Compress(CompressArgs),
    /// Soft classification table and outlier screening at one slope.
    Classify(CompressArgs),
    /// Sweep slopes, bound the rate-distortion curve and scan for bifurcations.
    Curve(CurveArgs),
    /// Compare two bearing models by their curve bounds.
    CompareModels(CompareArgs),
    /// Report codebook growth along a slope sweep.
    BifurcationScan(ScanArgs),
    /// Bootstrap cloud of optimal points and its confidence ellipse.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic site CSV with von Mises orientation noise.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Site CSV (id,name,latitude,longitude,orientation,year_ce[,weight]).
    #[arg(long, short)]
    pub input: PathBuf,
    /// File of site ids to leave out, one per line; `#` starts a comment.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Keep only sites built before this year (CE).
    #[arg(long, allow_hyphen_values = true)]
    pub before_year: Option<i32>,
    /// Keep only sites built in or after this year (CE).
    #[arg(long, allow_hyphen_values = true)]
    pub from_year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    GreatCircle,
    Rhumb,
    Bisector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseKind {
    GreatCircle,
    Rhumb,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "rhumb")]
    pub model: ModelKind,
    /// First anchor of the bisector model, `LAT,LON`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub anchor_a: Option<GeoPoint>,
    /// Second anchor of the bisector model, `LAT,LON`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub anchor_b: Option<GeoPoint>,
    /// Bearing family the bisector model bisects.
    #[arg(long, value_enum, default_value = "rhumb")]
    pub base: BaseKind,
}

impl ModelArgs {
    pub fn bearing_model(&self) -> Result<BearingModel, String> {
        build_model(self.model, self.anchor_a, self.anchor_b, self.base)
    }
}

pub fn build_model(
    kind: ModelKind,
    a: Option<GeoPoint>,
    b: Option<GeoPoint>,
    base: BaseKind,
) -> Result<BearingModel, String> {
    match kind {
        ModelKind::GreatCircle => Ok(BearingModel::GreatCircle),
        ModelKind::Rhumb => Ok(BearingModel::RhumbLine),
        ModelKind::Bisector => {
            let (Some(a), Some(b)) = (a, b) else {
                return Err("the bisector model needs --anchor-a and --anchor-b".into());
            };
            let base = match base {
                BaseKind::GreatCircle => BaseModel::GreatCircle,
                BaseKind::Rhumb => BaseModel::RhumbLine,
            };
            BearingModel::bisector(a, b, base).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Master seed; every random choice derives from it.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub n_init: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dirichlet_alpha: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub outer_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub prune_weight: f64,
    #[arg(long, default_value_t = 0.05)]
    pub merge_distance: f64,
    #[arg(long, default_value_t = 200)]
    pub max_outer_iters: usize,
    /// Initial simplex offset in degrees.
    #[arg(long, default_value_t = 0.5)]
    pub simplex_step: f64,
}

impl SearchArgs {
    pub fn config(&self, slope: f64) -> SearchConfig {
        let mut c = SearchConfig::new(slope, self.seed);
        c.n_init = self.n_init;
        c.dirichlet_alpha = self.dirichlet_alpha;
        c.outer_tol = self.outer_tol;
        c.prune_weight = self.prune_weight;
        c.merge_distance = self.merge_distance;
        c.max_outer_iters = self.max_outer_iters;
        c.simplex_step_deg = self.simplex_step;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Geojson,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving the output files (created if missing).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Output formats to write; repeat or separate with commas. All by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

impl OutputArgs {
    pub fn wants(&self, f: Format) -> bool {
        self.format.is_empty() || self.format.contains(&f)
    }
}

/// A frozen reconstruction point, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct FixPoint {
    pub label: Option<String>,
    pub point: GeoPoint,
}

pub fn parse_point(s: &str) -> Result<GeoPoint, String> {
    let (lat, lon) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LAT,LON, got {s:?}"))?;
    let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude in {s:?}"))?;
    let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude in {s:?}"))?;
    GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

pub fn parse_fix_point(s: &str) -> Result<FixPoint, String> {
    match s.split_once('=') {
        Some((label, rest)) => {
            let label = label.trim();
            if label.is_empty() {
                return Err(format!("empty label in {s:?}"));
            }
            Ok(FixPoint {
                label: Some(label.to_string()),
                point: parse_point(rest)?,
            })
        }
        None => Ok(FixPoint {
            label: None,
            point: parse_point(s)?,
        }),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number in {s:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number in {s:?}"))?;
    Ok((a, b))
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Slope of the rate-distortion curve (negative).
    #[arg(long, allow_hyphen_values = true)]
    pub slope: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Frozen reconstruction point `[LABEL=]LAT,LON`; repeatable.
    #[arg(long = "fix-point", value_parser = parse_fix_point, allow_hyphen_values = true)]
    pub fix_points: Vec<FixPoint>,
    /// Support fraction that flags a point as carried by few sites.
    #[arg(long, default_value_t = rdgeo::diagnostics::DEFAULT_SUPPORT_THRESHOLD)]
    pub support_threshold: f64,
    #[arg(long, default_value_t = rdgeo::diagnostics::DEFAULT_MAX_SUPPORT_COUNT)]
    pub max_support_count: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Slopes given as a list or as a start/end/step range.
#[derive(Debug, Clone, Args)]
pub struct SlopeArgs {
    /// Comma-separated slopes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["slope_start", "slope_end"])]
    pub slopes: Vec<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "slope_end")]
    pub slope_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "slope_start")]
    pub slope_end: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub slope_step: f64,
}

impl SlopeArgs {
    pub fn slopes(&self) -> Result<Vec<f64>, String> {
        let out = match (self.slope_start, self.slope_end) {
            (Some(a), Some(b)) => {
                if !(self.slope_step > 0.0) || a < b {
                    return Err("slope range runs from --slope-start down to --slope-end with a positive step".into());
                }
                rdgeo::curve_analysis::slope_grid(a, b, self.slope_step)
            }
            _ => self.slopes.clone(),
        };
        if out.is_empty() {
            return Err("no slopes given; use --slopes or --slope-start/--slope-end".into());
        }
        if out.iter().any(|s| !s.is_finite() || *s > 0.0) {
            return Err("slopes must be finite and <= 0".into());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub slopes: SlopeArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = rdgeo::curve_analysis::DEFAULT_GEO_DELTA_DEG)]
    pub geo_delta: f64,
    #[arg(long, default_value_t = rdgeo::curve_analysis::DEFAULT_WEIGHT_CAP)]
    pub weight_cap: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub slopes: SlopeArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = rdgeo::curve_analysis::DEFAULT_GEO_DELTA_DEG)]
    pub geo_delta: f64,
    #[arg(long, default_value_t = rdgeo::curve_analysis::DEFAULT_WEIGHT_CAP)]
    pub weight_cap: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model_a: ModelKind,
    #[arg(long, value_enum)]
    pub model_b: ModelKind,
    /// Anchors used by whichever side is a bisector model.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub anchor_a: Option<GeoPoint>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub anchor_b: Option<GeoPoint>,
    #[arg(long, value_enum, default_value = "rhumb")]
    pub base: BaseKind,
    #[command(flatten)]
    pub slopes: SlopeArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Slope of the full search; required with --fix-point.
    #[arg(long, allow_hyphen_values = true)]
    pub slope: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = rdgeo::bootstrap_region::DEFAULT_RESAMPLES)]
    pub n_resamples: usize,
    #[arg(long, default_value_t = rdgeo::bootstrap_region::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long = "fix-point", value_parser = parse_fix_point, allow_hyphen_values = true)]
    pub fix_points: Vec<FixPoint>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Anchor `LAT,LON`; repeatable.
    #[arg(long = "anchor", value_parser = parse_point, allow_hyphen_values = true)]
    pub anchors: Vec<GeoPoint>,
    #[arg(long, default_value_t = 30)]
    pub sites_per_anchor: usize,
    /// Circular standard deviation of the orientation noise, degrees.
    #[arg(long)]
    pub sigma: f64,
    /// Latitude range of the placement box, `MIN,MAX`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-60,60")]
    pub lat_range: (f64, f64),
    /// Longitude range of the placement box, `MIN,MAX`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-180,180")]
    pub lon_range: (f64, f64),
    /// Place sites at `MIN,MAX` degrees around their own anchor instead of in the box.
    #[arg(long, value_parser = parse_pair)]
    pub ring: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "rhumb")]
    pub model: ModelKind,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
