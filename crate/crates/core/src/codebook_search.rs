//! Adaptive codebook search for one slope of the rate-distortion curve.
//!
//! Random Dirichlet weightings of the sites seed candidate reconstruction
//! points, each located by a downhill-simplex search. The candidates are then
//! refined by alternating Blahut–Arimoto with pruning of light points, merging
//! of points whose site posteriors nearly coincide, and relocation of every
//! free point to the optimum of its share of the joint distribution.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::variance_to_sigma;
use crate::dataset::{Site, SourceDistribution};
use crate::geodesy::{normalize_longitude, BearingModel, GeoPoint};
use crate::nelder_mead::{self, NelderMeadConfig};
use crate::rd_engine::{
    blahut_arimoto_probs, Codebook, Coupling, DistortionKernel, DistortionMatrix, EngineError, PreparedPoint,
};
use crate::seeding::task_rng;

/// Latitude limit applied inside the objective so rhumb bearings stay defined.
pub const MAX_SEARCH_LATITUDE: f64 = 89.999;

const DIRICHLET_STREAM: u64 = 0x4449_5249;
const MAX_RESTARTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("pruning removed every reconstruction point; prune_weight is too aggressive")]
    EmptyCodebook,
    #[error("weights must be non-negative with a positive sum, one per site")]
    InvalidWeights,
    #[error("no sites to compress")]
    NoSites,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Slope `s ≤ 0` of the rate-distortion curve.
    pub slope: f64,
    /// Number of Dirichlet draws used to seed the codebook.
    pub n_init: usize,
    pub dirichlet_alpha: f64,
    /// Outer stopping threshold on the change of `R - s·D` (nats). Blahut–Arimoto
    /// runs with a tenth of it.
    pub outer_tol: f64,
    /// Free points with `q(y)` below this are dropped.
    pub prune_weight: f64,
    /// Total-variation distance between site posteriors below which two points merge.
    pub merge_distance: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub simplex_step_deg: f64,
    #[serde(skip)]
    pub nelder_mead: NelderMeadConfig,
}

impl SearchConfig {
    pub fn new(slope: f64, seed: u64) -> Self {
        Self {
            slope,
            n_init: 64,
            dirichlet_alpha: 1.0,
            outer_tol: 1e-6,
            prune_weight: 1e-4,
            merge_distance: 0.05,
            max_outer_iters: 200,
            seed,
            simplex_step_deg: 0.5,
            nelder_mead: NelderMeadConfig::default(),
        }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !self.slope.is_finite() || self.slope > 0.0 {
            return bad("slope must be finite and <= 0");
        }
        if !(self.dirichlet_alpha > 0.0) {
            return bad("dirichlet_alpha must be positive");
        }
        if !(self.outer_tol > 0.0) {
            return bad("outer_tol must be positive");
        }
        if !(self.prune_weight > 0.0 && self.prune_weight < 1.0) {
            return bad("prune_weight must lie in (0, 1)");
        }
        if !(self.merge_distance > 0.0 && self.merge_distance <= 1.0) {
            return bad("merge_distance must lie in (0, 1]");
        }
        if self.max_outer_iters == 0 {
            return bad("max_outer_iters must be positive");
        }
        if !(self.simplex_step_deg > 0.0) {
            return bad("simplex_step_deg must be positive");
        }
        Ok(())
    }
}

/// Result of a single reconstruction-point optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFit {
    pub point: GeoPoint,
    /// Weighted distortion `Σ w(x)·d(x, point)`.
    pub value: f64,
    pub iterations: usize,
    /// False when the simplex search hit its iteration cap; `point` is then the
    /// best vertex found.
    pub converged: bool,
}

/// Weight and conditional mean distortion of one reconstruction point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: GeoPoint,
    pub frozen: bool,
    pub weight: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdSolution {
    pub codebook: Codebook,
    pub coupling: Coupling,
    pub per_point: Vec<PointSummary>,
    pub site_ids: Vec<String>,
    pub model: BearingModel,
    /// False when `max_outer_iters` was reached first.
    pub converged: bool,
    pub outer_iterations: usize,
    /// `R - s·D` after each Blahut–Arimoto pass of the outer loop.
    pub lagrangian_trace: Vec<f64>,
    /// Number of point optimizations that hit their iteration cap.
    pub optimizer_warnings: usize,
}

impl RdSolution {
    pub fn rate_nats(&self) -> f64 {
        self.coupling.rate_nats
    }

    pub fn mean_distortion(&self) -> f64 {
        self.coupling.mean_distortion
    }

    pub fn slope(&self) -> f64 {
        self.coupling.slope
    }

    /// Circular standard deviation (degrees) matching the mean distortion.
    pub fn sigma_deg(&self) -> Option<f64> {
        variance_to_sigma(self.coupling.mean_distortion).ok()
    }

    pub fn len(&self) -> usize {
        self.codebook.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebook.is_empty()
    }
}

fn point_from_params(x: &[f64]) -> GeoPoint {
    let lat = x[0].clamp(-MAX_SEARCH_LATITUDE, MAX_SEARCH_LATITUDE);
    let lon = if x[1].is_finite() { normalize_longitude(x[1]) } else { 0.0 };
    GeoPoint::new(lat, lon).expect("clamped latitude is valid")
}

fn clamp_point(p: &GeoPoint) -> GeoPoint {
    point_from_params(&[p.lat(), p.lon()])
}

fn check_weights(n: usize, weights: &[f64]) -> Result<(), SearchError> {
    if n == 0 {
        return Err(SearchError::NoSites);
    }
    if weights.len() != n || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0
    {
        return Err(SearchError::InvalidWeights);
    }
    Ok(())
}

/// Local minimizer of `Σ w(x)·versin(o_x - b(x→y))` by downhill simplex from `start`.
///
/// The objective is never worse at the result than at `start` (after `start`'s
/// latitude is clamped to the search limit).
pub fn optimal_point(
    sites: &[Site],
    weights: &[f64],
    model: &BearingModel,
    start: &GeoPoint,
) -> Result<PointFit, SearchError> {
    check_weights(sites.len(), weights)?;
    let kernel = DistortionKernel::new(sites, model);
    Ok(optimize_from(&kernel, weights, start, &NelderMeadConfig::default(), 0.5))
}

/// [`optimal_point`] started from the best of several geometric guesses.
pub fn fit_point(sites: &[Site], weights: &[f64], model: &BearingModel) -> Result<PointFit, SearchError> {
    check_weights(sites.len(), weights)?;
    let kernel = DistortionKernel::new(sites, model);
    let start = initial_guess(&kernel, sites, weights);
    Ok(optimize_from(&kernel, weights, &start, &NelderMeadConfig::default(), 0.5))
}

pub(crate) fn optimize_from(
    kernel: &DistortionKernel,
    weights: &[f64],
    start: &GeoPoint,
    nm: &NelderMeadConfig,
    step_deg: f64,
) -> PointFit {
    let objective = |x: &[f64]| kernel.weighted_distortion(weights, &point_from_params(x));
    let start = clamp_point(start);
    let mut best = nelder_mead::minimize(objective, &[start.lat(), start.lon()], &[step_deg, step_deg], nm);
    let mut iterations = best.iterations;
    for _ in 0..MAX_RESTARTS {
        let again = nelder_mead::minimize(objective, &best.x, &[step_deg, step_deg], nm);
        iterations += again.iterations;
        let improved = again.value < best.value - 1e-15;
        let converged = again.converged;
        if again.value <= best.value {
            best = again;
        }
        best.converged = converged;
        if !improved {
            break;
        }
    }
    PointFit {
        point: point_from_params(&best.x),
        value: best.value,
        iterations,
        converged: best.converged,
    }
}

/// Plane of longitude (radians, unwrapped around `lon0`) and Mercator ordinate.
struct MercatorPlane {
    lon0: f64,
}

impl MercatorPlane {
    fn forward(&self, p: &GeoPoint) -> (f64, f64) {
        let dl = crate::geodesy::signed_difference(self.lon0, p.lon()).to_radians();
        let phi = p.lat().to_radians();
        (dl, (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().ln())
    }

    fn inverse(&self, x: f64, y: f64) -> Option<GeoPoint> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let lat = y.sinh().atan().to_degrees().clamp(-MAX_SEARCH_LATITUDE, MAX_SEARCH_LATITUDE);
        GeoPoint::new(lat, self.lon0 + x.to_degrees()).ok()
    }
}

/// Candidate starting point for the weighted objective: the best of the
/// least-squares intersection of all orientation lines, forward intersections
/// of the heaviest sites' lines, and points along their rays.
pub(crate) fn initial_guess(kernel: &DistortionKernel, sites: &[Site], weights: &[f64]) -> GeoPoint {
    let mut order: Vec<usize> = (0..sites.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let plane = MercatorPlane {
        lon0: sites[order[0]].location.lon(),
    };
    let lines: Vec<((f64, f64), (f64, f64))> = sites
        .iter()
        .map(|s| {
            let o = s.orientation.radians();
            (plane.forward(&s.location), (o.sin(), o.cos()))
        })
        .collect();

    let mut candidates = Vec::new();

    // weighted least squares: Σ w (n·(P - S))² with n the line normal
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &order {
        let ((sx, sy), (ux, uy)) = lines[i];
        let (nx, ny) = (uy, -ux);
        let w = weights[i];
        let proj = nx * sx + ny * sy;
        a11 += w * nx * nx;
        a12 += w * nx * ny;
        a22 += w * ny * ny;
        b1 += w * nx * proj;
        b2 += w * ny * proj;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() > 1e-12 * (a11 + a22).powi(2) {
        if let Some(p) = plane.inverse((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det) {
            candidates.push(p);
        }
    }

    let heavy = &order[..order.len().min(4)];
    for (k, &i) in heavy.iter().enumerate() {
        for &j in &heavy[k + 1..] {
            let ((sx, sy), (ux, uy)) = lines[i];
            let ((tx, ty), (vx, vy)) = lines[j];
            let cross = ux * vy - uy * vx;
            if cross.abs() < 1e-9 {
                continue;
            }
            let (dx, dy) = (tx - sx, ty - sy);
            let t1 = (dx * vy - dy * vx) / cross;
            let t2 = (dx * uy - dy * ux) / cross;
            if t1 > 0.0 && t2 > 0.0 {
                if let Some(p) = plane.inverse(sx + t1 * ux, sy + t1 * uy) {
                    candidates.push(p);
                }
            }
        }
    }
    for &i in heavy.iter().take(3) {
        let ((sx, sy), (ux, uy)) = lines[i];
        for dist_deg in [1.0f64, 5.0, 20.0] {
            let t = dist_deg.to_radians();
            if let Some(p) = plane.inverse(sx + t * ux, sy + t * uy) {
                candidates.push(p);
            }
        }
    }

    candidates
        .into_iter()
        .map(|p| (kernel.weighted_distortion(weights, &p), p))
        .fold(None::<(f64, GeoPoint)>, |best, cand| match best {
            Some(b) if b.0 <= cand.0 => Some(b),
            _ => Some(cand),
        })
        .map(|(_, p)| p)
        .unwrap_or(sites[order[0]].location)
}

fn draw_start(kernel: &DistortionKernel, sites: &[Site], weights: &[f64]) -> GeoPoint {
    let mut order: Vec<usize> = (0..sites.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let top = &order[..order.len().min(2)];
    let sub: Vec<f64> = (0..sites.len()).map(|i| if top.contains(&i) { weights[i] } else { 0.0 }).collect();
    initial_guess(kernel, sites, &sub)
}

fn dirichlet_weights<R: Rng>(rng: &mut R, source: &[f64], alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let raw: Vec<f64> = source.iter().map(|p| p * gamma.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter().map(|w| w / total).collect()
    } else {
        source.to_vec()
    }
}

/// Full adaptive search with no frozen points.
pub fn search(source: &SourceDistribution, model: &BearingModel, config: &SearchConfig) -> Result<RdSolution, SearchError> {
    search_with_frozen(source, model, config, &[])
}

/// Adaptive search in which `frozen_points` are part of every codebook and are
/// never moved, pruned or merged.
pub fn search_with_frozen(
    source: &SourceDistribution,
    model: &BearingModel,
    config: &SearchConfig,
    frozen_points: &[GeoPoint],
) -> Result<RdSolution, SearchError> {
    config.validate()?;
    if source.is_empty() {
        return Err(SearchError::NoSites);
    }
    if config.n_init == 0 && frozen_points.is_empty() {
        return Err(SearchError::InvalidConfig("n_init must be positive".into()));
    }
    for (i, a) in frozen_points.iter().enumerate() {
        if frozen_points[..i].iter().any(|b| a.coincides_with(b)) {
            return Err(SearchError::InvalidConfig("frozen points must be pairwise distinct".into()));
        }
    }

    let sites = source.sites();
    let probs = source.probabilities();
    let kernel = DistortionKernel::new(sites, model);

    let fits: Vec<PointFit> = (0..config.n_init)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(config.seed, DIRICHLET_STREAM, k as u64);
            let w = dirichlet_weights(&mut rng, probs, config.dirichlet_alpha);
            let start = draw_start(&kernel, sites, &w);
            optimize_from(&kernel, &w, &start, &config.nelder_mead, config.simplex_step_deg)
        })
        .collect();
    let warnings = fits.iter().filter(|f| !f.converged).count();

    let mut points: Vec<GeoPoint> = frozen_points.to_vec();
    let mut frozen = vec![true; frozen_points.len()];
    for fit in &fits {
        if !points.iter().any(|p| p.coincides_with(&fit.point)) {
            points.push(fit.point);
            frozen.push(false);
        }
    }
    let mut solution = refine(&kernel, source, model, config, points, frozen)?;
    solution.optimizer_warnings += warnings;
    Ok(solution)
}

/// Runs the outer loop (Blahut–Arimoto, prune, merge, relocate) from a given codebook.
pub fn search_from_codebook(
    source: &SourceDistribution,
    model: &BearingModel,
    config: &SearchConfig,
    codebook: &Codebook,
) -> Result<RdSolution, SearchError> {
    config.validate()?;
    if source.is_empty() {
        return Err(SearchError::NoSites);
    }
    let kernel = DistortionKernel::new(source.sites(), model);
    refine(
        &kernel,
        source,
        model,
        config,
        codebook.points().to_vec(),
        codebook.frozen().to_vec(),
    )
}

fn matrix_for(kernel: &DistortionKernel, points: &[GeoPoint]) -> DistortionMatrix {
    let prepared: Vec<PreparedPoint> = points.iter().map(PreparedPoint::new).collect();
    let rows: Vec<Vec<f64>> = (0..kernel.len())
        .map(|x| prepared.iter().map(|p| kernel.distortion(x, p)).collect())
        .collect();
    DistortionMatrix::from_rows(&rows, *kernel.model())
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Indices (ascending) of the points that survive pruning and merging.
fn survivors(coupling: &Coupling, frozen: &[bool], config: &SearchConfig) -> Vec<usize> {
    let m = frozen.len();
    let mut order: Vec<usize> = (0..m)
        .filter(|&y| frozen[y] || coupling.marginal[y] >= config.prune_weight)
        .collect();
    // frozen first, then heavier first, then lower index first
    order.sort_by(|&a, &b| {
        frozen[b]
            .cmp(&frozen[a])
            .then(coupling.marginal[b].total_cmp(&coupling.marginal[a]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    for y in order {
        let col = coupling.posterior_column(y);
        if frozen[y] || kept.iter().all(|(_, k)| total_variation(k, &col) >= config.merge_distance) {
            kept.push((y, col));
        }
    }
    let mut idx: Vec<usize> = kept.into_iter().map(|(y, _)| y).collect();
    idx.sort_unstable();
    idx
}

fn refine(
    kernel: &DistortionKernel,
    source: &SourceDistribution,
    model: &BearingModel,
    config: &SearchConfig,
    mut points: Vec<GeoPoint>,
    mut frozen: Vec<bool>,
) -> Result<RdSolution, SearchError> {
    if points.is_empty() {
        return Err(SearchError::EmptyCodebook);
    }
    let probs = source.probabilities();
    let inner_tol = config.outer_tol / 10.0;
    let mut trace: Vec<f64> = Vec::new();
    let mut warnings = 0;
    let mut iterations = 0;

    loop {
        let dmat = matrix_for(kernel, &points);
        let (coupling, _) = blahut_arimoto_probs(probs, &dmat, config.slope, inner_tol, None)?;
        let f = coupling.lagrangian();
        let keep = survivors(&coupling, &frozen, config);
        let stable = keep.len() == points.len();
        let settled = trace.last().is_some_and(|prev| (prev - f).abs() < config.outer_tol);
        trace.push(f);

        if (stable && settled) || iterations >= config.max_outer_iters {
            let converged = stable && settled;
            let distortions = coupling.per_point_distortion(&dmat);
            let per_point = (0..points.len())
                .map(|y| PointSummary {
                    point: points[y],
                    frozen: frozen[y],
                    weight: coupling.marginal[y],
                    distortion: distortions[y],
                })
                .collect();
            return Ok(RdSolution {
                codebook: Codebook::from_parts_unchecked(points, frozen),
                coupling,
                per_point,
                site_ids: source.sites().iter().map(|s| s.id.clone()).collect(),
                model: *model,
                converged,
                outer_iterations: iterations,
                lagrangian_trace: trace,
                optimizer_warnings: warnings,
            });
        }
        if keep.is_empty() {
            return Err(SearchError::EmptyCodebook);
        }
        iterations += 1;

        let moved: Vec<(GeoPoint, bool, bool)> = keep
            .par_iter()
            .map(|&y| {
                if frozen[y] {
                    return (points[y], true, true);
                }
                let w: Vec<f64> = probs
                    .iter()
                    .zip(&coupling.conditional)
                    .map(|(p, row)| p * row[y])
                    .collect();
                let fit = optimize_from(kernel, &w, &points[y], &config.nelder_mead, config.simplex_step_deg);
                (fit.point, false, fit.converged)
            })
            .collect();

        points.clear();
        frozen.clear();
        for (p, is_frozen, ok) in moved {
            if !ok {
                warnings += 1;
            }
            // relocation can land two free points on the same spot
            if !is_frozen && points.iter().any(|q| q.coincides_with(&p)) {
                continue;
            }
            points.push(p);
            frozen.push(is_frozen);
        }
    }
}
