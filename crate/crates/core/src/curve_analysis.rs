//! Slope sweeps of the rate-distortion curve, convexity bounds, model
//! comparison and detection of noise bifurcations.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codebook_search::{search, RdSolution, SearchConfig, SearchError};
use crate::dataset::SourceDistribution;
use crate::geodesy::{BearingModel, GeoPoint};
use crate::rd_engine::{build_distortion_matrix, evaluate_fixed, Codebook};

/// Grid size used to verify `lower <= upper`.
pub const BOUNDS_GRID: usize = 100;
/// Rate grid used by [`compare_curves`].
pub const COMPARE_GRID: usize = 400;
pub const DEFAULT_GEO_DELTA_DEG: f64 = 1.0;
pub const DEFAULT_WEIGHT_CAP: f64 = 0.01;

const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("need at least two curve points with distinct distortions")]
    InsufficientPoints,
    #[error("tangent bound exceeds chord bound at D = {distortion} by {excess:e}")]
    BoundsCrossed { distortion: f64, excess: f64 },
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurvePoint {
    pub slope: f64,
    pub rate_nats: f64,
    pub distortion: f64,
    pub codebook_size: usize,
    pub solution: RdSolution,
}

impl RdCurvePoint {
    pub fn from_solution(solution: RdSolution) -> Self {
        Self {
            slope: solution.slope(),
            rate_nats: solution.rate_nats(),
            distortion: solution.mean_distortion(),
            codebook_size: solution.len(),
            solution,
        }
    }

    /// Intercept `R - s·D` of the supporting line.
    pub fn lagrangian(&self) -> f64 {
        self.rate_nats - self.slope * self.distortion
    }
}

/// Outcome of a slope sweep. Points keep the order of the requested slopes;
/// slopes whose search failed are listed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub points: Vec<RdCurvePoint>,
    pub failures: Vec<(f64, SearchError)>,
}

/// Solves every slope independently with the same configuration (and seed).
pub fn sweep(source: &SourceDistribution, model: &BearingModel, slopes: &[f64], config: &SearchConfig) -> Sweep {
    let results: Vec<(f64, Result<RdSolution, SearchError>)> = slopes
        .par_iter()
        .map(|&s| (s, search(source, model, &config.with_slope(s))))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in results {
        match r {
            Ok(sol) => points.push(RdCurvePoint::from_solution(sol)),
            Err(e) => failures.push((s, e)),
        }
    }
    Sweep { points, failures }
}

/// Slopes `start, start - step, ...` down to and including `end` (within 1e-9).
pub fn slope_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && start >= end, "slope grid runs from start down to end");
    let n = ((start - end) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start - step * k as f64).collect()
}

/// A supporting line `R = intercept + slope·D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tangent {
    pub slope: f64,
    pub intercept: f64,
}

impl Tangent {
    pub fn rate_at(&self, d: f64) -> f64 {
        self.intercept + self.slope * d
    }
}

/// Lower and upper envelopes of the rate-distortion function built from
/// achieved points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBounds {
    pub tangents: Vec<Tangent>,
    /// Achieved `(D, R)` sorted by distortion; the chord bound interpolates them.
    pub achieved: Vec<(f64, f64)>,
    /// Vertices of the tangent envelope over the achieved distortion range.
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
}

/// Tangent lower bound and chord upper bound.
///
/// Each slope contributes the line with that slope through the lowest achieved
/// intercept `min_j R_j - s·D_j`. For a solution that reached the optimum at
/// its slope this is its own supporting line; otherwise the line is lowered
/// until it passes under every achieved point, which keeps it below the chords.
pub fn bounds(points: &[RdCurvePoint]) -> Result<CurveBounds, CurveError> {
    let raw: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.slope, p.distortion, p.rate_nats)).collect();
    bounds_from(&raw)
}

/// [`bounds`] on bare `(slope, D, R)` triples.
pub fn bounds_from(points: &[(f64, f64, f64)]) -> Result<CurveBounds, CurveError> {
    let mut achieved: Vec<(f64, f64)> = points.iter().map(|&(_, d, r)| (d, r)).collect();
    achieved.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // equal distortions keep the lowest rate
    achieved.dedup_by(|b, a| (a.0 - b.0).abs() <= BOUND_SLACK);
    if achieved.len() < 2 {
        return Err(CurveError::InsufficientPoints);
    }

    let mut slopes: Vec<f64> = points.iter().map(|p| p.0).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    slopes.dedup();
    let tangents: Vec<Tangent> = slopes
        .iter()
        .map(|&s| Tangent {
            slope: s,
            intercept: achieved.iter().map(|&(d, r)| r - s * d).fold(f64::INFINITY, f64::min),
        })
        .collect();

    let (d0, d1) = (achieved[0].0, achieved[achieved.len() - 1].0);
    let mut breaks = vec![d0, d1];
    for (i, a) in tangents.iter().enumerate() {
        for b in &tangents[i + 1..] {
            if a.slope != b.slope {
                let d = (b.intercept - a.intercept) / (a.slope - b.slope);
                if d > d0 && d < d1 {
                    breaks.push(d);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let envelope = |d: f64| tangents.iter().map(|t| t.rate_at(d)).fold(f64::NEG_INFINITY, f64::max);
    let lower = breaks.iter().map(|&d| (d, envelope(d))).collect();

    let out = CurveBounds {
        tangents,
        upper: achieved.clone(),
        achieved,
        lower,
    };
    out.check_grid(BOUNDS_GRID)?;
    Ok(out)
}

fn interpolate(vertices: &[(f64, f64)], x: f64) -> f64 {
    let n = vertices.len();
    if x <= vertices[0].0 {
        return vertices[0].1;
    }
    if x >= vertices[n - 1].0 {
        return vertices[n - 1].1;
    }
    let k = vertices.partition_point(|v| v.0 <= x).max(1);
    let (a, b) = (vertices[k - 1], vertices[k]);
    if b.0 == a.0 {
        return a.1.min(b.1);
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

impl CurveBounds {
    /// Distortion range covered by the achieved points.
    pub fn domain(&self) -> (f64, f64) {
        (self.achieved[0].0, self.achieved[self.achieved.len() - 1].0)
    }

    pub fn lower_at(&self, d: f64) -> f64 {
        self.tangents.iter().map(|t| t.rate_at(d)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn upper_at(&self, d: f64) -> f64 {
        interpolate(&self.upper, d)
    }

    /// Checks `lower <= upper` at `n` evenly spaced distortions.
    pub fn check_grid(&self, n: usize) -> Result<(), CurveError> {
        let (d0, d1) = self.domain();
        for k in 0..n {
            let d = d0 + (d1 - d0) * k as f64 / (n - 1).max(1) as f64;
            let excess = self.lower_at(d) - self.upper_at(d);
            if excess > BOUND_SLACK * (1.0 + self.upper_at(d).abs()) {
                return Err(CurveError::BoundsCrossed { distortion: d, excess });
            }
        }
        Ok(())
    }

    /// Smallest distortion reachable at rate `r` allowed by the tangents.
    pub fn lower_distortion_at_rate(&self, r: f64) -> f64 {
        self.tangents
            .iter()
            .filter(|t| t.slope < 0.0)
            .map(|t| (r - t.intercept) / t.slope)
            .fold(0.0, f64::max)
    }

    /// Distortion achieved at rate `r` by time-sharing between achieved points.
    pub fn upper_distortion_at_rate(&self, r: f64) -> f64 {
        let mut by_rate: Vec<(f64, f64)> = self.achieved.iter().map(|&(d, r)| (r, d)).collect();
        by_rate.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        by_rate.dedup_by(|b, a| a.0 == b.0);
        interpolate(&by_rate, r)
    }

    pub fn rate_domain(&self) -> (f64, f64) {
        let rates = self.achieved.iter().map(|p| p.1);
        (rates.clone().fold(f64::INFINITY, f64::min), rates.fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Distortion-versus-rate envelopes of one model.
#[derive(Debug, Clone, PartialEq)]
pub enum RateView {
    Bounds(CurveBounds),
    /// A model whose bearing ignores the reconstruction point: every rate
    /// yields the same distortion.
    Flat { distortion: f64 },
}

impl RateView {
    pub fn lower_distortion(&self, r: f64) -> f64 {
        match self {
            RateView::Bounds(b) => b.lower_distortion_at_rate(r),
            RateView::Flat { distortion } => *distortion,
        }
    }

    pub fn upper_distortion(&self, r: f64) -> f64 {
        match self {
            RateView::Bounds(b) => b.upper_distortion_at_rate(r),
            RateView::Flat { distortion } => *distortion,
        }
    }

    fn rate_domain(&self) -> (f64, f64) {
        match self {
            RateView::Bounds(b) => b.rate_domain(),
            RateView::Flat { .. } => (0.0, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    A,
    B,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub model_a: String,
    pub model_b: String,
    /// Rate intervals (nats) where A's upper bound lies below B's lower bound.
    pub a_better: Vec<(f64, f64)>,
    pub b_better: Vec<(f64, f64)>,
    pub inconclusive: Vec<(f64, f64)>,
    pub verdict: Verdict,
}

fn runs(grid: &[f64], flags: &[u8], want: u8) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f == want, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((grid[s], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[grid.len() - 1]));
    }
    out
}

/// Compares two models on a common rate grid. A model is provably better at a
/// rate when its achievable distortion is below the other model's lower bound.
pub fn compare_curves(model_a: &BearingModel, a: &RateView, model_b: &BearingModel, b: &RateView) -> ModelComparison {
    let (a0, a1) = a.rate_domain();
    let (b0, b1) = b.rate_domain();
    let lo = a0.max(b0);
    let mut hi = a1.min(b1);
    if !hi.is_finite() {
        hi = lo;
    }
    let grid: Vec<f64> = if hi > lo {
        (0..COMPARE_GRID)
            .map(|k| lo + (hi - lo) * k as f64 / (COMPARE_GRID - 1) as f64)
            .collect()
    } else {
        vec![lo]
    };
    let flags: Vec<u8> = grid
        .iter()
        .map(|&r| {
            let margin = BOUND_SLACK * (1.0 + r.abs());
            if a.upper_distortion(r) < b.lower_distortion(r) - margin {
                0
            } else if b.upper_distortion(r) < a.lower_distortion(r) - margin {
                1
            } else {
                2
            }
        })
        .collect();
    let length = |iv: &[(f64, f64)]| iv.iter().map(|(x, y)| y - x).sum::<f64>();
    let a_better = runs(&grid, &flags, 0);
    let b_better = runs(&grid, &flags, 1);
    let count = |f: u8| flags.iter().filter(|&&x| x == f).count();
    let verdict = match (length(&a_better), length(&b_better)) {
        (la, lb) if la > lb => Verdict::A,
        (la, lb) if lb > la => Verdict::B,
        // single-point grids or equal spans fall back on grid counts
        _ if count(0) > count(1) => Verdict::A,
        _ if count(1) > count(0) => Verdict::B,
        _ => Verdict::Inconclusive,
    };
    ModelComparison {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        a_better,
        b_better,
        inconclusive: runs(&grid, &flags, 2),
        verdict,
    }
}

/// Rate view of a model over a sweep.
pub fn rate_view(source: &SourceDistribution, model: &BearingModel, points: &[RdCurvePoint]) -> Result<RateView, CurveError> {
    if model.is_fixed() {
        let anchor = source.sites()[0].location;
        let codebook = Codebook::new(vec![anchor]).map_err(SearchError::from)?;
        let dmat = build_distortion_matrix(source.sites(), &codebook, model);
        return Ok(RateView::Flat {
            distortion: evaluate_fixed(source, &dmat).mean_distortion,
        });
    }
    Ok(RateView::Bounds(bounds(points)?))
}

/// Sweeps both models and compares their bounds.
pub fn compare_models(
    source: &SourceDistribution,
    model_a: &BearingModel,
    model_b: &BearingModel,
    slopes: &[f64],
    config: &SearchConfig,
) -> Result<(ModelComparison, Sweep, Sweep), CurveError> {
    let sweep_a = sweep(source, model_a, slopes, config);
    let sweep_b = sweep(source, model_b, slopes, config);
    let view_a = rate_view(source, model_a, &sweep_a.points)?;
    let view_b = rate_view(source, model_b, &sweep_b.points)?;
    Ok((compare_curves(model_a, &view_a, model_b, &view_b), sweep_a, sweep_b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationEntry {
    pub slope: f64,
    pub codebook_size: usize,
    /// Smallest great-circle distance between two points (degrees).
    pub min_separation_deg: Option<f64>,
    pub min_weight: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationReport {
    pub entries: Vec<BifurcationEntry>,
    pub flagged_slopes: Vec<f64>,
    pub geo_delta_deg: f64,
    pub weight_cap: f64,
}

/// Indices of `current` not paired with any `previous` point, pairing greedily
/// by increasing distance.
fn unmatched(previous: &[GeoPoint], current: &[GeoPoint]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = previous
        .iter()
        .enumerate()
        .flat_map(|(i, p)| current.iter().enumerate().map(move |(j, c)| (p.distance_deg(c), i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_prev = vec![false; previous.len()];
    let mut used_cur = vec![false; current.len()];
    for (_, i, j) in pairs {
        if !used_prev[i] && !used_cur[j] {
            used_prev[i] = true;
            used_cur[j] = true;
        }
    }
    (0..current.len()).filter(|&j| !used_cur[j]).collect()
}

/// Flags slopes where the codebook grows only by points that sit within
/// `geo_delta_deg` of a surviving point, at least one of them lighter than
/// `weight_cap`. Points are visited from the mildest slope down.
pub fn scan_points(points: &[RdCurvePoint], geo_delta_deg: f64, weight_cap: f64) -> BifurcationReport {
    let mut order: Vec<&RdCurvePoint> = points.iter().collect();
    order.sort_by(|a, b| b.slope.total_cmp(&a.slope));
    let mut entries = Vec::with_capacity(order.len());
    for (k, p) in order.iter().enumerate() {
        let summary = &p.solution.per_point;
        let locs: Vec<GeoPoint> = summary.iter().map(|s| s.point).collect();
        let mut min_sep: Option<f64> = None;
        for (i, a) in locs.iter().enumerate() {
            for b in &locs[i + 1..] {
                let d = a.distance_deg(b);
                min_sep = Some(min_sep.map_or(d, |m| m.min(d)));
            }
        }
        let mut flagged = false;
        if k > 0 && p.codebook_size > order[k - 1].codebook_size {
            let prev: Vec<GeoPoint> = order[k - 1].solution.per_point.iter().map(|s| s.point).collect();
            let new = unmatched(&prev, &locs);
            let survivors: Vec<usize> = (0..locs.len()).filter(|j| !new.contains(j)).collect();
            let near = new.iter().all(|&j| {
                survivors
                    .iter()
                    .any(|&i| locs[i].distance_deg(&locs[j]) <= geo_delta_deg)
            });
            let light = new.iter().any(|&j| summary[j].weight < weight_cap);
            flagged = near && light;
        }
        entries.push(BifurcationEntry {
            slope: p.slope,
            codebook_size: p.codebook_size,
            min_separation_deg: min_sep,
            min_weight: summary.iter().map(|s| s.weight).fold(f64::INFINITY, f64::min),
            flagged,
        });
    }
    BifurcationReport {
        flagged_slopes: entries.iter().filter(|e| e.flagged).map(|e| e.slope).collect(),
        entries,
        geo_delta_deg,
        weight_cap,
    }
}

pub fn bifurcation_scan(
    source: &SourceDistribution,
    model: &BearingModel,
    slopes: &[f64],
    config: &SearchConfig,
    geo_delta_deg: f64,
    weight_cap: f64,
) -> (BifurcationReport, Sweep) {
    let sw = sweep(source, model, slopes, config);
    (scan_points(&sw.points, geo_delta_deg, weight_cap), sw)
}

/// Writes `slope,rate_nats,distortion,codebook_size` rows.
pub fn write_curve_csv<W: Write>(writer: W, points: &[RdCurvePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["slope", "rate_nats", "distortion", "codebook_size"])?;
    for p in points {
        w.write_record([
            p.slope.to_string(),
            p.rate_nats.to_string(),
            p.distortion.to_string(),
            p.codebook_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
