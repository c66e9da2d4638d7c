//! Blahut–Arimoto for a finite codebook, parametrized by the slope `s` of the
//! rate-distortion curve.
//!
//! For a fixed slope the solver alternates
//!
//! ```text
//! q(y|x) ∝ q(y)·exp(s·d(x,y))
//! q(y)   = Σ_x p(x)·q(y|x)
//! ```
//!
//! from a uniform marginal, which monotonically decreases the Lagrangian
//! `F = R - s·D`. Rates are in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::versin_deg;
use crate::dataset::{Site, SourceDistribution};
use crate::geodesy::{BearingModel, GeoPoint};

/// Distortion assigned where the bearing is undefined (site on top of a point).
pub const DEGENERATE_DISTORTION: f64 = 2.0;

/// Default inner tolerance on the decrease of `F` between sweeps.
pub const DEFAULT_BA_TOL: f64 = 1e-9;

const MAX_BA_SWEEPS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),
    #[error("slope {0} must be finite and <= 0")]
    InvalidSlope(f64),
    #[error("tolerance {0} must be positive")]
    InvalidTolerance(f64),
    #[error("distortion matrix is {rows}x{cols} but source has {sources} sites")]
    ShapeMismatch { rows: usize, cols: usize, sources: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("codebook points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
}

/// Ordered reconstruction points, some of which may be frozen in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    points: Vec<GeoPoint>,
    frozen: Vec<bool>,
}

impl Codebook {
    /// All points free.
    pub fn new(points: Vec<GeoPoint>) -> Result<Self, EngineError> {
        let n = points.len();
        Self::with_frozen(points, vec![false; n])
    }

    pub fn with_frozen(points: Vec<GeoPoint>, frozen: Vec<bool>) -> Result<Self, EngineError> {
        assert_eq!(points.len(), frozen.len(), "one frozen flag per point");
        if points.is_empty() {
            return Err(EngineError::EmptyCodebook);
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i].coincides_with(&points[j]) {
                    return Err(EngineError::DuplicatePoint(j, i));
                }
            }
        }
        Ok(Self { points, frozen })
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn from_parts_unchecked(points: Vec<GeoPoint>, frozen: Vec<bool>) -> Self {
        Self { points, frozen }
    }
}

/// Distortion of a site relative to a candidate point.
pub fn site_distortion(site: &Site, point: &GeoPoint, model: &BearingModel) -> f64 {
    match model.bearing(&site.location, point) {
        Ok(b) => versin_deg(site.orientation.degrees() - b),
        Err(_) => DEGENERATE_DISTORTION,
    }
}

/// Row-major `n_sites × n_points` table of versine distortions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    model: BearingModel,
}

impl DistortionMatrix {
    /// Builds a matrix from raw entries; used for abstract instances.
    pub fn from_rows(rows: &[Vec<f64>], model: BearingModel) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged distortion rows");
        Self {
            rows: rows.len(),
            cols,
            entries: rows.iter().flatten().copied().collect(),
            model,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn model(&self) -> &BearingModel {
        &self.model
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.cols + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.cols..(x + 1) * self.cols]
    }
}

pub fn build_distortion_matrix(sites: &[Site], codebook: &Codebook, model: &BearingModel) -> DistortionMatrix {
    let kernel = DistortionKernel::new(sites, model);
    let prepared: Vec<PreparedPoint> = codebook.points().iter().map(PreparedPoint::new).collect();
    let cols = prepared.len();
    let mut entries = Vec::with_capacity(sites.len() * cols);
    for x in 0..sites.len() {
        entries.extend(prepared.iter().map(|p| kernel.distortion(x, p)));
    }
    DistortionMatrix {
        rows: sites.len(),
        cols,
        entries,
        model: *model,
    }
}

/// Trigonometry of a candidate point, computed once per evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PreparedPoint {
    point: GeoPoint,
    sin_phi: f64,
    cos_phi: f64,
    sin_lam: f64,
    cos_lam: f64,
    psi: f64,
}

impl PreparedPoint {
    pub fn new(point: &GeoPoint) -> Self {
        let phi = point.lat().to_radians();
        let lam = point.lon().to_radians();
        Self {
            point: *point,
            sin_phi: phi.sin(),
            cos_phi: phi.cos(),
            sin_lam: lam.sin(),
            cos_lam: lam.cos(),
            psi: mercator(phi),
        }
    }

    pub fn point(&self) -> &GeoPoint {
        &self.point
    }
}

fn mercator(phi: f64) -> f64 {
    (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().ln()
}

#[derive(Debug, Clone)]
struct PreparedSite {
    site: Site,
    anchor: PreparedPoint,
    cos_o: f64,
    sin_o: f64,
}

/// Site-side precomputation for evaluating distortions against many points.
///
/// `1 - cos(o - b)` is obtained from the bearing's direction components without
/// calling `atan2`; near-degenerate geometry falls back to [`site_distortion`].
#[derive(Debug, Clone)]
pub struct DistortionKernel {
    sites: Vec<PreparedSite>,
    model: BearingModel,
}

impl DistortionKernel {
    pub fn new(sites: &[Site], model: &BearingModel) -> Self {
        let sites = sites
            .iter()
            .map(|s| {
                let o = s.orientation.radians();
                PreparedSite {
                    site: s.clone(),
                    anchor: PreparedPoint::new(&s.location),
                    cos_o: o.cos(),
                    sin_o: o.sin(),
                }
            })
            .collect();
        Self { sites, model: *model }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn model(&self) -> &BearingModel {
        &self.model
    }

    #[inline]
    pub fn distortion(&self, x: usize, p: &PreparedPoint) -> f64 {
        let s = &self.sites[x];
        let a = &s.anchor;
        // (north, east) components of the bearing direction
        let (north, east) = match self.model {
            BearingModel::GreatCircle => {
                let sin_dl = p.sin_lam * a.cos_lam - p.cos_lam * a.sin_lam;
                let cos_dl = p.cos_lam * a.cos_lam + p.sin_lam * a.sin_lam;
                (
                    a.cos_phi * p.sin_phi - a.sin_phi * p.cos_phi * cos_dl,
                    sin_dl * p.cos_phi,
                )
            }
            BearingModel::RhumbLine => {
                if a.point.lat().abs() >= 90.0 || p.point.lat().abs() >= 90.0 {
                    return DEGENERATE_DISTORTION;
                }
                let dl = crate::geodesy::signed_difference(a.point.lon(), p.point.lon()).to_radians();
                (p.psi - a.psi, dl)
            }
            BearingModel::Bisector { .. } => return site_distortion(&s.site, &p.point, &self.model),
        };
        let h = north.hypot(east);
        if h < 1e-7 {
            return site_distortion(&s.site, &p.point, &self.model);
        }
        (1.0 - (s.cos_o * north + s.sin_o * east) / h).clamp(0.0, 2.0)
    }

    /// `Σ_x w(x)·d(x, p)`, skipping zero weights.
    pub fn weighted_distortion(&self, weights: &[f64], point: &GeoPoint) -> f64 {
        let p = PreparedPoint::new(point);
        weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| w * self.distortion(x, &p))
            .sum()
    }
}

/// Joint distribution between sites and reconstruction points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// `q(y|x)`, one row per site.
    pub conditional: Vec<Vec<f64>>,
    /// `q(y)`.
    pub marginal: Vec<f64>,
    /// `p(x)`.
    pub source: Vec<f64>,
    pub rate_nats: f64,
    pub mean_distortion: f64,
    pub slope: f64,
    pub sweeps: usize,
}

impl Coupling {
    /// `F = R - s·D`.
    pub fn lagrangian(&self) -> f64 {
        self.rate_nats - self.slope * self.mean_distortion
    }

    /// `p(x|y)` for point `y`. Zero column when `q(y) = 0`.
    pub fn posterior_column(&self, y: usize) -> Vec<f64> {
        let qy = self.marginal[y];
        self.source
            .iter()
            .zip(&self.conditional)
            .map(|(px, row)| if qy > 0.0 { px * row[y] / qy } else { 0.0 })
            .collect()
    }

    /// Conditional mean distortion of each point, `Σ_x p(x) q(y|x) d(x,y) / q(y)`.
    pub fn per_point_distortion(&self, dmat: &DistortionMatrix) -> Vec<f64> {
        let m = self.marginal.len();
        let mut acc = vec![0.0; m];
        for (x, (px, row)) in self.source.iter().zip(&self.conditional).enumerate() {
            for y in 0..m {
                acc[y] += px * row[y] * dmat.get(x, y);
            }
        }
        acc.iter()
            .zip(&self.marginal)
            .map(|(a, q)| if *q > 0.0 { (a / q).clamp(0.0, 2.0) } else { 0.0 })
            .collect()
    }
}

fn check_inputs(source: &[f64], dmat: &DistortionMatrix, slope: f64) -> Result<(), EngineError> {
    if !slope.is_finite() || slope > 0.0 {
        return Err(EngineError::InvalidSlope(slope));
    }
    if dmat.rows() != source.len() {
        return Err(EngineError::ShapeMismatch {
            rows: dmat.rows(),
            cols: dmat.cols(),
            sources: source.len(),
        });
    }
    if dmat.cols() == 0 {
        return Err(EngineError::EmptyCodebook);
    }
    Ok(())
}

/// Rate and mean distortion of a conditional table, with the marginal it induces.
pub fn rate_and_distortion(source: &[f64], conditional: &[Vec<f64>], dmat: &DistortionMatrix) -> (Vec<f64>, f64, f64) {
    let m = dmat.cols();
    let mut marginal = vec![0.0; m];
    for (px, row) in source.iter().zip(conditional) {
        for (q, c) in marginal.iter_mut().zip(row) {
            *q += px * c;
        }
    }
    let mut rate = 0.0;
    let mut distortion = 0.0;
    for (x, (px, row)) in source.iter().zip(conditional).enumerate() {
        if *px == 0.0 {
            continue;
        }
        for y in 0..m {
            let c = row[y];
            if c > 0.0 {
                rate += px * c * (c / marginal[y]).ln();
                distortion += px * c * dmat.get(x, y);
            }
        }
    }
    (marginal, rate.max(0.0), distortion)
}

/// Runs Blahut–Arimoto until `F` decreases by less than `tol` in one sweep.
pub fn blahut_arimoto(
    source: &SourceDistribution,
    dmat: &DistortionMatrix,
    slope: f64,
    tol: f64,
) -> Result<Coupling, EngineError> {
    blahut_arimoto_probs(source.probabilities(), dmat, slope, tol, None).map(|(c, _)| c)
}

/// Like [`blahut_arimoto`], also returning `F` after every sweep.
pub fn blahut_arimoto_traced(
    source: &[f64],
    dmat: &DistortionMatrix,
    slope: f64,
    tol: f64,
) -> Result<(Coupling, Vec<f64>), EngineError> {
    let mut trace = Vec::new();
    let (c, _) = blahut_arimoto_probs(source, dmat, slope, tol, Some(&mut trace))?;
    Ok((c, trace))
}

pub(crate) fn blahut_arimoto_probs(
    source: &[f64],
    dmat: &DistortionMatrix,
    slope: f64,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<(Coupling, bool), EngineError> {
    check_inputs(source, dmat, slope)?;
    if !(tol > 0.0) {
        return Err(EngineError::InvalidTolerance(tol));
    }
    let n = dmat.rows();
    let m = dmat.cols();

    if slope == 0.0 {
        // s → 0⁻ limit: all mass on the point with least average distortion
        let best = (0..m)
            .map(|y| (y, (0..n).map(|x| source[x] * dmat.get(x, y)).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, (y, d)| if d < acc.1 { (y, d) } else { acc })
            .0;
        let conditional: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|y| if y == best { 1.0 } else { 0.0 }).collect())
            .collect();
        let (marginal, rate, distortion) = rate_and_distortion(source, &conditional, dmat);
        if let Some(t) = trace.as_deref_mut() {
            t.push(rate);
        }
        return Ok((
            Coupling {
                conditional,
                marginal,
                source: source.to_vec(),
                rate_nats: rate,
                mean_distortion: distortion,
                slope,
                sweeps: 0,
            },
            true,
        ));
    }

    let mut marginal = vec![1.0 / m as f64; m];
    let mut conditional = vec![vec![0.0; m]; n];
    let mut logits = vec![0.0; m];
    let mut previous = f64::INFINITY;
    let mut rate = 0.0;
    let mut distortion = 0.0;
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < MAX_BA_SWEEPS {
        sweeps += 1;
        for (x, row) in conditional.iter_mut().enumerate() {
            let d = dmat.row(x);
            let mut shift = f64::NEG_INFINITY;
            for y in 0..m {
                logits[y] = if marginal[y] > 0.0 {
                    marginal[y].ln() + slope * d[y]
                } else {
                    f64::NEG_INFINITY
                };
                shift = shift.max(logits[y]);
            }
            let mut z = 0.0;
            for y in 0..m {
                row[y] = (logits[y] - shift).exp();
                z += row[y];
            }
            if !(z > 0.0) || !z.is_finite() {
                return Err(EngineError::NonFiniteValue("conditional normalization"));
            }
            for c in row.iter_mut() {
                *c /= z;
            }
        }
        let (m2, r, dist) = rate_and_distortion(source, &conditional, dmat);
        marginal = m2;
        rate = r;
        distortion = dist;
        let f = rate - slope * distortion;
        if !f.is_finite() {
            return Err(EngineError::NonFiniteValue("lagrangian"));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
        if previous - f < tol {
            converged = true;
            break;
        }
        previous = f;
    }

    Ok((
        Coupling {
            conditional,
            marginal,
            source: source.to_vec(),
            rate_nats: rate,
            mean_distortion: distortion,
            slope,
            sweeps,
        },
        converged,
    ))
}

/// Nearest-point evaluation of a codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardAssignment {
    /// Index of the chosen point for every site.
    pub assignment: Vec<usize>,
    /// Summed source probability per point.
    pub weights: Vec<f64>,
    /// Mean distortion of the sites assigned to each point (0 for empty points).
    pub per_point_distortion: Vec<f64>,
    pub mean_distortion: f64,
    /// Entropy of `weights`, the rate of the deterministic coupling.
    pub rate_nats: f64,
}

/// Assigns every site to its minimum-distortion point; ties go to the lower index.
pub fn evaluate_fixed(source: &SourceDistribution, dmat: &DistortionMatrix) -> HardAssignment {
    evaluate_fixed_probs(source.probabilities(), dmat)
}

pub fn evaluate_fixed_probs(source: &[f64], dmat: &DistortionMatrix) -> HardAssignment {
    let m = dmat.cols();
    let mut weights = vec![0.0; m];
    let mut sums = vec![0.0; m];
    let assignment: Vec<usize> = (0..dmat.rows())
        .map(|x| {
            let row = dmat.row(x);
            let mut best = 0;
            for y in 1..m {
                if row[y] < row[best] {
                    best = y;
                }
            }
            weights[best] += source[x];
            sums[best] += source[x] * row[best];
            best
        })
        .collect();
    let mean_distortion = sums.iter().sum();
    let per_point_distortion = sums
        .iter()
        .zip(&weights)
        .map(|(s, w)| if *w > 0.0 { s / w } else { 0.0 })
        .collect();
    let rate_nats = -weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>();
    HardAssignment {
        assignment,
        weights,
        per_point_distortion,
        mean_distortion,
        rate_nats: rate_nats.max(0.0),
    }
}
