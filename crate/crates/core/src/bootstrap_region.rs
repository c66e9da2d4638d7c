//! Bootstrap clouds of optimal reconstruction points and Gaussian confidence
//! ellipses fitted to them.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codebook_search::{
    fit_point, optimize_from, search_from_codebook, search_with_frozen, SearchConfig, SearchError,
};
use crate::dataset::SourceDistribution;
use crate::geodesy::{normalize_longitude, signed_difference, BearingModel, GeoPoint};
use crate::nelder_mead::NelderMeadConfig;
use crate::rd_engine::{Codebook, DistortionKernel};
use crate::seeding::task_rng;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Vertices of the ellipse boundary polyline.
pub const BOUNDARY_VERTICES: usize = 128;
/// Fraction of failed replicates tolerated before giving up.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
const DEGENERATE_EIGENVALUE: f64 = 1e-12;
const BOOTSTRAP_STREAM: u64 = 0x424f_4f54;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BootstrapError {
    #[error("bootstrap needs at least two sites")]
    TooFewSites,
    #[error("n_resamples must be positive")]
    NoResamples,
    #[error("{failed} of {total} resamples failed to converge")]
    TooManyFailures { failed: usize, total: usize },
    #[error("full-data solution has no free reconstruction point")]
    NoFreePoint,
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipseError {
    #[error("need at least 3 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("level must lie in (0, 1)")]
    InvalidLevel,
    #[error("covariance is degenerate (smallest eigenvalue {min_eigenvalue:e})")]
    DegenerateCovariance {
        min_eigenvalue: f64,
        /// The fit anyway; its boundary collapses onto a segment or a point.
        ellipse: Box<ConfidenceEllipse>,
    },
}

/// Multiplicities of a uniform multinomial draw of `n` items out of `n`.
pub fn resample_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut m = vec![0u32; n];
    for _ in 0..n {
        m[rng.random_range(0..n)] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCloud {
    pub replicates: Vec<GeoPoint>,
    pub n_resamples: usize,
    pub seed: u64,
    /// Indices of the resamples whose optimization did not converge.
    pub failures: Vec<usize>,
    /// Optimal point of the full data set (the free point when points are frozen).
    pub full_data_point: GeoPoint,
}

fn replicate_weights(probs: &[f64], seed: u64, index: usize) -> Vec<f64> {
    let mut rng = task_rng(seed, BOOTSTRAP_STREAM, index as u64);
    resample_weights(probs.len(), &mut rng)
        .iter()
        .zip(probs)
        .map(|(&m, p)| m as f64 * p)
        .collect()
}

/// One optimal point per resample.
///
/// Without frozen points every replicate minimizes the multiplicity-weighted
/// mean distortion from the full-data optimum. With frozen points the full
/// search is run once, each replicate re-runs the outer loop from that codebook,
/// and the free point closest to the full-data free point is kept.
pub fn bootstrap_cloud(
    source: &SourceDistribution,
    model: &BearingModel,
    config: &SearchConfig,
    n_resamples: usize,
    seed: u64,
    frozen_points: &[GeoPoint],
) -> Result<BootstrapCloud, BootstrapError> {
    if source.len() < 2 {
        return Err(BootstrapError::TooFewSites);
    }
    if n_resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    let probs = source.probabilities();

    let (full_point, results): (GeoPoint, Vec<Option<GeoPoint>>) = if frozen_points.is_empty() {
        let full = fit_point(source.sites(), probs, model)?;
        let kernel = DistortionKernel::new(source.sites(), model);
        let nm = NelderMeadConfig::default();
        let results = (0..n_resamples)
            .into_par_iter()
            .map(|i| {
                let w = replicate_weights(probs, seed, i);
                let fit = optimize_from(&kernel, &w, &full.point, &nm, config.simplex_step_deg);
                fit.converged.then_some(fit.point)
            })
            .collect();
        (full.point, results)
    } else {
        let full = search_with_frozen(source, model, config, frozen_points)?;
        let (_, free) = full
            .per_point
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.frozen)
            .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(b.0.cmp(&a.0)))
            .ok_or(BootstrapError::NoFreePoint)?;
        let target = free.point;
        let codebook: Codebook = full.codebook.clone();
        let results = (0..n_resamples)
            .into_par_iter()
            .map(|i| {
                let w = replicate_weights(probs, seed, i);
                let re = source.reweighted(&w).ok()?;
                let sol = search_from_codebook(&re, model, config, &codebook).ok()?;
                if !sol.converged {
                    return None;
                }
                sol.per_point
                    .iter()
                    .filter(|s| !s.frozen)
                    .map(|s| s.point)
                    .min_by(|a, b| a.distance_deg(&target).total_cmp(&b.distance_deg(&target)))
            })
            .collect();
        (target, results)
    };

    let failures: Vec<usize> = (0..n_resamples).filter(|&i| results[i].is_none()).collect();
    if failures.len() as f64 > MAX_FAILURE_FRACTION * n_resamples as f64 {
        return Err(BootstrapError::TooManyFailures {
            failed: failures.len(),
            total: n_resamples,
        });
    }
    Ok(BootstrapCloud {
        replicates: results.into_iter().flatten().collect(),
        n_resamples,
        seed,
        failures,
        full_data_point: full_point,
    })
}

/// Gaussian fit in `(lat, lon)` degrees and its equal-probability ellipse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceEllipse {
    /// Mean `(lat, lon)`; longitude may lie outside `(-180, 180]` when the
    /// cloud straddles the antimeridian.
    pub center: [f64; 2],
    /// Sample covariance (divisor `n - 1`), degrees².
    pub covariance: [[f64; 2]; 2],
    pub level: f64,
    /// Chi-square quantile with 2 degrees of freedom at `level`.
    pub quantile: f64,
    /// `(lat, lon)` vertices, same longitude convention as `center`.
    pub boundary: Vec<[f64; 2]>,
}

/// Chi-square quantile with two degrees of freedom.
pub fn chi_square_2_quantile(level: f64) -> f64 {
    -2.0 * (-level).ln_1p()
}

/// Eigenvalues (descending) and unit eigenvectors of a symmetric 2×2 matrix.
fn eigen_symmetric(m: &[[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    let (l1, l2) = (mean + r, mean - r);
    let v1 = if b.abs() > 1e-300 {
        let (x, y) = (l1 - d, b);
        let n = x.hypot(y);
        [x / n, y / n]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    (
        [l1, l2],
        [v1, [-v1[1], v1[0]]],
    )
}

impl ConfidenceEllipse {
    pub fn center_point(&self) -> GeoPoint {
        to_geo(self.center)
    }

    pub fn boundary_points(&self) -> Vec<GeoPoint> {
        self.boundary.iter().map(|&v| to_geo(v)).collect()
    }

    /// `(v - c)ᵀ Σ⁻¹ (v - c)`; infinite for a singular covariance.
    pub fn mahalanobis_sq(&self, v: [f64; 2]) -> f64 {
        let [[a, b], [_, d]] = self.covariance;
        let det = a * d - b * b;
        if !(det > 0.0) {
            return f64::INFINITY;
        }
        let (x, y) = (v[0] - self.center[0], v[1] - self.center[1]);
        (d * x * x - 2.0 * b * x * y + a * y * y) / det
    }

    pub fn contains(&self, v: [f64; 2]) -> bool {
        self.mahalanobis_sq(v) <= self.quantile
    }

    /// Semi-axis lengths (degrees), major first.
    pub fn semi_axes(&self) -> [f64; 2] {
        let (l, _) = eigen_symmetric(&self.covariance);
        [
            (self.quantile * l[0].max(0.0)).sqrt(),
            (self.quantile * l[1].max(0.0)).sqrt(),
        ]
    }
}

fn to_geo(v: [f64; 2]) -> GeoPoint {
    GeoPoint::new(v[0].clamp(-90.0, 90.0), normalize_longitude(v[1])).expect("clamped latitude")
}

/// Fits a Gaussian to planar points and returns its `level` ellipse.
pub fn fit_gaussian_ellipse(points: &[[f64; 2]], level: f64) -> Result<ConfidenceEllipse, EllipseError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EllipseError::InvalidLevel);
    }
    let n = points.len();
    if n < 3 {
        return Err(EllipseError::TooFewReplicates(n));
    }
    let nf = n as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / nf,
        points.iter().map(|p| p[1]).sum::<f64>() / nf,
    ];
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let (x, y) = (p[0] - mean[0], p[1] - mean[1]);
        cov[0][0] += x * x;
        cov[0][1] += x * y;
        cov[1][1] += y * y;
    }
    cov[0][0] /= nf - 1.0;
    cov[0][1] /= nf - 1.0;
    cov[1][1] /= nf - 1.0;
    cov[1][0] = cov[0][1];

    let quantile = chi_square_2_quantile(level);
    let (l, vecs) = eigen_symmetric(&cov);
    let s = [l[0].max(0.0).sqrt(), l[1].max(0.0).sqrt()];
    let boundary = (0..BOUNDARY_VERTICES)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_VERTICES as f64;
            // Σ^{1/2}·u = V·diag(√λ)·Vᵀ·u
            let u = [t.cos(), t.sin()];
            let proj = [
                vecs[0][0] * u[0] + vecs[0][1] * u[1],
                vecs[1][0] * u[0] + vecs[1][1] * u[1],
            ];
            let scaled = [s[0] * proj[0], s[1] * proj[1]];
            let r = quantile.sqrt();
            [
                mean[0] + r * (vecs[0][0] * scaled[0] + vecs[1][0] * scaled[1]),
                mean[1] + r * (vecs[0][1] * scaled[0] + vecs[1][1] * scaled[1]),
            ]
        })
        .collect();
    let ellipse = ConfidenceEllipse {
        center: mean,
        covariance: cov,
        level,
        quantile,
        boundary,
    };
    if l[1] < DEGENERATE_EIGENVALUE {
        return Err(EllipseError::DegenerateCovariance {
            min_eigenvalue: l[1],
            ellipse: Box::new(ellipse),
        });
    }
    Ok(ellipse)
}

/// Ellipse of a bootstrap cloud in `(lat, lon)` degrees. Longitudes are
/// unwrapped around the full-data point first.
pub fn fit_ellipse(cloud: &BootstrapCloud, level: f64) -> Result<ConfidenceEllipse, EllipseError> {
    let ref_lon = cloud.full_data_point.lon();
    let pts: Vec<[f64; 2]> = cloud
        .replicates
        .iter()
        .map(|p| [p.lat(), ref_lon + signed_difference(ref_lon, p.lon())])
        .collect();
    fit_gaussian_ellipse(&pts, level)
}

/// `replicate,latitude,longitude` rows.
pub fn write_cloud_csv<W: std::io::Write>(writer: W, cloud: &BootstrapCloud) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "latitude", "longitude"])?;
    for (i, p) in cloud.replicates.iter().enumerate() {
        w.write_record([i.to_string(), p.lat().to_string(), p.lon().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
