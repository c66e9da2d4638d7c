//! Output documents and the end-of-run writer.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rdgeo::bootstrap_region::ConfidenceEllipse;
use rdgeo::curve_analysis::{BifurcationReport, CurveBounds, ModelComparison, Sweep, Verdict};
use rdgeo::diagnostics::{ClassificationTable, OutlierReport};
use rdgeo::{BearingModel, GeoPoint, RdSolution};
use serde::Serialize;
use serde_json::{json, Value};

/// Files produced by a run, written together once the run has finished.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointDoc {
    pub label: String,
    pub latitude: f64,
    pub longitude: f64,
    pub weight: f64,
    pub distortion: f64,
    pub frozen: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionDoc {
    pub model: BearingModel,
    pub slope: f64,
    pub seed: u64,
    pub n_sites: usize,
    pub rate_nats: f64,
    pub mean_distortion: f64,
    pub sigma_deg: Option<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub optimizer_warnings: usize,
    pub points: Vec<PointDoc>,
}

/// A solution with its points in presentation order: frozen points first in
/// the order given, then free points by decreasing weight.
#[derive(Debug, Clone)]
pub struct LabelledSolution<'a> {
    pub solution: &'a RdSolution,
    /// Indices into the solution's codebook.
    pub order: Vec<usize>,
    pub labels: Vec<String>,
}

impl<'a> LabelledSolution<'a> {
    pub fn new(solution: &'a RdSolution, frozen_labels: &[Option<String>]) -> Self {
        let pts = &solution.per_point;
        let mut frozen: Vec<usize> = (0..pts.len()).filter(|&j| pts[j].frozen).collect();
        let mut free: Vec<usize> = (0..pts.len()).filter(|&j| !pts[j].frozen).collect();
        frozen.sort_unstable();
        free.sort_by(|&a, &b| {
            pts[b]
                .weight
                .total_cmp(&pts[a].weight)
                .then(pts[a].point.lat().total_cmp(&pts[b].point.lat()))
                .then(pts[a].point.lon().total_cmp(&pts[b].point.lon()))
        });
        let mut labels = Vec::with_capacity(pts.len());
        for (i, _) in frozen.iter().enumerate() {
            labels.push(
                frozen_labels
                    .get(i)
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| format!("f{}", i + 1)),
            );
        }
        for k in 0..free.len() {
            labels.push(format!("y{}", k + 1));
        }
        frozen.extend(free);
        Self {
            solution,
            order: frozen,
            labels,
        }
    }

    pub fn points(&self) -> Vec<PointDoc> {
        self.order
            .iter()
            .zip(&self.labels)
            .map(|(&j, label)| {
                let s = &self.solution.per_point[j];
                PointDoc {
                    label: label.clone(),
                    latitude: s.point.lat(),
                    longitude: s.point.lon(),
                    weight: s.weight,
                    distortion: s.distortion,
                    frozen: s.frozen,
                }
            })
            .collect()
    }

    pub fn document(&self, seed: u64) -> SolutionDoc {
        let s = self.solution;
        SolutionDoc {
            model: s.model,
            slope: s.slope(),
            seed,
            n_sites: s.site_ids.len(),
            rate_nats: s.rate_nats(),
            mean_distortion: s.mean_distortion(),
            sigma_deg: s.sigma_deg(),
            converged: s.converged,
            outer_iterations: s.outer_iterations,
            optimizer_warnings: s.optimizer_warnings,
            points: self.points(),
        }
    }

    pub fn classification(&self) -> ClassificationTable {
        ClassificationTable {
            labels: self.labels.clone(),
            site_ids: self.solution.site_ids.clone(),
            rows: self
                .solution
                .coupling
                .conditional
                .iter()
                .map(|row| self.order.iter().map(|&j| 100.0 * row[j]).collect())
                .collect(),
        }
    }

    /// The outlier report with point indices replaced by labels.
    pub fn outliers(&self, report: &OutlierReport) -> Value {
        let label_of = |j: usize| {
            let pos = self.order.iter().position(|&o| o == j).expect("codebook index");
            self.labels[pos].clone()
        };
        let mut points: Vec<(usize, Value)> = report
            .points
            .iter()
            .map(|p| {
                let pos = self.order.iter().position(|&o| o == p.point).expect("codebook index");
                (
                    pos,
                    json!({
                        "label": label_of(p.point),
                        "top_sites": p.top_sites,
                        "support_mass": p.support_mass,
                        "flagged": p.flagged,
                    }),
                )
            })
            .collect();
        points.sort_by_key(|(pos, _)| *pos);
        let mut flagged: Vec<(usize, String)> = report
            .flagged
            .iter()
            .map(|&j| (self.order.iter().position(|&o| o == j).expect("codebook index"), label_of(j)))
            .collect();
        flagged.sort();
        json!({
            "support_threshold": report.support_threshold,
            "max_support_count": report.max_support_count,
            "points": points.into_iter().map(|(_, v)| v).collect::<Vec<_>>(),
            "flagged": flagged.into_iter().map(|(_, l)| l).collect::<Vec<_>>(),
        })
    }

    /// Plain-text summary table of the reconstruction points.
    pub fn summary_text(&self) -> String {
        let s = self.solution;
        let mut out = format!(
            "model {}  slope {}  rate {:.4} nats  mean distortion {:.6}  sigma {}\n",
            s.model,
            s.slope(),
            s.rate_nats(),
            s.mean_distortion(),
            s.sigma_deg().map_or("n/a".to_string(), |v| format!("{v:.2} deg")),
        );
        let w = self.labels.iter().map(|l| l.chars().count()).chain([5]).max().unwrap_or(5);
        out.push_str(&format!(
            "{:<w$}  {:>9}  {:>10}  {:>8}  {:>10}  {:>7}\n",
            "Point", "Lat", "Lon", "Weight%", "Distortion", "Sigma"
        ));
        for p in self.points() {
            let sigma = rdgeo::variance_to_sigma(p.distortion).map_or("n/a".to_string(), |v| format!("{v:.2}"));
            out.push_str(&format!(
                "{:<w$}  {:>9.4}  {:>10.4}  {:>8.2}  {:>10.6}  {:>7}{}\n",
                p.label,
                p.latitude,
                p.longitude,
                100.0 * p.weight,
                p.distortion,
                sigma,
                if p.frozen { "  (fixed)" } else { "" }
            ));
        }
        out
    }
}

/// GeoJSON position, longitude first.
pub fn position(p: &GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

pub fn points_geojson(points: &[PointDoc]) -> Value {
    let features: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.longitude, p.latitude]},
                "properties": {
                    "label": p.label,
                    "weight": p.weight,
                    "distortion": p.distortion,
                    "frozen": p.frozen,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn curve_csv(sweep: &Sweep) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    rdgeo::curve_analysis::write_curve_csv(&mut buf, &sweep.points)?;
    Ok(buf)
}

pub fn failures_json(sweep: &Sweep) -> Value {
    Value::Array(
        sweep
            .failures
            .iter()
            .map(|(s, e)| json!({"slope": s, "error": e.to_string()}))
            .collect(),
    )
}

pub fn bounds_json(model: &BearingModel, b: &CurveBounds) -> Value {
    let pairs = |v: &[(f64, f64)]| -> Vec<Value> {
        v.iter().map(|(d, r)| json!({"distortion": d, "rate_nats": r})).collect()
    };
    json!({
        "model": model,
        "tangents": b.tangents.iter().map(|t| json!({"slope": t.slope, "intercept": t.intercept})).collect::<Vec<_>>(),
        "achieved": pairs(&b.achieved),
        "lower": pairs(&b.lower),
        "upper": pairs(&b.upper),
    })
}

pub fn bifurcations_json(model: &BearingModel, report: &BifurcationReport, sweep: &Sweep) -> Value {
    json!({
        "model": model,
        "geo_delta_deg": report.geo_delta_deg,
        "weight_cap": report.weight_cap,
        "flagged_slopes": report.flagged_slopes,
        "entries": report.entries,
        "failures": failures_json(sweep),
    })
}

pub fn verdict_json(cmp: &ModelComparison, a: &BearingModel, b: &BearingModel, sa: &Sweep, sb: &Sweep) -> Value {
    let better = match cmp.verdict {
        Verdict::A => Value::String(cmp.model_a.clone()),
        Verdict::B => Value::String(cmp.model_b.clone()),
        Verdict::Inconclusive => Value::Null,
    };
    let intervals = |v: &[(f64, f64)]| -> Vec<Value> { v.iter().map(|(lo, hi)| json!([lo, hi])).collect() };
    json!({
        "model_a": a,
        "model_b": b,
        "verdict": cmp.verdict,
        "better_model": better,
        "a_better": intervals(&cmp.a_better),
        "b_better": intervals(&cmp.b_better),
        "inconclusive": intervals(&cmp.inconclusive),
        "failures_a": failures_json(sa),
        "failures_b": failures_json(sb),
    })
}

/// Orientation of the major axis in degrees clockwise from north, in [0, 180).
pub fn major_axis_bearing(cov: &[[f64; 2]; 2]) -> f64 {
    let (a, b, d) = (cov[0][0], cov[0][1], cov[1][1]);
    // principal direction of the (lat, lon) covariance; east is the lon axis
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (north, east) = (theta.cos(), theta.sin());
    let deg = east.atan2(north).to_degrees();
    let deg = deg.rem_euclid(180.0);
    if deg >= 180.0 { 0.0 } else { deg }
}

pub fn ellipse_geojson(e: &ConfidenceEllipse) -> Value {
    let mut ring: Vec<Value> = e.boundary.iter().map(|v| json!([v[1], v[0]])).collect();
    if let Some(first) = ring.first().cloned() {
        ring.push(first);
    }
    json!({
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"level": e.level, "quantile": e.quantile},
            },
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [e.center[1], e.center[0]]},
                "properties": {"role": "center"},
            },
        ],
    })
}
