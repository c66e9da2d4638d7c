//! Soft-classification tables and outlier screening of a solved coupling.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::codebook_search::RdSolution;

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.90;
pub const DEFAULT_MAX_SUPPORT_COUNT: usize = 2;

/// `q(y|x)` in percent, one row per site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationTable {
    pub labels: Vec<String>,
    pub site_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Default column labels `y1, y2, ...`.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

pub fn classify(solution: &RdSolution) -> ClassificationTable {
    classify_with_labels(solution, default_labels(solution.len()))
}

/// Like [`classify`] with caller-supplied column labels.
///
/// # Panics
/// If `labels` does not have one entry per reconstruction point.
pub fn classify_with_labels(solution: &RdSolution, labels: Vec<String>) -> ClassificationTable {
    assert_eq!(labels.len(), solution.len(), "one label per reconstruction point");
    ClassificationTable {
        labels,
        site_ids: solution.site_ids.clone(),
        rows: solution
            .coupling
            .conditional
            .iter()
            .map(|row| row.iter().map(|q| 100.0 * q).collect())
            .collect(),
    }
}

impl ClassificationTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["site_id".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.site_ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned columns with one decimal, `names` replacing site ids when given.
    pub fn to_text(&self, names: Option<&[String]>) -> String {
        let first: Vec<&str> = match names {
            Some(n) => n.iter().map(String::as_str).collect(),
            None => self.site_ids.iter().map(String::as_str).collect(),
        };
        let w0 = first.iter().map(|s| s.chars().count()).chain([4]).max().unwrap_or(4);
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|v| format!("{v:.1}")).collect())
            .collect();
        let widths: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(j, l)| cells.iter().map(|r| r[j].len()).chain([l.chars().count()]).max().unwrap_or(1))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<w0$}", "Site");
        for (l, w) in self.labels.iter().zip(&widths) {
            let _ = write!(out, "  {l:>w$}");
        }
        out.push('\n');
        for (name, row) in first.iter().zip(&cells) {
            let pad = w0 - name.chars().count();
            out.push_str(name);
            out.push_str(&" ".repeat(pad));
            for (c, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supporter {
    pub site_id: String,
    /// `p(x|y)`.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSupport {
    pub point: usize,
    /// Heaviest sites of `p(x|y)`, at most `max_support_count` of them.
    pub top_sites: Vec<Supporter>,
    pub support_mass: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub support_threshold: f64,
    pub max_support_count: usize,
    pub points: Vec<PointSupport>,
    pub flagged: Vec<usize>,
}

/// Flags points whose `max_support_count` heaviest sites carry at least
/// `support_threshold` of `p(x|y)`. Ties between sites are broken by id so the
/// report does not depend on site order.
pub fn screen_outliers(solution: &RdSolution, support_threshold: f64, max_support_count: usize) -> OutlierReport {
    let mut points = Vec::with_capacity(solution.len());
    for y in 0..solution.len() {
        let col = solution.coupling.posterior_column(y);
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by(|&a, &b| {
            col[b]
                .total_cmp(&col[a])
                .then_with(|| solution.site_ids[a].cmp(&solution.site_ids[b]))
        });
        let top_sites: Vec<Supporter> = order
            .iter()
            .take(max_support_count)
            .map(|&x| Supporter {
                site_id: solution.site_ids[x].clone(),
                mass: col[x],
            })
            .collect();
        let support_mass: f64 = top_sites.iter().map(|s| s.mass).sum();
        points.push(PointSupport {
            point: y,
            flagged: support_mass >= support_threshold,
            top_sites,
            support_mass,
        });
    }
    OutlierReport {
        support_threshold,
        max_support_count,
        flagged: points.iter().filter(|p| p.flagged).map(|p| p.point).collect(),
        points,
    }
}
