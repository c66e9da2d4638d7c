//! Site records: CSV ingestion, validation, filtering and weighting.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circular::Angle;
use crate::geodesy::{GeoError, GeoPoint};

/// Column names, in order, of the site CSV.
pub const CSV_HEADER: [&str; 6] = ["id", "name", "latitude", "longitude", "orientation", "year_ce"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("row {row}: {message}")]
    ValidationError { row: usize, message: String },
    #[error("duplicate site id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("weights must be finite, non-negative, and not all zero")]
    InvalidWeights,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One oriented site.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub name: String,
    pub location: GeoPoint,
    pub orientation: Angle,
    pub year_ce: Option<i32>,
    pub weight: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, location: GeoPoint, orientation_deg: f64) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            location,
            orientation: Angle::from_degrees(orientation_deg),
            year_ce: None,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SiteRecord {
    id: String,
    name: String,
    latitude: f64,
    longitude: f64,
    orientation: f64,
    year_ce: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

/// Selects sites after parsing. Sites without a year are dropped by any year bound.
#[derive(Debug, Clone, Default)]
pub struct SiteFilter {
    /// Keep sites with `year_ce < before_year`.
    pub before_year: Option<i32>,
    /// Keep sites with `year_ce >= from_year`.
    pub from_year: Option<i32>,
    pub exclude_ids: HashSet<String>,
}

impl SiteFilter {
    pub fn before(year: i32) -> Self {
        Self {
            before_year: Some(year),
            ..Self::default()
        }
    }

    pub fn excluding<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.exclude_ids.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn accepts(&self, site: &Site) -> bool {
        if self.exclude_ids.contains(&site.id) {
            return false;
        }
        if self.before_year.is_some() || self.from_year.is_some() {
            let Some(year) = site.year_ce else {
                return false;
            };
            if self.before_year.is_some_and(|b| year >= b) || self.from_year.is_some_and(|f| year < f) {
                return false;
            }
        }
        true
    }

    /// Order-preserving filter.
    pub fn apply(&self, sites: Vec<Site>) -> Vec<Site> {
        sites.into_iter().filter(|s| self.accepts(s)).collect()
    }
}

/// Parses sites from CSV text. Rows are numbered from 1 for the first data row.
///
/// The header must be exactly [`CSV_HEADER`], optionally followed by a
/// `weight` column.
pub fn parse_sites<R: Read>(reader: R) -> Result<Vec<Site>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let header_ok = names.len() >= CSV_HEADER.len()
        && names[..CSV_HEADER.len()] == CSV_HEADER
        && (names.len() == CSV_HEADER.len() || names[CSV_HEADER.len()..] == ["weight"]);
    if !header_ok && !names.is_empty() {
        return Err(DatasetError::ParseError {
            row: 0,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut sites = Vec::new();
    for (i, result) in rdr.deserialize::<SiteRecord>().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| DatasetError::ParseError {
            row,
            message: e.to_string(),
        })?;
        let site = validate(rec, row)?;
        if !seen.insert(site.id.clone()) {
            return Err(DatasetError::DuplicateId { id: site.id, row });
        }
        sites.push(site);
    }
    Ok(sites)
}

fn validate(rec: SiteRecord, row: usize) -> Result<Site, DatasetError> {
    let invalid = |message: String| DatasetError::ValidationError { row, message };
    if rec.id.trim().is_empty() {
        return Err(invalid("empty id".into()));
    }
    if !(-180.0..=180.0).contains(&rec.longitude) {
        return Err(invalid(format!("longitude {} outside [-180, 180]", rec.longitude)));
    }
    if !(0.0..=360.0).contains(&rec.orientation) {
        return Err(invalid(format!("orientation {} outside [0, 360]", rec.orientation)));
    }
    let location = GeoPoint::new(rec.latitude, rec.longitude).map_err(|e| match e {
        GeoError::LatitudeOutOfRange(lat) => invalid(format!("latitude {lat} outside [-90, 90]")),
        other => invalid(other.to_string()),
    })?;
    let weight = rec.weight.unwrap_or(1.0);
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(invalid(format!("weight {weight} must be finite and non-negative")));
    }
    Ok(Site {
        id: rec.id,
        name: rec.name,
        location,
        orientation: Angle::from_degrees(rec.orientation),
        year_ce: rec.year_ce,
        weight,
    })
}

/// Reads a site CSV and applies `filter`.
pub fn load_sites(path: impl AsRef<Path>, filter: &SiteFilter) -> Result<Vec<Site>, DatasetError> {
    let file = fs::File::open(path)?;
    Ok(filter.apply(parse_sites(file)?))
}

/// Reads an exclusion file: one id per line, `#` comments and blank lines ignored.
pub fn load_exclusions(path: impl AsRef<Path>) -> Result<HashSet<String>, DatasetError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Writes sites in the CSV schema. A `weight` column is added only when some
/// weight differs from 1.
pub fn write_sites<W: Write>(writer: W, sites: &[Site]) -> Result<(), DatasetError> {
    let with_weight = sites.iter().any(|s| s.weight != 1.0);
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    if with_weight {
        let mut header: Vec<&str> = CSV_HEADER.to_vec();
        header.push("weight");
        wtr.write_record(&header)?;
    } else {
        wtr.write_record(CSV_HEADER)?;
    }
    for s in sites {
        wtr.serialize(SiteRecord {
            id: s.id.clone(),
            name: s.name.clone(),
            latitude: s.location.lat(),
            longitude: s.location.lon(),
            orientation: s.orientation.degrees(),
            year_ce: s.year_ce,
            weight: with_weight.then_some(s.weight),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Probability vector over an ordered set of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDistribution {
    sites: Vec<Site>,
    probabilities: Vec<f64>,
}

impl SourceDistribution {
    /// Normalizes `weights` (one per site) into probabilities.
    pub fn weighted(sites: Vec<Site>, weights: &[f64]) -> Result<Self, DatasetError> {
        if sites.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        if weights.len() != sites.len() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(DatasetError::InvalidWeights);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DatasetError::InvalidWeights);
        }
        let probabilities = weights.iter().map(|w| w / total).collect();
        Ok(Self { sites, probabilities })
    }

    /// Uses each site's own `weight` field.
    pub fn from_site_weights(sites: Vec<Site>) -> Result<Self, DatasetError> {
        let weights: Vec<f64> = sites.iter().map(|s| s.weight).collect();
        Self::weighted(sites, &weights)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Same sites, new weights.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self, DatasetError> {
        Self::weighted(self.sites.clone(), weights)
    }
}

/// Every site gets probability 1/n, regardless of its `weight` field.
pub fn uniform_distribution(sites: Vec<Site>) -> Result<SourceDistribution, DatasetError> {
    let n = sites.len();
    SourceDistribution::weighted(sites, &vec![1.0; n])
}
