//! Rate-distortion tools for descriptive statistics on oriented geographic
//! sites: compression into reconstruction points, comparison of bearing models,
//! rate selection by bifurcation, soft classification, and bootstrap
//! confidence regions.

pub mod bootstrap_region;
pub mod circular;
pub mod codebook_search;
pub mod curve_analysis;
pub mod dataset;
pub mod diagnostics;
pub mod geodesy;
pub mod nelder_mead;
pub mod rd_engine;
pub mod seeding;

pub use circular::{sigma_to_variance, variance_to_sigma, versin_distortion, Angle, CircularDispersion};
pub use codebook_search::{
    fit_point, optimal_point, search, search_from_codebook, search_with_frozen, PointFit, PointSummary, RdSolution,
    SearchConfig, SearchError,
};
pub use dataset::{load_sites, uniform_distribution, Site, SiteFilter, SourceDistribution};
pub use geodesy::{great_circle_bearing, rhumb_bearing, BaseModel, BearingModel, GeoError, GeoPoint};
pub use rd_engine::{blahut_arimoto, build_distortion_matrix, evaluate_fixed, Codebook, Coupling, DistortionMatrix};
