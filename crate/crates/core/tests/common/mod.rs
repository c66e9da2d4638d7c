#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rdgeo::{BearingModel, GeoPoint, Site};

pub fn p(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// Sites scattered 3° to 9° around each anchor, aimed at it with Gaussian
/// orientation noise of `noise_deg`.
pub fn clusters(anchors: &[GeoPoint], per_anchor: usize, noise_deg: f64, model: &BearingModel, seed: u64) -> Vec<Site> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_deg.max(1e-300)).unwrap();
    let mut sites = Vec::new();
    for (k, a) in anchors.iter().enumerate() {
        for i in 0..per_anchor {
            let dlat: f64 = rng.random_range(-9.0..9.0);
            let dlon: f64 = rng.random_range(-9.0..9.0);
            let at = p((a.lat() + dlat).clamp(-80.0, 80.0), a.lon() + dlon);
            if at.distance_deg(a) < 3.0 {
                continue;
            }
            let b = model.bearing(&at, a).unwrap();
            let e = if noise_deg > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            sites.push(Site::new(format!("c{k}-{i}"), at, b + e));
        }
    }
    sites
}
