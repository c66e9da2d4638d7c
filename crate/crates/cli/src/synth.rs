//! Synthetic site generator with von Mises orientation noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdgeo::circular::sigma_to_variance;
use rdgeo::geodesy::{normalize_bearing, BearingModel, GeoPoint};
use rdgeo::Site;

/// `I₁(κ)/I₀(κ)` by backward recurrence of the Bessel continued fraction.
pub fn bessel_ratio(kappa: f64) -> f64 {
    if kappa <= 0.0 {
        return 0.0;
    }
    if kappa > 1e5 {
        let k = kappa;
        return 1.0 - 1.0 / (2.0 * k) - 1.0 / (8.0 * k * k) - 1.0 / (8.0 * k * k * k);
    }
    let terms = (60.0 + 20.0 * kappa.sqrt() + kappa) as usize;
    // I_{ν+1}/I_ν = 1 / (2(ν+1)/κ + I_{ν+2}/I_{ν+1})
    let mut ratio = 0.0;
    for nu in (0..terms).rev() {
        ratio = 1.0 / (2.0 * (nu as f64 + 1.0) / kappa + ratio);
    }
    ratio
}

/// Concentration whose circular variance `1 - I₁/I₀` matches the circular
/// standard deviation `sigma_deg`.
pub fn kappa_for_sigma(sigma_deg: f64) -> Option<f64> {
    if !(sigma_deg > 0.0) {
        return None;
    }
    let target = 1.0 - sigma_to_variance(sigma_deg).ok()?;
    if target <= 0.0 {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while bessel_ratio(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Some(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Draws an angle (radians, in (-π, π]) from a zero-mean von Mises distribution
/// using the Best–Fisher rejection sampler.
pub fn sample_von_mises<R: Rng>(rng: &mut R, kappa: f64) -> f64 {
    if kappa < 1e-9 {
        return PI * (2.0 * rng.random::<f64>() - 1.0);
    }
    if kappa > 1e7 {
        // wrapped normal limit; the rejection constants lose precision here
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos() / kappa.sqrt();
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let theta = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { theta } else { -theta };
        }
    }
}

/// Where the sites of each anchor are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Uniform in a latitude/longitude box shared by all anchors.
    Box { lat: (f64, f64), lon: (f64, f64) },
    /// Around the site's own anchor, at a great-circle distance drawn uniformly
    /// from `(min_deg, max_deg)` in a uniformly random direction.
    Ring { min_deg: f64, max_deg: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub anchors: Vec<GeoPoint>,
    pub sites_per_anchor: usize,
    pub sigma_deg: f64,
    pub placement: Placement,
    pub model: BearingModel,
    pub seed: u64,
}

/// Destination reached from `from` after `dist_deg` along the great circle with
/// initial bearing `bearing_deg`.
pub fn destination(from: &GeoPoint, bearing_deg: f64, dist_deg: f64) -> Option<GeoPoint> {
    let (phi1, lam1) = (from.lat().to_radians(), from.lon().to_radians());
    let (theta, delta) = (bearing_deg.to_radians(), dist_deg.to_radians());
    let sin_phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0);
    let phi2 = sin_phi2.asin();
    let lam2 = lam1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);
    GeoPoint::new(phi2.to_degrees(), lam2.to_degrees()).ok()
}

/// Sites placed according to `placement`, each aimed at its anchor under
/// `model` and perturbed by von Mises noise of circular standard deviation
/// `sigma_deg`.
pub fn generate(params: &SynthParams) -> Result<Vec<Site>, String> {
    let kappa = kappa_for_sigma(params.sigma_deg).ok_or("sigma must be positive")?;
    match params.placement {
        Placement::Box { lat, lon } => {
            if !(lat.0 < lat.1 && lon.0 < lon.1 && lat.0 >= -89.0 && lat.1 <= 89.0) {
                return Err("placement box must be non-empty and away from the poles".into());
            }
        }
        Placement::Ring { min_deg, max_deg } => {
            if !(min_deg > 0.0 && min_deg < max_deg && max_deg < 90.0) {
                return Err("ring radii must satisfy 0 < min < max < 90".into());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sites = Vec::with_capacity(params.anchors.len() * params.sites_per_anchor);
    for (k, anchor) in params.anchors.iter().enumerate() {
        for i in 0..params.sites_per_anchor {
            let (location, bearing) = loop {
                let loc = match params.placement {
                    Placement::Box { lat, lon } => {
                        let la = rng.random_range(lat.0..lat.1);
                        let lo = rng.random_range(lon.0..lon.1);
                        GeoPoint::new(la, lo).map_err(|e| e.to_string())?
                    }
                    Placement::Ring { min_deg, max_deg } => {
                        let dir = rng.random_range(0.0..360.0);
                        let dist = rng.random_range(min_deg..max_deg);
                        match destination(anchor, dir, dist) {
                            Some(p) if p.lat().abs() <= 89.0 => p,
                            _ => continue,
                        }
                    }
                };
                if let Ok(b) = params.model.bearing(&loc, anchor) {
                    break (loc, b);
                }
            };
            let noise = sample_von_mises(&mut rng, kappa).to_degrees();
            let id = format!("a{k}-{i:03}");
            let mut site = Site::new(id.clone(), location, normalize_bearing(bearing + noise));
            site.name = format!("Synthetic site {i} of anchor {k}");
            sites.push(site);
        }
    }
    Ok(sites)
}
