//! One function per subcommand. Each builds its outputs in memory; the caller
//! writes them once the run is over.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rdgeo::bootstrap_region::{bootstrap_cloud, fit_ellipse, write_cloud_csv, BootstrapError, EllipseError};
use rdgeo::curve_analysis::{self, compare_curves, rate_view, scan_points, Sweep};
use rdgeo::dataset::{load_exclusions, write_sites};
use rdgeo::diagnostics::screen_outliers;
use rdgeo::{load_sites, search_with_frozen, BearingModel, GeoPoint, SiteFilter, SourceDistribution};
use serde_json::json;

use crate::args::{
    build_model, BootstrapArgs, CompareArgs, CompressArgs, CurveArgs, DataArgs, FixPoint, Format, ScanArgs, SynthArgs,
};
use crate::output::{self, LabelledSolution, Outputs};
use crate::synth::{generate, Placement, SynthParams};

/// What a finished run produced. Warnings mark numerical trouble: the files are
/// still written but the process exits with status 2.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Outputs,
    pub out_dir: Option<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn load_source(data: &DataArgs) -> Result<SourceDistribution> {
    let mut filter = SiteFilter {
        before_year: data.before_year,
        from_year: data.from_year,
        ..SiteFilter::default()
    };
    if let Some(path) = &data.exclude {
        filter.exclude_ids = load_exclusions(path).with_context(|| format!("reading {}", path.display()))?;
    }
    let sites = load_sites(&data.input, &filter).with_context(|| format!("reading {}", data.input.display()))?;
    Ok(SourceDistribution::from_site_weights(sites)?)
}

fn frozen(fix: &[FixPoint]) -> (Vec<GeoPoint>, Vec<Option<String>>) {
    (fix.iter().map(|f| f.point).collect(), fix.iter().map(|f| f.label.clone()).collect())
}

fn model_of(m: &crate::args::ModelArgs) -> Result<BearingModel> {
    m.bearing_model().map_err(|e| anyhow!(e))
}

pub fn compress(args: &CompressArgs, classify_only: bool) -> Result<Outcome> {
    let source = load_source(&args.data)?;
    let model = model_of(&args.model)?;
    let config = args.search.config(args.slope);
    let (points, labels) = frozen(&args.fix_points);
    let solution = search_with_frozen(&source, &model, &config, &points)?;
    let labelled = LabelledSolution::new(&solution, &labels);

    let mut out = Outputs::default();
    let o = &args.output;
    let table = labelled.classification();
    let report = screen_outliers(&solution, args.support_threshold, args.max_support_count);
    if o.wants(Format::Json) {
        if !classify_only {
            out.add_json("solution.json", &labelled.document(args.search.seed))?;
        } else {
            out.add_json("classification.json", &table)?;
        }
        out.add_json("outliers.json", &labelled.outliers(&report))?;
    }
    if o.wants(Format::Csv) {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        out.add("classification.csv", buf);
    }
    if o.wants(Format::Text) {
        let names: Vec<String> = source.sites().iter().map(|s| s.id.clone()).collect();
        out.add("classification.txt", table.to_text(Some(&names)).into_bytes());
        if !classify_only {
            out.add("solution.txt", labelled.summary_text().into_bytes());
        }
    }
    if o.wants(Format::Geojson) && !classify_only {
        out.add_json("points.geojson", &output::points_geojson(&labelled.points()))?;
    }

    let mut warnings = Vec::new();
    if !solution.converged {
        warnings.push(format!(
            "search did not converge within {} outer iterations",
            config.max_outer_iters
        ));
    }
    Ok(Outcome {
        outputs: out,
        out_dir: Some(o.out.clone()),
        warnings,
    })
}

fn sweep_warnings(sweep: &Sweep, tag: &str) -> Vec<String> {
    let mut w: Vec<String> = sweep
        .failures
        .iter()
        .map(|(s, e)| format!("{tag}slope {s}: {e}"))
        .collect();
    for p in &sweep.points {
        if !p.solution.converged {
            w.push(format!("{tag}slope {}: search did not converge", p.slope));
        }
    }
    w
}

pub fn curve(args: &CurveArgs) -> Result<Outcome> {
    let source = load_source(&args.data)?;
    let model = model_of(&args.model)?;
    let slopes = args.slopes.slopes().map_err(|e| anyhow!(e))?;
    let config = args.search.config(slopes[0]);
    config.validate()?;
    let sweep = curve_analysis::sweep(&source, &model, &slopes, &config);
    let report = scan_points(&sweep.points, args.geo_delta, args.weight_cap);

    let mut out = Outputs::default();
    let mut warnings = sweep_warnings(&sweep, "");
    let o = &args.output;
    if o.wants(Format::Csv) {
        out.add("curve.csv", output::curve_csv(&sweep)?);
    }
    match curve_analysis::bounds(&sweep.points) {
        Ok(b) => {
            if o.wants(Format::Json) {
                out.add_json("bounds.json", &output::bounds_json(&model, &b))?;
            }
        }
        Err(e) => warnings.push(format!("bounds: {e}")),
    }
    if o.wants(Format::Json) {
        out.add_json("bifurcations.json", &output::bifurcations_json(&model, &report, &sweep))?;
    }
    Ok(Outcome {
        outputs: out,
        out_dir: Some(o.out.clone()),
        warnings,
    })
}

pub fn bifurcation_scan(args: &ScanArgs) -> Result<Outcome> {
    let source = load_source(&args.data)?;
    let model = model_of(&args.model)?;
    let slopes = args.slopes.slopes().map_err(|e| anyhow!(e))?;
    let config = args.search.config(slopes[0]);
    config.validate()?;
    let sweep = curve_analysis::sweep(&source, &model, &slopes, &config);
    let report = scan_points(&sweep.points, args.geo_delta, args.weight_cap);
    let mut out = Outputs::default();
    if args.output.wants(Format::Json) {
        out.add_json("bifurcations.json", &output::bifurcations_json(&model, &report, &sweep))?;
    }
    if args.output.wants(Format::Text) {
        let mut text = String::from("slope  points  min_weight  min_separation_deg  flagged\n");
        for e in &report.entries {
            text.push_str(&format!(
                "{}  {}  {:.6}  {}  {}\n",
                e.slope,
                e.codebook_size,
                e.min_weight,
                e.min_separation_deg.map_or("-".to_string(), |d| format!("{d:.4}")),
                if e.flagged { "yes" } else { "no" }
            ));
        }
        out.add("bifurcations.txt", text.into_bytes());
    }
    Ok(Outcome {
        outputs: out,
        out_dir: Some(args.output.out.clone()),
        warnings: sweep_warnings(&sweep, ""),
    })
}

pub fn compare_models(args: &CompareArgs) -> Result<Outcome> {
    let source = load_source(&args.data)?;
    let model_a = build_model(args.model_a, args.anchor_a, args.anchor_b, args.base).map_err(|e| anyhow!(e))?;
    let model_b = build_model(args.model_b, args.anchor_a, args.anchor_b, args.base).map_err(|e| anyhow!(e))?;
    let slopes = args.slopes.slopes().map_err(|e| anyhow!(e))?;
    let config = args.search.config(slopes[0]);
    config.validate()?;
    let sweep_a = curve_analysis::sweep(&source, &model_a, &slopes, &config);
    let sweep_b = curve_analysis::sweep(&source, &model_b, &slopes, &config);

    let mut out = Outputs::default();
    let mut warnings = sweep_warnings(&sweep_a, "model a, ");
    warnings.extend(sweep_warnings(&sweep_b, "model b, "));
    let o = &args.output;
    if o.wants(Format::Csv) {
        if !model_a.is_fixed() {
            out.add("curve_a.csv", output::curve_csv(&sweep_a)?);
        }
        if !model_b.is_fixed() {
            out.add("curve_b.csv", output::curve_csv(&sweep_b)?);
        }
    }
    let views = rate_view(&source, &model_a, &sweep_a.points)
        .and_then(|a| rate_view(&source, &model_b, &sweep_b.points).map(|b| (a, b)));
    match views {
        Ok((va, vb)) => {
            let cmp = compare_curves(&model_a, &va, &model_b, &vb);
            if o.wants(Format::Json) {
                out.add_json("verdict.json", &output::verdict_json(&cmp, &model_a, &model_b, &sweep_a, &sweep_b))?;
            }
            if o.wants(Format::Text) {
                let winner = match cmp.verdict {
                    curve_analysis::Verdict::A => format!("{model_a} is better"),
                    curve_analysis::Verdict::B => format!("{model_b} is better"),
                    curve_analysis::Verdict::Inconclusive => "inconclusive".to_string(),
                };
                out.add("verdict.txt", format!("{model_a} vs {model_b}: {winner}\n").into_bytes());
            }
        }
        Err(e) => warnings.push(format!("bounds: {e}")),
    }
    Ok(Outcome {
        outputs: out,
        out_dir: Some(o.out.clone()),
        warnings,
    })
}

pub fn bootstrap(args: &BootstrapArgs) -> Result<Outcome> {
    let source = load_source(&args.data)?;
    let model = model_of(&args.model)?;
    let (points, _) = frozen(&args.fix_points);
    let slope = match (args.slope, points.is_empty()) {
        (Some(s), _) => s,
        (None, true) => -1.0,
        (None, false) => bail!("--slope is required together with --fix-point"),
    };
    let config = args.search.config(slope);
    let cloud = match bootstrap_cloud(&source, &model, &config, args.n_resamples, args.search.seed, &points) {
        Ok(c) => c,
        Err(e @ BootstrapError::TooManyFailures { .. }) => {
            return Ok(Outcome {
                warnings: vec![e.to_string()],
                ..Outcome::default()
            })
        }
        Err(e) => return Err(e.into()),
    };
    let mut warnings = Vec::new();
    let (ellipse, degenerate) = match fit_ellipse(&cloud, args.level) {
        Ok(e) => (e, false),
        Err(EllipseError::DegenerateCovariance { min_eigenvalue, ellipse }) => {
            warnings.push(format!("degenerate covariance (smallest eigenvalue {min_eigenvalue:e})"));
            (*ellipse, true)
        }
        Err(e) => return Err(e.into()),
    };
    if !cloud.failures.is_empty() {
        warnings.push(format!(
            "{} of {} resamples did not converge and were dropped",
            cloud.failures.len(),
            cloud.n_resamples
        ));
    }

    let mut out = Outputs::default();
    let o = &args.output;
    if o.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_cloud_csv(&mut buf, &cloud)?;
        out.add("cloud.csv", buf);
    }
    if o.wants(Format::Geojson) {
        out.add_json("ellipse.geojson", &output::ellipse_geojson(&ellipse))?;
    }
    if o.wants(Format::Json) {
        let axes = ellipse.semi_axes();
        let summary = json!({
            "model": model,
            "seed": args.search.seed,
            "n_resamples": cloud.n_resamples,
            "replicates": cloud.replicates.len(),
            "failures": cloud.failures.len(),
            "level": ellipse.level,
            "quantile": ellipse.quantile,
            "full_data_point": {"latitude": cloud.full_data_point.lat(), "longitude": cloud.full_data_point.lon()},
            "center": {"latitude": ellipse.center[0], "longitude": ellipse.center[1]},
            "covariance": ellipse.covariance,
            "semi_axes_deg": {"major": axes[0], "minor": axes[1]},
            "orientation_deg": output::major_axis_bearing(&ellipse.covariance),
            "degenerate": degenerate,
        });
        out.add_json("summary.json", &summary)?;
    }
    Ok(Outcome {
        outputs: out,
        out_dir: Some(o.out.clone()),
        warnings,
    })
}

pub fn synth(args: &SynthArgs) -> Result<Vec<u8>> {
    let model = build_model(args.model, None, None, crate::args::BaseKind::Rhumb).map_err(|e| anyhow!(e))?;
    let placement = match args.ring {
        Some((min_deg, max_deg)) => Placement::Ring { min_deg, max_deg },
        None => Placement::Box {
            lat: args.lat_range,
            lon: args.lon_range,
        },
    };
    let params = SynthParams {
        anchors: args.anchors.clone(),
        sites_per_anchor: args.sites_per_anchor,
        sigma_deg: args.sigma,
        placement,
        model,
        seed: args.seed,
    };
    let sites = generate(&params).map_err(|e| anyhow!(e))?;
    let mut buf = Vec::new();
    write_sites(&mut buf, &sites)?;
    buf.flush()?;
    Ok(buf)
}
