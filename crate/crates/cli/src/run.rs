use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use multiphoton::analytic::{self, ScanPattern, ScanScheme, DENSE_GRID_POINTS};
use multiphoton::frames::{self, FrameFormat, NoiseSpec, Optics, PhaseModulation, ProfileOptions, RoiSpec};
use multiphoton::montecarlo::{self, McSettings, DEFAULT_BATCHES, DEFAULT_SEED};
use multiphoton::{oracle, Error, InterferencePattern, SourceKind, SourceModel};
use serde::Serialize;

use crate::args::*;
use crate::config::{merge_config, usage};
use crate::plot::{Level, Plot, Series};

/// Grid points of a Monte Carlo scan when none are given (5 degree steps).
const MC_GRID_POINTS: usize = 73;
const MC_SAMPLES: usize = 100_000;
const FRAMES: usize = 500;
const VERIFY_TRIALS: usize = 1000;
const VERIFY_TOLERANCE: f64 = 1e-10;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Analytic(a) => run_analytic(a),
        Command::Mc(a) => run_mc(a),
        Command::Verify(a) => run_verify(a),
        Command::Limits(a) => run_limits(a),
        Command::Frames(FramesCommand::Synth(a)) => run_synth(a),
        Command::Frames(FramesCommand::Process(a)) => run_process(a),
    }
}

fn with_config<T: Serialize + serde::de::DeserializeOwned>(args: T, config: &Option<PathBuf>) -> Result<T> {
    merge_config(args, config.as_deref())
}

fn build_model(m: &ModelArgs) -> Result<SourceModel> {
    let model = match (&m.model, m.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SourceModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(KindArg::Coherent)) => SourceModel::coherent(),
        (None, Some(KindArg::Thermal)) => SourceModel::thermal(),
        (None, None) => return usage("one of --kind or --model is required"),
    };
    let model = match m.coherence_width {
        Some(w) => model.with_coherence_width(Some(w)),
        None => model,
    };
    model.validate()?;
    Ok(model)
}

fn scan_setup(a: &ScanArgs) -> Result<(usize, ScanScheme)> {
    let Some(order) = a.order else {
        return usage("--order is required");
    };
    if !(2..=4).contains(&order) {
        return usage(format!("--order must be 2, 3 or 4, got {order}"));
    }
    let scheme = match a.scheme {
        None => ScanScheme::canonical(order),
        Some(SchemeArg::SymmetricOpposite) => ScanScheme::SymmetricOpposite,
        Some(SchemeArg::SingleDetector) => ScanScheme::SingleDetector {
            phi23: a.phi23.unwrap_or(FRAC_PI_2),
        },
        Some(SchemeArg::DoubleSpeed) => ScanScheme::FourPointDoubleSpeed,
        Some(SchemeArg::Custom) => match (&a.velocity, &a.offset) {
            (Some(v), o) => ScanScheme::Custom {
                velocity: v.clone(),
                offset: o.clone().unwrap_or_else(|| vec![0.0; v.len()]),
            },
            (None, _) => return usage("the custom scheme needs --velocity"),
        },
    };
    if let Err(e) = scheme.linear(order) {
        return usage(e.to_string());
    }
    Ok((order, scheme))
}

fn grid_points(a: &ScanArgs, default: usize) -> Result<usize> {
    let n = a.grid_points.unwrap_or(default);
    if n < 2 {
        return usage("--grid-points must be at least 2");
    }
    Ok(n)
}

fn kind_name(model: &SourceModel) -> &'static str {
    model.kind.as_str()
}

/// One PASS/INFO line comparing a visibility with the tabulated classical
/// limit of its source kind and order.
fn limit_line(kind: SourceKind, order: usize, scheme: &ScanScheme, v: f64, tol: f64) -> String {
    let Ok(limit) = analytic::classical_limit(order, kind) else {
        return format!("INFO  no tabulated classical limit for {kind} sources");
    };
    if *scheme != ScanScheme::canonical(order) {
        return format!(
            "INFO  classical limit {limit:.6} refers to the {} scheme; visibility {v:.6}",
            ScanScheme::canonical(order).name()
        );
    }
    let d = v - limit;
    if d.abs() <= tol {
        format!("PASS  visibility {v:.6} matches classical limit {limit:.6} (tolerance {tol:.1e})")
    } else if d < 0.0 {
        format!("INFO  visibility {v:.6} is {:.6} below classical limit {limit:.6}", -d)
    } else {
        format!("INFO  visibility {v:.6} exceeds classical limit {limit:.6} by {d:.6}")
    }
}

fn infer_format(out: &OutputArgs, path: Option<&Path>, allowed: &[FormatArg]) -> Result<FormatArg> {
    let from_ext = || {
        let ext = path?.extension()?.to_str()?;
        allowed.iter().copied().find(|f| format!("{f:?}").eq_ignore_ascii_case(ext))
    };
    let format = out.format.or_else(from_ext).unwrap_or(allowed[0]);
    if !allowed.contains(&format) {
        return usage(format!("--format {format:?} is not available here").to_lowercase());
    }
    Ok(format)
}

fn encode_pattern(p: &InterferencePattern, format: FormatArg) -> Result<String> {
    Ok(match format {
        FormatArg::Json => p.to_json()?,
        _ => p.to_csv(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_pattern(p: &InterferencePattern, out: &OutputArgs) -> Result<()> {
    let format = infer_format(out, out.out.as_deref(), &[FormatArg::Csv, FormatArg::Json])?;
    if let Some(path) = &out.out {
        write_file(path, &encode_pattern(p, format)?)?;
    }
    Ok(())
}

/// Level a pattern with the given maximum would reach at its minimum if its
/// visibility were exactly `limit`.
fn bound_level(g_max: f64, limit: f64) -> f64 {
    g_max * (1.0 - limit) / (1.0 + limit)
}

fn limit_levels(kind: SourceKind, order: usize, scheme: &ScanScheme, g_max: f64) -> Vec<Level> {
    match analytic::classical_limit(order, kind) {
        Ok(limit) if *scheme == ScanScheme::canonical(order) => vec![Level {
            label: format!("classical bound, V = {limit:.4}"),
            y: bound_level(g_max, limit),
        }],
        _ => vec![],
    }
}

fn run_analytic(a: ScanArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.config)?;
    let model = build_model(&a.model)?;
    let (order, scheme) = scan_setup(&a)?;
    let points = grid_points(&a, DENSE_GRID_POINTS)?;
    infer_format(&a.output, a.output.out.as_deref(), &[FormatArg::Csv, FormatArg::Json])?;
    let pattern = analytic::scan(&model, &ScanPattern::over_period(order, scheme.clone(), points))?;
    let ext = analytic::extremal_phases(&model, order, &scheme)?;
    println!(
        "{} source, order {order}, {} scheme, {points} points",
        kind_name(&model),
        scheme.name()
    );
    println!("grid visibility {:.6}", pattern.visibility);
    println!(
        "visibility {:.9} (max {:.6} at x = {:.6}, min {:.6} at x = {:.6})",
        ext.visibility, ext.g_max, ext.x_max, ext.g_min, ext.x_min
    );
    println!("{}", limit_line(model.kind, order, &scheme, ext.visibility, 1e-9));
    write_pattern(&pattern, &a.output)?;
    if let Some(path) = &a.output.plot {
        let plot = Plot {
            title: format!("g{order}, {} source, {} scheme", kind_name(&model), scheme.name()),
            x_label: "scan coordinate x (rad)".into(),
            y_label: format!("g{order}(x)"),
            series: vec![Series {
                label: "closed form".into(),
                xs: &pattern.xs,
                ys: &pattern.values,
                errors: None,
                markers: false,
            }],
            levels: limit_levels(model.kind, order, &scheme, ext.g_max),
        };
        write_file(path, &plot.render())?;
    }
    Ok(())
}

fn run_mc(a: McArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.scan.config)?;
    let model = build_model(&a.scan.model)?;
    let (order, scheme) = scan_setup(&a.scan)?;
    let points = grid_points(&a.scan, MC_GRID_POINTS)?;
    let out = &a.scan.output;
    infer_format(out, out.out.as_deref(), &[FormatArg::Csv, FormatArg::Json])?;
    let samples = a.samples.unwrap_or(MC_SAMPLES);
    let batches = a.batches.unwrap_or(DEFAULT_BATCHES);
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let settings = McSettings::new(samples, seed)
        .with_batches(batches)
        .with_workers(a.workers);
    let scan = ScanPattern::over_period(order, scheme.clone(), points);
    let pattern = match montecarlo::estimate_scan(&model, &scan, &settings) {
        Err(e @ Error::BadBatching { .. }) => return usage(e.to_string()),
        r => r?,
    };
    let err = pattern.visibility_stderr();
    println!(
        "{} source, order {order}, {} scheme, {points} points, {samples} samples per point, seed {seed}",
        kind_name(&model),
        scheme.name()
    );
    println!("visibility {:.6} ± {:.6}", pattern.visibility, err);
    println!("{}", limit_line(model.kind, order, &scheme, pattern.visibility, (3.0 * err).max(1e-9)));
    write_pattern(&pattern, out)?;
    if let Some(path) = &out.plot {
        let theory = analytic::scan(&model, &ScanPattern::dense(order, scheme.clone()))?;
        let g_max = theory.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let plot = Plot {
            title: format!("g{order}, {} source, {} scheme", kind_name(&model), scheme.name()),
            x_label: "scan coordinate x (rad)".into(),
            y_label: format!("g{order}(x)"),
            series: vec![
                Series {
                    label: format!("Monte Carlo, {samples} samples per point"),
                    xs: &pattern.xs,
                    ys: &pattern.values,
                    errors: pattern.stderrs.as_deref(),
                    markers: true,
                },
                Series {
                    label: "closed form".into(),
                    xs: &theory.xs,
                    ys: &theory.values,
                    errors: None,
                    markers: false,
                },
            ],
            levels: limit_levels(model.kind, order, &scheme, g_max),
        };
        write_file(path, &plot.render())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow {
    order: usize,
    trials: usize,
    max_deviation: f64,
    pass: bool,
}

fn run_verify(a: VerifyArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.config)?;
    let orders = a.orders.clone().unwrap_or_else(|| vec![2, 3, 4]);
    let trials = a.trials.unwrap_or(VERIFY_TRIALS);
    let tolerance = a.tolerance.unwrap_or(VERIFY_TOLERANCE);
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    if let Some(&o) = orders.iter().find(|o| !(2..=4).contains(*o)) {
        return usage(format!("closed forms exist for orders 2 to 4, got {o}"));
    }
    let format = infer_format(&a.output, a.output.out.as_deref(), &[FormatArg::Csv, FormatArg::Json])?;
    let mut rows = Vec::new();
    for &order in &orders {
        let d = oracle::verify_closed_form_seeded(order, trials, seed)?;
        let pass = d < tolerance;
        println!(
            "{}  order {order}: max deviation {d:.3e} over {trials} draws (tolerance {tolerance:.0e})",
            if pass { "PASS" } else { "FAIL" }
        );
        rows.push(VerifyRow {
            order,
            trials,
            max_deviation: d,
            pass,
        });
    }
    if let Some(path) = &a.output.out {
        let text = match format {
            FormatArg::Json => serde_json::to_string_pretty(&rows)?,
            _ => std::iter::once("order,trials,max_deviation,pass".to_string())
                .chain(rows.iter().map(|r| format!("{},{},{},{}", r.order, r.trials, r.max_deviation, r.pass)))
                .map(|l| l + "\n")
                .collect(),
        };
        write_file(path, &text)?;
    }
    if rows.iter().any(|r| !r.pass) {
        anyhow::bail!("closed form deviates from the expansion by more than {tolerance:e}");
    }
    Ok(())
}

#[derive(Serialize)]
struct LimitRow {
    kind: SourceKind,
    order: usize,
    scheme: &'static str,
    visibility: f64,
}

fn run_limits(a: LimitsArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.config)?;
    let format = infer_format(&a.output, a.output.out.as_deref(), &[FormatArg::Csv, FormatArg::Json])?;
    let rows: Vec<LimitRow> = analytic::classical_limit_table()
        .into_iter()
        .map(|(kind, order, visibility)| LimitRow {
            kind,
            order,
            scheme: ScanScheme::canonical(order).name(),
            visibility,
        })
        .collect();
    println!("{:<9} {:>5}  {:<24} {:>12} {:>8}", "kind", "order", "scheme", "visibility", "percent");
    for r in &rows {
        println!(
            "{:<9} {:>5}  {:<24} {:>12.9} {:>7.1}%",
            r.kind.as_str(),
            r.order,
            r.scheme,
            r.visibility,
            100.0 * r.visibility
        );
    }
    if let Some(path) = &a.output.out {
        let text = match format {
            FormatArg::Json => serde_json::to_string_pretty(&rows)?,
            _ => std::iter::once("kind,order,scheme,visibility".to_string())
                .chain(rows.iter().map(|r| format!("{},{},{},{}", r.kind, r.order, r.scheme, r.visibility)))
                .map(|l| l + "\n")
                .collect(),
        };
        write_file(path, &text)?;
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.config)?;
    let model = build_model(&a.model)?;
    let Some(dir) = &a.output.out else {
        return usage("--out <DIR> is required");
    };
    let format = match infer_format(&a.output, None, &[FormatArg::Pgm, FormatArg::Csv])? {
        FormatArg::Csv => FrameFormat::Csv,
        _ => FrameFormat::Pgm,
    };
    let mut optics = match &a.optics {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| {
                anyhow::anyhow!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())
            })?
        }
        None => Optics::default(),
    };
    if let Some(w) = a.width {
        optics.width = w;
    }
    if let Some(h) = a.height {
        optics.height = h;
    }
    if let Some(p) = a.period_px {
        optics.fringe_period_px = p;
    }
    if let Some(p) = a.fringe_phase {
        optics.fringe_phase_rad = p;
    }
    if a.noiseless {
        optics.noise = NoiseSpec::none();
        // PGM stores integer counts, so quantization stays for that format
        if format == FrameFormat::Csv {
            optics.bit_depth = None;
        }
    }
    if let Some(theta) = a.theta {
        optics.phase_modulation = PhaseModulation::Fixed { theta };
    }
    if let Some(amp) = a.harmonic_amplitude {
        optics.phase_modulation = PhaseModulation::harmonic(amp);
    }
    let n = a.frames.unwrap_or(FRAMES);
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let manifest = match frames::synth_to_dir(&model, &optics, n, seed, dir, format) {
        Err(e @ Error::BadOptics(_)) => return usage(e.to_string()),
        r => r?,
    };
    println!(
        "wrote {n} {} frames of {}x{} px ({} source, seed {seed}) to {}",
        format.extension(),
        optics.width,
        optics.height,
        kind_name(&model),
        manifest.display()
    );
    Ok(())
}

fn resolve_roi(a: &ProcessArgs, width: usize, height: usize) -> Result<RoiSpec> {
    let mut roi = match a.roi.as_deref() {
        Some(&[x0, y0, w, h]) => RoiSpec {
            x0,
            y0,
            width: w,
            height: h,
            reference_column: w / 2,
        },
        Some(_) => return usage("--roi takes four values: x0,y0,width,height"),
        None => {
            let d = RoiSpec::default();
            if d.check_bounds(width, height).is_ok() {
                d
            } else {
                RoiSpec {
                    x0: 0,
                    y0: 0,
                    width,
                    height,
                    reference_column: width / 2,
                }
            }
        }
    };
    if let Some(r) = a.ref_col {
        roi.reference_column = r;
    }
    Ok(roi)
}

#[derive(Serialize)]
struct ProcessSummary {
    frames: usize,
    roi: RoiSpec,
    fringe_period_px: f64,
    intensity_fringe_visibility: f64,
    g3_visibility: f64,
    g3_visibility_stderr: f64,
    g4_visibility: f64,
    g4_visibility_stderr: f64,
}

fn run_process(a: ProcessArgs) -> Result<()> {
    let a = with_config(a.clone(), &a.config)?;
    let Some(input) = &a.input else {
        return usage("an input manifest or directory is required");
    };
    let manifest_path = if input.is_dir() {
        input.join("manifest.json")
    } else {
        input.clone()
    };
    let format = infer_format(&a.output, None, &[FormatArg::Csv, FormatArg::Json])?;
    let manifest = frames::read_manifest(&manifest_path)?;
    let roi = resolve_roi(&a, manifest.width, manifest.height)?;
    let mut series = frames::load_series(&manifest_path, &roi)?;
    if let Some(p) = a.period_px {
        if !(p > 0.0) {
            return usage(format!("--period-px must be positive, got {p}"));
        }
        series.fringe_period_px = Some(p);
    }
    let period = series.period_px();
    series.fringe_period_px = Some(period);
    let opts = ProfileOptions {
        n_batches: a.batches.unwrap_or(ProfileOptions::default().n_batches),
        ..ProfileOptions::default()
    };
    let mean = frames::mean_profile(&series);
    let fringe_v = frames::fringe_visibility(&mean, period);
    let g3 = frames::g3_profile(&series, &opts)?;
    let g4 = frames::g4_profile(&series, &opts)?;
    let (e3, e4) = (g3.pattern.visibility_stderr(), g4.pattern.visibility_stderr());

    println!(
        "{} frames, ROI {}x{} at ({}, {}), reference column {}, fringe period {period:.3} px",
        series.len(),
        roi.width,
        roi.height,
        roi.x0,
        roi.y0,
        roi.reference_column
    );
    println!("averaged intensity fringe visibility {fringe_v:.4}");
    let kind = manifest.metadata.source_kind;
    for (order, p, e) in [(3, &g3.pattern, e3), (4, &g4.pattern, e4)] {
        println!("g{order} visibility {:.4} ± {e:.4}", p.visibility);
        match kind {
            Some(k) => println!(
                "{}",
                limit_line(k, order, &ScanScheme::canonical(order), p.visibility, 3.0 * e)
            ),
            None => println!(
                "INFO  classical limits for order {order}: coherent {:.4}, thermal {:.4}",
                analytic::classical_limit(order, SourceKind::Coherent)?,
                analytic::classical_limit(order, SourceKind::Thermal)?
            ),
        }
    }

    if let Some(dir) = &a.output.out {
        let r = roi.reference_column as f64;
        let xs = (0..mean.len()).map(|c| c as f64 - r).collect();
        let intensity = InterferencePattern::new(xs, mean.clone(), None)?;
        let ext = match format {
            FormatArg::Json => "json",
            _ => "csv",
        };
        write_file(&dir.join(format!("intensity.{ext}")), &encode_pattern(&intensity, format)?)?;
        write_file(&dir.join(format!("g3.{ext}")), &encode_pattern(&g3.pattern, format)?)?;
        write_file(&dir.join(format!("g4.{ext}")), &encode_pattern(&g4.pattern, format)?)?;
        let summary = ProcessSummary {
            frames: series.len(),
            roi,
            fringe_period_px: period,
            intensity_fringe_visibility: fringe_v,
            g3_visibility: g3.pattern.visibility,
            g3_visibility_stderr: e3,
            g4_visibility: g4.pattern.visibility,
            g4_visibility_stderr: e4,
        };
        write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    }
    if let Some(path) = &a.output.plot {
        let mut levels = Vec::new();
        if let Some(k) = kind {
            for (order, p) in [(3, &g3.pattern), (4, &g4.pattern)] {
                let limit = analytic::classical_limit(order, k)?;
                levels.push(Level {
                    label: format!("g{order} classical bound, V = {limit:.4}"),
                    y: bound_level(p.values[p.argmax()], limit),
                });
            }
        }
        let plot = Plot {
            title: format!("correlation profiles, {} frames", series.len()),
            x_label: "phase offset x (rad)".into(),
            y_label: "normalized correlation".into(),
            series: vec![
                Series {
                    label: "g3".into(),
                    xs: &g3.pattern.xs,
                    ys: &g3.pattern.values,
                    errors: g3.pattern.stderrs.as_deref(),
                    markers: true,
                },
                Series {
                    label: "g4".into(),
                    xs: &g4.pattern.xs,
                    ys: &g4.pattern.values,
                    errors: g4.pattern.stderrs.as_deref(),
                    markers: true,
                },
            ],
            levels,
        };
        write_file(path, &plot.render())?;
    }
    Ok(())
}
