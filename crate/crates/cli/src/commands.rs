use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use stix_core::analysis::{self, data};
use stix_core::dynamics::{integrated_metrics, ModelKind, Simulator};
use stix_core::model::Pulses;
use stix_core::sweeps::{
    self, CalibrationInfo, Scheme, SweepOptions, SweepResult, SCHEMA_VERSION,
};

use crate::config::RunConfig;
use crate::output::{self, OutDir};
use crate::{AnalyzeCommand, GlobalOpts, ModelArg, SchemeArg};

fn load_config(g: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            RunConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?
        }
        (Some(path), Some(preset)) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let mut doc: Map<String, Value> = serde_json::from_str(&text)
                .map_err(stix_core::Error::from)
                .with_context(|| format!("config {}", path.display()))?;
            doc.insert("preset".into(), Value::String(preset.clone()));
            RunConfig::from_json(&Value::Object(doc).to_string())
                .with_context(|| format!("config {}", path.display()))?
        }
        (None, preset) => RunConfig::from_preset(preset.as_deref().unwrap_or("table1"))?,
    };
    if let Some(s) = g.scheme {
        cfg.scheme = match s {
            SchemeArg::Rex => Scheme::Rex,
            SchemeArg::Stix => Scheme::Stix,
        };
    }
    if let Some(m) = g.model {
        cfg.model = match m {
            ModelArg::Full => ModelKind::Full,
            ModelArg::QdOnly => ModelKind::QdOnly,
        };
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(n) = g.n_max {
        cfg.system.n_max = n;
    }
    if let Some(out) = &g.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<OutDir> {
    OutDir::create(&cfg.output.dir, cfg.output.gnuplot)
}

fn calibration(cfg: &RunConfig) -> Result<CalibrationInfo> {
    if !cfg.calibrate {
        return Ok(CalibrationInfo::nominal());
    }
    eprintln!("calibrating TPE pulse area...");
    let sim = Simulator::new(&cfg.system, ModelKind::Full)?;
    let cal = sweeps::calibrate_pi(&sim, &cfg.calibration)?;
    eprintln!("  pi = {:.6} rad, pi/2 = {:.6} rad", cal.pi_area, cal.half_pi_area);
    Ok(cal)
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions { jobs: cfg.jobs, grid: cfg.grid.clone() }
}

fn model_tag(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Full => "full",
        ModelKind::QdOnly => "qd_only",
    }
}

fn provenance(command: &str) -> Value {
    json!({ "tool": "stix", "version": env!("CARGO_PKG_VERSION"), "command": command })
}

fn finish(out: &mut OutDir, name: &str, mut summary: Value) -> Result<()> {
    let path = out.path(name);
    summary["files"] = json!(out.written().into_iter().chain([path.display().to_string()]).collect::<Vec<_>>());
    out.write_json(name, &summary)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

pub fn simulate(g: &GlobalOpts, tpe_area_pi: Option<f64>, no_calibrate: bool) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(a) = tpe_area_pi {
        cfg.tpe.area_pi = a;
    }
    if no_calibrate {
        cfg.calibrate = false;
    }
    cfg.validate()?;
    let mut out = out_dir(&cfg)?;
    let cal = calibration(&cfg)?;
    let sim = Simulator::new(&cfg.system, cfg.model)?;
    let tpe_area = cfg.tpe.area_pi * cal.pi_area;
    let stim = match cfg.scheme {
        Scheme::Stix => Some(cfg.system.stim_pulse(cfg.stim.area_rad)?),
        Scheme::Rex => None,
    };
    let pulses = Pulses::new(Some(cfg.system.tpe_pulse(tpe_area)?), stim)?;
    let traj = sim.evolve(&pulses, &cfg.grid)?;
    let metrics = integrated_metrics(&traj, &cfg.system);
    out.write_with("trajectory.csv", |w| Ok(traj.write_csv(w)?))?;
    out.write_gnuplot("trajectory.gp", &output::trajectory_script("trajectory.csv"))?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scheme": cfg.scheme.label(),
        "model": cfg.model,
        "tpe_area_pi": cfg.tpe.area_pi,
        "tpe_area_rad": tpe_area,
        "stim_area_rad": stim.map(|p| p.area),
        "metrics": metrics,
        "calibration": cal,
        "diagnostics": {
            "samples": traj.samples.len(),
            "drive_end_ps": traj.drive_end_ps,
            "converged": traj.converged,
            "final_excited_population": traj.final_excited_population,
            "trace_error": traj.max_trace_error(),
            "hermiticity_error": traj.max_hermiticity_error(),
            "min_eigenvalue": traj.min_eigenvalue(),
            "cauchy_schwarz_excess": traj.max_cauchy_schwarz_excess(),
        },
        "provenance": provenance("simulate"),
        "config": cfg,
    });
    finish(&mut out, "summary.json", summary)
}

pub fn calibrate(g: &GlobalOpts) -> Result<()> {
    let mut cfg = load_config(g)?;
    cfg.calibrate = true;
    let mut out = out_dir(&cfg)?;
    let cal = calibration(&cfg)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "calibration": cal,
        "pi_area_over_nominal": cal.pi_area / std::f64::consts::PI,
        "provenance": provenance("calibrate"),
        "config": cfg,
    });
    finish(&mut out, "calibration.json", summary)
}

fn write_sweep(
    out: &mut OutDir,
    cfg: &RunConfig,
    stem: &str,
    result: &SweepResult,
    xlabel: &str,
    command: &str,
) -> Result<()> {
    let csv = format!("{stem}.csv");
    out.write_with(&csv, |w| Ok(result.write_csv(w)?))?;
    let metric_col = result.axis_columns();
    out.write_gnuplot(&format!("{stem}.gp"), &output::sweep_script(&csv, xlabel, metric_col + 1))?;
    let mut sidecar = result.sidecar();
    sidecar["provenance"] = provenance(command);
    sidecar["config"] = serde_json::to_value(cfg)?;
    finish(out, &format!("{stem}.json"), sidecar)
}

pub fn sweep_area(g: &GlobalOpts) -> Result<()> {
    let cfg = load_config(g)?;
    let mut out = out_dir(&cfg)?;
    let cal = calibration(&cfg)?;
    let sim = Simulator::new(&cfg.system, cfg.model)?;
    let mut cal_run = cal;
    cal_run.stim_pi_area = cfg.stim.area_rad;
    let result = sweeps::sweep_tpe_area(&sim, &cal_run, &cfg.sweep.areas_pi.values(), cfg.scheme, &sweep_options(&cfg))?;
    let stem = format!("sweep_area_{}_{}", cfg.scheme.label().to_lowercase(), model_tag(cfg.model));
    write_sweep(&mut out, &cfg, &stem, &result, "TPE area (pi)", "sweep-area")
}

pub fn sweep_delay(g: &GlobalOpts) -> Result<()> {
    let cfg = load_config(g)?;
    let mut out = out_dir(&cfg)?;
    let mut cal = calibration(&cfg)?;
    cal.stim_pi_area = cfg.stim.area_rad;
    let sim = Simulator::new(&cfg.system, cfg.model)?;
    let result = sweeps::sweep_delay(
        &sim,
        &cal,
        &cfg.sweep.delays_ps.values(),
        cfg.tpe.area_pi * cal.pi_area,
        &sweep_options(&cfg),
    )?;
    let stem = format!("sweep_delay_{}", model_tag(cfg.model));
    write_sweep(&mut out, &cfg, &stem, &result, "delay (ps)", "sweep-delay")
}

pub fn sweep_stim(g: &GlobalOpts) -> Result<()> {
    let cfg = load_config(g)?;
    let mut out = out_dir(&cfg)?;
    let cal = calibration(&cfg)?;
    let sim = Simulator::new(&cfg.system, cfg.model)?;
    let result = sweeps::sweep_stim_area(
        &sim,
        &cal,
        &cfg.sweep.stim_areas_rad.values(),
        cfg.tpe.area_pi * cal.pi_area,
        &sweep_options(&cfg),
    )?;
    let stem = format!("sweep_stim_{}", model_tag(cfg.model));
    write_sweep(&mut out, &cfg, &stem, &result, "stim area (rad)", "sweep-stim")
}

pub fn map(g: &GlobalOpts) -> Result<()> {
    let cfg = load_config(g)?;
    let mut out = out_dir(&cfg)?;
    let mut cal = calibration(&cfg)?;
    cal.stim_pi_area = cfg.stim.area_rad;
    let sim = Simulator::new(&cfg.system, cfg.model)?;
    let areas = cfg.sweep.areas_pi.values();
    let delays = cfg.sweep.delays_ps.values();
    let result = sweeps::map_area_delay(&sim, &cal, &areas, &delays, &sweep_options(&cfg))?;
    let stem = format!("map_{}", model_tag(cfg.model));
    let kind = cfg.model;
    for (suffix, title, value) in [
        ("xh", "X_H yield", Box::new(move |r: &sweeps::SweepRow| r.xh_yield(kind)) as Box<dyn Fn(&sweeps::SweepRow) -> f64>),
        ("pnc", "PNC", Box::new(move |r: &sweeps::SweepRow| r.pnc(kind))),
    ] {
        let name = format!("{stem}_{suffix}.dat");
        out.write_with(&name, |w| Ok(result.write_matrix(w, &value)?))?;
        out.write_gnuplot(&format!("{stem}_{suffix}.gp"), &output::map_script(&name, title, &areas, &delays))?;
    }
    let csv = format!("{stem}.csv");
    out.write_with(&csv, |w| Ok(result.write_csv(w)?))?;
    let mut sidecar = result.sidecar();
    sidecar["provenance"] = provenance("map");
    sidecar["config"] = serde_json::to_value(&cfg)?;
    finish(&mut out, &format!("{stem}.json"), sidecar)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(stix_core::Error::from).with_context(|| format!("cannot open {}", path.display()))
}

fn with_input<T>(path: &Path, f: impl FnOnce(fs::File) -> stix_core::Result<T>) -> Result<T> {
    f(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn analyze(g: &GlobalOpts, what: AnalyzeCommand) -> Result<()> {
    let dir = g.out.clone().unwrap_or_else(|| "out".into());
    let mut out = OutDir::create(&dir, false)?;
    let (name, report) = match what {
        AnalyzeCommand::Visibility { input } => {
            let trace = with_input(&input, data::read_trace_csv)?;
            let r = analysis::visibility_from_trace(&trace)?;
            ("visibility", json!({ "input": input, "bins": trace.timestamps_s.len(), "result": r }))
        }
        AnalyzeCommand::Lambda { input, bundled, v_hom, rho11 } => {
            let (points, source, default_v_hom) = match (&input, bundled.as_deref()) {
                (Some(path), _) => (with_input(path, data::read_lambda_csv)?, json!(path), None),
                (None, Some(name)) => {
                    let set = if name == "rex" { &data::LAMBDA_REX } else { &data::LAMBDA_STIX };
                    (set.points()?, json!(format!("bundled:{}", set.name)), Some(set.v_hom))
                }
                (None, None) => anyhow::bail!(stix_core::Error::Input("need --input or --bundled".into())),
            };
            let v_hom = v_hom.or(default_v_hom).ok_or_else(|| {
                stix_core::Error::Config { field: "v_hom".into(), message: "required with --input".into() }
            })?;
            let fit = analysis::fit_lambda(&points, v_hom)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            let pnc = analysis::pnc_exp(fit.lambda, rho11)?;
            ("lambda", json!({ "input": source, "v_hom": v_hom, "result": fit, "rho11": rho11, "pnc_exp": pnc }))
        }
        AnalyzeCommand::Blinking { input } => {
            let h = with_input(&input, data::read_blinking_csv)?;
            let fit = analysis::fit_blinking(&h)?;
            ("blinking", json!({ "input": input, "bins": h.delay_ms.len(), "result": fit }))
        }
        AnalyzeCommand::G2 { input, orthogonal, spacing_ns, window_ns } => {
            let h = with_input(&input, data::read_coincidence_csv)?;
            match orthogonal {
                None => {
                    let r = analysis::fit_coincidence_peaks(&h, spacing_ns, window_ns)?;
                    let params = json!({ "spacing_ns": spacing_ns, "window_ns": window_ns });
                    ("g2", json!({ "input": input, "parameters": params, "result": r, "g2_zero": r.ratio }))
                }
                Some(ort_path) => {
                    let ort = with_input(&ort_path, data::read_coincidence_csv)?;
                    let r = analysis::hom_visibility(&h, &ort, spacing_ns, window_ns)?;
                    let params = json!({ "spacing_ns": spacing_ns, "window_ns": window_ns });
                    let inputs = json!({ "parallel": input, "orthogonal": ort_path });
                    ("hom", json!({ "input": inputs, "parameters": params, "result": r, "v_hom": r.visibility }))
                }
            }
        }
        AnalyzeCommand::Jones { theta } => {
            let j = analysis::phase_shifter_jones(theta);
            let re: Vec<Vec<f64>> = (0..2).map(|r| (0..2).map(|c| j[(r, c)].re).collect()).collect();
            let im: Vec<Vec<f64>> = (0..2).map(|r| (0..2).map(|c| j[(r, c)].im).collect()).collect();
            ("jones", json!({ "theta": theta, "result": { "real": re, "imag": im } }))
        }
    };
    let mut report = report;
    report["schema_version"] = json!(SCHEMA_VERSION);
    report["analysis"] = json!(name);
    report["provenance"] = provenance(&format!("analyze {name}"));
    finish(&mut out, &format!("analyze_{name}.json"), report)
}
