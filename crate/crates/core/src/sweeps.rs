//! Pulse-area calibration and one- and two-dimensional parameter scans.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrated_metrics, IntegratedMetrics, IntegrationGrid, ModelKind, Simulator};
use crate::error::{Error, Result};
use crate::model::{PulseRole, Pulses, SystemParams};

/// Output schema version shared by all JSON documents.
pub const SCHEMA_VERSION: &str = "1.0";

/// Nominal pulse areas that play the role of π/2, π and 3π/2 for the TPE
/// pulse, and the π area of the stimulating pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    /// First maximum of the biexciton occupation (rad).
    pub pi_area: f64,
    /// First maximum of `|ρ^QD_{g,xx}|` (rad).
    pub half_pi_area: f64,
    /// Next maximum of `|ρ^QD_{g,xx}|` beyond `pi_area` (rad), if found
    /// inside the scan range.
    pub three_half_pi_area: Option<f64>,
    /// Area of the stimulating π pulse (rad).
    pub stim_pi_area: f64,
    /// Peak biexciton occupation reached at `pi_area`.
    pub xx_peak_at_pi: f64,
    /// Peak `|ρ^QD_{g,xx}|` reached at `half_pi_area`.
    pub coherence_peak_at_half_pi: f64,
}

impl CalibrationInfo {
    /// Identity calibration: nominal areas are used as they are.
    pub fn nominal() -> Self {
        Self {
            pi_area: PI,
            half_pi_area: PI / 2.0,
            three_half_pi_area: Some(1.5 * PI),
            stim_pi_area: PI,
            xx_peak_at_pi: f64::NAN,
            coherence_peak_at_half_pi: f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_pi_area > 0.0 && self.half_pi_area < self.pi_area) {
            return Err(Error::Calibration(format!(
                "expected 0 < half_pi_area < pi_area, got {} and {}",
                self.half_pi_area, self.pi_area
            )));
        }
        Ok(())
    }
}

/// Controls of the calibration search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationOptions {
    /// Upper end of the coarse scan (rad).
    pub a_max: f64,
    pub coarse_points: usize,
    /// Relative tolerance of the golden-section refinement.
    pub rel_tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { a_max: 4.0 * PI, coarse_points: 61, rel_tol: 1e-3 }
    }
}

/// Quantity whose first maximum defines a calibrated area.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationTarget {
    /// Peak population of a QD state (index in g, xH, xV, xx order).
    Population(usize),
    /// Peak `|ρ^QD_{g,xx}|`.
    GroundBiexcitonCoherence,
}

fn pulses_for(params: &SystemParams, role: PulseRole, area: f64) -> Result<Pulses> {
    match role {
        PulseRole::Tpe => Pulses::new(Some(params.tpe_pulse(area)?), None),
        PulseRole::Stim => Pulses::new(None, Some(params.stim_pulse(area)?)),
    }
}

/// Peaks of the four QD populations and of `|ρ^QD_{g,xx}|` over a
/// single pulse of the given role.
fn peak_responses(sim: &Simulator, role: PulseRole, area: f64) -> Result<[f64; 5]> {
    let pulses = pulses_for(sim.params(), role, area)?;
    let traj = sim.evolve(&pulses, &IntegrationGrid::drive_only())?;
    let mut out = [0.0f64; 5];
    for s in &traj.samples {
        for q in 0..4 {
            out[q] = out[q].max(s.pop[q]);
        }
    }
    out[4] = traj.peak_coh_gxx();
    Ok(out)
}

fn target_index(target: CalibrationTarget) -> usize {
    match target {
        CalibrationTarget::Population(q) => q.min(3),
        CalibrationTarget::GroundBiexcitonCoherence => 4,
    }
}

/// Peak of the target quantity over a single pulse.
pub fn peak_response(
    sim: &Simulator,
    role: PulseRole,
    target: CalibrationTarget,
    area: f64,
) -> Result<f64> {
    Ok(peak_responses(sim, role, area)?[target_index(target)])
}

struct Scan {
    areas: Vec<f64>,
    peaks: Vec<[f64; 5]>,
}

impl Scan {
    fn run(sim: &Simulator, role: PulseRole, opts: &CalibrationOptions) -> Result<Self> {
        let points = opts.coarse_points.max(5);
        let areas: Vec<f64> = linspace(0.0, opts.a_max, points);
        let peaks = areas.iter().map(|&a| peak_responses(sim, role, a)).collect::<Result<_>>()?;
        Ok(Self { areas, peaks })
    }

    /// First interior local maximum of the target beyond `after`, refined
    /// by golden-section search.
    fn first_maximum(
        &self,
        sim: &Simulator,
        role: PulseRole,
        target: CalibrationTarget,
        after: f64,
        rel_tol: f64,
    ) -> Result<Option<(f64, f64)>> {
        let k = target_index(target);
        let y: Vec<f64> = self.peaks.iter().map(|p| p[k]).collect();
        for i in 1..y.len() - 1 {
            if self.areas[i] > after && y[i] > y[i - 1] && y[i] >= y[i + 1] {
                let f = |a: f64| peak_response(sim, role, target, a);
                return golden_max(&f, self.areas[i - 1], self.areas[i + 1], rel_tol).map(Some);
            }
        }
        Ok(None)
    }
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > rel_tol * 0.5 * (a + b).abs() {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

fn no_maximum(target: CalibrationTarget, a_max: f64) -> Error {
    Error::Calibration(format!("no interior maximum of {target:?} below {a_max:.3} rad; increase a_max"))
}

/// Area at the first maximum of the target quantity for a single pulse.
pub fn calibrate_area(
    sim: &Simulator,
    role: PulseRole,
    target: CalibrationTarget,
    opts: &CalibrationOptions,
) -> Result<(f64, f64)> {
    Scan::run(sim, role, opts)?
        .first_maximum(sim, role, target, 0.0, opts.rel_tol)?
        .ok_or_else(|| no_maximum(target, opts.a_max))
}

/// Calibrates the TPE π, π/2 and 3π/2 areas. The stimulating pulse keeps
/// its nominal π area.
pub fn calibrate_pi(sim: &Simulator, opts: &CalibrationOptions) -> Result<CalibrationInfo> {
    let role = PulseRole::Tpe;
    let xx = CalibrationTarget::Population(3);
    let coh = CalibrationTarget::GroundBiexcitonCoherence;
    let scan = Scan::run(sim, role, opts)?;
    let (pi_area, xx_peak) =
        scan.first_maximum(sim, role, xx, 0.0, opts.rel_tol)?.ok_or_else(|| no_maximum(xx, opts.a_max))?;
    let (half_pi_area, coh_peak) =
        scan.first_maximum(sim, role, coh, 0.0, opts.rel_tol)?.ok_or_else(|| no_maximum(coh, opts.a_max))?;
    let three_half = scan.first_maximum(sim, role, coh, pi_area, opts.rel_tol)?.map(|(a, _)| a);
    let info = CalibrationInfo {
        pi_area,
        half_pi_area,
        three_half_pi_area: three_half,
        stim_pi_area: PI,
        xx_peak_at_pi: xx_peak,
        coherence_peak_at_half_pi: coh_peak,
    };
    info.validate()?;
    Ok(info)
}

/// Excitation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Relaxation into the exciton: TPE only.
    Rex,
    /// Stimulated preparation of the exciton: TPE plus a delayed π pulse.
    Stix,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Rex => "reX",
            Scheme::Stix => "stiX",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rex" => Ok(Scheme::Rex),
            "stix" => Ok(Scheme::Stix),
            _ => Err(Error::config("scheme", format!("expected rex or stix, got {s:?}"))),
        }
    }
}

/// Execution controls shared by all sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    /// Worker threads; 1 runs serially.
    pub jobs: usize,
    pub grid: IntegrationGrid,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { jobs: 1, grid: IntegrationGrid::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    TpeArea,
    StimArea,
    Delay,
    AreaDelayMap,
}

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// TPE area in units of the calibrated π area.
    pub tpe_area_pi: f64,
    pub tpe_area_rad: f64,
    pub stim_area_rad: f64,
    pub delay_ps: f64,
    pub metrics: IntegratedMetrics,
    pub xx_peak: f64,
}

impl SweepRow {
    /// Emitted H-photon yield: the cavity emission for the full model and
    /// the exciton decay yield for the QD-only model.
    pub fn xh_yield(&self, kind: ModelKind) -> f64 {
        match kind {
            ModelKind::Full => self.metrics.occ_calc,
            ModelKind::QdOnly => self.metrics.xh_yield_qdonly,
        }
    }

    /// Time-integrated photon-number coherence of the given model.
    pub fn pnc(&self, kind: ModelKind) -> f64 {
        match kind {
            ModelKind::Full => self.metrics.pnc_calc,
            ModelKind::QdOnly => self.metrics.pnc_qdonly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub scheme: Scheme,
    pub model: ModelKind,
    /// First axis values (TPE area in π units, stim area in rad, or delay
    /// in ps; delay for maps).
    pub axis1: Vec<f64>,
    /// Second axis of a map (TPE area in π units).
    pub axis2: Option<Vec<f64>>,
    pub rows: Vec<SweepRow>,
    pub calibration: CalibrationInfo,
    pub params: SystemParams,
}

impl SweepResult {
    fn axis_headers(&self) -> &'static [&'static str] {
        match self.kind {
            SweepKind::TpeArea => &["tpe_area_pi", "tpe_area_rad"],
            SweepKind::StimArea => &["stim_area_rad"],
            SweepKind::Delay => &["delay_ps"],
            SweepKind::AreaDelayMap => &["delay_ps", "tpe_area_pi", "tpe_area_rad"],
        }
    }

    /// Number of leading axis columns in the CSV.
    pub fn axis_columns(&self) -> usize {
        self.axis_headers().len()
    }

    fn axis_values(&self, r: &SweepRow) -> Vec<f64> {
        match self.kind {
            SweepKind::TpeArea => vec![r.tpe_area_pi, r.tpe_area_rad],
            SweepKind::StimArea => vec![r.stim_area_rad],
            SweepKind::Delay => vec![r.delay_ps],
            SweepKind::AreaDelayMap => vec![r.delay_ps, r.tpe_area_pi, r.tpe_area_rad],
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<&str> = self.axis_headers().to_vec();
        header.extend(["occ_calc", "pnc_calc", "v_calc", "xx_peak", "xh_yield_qdonly", "pnc_qdonly"]);
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut vals = self.axis_values(r);
            let m = &r.metrics;
            vals.extend([m.occ_calc, m.pnc_calc, m.v_calc, r.xx_peak, m.xh_yield_qdonly, m.pnc_qdonly]);
            let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// JSON sidecar: calibration, parameter echo and axes.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "scheme": self.scheme.label(),
            "model": self.model,
            "rows": self.rows.len(),
            "axis1": self.axis1,
            "axis2": self.axis2,
            "calibration": self.calibration,
            "params": self.params,
        })
    }

    /// Map values as a matrix with one line per delay and one column per
    /// area.
    pub fn write_matrix<W: Write>(&self, mut w: W, value: impl Fn(&SweepRow) -> f64) -> Result<()> {
        let cols = self.axis2.as_ref().map_or(self.rows.len(), Vec::len);
        for line in self.rows.chunks(cols) {
            let vals: Vec<String> = line.iter().map(|r| value(r).to_string()).collect();
            writeln!(w, "{}", vals.join(" "))?;
        }
        Ok(())
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(name, "grid must not be empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(name, "grid values must be finite"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(name, "grid must be strictly increasing"));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Cell {
    tpe_area_rad: f64,
    stim_area_rad: f64,
    delay_ps: f64,
}

fn run_cell(sim: &Simulator, cal: &CalibrationInfo, cell: Cell, grid: &IntegrationGrid) -> Result<SweepRow> {
    let mut params = sim.params().clone();
    params.delay_ps = cell.delay_ps;
    let tpe = params.tpe_pulse(cell.tpe_area_rad)?;
    let stim = if cell.stim_area_rad > 0.0 { Some(params.stim_pulse(cell.stim_area_rad)?) } else { None };
    let pulses = Pulses::new(Some(tpe), stim)?;
    let traj = sim.evolve(&pulses, grid)?;
    Ok(SweepRow {
        tpe_area_pi: cell.tpe_area_rad / cal.pi_area,
        tpe_area_rad: cell.tpe_area_rad,
        stim_area_rad: cell.stim_area_rad,
        delay_ps: cell.delay_ps,
        metrics: integrated_metrics(&traj, &params),
        xx_peak: traj.peak_xx(),
    })
}

fn run_cells(sim: &Simulator, cal: &CalibrationInfo, cells: &[Cell], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    let one = |c: &Cell| {
        run_cell(sim, cal, *c, &opts.grid).map_err(|e| Error::GridPoint {
            point: format!(
                "tpe_area={} rad, stim_area={} rad, delay={} ps",
                c.tpe_area_rad, c.stim_area_rad, c.delay_ps
            ),
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    if opts.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?;
        return pool.install(|| cells.par_iter().map(one).collect());
    }
    if opts.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    cells.iter().map(one).collect()
}

fn stim_area(scheme: Scheme, cal: &CalibrationInfo) -> f64 {
    match scheme {
        Scheme::Rex => 0.0,
        Scheme::Stix => cal.stim_pi_area,
    }
}

/// Scans the TPE area (in units of the calibrated π) at the configured
/// delay.
pub fn sweep_tpe_area(
    sim: &Simulator,
    cal: &CalibrationInfo,
    areas_pi: &[f64],
    scheme: Scheme,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_axis("areas", areas_pi)?;
    if areas_pi[0] < 0.0 {
        return Err(Error::config("areas", "pulse areas must be >= 0"));
    }
    let cells: Vec<Cell> = areas_pi
        .iter()
        .map(|&a| Cell {
            tpe_area_rad: a * cal.pi_area,
            stim_area_rad: stim_area(scheme, cal),
            delay_ps: sim.params().delay_ps,
        })
        .collect();
    Ok(SweepResult {
        kind: SweepKind::TpeArea,
        scheme,
        model: sim.kind(),
        axis1: areas_pi.to_vec(),
        axis2: None,
        rows: run_cells(sim, cal, &cells, opts)?,
        calibration: *cal,
        params: sim.params().clone(),
    })
}

/// Scans the stimulating-pulse area (rad) at a fixed TPE area.
pub fn sweep_stim_area(
    sim: &Simulator,
    cal: &CalibrationInfo,
    stim_areas: &[f64],
    tpe_area_rad: f64,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_axis("stim_areas", stim_areas)?;
    if stim_areas[0] < 0.0 {
        return Err(Error::config("stim_areas", "pulse areas must be >= 0"));
    }
    let cells: Vec<Cell> = stim_areas
        .iter()
        .map(|&s| Cell { tpe_area_rad, stim_area_rad: s, delay_ps: sim.params().delay_ps })
        .collect();
    Ok(SweepResult {
        kind: SweepKind::StimArea,
        scheme: Scheme::Stix,
        model: sim.kind(),
        axis1: stim_areas.to_vec(),
        axis2: None,
        rows: run_cells(sim, cal, &cells, opts)?,
        calibration: *cal,
        params: sim.params().clone(),
    })
}

/// Scans the delay of the stimulating π pulse (negative values place it
/// before the TPE pulse). The model (full or QD-only) is the one `sim` was
/// built for.
pub fn sweep_delay(
    sim: &Simulator,
    cal: &CalibrationInfo,
    delays_ps: &[f64],
    tpe_area_rad: f64,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_axis("delays", delays_ps)?;
    let cells: Vec<Cell> = delays_ps
        .iter()
        .map(|&d| Cell { tpe_area_rad, stim_area_rad: cal.stim_pi_area, delay_ps: d })
        .collect();
    Ok(SweepResult {
        kind: SweepKind::Delay,
        scheme: Scheme::Stix,
        model: sim.kind(),
        axis1: delays_ps.to_vec(),
        axis2: None,
        rows: run_cells(sim, cal, &cells, opts)?,
        calibration: *cal,
        params: sim.params().clone(),
    })
}

/// Cartesian product of delays and TPE areas; rows are ordered by delay,
/// then area.
pub fn map_area_delay(
    sim: &Simulator,
    cal: &CalibrationInfo,
    areas_pi: &[f64],
    delays_ps: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_axis("areas", areas_pi)?;
    check_axis("delays", delays_ps)?;
    if areas_pi[0] < 0.0 {
        return Err(Error::config("areas", "pulse areas must be >= 0"));
    }
    let cells: Vec<Cell> = delays_ps
        .iter()
        .flat_map(|&d| {
            areas_pi.iter().map(move |&a| Cell {
                tpe_area_rad: a * cal.pi_area,
                stim_area_rad: cal.stim_pi_area,
                delay_ps: d,
            })
        })
        .collect();
    Ok(SweepResult {
        kind: SweepKind::AreaDelayMap,
        scheme: Scheme::Stix,
        model: sim.kind(),
        axis1: delays_ps.to_vec(),
        axis2: Some(areas_pi.to_vec()),
        rows: run_cells(sim, cal, &cells, opts)?,
        calibration: *cal,
        params: sim.params().clone(),
    })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default TPE area grid: 51 points over [0, 2] calibrated π.
pub fn default_area_grid() -> Vec<f64> {
    linspace(0.0, 2.0, 51)
}

/// Default delay grid: −10 to 40 ps in 1 ps steps.
pub fn default_delay_grid() -> Vec<f64> {
    (-10..=40).map(f64::from).collect()
}
