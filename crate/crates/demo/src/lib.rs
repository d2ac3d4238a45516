//! Browser bindings: single runs, TPE-area scans and delay maps.
//!
//! Every entry point takes and returns JSON strings so the page needs no
//! generated type definitions.

use serde::{Deserialize, Serialize};
use stix_core::dynamics::{integrated_metrics, IntegrationGrid, ModelKind, Simulator};
use stix_core::model::{Pulses, SystemParams};
use stix_core::sweeps::{linspace, map_area_delay, sweep_tpe_area, CalibrationInfo, Scheme, SweepOptions};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Request {
    model: ModelKind,
    scheme: Scheme,
    /// TPE area in units of π.
    tpe_area_pi: f64,
    delay_ps: f64,
    points: usize,
    delay_min_ps: f64,
    delay_max_ps: f64,
    kappa_per_ps: f64,
    gamma_per_ps: f64,
}

impl Default for Request {
    fn default() -> Self {
        let p = SystemParams::experiment();
        Self {
            model: ModelKind::QdOnly,
            scheme: Scheme::Stix,
            tpe_area_pi: 1.0,
            delay_ps: p.delay_ps,
            points: 41,
            delay_min_ps: -10.0,
            delay_max_ps: 30.0,
            kappa_per_ps: p.kappa_per_ps,
            gamma_per_ps: p.gamma_per_ps,
        }
    }
}

impl Request {
    fn parse(json: &str) -> Result<Self, JsValue> {
        serde_json::from_str(json).map_err(err)
    }

    fn params(&self) -> SystemParams {
        SystemParams {
            delay_ps: self.delay_ps,
            kappa_per_ps: self.kappa_per_ps,
            gamma_per_ps: self.gamma_per_ps,
            ..SystemParams::experiment()
        }
    }

    fn simulator(&self) -> Result<Simulator, JsValue> {
        if !(2..=201).contains(&self.points) {
            return Err(JsValue::from_str("points must lie in 2..=201"));
        }
        Simulator::new(&self.params(), self.model).map_err(err)
    }
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json(v: &impl Serialize) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(err)
}

#[derive(Serialize)]
struct Trajectory {
    t_ps: Vec<f64>,
    pop_g: Vec<f64>,
    pop_xh: Vec<f64>,
    pop_xv: Vec<f64>,
    pop_xx: Vec<f64>,
    /// `|ρ01|` of the H mode for the full model, `|ρ_{g,xH}|` otherwise.
    coherence: Vec<f64>,
    xh_yield: f64,
    pnc: f64,
}

/// Time evolution for one pulse sequence. Samples are thinned to at most
/// about 1500 points.
#[wasm_bindgen]
pub fn trajectory(request_json: &str) -> Result<String, JsValue> {
    let req = Request::parse(request_json)?;
    let sim = req.simulator()?;
    let p = sim.params();
    let tpe = p.tpe_pulse(req.tpe_area_pi * std::f64::consts::PI).map_err(err)?;
    let stim = match req.scheme {
        Scheme::Rex => None,
        Scheme::Stix => Some(p.stim_pulse(std::f64::consts::PI).map_err(err)?),
    };
    let grid = IntegrationGrid::default();
    let traj = sim.evolve(&Pulses::new(Some(tpe), stim).map_err(err)?, &grid).map_err(err)?;
    let m = integrated_metrics(&traj, p);
    let stride = traj.samples.len().div_ceil(1500).max(1);
    let kept: Vec<_> = traj.samples.iter().step_by(stride).collect();
    let full = req.model == ModelKind::Full;
    to_json(&Trajectory {
        t_ps: kept.iter().map(|s| s.t).collect(),
        pop_g: kept.iter().map(|s| s.pop[0]).collect(),
        pop_xh: kept.iter().map(|s| s.pop[1]).collect(),
        pop_xv: kept.iter().map(|s| s.pop[2]).collect(),
        pop_xx: kept.iter().map(|s| s.pop[3]).collect(),
        coherence: kept.iter().map(|s| if full { s.pnc() } else { s.coh_gxh }).collect(),
        xh_yield: if full { m.occ_calc } else { m.xh_yield_qdonly },
        pnc: if full { m.pnc_calc } else { m.pnc_qdonly },
    })
}

#[derive(Serialize)]
struct AreaScan {
    area_pi: Vec<f64>,
    xh_yield: Vec<f64>,
    pnc: Vec<f64>,
}

/// X_H yield and photon-number coherence against the TPE area (0 to 2π).
#[wasm_bindgen]
pub fn area_scan(request_json: &str) -> Result<String, JsValue> {
    let req = Request::parse(request_json)?;
    let sim = req.simulator()?;
    let areas = linspace(0.0, 2.0, req.points);
    let r = sweep_tpe_area(&sim, &CalibrationInfo::nominal(), &areas, req.scheme, &SweepOptions::default())
        .map_err(err)?;
    to_json(&AreaScan {
        area_pi: areas,
        xh_yield: r.rows.iter().map(|row| row.xh_yield(req.model)).collect(),
        pnc: r.rows.iter().map(|row| row.pnc(req.model)).collect(),
    })
}

#[derive(Serialize)]
struct DelayMap {
    area_pi: Vec<f64>,
    delay_ps: Vec<f64>,
    /// Row-major, one row per delay.
    xh_yield: Vec<Vec<f64>>,
    pnc: Vec<Vec<f64>>,
}

/// X_H yield and coherence over TPE area × stimulating-pulse delay.
#[wasm_bindgen]
pub fn delay_map(request_json: &str) -> Result<String, JsValue> {
    let req = Request::parse(request_json)?;
    let sim = req.simulator()?;
    if !(req.delay_max_ps > req.delay_min_ps) {
        return Err(JsValue::from_str("delay_max_ps must exceed delay_min_ps"));
    }
    let areas = linspace(0.0, 2.0, req.points);
    let delays = linspace(req.delay_min_ps, req.delay_max_ps, req.points);
    let r = map_area_delay(&sim, &CalibrationInfo::nominal(), &areas, &delays, &SweepOptions::default())
        .map_err(err)?;
    let rows = |f: &dyn Fn(&stix_core::sweeps::SweepRow) -> f64| -> Vec<Vec<f64>> {
        r.rows.chunks(areas.len()).map(|c| c.iter().map(f).collect()).collect()
    };
    to_json(&DelayMap {
        xh_yield: rows(&|row| row.xh_yield(req.model)),
        pnc: rows(&|row| row.pnc(req.model)),
        area_pi: areas.clone(),
        delay_ps: delays,
    })
}
