//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use stix_core::analysis::data::{
    symmetric_grid, synthetic_blinking, synthetic_coincidences, synthetic_lambda_sweep, LAMBDA_REX, LAMBDA_STIX,
};
use stix_core::analysis::{fit_blinking, fit_coincidence_peaks, fit_lambda, qe_from_g2, LambdaPoint};
use stix_core::dynamics::{rhs_oracle_check, IntegrationGrid, ModelKind, Simulator, TrajectoryRecord};
use stix_core::hilbert::{Operator, CAUCHY_SCHWARZ_TOL, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL};
use stix_core::model::{PulseParams, PulseRole, Pulses, SystemParams};
use stix_core::sweeps::{
    calibrate_pi, linspace, map_area_delay, sweep_delay, sweep_tpe_area, CalibrationInfo,
    CalibrationOptions, Scheme, SweepOptions, SweepResult,
};

type Check = Result<String, String>;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn opts() -> SweepOptions {
    SweepOptions { jobs: jobs(), ..SweepOptions::default() }
}

struct Shared {
    full: Simulator,
    cal: CalibrationInfo,
    rex: SweepResult,
    stix: SweepResult,
    stix_time: Duration,
}

fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let full = Simulator::new(&SystemParams::table1(), ModelKind::Full).expect("table1 model");
        let cal = calibrate_pi(&full, &CalibrationOptions::default()).expect("calibration");
        let areas = linspace(0.0, 2.0, 51);
        let rex = sweep_tpe_area(&full, &cal, &areas, Scheme::Rex, &opts()).expect("reX sweep");
        let start = Instant::now();
        let stix = sweep_tpe_area(&full, &cal, &areas, Scheme::Stix, &opts()).expect("stiX sweep");
        let stix_time = start.elapsed();
        Shared { full, cal, rex, stix, stix_time }
    })
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pulses(p: &SystemParams, tpe: f64, stim: f64) -> Pulses {
    let stim = (stim > 0.0).then(|| p.stim_pulse(stim).unwrap());
    Pulses::new(Some(p.tpe_pulse(tpe).unwrap()), stim).unwrap()
}

fn invariant_violation(t: &TrajectoryRecord) -> Option<String> {
    let checks = [
        ("trace", t.max_trace_error(), TRACE_TOL),
        ("hermiticity", t.max_hermiticity_error(), HERMITICITY_TOL),
        ("negativity", -t.min_eigenvalue(), POSITIVITY_TOL),
        ("cauchy-schwarz", t.max_cauchy_schwarz_excess(), CAUCHY_SCHWARZ_TOL),
    ];
    checks
        .iter()
        .find(|(_, v, tol)| !(*v < *tol))
        .map(|(name, v, tol)| format!("{name} {v:.3e} >= {tol:.0e}"))
}

fn criterion_1() -> Check {
    let s = shared();
    let p = s.full.params();
    let mut slowest = Duration::ZERO;
    let mut runs = 0;
    for area_pi in [0.25, 0.5, 1.0, 1.5, 2.0] {
        for stim in [0.0, s.cal.stim_pi_area] {
            let start = Instant::now();
            let t = s
                .full
                .evolve(&pulses(p, area_pi * s.cal.pi_area, stim), &IntegrationGrid::default())
                .map_err(|e| e.to_string())?;
            slowest = slowest.max(start.elapsed());
            runs += 1;
            if let Some(v) = invariant_violation(&t) {
                return Err(format!("area {area_pi} pi, stim {stim:.3}: {v}"));
            }
            if t.checkpoints.is_empty() {
                return Err("no positivity checkpoints recorded".into());
            }
        }
    }
    ensure(
        slowest < Duration::from_secs(10),
        format!("{runs} runs within tolerances, slowest {:.2} s", slowest.as_secs_f64()),
    )
}

fn random_state(dim: usize, seed: u64) -> Operator {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = Operator::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

/// Undamped coherences of a random state oscillate at up to ~20 rad/ps.
const ORACLE_STEP_PS: f64 = 0.0025;

fn criterion_2() -> Check {
    let base = SystemParams::table1();
    let configs = [
        ("cavity decay", SystemParams { coupling_mev: 0.0, gamma_per_ps: 0.0, ..base.clone() }),
        ("QD decay", SystemParams { coupling_mev: 0.0, kappa_per_ps: 0.0, gamma_per_ps: 0.05, ..base.clone() }),
        ("full static", base.clone()),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, (name, p)) in configs.iter().enumerate() {
        let rho = random_state(36, 11 + i as u64);
        let err = rhs_oracle_check(p, &rho, 20.0, ORACLE_STEP_PS).map_err(|e| e.to_string())?;
        worst = worst.max(err);
        parts.push(format!("{name} {err:.1e}"));
    }
    ensure(worst < 1e-6, format!("relative deviation over 20 ps: {}", parts.join(", ")))
}

fn criterion_3() -> Check {
    let p = SystemParams {
        delta_xl_mev: 0.0,
        delta_stim_mev: 0.0,
        binding_energy_mev: 20.0,
        coupling_mev: 0.0,
        kappa_per_ps: 0.0,
        gamma_per_ps: 0.0,
        delay_ps: 0.0,
        n_max: 1,
        resonant_tpe: false,
        ..SystemParams::table1()
    };
    let sim = Simulator::new(&p, ModelKind::Full).map_err(|e| e.to_string())?;
    let grid = IntegrationGrid { steps_per_sigma: 400.0, free_step_ps: 0.003, ..IntegrationGrid::drive_only() };
    let xh_after = |area: f64| -> Result<f64, String> {
        let pulse = PulseParams::new(area, p.sigma_stim_ps(), 0.0, PulseRole::Stim).unwrap();
        let t = sim
            .evolve(&Pulses::new(None, Some(pulse)).unwrap(), &grid)
            .map_err(|e| e.to_string())?;
        Ok(t.samples.last().unwrap().pop[1])
    };
    let inv = xh_after(PI)?;
    let mut worst_formula = 0.0f64;
    for theta in [0.5 * PI, 0.75 * PI, 1.5 * PI] {
        worst_formula = worst_formula.max((xh_after(theta)? - (0.5 * theta).sin().powi(2)).abs());
    }
    ensure(
        inv > 0.999 && worst_formula < 1e-3,
        format!("inversion {inv:.6}, max |P - sin^2(theta/2)| {worst_formula:.1e}"),
    )
}

fn criterion_4() -> Check {
    let s = shared();
    let rex_max = s.rex.rows.iter().map(|r| r.metrics.pnc_calc).fold(0.0, f64::max);
    let p = s.full.params();
    let t = s
        .full
        .evolve(&pulses(p, s.cal.half_pi_area, s.cal.stim_pi_area), &IntegrationGrid::default())
        .map_err(|e| e.to_string())?;
    let stix_half = stix_core::dynamics::integrated_metrics(&t, p).pnc_calc;
    ensure(
        rex_max < stix_half / 5.0,
        format!("max pnc reX {rex_max:.4} vs stiX at pi/2 {stix_half:.4} (bound {:.4})", stix_half / 5.0),
    )
}

/// Local extrema `(x, is_max)` refined by a parabola through the three
/// surrounding points.
fn local_extrema(x: &[f64], y: &[f64]) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for i in 1..x.len() - 1 {
        let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
        let is_max = b > a && b >= c;
        let is_min = b < a && b <= c;
        if is_max || is_min {
            let h = x[i + 1] - x[i];
            let denom = a - 2.0 * b + c;
            let shift = if denom != 0.0 { 0.5 * h * (a - c) / denom } else { 0.0 };
            out.push((x[i] + shift, is_max));
        }
    }
    out
}

fn near(extrema: &[(f64, bool)], target: f64, want_max: bool) -> Option<f64> {
    extrema
        .iter()
        .filter(|(x, m)| *m == want_max && (x - target).abs() <= 0.1 * target)
        .map(|(x, _)| *x)
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

fn criterion_5() -> Check {
    let s = shared();
    let x: Vec<f64> = s.stix.rows.iter().map(|r| r.tpe_area_pi).collect();
    let pnc: Vec<f64> = s.stix.rows.iter().map(|r| r.metrics.pnc_calc).collect();
    let ext = local_extrema(&x, &pnc);
    let half = s.cal.half_pi_area / s.cal.pi_area;
    let three_half = s.cal.three_half_pi_area.ok_or("3pi/2 not calibrated")? / s.cal.pi_area;
    let found = [near(&ext, half, true), near(&ext, 1.0, false), near(&ext, three_half, true)];

    let defined: Vec<(f64, f64)> =
        s.stix.rows.iter().filter(|r| !r.metrics.v_undefined).map(|r| (r.tpe_area_pi, r.metrics.v_calc)).collect();
    let (vx, vy): (Vec<f64>, Vec<f64>) = defined.into_iter().unzip();
    let v_min = near(&local_extrema(&vx, &vy), 1.0, false);

    let fmt = |o: Option<f64>| o.map_or("none".to_string(), |v| format!("{v:.3}"));
    let detail = format!(
        "pnc max near {half:.3}: {}, min near 1: {}, max near {three_half:.3}: {}; v min near 1: {}; sweep {:.1} s",
        fmt(found[0]),
        fmt(found[1]),
        fmt(found[2]),
        fmt(v_min),
        s.stix_time.as_secs_f64()
    );
    ensure(found.iter().all(Option::is_some) && v_min.is_some() && s.stix_time < Duration::from_secs(300), detail)
}

fn criterion_6() -> Check {
    let s = shared();
    let at_pi = |r: &SweepResult| {
        r.rows.iter().find(|row| row.tpe_area_pi == 1.0).map(|row| row.metrics.occ_calc).ok_or("no pi row")
    };
    let (stix, rex) = (at_pi(&s.stix)?, at_pi(&s.rex)?);
    let ratio = stix / rex;
    ensure((1.5..=2.05).contains(&ratio), format!("occ stiX {stix:.4} / reX {rex:.4} = {ratio:.3}"))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_7() -> Check {
    let s = shared();
    let d = sweep_delay(&s.full, &s.cal, &[-7.0, 7.0], s.cal.pi_area, &opts()).map_err(|e| e.to_string())?;
    let (minus, plus) = (d.rows[0].metrics.occ_calc, d.rows[1].metrics.occ_calc);

    let areas = linspace(0.0, 2.0, 21);
    let delays = linspace(-10.0, 40.0, 21);
    let full = map_area_delay(&s.full, &s.cal, &areas, &delays, &opts()).map_err(|e| e.to_string())?;
    let qd = Simulator::new(s.full.params(), ModelKind::QdOnly).map_err(|e| e.to_string())?;
    let qd_map = map_area_delay(&qd, &s.cal, &areas, &delays, &opts()).map_err(|e| e.to_string())?;

    let best = full
        .rows
        .iter()
        .max_by(|a, b| a.metrics.occ_calc.total_cmp(&b.metrics.occ_calc))
        .ok_or("empty map")?;
    let peak_ok = (0.8..=1.2).contains(&best.tpe_area_pi) && best.delay_ps > 0.0 && best.delay_ps <= 10.0;
    let full_pnc: Vec<f64> = full.rows.iter().map(|r| r.metrics.pnc_calc).collect();
    let qd_pnc: Vec<f64> = qd_map.rows.iter().map(|r| r.metrics.pnc_qdonly).collect();
    let r = pearson(&full_pnc, &qd_pnc);
    ensure(
        plus > minus && peak_ok && r > 0.9,
        format!(
            "yield +7 ps {plus:.4} vs -7 ps {minus:.4}; map max {:.4} at {:.2} pi, {:.1} ps; pnc map r = {r:.4}",
            best.metrics.occ_calc, best.tpe_area_pi, best.delay_ps
        ),
    )
}

fn criterion_8() -> Check {
    let cases = [(2.865, 0.349), (2.247, 0.445), (2.184, 0.458)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (g2, want) in cases {
        let qe = qe_from_g2(g2).map_err(|e| e.to_string())?;
        ok &= (qe - want).abs() <= 1e-3;
        parts.push(format!("qe({g2}) = {qe:.4}"));
    }
    ensure(ok, parts.join(", "))
}

fn to_points(rows: &[(f64, f64, f64)]) -> Vec<LambdaPoint> {
    rows.iter().map(|&(_, n, v)| LambdaPoint { rho00: 1.0 - n, v }).collect()
}

fn criterion_9() -> Check {
    let areas: Vec<f64> = linspace(0.1, 0.9, 17);
    let mut worst = 0.0f64;
    for (lambda, v_hom, v0) in [(0.73, 0.95, 0.02), (0.28, 0.58, 0.005), (1.0, 1.0, 0.0), (0.05, 0.8, 0.1)] {
        let rows = synthetic_lambda_sweep(lambda, v_hom, v0, &areas, 0.0, 1);
        let fit = fit_lambda(&to_points(&rows), v_hom).map_err(|e| e.to_string())?;
        worst = worst.max((fit.lambda - lambda).abs());
    }
    let stix = fit_lambda(&LAMBDA_STIX.points().map_err(|e| e.to_string())?, LAMBDA_STIX.v_hom)
        .map_err(|e| e.to_string())?;
    let rex = fit_lambda(&LAMBDA_REX.points().map_err(|e| e.to_string())?, LAMBDA_REX.v_hom)
        .map_err(|e| e.to_string())?;
    ensure(
        worst < 1e-9 && (stix.lambda - 0.73).abs() < 0.05 && (rex.lambda - 0.28).abs() < 0.05,
        format!(
            "noiseless max error {worst:.1e}; bundled stiX {:.4}({:.4}), reX {:.4}({:.4})",
            stix.lambda, stix.lambda_sigma, rex.lambda, rex.lambda_sigma
        ),
    )
}

fn within_sigma(value: f64, truth: f64, sigma: f64, k: f64) -> bool {
    (value - truth).abs() <= k * sigma
}

fn criterion_10() -> Check {
    let (a, b, tau) = (1.865, 1.0, 0.42);
    let delays = symmetric_grid(4.0, 401);
    let clean = fit_blinking(&synthetic_blinking(a, b, tau, &delays, 0.0, 0)).map_err(|e| e.to_string())?;
    let blink_clean = [(clean.a, a), (clean.b, b), (clean.tau_blinking_ms, tau)]
        .iter()
        .all(|(got, want)| ((got - want) / want).abs() < 1e-6);
    let noisy = fit_blinking(&synthetic_blinking(a, b, tau, &delays, 0.01, 7)).map_err(|e| e.to_string())?;
    let blink_noisy = within_sigma(noisy.a, a, noisy.a_sigma, 3.0)
        && within_sigma(noisy.b, b, noisy.b_sigma, 3.0)
        && within_sigma(noisy.tau_blinking_ms, tau, noisy.tau_sigma_ms, 3.0);

    let (spacing, side, ratio, sigma, bin) = (12.5, 1.0e5, 0.0009, 0.35, 0.02);
    let clean_peaks = fit_coincidence_peaks(&synthetic_coincidences(spacing, side, ratio, sigma, bin, 0.0, 0), spacing, 8.0)
        .map_err(|e| e.to_string())?;
    let peaks_clean = (clean_peaks.ratio - ratio).abs() < 1e-6 * ratio.max(1.0)
        && clean_peaks.sides.iter().all(|p| {
            ((p.area - side) / side).abs() < 1e-6 && ((p.sigma_ns.abs() - sigma) / sigma).abs() < 1e-6
        });
    let noisy_peaks = fit_coincidence_peaks(&synthetic_coincidences(spacing, side, ratio, sigma, bin, 0.01, 9), spacing, 8.0)
        .map_err(|e| e.to_string())?;
    let peaks_noisy = within_sigma(noisy_peaks.ratio, ratio, noisy_peaks.ratio_sigma, 3.0)
        && (noisy_peaks.ratio / ratio - 1.0).abs() < 0.1
        && noisy_peaks.sides.iter().all(|p| within_sigma(p.area, side, p.area_sigma, 3.0));

    ensure(
        blink_clean && blink_noisy && peaks_clean && peaks_noisy,
        format!(
            "blinking noiseless {blink_clean}, noisy A {:.4}({:.4}) B {:.4}({:.4}) tau {:.4}({:.4}); \
             g2 noiseless {:.3e}, noisy {:.3e}({:.1e})",
            noisy.a,
            noisy.a_sigma,
            noisy.b,
            noisy.b_sigma,
            noisy.tau_blinking_ms,
            noisy.tau_sigma_ms,
            clean_peaks.ratio,
            noisy_peaks.ratio,
            noisy_peaks.ratio_sigma
        ),
    )
}

fn csv_bytes(r: &SweepResult) -> Vec<u8> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    buf
}

fn criterion_11() -> Check {
    let s = shared();
    let areas = [0.3, 0.7, 1.0, 1.4];
    let serial = SweepOptions::default();
    let parallel = SweepOptions { jobs: 3, ..SweepOptions::default() };
    let runs: Vec<Vec<u8>> = [&serial, &serial, &parallel]
        .iter()
        .map(|o| sweep_tpe_area(&s.full, &s.cal, &areas, Scheme::Stix, o).map(|r| csv_bytes(&r)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let identical = runs.windows(2).all(|w| w[0] == w[1]);

    let p3 = SystemParams { n_max: 3, ..s.full.params().clone() };
    let sim3 = Simulator::new(&p3, ModelKind::Full).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for scheme in [Scheme::Stix, Scheme::Rex] {
        let r3 = sweep_tpe_area(&sim3, &s.cal, &[1.0], scheme, &serial).map_err(|e| e.to_string())?;
        let r2 = if scheme == Scheme::Stix { &s.stix } else { &s.rex };
        let o2 = r2.rows.iter().find(|r| r.tpe_area_pi == 1.0).ok_or("no pi row")?.metrics.occ_calc;
        worst = worst.max((r3.rows[0].metrics.occ_calc / o2 - 1.0).abs());
    }
    ensure(
        identical && worst < 0.01,
        format!("repeated and threaded sweeps byte-identical: {identical}; n_max 2 -> 3 occ change {worst:.2e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("invariants", criterion_1),
        ("oracle equivalence", criterion_2),
        ("two-level Rabi limit", criterion_3),
        ("reX/stiX PNC contrast", criterion_4),
        ("stiX extrema", criterion_5),
        ("brightness enhancement", criterion_6),
        ("delay map", criterion_7),
        ("quantum efficiency", criterion_8),
        ("lambda pipeline", criterion_9),
        ("fit round-trips", criterion_10),
        ("determinism and truncation", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail}) [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
