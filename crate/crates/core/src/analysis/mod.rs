//! Measurement-side analysis: interferometer visibility, purity fraction and
//! photon-number coherence reconstruction, blinking fits, coincidence-peak
//! fits and the waveplate phase shifter.

pub mod data;
pub mod fit;
pub mod peaks;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{BlinkingHistogram, CoincidenceHistogram, DetectorTrace, LambdaPoint};
pub use fit::{curve_fit, FitOutcome};
pub use peaks::{fit_coincidence_peaks, fit_gaussian_peak, hom_visibility, GaussianPeak, HomReport, PeakAnalysis};

/// Percentiles used as the robust minimum and maximum of a detector trace.
pub const ROBUST_PERCENTILES: (f64, f64) = (2.0, 98.0);

/// `(N_max − N_min) / (N_max + N_min)`.
pub fn visibility(n_max: f64, n_min: f64) -> Result<f64> {
    let s = n_max + n_min;
    if !(s > 0.0) {
        return Err(Error::Domain("visibility undefined: N_max + N_min = 0".into()));
    }
    Ok((n_max - n_min) / s)
}

/// Ideal interferometer visibility of a photon state, `|ρ01|² / ρ11`.
pub fn ideal_visibility(rho01_abs: f64, rho11: f64) -> Result<f64> {
    if !(rho11 > 0.0) {
        return Err(Error::Domain(format!("ideal visibility needs rho11 > 0, got {rho11}")));
    }
    Ok(rho01_abs * rho01_abs / rho11)
}

/// Linear-interpolated percentile of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub v1: f64,
    pub v2: f64,
    pub v_mean: f64,
    pub raw_v1: f64,
    pub raw_v2: f64,
    pub raw_v_mean: f64,
}

fn channel_visibility(counts: &[f64]) -> Result<(f64, f64)> {
    let (lo, hi) = ROBUST_PERCENTILES;
    let robust = visibility(percentile(counts, hi), percentile(counts, lo))?;
    let max = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = counts.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((robust, visibility(max, min)?))
}

/// Visibility of both interferometer outputs and their mean.
pub fn visibility_from_trace(trace: &DetectorTrace) -> Result<VisibilityReport> {
    trace.validate()?;
    let (v1, raw_v1) = channel_visibility(&trace.counts_1)?;
    let (v2, raw_v2) = channel_visibility(&trace.counts_2)?;
    Ok(VisibilityReport {
        v1,
        v2,
        v_mean: 0.5 * (v1 + v2),
        raw_v1,
        raw_v2,
        raw_v_mean: 0.5 * (raw_v1 + raw_v2),
    })
}

/// Straight-line fit of visibility against vacuum population,
/// `v = λ² √V_HOM ρ00 + v0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub lambda_sigma: f64,
    pub slope: f64,
    pub slope_sigma: f64,
    pub v0: f64,
    pub v0_sigma: f64,
    pub v_hom: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub warnings: Vec<String>,
}

pub fn fit_lambda(points: &[LambdaPoint], v_hom: f64) -> Result<LambdaFit> {
    if points.len() < 3 {
        return Err(Error::Input(format!("lambda fit needs at least 3 points, got {}", points.len())));
    }
    if !(v_hom > 0.0 && v_hom <= 1.0) {
        return Err(Error::Domain(format!("V_HOM must lie in (0, 1], got {v_hom}")));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.rho00).sum::<f64>() / n;
    let my = points.iter().map(|p| p.v).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.rho00 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.rho00 - mx) * (p.v - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all rho00 values are equal; slope undefined".into()));
    }
    let slope = sxy / sxx;
    let v0 = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.v - v0 - slope * p.rho00).powi(2)).sum();
    let s2 = ssr / (n - 2.0);
    let slope_sigma = (s2 / sxx).sqrt();
    let v0_sigma = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();

    // Round-off from exactly flat data is not a physical negative slope.
    let slope = if slope.abs() < 1e-12 * (my.abs() + 1.0) { 0.0 } else { slope };
    if slope < 0.0 {
        return Err(Error::Fit(format!("lambda undefined: negative slope {slope:.6e}")));
    }
    let root_v = v_hom.sqrt();
    let mut lambda = (slope / root_v).sqrt();
    let lambda_sigma = if lambda > 0.0 { slope_sigma / (2.0 * lambda * root_v) } else { f64::INFINITY };
    let mut warnings = Vec::new();
    if lambda > 1.0 {
        warnings.push(format!("lambda {lambda:.4} exceeds 1; clamped"));
        lambda = 1.0;
    }
    Ok(LambdaFit {
        lambda,
        lambda_sigma,
        slope,
        slope_sigma,
        v0,
        v0_sigma,
        v_hom,
        residual_rms: (ssr / n).sqrt(),
        points: points.len(),
        warnings,
    })
}

/// Vacuum population estimated from photon counts normalized to π power.
pub fn rho00_from_normalized_counts(n: f64) -> f64 {
    1.0 - n
}

/// Photon-number coherence `λ √(ρ11 (1 − ρ11))`.
pub fn pnc_exp(lambda: f64, rho11: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if !(0.0..=1.0).contains(&rho11) {
        return Err(Error::Domain(format!("rho11 must lie in [0, 1], got {rho11}")));
    }
    Ok(lambda * (rho11 * (1.0 - rho11)).sqrt())
}

/// Quantum efficiency from the long-timescale `g²(0)`.
pub fn qe_from_g2(g2_lt_zero: f64) -> Result<f64> {
    if !(g2_lt_zero >= 1.0) {
        return Err(Error::Domain(format!(
            "long-timescale g2(0) must be >= 1 for a quantum efficiency in (0, 1], got {g2_lt_zero}"
        )));
    }
    Ok(1.0 / g2_lt_zero)
}

/// `A exp(−|τ/τ_b|) + B` fit to a long-timescale correlation histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlinkingFit {
    pub a: f64,
    pub b: f64,
    pub tau_blinking_ms: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub tau_sigma_ms: f64,
    pub g2_lt_zero: f64,
    pub qe: f64,
    pub residual_rms: f64,
    pub evaluations: usize,
}

pub fn blinking_model(tau: f64, p: &[f64], g: &mut [f64]) -> f64 {
    let e = (-(tau / p[2]).abs()).exp();
    g[0] = e;
    g[1] = 1.0;
    g[2] = p[0] * e * tau.abs() / (p[2] * p[2].abs());
    p[0] * e + p[1]
}

pub fn fit_blinking(hist: &BlinkingHistogram) -> Result<BlinkingFit> {
    hist.validate()?;
    if hist.delay_ms.len() < 10 {
        return Err(Error::Input(format!("blinking fit needs at least 10 bins, got {}", hist.delay_ms.len())));
    }
    let abs_max = hist.delay_ms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let tail: Vec<f64> = hist
        .delay_ms
        .iter()
        .zip(&hist.g2)
        .filter(|(t, _)| t.abs() >= 0.75 * abs_max)
        .map(|(_, &g)| g)
        .collect();
    let b0 = percentile(&tail, 50.0);
    let (i_peak, &peak) = hist
        .g2
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("validated non-empty");
    let a0 = peak - b0;
    if !(a0 > 0.0) {
        return Err(Error::Fit("no bunching peak above the tail level".into()));
    }
    let t_peak = hist.delay_ms[i_peak];
    let half = hist
        .delay_ms
        .iter()
        .zip(&hist.g2)
        .filter(|(_, &g)| g - b0 >= 0.5 * a0)
        .fold(0.0f64, |m, (t, _)| m.max((t - t_peak).abs()));
    let tau0 = if half > 0.0 { half / std::f64::consts::LN_2 } else { abs_max / 10.0 };

    let fit = curve_fit(&blinking_model, &hist.delay_ms, &hist.g2, &[a0, b0, tau0])?;
    let (a, b, tau) = (fit.params[0], fit.params[1], fit.params[2].abs());
    if a < 0.0 || b < 0.0 {
        return Err(Error::Fit(format!("fit left the physical domain: A = {a:.4}, B = {b:.4}")));
    }
    let g2 = a + b;
    Ok(BlinkingFit {
        a,
        b,
        tau_blinking_ms: tau,
        a_sigma: fit.sigmas[0],
        b_sigma: fit.sigmas[1],
        tau_sigma_ms: fit.sigmas[2],
        g2_lt_zero: g2,
        qe: qe_from_g2(g2)?,
        residual_rms: fit.residual_rms,
        evaluations: fit.evaluations,
    })
}

pub type Jones = Matrix2<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Quarter-wave plate with its fast axis at `phi`.
pub fn quarter_wave_plate(phi: f64) -> Jones {
    let (s, co) = phi.sin_cos();
    let phase = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
    let off = c(1.0, -1.0) * (s * co);
    Jones::new(c(co * co, s * s), off, off, c(s * s, co * co)) * phase
}

/// Half-wave plate with its fast axis at `theta`.
pub fn half_wave_plate(theta: f64) -> Jones {
    let (s2, c2) = (2.0 * theta).sin_cos();
    Jones::new(c(c2, 0.0), c(s2, 0.0), c(s2, 0.0), c(-c2, 0.0)) * c(0.0, -1.0)
}

/// `QWP(π/4) · HWP(θ) · QWP(−π/4)`: a variable phase shifter.
pub fn phase_shifter_jones(theta: f64) -> Jones {
    use std::f64::consts::FRAC_PI_4;
    quarter_wave_plate(FRAC_PI_4) * half_wave_plate(theta) * quarter_wave_plate(-FRAC_PI_4)
}
