//! Gaussian fits of coincidence peaks for `g²(0)` and two-photon interference.

use serde::{Deserialize, Serialize};

use super::data::CoincidenceHistogram;
use super::fit::curve_fit;
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    /// Nominal position the fit window was centred on (ns).
    pub nominal_ns: f64,
    pub amplitude: f64,
    pub center_ns: f64,
    pub sigma_ns: f64,
    /// Peak area in counts·ns.
    pub area: f64,
    pub area_sigma: f64,
    pub residual_rms: f64,
}

/// Area-normalised Gaussian with parameters `[area, centre, sigma]`.
pub fn gaussian(x: f64, p: &[f64], g: &mut [f64]) -> f64 {
    let (area, c, s) = (p[0], p[1], p[2]);
    let u = (x - c) / s;
    let e = (-0.5 * u * u).exp() / (s * SQRT_2PI);
    let y = area * e;
    g[0] = e;
    g[1] = y * u / s;
    g[2] = y * (u * u - 1.0) / s;
    y
}

/// Fits one Gaussian to the bins within `window / 2` of `nominal_ns`.
/// An empty window yields a zero-area peak.
pub fn fit_gaussian_peak(hist: &CoincidenceHistogram, nominal_ns: f64, window_ns: f64) -> Result<GaussianPeak> {
    let (x, y): (Vec<f64>, Vec<f64>) = hist
        .delay_ns
        .iter()
        .zip(&hist.counts)
        .filter(|(t, _)| (**t - nominal_ns).abs() <= 0.5 * window_ns)
        .map(|(&t, &c)| (t, c))
        .unzip();
    let label = |m: String| Error::Fit(format!("peak at {nominal_ns:+} ns: {m}"));
    if x.len() < 4 {
        return Err(label(format!("only {} bins inside the window", x.len())));
    }
    let total: f64 = y.iter().sum();
    let peak = y.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(GaussianPeak {
            nominal_ns,
            amplitude: 0.0,
            center_ns: nominal_ns,
            sigma_ns: f64::NAN,
            area: 0.0,
            area_sigma: 0.0,
            residual_rms: 0.0,
        });
    }
    let mean = x.iter().zip(&y).map(|(t, c)| t * c.max(0.0)).sum::<f64>() / total;
    let var = x.iter().zip(&y).map(|(t, c)| (t - mean).powi(2) * c.max(0.0)).sum::<f64>() / total;
    let bin = hist.bin_width();
    let s0 = var.sqrt().max(bin);
    let fit = curve_fit(&gaussian, &x, &y, &[peak * s0 * SQRT_2PI, mean, s0]).map_err(|e| label(e.to_string()))?;
    let (area, c, s) = (fit.params[0], fit.params[1], fit.params[2].abs());
    Ok(GaussianPeak {
        nominal_ns,
        amplitude: area / (s * SQRT_2PI),
        center_ns: c,
        sigma_ns: s,
        area,
        area_sigma: fit.sigmas[0],
        residual_rms: fit.residual_rms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakAnalysis {
    pub center: GaussianPeak,
    pub sides: Vec<GaussianPeak>,
    pub side_area_mean: f64,
    /// Centre area over mean side area: the `g²(0)` estimate.
    pub ratio: f64,
    pub ratio_sigma: f64,
}

/// Fits the zero-delay peak and the side peaks at ±spacing and ±2·spacing.
pub fn fit_coincidence_peaks(hist: &CoincidenceHistogram, spacing_ns: f64, window_ns: f64) -> Result<PeakAnalysis> {
    hist.validate()?;
    if !(spacing_ns > 0.0 && window_ns > 0.0) {
        return Err(Error::Domain("peak spacing and window must be positive".into()));
    }
    if window_ns > spacing_ns {
        return Err(Error::Domain(format!("window {window_ns} ns overlaps peaks spaced {spacing_ns} ns apart")));
    }
    let center = fit_gaussian_peak(hist, 0.0, window_ns)?;
    let sides = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| fit_gaussian_peak(hist, k * spacing_ns, window_ns))
        .collect::<Result<Vec<_>>>()?;
    let side_area_mean = sides.iter().map(|p| p.area).sum::<f64>() / sides.len() as f64;
    if !(side_area_mean > 0.0) {
        return Err(Error::Fit("side peaks have no area; cannot normalise".into()));
    }
    let side_sigma = sides.iter().map(|p| p.area_sigma.powi(2)).sum::<f64>().sqrt() / sides.len() as f64;
    let ratio = center.area / side_area_mean;
    let ratio_sigma = if center.area == 0.0 {
        center.area_sigma / side_area_mean
    } else {
        ratio.abs() * ((center.area_sigma / center.area).powi(2) + (side_sigma / side_area_mean).powi(2)).sqrt()
    };
    Ok(PeakAnalysis { center, sides, side_area_mean, ratio, ratio_sigma })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomReport {
    pub parallel: PeakAnalysis,
    pub orthogonal: PeakAnalysis,
    /// `1 − r_∥ / r_⊥` with `r` the side-normalised zero-delay peak area.
    pub visibility: f64,
    pub visibility_sigma: f64,
}

pub fn hom_visibility(
    parallel: &CoincidenceHistogram,
    orthogonal: &CoincidenceHistogram,
    spacing_ns: f64,
    window_ns: f64,
) -> Result<HomReport> {
    let par = fit_coincidence_peaks(parallel, spacing_ns, window_ns)?;
    let ort = fit_coincidence_peaks(orthogonal, spacing_ns, window_ns)?;
    if !(ort.ratio > 0.0) {
        return Err(Error::Fit("orthogonal zero-delay peak has no area".into()));
    }
    let q = par.ratio / ort.ratio;
    let rel = if par.ratio > 0.0 { (par.ratio_sigma / par.ratio).powi(2) } else { 0.0 }
        + (ort.ratio_sigma / ort.ratio).powi(2);
    let sigma = if par.ratio > 0.0 { q * rel.sqrt() } else { par.ratio_sigma / ort.ratio };
    Ok(HomReport { visibility: 1.0 - q, visibility_sigma: sigma, parallel: par, orthogonal: ort })
}

#[cfg(test)]
mod tests {
    use super::super::data::synthetic_coincidences;
    use super::*;

    #[test]
    fn zero_center_gives_zero_ratio() {
        let h = synthetic_coincidences(12.5, 1000.0, 0.0, 0.4, 0.05, 0.0, 3);
        let r = fit_coincidence_peaks(&h, 12.5, 8.0).unwrap();
        assert!(r.ratio.abs() < 1e-12, "{}", r.ratio);
    }

    #[test]
    fn equal_peaks_give_unit_ratio() {
        let h = synthetic_coincidences(12.5, 1000.0, 1.0, 0.4, 0.05, 0.0, 3);
        let r = fit_coincidence_peaks(&h, 12.5, 8.0).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-9, "{}", r.ratio);
        assert!((r.center.sigma_ns - 0.4).abs() < 1e-9);
    }

    #[test]
    fn hom_visibility_of_known_ratio() {
        let par = synthetic_coincidences(12.5, 1000.0, 0.05, 0.4, 0.05, 0.0, 1);
        let ort = synthetic_coincidences(12.5, 1000.0, 0.5, 0.4, 0.05, 0.0, 1);
        let r = hom_visibility(&par, &ort, 12.5, 6.0).unwrap();
        assert!((r.visibility - 0.9).abs() < 1e-9);
    }

    #[test]
    fn overlapping_window_is_rejected() {
        let h = synthetic_coincidences(12.5, 1000.0, 0.1, 0.4, 0.05, 0.0, 1);
        assert!(fit_coincidence_peaks(&h, 12.5, 20.0).is_err());
    }
}
