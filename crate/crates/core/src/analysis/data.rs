//! Measurement records, CSV readers and seeded synthetic generators.

use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two interferometer outputs binned in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrace {
    pub timestamps_s: Vec<f64>,
    pub counts_1: Vec<f64>,
    pub counts_2: Vec<f64>,
}

impl DetectorTrace {
    pub fn new(timestamps_s: Vec<f64>, counts_1: Vec<f64>, counts_2: Vec<f64>) -> Result<Self> {
        let t = Self { timestamps_s, counts_1, counts_2 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps_s.len();
        if n == 0 || self.counts_1.len() != n || self.counts_2.len() != n {
            return Err(Error::Input(format!(
                "trace columns must be non-empty and equally long ({n}, {}, {})",
                self.counts_1.len(),
                self.counts_2.len()
            )));
        }
        if self.counts_1.iter().chain(&self.counts_2).any(|c| !(*c >= 0.0)) {
            return Err(Error::Input("counts must be non-negative".into()));
        }
        Ok(())
    }
}

/// One `(ρ00, v)` pair of the purity-fraction fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub rho00: f64,
    pub v: f64,
}

/// Coincidences per delay bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub delay_ns: Vec<f64>,
    pub counts: Vec<f64>,
}

impl CoincidenceHistogram {
    pub fn new(delay_ns: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let h = Self { delay_ns, counts };
        h.validate()?;
        Ok(h)
    }

    pub fn bin_width(&self) -> f64 {
        self.delay_ns[1] - self.delay_ns[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_ns.len() < 2 || self.delay_ns.len() != self.counts.len() {
            return Err(Error::Input("histogram needs at least two bins and one count per bin".into()));
        }
        if self.counts.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Input("counts must be non-negative".into()));
        }
        let w = self.bin_width();
        if !(w > 0.0) {
            return Err(Error::Input("delay bins must increase".into()));
        }
        for (i, pair) in self.delay_ns.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - w).abs() > 1e-6 * w.max(1.0) {
                return Err(Error::Input(format!("bins are not uniform at bin {}", i + 1)));
            }
        }
        Ok(())
    }
}

/// Long-timescale second-order correlation against delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlinkingHistogram {
    pub delay_ms: Vec<f64>,
    pub g2: Vec<f64>,
}

impl BlinkingHistogram {
    pub fn new(delay_ms: Vec<f64>, g2: Vec<f64>) -> Result<Self> {
        let h = Self { delay_ms, g2 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_ms.is_empty() || self.delay_ms.len() != self.g2.len() {
            return Err(Error::Input("blinking histogram columns must be non-empty and equally long".into()));
        }
        if self.delay_ms.iter().chain(&self.g2).any(|v| !v.is_finite()) {
            return Err(Error::Input("blinking histogram contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Reads numeric columns by header name. Each entry of `columns` lists
/// accepted aliases; the first alias present is used.
pub fn read_columns<R: Read>(reader: R, columns: &[&[&str]]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("header: {e}")))?.clone();
    let idx = columns
        .iter()
        .map(|aliases| {
            aliases
                .iter()
                .find_map(|a| headers.iter().position(|h| h == *a))
                .ok_or_else(|| Error::Input(format!("missing column {:?} (header: {:?})", aliases[0], headers)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            Error::Input(format!("row {row}: {e}"))
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        for (k, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Input(format!("row {row}: column {:?}: cannot parse {field:?}", columns[k][0])))?;
            if !v.is_finite() {
                return Err(Error::Input(format!("row {row}: column {:?}: non-finite value", columns[k][0])));
            }
            out[k].push(v);
        }
    }
    Ok(out)
}

/// Columns `t_s, counts1, counts2`.
pub fn read_trace_csv<R: Read>(r: R) -> Result<DetectorTrace> {
    let mut c = read_columns(r, &[&["t_s"], &["counts1", "counts_1"], &["counts2", "counts_2"]])?;
    let (c2, c1, t) = (c.pop().unwrap(), c.pop().unwrap(), c.pop().unwrap());
    DetectorTrace::new(t, c1, c2)
}

/// Columns `delay_ns, counts`.
pub fn read_coincidence_csv<R: Read>(r: R) -> Result<CoincidenceHistogram> {
    let mut c = read_columns(r, &[&["delay_ns"], &["counts"]])?;
    let (n, d) = (c.pop().unwrap(), c.pop().unwrap());
    CoincidenceHistogram::new(d, n)
}

/// Columns `delay_ms, g2`.
pub fn read_blinking_csv<R: Read>(r: R) -> Result<BlinkingHistogram> {
    let mut c = read_columns(r, &[&["delay_ms"], &["g2"]])?;
    let (g, d) = (c.pop().unwrap(), c.pop().unwrap());
    BlinkingHistogram::new(d, g)
}

/// Columns `v` and either `rho00` or `norm_counts` (photon counts
/// normalized to their value at π power, giving `ρ00 ≈ 1 − N`).
pub fn read_lambda_csv<R: Read>(mut r: R) -> Result<Vec<LambdaPoint>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let direct = read_columns(text.as_bytes(), &[&["rho00"], &["v"]]);
    let (rho00, v) = match direct {
        Ok(mut c) => {
            let v = c.pop().unwrap();
            (c.pop().unwrap(), v)
        }
        Err(_) => {
            let mut c = read_columns(text.as_bytes(), &[&["norm_counts"], &["v"]])?;
            let v = c.pop().unwrap();
            (c.pop().unwrap().into_iter().map(super::rho00_from_normalized_counts).collect(), v)
        }
    };
    Ok(rho00.into_iter().zip(v).map(|(rho00, v)| LambdaPoint { rho00, v }).collect())
}

fn noisy(values: impl Iterator<Item = f64>, rel: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    values.map(|v| v + rel * v.abs() * unit.sample(rng)).collect()
}

/// `n` points evenly spaced over `[−half, half]`.
pub fn symmetric_grid(half: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1).max(1) as f64).collect()
}

/// Detector outputs `m (1 ± v cos φ)` over `n` bins of 1 ms, with
/// multiplicative Gaussian noise of relative size `noise_rel`.
pub fn synthetic_trace(v: f64, mean: f64, n: usize, period_bins: f64, noise_rel: f64, seed: u64) -> DetectorTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: Vec<f64> = (0..n).map(|i| std::f64::consts::TAU * i as f64 / period_bins).collect();
    let c1 = noisy(phase.iter().map(|p| mean * (1.0 + v * p.cos())), noise_rel, &mut rng);
    let c2 = noisy(phase.iter().map(|p| mean * (1.0 - v * p.cos())), noise_rel, &mut rng);
    DetectorTrace {
        timestamps_s: (0..n).map(|i| i as f64 * 1e-3).collect(),
        counts_1: c1.into_iter().map(|c| c.max(0.0)).collect(),
        counts_2: c2.into_iter().map(|c| c.max(0.0)).collect(),
    }
}

/// `A exp(−|τ/τ_b|) + B` with multiplicative noise.
pub fn synthetic_blinking(a: f64, b: f64, tau_ms: f64, delays_ms: &[f64], noise_rel: f64, seed: u64) -> BlinkingHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g2 = noisy(delays_ms.iter().map(|t| a * (-(t / tau_ms).abs()).exp() + b), noise_rel, &mut rng);
    BlinkingHistogram { delay_ms: delays_ms.to_vec(), g2 }
}

/// Pulsed coincidence histogram over ±2.5 spacings: Gaussian side peaks of
/// area `side_area` at multiples of `spacing_ns` and a zero-delay peak of
/// area `center_ratio · side_area`.
pub fn synthetic_coincidences(
    spacing_ns: f64,
    side_area: f64,
    center_ratio: f64,
    sigma_ns: f64,
    bin_ns: f64,
    noise_rel: f64,
    seed: u64,
) -> CoincidenceHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (2.5 * spacing_ns / bin_ns).round() as i64;
    let delay: Vec<f64> = (-half..=half).map(|i| i as f64 * bin_ns).collect();
    let norm = 1.0 / (sigma_ns * (std::f64::consts::TAU).sqrt());
    let clean = delay.iter().map(|&t| {
        (-2..=2)
            .map(|k| {
                let area = if k == 0 { center_ratio * side_area } else { side_area };
                let u = (t - k as f64 * spacing_ns) / sigma_ns;
                area * norm * (-0.5 * u * u).exp()
            })
            .sum::<f64>()
    });
    let counts = noisy(clean, noise_rel, &mut rng).into_iter().map(|c| c.max(0.0)).collect();
    CoincidenceHistogram { delay_ns: delay, counts }
}

/// Visibility points of a TPE power sweep: normalized counts follow
/// `sin²(Θ/2)` and `v = λ² √V_HOM (1 − N) + v0` plus absolute Gaussian noise.
pub fn synthetic_lambda_sweep(
    lambda: f64,
    v_hom: f64,
    v0: f64,
    areas_pi: &[f64],
    noise_abs: f64,
    seed: u64,
) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let slope = lambda * lambda * v_hom.sqrt();
    areas_pi
        .iter()
        .map(|&a| {
            let n = (0.5 * std::f64::consts::PI * a).sin().powi(2);
            (a, n, slope * (1.0 - n) + v0 + noise_abs * unit.sample(&mut rng))
        })
        .collect()
}

/// A bundled synthetic visibility sweep and the recipe that produced it.
pub struct BundledLambda {
    pub name: &'static str,
    pub csv: &'static str,
    pub v_hom: f64,
    pub lambda: f64,
    pub v0: f64,
    pub noise_abs: f64,
    pub seed: u64,
}

impl BundledLambda {
    pub fn points(&self) -> Result<Vec<LambdaPoint>> {
        read_lambda_csv(self.csv.as_bytes())
    }

    pub fn regenerate(&self) -> Vec<(f64, f64, f64)> {
        synthetic_lambda_sweep(self.lambda, self.v_hom, self.v0, &bundled_areas(), self.noise_abs, self.seed)
    }
}

/// TPE areas (π units) of the bundled sweeps.
pub fn bundled_areas() -> Vec<f64> {
    (0..=16).map(|i| f64::from(10 + 5 * i) / 100.0).collect()
}

pub const LAMBDA_STIX: BundledLambda = BundledLambda {
    name: "stix",
    csv: include_str!("../../data/lambda_stix.csv"),
    v_hom: 0.95,
    lambda: 0.73,
    v0: 0.02,
    noise_abs: 0.02,
    seed: 73,
};

pub const LAMBDA_REX: BundledLambda = BundledLambda {
    name: "rex",
    csv: include_str!("../../data/lambda_rex.csv"),
    v_hom: 0.58,
    lambda: 0.28,
    v0: 0.005,
    noise_abs: 0.005,
    seed: 28,
};

/// Renders sweep rows in the bundled CSV layout.
pub fn lambda_sweep_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("area_pi,norm_counts,v\n");
    for (a, n, v) in rows {
        s.push_str(&format!("{a},{n},{v}\n"));
    }
    s
}
