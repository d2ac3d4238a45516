//! Time evolution of the master equation and the time-integrated metrics.
//!
//! While a pulse is on, the state is stepped with classic fourth-order
//! Runge–Kutta. Once every pulse has passed, the generator is constant and
//! the state is propagated with exact matrix exponentials of the
//! excitation-number blocks, on a step ladder `Δ₀·2^j` chosen per panel
//! so that the integrands are resolved.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    hermiticity_error, min_eigenvalue, HilbertSpace, Operator, QdState, CAUCHY_SCHWARZ_TOL,
    HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL, ZERO,
};
use crate::liouvillian::{dense_liouvillian, vectorize, unvectorize, Chain, Generator};
use crate::model::{ModelOperators, PulseParams, Pulses, SystemParams};

const DEFAULT_TAIL_STEP_PS: f64 = 0.1;

/// Step-size and stopping controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationGrid {
    /// RK4 step during pulses is `min σ / steps_per_sigma`.
    pub steps_per_sigma: f64,
    /// RK4 step between pulses.
    pub free_step_ps: f64,
    /// Positivity is checked every this many recorded samples.
    pub checkpoint_every: usize,
    /// Stop once `1 − ρ_{g00,g00}` falls below this.
    pub stop_population: f64,
    /// Hard limit on the post-pulse propagation time.
    pub max_tail_ps: f64,
    /// Sampling step of the integrands after the pulses.
    pub tail_step_ps: f64,
    /// Propagate after the last pulse (off for calibration runs).
    pub tail: bool,
}

impl Default for IntegrationGrid {
    fn default() -> Self {
        Self {
            steps_per_sigma: 40.0,
            free_step_ps: 0.025,
            checkpoint_every: 50,
            stop_population: 1e-6,
            max_tail_ps: 200_000.0,
            tail_step_ps: DEFAULT_TAIL_STEP_PS,
            tail: true,
        }
    }
}

impl IntegrationGrid {
    /// Same controls with the post-pulse propagation switched off.
    pub fn drive_only() -> Self {
        Self { tail: false, ..Self::default() }
    }

    /// All step sizes divided by `factor` (for convergence checks).
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            steps_per_sigma: self.steps_per_sigma * factor,
            free_step_ps: self.free_step_ps / factor,
            tail_step_ps: self.tail_step_ps / factor,
            ..self.clone()
        }
    }

    pub fn validate(&self, sigma_min: f64) -> Result<()> {
        if !(self.steps_per_sigma >= 10.0) {
            return Err(Error::config(
                "grid.steps_per_sigma",
                format!("pulse step must be <= sigma/10, got sigma/{}", self.steps_per_sigma),
            ));
        }
        if !(self.free_step_ps > 0.0 && self.free_step_ps <= sigma_min / 10.0) {
            return Err(Error::config(
                "grid.free_step_ps",
                format!("must lie in (0, {:.4}] ps, got {}", sigma_min / 10.0, self.free_step_ps),
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("grid.checkpoint_every", "must be >= 1"));
        }
        for (name, v) in [
            ("grid.stop_population", self.stop_population),
            ("grid.max_tail_ps", self.max_tail_ps),
            ("grid.tail_step_ps", self.tail_step_ps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Observables at one recorded time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// QD populations in the order g, xH, xV, xx.
    pub pop: [f64; 4],
    pub ph_p00: f64,
    pub ph_p11: f64,
    /// Population of the highest kept Fock state of the H mode.
    pub ph_pnn: f64,
    pub ph_rho01: Complex64,
    /// `|ρ^QD_{g,xH}|`.
    pub coh_gxh: f64,
    /// `|ρ^QD_{g,xx}|`.
    pub coh_gxx: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
}

impl Sample {
    pub fn pnc(&self) -> f64 {
        self.ph_rho01.norm()
    }
}

/// Positivity check result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub index: usize,
    pub t: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub checkpoints: Vec<Checkpoint>,
    pub kappa_per_ps: f64,
    /// Time at which the last pulse window closes.
    pub drive_end_ps: f64,
    /// `1 − ρ_{g00,g00}` at the last sample.
    pub final_excited_population: f64,
    /// False when the run stopped on the time limit instead of decay.
    pub converged: bool,
    /// Number of leading samples taken while pulses were on.
    pub drive_samples: usize,
    /// Post-pulse integrals of ρ^H_{1,1}, |ρ^H_{0,1}|, ρ^QD_{xH,xH} and
    /// |ρ^QD_{g,xH}| over the fine sampling grid.
    pub tail_integrals: [f64; 4],
    pub final_state: Operator,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn flux_h(&self, i: usize) -> f64 {
        self.kappa_per_ps * self.samples[i].ph_p11
    }

    pub fn max_trace_error(&self) -> f64 {
        self.samples.iter().map(|s| s.trace_error).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.samples.iter().map(|s| s.hermiticity_error).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// Largest `|ρ01|² − ρ00ρ11` over all samples (≤ 0 for a valid state).
    pub fn max_cauchy_schwarz_excess(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.ph_rho01.norm_sqr() - s.ph_p00 * s.ph_p11)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_xx(&self) -> f64 {
        self.samples.iter().map(|s| s.pop[3]).fold(0.0, f64::max)
    }

    pub fn peak_coh_gxx(&self) -> f64 {
        self.samples.iter().map(|s| s.coh_gxx).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t_ps,pop_g,pop_xH,pop_xV,pop_xx,ph_p00,ph_p11,ph_pnn,pnc_abs,flux_H,coh_gxH"
        )?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.pop[0],
                s.pop[1],
                s.pop[2],
                s.pop[3],
                s.ph_p00,
                s.ph_p11,
                s.ph_pnn,
                s.pnc(),
                self.kappa_per_ps * s.ph_p11,
                s.coh_gxh
            )?;
        }
        Ok(())
    }
}

/// Which model a [`Simulator`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// QD with both cavity modes.
    Full,
    /// QD alone; the cavity modes are dropped.
    QdOnly,
}

/// Reusable evolution engine for one parameter set. The operators and the
/// post-pulse propagators only depend on the static model, so sweeps over
/// pulse areas and delays share one instance.
#[derive(Debug)]
pub struct Simulator {
    params: SystemParams,
    kind: ModelKind,
    ops: ModelOperators,
    gen: Generator,
    tail: OnceLock<TailPropagator>,
}

impl Simulator {
    pub fn new(params: &SystemParams, kind: ModelKind) -> Result<Self> {
        let ops = match kind {
            ModelKind::Full => ModelOperators::full(params)?,
            ModelKind::QdOnly => ModelOperators::qd_only(params)?,
        };
        let gen = Generator::new(&ops, params);
        Ok(Self { params: params.clone(), kind, ops, gen, tail: OnceLock::new() })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn operators(&self) -> &ModelOperators {
        &self.ops
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.ops.space
    }

    /// Evolves the ground state under the given pulses.
    pub fn evolve(&self, pulses: &Pulses, grid: &IntegrationGrid) -> Result<TrajectoryRecord> {
        let windows: Vec<(f64, f64)> = pulses.iter().map(PulseParams::window).collect();
        if windows.is_empty() {
            return Err(Error::Domain("evolve needs at least one pulse".into()));
        }
        let sigma_min = pulses.iter().map(|p| p.sigma).fold(f64::INFINITY, f64::min);
        grid.validate(sigma_min)?;
        let steps = step_plan(&windows, sigma_min / grid.steps_per_sigma, grid.free_step_ps);
        let t0 = windows.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
        let t_drive_end = windows.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);

        let mut rec = Recorder::new(&self.ops.space, grid.checkpoint_every);
        let mut rho = self.ops.space.ground_state().into_matrix();
        let mut t = t0;
        rec.record(t, &rho)?;
        let mut rk = Rk4::new(self.gen.dim());
        for (h, n) in steps {
            for _ in 0..n {
                rk.step(&self.gen, pulses, t, h, &mut rho);
                t += h;
                rec.record(t, &rho)?;
            }
        }
        let drive_samples = rec.samples.len();
        let mut converged = excited(&rho) < grid.stop_population;
        let mut tail_integrals = [0.0; 4];
        if grid.tail && !converged {
            let fresh;
            let tail = if grid.tail_step_ps == DEFAULT_TAIL_STEP_PS {
                self.tail.get_or_init(|| TailPropagator::new(&self.gen, DEFAULT_TAIL_STEP_PS))
            } else {
                fresh = TailPropagator::new(&self.gen, grid.tail_step_ps);
                &fresh
            };
            (converged, tail_integrals) =
                tail.run(&mut rec, &mut rho, &mut t, t_drive_end + grid.max_tail_ps, grid)?;
        }
        rec.final_checkpoint(&rho)?;
        Ok(TrajectoryRecord {
            samples: rec.samples,
            checkpoints: rec.checkpoints,
            kappa_per_ps: self.params.kappa_per_ps,
            drive_end_ps: t_drive_end,
            final_excited_population: excited(&rho),
            converged,
            drive_samples,
            tail_integrals,
            final_state: rho,
        })
    }
}

/// Evolves the full model from the ground state. `stim = None` is the
/// relaxation scheme.
pub fn evolve(
    params: &SystemParams,
    tpe: &PulseParams,
    stim: Option<&PulseParams>,
    grid: &IntegrationGrid,
) -> Result<TrajectoryRecord> {
    let pulses = Pulses::new(Some(*tpe), stim.copied())?;
    Simulator::new(params, ModelKind::Full)?.evolve(&pulses, grid)
}

fn excited(rho: &Operator) -> f64 {
    1.0 - rho[(0, 0)].re
}

/// `(step, count)` segments covering the union of pulse windows with the
/// fine step and the gaps between them with the free step.
fn step_plan(windows: &[(f64, f64)], h_pulse: f64, h_free: f64) -> Vec<(f64, usize)> {
    let mut marks: Vec<f64> = windows.iter().flat_map(|&(a, b)| [a, b]).collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut plan = Vec::new();
    for pair in marks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mid = 0.5 * (a + b);
        let inside = windows.iter().any(|&(s, e)| s <= mid && mid <= e);
        let h = if inside { h_pulse } else { h_free };
        let n = ((b - a) / h - 1e-9).ceil().max(1.0) as usize;
        plan.push(((b - a) / n as f64, n));
    }
    plan
}

struct Rk4 {
    k: [Operator; 4],
    tmp: Operator,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        let z = || Operator::zeros(dim, dim);
        Self { k: [z(), z(), z(), z()], tmp: z() }
    }

    fn step(&mut self, gen: &Generator, pulses: &Pulses, t: f64, h: f64, rho: &mut Operator) {
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        let [k1, k2, k3, k4] = &mut self.k;
        gen.rhs_into(pulses, t, rho, k1);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, half, k1);
        gen.rhs_into(pulses, t + 0.5 * h, &self.tmp, k2);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, half, k2);
        gen.rhs_into(pulses, t + 0.5 * h, &self.tmp, k3);
        self.tmp.copy_from(rho);
        axpy(&mut self.tmp, full, k3);
        gen.rhs_into(pulses, t + h, &self.tmp, k4);
        let sixth = Complex64::new(h / 6.0, 0.0);
        let third = Complex64::new(h / 3.0, 0.0);
        axpy(rho, sixth, k1);
        axpy(rho, third, k2);
        axpy(rho, third, k3);
        axpy(rho, sixth, k4);
    }
}

/// `y += a·x`.
fn axpy(y: &mut Operator, a: Complex64, x: &Operator) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// Collects samples and enforces the state invariants as it goes.
struct Recorder {
    space: HilbertSpace,
    every: usize,
    samples: Vec<Sample>,
    checkpoints: Vec<Checkpoint>,
}

impl Recorder {
    fn new(space: &HilbertSpace, every: usize) -> Self {
        Self { space: *space, every, samples: Vec::new(), checkpoints: Vec::new() }
    }

    fn record(&mut self, t: f64, rho: &Operator) -> Result<()> {
        let s = observe(&self.space, t, rho);
        if !(s.trace_error < TRACE_TOL) {
            return Err(Error::Numerical {
                time_ps: t,
                message: format!("trace error {:.3e}", s.trace_error),
            });
        }
        if !(s.hermiticity_error < HERMITICITY_TOL) {
            return Err(Error::Numerical {
                time_ps: t,
                message: format!("hermiticity error {:.3e}", s.hermiticity_error),
            });
        }
        let cs = s.ph_rho01.norm_sqr() - s.ph_p00 * s.ph_p11;
        if cs > CAUCHY_SCHWARZ_TOL {
            return Err(Error::Numerical {
                time_ps: t,
                message: format!("photon coherence exceeds Cauchy-Schwarz bound by {cs:.3e}"),
            });
        }
        self.samples.push(s);
        if (self.samples.len() - 1) % self.every == 0 {
            self.check_positivity(t, rho)?;
        }
        Ok(())
    }

    fn check_positivity(&mut self, t: f64, rho: &Operator) -> Result<()> {
        let ev = min_eigenvalue(rho);
        self.checkpoints.push(Checkpoint { index: self.samples.len() - 1, t, min_eigenvalue: ev });
        if !(ev > -POSITIVITY_TOL) {
            return Err(Error::Numerical {
                time_ps: t,
                message: format!("negative eigenvalue {ev:.3e}"),
            });
        }
        Ok(())
    }

    fn final_checkpoint(&mut self, rho: &Operator) -> Result<()> {
        let last = self.samples.len() - 1;
        if self.checkpoints.last().map(|c| c.index) != Some(last) {
            self.check_positivity(self.samples[last].t, rho)?;
        }
        Ok(())
    }
}

fn observe(space: &HilbertSpace, t: f64, rho: &Operator) -> Sample {
    let nf = space.fock_dim();
    let block = nf * nf;
    let dim = space.dim();
    let mut pop = [0.0; 4];
    for (q, p) in pop.iter_mut().enumerate() {
        *p = (0..block).map(|k| rho[(q * block + k, q * block + k)].re).sum();
    }
    // Reduced H-mode matrix elements: sum over QD state and n_V.
    let mut ph = vec![0.0; nf];
    let mut rho01 = ZERO;
    for q in 0..4 {
        for nv in 0..nf {
            for nh in 0..nf {
                let i = q * block + nh * nf + nv;
                ph[nh] += rho[(i, i)].re;
            }
            if nf > 1 {
                let i0 = q * block + nv;
                rho01 += rho[(i0, i0 + nf)];
            }
        }
    }
    let coh = |b: QdState| -> f64 {
        let off = b.index() * block;
        let mut c = ZERO;
        for k in 0..block {
            c += rho[(k, off + k)];
        }
        c.norm()
    };
    let trace: Complex64 = (0..dim).map(|i| rho[(i, i)]).sum();
    Sample {
        t,
        pop,
        ph_p00: ph[0],
        ph_p11: if nf > 1 { ph[1] } else { 0.0 },
        ph_pnn: if nf > 1 { ph[nf - 1] } else { 0.0 },
        ph_rho01: rho01,
        coh_gxh: coh(QdState::XH),
        coh_gxx: coh(QdState::XX),
        trace_error: (trace - 1.0).norm(),
        hermiticity_error: hermiticity_error(rho),
    }
}

/// Fine steps per propagation block after the pulses.
const TAIL_BLOCK: usize = 256;

/// Exact post-pulse propagation. The state advances block by block with
/// `exp(M·B·Δ₀)` per excitation chain, while the four integrands are
/// read on the fine grid `Δ₀` through precomputed rows `w·exp(M·kΔ₀)`.
#[derive(Debug)]
struct TailPropagator {
    chains: Vec<Chain>,
    block: Vec<DMatrix<Complex64>>,
    /// Simpson-weighted sums over the block of the rows for ρ^H_{1,1} and
    /// ρ^QD_{xH,xH} (chain 0); both are linear in the state.
    rows_pop: DMatrix<Complex64>,
    /// Rows `k = 0..=B` for ρ^H_{0,1} then ρ^QD_{g,xH} (chain 1).
    rows_coh: Option<DMatrix<Complex64>>,
    base_step: f64,
}

impl TailPropagator {
    fn new(gen: &Generator, base_step: f64) -> Self {
        let space = *gen.space();
        let chains = gen.chains();
        let step: Vec<DMatrix<Complex64>> = chains
            .iter()
            .map(|c| (gen.chain_matrix(c) * Complex64::new(base_step, 0.0)).exp())
            .collect();
        let block = step
            .iter()
            .map(|p| {
                let mut b = p.clone();
                for _ in 0..TAIL_BLOCK.trailing_zeros() {
                    b = &b * &b;
                }
                b
            })
            .collect();
        let nf = space.fock_dim();
        let sq = nf * nf;
        let (mut p11, mut pxh) = (Vec::new(), Vec::new());
        let (mut r01, mut gxh) = (Vec::new(), Vec::new());
        for q in 0..4 {
            for k in 0..sq {
                let i = q * sq + k;
                let nh = k / nf;
                if nh == 1 {
                    p11.push((i, i));
                }
                if q == QdState::XH.index() {
                    pxh.push((i, i));
                }
                if nf > 1 && nh == 0 {
                    r01.push((i, i + nf));
                }
                if q == QdState::G.index() {
                    gxh.push((i, QdState::XH.index() * sq + k));
                }
            }
        }
        let weights = simpson_weights(base_step);
        let fine_pop = fine_rows(&chains[0], &step[0], &[p11, pxh]);
        let n = TAIL_BLOCK + 1;
        let rows_pop = DMatrix::from_fn(2, fine_pop.ncols(), |f, c| {
            (0..n).map(|k| fine_pop[(f * n + k, c)] * weights[k]).sum()
        });
        let rows_coh = chains
            .iter()
            .position(|c| c.offset == 1)
            .map(|c| fine_rows(&chains[c], &step[c], &[r01, gxh]));
        Self { chains, block, rows_pop, rows_coh, base_step }
    }

    fn assemble(&self, v: &[DVector<Complex64>], rho: &mut Operator) {
        for (c, x) in self.chains.iter().zip(v) {
            c.scatter(x, rho);
        }
    }

    /// Propagates until the excited population drops below the stop level
    /// or `t_max` is reached. Records a sample at every block boundary and
    /// returns whether the stop level was reached together with the
    /// fine-grid integrals of the four integrands.
    fn run(
        &self,
        rec: &mut Recorder,
        rho: &mut Operator,
        t: &mut f64,
        t_max: f64,
        grid: &IntegrationGrid,
    ) -> Result<(bool, [f64; 4])> {
        let mut v: Vec<DVector<Complex64>> = self.chains.iter().map(|c| c.gather(rho)).collect();
        let coh_chain = self.chains.iter().position(|c| c.offset == 1);
        let n = TAIL_BLOCK + 1;
        let weights = simpson_weights(self.base_step);
        let mut totals = [0.0; 4];
        while *t < t_max {
            let pops = &self.rows_pop * &v[0];
            totals[0] += pops[0].re;
            totals[2] += pops[1].re;
            if let (Some(rows), Some(c)) = (&self.rows_coh, coh_chain) {
                let cohs = rows * &v[c];
                for k in 0..n {
                    totals[1] += weights[k] * cohs[k].norm();
                    totals[3] += weights[k] * cohs[n + k].norm();
                }
            }
            for (x, p) in v.iter_mut().zip(&self.block) {
                *x = p * &*x;
            }
            self.assemble(&v, rho);
            *t += TAIL_BLOCK as f64 * self.base_step;
            rec.record(*t, rho)?;
            if excited(rho) < grid.stop_population {
                return Ok((true, totals));
            }
        }
        Ok((false, totals))
    }
}

/// Composite Simpson weights for one block of the fine grid.
fn simpson_weights(h: f64) -> Vec<f64> {
    (0..=TAIL_BLOCK)
        .map(|k| {
            let w = if k == 0 || k == TAIL_BLOCK {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Stacks `w_f · P^k` for `k = 0..=B` and each functional `f`, where `w_f`
/// sums the listed matrix elements.
fn fine_rows(
    chain: &Chain,
    step: &DMatrix<Complex64>,
    functionals: &[Vec<(usize, usize)>],
) -> DMatrix<Complex64> {
    let m = chain.pairs.len();
    let n = TAIL_BLOCK + 1;
    let mut rows = DMatrix::<Complex64>::zeros(n * functionals.len(), m);
    for (f, elems) in functionals.iter().enumerate() {
        let mut w = nalgebra::RowDVector::<Complex64>::zeros(m);
        for (p, pair) in chain.pairs.iter().enumerate() {
            if elems.contains(pair) {
                w[p] += Complex64::new(1.0, 0.0);
            }
        }
        for k in 0..n {
            rows.set_row(f * n + k, &w);
            w = &w * step;
        }
    }
    rows
}

/// Time-integrated observables of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratedMetrics {
    /// `κ ∫ ρ^{H}_{1,1} dt`, the mean number of emitted H photons.
    pub occ_calc: f64,
    /// `κ ∫ |ρ^{H}_{0,1}| dt`.
    pub pnc_calc: f64,
    /// `pnc_calc² / occ_calc`.
    pub v_calc: f64,
    /// Set when `occ_calc` is too small to divide by; `v_calc` is then 0.
    pub v_undefined: bool,
    /// `γ ∫ ρ^{QD}_{xH,xH} dt`.
    pub xh_yield_qdonly: f64,
    /// `(γ/2) ∫ |ρ^{QD}_{g,xH}| dt`.
    pub pnc_qdonly: f64,
}

/// Integrates the pulse-phase samples with a composite Simpson rule and
/// adds the post-pulse integrals accumulated during propagation.
pub fn integrated_metrics(traj: &TrajectoryRecord, params: &SystemParams) -> IntegratedMetrics {
    let drive = &traj.samples[..traj.drive_samples];
    let t: Vec<f64> = drive.iter().map(|s| s.t).collect();
    let series = |f: &dyn Fn(&Sample) -> f64, tail: f64| -> f64 {
        let y: Vec<f64> = drive.iter().map(f).collect();
        simpson(&t, &y) + tail
    };
    let [p11, pnc, pxh, gxh] = traj.tail_integrals;
    let occ = params.kappa_per_ps * series(&|s| s.ph_p11, p11);
    let pnc = params.kappa_per_ps * series(&|s| s.pnc(), pnc);
    let (v, undefined) = if occ < 1e-12 { (0.0, true) } else { (pnc * pnc / occ, false) };
    IntegratedMetrics {
        occ_calc: occ,
        pnc_calc: pnc,
        v_calc: v,
        v_undefined: undefined,
        xh_yield_qdonly: params.gamma_per_ps * series(&|s| s.pop[1], pxh),
        pnc_qdonly: 0.5 * params.gamma_per_ps * series(&|s| s.coh_gxh, gxh),
    }
}

/// Composite Simpson rule on an arbitrary increasing grid. An odd
/// trailing interval is integrated with the parabola through the last
/// three nodes.
pub fn simpson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (x[1] - x[0]) * (y[0] + y[1]);
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
        let s = h0 + h1;
        total += s / 6.0
            * ((2.0 - h1 / h0) * y[i] + s * s / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        let (h0, h1) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        total += y[n - 1] * (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1))
            + y[n - 2] * (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0)
            - y[n - 3] * h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    }
    total
}

/// Propagates `rho0` for `t_span` ps under the undriven generator with the
/// RK4 stepper at `step_ps` and with a dense exponential of the vectorized
/// Liouvillian, returning `max |Δρ_ij| / max |ρ_ij|` at the end.
pub fn rhs_oracle_check(
    params: &SystemParams,
    rho0: &Operator,
    t_span: f64,
    step_ps: f64,
) -> Result<f64> {
    if !(t_span >= 0.0 && step_ps > 0.0) {
        return Err(Error::Domain("t_span must be >= 0 and step_ps > 0".into()));
    }
    let ops = ModelOperators::full(params)?;
    let d = ops.space.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::Domain(format!("state must be {d}x{d}")));
    }
    let gen = Generator::new(&ops, params);
    let none = Pulses::default();
    let n = (t_span / step_ps).ceil() as usize;
    let mut rho = rho0.clone();
    if n > 0 {
        let h = t_span / n as f64;
        let mut rk = Rk4::new(d);
        for k in 0..n {
            rk.step(&gen, &none, k as f64 * h, h, &mut rho);
        }
    }
    let exact = unvectorize(&expm_action(&dense_liouvillian(&ops), &vectorize(rho0), t_span), d);
    let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok((rho - exact).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok((rho - exact).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale)
}

/// `exp(t·L)·v` by scaled Taylor series. `L` is used as given (dense) but
/// its zero entries are skipped in the products.
pub fn expm_action(l: &DMatrix<Complex64>, v: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    let n = l.nrows();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut norm1 = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            let z = l[(i, j)];
            if z != ZERO {
                rows[i].push((j, z));
                norm1[j] += z.norm();
            }
        }
    }
    let norm = norm1.into_iter().fold(0.0, f64::max) * t.abs();
    let substeps = (norm / 2.0).ceil().max(1.0) as usize;
    let h = t / substeps as f64;
    let mut x = v.clone();
    for _ in 0..substeps {
        let mut term = x.clone();
        let mut sum = x.clone();
        for k in 1..200 {
            let mut next = DVector::<Complex64>::zeros(n);
            for (i, row) in rows.iter().enumerate() {
                let mut acc = ZERO;
                for &(j, z) in row {
                    acc += z * term[j];
                }
                next[i] = acc * (h / k as f64);
            }
            term = next;
            sum += &term;
            let tn = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sn = sum.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if tn <= 1e-17 * sn {
                break;
            }
        }
        x = sum;
    }
    x
}
