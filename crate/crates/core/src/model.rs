//! Rotating-frame Hamiltonian, Gaussian pulse envelopes and Lindblad
//! dissipators for the quantum dot coupled to two cavity modes.
//!
//! Energies are in meV, times in ps and rates in ps⁻¹. Frequencies are
//! stored as energies `ħω` and converted with [`HBAR_MEV_PS`] only where a
//! phase or a commutator needs them.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, HilbertSpace, Operator, QdState, Subsystem};

/// Reduced Planck constant in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;

/// Pulses are treated as exactly zero beyond this many standard deviations.
pub const PULSE_WINDOW_SIGMAS: f64 = 8.0;

/// Gaussian standard deviation from its full width at half maximum,
/// `σ = FWHM / (2√(2 ln 2))`.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

/// Physical parameters and numerical controls of the model.
///
/// Field names carry their units so configuration files read like the
/// parameter table they come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// QD-cavity detuning `ħΔω_{c−x}`.
    pub delta_cx_mev: f64,
    /// Exciton-laser detuning `ħΔω_{x−l}`.
    pub delta_xl_mev: f64,
    /// Stimulation laser detuning relative to the TPE laser, signed.
    pub delta_stim_mev: f64,
    /// Biexciton binding energy.
    pub binding_energy_mev: f64,
    /// QD-cavity coupling `ħg`.
    pub coupling_mev: f64,
    /// Cavity loss rate κ.
    pub kappa_per_ps: f64,
    /// QD radiative loss rate γ.
    pub gamma_per_ps: f64,
    pub fwhm_tpe_ps: f64,
    pub fwhm_stim_ps: f64,
    /// Delay of the stimulating pulse after the TPE pulse.
    pub delay_ps: f64,
    /// Carried for reference only; phonons are not modelled.
    pub temperature_k: f64,
    /// Highest Fock state kept per cavity mode.
    pub n_max: usize,
    /// Optional phenomenological pure dephasing of the excited QD states,
    /// an approximation standing in for the phonon bath. Zero by default.
    #[serde(default)]
    pub dephasing_per_ps: f64,
    /// Require `delta_xl = E_B / 2` (two-photon resonance).
    #[serde(default)]
    pub resonant_tpe: bool,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl SystemParams {
    /// Published simulation parameters (Δt = 15 ps).
    pub fn table1() -> Self {
        Self {
            delta_cx_mev: 0.0,
            delta_xl_mev: 2.0,
            delta_stim_mev: -2.0,
            binding_energy_mev: 4.0,
            coupling_mev: 0.05,
            kappa_per_ps: 0.577,
            gamma_per_ps: 0.001,
            fwhm_tpe_ps: 4.5,
            fwhm_stim_ps: 3.0,
            delay_ps: 15.0,
            temperature_k: 1.5,
            n_max: 2,
            dephasing_per_ps: 0.0,
            resonant_tpe: true,
        }
    }

    /// Same model with the delay used in the measurements (7 ps).
    pub fn experiment() -> Self {
        Self { delay_ps: 7.0, ..Self::table1() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table1" => Some(Self::table1()),
            "experiment" => Some(Self::experiment()),
            _ => None,
        }
    }

    pub fn sigma_tpe_ps(&self) -> f64 {
        fwhm_to_sigma(self.fwhm_tpe_ps)
    }

    pub fn sigma_stim_ps(&self) -> f64 {
        fwhm_to_sigma(self.fwhm_stim_ps)
    }

    /// Cavity-laser detuning `ħΔω_{c−l} = ħΔω_{c−x} + ħΔω_{x−l}`.
    pub fn delta_cl_mev(&self) -> f64 {
        self.delta_cx_mev + self.delta_xl_mev
    }

    /// TPE pulse centred at t = 0.
    pub fn tpe_pulse(&self, area_rad: f64) -> Result<PulseParams> {
        PulseParams::new(area_rad, self.sigma_tpe_ps(), 0.0, PulseRole::Tpe)
    }

    /// Stimulating pulse centred at the configured delay.
    pub fn stim_pulse(&self, area_rad: f64) -> Result<PulseParams> {
        PulseParams::new(area_rad, self.sigma_stim_ps(), self.delay_ps, PulseRole::Stim)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("delta_cx_mev", self.delta_cx_mev),
            ("delta_xl_mev", self.delta_xl_mev),
            ("delta_stim_mev", self.delta_stim_mev),
            ("binding_energy_mev", self.binding_energy_mev),
            ("coupling_mev", self.coupling_mev),
            ("kappa_per_ps", self.kappa_per_ps),
            ("gamma_per_ps", self.gamma_per_ps),
            ("fwhm_tpe_ps", self.fwhm_tpe_ps),
            ("fwhm_stim_ps", self.fwhm_stim_ps),
            ("delay_ps", self.delay_ps),
            ("temperature_k", self.temperature_k),
            ("dephasing_per_ps", self.dephasing_per_ps),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("kappa_per_ps", self.kappa_per_ps),
            ("gamma_per_ps", self.gamma_per_ps),
            ("dephasing_per_ps", self.dephasing_per_ps),
        ] {
            if v < 0.0 {
                return Err(Error::config(name, format!("rate must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("fwhm_tpe_ps", self.fwhm_tpe_ps), ("fwhm_stim_ps", self.fwhm_stim_ps)] {
            if v <= 0.0 {
                return Err(Error::config(name, format!("pulse width must be > 0, got {v}")));
            }
        }
        if self.n_max < 1 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if self.resonant_tpe
            && (self.delta_xl_mev - 0.5 * self.binding_energy_mev).abs() > 1e-9
        {
            return Err(Error::config(
                "delta_xl_mev",
                format!(
                    "resonant_tpe requires delta_xl_mev = binding_energy_mev / 2 = {}, got {}",
                    0.5 * self.binding_energy_mev,
                    self.delta_xl_mev
                ),
            ));
        }
        Ok(())
    }
}

/// Which laser a pulse belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseRole {
    Tpe,
    Stim,
}

/// Gaussian pulse with envelope `Θ/(√(2π)σ)·exp(−(t−t₀)²/(2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Pulse area Θ in radians.
    pub area: f64,
    /// Standard deviation in ps.
    pub sigma: f64,
    /// Centre time in ps.
    pub center: f64,
    pub role: PulseRole,
}

impl PulseParams {
    pub fn new(area: f64, sigma: f64, center: f64, role: PulseRole) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("pulse sigma must be > 0, got {sigma}")));
        }
        if !(area >= 0.0 && area.is_finite()) {
            return Err(Error::Domain(format!("pulse area must be >= 0, got {area}")));
        }
        if !center.is_finite() {
            return Err(Error::Domain("pulse centre must be finite".into()));
        }
        Ok(Self { area, sigma, center, role })
    }

    /// Instantaneous Rabi frequency in rad/ps.
    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.sigma;
        if x.abs() > PULSE_WINDOW_SIGMAS {
            return 0.0;
        }
        self.area / ((2.0 * PI).sqrt() * self.sigma) * (-0.5 * x * x).exp()
    }

    /// Support of the truncated envelope.
    pub fn window(&self) -> (f64, f64) {
        let half = PULSE_WINDOW_SIGMAS * self.sigma;
        (self.center - half, self.center + half)
    }

    pub fn is_active(&self) -> bool {
        self.area > 0.0
    }
}

/// The pulses acting during one run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pulses {
    pub tpe: Option<PulseParams>,
    pub stim: Option<PulseParams>,
}

impl Pulses {
    pub fn new(tpe: Option<PulseParams>, stim: Option<PulseParams>) -> Result<Self> {
        if let Some(p) = tpe {
            if p.role != PulseRole::Tpe {
                return Err(Error::Domain("TPE slot holds a stimulating pulse".into()));
            }
        }
        if let Some(p) = stim {
            if p.role != PulseRole::Stim {
                return Err(Error::Domain("stim slot holds a TPE pulse".into()));
            }
        }
        Ok(Self { tpe, stim })
    }

    pub fn iter(&self) -> impl Iterator<Item = &PulseParams> {
        self.tpe.iter().chain(self.stim.iter())
    }
}

/// Fixed operators of the model on a given space. Built once per parameter
/// set; the time-dependent Hamiltonian is a combination of these.
#[derive(Clone, Debug)]
pub struct ModelOperators {
    pub space: HilbertSpace,
    /// `Ĥ^{QD-photon}` in the TPE-laser frame.
    pub h_static: Operator,
    /// `|g⟩⟨xH| + |g⟩⟨xV| + |xH⟩⟨xx| + |xV⟩⟨xx| + h.c.` on the full space.
    pub tpe_coupling: Operator,
    /// `|g⟩⟨xH| + |xH⟩⟨xx|` on the full space (not Hermitian).
    pub stim_transition: Operator,
    /// Collapse operators with their rates.
    pub jumps: Vec<Jump>,
}

#[derive(Clone, Debug)]
pub struct Jump {
    pub label: &'static str,
    pub op: Operator,
    pub rate: f64,
}

impl ModelOperators {
    /// Operators for the full QD + two-mode model.
    pub fn full(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::on_space(params, HilbertSpace::new(params.n_max)?))
    }

    /// Operators with the cavity modes removed (QD-only approximation).
    pub fn qd_only(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::on_space(params, HilbertSpace::qd_only()))
    }

    fn on_space(params: &SystemParams, space: HilbertSpace) -> Self {
        use QdState::*;
        let qd = |a, b| {
            space
                .embed(&HilbertSpace::qd_transition(a, b), Subsystem::Qd)
                .expect("QD operator has dimension 4")
        };
        let tpe_half = qd(G, XH) + qd(G, XV) + qd(XH, XX) + qd(XV, XX);
        let tpe_coupling = &tpe_half + tpe_half.adjoint();
        let stim_transition = qd(G, XH) + qd(XH, XX);

        let mut jumps = Vec::new();
        if space.n_max() > 0 {
            let a = space.annihilation();
            jumps.push(Jump {
                label: "a_H",
                op: space.embed(&a, Subsystem::PhotonH).expect("mode dimension"),
                rate: params.kappa_per_ps,
            });
            jumps.push(Jump {
                label: "a_V",
                op: space.embed(&a, Subsystem::PhotonV).expect("mode dimension"),
                rate: params.kappa_per_ps,
            });
        }
        for (label, a, b) in [
            ("g<-xH", G, XH),
            ("g<-xV", G, XV),
            ("xH<-xx", XH, XX),
            ("xV<-xx", XV, XX),
        ] {
            jumps.push(Jump { label, op: qd(a, b), rate: params.gamma_per_ps });
        }
        if params.dephasing_per_ps > 0.0 {
            for (label, s) in [("deph_xH", XH), ("deph_xV", XV), ("deph_xx", XX)] {
                jumps.push(Jump { label, op: qd(s, s), rate: params.dephasing_per_ps });
            }
        }

        Self {
            space,
            h_static: static_hamiltonian_on(params, &space),
            tpe_coupling,
            stim_transition,
            jumps,
        }
    }

    /// `Ĥ^{TPE}(t)` for the given pulse.
    pub fn tpe_hamiltonian(&self, pulse: &PulseParams, t: f64) -> Operator {
        let f = pulse.envelope(t);
        &self.tpe_coupling * Complex64::new(-0.5 * HBAR_MEV_PS * f, 0.0)
    }

    /// `Ĥ^{stim}(t)` including the laser phase `e^{iΔω^{stim} t}`.
    pub fn stim_hamiltonian(&self, params: &SystemParams, pulse: &PulseParams, t: f64) -> Operator {
        let f = pulse.envelope(t);
        let phase = Complex64::from_polar(1.0, params.delta_stim_mev / HBAR_MEV_PS * t);
        let half = &self.stim_transition * (phase * (-0.5 * HBAR_MEV_PS * f));
        &half + half.adjoint()
    }

    /// Full Hamiltonian at time `t`.
    pub fn hamiltonian(&self, params: &SystemParams, pulses: &Pulses, t: f64) -> Operator {
        let mut h = self.h_static.clone();
        if let Some(p) = &pulses.tpe {
            h += self.tpe_hamiltonian(p, t);
        }
        if let Some(p) = &pulses.stim {
            h += self.stim_hamiltonian(params, p, t);
        }
        h
    }
}

fn static_hamiltonian_on(params: &SystemParams, space: &HilbertSpace) -> Operator {
    let dim = space.dim();
    let mut h = Operator::zeros(dim, dim);
    let e_x = params.delta_xl_mev;
    let e_xx = 2.0 * params.delta_xl_mev - params.binding_energy_mev;
    let e_c = params.delta_cl_mev();
    for i in 0..dim {
        let (qd, nh, nv) = space.state(i).expect("index in range");
        let e_qd = match qd {
            QdState::G => 0.0,
            QdState::XH | QdState::XV => e_x,
            QdState::XX => e_xx,
        };
        h[(i, i)] = Complex64::new(e_qd + e_c * (nh + nv) as f64, 0.0);
    }
    if space.n_max() > 0 {
        use QdState::*;
        let a = space.annihilation();
        let g = Complex64::new(params.coupling_mev, 0.0);
        for (mode, exciton) in [(Subsystem::PhotonH, XH), (Subsystem::PhotonV, XV)] {
            let a_mode = space.embed(&a, mode).expect("mode dimension");
            let raise = space
                .embed(
                    &(HilbertSpace::qd_transition(exciton, G)
                        + HilbertSpace::qd_transition(XX, exciton)),
                    Subsystem::Qd,
                )
                .expect("QD dimension");
            let term = &a_mode * &raise * g;
            h += &term + term.adjoint();
        }
    }
    h
}

/// `Ĥ^{QD-photon}`: QD and cavity energies in the TPE-laser frame plus the
/// Jaynes-Cummings-type coupling of both modes to the cascade.
pub fn build_static_hamiltonian(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    Ok(static_hamiltonian_on(params, &HilbertSpace::new(params.n_max)?))
}

/// `Ĥ^{TPE}(t) = −(ħ/2) f^{TPE}(t) (|g⟩⟨xH| + |g⟩⟨xV| + |xH⟩⟨xx| + |xV⟩⟨xx| + h.c.)`.
pub fn build_tpe_hamiltonian(params: &SystemParams, pulse: &PulseParams, t: f64) -> Result<Operator> {
    if pulse.role != PulseRole::Tpe {
        return Err(Error::Domain("build_tpe_hamiltonian needs a TPE pulse".into()));
    }
    Ok(ModelOperators::full(params)?.tpe_hamiltonian(pulse, t))
}

/// `Ĥ^{stim}(t) = −(ħ/2) f^{stim}(t) e^{iΔω^{stim} t}(|g⟩⟨xH| + |xH⟩⟨xx|) + h.c.`
pub fn build_stim_hamiltonian(params: &SystemParams, pulse: &PulseParams, t: f64) -> Result<Operator> {
    if pulse.role != PulseRole::Stim {
        return Err(Error::Domain("build_stim_hamiltonian needs a stimulating pulse".into()));
    }
    Ok(ModelOperators::full(params)?.stim_hamiltonian(params, pulse, t))
}

/// `δ(ÔρÔ† − ½{Ô†Ô, ρ})`.
pub fn lindblad_dissipator(rho: &DensityMatrix, op: &Operator, rate: f64) -> Result<Operator> {
    lindblad_dissipator_raw(rho.matrix(), op, rate)
}

pub(crate) fn lindblad_dissipator_raw(rho: &Operator, op: &Operator, rate: f64) -> Result<Operator> {
    if !(rate >= 0.0) {
        return Err(Error::Domain(format!("dissipator rate must be >= 0, got {rate}")));
    }
    if op.nrows() != rho.nrows() || op.ncols() != rho.ncols() {
        return Err(Error::Domain(format!(
            "operator {}x{} does not match state {}x{}",
            op.nrows(),
            op.ncols(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    let n = rho.nrows();
    if rate == 0.0 {
        return Ok(Operator::zeros(n, n));
    }
    let od = op.adjoint();
    let odo = &od * op;
    let jump = op * rho * &od;
    let anti = &odo * rho + rho * &odo;
    Ok((jump - anti * Complex64::new(0.5, 0.0)) * Complex64::new(rate, 0.0))
}

/// Right-hand side of the master equation,
/// `−(i/ħ)[Ĥ(t), ρ] + Σ_k 𝓛_{Ô_k, δ_k}[ρ]`, evaluated directly from dense
/// operators. The integrator uses a faster sparse route that is checked
/// against this one.
pub fn total_rhs(params: &SystemParams, pulses: &Pulses, t: f64, rho: &DensityMatrix) -> Result<Operator> {
    let ops = ModelOperators::full(params)?;
    total_rhs_with(&ops, params, pulses, t, rho.matrix())
}

pub(crate) fn total_rhs_with(
    ops: &ModelOperators,
    params: &SystemParams,
    pulses: &Pulses,
    t: f64,
    rho: &Operator,
) -> Result<Operator> {
    let h = ops.hamiltonian(params, pulses, t);
    let comm = &h * rho - rho * &h;
    let mut out = comm * Complex64::new(0.0, -1.0 / HBAR_MEV_PS);
    for j in &ops.jumps {
        out += lindblad_dissipator_raw(rho, &j.op, j.rate)?;
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use QdState::*;

    fn random_state(dim: usize, seed: u64) -> Operator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Operator::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let tr = m.trace();
        m / tr
    }

    fn max_abs(m: &Operator) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn envelope_peak_tail_and_area() {
        let p = PulseParams::new(PI, 1.0, 0.0, PulseRole::Tpe).unwrap();
        assert_relative_eq!(p.envelope(0.0), PI / (2.0 * PI).sqrt(), max_relative = 1e-12);
        assert!(p.envelope(10.0) < 1e-20);
        let n = 20_001;
        let (a, b) = p.window();
        let h = (b - a) / (n - 1) as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * p.envelope(a + i as f64 * h)
            })
            .sum::<f64>()
            * h;
        assert!((integral - PI).abs() < 1e-9, "{integral}");
    }

    #[test]
    fn fwhm_conversion() {
        assert_relative_eq!(fwhm_to_sigma(2.0 * (2.0 * LN_2).sqrt()), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn pulse_and_slot_validation() {
        assert!(PulseParams::new(1.0, 0.0, 0.0, PulseRole::Tpe).is_err());
        assert!(PulseParams::new(-1.0, 1.0, 0.0, PulseRole::Tpe).is_err());
        let stim = PulseParams::new(1.0, 1.0, 0.0, PulseRole::Stim).unwrap();
        assert!(Pulses::new(Some(stim), None).is_err());
        assert!(Pulses::new(None, Some(stim)).is_ok());
    }

    #[test]
    fn parameter_validation_names_fields() {
        let field = |p: SystemParams| match p.validate().unwrap_err() {
            Error::Config { field, .. } => field,
            e => panic!("{e}"),
        };
        assert_eq!(field(SystemParams { n_max: 0, ..SystemParams::table1() }), "n_max");
        assert_eq!(field(SystemParams { kappa_per_ps: -1.0, ..SystemParams::table1() }), "kappa_per_ps");
        assert_eq!(field(SystemParams { delta_xl_mev: 1.0, ..SystemParams::table1() }), "delta_xl_mev");
        assert!(SystemParams { delta_xl_mev: 1.0, resonant_tpe: false, ..SystemParams::table1() }
            .validate()
            .is_ok());
        assert_eq!(SystemParams::preset("experiment").unwrap().delay_ps, 7.0);
        assert!(SystemParams::preset("nope").is_none());
    }

    #[test]
    fn static_hamiltonian_elements() {
        let p = SystemParams::table1();
        let h = build_static_hamiltonian(&p).unwrap();
        let s = HilbertSpace::new(2).unwrap();
        let ix = |q, a, b| s.index(q, a, b).unwrap();
        assert_eq!(h.nrows(), 36);
        assert!(h[(ix(XX, 0, 0), ix(XX, 0, 0))].norm() < 1e-15);
        assert_relative_eq!(h[(ix(XH, 0, 0), ix(XH, 0, 0))].re, 2.0);
        assert_relative_eq!(h[(ix(G, 1, 1), ix(G, 1, 1))].re, 4.0);
        assert_relative_eq!(h[(ix(G, 1, 0), ix(XH, 0, 0))].re, 0.05);
        assert_relative_eq!(h[(ix(XH, 1, 0), ix(XX, 0, 0))].re, 0.05);
        assert_relative_eq!(h[(ix(G, 0, 1), ix(XV, 0, 0))].re, 0.05);
        assert!(h[(ix(G, 0, 1), ix(XH, 0, 0))].norm() < 1e-15);
        assert!(h[(ix(G, 2, 0), ix(XH, 1, 0))].re > 0.05);
        assert!((&h - h.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn static_hamiltonian_conserves_excitation_number() {
        let h = build_static_hamiltonian(&SystemParams::table1()).unwrap();
        let s = HilbertSpace::new(2).unwrap();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                if s.excitation(i) != s.excitation(j) {
                    assert!(h[(i, j)].norm() < 1e-15, "({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn tpe_hamiltonian_at_peak_and_far_away() {
        let p = SystemParams::table1();
        let pulse = p.tpe_pulse(PI).unwrap();
        let h = build_tpe_hamiltonian(&p, &pulse, 0.0).unwrap();
        let s = HilbertSpace::new(2).unwrap();
        let ix = |q| s.index(q, 0, 0).unwrap();
        let expect = -0.5 * HBAR_MEV_PS * pulse.envelope(0.0);
        for (a, b) in [(G, XH), (G, XV), (XH, XX), (XV, XX)] {
            assert_relative_eq!(h[(ix(a), ix(b))].re, expect, max_relative = 1e-12);
            assert_relative_eq!(h[(ix(b), ix(a))].re, expect, max_relative = 1e-12);
        }
        assert!(h[(ix(G), ix(XX))].norm() == 0.0);
        assert!(max_abs(&build_tpe_hamiltonian(&p, &pulse, 100.0).unwrap()) == 0.0);
        let stim = p.stim_pulse(PI).unwrap();
        assert!(build_tpe_hamiltonian(&p, &stim, 0.0).is_err());
    }

    #[test]
    fn stim_hamiltonian_carries_laser_phase() {
        let p = SystemParams::table1();
        let pulse = p.stim_pulse(PI).unwrap();
        let s = HilbertSpace::new(2).unwrap();
        let (g, xh, xv) = (s.index(G, 0, 0).unwrap(), s.index(XH, 0, 0).unwrap(), s.index(XV, 0, 0).unwrap());
        let t = p.delay_ps + 0.3;
        let h = build_stim_hamiltonian(&p, &pulse, t).unwrap();
        let expect = Complex64::from_polar(0.5 * HBAR_MEV_PS * pulse.envelope(t), PI + p.delta_stim_mev / HBAR_MEV_PS * t);
        assert!((h[(g, xh)] - expect).norm() < 1e-12);
        assert!((h[(xh, g)] - expect.conj()).norm() < 1e-12);
        assert!(h[(g, xv)].norm() == 0.0);
        assert!((&h - h.adjoint()).norm() < 1e-14);

        let resonant = SystemParams { delta_stim_mev: 0.0, ..p };
        let h0 = build_stim_hamiltonian(&resonant, &pulse, t).unwrap();
        assert!(h0.iter().all(|z| z.im.abs() < 1e-15));
        assert!(max_abs(&build_stim_hamiltonian(&p, &pulse, -30.0).unwrap()) == 0.0);
    }

    #[test]
    fn cavity_decay_of_one_photon() {
        let s = HilbertSpace::new(2).unwrap();
        let one = s.basis_state(G, 1, 0).unwrap();
        let a = s.embed(&s.annihilation(), Subsystem::PhotonH).unwrap();
        let d = lindblad_dissipator(&one, &a, 0.577).unwrap();
        let (i0, i1) = (s.index(G, 0, 0).unwrap(), s.index(G, 1, 0).unwrap());
        assert_relative_eq!(d[(i1, i1)].re, -0.577, max_relative = 1e-14);
        assert_relative_eq!(d[(i0, i0)].re, 0.577, max_relative = 1e-14);
        assert!(d.trace().norm() < 1e-15);
    }

    #[test]
    fn dissipator_edge_cases() {
        let s = HilbertSpace::new(1).unwrap();
        let rho = s.ground_state();
        let a = s.embed(&s.annihilation(), Subsystem::PhotonH).unwrap();
        assert!(max_abs(&lindblad_dissipator(&rho, &a, 0.0).unwrap()) == 0.0);
        assert!(matches!(lindblad_dissipator(&rho, &a, -1.0), Err(Error::Domain(_))));
        assert!(lindblad_dissipator(&rho, &Operator::identity(3, 3), 1.0).is_err());
    }

    #[test]
    fn ground_state_is_stationary_without_pulses() {
        let p = SystemParams::table1();
        let rho = HilbertSpace::new(2).unwrap().ground_state();
        let r = total_rhs(&p, &Pulses::default(), 0.0, &rho).unwrap();
        assert!(max_abs(&r) < 1e-15);
    }

    #[test]
    fn qd_only_operators_drop_cavity() {
        let ops = ModelOperators::qd_only(&SystemParams::table1()).unwrap();
        assert_eq!(ops.space.dim(), 4);
        assert_eq!(ops.jumps.len(), 4);
        assert!(ops.jumps.iter().all(|j| j.rate == 0.001));
        let with_deph = SystemParams { dephasing_per_ps: 0.01, ..SystemParams::table1() };
        assert_eq!(ModelOperators::full(&with_deph).unwrap().jumps.len(), 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn envelope_integrates_to_area(area in 0.0f64..20.0, sigma in 0.2f64..5.0) {
            let p = PulseParams::new(area, sigma, 1.0, PulseRole::Stim).unwrap();
            let (a, b) = p.window();
            let n = 4001;
            let h = (b - a) / (n - 1) as f64;
            let s: f64 = (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * p.envelope(a + i as f64 * h))
                .sum::<f64>() * h;
            prop_assert!((s - area).abs() <= 1e-9 * area.max(1.0));
        }

        #[test]
        fn hamiltonian_is_hermitian(t in -30.0f64..40.0, area in 0.0f64..12.0) {
            let p = SystemParams::table1();
            let ops = ModelOperators::full(&p).unwrap();
            let pulses = Pulses::new(Some(p.tpe_pulse(area).unwrap()), Some(p.stim_pulse(area).unwrap())).unwrap();
            let h = ops.hamiltonian(&p, &pulses, t);
            prop_assert!((&h - h.adjoint()).norm() < 1e-13);
        }

        #[test]
        fn rhs_is_traceless_hermitian_and_linear(seed in 0u64..1000, t in -10.0f64..25.0, c in -2.0f64..2.0) {
            let p = SystemParams { dephasing_per_ps: 0.02, ..SystemParams::table1() };
            let ops = ModelOperators::full(&p).unwrap();
            let pulses = Pulses::new(Some(p.tpe_pulse(PI).unwrap()), Some(p.stim_pulse(PI).unwrap())).unwrap();
            let r1 = random_state(36, seed);
            let r2 = random_state(36, seed + 7919);
            let f = |r: &Operator| total_rhs_with(&ops, &p, &pulses, t, r).unwrap();
            let d1 = f(&r1);
            prop_assert!(d1.trace().norm() < 1e-12);
            prop_assert!((&d1 - d1.adjoint()).norm() < 1e-12);
            let combo = &r1 + &r2 * Complex64::new(c, 0.0);
            let lhs = f(&combo);
            let rhs = &d1 + f(&r2) * Complex64::new(c, 0.0);
            prop_assert!((lhs - rhs).norm() < 1e-11);
        }
    }
}
