//! Composite Hilbert space of the four-level quantum dot and two truncated
//! cavity modes, plus the dense operator bookkeeping built on top of it.
//!
//! Basis ordering is QD-major, then the H-mode Fock number, then the V-mode
//! Fock number:
//!
//! ```text
//! index(qd, n_h, n_v) = qd * (n_max + 1)^2 + n_h * (n_max + 1) + n_v
//! ```
//!
//! with `qd` ordered as `g, xH, xV, xx`. CSV dumps of density-matrix
//! elements rely on this ordering staying fixed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex operator on some (sub)space.
pub type Operator = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Electronic configuration of the quantum dot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QdState {
    G,
    #[serde(rename = "xH")]
    XH,
    #[serde(rename = "xV")]
    XV,
    XX,
}

impl QdState {
    pub const ALL: [QdState; 4] = [QdState::G, QdState::XH, QdState::XV, QdState::XX];

    pub fn index(self) -> usize {
        match self {
            QdState::G => 0,
            QdState::XH => 1,
            QdState::XV => 2,
            QdState::XX => 3,
        }
    }

    /// Number of electron-hole pairs.
    pub fn excitations(self) -> usize {
        match self {
            QdState::G => 0,
            QdState::XH | QdState::XV => 1,
            QdState::XX => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<QdState> {
        QdState::ALL.get(i).copied()
    }
}

/// Tensor factor selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsystem {
    Qd,
    PhotonH,
    PhotonV,
}

/// QD ⊗ photon-H ⊗ photon-V with both modes truncated at `n_max` photons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    n_max: usize,
}

impl HilbertSpace {
    pub const DIM_QD: usize = 4;

    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Domain(
                "n_max must be at least 1 (highest Fock state per mode)".into(),
            ));
        }
        Ok(Self { n_max })
    }

    /// The bare quantum dot: both modes truncated to the vacuum, so every
    /// photon operator is identically zero. Used by the QD-only approximation.
    pub fn qd_only() -> Self {
        Self { n_max: 0 }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        Self::DIM_QD * self.fock_dim() * self.fock_dim()
    }

    pub fn subsystem_dim(&self, subsystem: Subsystem) -> usize {
        match subsystem {
            Subsystem::Qd => Self::DIM_QD,
            Subsystem::PhotonH | Subsystem::PhotonV => self.fock_dim(),
        }
    }

    pub fn index(&self, qd: QdState, n_h: usize, n_v: usize) -> Result<usize> {
        if n_h > self.n_max || n_v > self.n_max {
            return Err(Error::Domain(format!(
                "Fock numbers ({n_h}, {n_v}) exceed n_max = {}",
                self.n_max
            )));
        }
        Ok(self.index_unchecked(qd.index(), n_h, n_v))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, qd: usize, n_h: usize, n_v: usize) -> usize {
        let f = self.fock_dim();
        qd * f * f + n_h * f + n_v
    }

    /// Inverse of [`HilbertSpace::index`].
    pub fn state(&self, index: usize) -> Result<(QdState, usize, usize)> {
        if index >= self.dim() {
            return Err(Error::Domain(format!(
                "basis index {index} out of range for dimension {}",
                self.dim()
            )));
        }
        let f = self.fock_dim();
        let qd = QdState::ALL[index / (f * f)];
        let rest = index % (f * f);
        Ok((qd, rest / f, rest % f))
    }

    /// Total excitation number (electron-hole pairs plus photons) of a basis
    /// state. The undriven Hamiltonian conserves it and every jump operator
    /// lowers it by one.
    pub fn excitation(&self, index: usize) -> usize {
        let f = self.fock_dim();
        let qd = QdState::ALL[index / (f * f)];
        let rest = index % (f * f);
        qd.excitations() + rest / f + rest % f
    }

    pub fn excitations(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.excitation(i)).collect()
    }

    /// Bosonic annihilation operator on a single truncated mode.
    pub fn annihilation(&self) -> Operator {
        let f = self.fock_dim();
        let mut a = Operator::zeros(f, f);
        for n in 1..f {
            a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    /// `|a⟩⟨b|` on the QD factor.
    pub fn qd_transition(a: QdState, b: QdState) -> Operator {
        let mut op = Operator::zeros(Self::DIM_QD, Self::DIM_QD);
        op[(a.index(), b.index())] = ONE;
        op
    }

    /// Lift an operator on one factor to the composite space (identity on
    /// the other two factors).
    pub fn embed(&self, op: &Operator, subsystem: Subsystem) -> Result<Operator> {
        let d = self.subsystem_dim(subsystem);
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::Domain(format!(
                "operator is {}x{} but {subsystem:?} has dimension {d}",
                op.nrows(),
                op.ncols()
            )));
        }
        let id_qd = Operator::identity(Self::DIM_QD, Self::DIM_QD);
        let id_f = Operator::identity(self.fock_dim(), self.fock_dim());
        Ok(match subsystem {
            Subsystem::Qd => op.kronecker(&id_f).kronecker(&id_f),
            Subsystem::PhotonH => id_qd.kronecker(op).kronecker(&id_f),
            Subsystem::PhotonV => id_qd.kronecker(&id_f).kronecker(op),
        })
    }

    /// Reduced density matrix of one factor.
    pub fn partial_trace(&self, rho: &DensityMatrix, keep: Subsystem) -> Result<Operator> {
        let m = rho.matrix();
        if m.nrows() != self.dim() {
            return Err(Error::Domain(format!(
                "density matrix has dimension {} but the space has {}",
                m.nrows(),
                self.dim()
            )));
        }
        Ok(self.partial_trace_raw(m, keep))
    }

    pub(crate) fn partial_trace_raw(&self, m: &Operator, keep: Subsystem) -> Operator {
        let f = self.fock_dim();
        let d = self.subsystem_dim(keep);
        let mut out = Operator::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = ZERO;
                match keep {
                    Subsystem::Qd => {
                        for nh in 0..f {
                            for nv in 0..f {
                                acc += m[(
                                    self.index_unchecked(a, nh, nv),
                                    self.index_unchecked(b, nh, nv),
                                )];
                            }
                        }
                    }
                    Subsystem::PhotonH => {
                        for q in 0..Self::DIM_QD {
                            for nv in 0..f {
                                acc += m[(
                                    self.index_unchecked(q, a, nv),
                                    self.index_unchecked(q, b, nv),
                                )];
                            }
                        }
                    }
                    Subsystem::PhotonV => {
                        for q in 0..Self::DIM_QD {
                            for nh in 0..f {
                                acc += m[(
                                    self.index_unchecked(q, nh, a),
                                    self.index_unchecked(q, nh, b),
                                )];
                            }
                        }
                    }
                }
                out[(a, b)] = acc;
            }
        }
        out
    }

    /// Pure product state `|qd, n_h, n_v⟩⟨qd, n_h, n_v|`.
    pub fn basis_state(&self, qd: QdState, n_h: usize, n_v: usize) -> Result<DensityMatrix> {
        let i = self.index(qd, n_h, n_v)?;
        let mut m = Operator::zeros(self.dim(), self.dim());
        m[(i, i)] = ONE;
        Ok(DensityMatrix(m))
    }

    /// QD and both modes in their ground states.
    pub fn ground_state(&self) -> DensityMatrix {
        let mut m = Operator::zeros(self.dim(), self.dim());
        m[(0, 0)] = ONE;
        DensityMatrix(m)
    }
}

/// Tolerances on the state invariants.
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;
pub const CAUCHY_SCHWARZ_TOL: f64 = 1e-10;

/// Density operator on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Wrap a matrix, checking the state invariants.
    pub fn new(m: Operator) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    /// Wrap without validation (for generator arguments and intermediate
    /// integration stages).
    pub fn from_matrix_unchecked(m: Operator) -> Self {
        Self(m)
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        Self::new(&v * v.adjoint())
    }

    /// Identity divided by the dimension.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Operator::identity(dim, dim) / Complex64::new(dim as f64, 0.0))
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - ONE).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.nrows() != self.0.ncols() {
            return Err(Error::Domain("density matrix must be square".into()));
        }
        if self.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("density matrix has non-finite entries".into()));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::Domain(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.trace_error();
        if tr > TRACE_TOL {
            return Err(Error::Domain(format!("density matrix trace off by {tr:e}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -POSITIVITY_TOL {
            return Err(Error::Domain(format!(
                "density matrix has negative eigenvalue {lmin:e}"
            )));
        }
        Ok(())
    }
}

/// Largest entry of `|M - M†|`.
pub fn hermiticity_error(m: &Operator) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of the Hermitian part of `m`.
///
/// Uses faer's self-adjoint solver, which stays accurate on the strongly
/// graded density matrices of the radiative tail. Returns NaN if the solver
/// does not converge.
pub fn min_eigenvalue(m: &Operator) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let h = faer::Mat::<Complex64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    match h.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(ev) => ev.into_iter().fold(f64::INFINITY, f64::min),
        Err(_) => f64::NAN,
    }
}

/// Reduced single-mode photon density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedPhotonMatrix(Operator);

impl ReducedPhotonMatrix {
    pub fn new(m: Operator) -> Result<Self> {
        let r = Self(m);
        DensityMatrix(r.0.clone()).validate()?;
        let (p00, p11, c) = (r.population(0), r.population(1), r.coherence_01().norm());
        if c * c > p00 * p11 + CAUCHY_SCHWARZ_TOL {
            return Err(Error::Domain(format!(
                "|rho01|^2 = {:e} exceeds rho00*rho11 = {:e}",
                c * c,
                p00 * p11
            )));
        }
        Ok(r)
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn population(&self, n: usize) -> f64 {
        self.0[(n, n)].re
    }

    /// `ρ_{0,1}`; its modulus is the photon-number coherence.
    pub fn coherence_01(&self) -> Complex64 {
        self.0[(0, 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_index_examples() {
        let s = HilbertSpace::new(2).unwrap();
        assert_eq!(s.index(QdState::G, 0, 0).unwrap(), 0);
        assert_eq!(s.index(QdState::XX, 2, 2).unwrap(), 35);
        assert_eq!(s.index(QdState::XH, 1, 0).unwrap(), 12);
        assert!(s.index(QdState::G, 3, 0).is_err());
    }

    #[test]
    fn basis_index_is_a_bijection() {
        for n_max in 1..=3 {
            let s = HilbertSpace::new(n_max).unwrap();
            assert_eq!(s.dim(), 4 * (n_max + 1) * (n_max + 1));
            let mut seen = vec![false; s.dim()];
            for qd in QdState::ALL {
                for nh in 0..=n_max {
                    for nv in 0..=n_max {
                        let i = s.index(qd, nh, nv).unwrap();
                        assert!(!seen[i]);
                        seen[i] = true;
                        assert_eq!(s.state(i).unwrap(), (qd, nh, nv));
                    }
                }
            }
            assert!(seen.into_iter().all(|b| b));
        }
    }

    #[test]
    fn zero_cutoff_is_rejected() {
        assert!(HilbertSpace::new(0).is_err());
    }

    #[test]
    fn embedding_identity_and_dimension_errors() {
        let s = HilbertSpace::new(2).unwrap();
        let id = s.embed(&Operator::identity(4, 4), Subsystem::Qd).unwrap();
        assert_eq!(id, Operator::identity(36, 36));
        assert!(s.embed(&Operator::identity(3, 3), Subsystem::Qd).is_err());
        assert!(s.embed(&Operator::identity(4, 4), Subsystem::PhotonH).is_err());
    }

    #[test]
    fn embedded_number_operator_has_fock_eigenvalue() {
        let s = HilbertSpace::new(2).unwrap();
        let a = s.annihilation();
        let n = s.embed(&(a.adjoint() * &a), Subsystem::PhotonH).unwrap();
        let i = s.index(QdState::G, 2, 1).unwrap();
        let mut v = nalgebra::DVector::<Complex64>::zeros(s.dim());
        v[i] = ONE;
        let nv = &n * &v;
        assert_abs_diff_eq!((nv - v * c(2.0)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn embedded_lowering_acts_on_h_mode() {
        let s = HilbertSpace::new(2).unwrap();
        let a_h = s.embed(&s.annihilation(), Subsystem::PhotonH).unwrap();
        let mut v = nalgebra::DVector::<Complex64>::zeros(s.dim());
        v[s.index(QdState::G, 1, 0).unwrap()] = ONE;
        let out = &a_h * &v;
        let mut expected = nalgebra::DVector::<Complex64>::zeros(s.dim());
        expected[s.index(QdState::G, 0, 0).unwrap()] = ONE;
        assert_abs_diff_eq!((out - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn embedding_preserves_matrix_unit_norms() {
        let s = HilbertSpace::new(2).unwrap();
        for a in QdState::ALL {
            for b in QdState::ALL {
                let unit = HilbertSpace::qd_transition(a, b);
                let e = s.embed(&unit, Subsystem::Qd).unwrap();
                // ‖|a⟩⟨b| ⊗ 1‖₂ = 1: the spectral norm is the largest singular value.
                let sv = e.singular_values();
                let max = sv.iter().copied().fold(0.0, f64::max);
                assert_abs_diff_eq!(max, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let s = HilbertSpace::new(2).unwrap();
        let rho = s.basis_state(QdState::XH, 1, 0).unwrap();
        let r = s.partial_trace(&rho, Subsystem::PhotonH).unwrap();
        let mut expected = Operator::zeros(3, 3);
        expected[(1, 1)] = ONE;
        assert_eq!(r, expected);
    }

    #[test]
    fn partial_trace_of_maximally_mixed_state() {
        let s = HilbertSpace::new(2).unwrap();
        let rho = DensityMatrix::maximally_mixed(s.dim());
        let r = s.partial_trace(&rho, Subsystem::Qd).unwrap();
        assert_abs_diff_eq!(
            (r - Operator::identity(4, 4) * c(0.25)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn entanglement_removes_reduced_coherence() {
        // (|g,0_H⟩ + |xH,1_H⟩)/√2 ⊗ |0_V⟩: tracing the QD leaves diag(1/2, 1/2).
        let s = HilbertSpace::new(2).unwrap();
        let mut amp = vec![ZERO; s.dim()];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amp[s.index(QdState::G, 0, 0).unwrap()] = c(h);
        amp[s.index(QdState::XH, 1, 0).unwrap()] = c(h);
        let rho = DensityMatrix::pure(&amp).unwrap();
        let r = s.partial_trace(&rho, Subsystem::PhotonH).unwrap();
        assert_abs_diff_eq!(r[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(0, 1)].norm(), 0.0, epsilon = 1e-15);
        let reduced = ReducedPhotonMatrix::new(r).unwrap();
        assert_eq!(reduced.coherence_01().norm(), 0.0);
    }

    #[test]
    fn min_eigenvalue_of_graded_rank_one_state() {
        // Nearly pure state recorded mid-pulse; the complex QR sweep returns NaN here.
        let z = Complex64::new;
        let mut m = Operator::zeros(16, 16);
        for (i, j, v) in [
            (0, 0, z(1.464934033314039e-1, 0.0)),
            (0, 4, z(4.00704953620055e-3, -3.5357747335740136e-1)),
            (0, 12, z(1.9676534336058124e-13, 1.2319081006914015e-12)),
            (4, 4, z(8.535065966685966e-1, 0.0)),
            (4, 12, z(-2.9679392914962383e-12, 5.085796261832601e-13)),
            (12, 12, z(2.0579192426016878e-16, 0.0)),
        ] {
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(12, 0)] += z(1e-18, -3e-18);
        let ev = min_eigenvalue(&m);
        assert!(ev.is_finite() && ev.abs() < 1e-13, "{ev}");
    }

    fn load_state(text: &str) -> Operator {
        let mut m = Operator::zeros(36, 36);
        for line in text.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
            m[(i, j)] = Complex64::new(f[2].parse().unwrap(), f[3].parse().unwrap());
        }
        m
    }

    #[test]
    fn min_eigenvalue_of_graded_tail_states() {
        // Recorded states whose entries span 1e0 down to 1e-257.
        for text in [include_str!("../tests/data/tail_rho.txt"), include_str!("../tests/data/sparse_tail_rho.txt")] {
            let m = load_state(text);
            let ev = min_eigenvalue(&m);
            assert!(ev.is_finite() && ev.abs() < 1e-15, "{ev}");
        }
    }

    #[test]
    fn min_eigenvalue_matches_known_spectra() {
        let z = Complex64::new;
        let m = Operator::from_row_slice(2, 2, &[z(0.5, 0.0), z(0.0, 0.5), z(0.0, -0.5), z(0.5, 0.0)]);
        assert!(min_eigenvalue(&m).abs() < 1e-15);
        let d = Operator::from_diagonal(&nalgebra::DVector::from_vec(vec![z(0.7, 0.0), z(-0.2, 0.0), z(0.5, 0.0)]));
        assert!((min_eigenvalue(&d) + 0.2).abs() < 1e-15);
        assert_eq!(min_eigenvalue(&Operator::zeros(3, 3)), 0.0);
    }

    #[test]
    fn density_matrix_validation_catches_violations() {
        let mut m = Operator::zeros(2, 2);
        m[(0, 0)] = c(1.2);
        m[(1, 1)] = c(-0.2);
        assert!(DensityMatrix::new(m).is_err());
        let mut m = Operator::zeros(2, 2);
        m[(0, 0)] = c(0.5);
        m[(1, 1)] = c(0.5);
        m[(0, 1)] = Complex64::new(0.1, 0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = Complex64::new(0.1, -0.1);
        assert!(DensityMatrix::new(m).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_state(seed: &[f64], dim: usize) -> DensityMatrix {
            // A A† / tr(A A†) is a valid mixed state for any A.
            let a = Operator::from_fn(dim, dim, |i, j| {
                let k = (i * dim + j) % seed.len();
                Complex64::new(seed[k] * ((i + 2 * j) as f64).cos(), seed[(k + 1) % seed.len()])
            });
            let m = &a * a.adjoint();
            let tr = m.trace();
            DensityMatrix::new(m / tr).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn partial_traces_preserve_trace(seed in proptest::collection::vec(-1.0f64..1.0, 8)) {
                let s = HilbertSpace::new(2).unwrap();
                let rho = random_state(&seed, s.dim());
                for keep in [Subsystem::Qd, Subsystem::PhotonH, Subsystem::PhotonV] {
                    let r = s.partial_trace(&rho, keep).unwrap();
                    prop_assert!((r.trace() - rho.trace()).norm() < 1e-12);
                    prop_assert!(hermiticity_error(&r) < 1e-12);
                }
            }
        }
    }
}
