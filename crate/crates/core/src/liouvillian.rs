//! Sparse evaluation of the master-equation generator and its
//! superoperator forms.
//!
//! The generator is written as
//!
//! ```text
//! dρ/dt = K(t) ρ + ρ K(t)† + Σ_k δ_k L_k ρ L_k†,
//! K(t)  = −(i/ħ) Ĥ(t) − ½ Σ_k δ_k L_k† L_k
//! ```
//!
//! which is algebraically identical to the commutator-plus-dissipator form
//! but only touches the few non-zero entries of each operator.
//!
//! Vectorization is row-major: `vec(ρ)[i·d + j] = ρ_ij`, so
//! `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::hilbert::{HilbertSpace, Operator, ZERO};
use crate::model::{ModelOperators, Pulses, SystemParams, HBAR_MEV_PS};

/// Coordinate-format complex matrix.
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseOp {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub(crate) fn from_dense(m: &Operator) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    pub(crate) fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    /// `out += c · A ρ` (column-major storage of `ρ` and `out`).
    #[inline]
    fn left_mul_acc(&self, c: Complex64, rho: &[Complex64], out: &mut [Complex64], n: usize) {
        for &(i, k, v) in &self.entries {
            let cv = c * v;
            for j in 0..n {
                out[i + j * n] += cv * rho[k + j * n];
            }
        }
    }

    /// `out += ρ (c · A)†`.
    #[inline]
    fn right_mul_adj_acc(&self, c: Complex64, rho: &[Complex64], out: &mut [Complex64], n: usize) {
        for &(j, l, v) in &self.entries {
            let cv = (c * v).conj();
            let (src, dst) = (l * n, j * n);
            for i in 0..n {
                out[dst + i] += cv * rho[src + i];
            }
        }
    }

    /// `out += c · (A ρ + ρ A†)` with `A†` taken of the whole term.
    fn sandwich_acc(&self, rate: f64, rho: &[Complex64], out: &mut [Complex64], n: usize) {
        for &(j, l, b) in &self.entries {
            let bc = b.conj() * rate;
            for &(i, k, a) in &self.entries {
                out[i + j * n] += a * bc * rho[k + l * n];
            }
        }
    }
}

/// Fast master-equation generator for one parameter set.
#[derive(Clone, Debug)]
pub struct Generator {
    space: HilbertSpace,
    dim: usize,
    delta_stim_rad_per_ps: f64,
    k_static: SparseOp,
    tpe: SparseOp,
    stim: SparseOp,
    stim_adj: SparseOp,
    jumps: Vec<(SparseOp, f64)>,
    excitation: Vec<usize>,
}

impl Generator {
    pub fn new(ops: &ModelOperators, params: &SystemParams) -> Self {
        let dim = ops.space.dim();
        let mut k = &ops.h_static * Complex64::new(0.0, -1.0 / HBAR_MEV_PS);
        for j in &ops.jumps {
            k -= (j.op.adjoint() * &j.op) * Complex64::new(0.5 * j.rate, 0.0);
        }
        Self {
            space: ops.space,
            dim,
            delta_stim_rad_per_ps: params.delta_stim_mev / HBAR_MEV_PS,
            k_static: SparseOp::from_dense(&k),
            tpe: SparseOp::from_dense(&ops.tpe_coupling),
            stim: SparseOp::from_dense(&ops.stim_transition),
            stim_adj: SparseOp::from_dense(&ops.stim_transition.adjoint()),
            jumps: ops
                .jumps
                .iter()
                .filter(|j| j.rate > 0.0)
                .map(|j| (SparseOp::from_dense(&j.op), j.rate))
                .collect(),
            excitation: ops.space.excitations(),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = dρ/dt` at time `t`.
    pub fn rhs_into(&self, pulses: &Pulses, t: f64, rho: &Operator, out: &mut Operator) {
        let n = self.dim;
        out.fill(ZERO);
        let r = rho.as_slice();
        let o = out.as_mut_slice();
        let one = Complex64::new(1.0, 0.0);
        self.k_static.left_mul_acc(one, r, o, n);
        self.k_static.right_mul_adj_acc(one, r, o, n);
        if let Some(p) = &pulses.tpe {
            let f = p.envelope(t);
            if f != 0.0 {
                // −(i/ħ)·(−ħ f/2) = i f/2
                let c = Complex64::new(0.0, 0.5 * f);
                self.tpe.left_mul_acc(c, r, o, n);
                self.tpe.right_mul_adj_acc(c, r, o, n);
            }
        }
        if let Some(p) = &pulses.stim {
            let f = p.envelope(t);
            if f != 0.0 {
                let phase = Complex64::from_polar(1.0, self.delta_stim_rad_per_ps * t);
                let c = Complex64::new(0.0, 0.5 * f) * phase;
                let c_adj = Complex64::new(0.0, 0.5 * f) * phase.conj();
                self.stim.left_mul_acc(c, r, o, n);
                self.stim.right_mul_adj_acc(c, r, o, n);
                self.stim_adj.left_mul_acc(c_adj, r, o, n);
                self.stim_adj.right_mul_adj_acc(c_adj, r, o, n);
            }
        }
        for (l, rate) in &self.jumps {
            l.sandwich_acc(*rate, r, o, n);
        }
    }

    pub fn rhs(&self, pulses: &Pulses, t: f64, rho: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        self.rhs_into(pulses, t, rho, &mut out);
        out
    }

    /// Partition of the Liouville space into sets of matrix elements that
    /// the undriven generator never mixes: `ρ_ij` with a fixed difference
    /// `N(j) − N(i) = k` of excitation numbers. Only `k ≥ 0` is returned;
    /// the `k < 0` elements are complex conjugates.
    pub(crate) fn chains(&self) -> Vec<Chain> {
        let n = self.dim;
        let max_exc = *self.excitation.iter().max().unwrap_or(&0);
        let mut chains: Vec<Chain> = (0..=max_exc)
            .map(|k| Chain { offset: k, pairs: Vec::new() })
            .collect();
        let mut position = vec![usize::MAX; n * n];
        for i in 0..n {
            for j in 0..n {
                let (ei, ej) = (self.excitation[i], self.excitation[j]);
                if ej >= ei {
                    let c = &mut chains[ej - ei];
                    position[i * n + j] = c.pairs.len();
                    c.pairs.push((i, j));
                }
            }
        }
        chains.retain(|c| !c.pairs.is_empty());
        chains
    }

    /// Dense undriven generator restricted to one chain.
    pub(crate) fn chain_matrix(&self, chain: &Chain) -> DMatrix<Complex64> {
        let n = self.dim;
        let m = chain.pairs.len();
        let mut index = vec![usize::MAX; n * n];
        for (p, &(i, j)) in chain.pairs.iter().enumerate() {
            index[i * n + j] = p;
        }
        let lookup = |i: usize, j: usize| -> usize {
            let p = index[i * n + j];
            assert!(
                p != usize::MAX,
                "undriven generator couples ({i},{j}) outside its excitation chain"
            );
            p
        };
        // Row lists of K for the left product and of K for the right adjoint.
        let mut k_rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for &(i, k, v) in self.k_static.entries() {
            k_rows[i].push((k, v));
        }
        let mut out = DMatrix::<Complex64>::zeros(m, m);
        for (p, &(i, j)) in chain.pairs.iter().enumerate() {
            // (Kρ)_ij = Σ_k K_ik ρ_kj
            for &(k, v) in &k_rows[i] {
                out[(p, lookup(k, j))] += v;
            }
            // (ρK†)_ij = Σ_l ρ_il conj(K_jl)
            for &(l, v) in &k_rows[j] {
                out[(p, lookup(i, l))] += v.conj();
            }
        }
        for (l, rate) in &self.jumps {
            let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
            for &(i, k, v) in l.entries() {
                rows[i].push((k, v));
            }
            for (p, &(i, j)) in chain.pairs.iter().enumerate() {
                for &(a, va) in &rows[i] {
                    for &(b, vb) in &rows[j] {
                        out[(p, lookup(a, b))] += va * vb.conj() * *rate;
                    }
                }
            }
        }
        out
    }
}

/// Matrix elements `ρ_ij` with `N(j) − N(i) = offset`.
#[derive(Clone, Debug)]
pub(crate) struct Chain {
    pub offset: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl Chain {
    pub(crate) fn gather(&self, rho: &Operator) -> DVector<Complex64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(i, j)| rho[(i, j)]))
    }

    pub(crate) fn scatter(&self, v: &DVector<Complex64>, rho: &mut Operator) {
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            rho[(i, j)] = v[p];
            if self.offset > 0 {
                rho[(j, i)] = v[p].conj();
            }
        }
    }
}

/// Dense vectorized Liouvillian of the undriven model, assembled from the
/// dense operators with Kronecker products. Independent of [`Generator`];
/// used as the matrix-exponential reference.
pub fn dense_liouvillian(ops: &ModelOperators) -> DMatrix<Complex64> {
    let d = ops.space.dim();
    let id = Operator::identity(d, d);
    let mi = Complex64::new(0.0, -1.0 / HBAR_MEV_PS);
    let h = &ops.h_static;
    let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * mi;
    for j in &ops.jumps {
        if j.rate == 0.0 {
            continue;
        }
        let ldl = j.op.adjoint() * &j.op;
        let term = j.op.kronecker(&j.op.map(|z| z.conj()))
            - ldl.kronecker(&id) * Complex64::new(0.5, 0.0)
            - id.kronecker(&ldl.transpose()) * Complex64::new(0.5, 0.0);
        l += term * Complex64::new(j.rate, 0.0);
    }
    l
}

/// Row-major vectorization.
pub fn vectorize(rho: &Operator) -> DVector<Complex64> {
    let d = rho.nrows();
    DVector::from_fn(d * d, |p, _| rho[(p / d, p % d)])
}

pub fn unvectorize(v: &DVector<Complex64>, d: usize) -> Operator {
    Operator::from_fn(d, d, |i, j| v[i * d + j])
}
