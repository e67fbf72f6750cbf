//! Many-body Hamiltonians and time evolution of expectation values.
//!
//! Units: ħ = 1, energies in units of the tunnelling `J`, times in `ħ/J`.

pub mod krylov;
pub mod quadrature;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use faer::Mat;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState, SystemShape, DEFAULT_BASIS_LIMIT};
use crate::linalg::{hermitian_eigen, unitary_propagator, HermitianEigen, SparseMatrix, C64, I, ONE, ZERO};
use crate::operators::{
    onsite_interaction, operator_sum_matrix, static_ev, tilt, tunneling, Boundary, Column,
    KParticleOperator, OperatorSum,
};

/// Largest dimension handled by dense diagonalization.
pub const DENSE_LIMIT: usize = 4000;
/// Relative degeneracy tolerance for time averages.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// `H = h + ε V`: a single-particle table plus an optional species-blind interaction.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    single_particle: Mat<C64>,
    interaction: Option<KParticleOperator>,
    epsilon: f64,
}

impl HamiltonianSpec {
    pub fn new(
        single_particle: Mat<C64>,
        interaction: Option<KParticleOperator>,
        epsilon: f64,
    ) -> Result<Self> {
        let m = single_particle.nrows();
        if m == 0 || single_particle.ncols() != m {
            return Err(Error::InvalidInput("single-particle table must be square".into()));
        }
        for i in 0..m {
            for j in 0..m {
                if (single_particle[(i, j)] - single_particle[(j, i)].conj()).norm() > 1e-12 {
                    return Err(Error::NotHermitian);
                }
            }
        }
        if let Some(v) = &interaction {
            if v.modes() != m {
                return Err(Error::InvalidInput("interaction acts on a different mode count".into()));
            }
            if !v.is_hermitian() {
                return Err(Error::NotHermitian);
            }
        }
        Ok(HamiltonianSpec {
            single_particle,
            interaction,
            epsilon,
        })
    }

    /// Single-particle table of a one-particle operator.
    pub fn one_body_table(op: &KParticleOperator) -> Result<Mat<C64>> {
        if op.order() != 1 {
            return Err(Error::WrongOrder {
                expected: "1".into(),
                found: op.order(),
            });
        }
        let m = op.modes();
        let mut h = Mat::<C64>::zeros(m, m);
        for (cols, c) in op.terms() {
            let (a, b) = cols[0];
            h[(a, b)] += c;
        }
        Ok(h)
    }

    /// Bose-Hubbard chain: tunnelling `J`, on-site `U` (as ε with `V = ½Σ n(n−1)`), tilt `F Σ m n_m`.
    pub fn bose_hubbard(j: f64, u: f64, f: f64, modes: usize, boundary: Boundary) -> Result<Self> {
        let mut one = tunneling(j, modes, boundary)?;
        if f != 0.0 {
            one = one.add(&tilt(f, modes)?)?;
        }
        let h = Self::one_body_table(&one)?;
        let v = if modes > 0 { Some(onsite_interaction(1.0, modes)?) } else { None };
        Self::new(h, v, u)
    }

    /// Two-mode Bose-Hubbard dimer.
    pub fn double_well(j: f64, u: f64) -> Result<Self> {
        Self::bose_hubbard(j, u, 0.0, 2, Boundary::HardWall)
    }

    pub fn modes(&self) -> usize {
        self.single_particle.nrows()
    }

    pub fn single_particle(&self) -> &Mat<C64> {
        &self.single_particle
    }

    pub fn interaction(&self) -> Option<&KParticleOperator> {
        self.interaction.as_ref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_interacting(&self) -> bool {
        self.epsilon != 0.0 && self.interaction.as_ref().is_some_and(|v| !v.is_empty())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        HamiltonianSpec {
            epsilon,
            ..self.clone()
        }
    }

    pub fn one_body_operator(&self) -> KParticleOperator {
        let m = self.modes();
        let mut op = KParticleOperator::zero(m, 1);
        for a in 0..m {
            for b in 0..m {
                let c = self.single_particle[(a, b)];
                if c != ZERO {
                    op.add_term(&[a], &[b], c).expect("in range");
                }
            }
        }
        op
    }

    /// Full Hamiltonian as a sum of normal-ordered operators.
    pub fn operator_sum(&self) -> OperatorSum {
        let mut sum = OperatorSum::from_operator(self.one_body_operator());
        if let (Some(v), true) = (&self.interaction, self.epsilon != 0.0) {
            sum.push(v.scale(C64::new(self.epsilon, 0.0))).expect("same modes");
        }
        sum
    }

    /// Interaction operator without the ε prefactor, as an operator sum.
    pub fn interaction_sum(&self) -> OperatorSum {
        let mut sum = OperatorSum::new(self.modes());
        if let Some(v) = &self.interaction {
            sum.push(v.clone()).expect("same modes");
        }
        sum
    }
}

/// Hamiltonian matrix on a Fock basis with a lazily computed eigendecomposition.
#[derive(Debug)]
pub struct ManyBodyHamiltonian {
    basis: Arc<FockBasis>,
    matrix: SparseMatrix,
    eigen: OnceLock<std::result::Result<Arc<HermitianEigen>, Error>>,
}

impl ManyBodyHamiltonian {
    pub fn build(spec: &HamiltonianSpec, basis: Arc<FockBasis>) -> Result<Self> {
        if spec.modes() != basis.modes() {
            return Err(Error::InvalidInput("hamiltonian and basis differ in mode count".into()));
        }
        let matrix = operator_sum_matrix(&spec.operator_sum(), &basis)?;
        Ok(ManyBodyHamiltonian {
            basis,
            matrix,
            eigen: OnceLock::new(),
        })
    }

    /// Hamiltonian on the species sector containing `state`.
    pub fn for_state(spec: &HamiltonianSpec, state: &FockState) -> Result<Self> {
        let basis = FockBasis::sector_of(state, DEFAULT_BASIS_LIMIT)?;
        Self::build(spec, Arc::new(basis))
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> Arc<FockBasis> {
        self.basis.clone()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_dense(&self) -> bool {
        self.dim() <= DENSE_LIMIT
    }

    /// Dense eigendecomposition (computed once).
    pub fn eigen(&self) -> Result<Arc<HermitianEigen>> {
        self.eigen
            .get_or_init(|| hermitian_eigen(&self.matrix.to_dense()).map(Arc::new))
            .clone()
    }

    /// Largest `|[H, N_α]|` matrix element over species number operators.
    pub fn species_blindness_residual(&self) -> f64 {
        let species = self.basis.species();
        let counts: Vec<Vec<i32>> = self
            .basis
            .iter()
            .map(|occ| {
                let mut c = vec![0i32; species];
                for (slot, &n) in occ.iter().enumerate() {
                    c[slot % species] += n as i32;
                }
                c
            })
            .collect();
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for (j, v) in self.matrix.row(i) {
                for a in 0..species {
                    let diff = (counts[j][a] - counts[i][a]).abs() as f64;
                    worst = worst.max(v.norm() * diff);
                }
            }
        }
        worst
    }

    pub fn basis_vector(&self, state: &FockState) -> Result<Vec<C64>> {
        let i = self.basis.index_of(state).ok_or_else(|| {
            Error::InvalidInput(format!("state {state} is not in the Hamiltonian's basis"))
        })?;
        let mut v = vec![ZERO; self.dim()];
        v[i] = ONE;
        Ok(v)
    }

    /// Calls `visit(k, ψ(t_k))` along the evolution of `psi`. Times must be nondecreasing.
    pub fn evolve(
        &self,
        psi: &[C64],
        times: &[f64],
        visit: &mut dyn FnMut(usize, &[C64]) -> Result<()>,
    ) -> Result<()> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("times must be nondecreasing".into()));
        }
        if self.is_dense() {
            let eig = self.eigen()?;
            let c = eig.project(psi);
            let mut phased = vec![ZERO; c.len()];
            for (k, &t) in times.iter().enumerate() {
                for ((p, &ci), &e) in phased.iter_mut().zip(&c).zip(&eig.values) {
                    *p = ci * (-I * e * t).exp();
                }
                visit(k, &eig.reconstruct(&phased))?;
            }
        } else {
            let mut current = psi.to_vec();
            let mut now = 0.0;
            for (k, &t) in times.iter().enumerate() {
                current = krylov::propagate(&self.matrix, &current, t - now)?;
                now = t;
                visit(k, &current)?;
            }
        }
        Ok(())
    }
}

/// Full-basis Hamiltonian for `shape`.
pub fn build_hamiltonian(spec: &HamiltonianSpec, shape: SystemShape) -> Result<ManyBodyHamiltonian> {
    let basis = FockBasis::full(shape, DEFAULT_BASIS_LIMIT)?;
    ManyBodyHamiltonian::build(spec, Arc::new(basis))
}

/// Sampled expectation-value trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub observable: String,
    pub state: String,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        TimeSeries {
            times,
            values,
            observable: String::new(),
            state: String::new(),
        }
    }

    pub fn with_labels(mut self, observable: &str, state: &str) -> Self {
        self.observable = observable.to_string();
        self.state = state.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid step if the grid is uniform (relative tolerance 1e−9).
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        if dt <= 0.0 {
            return None;
        }
        let ok = self
            .times
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - (self.times[0] + k as f64 * dt)).abs() <= 1e-9 * dt.max(1.0) * (k as f64 + 1.0));
        ok.then_some(dt)
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform_step().is_some()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// CSV with header `t,value`, 15 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format_g15(*t));
            out.push(',');
            out.push_str(&format_g15(*v));
            out.push('\n');
        }
        out
    }
}

/// `%.15g`-style formatting.
pub fn format_g15(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `c(t) = exp(−i h t)`.
pub fn single_particle_propagator(h: &Mat<C64>, t: f64) -> Result<Mat<C64>> {
    let m = h.nrows();
    for i in 0..m {
        for j in 0..m {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > 1e-12 {
                return Err(Error::NotHermitian);
            }
        }
    }
    unitary_propagator(h, t)
}

/// Heisenberg-transported coefficients `o'(m', n') = Σ o(m, n) Π c*_{m_i m'_i} c_{n_i n'_i}`.
pub fn transport_operator(op: &KParticleOperator, c: &Mat<C64>) -> KParticleOperator {
    let modes = op.modes();
    let mut acc: HashMap<Vec<Column>, C64> = HashMap::new();
    for (cols, coeff) in op.terms() {
        let mut partial: Vec<(Vec<Column>, C64)> = vec![(Vec::with_capacity(cols.len()), coeff)];
        for &(m, n) in cols {
            let mut next = Vec::with_capacity(partial.len() * modes * modes);
            for (prefix, v) in &partial {
                for mp in 0..modes {
                    let a = c[(m, mp)].conj();
                    if a == ZERO {
                        continue;
                    }
                    for np in 0..modes {
                        let b = c[(n, np)];
                        if b == ZERO {
                            continue;
                        }
                        let mut p = prefix.clone();
                        p.push((mp, np));
                        next.push((p, v * a * b));
                    }
                }
            }
            partial = next;
        }
        for (cols, v) in partial {
            let mut key = cols;
            key.sort_unstable();
            *acc.entry(key).or_insert(ZERO) += v;
        }
    }
    let mut out = KParticleOperator::zero(modes, op.order());
    for (cols, v) in acc {
        let (m, n): (Vec<usize>, Vec<usize>) = cols.into_iter().unzip();
        out.add_term(&m, &n, v).expect("in range");
    }
    out
}

/// Non-interacting evolution by coefficient transport followed by a static evaluation.
pub fn evolve_ev_noninteracting(
    op: &OperatorSum,
    state: &FockState,
    spec: &HamiltonianSpec,
    times: &[f64],
) -> Result<TimeSeries> {
    if spec.is_interacting() {
        return Err(Error::InteractingHamiltonian);
    }
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let c = single_particle_propagator(spec.single_particle(), t)?;
        let mut v = ZERO;
        for term in op.iter() {
            v += static_ev(&transport_operator(term, &c), state)?;
        }
        values.push(v.re);
    }
    Ok(TimeSeries::new(times.to_vec(), values).with_labels("", &state.to_text()))
}

/// Exact evolution `⟨Ψ|e^{iHt} O e^{−iHt}|Ψ⟩` in the state's species sector.
pub fn evolve_ev_exact(
    op: &OperatorSum,
    state: &FockState,
    spec: &HamiltonianSpec,
    times: &[f64],
) -> Result<TimeSeries> {
    let h = ManyBodyHamiltonian::for_state(spec, state)?;
    evolve_ev_with(&h, op, state, times)
}

/// Exact evolution with a prebuilt Hamiltonian.
pub fn evolve_ev_with(
    h: &ManyBodyHamiltonian,
    op: &OperatorSum,
    state: &FockState,
    times: &[f64],
) -> Result<TimeSeries> {
    let o = operator_sum_matrix(op, h.basis())?;
    let psi = h.basis_vector(state)?;
    let mut values = vec![0.0; times.len()];
    h.evolve(&psi, times, &mut |k, v| {
        values[k] = o.sandwich(v, v).re;
        Ok(())
    })?;
    Ok(TimeSeries::new(times.to_vec(), values).with_labels("", &state.to_text()))
}

/// Consecutive runs of sorted values closer than `tol`.
pub fn degenerate_groups(values: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            groups.push((start, i));
            start = i;
        }
    }
    groups
}

fn spectral_tolerance(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(a), Some(b)) => DEGENERACY_TOL * (b - a).max(f64::MIN_POSITIVE),
        _ => 0.0,
    }
}

/// Diagonal-ensemble evaluator for one observable on one dense Hamiltonian.
///
/// Precomputes `V_g† O V_g` for every degenerate group `g`; a state's long-time
/// average is then `Σ_g c_g† (V_g† O V_g) c_g` with `c = V†ψ`.
pub struct DiagonalEnsemble {
    eigen: Arc<HermitianEigen>,
    groups: Vec<(usize, usize)>,
    blocks: Vec<Vec<C64>>,
}

impl DiagonalEnsemble {
    pub fn new(eigen: Arc<HermitianEigen>, observable: &SparseMatrix) -> Self {
        let groups = degenerate_groups(&eigen.values, spectral_tolerance(&eigen.values));
        let n = eigen.dim();
        let mut blocks = Vec::with_capacity(groups.len());
        let mut col = vec![ZERO; n];
        let mut ocol = vec![ZERO; n];
        for &(a, b) in &groups {
            let size = b - a;
            let mut block = vec![ZERO; size * size];
            for j in 0..size {
                for i in 0..n {
                    col[i] = eigen.vectors[(i, a + j)];
                }
                observable.matvec(&col, &mut ocol);
                for i in 0..size {
                    let vi = eigen.vectors.col(a + i);
                    let mut acc = ZERO;
                    for r in 0..n {
                        acc += vi[r].conj() * ocol[r];
                    }
                    block[i * size + j] = acc;
                }
            }
            blocks.push(block);
        }
        DiagonalEnsemble {
            eigen,
            groups,
            blocks,
        }
    }

    fn value_from_coeffs(&self, c: &[C64]) -> f64 {
        let mut total = ZERO;
        for (&(a, b), block) in self.groups.iter().zip(&self.blocks) {
            let size = b - a;
            for i in 0..size {
                let ci = c[a + i].conj();
                if ci == ZERO {
                    continue;
                }
                let mut row = ZERO;
                for j in 0..size {
                    row += block[i * size + j] * c[a + j];
                }
                total += ci * row;
            }
        }
        total.re
    }

    pub fn value(&self, psi: &[C64]) -> f64 {
        self.value_from_coeffs(&self.eigen.project(psi))
    }

    /// Long-time average for the `i`-th basis state.
    pub fn value_basis_state(&self, i: usize) -> f64 {
        let n = self.eigen.dim();
        let c: Vec<C64> = (0..n).map(|k| self.eigen.vectors[(i, k)].conj()).collect();
        self.value_from_coeffs(&c)
    }

    pub fn groups(&self) -> &[(usize, usize)] {
        &self.groups
    }
}

/// Largest real sector handled by the dense real diagonal ensemble.
pub const DENSE_REAL_AVERAGE_LIMIT: usize = 12_000;

/// Diagonal ensemble for a real symmetric Hamiltonian and a real observable,
/// stored in `f64` to halve memory against the complex path.
pub struct RealDiagonalEnsemble {
    vectors: Mat<f64>,
    groups: Vec<(usize, usize)>,
    blocks: Vec<Vec<f64>>,
}

impl RealDiagonalEnsemble {
    pub fn new(h: &SparseMatrix, observable: &SparseMatrix) -> Result<Self> {
        if !h.is_real() || !observable.is_real() {
            return Err(Error::InvalidInput("real diagonal ensemble needs real matrices".into()));
        }
        let n = h.dim();
        let mut dense = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, v) in h.row(i) {
                dense[(i, j)] += v.re;
            }
        }
        let eig = dense
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|_| Error::EigenFailed)?;
        drop(dense);
        let values: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
        let vectors = eig.U().to_owned();
        drop(eig);
        let groups = degenerate_groups(&values, spectral_tolerance(&values));
        let orow: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| observable.row(i).map(|(j, v)| (j, v.re)).collect())
            .collect();
        let mut blocks = Vec::with_capacity(groups.len());
        let mut ocol = vec![0.0; n];
        for &(a, b) in &groups {
            let size = b - a;
            let mut block = vec![0.0; size * size];
            for j in 0..size {
                let col = vectors.col(a + j);
                for (i, o) in ocol.iter_mut().enumerate() {
                    *o = orow[i].iter().map(|&(k, v)| v * col[k]).sum();
                }
                for i in 0..size {
                    let vi = vectors.col(a + i);
                    block[i * size + j] = (0..n).map(|r| vi[r] * ocol[r]).sum();
                }
            }
            blocks.push(block);
        }
        Ok(RealDiagonalEnsemble {
            vectors,
            groups,
            blocks,
        })
    }

    /// Long-time average for the `i`-th basis state.
    pub fn value_basis_state(&self, i: usize) -> f64 {
        let mut total = 0.0;
        for (&(a, b), block) in self.groups.iter().zip(&self.blocks) {
            let size = b - a;
            for p in 0..size {
                let cp = self.vectors[(i, a + p)];
                let mut row = 0.0;
                for q in 0..size {
                    row += block[p * size + q] * self.vectors[(i, a + q)];
                }
                total += cp * row;
            }
        }
        total
    }
}

/// Diagonal-ensemble value through exhaustive Lanczos projections of the state.
pub fn krylov_time_average(h: &SparseMatrix, observable: &SparseMatrix, psi: &[C64]) -> Result<f64> {
    let proj = krylov::spectral_projections(h, psi)?;
    let mut order: Vec<usize> = (0..proj.values.len()).collect();
    order.sort_by(|&a, &b| proj.values[a].total_cmp(&proj.values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| proj.values[i]).collect();
    let range_tol = DEGENERACY_TOL * (2.0 * h.norm_bound()).max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for (a, b) in degenerate_groups(&sorted, range_tol) {
        let mut v = vec![ZERO; psi.len()];
        for &j in &order[a..b] {
            for (vi, pj) in v.iter_mut().zip(&proj.vectors[j]) {
                *vi += pj;
            }
        }
        total += observable.sandwich(&v, &v).re;
    }
    Ok(total)
}

/// Long-time (diagonal-ensemble) average of `⟨O[t]⟩` in the state's sector.
pub fn time_average_ev(op: &OperatorSum, state: &FockState, spec: &HamiltonianSpec) -> Result<f64> {
    let h = ManyBodyHamiltonian::for_state(spec, state)?;
    time_average_with(&h, op, state)
}

pub fn time_average_with(h: &ManyBodyHamiltonian, op: &OperatorSum, state: &FockState) -> Result<f64> {
    let o = operator_sum_matrix(op, h.basis())?;
    let psi = h.basis_vector(state)?;
    if h.is_dense() {
        Ok(DiagonalEnsemble::new(h.eigen()?, &o).value(&psi))
    } else if h.dim() <= DENSE_REAL_AVERAGE_LIMIT && h.matrix().is_real() && o.is_real() {
        let i = h.basis().index_of(state).expect("state in its sector");
        Ok(RealDiagonalEnsemble::new(h.matrix(), &o)?.value_basis_state(i))
    } else {
        krylov_time_average(h.matrix(), &o, &psi)
    }
}

/// First-order term of `⟨O[t]⟩` in ε for `H = H0 + εV`.
///
/// Evaluates `i ∫_0^t ⟨Ψ|[V_I(τ), O_I(t)]|Ψ⟩ dτ` with Gauss–Legendre node doubling
/// (absolute tolerance 1e−8), which equals `∂⟨O[t]⟩/∂ε` at ε = 0.
pub fn first_order_correction(
    op: &OperatorSum,
    state: &FockState,
    spec: &HamiltonianSpec,
    t: f64,
) -> Result<f64> {
    if !op.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let h0 = ManyBodyHamiltonian::for_state(&spec.with_epsilon(0.0), state)?;
    if !h0.is_dense() {
        return Err(Error::BasisTooLarge {
            what: "first-order correction sector".into(),
            dimension: h0.dim() as u128,
            limit: DENSE_LIMIT as u128,
        });
    }
    let eig = h0.eigen()?;
    let n = h0.dim();
    let v = operator_sum_matrix(&spec.interaction_sum(), h0.basis())?;
    let o = operator_sum_matrix(op, h0.basis())?;
    let psi = h0.basis_vector(state)?;
    let c = eig.project(&psi);
    // Ṽ = U† V U in the H0 eigenbasis
    let mut vt = Mat::<C64>::zeros(n, n);
    let mut col = vec![ZERO; n];
    let mut vcol = vec![ZERO; n];
    for k in 0..n {
        for i in 0..n {
            col[i] = eig.vectors[(i, k)];
        }
        v.matvec(&col, &mut vcol);
        let proj = eig.project(&vcol);
        for j in 0..n {
            vt[(j, k)] = proj[j];
        }
    }
    // b = U† O φ(t) with phase e^{iE_k t}
    let phased: Vec<C64> = c
        .iter()
        .zip(&eig.values)
        .map(|(ci, &e)| ci * (-I * e * t).exp())
        .collect();
    let phi_t = eig.reconstruct(&phased);
    let w = eig.project(&o.apply(&phi_t));
    let b: Vec<C64> = w
        .iter()
        .zip(&eig.values)
        .map(|(wi, &e)| wi * (I * e * t).exp())
        .collect();
    let a: Vec<C64> = c.iter().map(|x| x.conj()).collect();
    let energies = eig.values.clone();
    // X(τ) = ⟨φ(τ)|V U0(τ−t) O φ(t)⟩
    let integrand = |tau: f64| -> C64 {
        let left: Vec<C64> = a
            .iter()
            .zip(&energies)
            .map(|(x, &e)| x * (I * e * tau).exp())
            .collect();
        let right: Vec<C64> = b
            .iter()
            .zip(&energies)
            .map(|(x, &e)| x * (-I * e * tau).exp())
            .collect();
        let mut acc = ZERO;
        for j in 0..n {
            if left[j] == ZERO {
                continue;
            }
            let mut row = ZERO;
            for k in 0..n {
                row += vt[(j, k)] * right[k];
            }
            acc += left[j] * row;
        }
        acc
    };
    let (lo, hi) = if t > 0.0 { (0.0, t) } else { (t, 0.0) };
    let mut x = quadrature::integrate_adaptive(integrand, lo, hi, 1e-8, 4096)?;
    if t < 0.0 {
        x = -x;
    }
    // i(X − X*) = −2 Im X
    Ok(-2.0 * x.im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{benchmark_states, SpeciesDistribution};
    use crate::linalg::dense_distance;
    use crate::operators::{density, normal_ordered_product};
    use std::f64::consts::PI;

    fn n1n2() -> OperatorSum {
        let mut op = KParticleOperator::zero(2, 2);
        op.add_term(&[0, 1], &[0, 1], ONE).unwrap();
        op.into()
    }

    fn pair(same: bool) -> FockState {
        let b = if same { 0 } else { 1 };
        FockState::from_entries(2, 2, &[(0, 0, 1), (1, b, 1)]).unwrap()
    }

    #[test]
    fn double_well_blocks() {
        let (j, u) = (1.0, 5.0);
        let spec = HamiltonianSpec::double_well(j, u).unwrap();
        let basis = Arc::new(FockBasis::sector(2, &SpeciesDistribution(vec![1, 1]), 100).unwrap());
        let h = ManyBodyHamiltonian::build(&spec, basis.clone()).unwrap();
        let idx = |entries: &[(usize, usize, u8)]| {
            basis
                .index_of(&FockState::from_entries(2, 2, entries).unwrap())
                .unwrap()
        };
        let both1 = idx(&[(0, 0, 1), (0, 1, 1)]);
        let ab = idx(&[(0, 0, 1), (1, 1, 1)]);
        let ba = idx(&[(0, 1, 1), (1, 0, 1)]);
        let both2 = idx(&[(1, 0, 1), (1, 1, 1)]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = Mat::<C64>::zeros(4, 4);
        t[(both1, 0)] = ONE;
        t[(ab, 1)] = C64::new(s, 0.0);
        t[(ba, 1)] = C64::new(s, 0.0);
        t[(both2, 2)] = ONE;
        t[(ab, 3)] = C64::new(s, 0.0);
        t[(ba, 3)] = C64::new(-s, 0.0);
        let got = t.adjoint() * h.matrix().to_dense() * &t;
        let r2 = 2f64.sqrt();
        let want = [
            [u, -r2 * j, 0.0, 0.0],
            [-r2 * j, 0.0, -r2 * j, 0.0],
            [0.0, -r2 * j, u, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert!((got[(r, c)] - C64::new(want[r][c], 0.0)).norm() < 1e-14);
            }
        }
        // single species: top-left block
        let single = build_hamiltonian(&spec, SystemShape::new(2, 1, 2).unwrap()).unwrap();
        let d = single.matrix().to_dense();
        for r in 0..3 {
            for c in 0..3 {
                assert!((d[(r, c)] - C64::new(want[r][c], 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn free_spectrum_is_sum_of_single_particle_energies() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.3, 3, Boundary::HardWall).unwrap();
        let h = build_hamiltonian(&spec, SystemShape::new(3, 2, 2).unwrap()).unwrap();
        let e = h.eigen().unwrap();
        let sp = hermitian_eigen(spec.single_particle()).unwrap().values;
        // two particles over 3 modes × 2 species: slots with multiplicity
        let mut want = Vec::new();
        let slots: Vec<f64> = sp.iter().flat_map(|&x| [x, x]).collect();
        for a in 0..slots.len() {
            for b in a..slots.len() {
                want.push(slots[a] + slots[b]);
            }
        }
        want.sort_by(f64::total_cmp);
        for (x, y) in e.values.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn species_blindness_witness() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.7, -0.4, 3, Boundary::HardWall).unwrap();
        let h = build_hamiltonian(&spec, SystemShape::new(3, 3, 3).unwrap()).unwrap();
        assert!(h.species_blindness_residual() <= 1e-10);
        assert!(h.matrix().hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn propagator_values() {
        let spec = HamiltonianSpec::double_well(1.0, 0.0).unwrap();
        let t = 0.4;
        let c = single_particle_propagator(spec.single_particle(), t).unwrap();
        assert!((c[(0, 0)] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        // exp(−i h t) with h = −J σx gives +i sin(Jt)
        assert!((c[(0, 1)] - C64::new(0.0, t.sin())).norm() < 1e-14);
        let id = single_particle_propagator(spec.single_particle(), 0.0).unwrap();
        assert!((id[(0, 0)] - ONE).norm() < 1e-15 && id[(0, 1)].norm() < 1e-15);
        let c1 = single_particle_propagator(spec.single_particle(), 0.3).unwrap();
        let c2 = single_particle_propagator(spec.single_particle(), 0.9).unwrap();
        let c12 = single_particle_propagator(spec.single_particle(), 1.2).unwrap();
        assert!(dense_distance(&(&c2 * &c1), &c12) < 1e-13);
    }

    #[test]
    fn hom_suppression_and_single_particle_traces() {
        let spec = HamiltonianSpec::double_well(1.0, 0.0).unwrap();
        let times = [0.0, PI / 8.0, PI / 4.0, 0.6];
        let ti = evolve_ev_noninteracting(&n1n2(), &pair(true), &spec, &times).unwrap();
        let td = evolve_ev_noninteracting(&n1n2(), &pair(false), &spec, &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let r = t.cos().powi(2);
            assert!((ti.values[k] - (1.0 - 2.0 * r).powi(2)).abs() < 1e-12);
            assert!((td.values[k] - (r * r + (1.0 - r).powi(2))).abs() < 1e-12);
        }
        assert!(ti.values[2].abs() < 1e-12);
        let n1: OperatorSum = density(0, 2).unwrap().into();
        let a = evolve_ev_noninteracting(&n1, &pair(true), &spec, &times).unwrap();
        let b = evolve_ev_noninteracting(&n1, &pair(false), &spec, &times).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12 && (x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_and_noninteracting_paths_agree() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.5, 3, Boundary::HardWall).unwrap();
        let state = FockState::from_entries(3, 2, &[(0, 0, 2), (1, 1, 1), (2, 0, 1)]).unwrap();
        let op = normal_ordered_product(&density(0, 3).unwrap(), &density(1, 3).unwrap()).unwrap();
        let times: Vec<f64> = (0..12).map(|k| 0.37 * k as f64).collect();
        let a = evolve_ev_exact(&op, &state, &spec, &times).unwrap();
        let b = evolve_ev_noninteracting(&op, &state, &spec, &times).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
        let inter = spec.with_epsilon(1.0);
        assert_eq!(
            evolve_ev_noninteracting(&op, &state, &inter, &times),
            Err(Error::InteractingHamiltonian)
        );
    }

    #[test]
    fn fig2_initial_values_and_energy_conservation() {
        let spec = HamiltonianSpec::double_well(1.0, 5.0).unwrap();
        let times: Vec<f64> = (0..20).map(|k| 0.25 * k as f64).collect();
        for same in [true, false] {
            let t = evolve_ev_exact(&n1n2(), &pair(same), &spec, &times).unwrap();
            assert!((t.values[0] - 1.0).abs() < 1e-12);
            let e = evolve_ev_exact(&spec.operator_sum(), &pair(same), &spec, &times).unwrap();
            for v in &e.values {
                assert!((v - e.values[0]).abs() < 1e-10);
            }
        }
        // tunnelling energy vanishes for both states without interaction
        let free = spec.with_epsilon(0.0);
        let htun: OperatorSum = tunneling(1.0, 2, Boundary::HardWall).unwrap().into();
        for same in [true, false] {
            let t = evolve_ev_exact(&htun, &pair(same), &free, &times).unwrap();
            assert!(t.values.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn time_average_examples() {
        let spec = HamiltonianSpec::double_well(1.0, 0.0).unwrap();
        let mut ntot = OperatorSum::new(2);
        ntot.push(density(0, 2).unwrap()).unwrap();
        ntot.push(density(1, 2).unwrap()).unwrap();
        let s = pair(true);
        assert!((time_average_ev(&ntot, &s, &spec).unwrap() - 2.0).abs() < 1e-12);
        let n1 = density(0, 2).unwrap();
        let n1sq = normal_ordered_product(&n1, &n1).unwrap();
        let avg = time_average_ev(&n1sq, &s, &spec).unwrap();
        let times: Vec<f64> = (0..=100_000).map(|k| 0.01 * k as f64).collect();
        let trace = evolve_ev_exact(&n1sq, &s, &spec, &times).unwrap();
        assert!((trace.mean() - avg).abs() < 1e-3);
        // an eigenstate: single particle in the symmetric orbital is not a Fock state,
        // but a single-mode system is trivially stationary
        let one = HamiltonianSpec::bose_hubbard(1.0, 2.0, 0.0, 1, Boundary::HardWall).unwrap();
        let st = FockState::from_entries(1, 2, &[(0, 0, 2), (0, 1, 1)]).unwrap();
        let v = onsite_interaction(1.0, 1).unwrap();
        let val = time_average_ev(&v.clone().into(), &st, &one).unwrap();
        assert!((val - static_ev(&v, &st).unwrap().re).abs() < 1e-12);
    }

    #[test]
    fn krylov_paths_match_dense() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.8, 0.3, 4, Boundary::HardWall).unwrap();
        let state = FockState::from_entries(4, 2, &[(0, 0, 2), (1, 1, 1), (3, 0, 1)]).unwrap();
        let h = ManyBodyHamiltonian::for_state(&spec, &state).unwrap();
        let n2 = density(1, 4).unwrap();
        let op = normal_ordered_product(&n2, &n2).unwrap();
        let o = operator_sum_matrix(&op, h.basis()).unwrap();
        let psi = h.basis_vector(&state).unwrap();
        let dense = DiagonalEnsemble::new(h.eigen().unwrap(), &o).value(&psi);
        let lanczos = krylov_time_average(h.matrix(), &o, &psi).unwrap();
        assert!((dense - lanczos).abs() < 1e-8, "{dense} {lanczos}");
        let times = [0.0, 0.5, 1.7, 3.0];
        let mut dense_vals = vec![0.0; 4];
        h.evolve(&psi, &times, &mut |k, v| {
            dense_vals[k] = o.sandwich(v, v).re;
            Ok(())
        })
        .unwrap();
        let mut current = psi.clone();
        let mut now = 0.0;
        for (k, &t) in times.iter().enumerate() {
            current = krylov::propagate(h.matrix(), &current, t - now).unwrap();
            now = t;
            assert!((o.sandwich(&current, &current).re - dense_vals[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_ensemble_of_basis_states() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.4, 0.0, 3, Boundary::HardWall).unwrap();
        let state = FockState::from_entries(3, 1, &[(0, 0, 2), (2, 0, 1)]).unwrap();
        let h = ManyBodyHamiltonian::for_state(&spec, &state).unwrap();
        let o = operator_sum_matrix(&density(0, 3).unwrap().into(), h.basis()).unwrap();
        let de = DiagonalEnsemble::new(h.eigen().unwrap(), &o);
        let i = h.basis().index_of(&state).unwrap();
        let psi = h.basis_vector(&state).unwrap();
        assert!((de.value_basis_state(i) - de.value(&psi)).abs() < 1e-13);
    }

    #[test]
    fn ladder_only_evolution_for_distinguishable_states() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.7, 3, Boundary::HardWall).unwrap();
        let state = FockState::from_entries(3, 1, &[(0, 0, 2), (1, 0, 1), (2, 0, 1)]).unwrap();
        let (_, psi_d) = benchmark_states(&state);
        let n1 = density(0, 3).unwrap();
        let op = normal_ordered_product(&n1, &n1).unwrap();
        let two = op.term(2).unwrap();
        for &t in &[0.3, 1.1, 2.9] {
            let c = single_particle_propagator(spec.single_particle(), t).unwrap();
            let moved = transport_operator(two, &c);
            let dens: Vec<f64> = psi_d.density().0.iter().map(|&x| x as f64).collect();
            let mut ladder = ZERO;
            for m in 0..3 {
                for mp in 0..3 {
                    let w = dens[m] * (dens[mp] - if m == mp { 1.0 } else { 0.0 });
                    ladder += moved.coefficient(&[m, mp], &[m, mp]) * w;
                }
            }
            let full = static_ev(&moved, &psi_d).unwrap();
            assert!((full - ladder).norm() < 1e-12);
        }
    }

    #[test]
    fn first_order_matches_finite_difference() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.4, 3, Boundary::HardWall).unwrap();
        let state = FockState::from_entries(3, 2, &[(0, 0, 2), (1, 1, 1)]).unwrap();
        let op: OperatorSum = density(0, 3).unwrap().into();
        let t = 1.3;
        let fo = first_order_correction(&op, &state, &spec, t).unwrap();
        let eps = 1e-4;
        let plus = evolve_ev_exact(&op, &state, &spec.with_epsilon(eps), &[t]).unwrap().values[0];
        let minus = evolve_ev_exact(&op, &state, &spec.with_epsilon(-eps), &[t]).unwrap().values[0];
        let fd = (plus - minus) / (2.0 * eps);
        assert!((fo - fd).abs() < 1e-6 * fd.abs().max(1.0), "{fo} {fd}");
        assert_eq!(first_order_correction(&op, &state, &spec, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn first_order_vanishes_for_commuting_terms() {
        // no tunnelling: H0 and V are both diagonal, O = n_1 is diagonal
        let h = Mat::<C64>::from_fn(2, 2, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO });
        let spec = HamiltonianSpec::new(h, Some(onsite_interaction(1.0, 2).unwrap()), 0.0).unwrap();
        let state = FockState::from_entries(2, 1, &[(0, 0, 2), (1, 0, 1)]).unwrap();
        let op: OperatorSum = density(0, 2).unwrap().into();
        assert!(first_order_correction(&op, &state, &spec, 1.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn csv_format() {
        let ts = TimeSeries::new(vec![0.0, 0.1, 0.2], vec![1.0, 1.0 / 3.0, -2.5e-7]);
        assert_eq!(ts.to_csv(), "t,value\n0,1\n0.1,0.333333333333333\n0.2,-2.5e-7\n");
        assert!(ts.is_uniform());
        assert!(!TimeSeries::new(vec![0.0, 0.1, 0.3], vec![0.0; 3]).is_uniform());
        assert_eq!(format_g15(123456.0), "123456");
        assert_eq!(format_g15(1e20), "1e20");
    }
}
