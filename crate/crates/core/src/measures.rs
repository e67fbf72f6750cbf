//! Excess fluctuations, the F–I correlation experiment and probe counting.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use faer::Mat;
use num_rational::Ratio;
use rayon::prelude::*;

use crate::dynamics::{
    degenerate_groups, evolve_ev_with, krylov_time_average, DiagonalEnsemble, HamiltonianSpec,
    ManyBodyHamiltonian, RealDiagonalEnsemble, TimeSeries, DEGENERACY_TOL, DENSE_REAL_AVERAGE_LIMIT,
};
use crate::error::{Error, Result};
use crate::fock::{
    benchmark_states, doi, enumerate_up_to_species_permutation, sample_uniform, FockBasis,
    FockState, SpeciesDistribution, SystemShape, DEFAULT_BASIS_LIMIT,
};
use crate::linalg::{hermitian_eigen, C64, ZERO};
use crate::operators::{density, normal_ordered_product, operator_sum_matrix, OperatorSum};

/// `n_l²` as a normal-ordered sum.
pub fn density_squared(l: usize, modes: usize) -> Result<OperatorSum> {
    let n = density(l, modes)?;
    normal_ordered_product(&n, &n)
}

/// Time averages `avg |c_{l,m}(t) c_{l,m'}(t)|²` for all `(m, m')`.
///
/// Expands `c_{l,m} c_{l,m'}` over pairs of single-particle eigenstates and keeps
/// only pairs with equal total energy (within 1e−9 of the spectral range).
pub fn averaged_coefficients(h: &Mat<C64>, l: usize) -> Result<Mat<f64>> {
    let m = h.nrows();
    if l >= m {
        return Err(Error::IndexOutOfRange(format!("site {} of {m}", l + 1)));
    }
    let eig = hermitian_eigen(h)?;
    let u = &eig.vectors;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in a..m {
            pairs.push((eig.values[a] + eig.values[b], a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let sums: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let range = 2.0 * (eig.values[m - 1] - eig.values[0]);
    let groups = degenerate_groups(&sums, DEGENERACY_TOL * range.max(f64::MIN_POSITIVE));
    let mut out = Mat::<f64>::zeros(m, m);
    for mm in 0..m {
        for mp in mm..m {
            let mut total = 0.0;
            for &(s, e) in &groups {
                let mut x = ZERO;
                for &(_, a, b) in &pairs[s..e] {
                    let term = |p: usize, q: usize| {
                        u[(l, p)] * u[(mm, p)].conj() * u[(l, q)] * u[(mp, q)].conj()
                    };
                    x += term(a, b);
                    if a != b {
                        x += term(b, a);
                    }
                }
                total += x.norm_sqr();
            }
            out[(mm, mp)] = total;
            out[(mp, mm)] = total;
        }
    }
    Ok(out)
}

/// Mean and population standard deviation of the off-diagonal averaged coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientStats {
    pub mean: f64,
    pub std: f64,
}

impl CoefficientStats {
    pub fn from_table(c: &Mat<f64>) -> Self {
        let m = c.nrows();
        let vals: Vec<f64> = (0..m)
            .flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| c[(a, b)])
            .collect();
        let n = vals.len().max(1) as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        CoefficientStats {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn for_hamiltonian(h: &Mat<C64>, l: usize) -> Result<Self> {
        Ok(Self::from_table(&averaged_coefficients(h, l)?))
    }

    pub fn relative_spread(&self) -> f64 {
        self.std / self.mean
    }
}

/// `(σ_cc/μ_cc)·min(I, 1−I)`.
pub fn fi_bound(doi: f64, stats: &CoefficientStats) -> f64 {
    stats.relative_spread() * doi.min(1.0 - doi)
}

/// Non-interacting excess fluctuation from a precomputed coefficient table.
pub fn excess_fluctuation_from_table(state: &FockState, c: &Mat<f64>) -> Result<f64> {
    let modes = state.modes();
    let dens = state.density().0;
    let mut num = 0.0;
    let mut den = 0.0;
    for m in 0..modes {
        for mp in 0..modes {
            if m == mp {
                continue;
            }
            den += c[(m, mp)] * (dens[m] * dens[mp]) as f64;
            let same: usize = (0..state.species())
                .map(|a| state.get(m, a) as usize * state.get(mp, a) as usize)
                .sum();
            num += c[(m, mp)] * same as f64;
        }
    }
    if den.abs() <= 1e-14 {
        return Err(Error::NoInterferenceContrast { site: 0 });
    }
    Ok(num / den)
}

/// Excess fluctuation on site `l` for a single-particle Hamiltonian, by the closed form.
pub fn excess_fluctuation_noninteracting(state: &FockState, h: &Mat<C64>, l: usize) -> Result<f64> {
    if h.nrows() != state.modes() {
        return Err(Error::InvalidInput("hamiltonian and state differ in mode count".into()));
    }
    let c = averaged_coefficients(h, l)?;
    excess_fluctuation_from_table(state, &c).map_err(|e| match e {
        Error::NoInterferenceContrast { .. } => Error::NoInterferenceContrast { site: l + 1 },
        other => other,
    })
}

/// Long-time averages of one observable for many states under one Hamiltonian.
///
/// States are mapped to species-sorted sectors so that every state of a sector
/// shares one eigendecomposition; sectors above the dense limit use Lanczos.
pub struct TimeAverager {
    spec: HamiltonianSpec,
    observable: OperatorSum,
}

enum SectorEvaluator {
    Dense {
        basis: Arc<FockBasis>,
        ensemble: DiagonalEnsemble,
    },
    Real {
        basis: Arc<FockBasis>,
        ensemble: RealDiagonalEnsemble,
    },
    Krylov {
        h: ManyBodyHamiltonian,
        o: crate::linalg::SparseMatrix,
    },
}

impl SectorEvaluator {
    fn build(spec: &HamiltonianSpec, observable: &OperatorSum, modes: usize, dist: &SpeciesDistribution) -> Result<Self> {
        let basis = Arc::new(FockBasis::sector(modes, dist, DEFAULT_BASIS_LIMIT)?);
        let h = ManyBodyHamiltonian::build(spec, basis.clone())?;
        let o = operator_sum_matrix(observable, &basis)?;
        if h.is_dense() {
            let ensemble = DiagonalEnsemble::new(h.eigen()?, &o);
            Ok(SectorEvaluator::Dense { basis, ensemble })
        } else if h.dim() <= DENSE_REAL_AVERAGE_LIMIT && h.matrix().is_real() && o.is_real() {
            let ensemble = RealDiagonalEnsemble::new(h.matrix(), &o)?;
            Ok(SectorEvaluator::Real { basis, ensemble })
        } else {
            Ok(SectorEvaluator::Krylov { h, o })
        }
    }

    fn value(&self, state: &FockState) -> Result<f64> {
        match self {
            SectorEvaluator::Dense { basis, ensemble } => {
                let i = basis
                    .index_of(state)
                    .ok_or_else(|| Error::InvalidInput(format!("{state} outside its sector")))?;
                Ok(ensemble.value_basis_state(i))
            }
            SectorEvaluator::Real { basis, ensemble } => {
                let i = basis
                    .index_of(state)
                    .ok_or_else(|| Error::InvalidInput(format!("{state} outside its sector")))?;
                Ok(ensemble.value_basis_state(i))
            }
            SectorEvaluator::Krylov { h, o } => {
                let psi = h.basis_vector(state)?;
                krylov_time_average(h.matrix(), o, &psi)
            }
        }
    }
}

impl TimeAverager {
    pub fn new(spec: HamiltonianSpec, observable: OperatorSum) -> Self {
        TimeAverager { spec, observable }
    }

    /// Averages for every state, in input order.
    pub fn evaluate(&self, states: &[FockState]) -> Result<Vec<f64>> {
        let mut groups: BTreeMap<Vec<usize>, Vec<(usize, FockState)>> = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            let (sorted, _) = s.species_sorted();
            let trimmed = trim_species(&sorted);
            groups
                .entry(trimmed.species_distribution().0.clone())
                .or_default()
                .push((i, trimmed));
        }
        let mut out = vec![0.0; states.len()];
        for (dist, members) in groups {
            let modes = members[0].1.modes();
            let eval = SectorEvaluator::build(&self.spec, &self.observable, modes, &SpeciesDistribution(dist))?;
            let values: Vec<Result<f64>> = members.par_iter().map(|(_, s)| eval.value(s)).collect();
            for ((i, _), v) in members.iter().zip(values) {
                out[*i] = v?;
            }
        }
        Ok(out)
    }
}

/// Drops trailing empty species (the input is species-sorted).
fn trim_species(state: &FockState) -> FockState {
    let dist = state.species_distribution().0;
    let keep = dist.iter().rposition(|&n| n > 0).map_or(1, |p| p + 1);
    if keep == state.species() {
        return state.clone();
    }
    let modes = state.modes();
    let mut occ = vec![0u8; modes * keep];
    for m in 0..modes {
        for a in 0..keep {
            occ[m * keep + a] = state.get(m, a);
        }
    }
    FockState::from_flat(modes, keep, occ).expect("valid table")
}

/// Excess fluctuation of `n_l²` on site `l` under the full many-body dynamics.
pub fn excess_fluctuation(state: &FockState, spec: &HamiltonianSpec, l: usize) -> Result<f64> {
    let modes = state.modes();
    let averager = TimeAverager::new(spec.clone(), density_squared(l, modes)?);
    let (psi_i, psi_d) = benchmark_states(state);
    let v = averager.evaluate(&[state.clone(), psi_i, psi_d])?;
    ratio(v[0], v[1], v[2], l)
}

fn ratio(psi: f64, indist: f64, dist: f64, l: usize) -> Result<f64> {
    let den = indist - dist;
    if den.abs() <= 1e-9 * indist.abs().max(dist.abs()).max(1.0) {
        return Err(Error::NoInterferenceContrast { site: l + 1 });
    }
    Ok((psi - dist) / den)
}

/// One state of an F–I scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FIRecord {
    pub state: FockState,
    pub doi: Ratio<u64>,
    pub f: f64,
    pub species: usize,
}

impl FIRecord {
    pub fn doi_value(&self) -> f64 {
        *self.doi.numer() as f64 / *self.doi.denom() as f64
    }

    pub fn absdev(&self) -> f64 {
        (self.f - self.doi_value()).abs()
    }
}

/// How states of an F–I scan are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSelection {
    /// `samples` uniform draws for each species count in `species`.
    Sampled {
        species: Vec<usize>,
        samples: usize,
        seed: u64,
        /// Drop draws equivalent to an earlier one under species relabelling.
        dedupe: bool,
    },
    /// Every species-permutation class with at most `max_species` species,
    /// two or more occupied modes and two or more occupied species.
    Exhaustive { max_species: usize },
}

#[derive(Debug, Clone)]
pub struct FiConfig {
    pub modes: usize,
    pub particles: usize,
    pub spec: HamiltonianSpec,
    pub site: usize,
    pub selection: StateSelection,
}

#[derive(Debug, Clone)]
pub struct FiSummary {
    pub records: Vec<FIRecord>,
    /// Draws skipped because their DOI is undefined.
    pub skipped: usize,
    pub mean_absdev: f64,
    /// Fraction of records with `|F − I|` above the bound (non-interacting runs only).
    pub bound_violation_fraction: Option<f64>,
    pub stats: Option<CoefficientStats>,
    /// 100×100 counts over `[0,1]²`, indexed `[I bin][F bin]`.
    pub histogram: Vec<Vec<u64>>,
    /// Records with F outside `[0, 1]`.
    pub outside_histogram: usize,
}

pub const HISTOGRAM_BINS: usize = 100;

/// Species-permutation canonical form: nonzero columns in descending order of (total, occupations).
pub fn canonical_species_form(state: &FockState) -> Vec<Vec<u8>> {
    let mut cols: Vec<Vec<u8>> = (0..state.species())
        .map(|a| (0..state.modes()).map(|m| state.get(m, a)).collect())
        .filter(|c: &Vec<u8>| c.iter().any(|&x| x > 0))
        .collect();
    cols.sort_by(|a, b| {
        let ta: u32 = a.iter().map(|&x| x as u32).sum();
        let tb: u32 = b.iter().map(|&x| x as u32).sum();
        tb.cmp(&ta).then(b.cmp(a))
    });
    cols
}

/// States of an F–I scan with their species counts, plus the number of skipped draws.
pub fn fi_states(modes: usize, particles: usize, selection: &StateSelection) -> Result<(Vec<(FockState, usize)>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    match selection {
        StateSelection::Sampled {
            species,
            samples,
            seed,
            dedupe,
        } => {
            for (k, &s) in species.iter().enumerate() {
                let shape = SystemShape::new(modes, s, particles)?;
                let mut seen = std::collections::HashSet::new();
                for st in sample_uniform(shape, *samples, seed.wrapping_add(k as u64))? {
                    if *dedupe && !seen.insert(canonical_species_form(&st)) {
                        continue;
                    }
                    if doi(&st).is_err() {
                        skipped += 1;
                        continue;
                    }
                    out.push((st, s));
                }
            }
        }
        StateSelection::Exhaustive { max_species } => {
            for st in enumerate_up_to_species_permutation(modes, particles, *max_species)? {
                let occupied = st.species_distribution().occupied_species();
                if doi(&st).is_err() || occupied < 2 {
                    skipped += 1;
                    continue;
                }
                out.push((st, occupied));
            }
        }
    }
    Ok((out, skipped))
}

/// Runs an F–I correlation experiment. Non-interacting Hamiltonians use the
/// closed form; interacting ones use many-body time averages.
pub fn fi_experiment(config: &FiConfig) -> Result<FiSummary> {
    if config.spec.modes() != config.modes {
        return Err(Error::InvalidInput("hamiltonian and scan differ in mode count".into()));
    }
    if config.site >= config.modes {
        return Err(Error::IndexOutOfRange(format!("site {} of {}", config.site + 1, config.modes)));
    }
    let (states, mut skipped) = fi_states(config.modes, config.particles, &config.selection)?;
    let mut records = Vec::with_capacity(states.len());
    let mut stats = None;
    if !config.spec.is_interacting() {
        let table = averaged_coefficients(config.spec.single_particle(), config.site)?;
        stats = Some(CoefficientStats::from_table(&table));
        let fs: Vec<Result<f64>> = states
            .par_iter()
            .map(|(s, _)| excess_fluctuation_from_table(s, &table))
            .collect();
        for ((s, sp), f) in states.into_iter().zip(fs) {
            match f {
                Ok(f) => records.push(FIRecord {
                    doi: doi(&s)?.ratio(),
                    state: s,
                    f,
                    species: sp,
                }),
                Err(Error::NoInterferenceContrast { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    } else {
        let averager = TimeAverager::new(
            config.spec.clone(),
            density_squared(config.site, config.modes)?,
        );
        // Ψ_I and Ψ_D depend only on the density; evaluate each once
        let mut bench_index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut bench_states = Vec::new();
        for (s, _) in &states {
            let key = s.density().0;
            if !bench_index.contains_key(&key) {
                let (i, d) = benchmark_states(s);
                bench_index.insert(key, bench_states.len() / 2);
                bench_states.push(trim_species(&i));
                bench_states.push(d);
            }
        }
        let mut all: Vec<FockState> = states.iter().map(|(s, _)| s.clone()).collect();
        let n_states = all.len();
        all.extend(bench_states);
        let values = averager.evaluate(&all)?;
        for (k, (s, sp)) in states.into_iter().enumerate() {
            let b = bench_index[&s.density().0];
            let vi = values[n_states + 2 * b];
            let vd = values[n_states + 2 * b + 1];
            match ratio(values[k], vi, vd, config.site) {
                Ok(f) => records.push(FIRecord {
                    doi: doi(&s)?.ratio(),
                    state: s,
                    f,
                    species: sp,
                }),
                Err(Error::NoInterferenceContrast { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(summarize(records, skipped, stats))
}

fn summarize(records: Vec<FIRecord>, skipped: usize, stats: Option<CoefficientStats>) -> FiSummary {
    let n = records.len().max(1) as f64;
    let mean_absdev = records.iter().map(FIRecord::absdev).sum::<f64>() / n;
    let bound_violation_fraction = stats.map(|st| {
        records
            .iter()
            .filter(|r| r.absdev() > fi_bound(r.doi_value(), &st) + 1e-12)
            .count() as f64
            / n
    });
    let mut histogram = vec![vec![0u64; HISTOGRAM_BINS]; HISTOGRAM_BINS];
    let mut outside = 0;
    let bin = |x: f64| ((x * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    for r in &records {
        if !(0.0..=1.0).contains(&r.f) {
            outside += 1;
            continue;
        }
        histogram[bin(r.doi_value())][bin(r.f)] += 1;
    }
    FiSummary {
        records,
        skipped,
        mean_absdev,
        bound_violation_fraction,
        stats,
        histogram,
        outside_histogram: outside,
    }
}

impl FiSummary {
    /// CSV `state,I,F,absdev`.
    pub fn records_csv(&self) -> String {
        use crate::dynamics::format_g15;
        let mut out = String::from("state,I,F,absdev\n");
        for r in &self.records {
            out.push_str(&format!(
                "\"{}\",{},{},{}\n",
                r.state.to_text(),
                format_g15(r.doi_value()),
                format_g15(r.f),
                format_g15(r.absdev())
            ));
        }
        out
    }

    /// Marginal counts of I and F.
    pub fn marginals(&self) -> (Vec<u64>, Vec<u64>) {
        let i: Vec<u64> = self.histogram.iter().map(|row| row.iter().sum()).collect();
        let f: Vec<u64> = (0..HISTOGRAM_BINS)
            .map(|b| self.histogram.iter().map(|row| row[b]).sum())
            .collect();
        (i, f)
    }
}

/// A state with one particle (species `α̃`) in mode `m̃` and the rest in mode `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub probe_mode: usize,
    pub probe_species: usize,
    pub bulk_mode: usize,
}

impl ProbeConfig {
    /// Identifies the probe layout of `state`.
    pub fn detect(state: &FockState) -> Result<Self> {
        let dens = state.density().0;
        let occupied: Vec<usize> = (0..dens.len()).filter(|&m| dens[m] > 0).collect();
        let bad = || Error::NotProbeConfiguration(state.to_text());
        if occupied.len() != 2 {
            return Err(bad());
        }
        let (a, b) = (occupied[0], occupied[1]);
        let (probe_mode, bulk_mode) = match (dens[a], dens[b]) {
            (1, n) if n >= 1 && (n > 1 || a < b) => (a, b),
            (n, 1) if n > 1 => (b, a),
            _ => return Err(bad()),
        };
        let probe_species = (0..state.species())
            .find(|&s| state.get(probe_mode, s) == 1)
            .ok_or_else(bad)?;
        Ok(ProbeConfig {
            probe_mode,
            probe_species,
            bulk_mode,
        })
    }

    /// `N_{m,α̃} / N_m`.
    pub fn expected_ratio(&self, state: &FockState) -> Ratio<u64> {
        let nm = state.density().0[self.bulk_mode] as u64;
        Ratio::new(state.get(self.bulk_mode, self.probe_species) as u64, nm)
    }

    /// Benchmark states: all bulk particles of the probe's species / none of it.
    pub fn benchmarks(&self, state: &FockState) -> Result<(FockState, FockState)> {
        let nm = state.density().0[self.bulk_mode] as u8;
        let species = state.species().max(2);
        let other = if self.probe_species == 0 { 1 } else { 0 };
        let modes = state.modes();
        let indist = FockState::from_entries(
            modes,
            species,
            &[(self.probe_mode, self.probe_species, 1), (self.bulk_mode, self.probe_species, nm)],
        )?;
        let dist = FockState::from_entries(
            modes,
            species,
            &[(self.probe_mode, self.probe_species, 1), (self.bulk_mode, other, nm)],
        )?;
        Ok((indist, dist))
    }
}

/// Renormalized probe traces: values are `None` where the denominator is below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub times: Vec<f64>,
    pub ratios: Vec<Option<f64>>,
    pub expected: Ratio<u64>,
    pub raw: TimeSeries,
    pub indistinguishable: TimeSeries,
    pub distinguishable: TimeSeries,
}

impl ProbeSeries {
    pub fn gaps(&self) -> usize {
        self.ratios.iter().filter(|r| r.is_none()).count()
    }

    /// Largest deviation from the expected ratio over non-gap times.
    pub fn max_deviation(&self) -> f64 {
        let e = *self.expected.numer() as f64 / *self.expected.denom() as f64;
        self.ratios
            .iter()
            .flatten()
            .map(|r| (r - e).abs())
            .fold(0.0, f64::max)
    }

    /// CSV `t,ratio` with empty cells at gaps.
    pub fn to_csv(&self) -> String {
        use crate::dynamics::format_g15;
        let mut out = String::from("t,value\n");
        for (t, r) in self.times.iter().zip(&self.ratios) {
            out.push_str(&format_g15(*t));
            out.push(',');
            if let Some(r) = r {
                out.push_str(&format_g15(*r));
            }
            out.push('\n');
        }
        out
    }
}

/// Relative denominator floor for probe ratios.
pub const PROBE_FLOOR: f64 = 1e-9;

/// `(⟨O⟩_Ψ − ⟨O⟩_D)/(⟨O⟩_I − ⟨O⟩_D)` along the evolution of a probe state.
///
/// Times where `|⟨O⟩_I − ⟨O⟩_D|` is at most 1e−9 times the largest benchmark
/// magnitude are reported as gaps.
pub fn probe_counting_ratio(
    op: &OperatorSum,
    spec: &HamiltonianSpec,
    state: &FockState,
    times: &[f64],
) -> Result<ProbeSeries> {
    let probe = ProbeConfig::detect(state)?;
    let (indist, dist) = probe.benchmarks(state)?;
    let state = if state.species() < indist.species() {
        state.with_species_alphabet(indist.species())?
    } else {
        state.clone()
    };
    // all three states share one sector only if their species counts agree, so evolve each
    let trace = |s: &FockState| -> Result<TimeSeries> {
        let h = ManyBodyHamiltonian::for_state(spec, s)?;
        evolve_ev_with(&h, op, s, times)
    };
    let raw = trace(&state)?;
    let ti = trace(&indist)?;
    let td = trace(&dist)?;
    let scale = ti
        .values
        .iter()
        .chain(&td.values)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let ratios = (0..times.len())
        .map(|k| {
            let den = ti.values[k] - td.values[k];
            (den.abs() > PROBE_FLOOR * scale).then(|| (raw.values[k] - td.values[k]) / den)
        })
        .collect();
    Ok(ProbeSeries {
        times: times.to_vec(),
        ratios,
        expected: probe.expected_ratio(&state),
        raw,
        indistinguishable: ti,
        distinguishable: td,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{single_particle_propagator, time_average_ev};
    use crate::operators::{onsite_interaction, Boundary};

    fn phi2() -> FockState {
        FockState::from_entries(4, 3, &[(0, 0, 1), (0, 1, 1), (2, 0, 2), (2, 2, 1), (3, 1, 1)]).unwrap()
    }

    fn chain(m: usize) -> HamiltonianSpec {
        HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.0, m, Boundary::HardWall).unwrap()
    }

    #[test]
    fn averaged_coefficients_match_a_long_window() {
        let h = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.37, 3, Boundary::HardWall)
            .unwrap()
            .single_particle()
            .clone();
        let c = averaged_coefficients(&h, 1).unwrap();
        let n = 200_000;
        let dt = 0.05;
        let mut acc = Mat::<f64>::zeros(3, 3);
        for k in 0..n {
            let u = single_particle_propagator(&h, k as f64 * dt).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    acc[(a, b)] += (u[(1, a)] * u[(1, b)]).norm_sqr() / n as f64;
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                assert!((acc[(a, b)] - c[(a, b)]).abs() < 2e-3, "{a}{b}");
            }
        }
    }

    #[test]
    fn phi2_closed_form_and_many_body_agree() {
        let spec = chain(4);
        let closed = excess_fluctuation_noninteracting(&phi2(), spec.single_particle(), 0).unwrap();
        let full = excess_fluctuation(&phi2(), &spec, 0).unwrap();
        assert!((closed - full).abs() < 1e-10, "{closed} {full}");
        assert!((closed - 0.275).abs() < 0.005, "{closed}");
    }

    #[test]
    fn endpoints() {
        let spec = chain(4);
        let (i, d) = benchmark_states(&phi2());
        for l in 0..4 {
            let fi = excess_fluctuation_noninteracting(&i, spec.single_particle(), l).unwrap();
            let fd = excess_fluctuation_noninteracting(&d, spec.single_particle(), l).unwrap();
            assert!((fi - 1.0).abs() < 1e-12 && fd.abs() < 1e-12);
        }
        let inter = spec.with_epsilon(0.8);
        assert!((excess_fluctuation(&i, &inter, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(excess_fluctuation(&d, &inter, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_mode_state_has_no_contrast() {
        let spec = chain(2);
        let s = FockState::from_entries(2, 2, &[(0, 0, 1), (0, 1, 1)]).unwrap();
        assert!(matches!(
            excess_fluctuation_noninteracting(&s, spec.single_particle(), 0),
            Err(Error::NoInterferenceContrast { site: 1 })
        ));
    }

    #[test]
    fn bound_endpoints_and_ring_versus_chain() {
        let st = CoefficientStats { mean: 2.0, std: 0.5 };
        assert_eq!(fi_bound(0.0, &st), 0.0);
        assert_eq!(fi_bound(1.0, &st), 0.0);
        assert!((fi_bound(0.5, &st) - 0.125).abs() < 1e-15);
        // ring return and antipodal probabilities are enhanced, so its spread is the larger one
        for (m, ring_spread, chain_spread) in [(6, 0.551230328704, 0.241514697458), (8, 0.417954816028, 0.238895492300)] {
            let ring = HamiltonianSpec::bose_hubbard(1.0, 0.0, 0.0, m, Boundary::Periodic).unwrap();
            let r = CoefficientStats::for_hamiltonian(ring.single_particle(), 1).unwrap();
            let c = CoefficientStats::for_hamiltonian(chain(m).single_particle(), 1).unwrap();
            assert!(r.mean > 0.0 && c.mean > 0.0);
            assert!((r.relative_spread() - ring_spread).abs() < 1e-9);
            assert!((c.relative_spread() - chain_spread).abs() < 1e-9);
        }
    }

    #[test]
    fn interacting_time_average_through_sectors() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 0.7, 0.2, 3, Boundary::HardWall).unwrap();
        let states = [
            FockState::from_entries(3, 3, &[(0, 2, 2), (1, 0, 1)]).unwrap(),
            FockState::from_entries(3, 2, &[(0, 0, 1), (2, 1, 2)]).unwrap(),
        ];
        let op = density_squared(1, 3).unwrap();
        let avg = TimeAverager::new(spec.clone(), op.clone());
        let got = avg.evaluate(&states).unwrap();
        for (s, g) in states.iter().zip(got) {
            assert!((time_average_ev(&op, s, &spec).unwrap() - g).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_counts_small() {
        let (states, _) = fi_states(4, 6, &StateSelection::Exhaustive { max_species: 3 }).unwrap();
        assert_eq!(states.len(), 2130);
    }

    #[test]
    fn sampled_scan_is_deterministic_and_peaks_near_one_over_s() {
        let cfg = FiConfig {
            modes: 6,
            particles: 12,
            spec: chain(6),
            site: 1,
            selection: StateSelection::Sampled {
                species: vec![2, 3, 4],
                samples: 3000,
                seed: 7,
                dedupe: false,
            },
        };
        let a = fi_experiment(&cfg).unwrap();
        let b = fi_experiment(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        for s in [2usize, 3, 4] {
            let vals: Vec<f64> = a.records.iter().filter(|r| r.species == s).map(|r| r.doi_value()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - 1.0 / s as f64).abs() < 0.08, "S={s} mean {mean}");
        }
        assert!(a.bound_violation_fraction.unwrap() < 0.5);
    }

    #[test]
    fn probe_detection() {
        let s = FockState::from_entries(3, 2, &[(0, 0, 3), (0, 1, 2), (1, 1, 1)]).unwrap();
        let p = ProbeConfig::detect(&s).unwrap();
        assert_eq!((p.probe_mode, p.probe_species, p.bulk_mode), (1, 1, 0));
        assert_eq!(p.expected_ratio(&s), Ratio::new(2, 5));
        let bad = FockState::from_entries(3, 1, &[(0, 0, 3), (1, 0, 2)]).unwrap();
        assert!(matches!(ProbeConfig::detect(&bad), Err(Error::NotProbeConfiguration(_))));
    }

    #[test]
    fn probe_ratio_equals_fraction() {
        let spec = HamiltonianSpec::bose_hubbard(1.0, 1.0, -1.0, 3, Boundary::HardWall).unwrap();
        let times: Vec<f64> = (1..40).map(|k| 0.25 * k as f64).collect();
        let op = density_squared(2, 3).unwrap();
        for k in 0..=3u8 {
            let mut entries = vec![(1, 0, 1)];
            if k > 0 {
                entries.push((0, 0, k));
            }
            if k < 3 {
                entries.push((0, 1, 3 - k));
            }
            let s = FockState::from_entries(3, 2, &entries).unwrap();
            let r = probe_counting_ratio(&op, &spec, &s, &times).unwrap();
            assert!(r.max_deviation() < 1e-8, "k={k} {}", r.max_deviation());
            assert!(r.gaps() < times.len());
        }
        let v: OperatorSum = onsite_interaction(1.0, 3).unwrap().into();
        let s = FockState::from_entries(3, 2, &[(1, 0, 1), (0, 0, 2), (0, 1, 1)]).unwrap();
        let r = probe_counting_ratio(&v, &spec, &s, &times).unwrap();
        assert!(r.max_deviation() < 1e-8);
    }
}
