//! Species-blind k-particle operators.
//!
//! An operator of order `k` is a sparse map from paired mode columns
//! `[(m_1, n_1), …, (m_k, n_k)]` to complex coefficients, standing for
//! `Σ_α Π a†_{m_i,α_i} Π a_{n_i,α_i}`. Creation and annihilation legs of the
//! same column share a species index, so only simultaneous permutations of
//! `m` and `n` leave a term unchanged. Keys are stored with their columns
//! sorted and equal keys merged. Mode indices are 0-based in the Rust API and
//! 1-based in JSON.

use std::collections::{BTreeMap, HashMap};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::linalg::{SparseMatrix, C64, ZERO};

/// One `(creation mode, annihilation mode)` column.
pub type Column = (usize, usize);

/// Lattice boundary condition for the tunnelling builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    HardWall,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KParticleOperator {
    modes: usize,
    k: usize,
    terms: BTreeMap<Vec<Column>, C64>,
}

fn canonical(mut cols: Vec<Column>) -> Vec<Column> {
    cols.sort_unstable();
    cols
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Number of distinct orderings of a multiset of columns.
fn arrangements(sorted: &[Column]) -> f64 {
    let mut denom = 1.0;
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            denom *= factorial(run);
            run = 1;
        }
    }
    denom *= factorial(run);
    factorial(sorted.len()) / denom
}

impl KParticleOperator {
    /// Empty operator of order `k` on `modes` modes.
    pub fn zero(modes: usize, k: usize) -> Self {
        KParticleOperator {
            modes,
            k,
            terms: BTreeMap::new(),
        }
    }

    /// Builds an operator from `(m, n, coefficient)` triples (0-based modes).
    pub fn from_terms<I>(modes: usize, k: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, Vec<usize>, C64)>,
    {
        let mut op = Self::zero(modes, k);
        for (m, n, c) in terms {
            op.add_term(&m, &n, c)?;
        }
        Ok(op)
    }

    /// Adds `c · a†_m a_n` (summed over species) to the operator.
    pub fn add_term(&mut self, m: &[usize], n: &[usize], c: C64) -> Result<()> {
        if m.len() != self.k || n.len() != self.k {
            return Err(Error::WrongOrder {
                expected: self.k.to_string(),
                found: m.len().max(n.len()),
            });
        }
        if let Some(&bad) = m.iter().chain(n).find(|&&x| x >= self.modes) {
            return Err(Error::IndexOutOfRange(format!(
                "mode {} on a system of {} modes",
                bad + 1,
                self.modes
            )));
        }
        self.add_columns(m.iter().copied().zip(n.iter().copied()).collect(), c);
        Ok(())
    }

    fn add_columns(&mut self, cols: Vec<Column>, c: C64) {
        let key = canonical(cols);
        let entry = self.terms.entry(key.clone()).or_insert(ZERO);
        *entry += c;
        if entry.norm() == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Canonical terms: sorted columns with merged coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (&[Column], C64)> {
        self.terms.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Stored coefficient for exactly this column arrangement (0 unless it is the canonical one).
    pub fn stored(&self, m: &[usize], n: &[usize]) -> C64 {
        let cols: Vec<Column> = m.iter().copied().zip(n.iter().copied()).collect();
        self.terms.get(&cols).copied().unwrap_or(ZERO)
    }

    /// Symmetrized coefficient `o_m^n`: the merged coefficient spread evenly over
    /// every distinct simultaneous arrangement of the columns.
    pub fn coefficient(&self, m: &[usize], n: &[usize]) -> C64 {
        let key = canonical(m.iter().copied().zip(n.iter().copied()).collect());
        match self.terms.get(&key) {
            Some(&c) => c / arrangements(&key),
            None => ZERO,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= s;
        }
        out.terms.retain(|_, v| v.norm() != 0.0);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.k != self.k || other.modes != self.modes {
            return Err(Error::WrongOrder {
                expected: self.k.to_string(),
                found: other.k,
            });
        }
        let mut out = self.clone();
        for (key, &v) in &other.terms {
            out.add_columns(key.clone(), v);
        }
        Ok(out)
    }

    /// Hermitian conjugate: `o_m^n → conj(o_n^m)`.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.modes, self.k);
        for (key, &v) in &self.terms {
            out.add_columns(key.iter().map(|&(m, n)| (n, m)).collect(), v.conj());
        }
        out
    }

    /// Largest coefficient magnitude.
    pub fn scale_norm(&self) -> f64 {
        self.terms.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_residual() <= 1e-12 * self.scale_norm().max(1.0)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let adj = self.adjoint();
        let mut worst = 0.0f64;
        for key in self.terms.keys().chain(adj.terms.keys()) {
            let a = self.terms.get(key).copied().unwrap_or(ZERO);
            let b = adj.terms.get(key).copied().unwrap_or(ZERO);
            worst = worst.max((a - b).norm());
        }
        worst
    }

    /// Drops coefficients with magnitude below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, v| v.norm() > tol);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&OperatorJson::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str, modes: usize) -> Result<Self> {
        let raw: OperatorJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_operator(modes)
    }
}

/// JSON wire form `{"k":2,"terms":[{"m":[1,2],"n":[2,1],"re":..,"im":..}]}` with 1-based modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorJson {
    pub k: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<&KParticleOperator> for OperatorJson {
    fn from(op: &KParticleOperator) -> Self {
        OperatorJson {
            k: op.k,
            terms: op
                .terms()
                .map(|(cols, c)| TermJson {
                    m: cols.iter().map(|&(m, _)| m + 1).collect(),
                    n: cols.iter().map(|&(_, n)| n + 1).collect(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl OperatorJson {
    pub fn into_operator(self, modes: usize) -> Result<KParticleOperator> {
        let mut op = KParticleOperator::zero(modes, self.k);
        for t in self.terms {
            if t.m.iter().chain(&t.n).any(|&x| x == 0) {
                return Err(Error::Parse("operator modes are 1-based".into()));
            }
            let m: Vec<usize> = t.m.iter().map(|x| x - 1).collect();
            let n: Vec<usize> = t.n.iter().map(|x| x - 1).collect();
            op.add_term(&m, &n, C64::new(t.re, t.im))?;
        }
        Ok(op)
    }
}

/// Sum of operators of distinct orders.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSum {
    modes: usize,
    terms: BTreeMap<usize, KParticleOperator>,
}

impl From<&KParticleOperator> for OperatorSum {
    fn from(op: &KParticleOperator) -> Self {
        OperatorSum::from_operator(op.clone())
    }
}

impl From<KParticleOperator> for OperatorSum {
    fn from(op: KParticleOperator) -> Self {
        OperatorSum::from_operator(op)
    }
}

impl OperatorSum {
    pub fn new(modes: usize) -> Self {
        OperatorSum {
            modes,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_operator(op: KParticleOperator) -> Self {
        let mut s = Self::new(op.modes);
        s.push(op).expect("same modes");
        s
    }

    /// Adds an operator, merging with the existing term of the same order.
    pub fn push(&mut self, op: KParticleOperator) -> Result<()> {
        if op.modes != self.modes {
            return Err(Error::InvalidInput("mode count mismatch".into()));
        }
        let k = op.k;
        let merged = match self.terms.remove(&k) {
            Some(existing) => existing.add(&op)?,
            None => op,
        };
        if !merged.is_empty() {
            self.terms.insert(k, merged);
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn orders(&self) -> Vec<usize> {
        self.terms.keys().copied().collect()
    }

    pub fn term(&self, k: usize) -> Option<&KParticleOperator> {
        self.terms.get(&k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &KParticleOperator> {
        self.terms.values()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::new(self.modes);
        for op in self.terms.values() {
            out.push(op.scale(s)).expect("same modes");
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for op in other.terms.values() {
            out.push(op.clone())?;
        }
        Ok(out)
    }

    pub fn pruned(&self, tol: f64) -> Self {
        let mut out = Self::new(self.modes);
        for op in self.terms.values() {
            let p = op.pruned(tol);
            if !p.is_empty() {
                out.terms.insert(p.k, p);
            }
        }
        out
    }

    pub fn is_hermitian(&self) -> bool {
        self.terms.values().all(|op| op.is_hermitian())
    }

    pub fn static_ev(&self, state: &FockState) -> Result<C64> {
        let mut acc = ZERO;
        for op in self.terms.values() {
            acc += static_ev(op, state)?;
        }
        Ok(acc)
    }
}

fn check_mode(l: usize, modes: usize) -> Result<()> {
    if l >= modes {
        return Err(Error::IndexOutOfRange(format!(
            "mode {} on a system of {} modes",
            l + 1,
            modes
        )));
    }
    Ok(())
}

/// Particle density `n_l` (0-based `l`).
pub fn density(l: usize, modes: usize) -> Result<KParticleOperator> {
    check_mode(l, modes)?;
    KParticleOperator::from_terms(modes, 1, [(vec![l], vec![l], C64::new(1.0, 0.0))])
}

/// Nearest-neighbour tunnelling `−J Σ (a†_m a_{m+1} + h.c.)`.
pub fn tunneling(j: f64, modes: usize, boundary: Boundary) -> Result<KParticleOperator> {
    let mut op = KParticleOperator::zero(modes, 1);
    let bonds = match boundary {
        Boundary::HardWall => modes.saturating_sub(1),
        Boundary::Periodic if modes > 2 => modes,
        Boundary::Periodic => modes.saturating_sub(1),
    };
    for b in 0..bonds {
        let (p, q) = (b, (b + 1) % modes);
        op.add_term(&[p], &[q], C64::new(-j, 0.0))?;
        op.add_term(&[q], &[p], C64::new(-j, 0.0))?;
    }
    Ok(op)
}

/// On-site interaction `U/2 Σ_m n_m(n_m − 1)`.
pub fn onsite_interaction(u: f64, modes: usize) -> Result<KParticleOperator> {
    let mut op = KParticleOperator::zero(modes, 2);
    for m in 0..modes {
        op.add_term(&[m, m], &[m, m], C64::new(u / 2.0, 0.0))?;
    }
    Ok(op)
}

/// Tilt `F Σ_m m·n_m` with 1-based site labels `m`.
pub fn tilt(f: f64, modes: usize) -> Result<KParticleOperator> {
    let mut op = KParticleOperator::zero(modes, 1);
    for m in 0..modes {
        op.add_term(&[m], &[m], C64::new(f * (m + 1) as f64, 0.0))?;
    }
    Ok(op)
}

/// Projector onto the mode configuration `N` irrespective of species.
pub fn config_projector(config: &[usize]) -> Result<KParticleOperator> {
    let modes = config.len();
    if modes == 0 {
        return Err(Error::InvalidInput("empty configuration".into()));
    }
    let k: usize = config.iter().sum();
    if k == 0 {
        return Err(Error::InvalidInput("configuration has no particles".into()));
    }
    let m: Vec<usize> = config
        .iter()
        .enumerate()
        .flat_map(|(mode, &n)| std::iter::repeat_n(mode, n))
        .collect();
    let norm: f64 = config.iter().map(|&n| factorial(n)).product();
    KParticleOperator::from_terms(modes, k, [(m.clone(), m, C64::new(1.0 / norm, 0.0))])
}

/// Normal-ordered form of `A·B` by Wick contraction of annihilators of `A` with creators of `B`.
pub fn normal_ordered_product(a: &KParticleOperator, b: &KParticleOperator) -> Result<OperatorSum> {
    if a.modes != b.modes {
        return Err(Error::InvalidInput("mode count mismatch".into()));
    }
    let mut parts: BTreeMap<usize, KParticleOperator> = BTreeMap::new();
    for (ca, oa) in a.terms() {
        for (cb, ob) in b.terms() {
            let coeff = oa * ob;
            let mut used = vec![false; cb.len()];
            let mut pairing = vec![None; ca.len()];
            contract(ca, cb, 0, &mut used, &mut pairing, &mut |pairing| {
                let mut cols = Vec::with_capacity(ca.len() + cb.len());
                for (j, &(m, n)) in ca.iter().enumerate() {
                    match pairing[j] {
                        Some(i) => cols.push((m, cb[i].1)),
                        None => cols.push((m, n)),
                    }
                }
                let mut taken = vec![false; cb.len()];
                for i in pairing.iter().flatten() {
                    taken[*i] = true;
                }
                for (i, &col) in cb.iter().enumerate() {
                    if !taken[i] {
                        cols.push(col);
                    }
                }
                let k = cols.len();
                parts
                    .entry(k)
                    .or_insert_with(|| KParticleOperator::zero(a.modes, k))
                    .add_columns(cols, coeff);
            });
        }
    }
    let mut out = OperatorSum::new(a.modes);
    for (_, op) in parts {
        if !op.is_empty() {
            out.push(op)?;
        }
    }
    Ok(out)
}

/// Enumerates partial injective maps from columns of `ca` (annihilators) to
/// columns of `cb` (creators) with matching modes.
fn contract(
    ca: &[Column],
    cb: &[Column],
    j: usize,
    used: &mut [bool],
    pairing: &mut Vec<Option<usize>>,
    emit: &mut dyn FnMut(&[Option<usize>]),
) {
    if j == ca.len() {
        emit(pairing);
        return;
    }
    pairing[j] = None;
    contract(ca, cb, j + 1, used, pairing, emit);
    for i in 0..cb.len() {
        if !used[i] && cb[i].0 == ca[j].1 {
            used[i] = true;
            pairing[j] = Some(i);
            contract(ca, cb, j + 1, used, pairing, emit);
            used[i] = false;
        }
    }
    pairing[j] = None;
}

/// Commutator `[A, B] = AB − BA` in normal order.
pub fn commutator(a: &KParticleOperator, b: &KParticleOperator) -> Result<OperatorSum> {
    let ab = normal_ordered_product(a, b)?;
    let ba = normal_ordered_product(b, a)?;
    Ok(ab.add(&ba.scale(C64::new(-1.0, 0.0)))?.pruned(1e-15))
}

/// Normal-ordered product of two operator sums.
pub fn product_of_sums(a: &OperatorSum, b: &OperatorSum) -> Result<OperatorSum> {
    let mut out = OperatorSum::new(a.modes);
    for x in a.iter() {
        for y in b.iter() {
            out = out.add(&normal_ordered_product(x, y)?)?;
        }
    }
    Ok(out)
}

/// Set of mode vectors reachable from `m` by permutations that fix the species vector.
pub fn stabilizer_orbit(m: &[usize], alpha: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &a) in alpha.iter().enumerate() {
        groups.entry(a).or_default().push(pos);
    }
    let mut orbit = vec![m.to_vec()];
    for positions in groups.values() {
        let mut next = Vec::new();
        for base in &orbit {
            let values: Vec<usize> = positions.iter().map(|&p| base[p]).collect();
            for perm in distinct_permutations(&values) {
                let mut v = base.clone();
                for (&p, &x) in positions.iter().zip(&perm) {
                    v[p] = x;
                }
                next.push(v);
            }
        }
        next.sort();
        next.dedup();
        orbit = next;
    }
    orbit
}

fn distinct_permutations(values: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut out = vec![sorted.clone()];
    // next_permutation over a sorted multiset
    loop {
        let n = sorted.len();
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| sorted[i] < sorted[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| sorted[j] > sorted[i]).unwrap();
        sorted.swap(i, j);
        sorted[i + 1..].reverse();
        out.push(sorted.clone());
    }
    out
}

/// Static expectation value in a Fock state via the stabilizer-orbit formula.
///
/// For every stored term `(m, n)`, sums the pick multiplicity `N^Ψ_{m,α}` over
/// species vectors `α` for which `n` lies in the orbit of `m` under the
/// stabilizer of `α`. Orders above the particle number give 0.
pub fn static_ev(op: &KParticleOperator, state: &FockState) -> Result<C64> {
    if op.modes != state.modes() {
        return Err(Error::InvalidInput(format!(
            "operator acts on {} modes, state has {}",
            op.modes,
            state.modes()
        )));
    }
    if op.k > state.particles() {
        return Ok(ZERO);
    }
    let species = state.species();
    let mut counts: Vec<u32> = state.flat().iter().map(|&x| x as u32).collect();
    let mut alpha = vec![0usize; op.k];
    let mut acc = ZERO;
    for (cols, c) in op.terms() {
        let w = pick_weight(cols, 0, species, &mut counts, &mut alpha);
        if w != 0.0 {
            acc += c * w;
        }
    }
    Ok(acc)
}

/// `Σ_α N^Ψ_{m,α} [n ∈ S_α(m)]` by depth-first assignment of species.
fn pick_weight(
    cols: &[Column],
    i: usize,
    species: usize,
    counts: &mut [u32],
    alpha: &mut [usize],
) -> f64 {
    if i == cols.len() {
        return if same_multisets_per_species(cols, alpha) { 1.0 } else { 0.0 };
    }
    let m = cols[i].0;
    let mut total = 0.0;
    for a in 0..species {
        let slot = m * species + a;
        let available = counts[slot];
        if available == 0 {
            continue;
        }
        // the annihilation leg of this column must also be able to find a particle of species a
        counts[slot] -= 1;
        alpha[i] = a;
        let rest = pick_weight(cols, i + 1, species, counts, alpha);
        counts[slot] += 1;
        total += available as f64 * rest;
    }
    total
}

fn same_multisets_per_species(cols: &[Column], alpha: &[usize]) -> bool {
    let mut balance: HashMap<(usize, usize), i32> = HashMap::new();
    for (&(m, n), &a) in cols.iter().zip(alpha) {
        if m != n {
            *balance.entry((a, m)).or_insert(0) += 1;
            *balance.entry((a, n)).or_insert(0) -= 1;
        }
    }
    balance.values().all(|&v| v == 0)
}

/// Closed-form expectation values for orders 1, 2 and 3.
pub fn ev_closed_form(op: &KParticleOperator, state: &FockState) -> Result<C64> {
    let modes = state.modes();
    let dens: Vec<f64> = state.density().0.iter().map(|&n| n as f64).collect();
    let n_ma = |m: usize, a: usize| state.get(m, a) as f64;
    let same_species = |ms: &[usize]| -> f64 {
        (0..state.species())
            .map(|a| ms.iter().map(|&m| n_ma(m, a)).product::<f64>())
            .sum()
    };
    let d = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
    let o = |m: [usize; 3], n: [usize; 3], k: usize| op.coefficient(&m[..k], &n[..k]);
    match op.k {
        1 => Ok((0..modes).map(|m| o([m, 0, 0], [m, 0, 0], 1) * dens[m]).sum()),
        2 => {
            let mut acc = ZERO;
            for m in 0..modes {
                for mp in 0..modes {
                    acc += o([m, mp, 0], [m, mp, 0], 2) * (dens[m] * (dens[mp] - d(m, mp)));
                    if m != mp {
                        acc += o([m, mp, 0], [mp, m, 0], 2) * same_species(&[m, mp]);
                    }
                }
            }
            Ok(acc)
        }
        3 => {
            let mut acc = ZERO;
            for x in 0..modes {
                for y in 0..modes {
                    for z in 0..modes {
                        let ladder =
                            (dens[x] - d(x, y) - d(x, z)) * (dens[y] - d(y, z)) * dens[z];
                        acc += o([x, y, z], [x, y, z], 3) * ladder;
                        if x != y {
                            let w = same_species(&[x, y]) * (dens[z] - d(x, z) - d(y, z));
                            acc += (o([x, y, z], [y, x, z], 3)
                                + o([x, z, y], [y, z, x], 3)
                                + o([z, x, y], [z, y, x], 3))
                                * w;
                        }
                        if x != y && y != z && x != z {
                            acc += (o([x, y, z], [y, z, x], 3) + o([x, y, z], [z, x, y], 3))
                                * same_species(&[x, y, z]);
                        }
                    }
                }
            }
            Ok(acc)
        }
        found => Err(Error::WrongOrder {
            expected: "1, 2 or 3".into(),
            found,
        }),
    }
}

/// Square of a Hermitian one-particle operator in normal order.
pub fn square_1po(op: &KParticleOperator) -> Result<OperatorSum> {
    if op.k != 1 {
        return Err(Error::WrongOrder {
            expected: "1".into(),
            found: op.k,
        });
    }
    if !op.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    normal_ordered_product(op, op)
}

/// Expectation value in a superposition of Fock states with pairwise distinct species distributions.
pub fn ev_superposition(components: &[(C64, FockState)], op: &KParticleOperator) -> Result<C64> {
    let mut seen = Vec::new();
    for (_, s) in components {
        let dist = s.species_distribution();
        if seen.contains(&dist) {
            return Err(Error::AdditivityNotGuaranteed(dist.to_string()));
        }
        seen.push(dist);
    }
    if let Some((_, first)) = components.first() {
        if components.iter().any(|(_, s)| s.shape() != first.shape()) {
            return Err(Error::InvalidInput("components differ in shape".into()));
        }
    }
    let mut acc = ZERO;
    for (c, s) in components {
        acc += static_ev(op, s)? * c.norm_sqr();
    }
    Ok(acc)
}

/// Applies `Σ_α Π a†_{m_i,α_i} Π a_{n_i,α_i}` to a basis state, calling `emit(target, amplitude)`.
pub(crate) fn apply_columns(
    cols: &[Column],
    occ: &[u8],
    species: usize,
    emit: &mut dyn FnMut(&[u8], f64),
) {
    let mut work = occ.to_vec();
    let mut alpha = vec![0usize; cols.len()];
    annihilate(cols, 0, species, &mut work, &mut alpha, 1.0, emit);
}

fn annihilate(
    cols: &[Column],
    i: usize,
    species: usize,
    work: &mut [u8],
    alpha: &mut [usize],
    weight: f64,
    emit: &mut dyn FnMut(&[u8], f64),
) {
    if i == cols.len() {
        let mut out = work.to_vec();
        // occupation factors are multiplied exactly; one square root at the end
        let mut w = weight;
        for (&(m, _), &al) in cols.iter().zip(alpha.iter()) {
            let slot = m * species + al;
            out[slot] += 1;
            w *= out[slot] as f64;
        }
        emit(&out, w.sqrt());
        return;
    }
    let n = cols[i].1;
    for a in 0..species {
        let slot = n * species + a;
        let c = work[slot];
        if c == 0 {
            continue;
        }
        work[slot] -= 1;
        alpha[i] = a;
        annihilate(cols, i + 1, species, work, alpha, weight * c as f64, emit);
        work[slot] += 1;
    }
}

/// Sparse matrix of an operator in a (full or sector) Fock basis.
pub fn operator_matrix(op: &KParticleOperator, basis: &FockBasis) -> Result<SparseMatrix> {
    operator_sum_matrix(&OperatorSum::from_operator(op.clone()), basis)
}

/// Sparse matrix of a sum of operators in a Fock basis.
pub fn operator_sum_matrix(ops: &OperatorSum, basis: &FockBasis) -> Result<SparseMatrix> {
    if ops.modes() != basis.modes() {
        return Err(Error::InvalidInput("mode count mismatch".into()));
    }
    let species = basis.species();
    let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); basis.len()];
    for (col, occ) in basis.iter().enumerate() {
        for op in ops.iter() {
            for (cols, c) in op.terms() {
                let mut missing = false;
                apply_columns(cols, occ, species, &mut |target, amp| {
                    match basis.index_of_flat(target) {
                        Some(row) => rows[row].push((col, c * amp)),
                        None => missing = true,
                    }
                });
                if missing {
                    return Err(Error::InvalidInput(
                        "operator leaves the basis; use a full or species-sector basis".into(),
                    ));
                }
            }
        }
    }
    Ok(SparseMatrix::from_rows(rows))
}

/// Dense matrix oracle for tests and small systems.
pub fn dense_operator_matrix(op: &KParticleOperator, basis: &FockBasis) -> Result<Mat<C64>> {
    Ok(operator_matrix(op, basis)?.to_dense())
}
