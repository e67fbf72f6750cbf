//! Young-diagram combinatorics, symmetric-group characters and isotypic
//! projectors on species labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::dynamics::ManyBodyHamiltonian;
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState};

/// Largest `N` for character tables and projectors.
pub const MAX_PARTICLES: usize = 10;
/// Cap on the first-quantized product dimension `(M·S)^N`.
pub const FIRST_QUANTIZED_LIMIT: u128 = 1_000_000;

/// Weakly decreasing positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition(pub Vec<usize>);

impl Partition {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        parts.retain(|&p| p > 0);
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(format!("parts {parts:?} are not weakly decreasing")));
        }
        Ok(Partition(parts))
    }

    pub fn size(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn rows(&self) -> usize {
        self.0.len()
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn conjugate(&self) -> Partition {
        let cols = self.0.first().copied().unwrap_or(0);
        Partition((0..cols).map(|c| self.0.iter().filter(|&&p| p > c).count()).collect())
    }

    /// `"3+2+1"`.
    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parts = text
            .split('+')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("partition {text:?}: {e}")))?;
        Self::new(parts)
    }

    /// Hook length of box `(r, c)`.
    pub fn hook(&self, r: usize, c: usize) -> usize {
        let conj = self.conjugate();
        (self.0[r] - c - 1) + (conj.0[c] - r - 1) + 1
    }

    /// Number of standard tableaux (irrep dimension of the symmetric group).
    pub fn standard_dimension(&self) -> u128 {
        let n = self.size() as u128;
        let mut num: u128 = (1..=n).product();
        for r in 0..self.rows() {
            for c in 0..self.0[r] {
                num /= self.hook(r, c) as u128;
            }
        }
        num
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        if s.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", s.join("+"))
        }
    }
}

/// All partitions of `n` with at most `max_rows` rows, in reverse lexicographic order.
pub fn partitions(n: usize, max_rows: usize) -> Vec<Partition> {
    fn rec(n: usize, max_part: usize, rows_left: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if n == 0 {
            out.push(Partition(cur.clone()));
            return;
        }
        if rows_left == 0 {
            return;
        }
        for p in (1..=max_part.min(n)).rev() {
            cur.push(p);
            rec(n - p, p, rows_left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, max_rows, &mut Vec::new(), &mut out);
    out
}

/// Hook-content formula `Π (A + c)/h` over boxes; 0 when `λ` has more rows than `A`.
pub fn irrep_dimension(lambda: &Partition, alphabet: usize) -> u128 {
    if lambda.rows() > alphabet {
        return 0;
    }
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for r in 0..lambda.rows() {
        for c in 0..lambda.0[r] {
            num *= (alphabet + c - r) as u128;
            den *= lambda.hook(r, c) as u128;
        }
    }
    num / den
}

/// Semi-standard tableau stored row by row with entries in `0..alphabet`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemiStandardTableau {
    pub shape: Partition,
    pub rows: Vec<Vec<usize>>,
}

impl SemiStandardTableau {
    pub fn content(&self, alphabet: usize) -> Vec<usize> {
        let mut c = vec![0; alphabet];
        for row in &self.rows {
            for &x in row {
                c[x] += 1;
            }
        }
        c
    }
}

/// Backtracking over boxes in row-major order; `content` (when given) bounds each letter's count.
fn fill_tableaux(
    shape: &Partition,
    alphabet: usize,
    content: Option<&[usize]>,
    visit: &mut dyn FnMut(&[Vec<usize>]),
) {
    let mut rows: Vec<Vec<usize>> = shape.0.iter().map(|&p| Vec::with_capacity(p)).collect();
    let mut left: Vec<usize> = content.map_or_else(|| vec![usize::MAX; alphabet], |c| c.to_vec());
    let boxes: Vec<(usize, usize)> = (0..shape.rows())
        .flat_map(|r| (0..shape.0[r]).map(move |c| (r, c)))
        .collect();
    fn rec(
        k: usize,
        boxes: &[(usize, usize)],
        rows: &mut Vec<Vec<usize>>,
        left: &mut Vec<usize>,
        alphabet: usize,
        visit: &mut dyn FnMut(&[Vec<usize>]),
    ) {
        if k == boxes.len() {
            visit(rows);
            return;
        }
        let (r, c) = boxes[k];
        let lo_row = if c > 0 { rows[r][c - 1] } else { 0 };
        let lo_col = if r > 0 { rows[r - 1][c] + 1 } else { 0 };
        for x in lo_row.max(lo_col)..alphabet {
            if left[x] == 0 {
                continue;
            }
            left[x] -= 1;
            rows[r].push(x);
            rec(k + 1, boxes, rows, left, alphabet, visit);
            rows[r].pop();
            left[x] += 1;
        }
    }
    rec(0, &boxes, &mut rows, &mut left, alphabet, visit);
}

/// All semi-standard tableaux of `shape` with entries below `alphabet`.
pub fn semistandard_tableaux(shape: &Partition, alphabet: usize) -> Vec<SemiStandardTableau> {
    let mut out = Vec::new();
    fill_tableaux(shape, alphabet, None, &mut |rows| {
        out.push(SemiStandardTableau {
            shape: shape.clone(),
            rows: rows.to_vec(),
        })
    });
    out
}

/// Kostka number `K(λ, content)` by explicit enumeration.
pub fn kostka(lambda: &Partition, content: &[usize]) -> u64 {
    if lambda.size() != content.iter().sum::<usize>() {
        return 0;
    }
    let mut count = 0u64;
    fill_tableaux(lambda, content.len(), Some(content), &mut |_| count += 1);
    count
}

/// Cycle type of a permutation as a partition.
pub fn cycle_type(perm: &[usize]) -> Partition {
    let mut seen = vec![false; perm.len()];
    let mut lengths = Vec::new();
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut i = s;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        lengths.push(len);
    }
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    Partition(lengths)
}

/// Size of the conjugacy class with cycle type `mu` in `S_N`.
pub fn class_size(mu: &Partition) -> u128 {
    let n = mu.size() as u128;
    let mut z: u128 = 1;
    let mut counts: BTreeMap<usize, u128> = BTreeMap::new();
    for &p in &mu.0 {
        *counts.entry(p).or_default() += 1;
    }
    for (&i, &m) in &counts {
        z *= (i as u128).pow(m as u32) * (1..=m).product::<u128>();
    }
    (1..=n).product::<u128>() / z
}

/// Murnaghan–Nakayama recursion on beta-sets.
fn mn_character(beta: &mut Vec<usize>, cycles: &[usize], memo: &mut HashMap<(Vec<usize>, usize), i64>) -> i64 {
    if cycles.is_empty() {
        return 1;
    }
    let key = (beta.clone(), cycles.len());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let r = cycles[0];
    let mut total = 0;
    for i in 0..beta.len() {
        let b = beta[i];
        if b < r || beta.contains(&(b - r)) {
            continue;
        }
        let between = beta.iter().filter(|&&x| x > b - r && x < b).count();
        let sign = if between % 2 == 0 { 1 } else { -1 };
        beta[i] = b - r;
        total += sign * mn_character(beta, &cycles[1..], memo);
        beta[i] = b;
    }
    memo.insert(key, total);
    total
}

/// `χ_λ(μ)`.
pub fn character(lambda: &Partition, mu: &Partition) -> i64 {
    let k = lambda.rows();
    let mut beta: Vec<usize> = (0..k).map(|i| lambda.0[i] + k - 1 - i).collect();
    mn_character(&mut beta, &mu.0, &mut HashMap::new())
}

/// Integer character table of `S_N`; rows and columns both indexed by `partitions(N, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterTable {
    pub n: usize,
    pub irreps: Vec<Partition>,
    pub classes: Vec<Partition>,
    pub class_sizes: Vec<u128>,
    pub values: Vec<Vec<i64>>,
}

impl CharacterTable {
    pub fn value(&self, lambda: &Partition, class: &Partition) -> Option<i64> {
        let r = self.irreps.iter().position(|p| p == lambda)?;
        let c = self.classes.iter().position(|p| p == class)?;
        Some(self.values[r][c])
    }
}

pub fn sn_characters(n: usize) -> Result<CharacterTable> {
    if n > MAX_PARTICLES {
        return Err(Error::BasisTooLarge {
            what: "symmetric group order".into(),
            dimension: n as u128,
            limit: MAX_PARTICLES as u128,
        });
    }
    let parts = partitions(n, n.max(1));
    let values = parts
        .iter()
        .map(|l| parts.iter().map(|mu| character(l, mu)).collect())
        .collect();
    Ok(CharacterTable {
        n,
        irreps: parts.clone(),
        class_sizes: parts.iter().map(class_size).collect(),
        classes: parts,
        values,
    })
}

/// Calls `visit` on every permutation of `0..n` (lexicographic order).
pub fn for_each_permutation(n: usize, visit: &mut dyn FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        visit(&p);
        // next permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

fn check_first_quantized(modes: usize, species: usize, particles: usize) -> Result<()> {
    let base = (modes * species) as u128;
    let dim = base.checked_pow(particles as u32).unwrap_or(u128::MAX);
    if dim > FIRST_QUANTIZED_LIMIT {
        return Err(Error::BasisTooLarge {
            what: "first-quantized product space".into(),
            dimension: dim,
            limit: FIRST_QUANTIZED_LIMIT,
        });
    }
    if particles > MAX_PARTICLES {
        return Err(Error::BasisTooLarge {
            what: "particle number for projectors".into(),
            dimension: particles as u128,
            limit: MAX_PARTICLES as u128,
        });
    }
    Ok(())
}

/// Particle list `(mode, species)` of a Fock occupation table, sorted.
fn particle_list(occ: &[u8], species: usize) -> Vec<(usize, usize)> {
    let mut list = Vec::new();
    for (slot, &n) in occ.iter().enumerate() {
        for _ in 0..n {
            list.push((slot / species, slot % species));
        }
    }
    list
}

fn factorial_product(occ: &[u8]) -> f64 {
    occ.iter()
        .map(|&n| (1..=n as u64).product::<u64>() as f64)
        .product()
}

/// N-fold product space over single-particle labels `(m, α)` and its bosonic sector.
///
/// Serves as the explicit first-quantized reference for the projectors, which
/// are built directly on Fock states.
#[derive(Debug, Clone)]
pub struct FirstQuantizedSpace {
    pub modes: usize,
    pub species: usize,
    pub particles: usize,
}

impl FirstQuantizedSpace {
    pub fn new(modes: usize, species: usize, particles: usize) -> Result<Self> {
        check_first_quantized(modes, species, particles)?;
        Ok(FirstQuantizedSpace {
            modes,
            species,
            particles,
        })
    }

    pub fn dimension(&self) -> usize {
        (self.modes * self.species).pow(self.particles as u32)
    }

    fn index(&self, labels: &[(usize, usize)]) -> usize {
        let d = self.modes * self.species;
        labels.iter().fold(0, |acc, &(m, a)| acc * d + m * self.species + a)
    }

    fn labels(&self, mut index: usize) -> Vec<(usize, usize)> {
        let d = self.modes * self.species;
        let mut out = vec![(0, 0); self.particles];
        for k in (0..self.particles).rev() {
            let s = index % d;
            out[k] = (s / self.species, s % self.species);
            index /= d;
        }
        out
    }

    /// Symmetrized product vector of a Fock state, as sparse `(index, amplitude)`.
    pub fn embed(&self, state: &FockState) -> Vec<(usize, f64)> {
        let list = particle_list(state.flat(), self.species);
        let mut seen = std::collections::BTreeSet::new();
        for_each_permutation(list.len(), &mut |p| {
            let arranged: Vec<(usize, usize)> = p.iter().map(|&i| list[i]).collect();
            seen.insert(self.index(&arranged));
        });
        let amp = 1.0 / (seen.len() as f64).sqrt();
        seen.into_iter().map(|i| (i, amp)).collect()
    }

    /// `U_π`: particle `i` takes the species label of particle `π(i)`.
    pub fn species_permutation(&self, perm: &[usize], vector: &[(usize, f64)]) -> Vec<(usize, f64)> {
        vector
            .iter()
            .map(|&(idx, v)| {
                let l = self.labels(idx);
                let moved: Vec<(usize, usize)> = (0..l.len()).map(|i| (l[i].0, l[perm[i]].1)).collect();
                (self.index(&moved), v)
            })
            .collect()
    }

    /// Projector `P_λ` compressed to the Fock basis by explicit product-space action.
    pub fn compressed_projector(&self, lambda: &Partition, basis: &FockBasis) -> Result<Mat<f64>> {
        let table = sn_characters(self.particles)?;
        let d = lambda.standard_dimension() as f64;
        let nfact: f64 = (1..=self.particles as u64).product::<u64>() as f64;
        let embedded: Vec<HashMap<usize, f64>> = basis
            .iter()
            .map(|occ| {
                let s = FockState::from_flat(basis.modes(), basis.species(), occ.to_vec()).expect("basis state");
                self.embed(&s).into_iter().collect()
            })
            .collect();
        let n = basis.len();
        let mut p = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let col: Vec<(usize, f64)> = embedded[j].iter().map(|(&k, &v)| (k, v)).collect();
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for_each_permutation(self.particles, &mut |perm| {
                let chi = table.value(lambda, &cycle_type(perm)).unwrap_or(0) as f64;
                if chi == 0.0 {
                    return;
                }
                for (k, v) in self.species_permutation(perm, &col) {
                    *acc.entry(k).or_default() += chi * v;
                }
            });
            for i in 0..n {
                let dotv: f64 = embedded[i].iter().map(|(k, v)| v * acc.get(k).copied().unwrap_or(0.0)).sum();
                p[(i, j)] = d / nfact * dotv;
            }
        }
        Ok(p)
    }
}

/// Hermitian idempotent onto the `λ`-isotypic component of species-permutation symmetry.
#[derive(Debug, Clone)]
pub struct IsotypicProjector {
    pub lambda: Partition,
    pub basis: Arc<FockBasis>,
    pub matrix: Mat<f64>,
}

impl IsotypicProjector {
    pub fn rank(&self) -> usize {
        let tr: f64 = (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)]).sum();
        tr.round() as usize
    }

    /// `‖P_λ ψ‖²` for a basis state.
    pub fn weight_of_basis_state(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// `‖P_λ ψ‖²` for a real vector on the basis.
    pub fn weight(&self, psi: &[f64]) -> f64 {
        let n = psi.len();
        let mut total = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.matrix[(i, j)] * psi[j]).sum();
            total += psi[i] * row;
        }
        total
    }
}

/// `P_λ = (d_λ/N!) Σ_π χ_λ(π) U_π` on a Fock basis (full or one species sector).
///
/// Uses `U_π|F⟩ = Σ √(Π n'! / Π n!) |F'⟩` summed over permutations applied to
/// the particle list of `F`, which equals the compression of the product-space
/// operator to the bosonic sector.
pub fn isotypic_projector(lambda: &Partition, basis: Arc<FockBasis>) -> Result<IsotypicProjector> {
    let n_particles = basis.particles();
    if lambda.size() != n_particles {
        return Err(Error::InvalidInput(format!(
            "partition {lambda} does not match N = {n_particles}"
        )));
    }
    check_first_quantized(basis.modes(), basis.species(), n_particles)?;
    let table = sn_characters(n_particles)?;
    let d = lambda.standard_dimension() as f64;
    let nfact: f64 = (1..=n_particles as u64).product::<u64>() as f64;
    let species = basis.species();
    let n = basis.len();
    // characters per permutation, shared by all columns
    let mut perms: Vec<(Vec<usize>, f64)> = Vec::new();
    for_each_permutation(n_particles, &mut |p| {
        let chi = table.value(lambda, &cycle_type(p)).unwrap_or(0) as f64;
        if chi != 0.0 {
            perms.push((p.to_vec(), chi));
        }
    });
    let columns: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let occ = basis.occupations(j);
            let list = particle_list(occ, species);
            let fj = factorial_product(occ);
            let mut acc: HashMap<usize, f64> = HashMap::new();
            let mut target = vec![0u8; occ.len()];
            for (perm, chi) in &perms {
                target.iter_mut().for_each(|x| *x = 0);
                for i in 0..list.len() {
                    let (m, _) = list[i];
                    let (_, a) = list[perm[i]];
                    target[m * species + a] += 1;
                }
                let i = basis.index_of_flat(&target).expect("species permutations stay in the sector");
                *acc.entry(i).or_default() += chi * (factorial_product(&target) / fj).sqrt();
            }
            acc.into_iter().map(|(i, v)| (i, v * d / nfact)).collect()
        })
        .collect();
    let mut matrix = Mat::<f64>::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col {
            matrix[(i, j)] = v;
        }
    }
    Ok(IsotypicProjector {
        lambda: lambda.clone(),
        basis,
        matrix,
    })
}

/// Projectors for every `λ ⊢ N` with nonzero rank on `basis`.
pub fn isotypic_projectors(basis: Arc<FockBasis>) -> Result<Vec<IsotypicProjector>> {
    let n = basis.particles();
    check_first_quantized(basis.modes(), basis.species(), n)?;
    let mut out = Vec::new();
    for lambda in partitions(n, n.max(1)) {
        let p = isotypic_projector(&lambda, basis.clone())?;
        if p.rank() > 0 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Weights `‖P_λ Ψ‖²` keyed by partition label.
pub fn state_weights(state: &FockState, projectors: &[IsotypicProjector]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for p in projectors {
        let i = p
            .basis
            .index_of(state)
            .ok_or_else(|| Error::InvalidInput(format!("{state} is not in the projectors' basis")))?;
        out.insert(p.lambda.label(), p.weight_of_basis_state(i));
    }
    Ok(out)
}

/// Spectrum of `H` on the range of one projector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpectrum {
    pub lambda: Partition,
    /// Number of equivalent copies (`ν` fillings) in the basis.
    pub nu_multiplicity: usize,
    /// All eigenvalues on `range(P_λ)`, ascending, with multiplicity.
    pub eigenvalues: Vec<f64>,
}

impl BlockSpectrum {
    /// One copy of the spectrum: every `nu_multiplicity`-th eigenvalue.
    pub fn per_copy(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .step_by(self.nu_multiplicity.max(1))
            .copied()
            .collect()
    }

    /// Whether the eigenvalues come in runs of `nu_multiplicity` equal values.
    pub fn copies_are_degenerate(&self, tol: f64) -> bool {
        let k = self.nu_multiplicity.max(1);
        self.eigenvalues.len() % k == 0
            && self
                .eigenvalues
                .chunks(k)
                .all(|c| c.last().unwrap() - c[0] <= tol)
    }
}

/// Number of `ν` copies of `λ` in `basis`: `K(λ, S)` for a sector, summed over sectors otherwise.
pub fn nu_multiplicity(lambda: &Partition, basis: &FockBasis) -> usize {
    match basis.sector_distribution() {
        Some(dist) => kostka(lambda, &dist.0) as usize,
        None => {
            // all species contents of the full basis
            let mut total = 0u64;
            let s = basis.species();
            let contents = FockBasis::full(
                crate::fock::SystemShape::new(s, 1, basis.particles()).expect("valid"),
                usize::MAX,
            )
            .expect("small");
            for c in contents.iter() {
                let content: Vec<usize> = c.iter().map(|&x| x as usize).collect();
                total += kostka(lambda, &content);
            }
            total as usize
        }
    }
}

/// Spectra of `H` restricted to each isotypic block.
pub fn block_spectra(h: &ManyBodyHamiltonian, projectors: &[IsotypicProjector]) -> Result<Vec<BlockSpectrum>> {
    let residual = h.species_blindness_residual();
    if residual > 1e-10 {
        return Err(Error::NotSpeciesBlind { residual });
    }
    let dense = h.matrix().to_dense();
    if !h.matrix().is_real() {
        return Err(Error::InvalidInput("block spectra need a real Hamiltonian".into()));
    }
    let n = h.dim();
    let hr = Mat::<f64>::from_fn(n, n, |i, j| dense[(i, j)].re);
    let mut out = Vec::new();
    for p in projectors {
        if p.matrix.nrows() != n {
            return Err(Error::InvalidInput("projector and Hamiltonian bases differ".into()));
        }
        let eig = p.matrix.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailed)?;
        let cols: Vec<usize> = (0..n).filter(|&k| eig.S()[k] > 0.5).collect();
        let q = Mat::<f64>::from_fn(n, cols.len(), |i, k| eig.U()[(i, cols[k])]);
        let block = q.transpose() * &hr * &q;
        let be = block.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailed)?;
        let eigenvalues: Vec<f64> = (0..cols.len()).map(|k| be.S()[k]).collect();
        out.push(BlockSpectrum {
            lambda: p.lambda.clone(),
            nu_multiplicity: nu_multiplicity(&p.lambda, &p.basis),
            eigenvalues,
        });
    }
    Ok(out)
}

/// Levels from different blocks closer than `1e−8 ×` spectral range.
pub fn accidental_degeneracies(spectra: &[BlockSpectrum]) -> Vec<(Partition, Partition, f64)> {
    let all: Vec<f64> = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
    let (lo, hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let tol = 1e-8 * (hi - lo).max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for (i, a) in spectra.iter().enumerate() {
        for b in &spectra[i + 1..] {
            for &x in &a.per_copy() {
                if b.per_copy().iter().any(|&y| (x - y).abs() <= tol) {
                    out.push((a.lambda.clone(), b.lambda.clone(), x));
                }
            }
        }
    }
    out
}

/// CSV `lambda,nu_multiplicity,eigenvalue`.
pub fn block_spectra_csv(spectra: &[BlockSpectrum]) -> String {
    use crate::dynamics::format_g15;
    let mut out = String::from("lambda,nu_multiplicity,eigenvalue\n");
    for s in spectra {
        for e in s.per_copy() {
            out.push_str(&format!("{},{},{}\n", s.lambda, s.nu_multiplicity, format_g15(e)));
        }
    }
    out
}
