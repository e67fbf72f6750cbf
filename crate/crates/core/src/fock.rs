//! Multi-species bosonic Fock states and bases.
//!
//! Occupations are stored as a flat table indexed `m * species + alpha`
//! (modes major, both 0-based). Public text and JSON forms use 1-based
//! labels. Basis order is descending lexicographic on the flat table, so
//! index 0 is the state with every particle in slot `(0, 0)`.

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of states a materialized basis may hold.
pub const DEFAULT_BASIS_LIMIT: usize = 1_000_000;

/// Binomial coefficient with overflow detection.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc.checked_mul(n as u128 - k as u128 + i)? / i;
    }
    Some(acc)
}

/// Number of ways to put `particles` bosons into `slots` slots.
fn stars_and_bars(slots: usize, particles: usize) -> Option<u128> {
    if slots == 0 {
        return Some(u128::from(particles == 0));
    }
    binomial((particles + slots - 1) as u64, particles as u64)
}

/// Number of modes `M`, species `S` and particles `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemShape {
    pub modes: usize,
    pub species: usize,
    pub particles: usize,
}

impl SystemShape {
    pub fn new(modes: usize, species: usize, particles: usize) -> Result<Self> {
        if modes == 0 || species == 0 {
            return Err(Error::InvalidInput(
                "a system needs at least one mode and one species".into(),
            ));
        }
        if particles > u8::MAX as usize {
            return Err(Error::InvalidInput(format!(
                "at most {} particles are supported",
                u8::MAX
            )));
        }
        Ok(SystemShape {
            modes,
            species,
            particles,
        })
    }

    pub fn slots(&self) -> usize {
        self.modes * self.species
    }

    /// Stars-and-bars count `C(N + M·S − 1, N)`.
    pub fn basis_size(&self) -> Result<u128> {
        stars_and_bars(self.slots(), self.particles).ok_or_else(|| Error::BasisTooLarge {
            what: format!("shape {self:?}"),
            dimension: u128::MAX,
            limit: u128::MAX,
        })
    }
}

/// Total population per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DensityDistribution(pub Vec<usize>);

/// Total population per species.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeciesDistribution(pub Vec<usize>);

impl DensityDistribution {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn occupied_modes(&self) -> usize {
        self.0.iter().filter(|&&n| n > 0).count()
    }
}

impl SpeciesDistribution {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Number of species with at least one particle.
    pub fn occupied_species(&self) -> usize {
        self.0.iter().filter(|&&n| n > 0).count()
    }

    /// Counts sorted in decreasing order with zeros removed (a partition of `N`).
    pub fn sorted_partition(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.0.iter().copied().filter(|&n| n > 0).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

impl fmt::Display for SpeciesDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Occupation table `N_{m,α}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState {
    modes: usize,
    species: usize,
    occ: Vec<u8>,
}

impl FockState {
    /// Builds a state from a flat modes-major occupation table.
    pub fn from_flat(modes: usize, species: usize, occ: Vec<u8>) -> Result<Self> {
        if modes == 0 || species == 0 {
            return Err(Error::InvalidInput("empty mode or species alphabet".into()));
        }
        if occ.len() != modes * species {
            return Err(Error::InvalidInput(format!(
                "occupation table has {} entries, expected {}",
                occ.len(),
                modes * species
            )));
        }
        let total: usize = occ.iter().map(|&n| n as usize).sum();
        if total > u8::MAX as usize {
            return Err(Error::InvalidInput("too many particles".into()));
        }
        Ok(FockState { modes, species, occ })
    }

    /// Builds a state from `(mode, species, count)` triples, 0-based.
    pub fn from_entries(modes: usize, species: usize, entries: &[(usize, usize, u8)]) -> Result<Self> {
        let mut occ = vec![0u8; modes * species];
        for &(m, a, n) in entries {
            if m >= modes || a >= species {
                return Err(Error::IndexOutOfRange(format!(
                    "entry ({}, {}) outside {} modes × {} species",
                    m + 1,
                    a + 1,
                    modes,
                    species
                )));
            }
            let slot = &mut occ[m * species + a];
            *slot = slot
                .checked_add(n)
                .ok_or_else(|| Error::InvalidInput("occupation overflow".into()))?;
        }
        Self::from_flat(modes, species, occ)
    }

    /// All particles in species 0 with the given mode populations.
    pub fn single_species(density: &[usize]) -> Result<Self> {
        let entries: Vec<(usize, usize, u8)> = density
            .iter()
            .enumerate()
            .map(|(m, &n)| (m, 0, n as u8))
            .collect();
        Self::from_entries(density.len(), 1, &entries)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn flat(&self) -> &[u8] {
        &self.occ
    }

    pub fn get(&self, mode: usize, species: usize) -> u8 {
        self.occ[mode * self.species + species]
    }

    pub fn particles(&self) -> usize {
        self.occ.iter().map(|&n| n as usize).sum()
    }

    pub fn shape(&self) -> SystemShape {
        SystemShape {
            modes: self.modes,
            species: self.species,
            particles: self.particles(),
        }
    }

    pub fn density(&self) -> DensityDistribution {
        DensityDistribution(
            self.occ
                .chunks(self.species)
                .map(|row| row.iter().map(|&n| n as usize).sum())
                .collect(),
        )
    }

    pub fn species_distribution(&self) -> SpeciesDistribution {
        let mut s = vec![0usize; self.species];
        for row in self.occ.chunks(self.species) {
            for (a, &n) in row.iter().enumerate() {
                s[a] += n as usize;
            }
        }
        SpeciesDistribution(s)
    }

    /// Re-embeds the state into an alphabet of `species` labels (must not drop occupied labels).
    pub fn with_species_alphabet(&self, species: usize) -> Result<Self> {
        let mut occ = vec![0u8; self.modes * species];
        for m in 0..self.modes {
            for a in 0..self.species {
                let n = self.get(m, a);
                if n == 0 {
                    continue;
                }
                if a >= species {
                    return Err(Error::InvalidInput(format!(
                        "species {} is occupied and cannot be dropped",
                        a + 1
                    )));
                }
                occ[m * species + a] = n;
            }
        }
        Self::from_flat(self.modes, species, occ)
    }

    /// Applies `new_label = perm[old_label]` to every species.
    pub fn relabel_species(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.species {
            return Err(Error::InvalidInput("permutation length mismatch".into()));
        }
        let mut occ = vec![0u8; self.occ.len()];
        for m in 0..self.modes {
            for a in 0..self.species {
                occ[m * self.species + perm[a]] = self.get(m, a);
            }
        }
        Self::from_flat(self.modes, self.species, occ)
    }

    /// Relabels species so that species counts are non-increasing, ties broken by
    /// the original label. Returns the relabeled state and the permutation used.
    pub fn species_sorted(&self) -> (FockState, Vec<usize>) {
        let dist = self.species_distribution().0;
        let mut order: Vec<usize> = (0..self.species).collect();
        order.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then(a.cmp(&b)));
        let mut perm = vec![0usize; self.species];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        let relabeled = self.relabel_species(&perm).expect("valid permutation");
        (relabeled, perm)
    }

    /// Canonical text form `m:α^n …` with 1-based labels, zero entries omitted.
    pub fn to_text(&self) -> String {
        let mut parts = Vec::new();
        for m in 0..self.modes {
            for a in 0..self.species {
                let n = self.get(m, a);
                if n > 0 {
                    parts.push(format!("{}:{}^{}", m + 1, a + 1, n));
                }
            }
        }
        parts.join(" ")
    }

    /// Parses the text form produced by [`FockState::to_text`].
    pub fn from_text(text: &str, modes: usize, species: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for token in text.split_whitespace() {
            let parse = || -> Option<(usize, usize, u8)> {
                let (ma, n) = token.split_once('^')?;
                let (m, a) = ma.split_once(':')?;
                Some((m.parse().ok()?, a.parse().ok()?, n.parse().ok()?))
            };
            let (m, a, n) =
                parse().ok_or_else(|| Error::Parse(format!("malformed occupation token '{token}'")))?;
            if m == 0 || a == 0 {
                return Err(Error::Parse(format!("labels are 1-based in '{token}'")));
            }
            entries.push((m - 1, a - 1, n));
        }
        Self::from_entries(modes, species, &entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FockStateJson::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FockStateJson =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.try_into()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.particles() == 0 {
            write!(f, "|vac>")
        } else {
            write!(f, "|{}>", self.to_text())
        }
    }
}

/// JSON wire form `{"M":..,"S":..,"occ":[[m,α,n],…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FockStateJson {
    #[serde(rename = "M")]
    pub modes: usize,
    #[serde(rename = "S")]
    pub species: usize,
    pub occ: Vec<[usize; 3]>,
}

impl From<&FockState> for FockStateJson {
    fn from(state: &FockState) -> Self {
        let mut occ = Vec::new();
        for m in 0..state.modes {
            for a in 0..state.species {
                let n = state.get(m, a);
                if n > 0 {
                    occ.push([m + 1, a + 1, n as usize]);
                }
            }
        }
        FockStateJson {
            modes: state.modes,
            species: state.species,
            occ,
        }
    }
}

impl TryFrom<FockStateJson> for FockState {
    type Error = Error;

    fn try_from(raw: FockStateJson) -> Result<Self> {
        let mut entries = Vec::with_capacity(raw.occ.len());
        for [m, a, n] in raw.occ {
            if m == 0 || a == 0 {
                return Err(Error::Parse("labels are 1-based".into()));
            }
            let n = u8::try_from(n).map_err(|_| Error::Parse("occupation too large".into()))?;
            entries.push((m - 1, a - 1, n));
        }
        FockState::from_entries(raw.modes, raw.species, &entries)
    }
}

/// Rank of a state in the (virtual) full basis of its shape.
pub fn rank(state: &FockState) -> Result<u128> {
    let slots = state.occ.len();
    let mut remaining = state.particles();
    let mut idx: u128 = 0;
    for (i, &n) in state.occ.iter().enumerate() {
        let n = n as usize;
        for x in (n + 1)..=remaining {
            idx += stars_and_bars(slots - i - 1, remaining - x)
                .ok_or_else(|| overflow_error(state.shape()))?;
        }
        remaining -= n;
    }
    Ok(idx)
}

/// Inverse of [`rank`].
pub fn unrank(shape: SystemShape, index: u128) -> Result<FockState> {
    let total = shape.basis_size()?;
    if index >= total {
        return Err(Error::IndexOutOfRange(format!(
            "index {index} beyond basis size {total}"
        )));
    }
    let slots = shape.slots();
    let mut occ = vec![0u8; slots];
    let mut remaining = shape.particles;
    let mut idx = index;
    for (i, slot) in occ.iter_mut().enumerate() {
        if i + 1 == slots {
            *slot = remaining as u8;
            break;
        }
        for x in (0..=remaining).rev() {
            let c = stars_and_bars(slots - i - 1, remaining - x)
                .ok_or_else(|| overflow_error(shape))?;
            if idx < c {
                *slot = x as u8;
                remaining -= x;
                break;
            }
            idx -= c;
        }
    }
    FockState::from_flat(shape.modes, shape.species, occ)
}

fn overflow_error(shape: SystemShape) -> Error {
    Error::BasisTooLarge {
        what: format!("shape {shape:?}"),
        dimension: u128::MAX,
        limit: u128::MAX,
    }
}

/// A materialized, ordered Fock basis with index lookup.
///
/// Either the full basis of a shape or one species sector (fixed species
/// distribution). Both keep descending lexicographic order.
#[derive(Debug, Clone)]
pub struct FockBasis {
    modes: usize,
    species: usize,
    particles: usize,
    sector: Option<SpeciesDistribution>,
    states: Vec<u8>,
    index: HashMap<Vec<u8>, u32>,
}

impl FockBasis {
    /// Full basis of `shape`; length `C(N + M·S − 1, N)`.
    pub fn full(shape: SystemShape, limit: usize) -> Result<Self> {
        let size = shape.basis_size()?;
        if size > limit as u128 {
            return Err(Error::BasisTooLarge {
                what: format!("Fock basis of M={} S={} N={}", shape.modes, shape.species, shape.particles),
                dimension: size,
                limit: limit as u128,
            });
        }
        let slots = shape.slots();
        let mut states = Vec::with_capacity(size as usize * slots);
        let mut current = vec![0u8; slots];
        enumerate_full(&mut current, 0, shape.particles, &mut states);
        Ok(Self::from_flat_states(shape.modes, shape.species, shape.particles, None, states))
    }

    /// Basis of the sector with fixed species counts (`species` = `dist.len()`).
    pub fn sector(modes: usize, dist: &SpeciesDistribution, limit: usize) -> Result<Self> {
        if modes == 0 || dist.0.is_empty() {
            return Err(Error::InvalidInput("empty mode or species alphabet".into()));
        }
        let mut size: u128 = 1;
        for &n in &dist.0 {
            size = size
                .checked_mul(stars_and_bars(modes, n).unwrap_or(u128::MAX))
                .unwrap_or(u128::MAX);
        }
        if size > limit as u128 {
            return Err(Error::BasisTooLarge {
                what: format!("species sector {dist} on {modes} modes"),
                dimension: size,
                limit: limit as u128,
            });
        }
        let species = dist.0.len();
        let mut states = Vec::with_capacity(size as usize * modes * species);
        let mut current = vec![0u8; modes * species];
        let mut remaining = dist.0.clone();
        enumerate_sector(&mut current, 0, modes, species, &mut remaining, &mut states);
        Ok(Self::from_flat_states(
            modes,
            species,
            dist.total(),
            Some(dist.clone()),
            states,
        ))
    }

    /// Sector basis containing `state`.
    pub fn sector_of(state: &FockState, limit: usize) -> Result<Self> {
        Self::sector(state.modes(), &state.species_distribution(), limit)
    }

    fn from_flat_states(
        modes: usize,
        species: usize,
        particles: usize,
        sector: Option<SpeciesDistribution>,
        states: Vec<u8>,
    ) -> Self {
        let stride = modes * species;
        let index = states
            .chunks(stride.max(1))
            .enumerate()
            .map(|(i, s)| (s.to_vec(), i as u32))
            .collect();
        FockBasis {
            modes,
            species,
            particles,
            sector,
            states,
            index,
        }
    }

    pub fn len(&self) -> usize {
        if self.modes * self.species == 0 {
            0
        } else {
            self.states.len() / (self.modes * self.species)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn shape(&self) -> SystemShape {
        SystemShape {
            modes: self.modes,
            species: self.species,
            particles: self.particles,
        }
    }

    pub fn sector_distribution(&self) -> Option<&SpeciesDistribution> {
        self.sector.as_ref()
    }

    /// Flat occupation table of basis state `i`.
    pub fn occupations(&self, i: usize) -> &[u8] {
        let stride = self.modes * self.species;
        &self.states[i * stride..(i + 1) * stride]
    }

    pub fn state(&self, i: usize) -> FockState {
        FockState {
            modes: self.modes,
            species: self.species,
            occ: self.occupations(i).to_vec(),
        }
    }

    pub fn index_of_flat(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).map(|&i| i as usize)
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        if state.modes != self.modes || state.species != self.species {
            return None;
        }
        self.index_of_flat(&state.occ)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.states.chunks(self.modes * self.species)
    }
}

fn enumerate_full(current: &mut [u8], slot: usize, remaining: usize, out: &mut Vec<u8>) {
    if slot + 1 == current.len() {
        current[slot] = remaining as u8;
        out.extend_from_slice(current);
        current[slot] = 0;
        return;
    }
    for x in (0..=remaining).rev() {
        current[slot] = x as u8;
        enumerate_full(current, slot + 1, remaining - x, out);
    }
    current[slot] = 0;
}

fn enumerate_sector(
    current: &mut [u8],
    slot: usize,
    modes: usize,
    species: usize,
    remaining: &mut [usize],
    out: &mut Vec<u8>,
) {
    if slot == current.len() {
        out.extend_from_slice(current);
        return;
    }
    let m = slot / species;
    let a = slot % species;
    let r = remaining[a];
    let range: Vec<usize> = if m + 1 == modes { vec![r] } else { (0..=r).rev().collect() };
    for x in range {
        current[slot] = x as u8;
        remaining[a] -= x;
        enumerate_sector(current, slot + 1, modes, species, remaining, out);
        remaining[a] += x;
    }
    current[slot] = 0;
}

/// Full basis of `shape` with the default size limit.
pub fn enumerate_basis(shape: SystemShape) -> Result<FockBasis> {
    FockBasis::full(shape, DEFAULT_BASIS_LIMIT)
}

/// Degree of indistinguishability as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Doi(pub Ratio<u64>);

impl Doi {
    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn value(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Doi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ratio of crossed to ladder multiplicities, `Σ_{m≠m'}Σ_α N_{mα}N_{m'α} / Σ_{m≠m'} N_m N_{m'}`.
pub fn doi(state: &FockState) -> Result<Doi> {
    let density = state.density();
    let total = density.total() as u64;
    let ladder = total * total - density.0.iter().map(|&n| (n * n) as u64).sum::<u64>();
    if ladder == 0 {
        return Err(Error::DegenerateDensity);
    }
    let mut crossed = 0u64;
    for a in 0..state.species() {
        let column: Vec<u64> = (0..state.modes()).map(|m| state.get(m, a) as u64).collect();
        let s: u64 = column.iter().sum();
        crossed += s * s - column.iter().map(|n| n * n).sum::<u64>();
    }
    Ok(Doi(Ratio::new(crossed, ladder)))
}

/// Uniform samples by unranking uniformly drawn basis indices.
pub fn sample_uniform(shape: SystemShape, count: usize, seed: u64) -> Result<Vec<FockState>> {
    let size = shape.basis_size()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<u128> = (0..count).map(|_| rng.random_range(0..size)).collect();
    indices.into_par_iter().map(|i| unrank(shape, i)).collect()
}

/// Indistinguishable and distinguishable benchmark states with the same densities.
///
/// `Ψ_I` puts every particle in species 1. `Ψ_D` gives each occupied mode its
/// own species; the alphabet grows when the input has fewer species than
/// occupied modes.
pub fn benchmark_states(state: &FockState) -> (FockState, FockState) {
    let density = state.density();
    let modes = state.modes();
    let mut indist = vec![0u8; modes * state.species()];
    for (m, &n) in density.0.iter().enumerate() {
        indist[m * state.species()] = n as u8;
    }
    let psi_i = FockState::from_flat(modes, state.species(), indist).expect("same shape");

    let occupied = density.occupied_modes();
    let species = state.species().max(occupied);
    let mut dist = vec![0u8; modes * species];
    let mut label = 0;
    for (m, &n) in density.0.iter().enumerate() {
        if n > 0 {
            dist[m * species + label] = n as u8;
            label += 1;
        }
    }
    let psi_d = FockState::from_flat(modes, species, dist).expect("valid table");
    (psi_i, psi_d)
}

/// All Fock states with `particles` bosons on `modes` modes and at most
/// `max_species` species, one representative per species-permutation class.
///
/// Representatives have their nonzero species columns in descending
/// lexicographic order, followed by empty columns.
pub fn enumerate_up_to_species_permutation(
    modes: usize,
    particles: usize,
    max_species: usize,
) -> Result<Vec<FockState>> {
    if modes == 0 || max_species == 0 {
        return Err(Error::InvalidInput("empty mode or species alphabet".into()));
    }
    // every nonzero column: occupation vector over modes with a positive total
    let mut columns: Vec<Vec<u8>> = Vec::new();
    for n in 1..=particles {
        let basis = FockBasis::full(SystemShape::new(modes, 1, n)?, usize::MAX)?;
        columns.extend(basis.iter().map(|c| c.to_vec()));
    }
    // descending lexicographic order on (total, occupation)
    columns.sort_by(|a, b| {
        let ta: u32 = a.iter().map(|&x| x as u32).sum();
        let tb: u32 = b.iter().map(|&x| x as u32).sum();
        tb.cmp(&ta).then(b.cmp(a))
    });
    let mut out = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    choose_columns(&columns, 0, particles, max_species, &mut chosen, &mut |sel| {
        let mut occ = vec![0u8; modes * max_species];
        for (a, &c) in sel.iter().enumerate() {
            for m in 0..modes {
                occ[m * max_species + a] = columns[c][m];
            }
        }
        out.push(FockState::from_flat(modes, max_species, occ).expect("valid table"));
    });
    Ok(out)
}

fn choose_columns(
    columns: &[Vec<u8>],
    start: usize,
    remaining: usize,
    slots_left: usize,
    chosen: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if remaining == 0 {
        emit(chosen);
        return;
    }
    if slots_left == 0 {
        return;
    }
    for c in start..columns.len() {
        let total: usize = columns[c].iter().map(|&x| x as usize).sum();
        if total > remaining {
            continue;
        }
        // the remaining slots cannot hold more than slots_left * total particles
        if total * slots_left < remaining {
            break;
        }
        chosen.push(c);
        choose_columns(columns, c, remaining - total, slots_left - 1, chosen, emit);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi(i: usize) -> FockState {
        // modes 1..4, species α β γ
        let entries: Vec<(usize, usize, u8)> = match i {
            1 => vec![(0, 0, 2), (2, 0, 3), (3, 0, 1)],
            2 => vec![(0, 0, 1), (0, 1, 1), (2, 0, 2), (2, 2, 1), (3, 1, 1)],
            3 => vec![(0, 1, 2), (2, 0, 3), (3, 2, 1)],
            _ => unreachable!(),
        };
        FockState::from_entries(4, 3, &entries).unwrap()
    }

    #[test]
    fn basis_sizes() {
        let b = enumerate_basis(SystemShape::new(2, 1, 2).unwrap()).unwrap();
        assert_eq!(b.len(), 3);
        let b = enumerate_basis(SystemShape::new(1, 1, 5).unwrap()).unwrap();
        assert_eq!(b.len(), 1);
        let b = enumerate_basis(SystemShape::new(3, 2, 3).unwrap()).unwrap();
        assert_eq!(b.len(), 56);
    }

    #[test]
    fn basis_limit_is_enforced() {
        let shape = SystemShape::new(8, 4, 16).unwrap();
        let err = FockBasis::full(shape, 1000).unwrap_err();
        assert!(err.is_resource_limit());
    }

    #[test]
    fn basis_order_matches_rank() {
        let shape = SystemShape::new(3, 2, 3).unwrap();
        let b = enumerate_basis(shape).unwrap();
        for i in 0..b.len() {
            let s = b.state(i);
            assert_eq!(rank(&s).unwrap(), i as u128);
            assert_eq!(unrank(shape, i as u128).unwrap(), s);
            assert_eq!(b.index_of(&s), Some(i));
        }
        assert_eq!(b.occupations(0), &[3, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn sector_basis_is_ordered_subset() {
        let dist = SpeciesDistribution(vec![2, 1]);
        let sector = FockBasis::sector(3, &dist, DEFAULT_BASIS_LIMIT).unwrap();
        assert_eq!(sector.len(), 6 * 3);
        let full = enumerate_basis(SystemShape::new(3, 2, 3).unwrap()).unwrap();
        let ranks: Vec<usize> = sector.iter().map(|s| full.index_of_flat(s).unwrap()).collect();
        assert!(ranks.windows(2).all(|w| w[0] < w[1]));
        assert!(sector.iter().all(|s| {
            let st = FockState::from_flat(3, 2, s.to_vec()).unwrap();
            st.species_distribution() == dist
        }));
    }

    #[test]
    fn doi_of_reference_states() {
        assert_eq!(doi(&phi(1)).unwrap().ratio(), Ratio::new(1, 1));
        assert_eq!(doi(&phi(2)).unwrap().ratio(), Ratio::new(3, 11));
        assert_eq!(doi(&phi(3)).unwrap().ratio(), Ratio::new(0, 1));
    }

    #[test]
    fn doi_single_mode_is_an_error() {
        let s = FockState::from_entries(3, 2, &[(1, 0, 2), (1, 1, 3)]).unwrap();
        assert_eq!(doi(&s), Err(Error::DegenerateDensity));
    }

    #[test]
    fn benchmarks_of_phi2() {
        let (pi, pd) = benchmark_states(&phi(2));
        assert_eq!(pi, phi(1));
        assert_eq!(doi(&pd).unwrap().value(), 0.0);
        assert_eq!(pd.density(), phi(3).density());
        // Φ3 pattern: one species per occupied mode
        let (relabeled, _) = phi(3).species_sorted();
        let (pd_sorted, _) = pd.species_sorted();
        assert_eq!(relabeled.density(), pd_sorted.density());
        assert_eq!(
            relabeled.species_distribution().sorted_partition(),
            pd_sorted.species_distribution().sorted_partition()
        );
    }

    #[test]
    fn benchmarks_extend_alphabet() {
        let s = FockState::from_entries(3, 1, &[(0, 0, 5), (1, 0, 1)]).unwrap();
        let (pi, pd) = benchmark_states(&s);
        assert_eq!(pi, s);
        assert_eq!(pd.species(), 2);
        assert_eq!(pd.get(0, 0), 5);
        assert_eq!(pd.get(1, 1), 1);
        assert_eq!(doi(&pd).unwrap().value(), 0.0);
    }

    #[test]
    fn text_and_json_forms() {
        let s = phi(2);
        assert_eq!(s.to_text(), "1:1^1 1:2^1 3:1^2 3:3^1 4:2^1");
        assert_eq!(FockState::from_text(&s.to_text(), 4, 3).unwrap(), s);
        assert_eq!(
            s.to_json(),
            r#"{"M":4,"S":3,"occ":[[1,1,1],[1,2,1],[3,1,2],[3,3,1],[4,2,1]]}"#
        );
        assert_eq!(FockState::from_json(&s.to_json()).unwrap(), s);
        assert!(FockState::from_text("1:1", 2, 1).is_err());
        assert!(FockState::from_text("3:1^1", 2, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_uniform() {
        let shape = SystemShape::new(2, 1, 2).unwrap();
        let a = sample_uniform(shape, 2, 7).unwrap();
        let b = sample_uniform(shape, 2, 7).unwrap();
        assert_eq!(a, b);
        let draws = sample_uniform(shape, 3000, 11).unwrap();
        let basis = enumerate_basis(shape).unwrap();
        let mut counts = [0usize; 3];
        for s in &draws {
            counts[basis.index_of(s).unwrap()] += 1;
        }
        for c in counts {
            assert!((900..=1100).contains(&c), "{counts:?}");
        }
        let shape = SystemShape::new(3, 2, 3).unwrap();
        for s in sample_uniform(shape, 50, 3).unwrap() {
            assert_eq!(s.particles(), 3);
        }
    }

    #[test]
    fn large_shapes_unrank_without_materializing() {
        let shape = SystemShape::new(12, 4, 24).unwrap();
        let size = shape.basis_size().unwrap();
        assert_eq!(size, binomial(71, 24).unwrap());
        let last = unrank(shape, size - 1).unwrap();
        assert_eq!(last.get(11, 3), 24);
        assert_eq!(rank(&last).unwrap(), size - 1);
    }

    #[test]
    fn exhaustive_counts_up_to_species_permutation() {
        let states = enumerate_up_to_species_permutation(4, 6, 3).unwrap();
        assert_eq!(states.len(), 2238);
        let mixed = states
            .iter()
            .filter(|s| doi(s).is_ok() && s.species_distribution().occupied_species() >= 2)
            .count();
        assert_eq!(mixed, 2130);
        // per-density class counts: N=(4,2,0,0) has 18 representatives
        let n420 = states
            .iter()
            .filter(|s| s.density().0 == [4, 2, 0, 0])
            .count();
        assert_eq!(n420, 18);
        // two particles on two modes, at most two species:
        // (2,0)α (1,1)α (0,2)α (1,0)α+(1,0)β (1,0)α+(0,1)β (0,1)α+(0,1)β
        assert_eq!(enumerate_up_to_species_permutation(2, 2, 2).unwrap().len(), 6);
    }
}
