//! Experiment configuration: TOML (or JSON) with one table per concern.
//!
//! Modes, sites and species are 1-based everywhere in configs. Energies are in
//! units of J and times in units of ħ/J.

use std::path::{Path, PathBuf};

use bosim_core::dynamics::HamiltonianSpec;
use bosim_core::fock::FockState;
use bosim_core::measures::density_squared;
use bosim_core::operators::{
    density, normal_ordered_product, onsite_interaction, tunneling, Boundary, KParticleOperator, OperatorJson,
    OperatorSum,
};
use serde::Deserialize;

/// Validation failure with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

pub fn bad(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

type Checked<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub system: Option<SystemConfig>,
    pub hamiltonian: Option<HamiltonianConfig>,
    #[serde(default)]
    pub states: Vec<StateConfig>,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    pub time: Option<TimeGrid>,
    pub hom: Option<HomConfig>,
    pub scan: Option<ScanConfig>,
    pub sweep: Option<SweepConfig>,
    pub dft: Option<DftConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub modes: usize,
    pub species: Option<usize>,
    pub particles: Option<usize>,
    /// Species distribution `S` selecting a single sector.
    pub distribution: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default = "one")]
    pub j: f64,
    /// On-site interaction; a list runs every value.
    #[serde(default = "zero")]
    pub u: OneOrMany,
    /// Tilt `F Σ m n_m`.
    #[serde(default)]
    pub f: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn one() -> f64 {
    1.0
}

fn zero() -> OneOrMany {
    OneOrMany::One(0.0)
}

impl HamiltonianConfig {
    pub fn specs(&self, modes: usize) -> Checked<Vec<(f64, HamiltonianSpec)>> {
        if !self.j.is_finite() || !self.f.is_finite() {
            return Err(bad("hamiltonian", "J and F must be finite"));
        }
        self.u
            .values()
            .into_iter()
            .map(|u| {
                if !u.is_finite() {
                    return Err(bad("hamiltonian.u", "must be finite"));
                }
                HamiltonianSpec::bose_hubbard(self.j, u, self.f, modes, self.boundary)
                    .map(|s| (u, s))
                    .map_err(|e| bad("hamiltonian", e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub label: Option<String>,
    /// Text form `m:α^n ...`, 1-based.
    pub fock: String,
}

impl StateConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.fock.clone())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableConfig {
    Density { site: usize },
    DensitySquared { site: usize },
    /// Normal-ordered `n_a n_b`.
    DensityProduct { sites: [usize; 2] },
    Tunneling,
    Interaction,
    Hamiltonian,
    Operator { label: String, k: usize, terms: Vec<bosim_core::operators::TermJson> },
}

impl ObservableConfig {
    pub fn label(&self) -> String {
        match self {
            ObservableConfig::Density { site } => format!("n{site}"),
            ObservableConfig::DensitySquared { site } => format!("n{site}^2"),
            ObservableConfig::DensityProduct { sites } => format!("n{}n{}", sites[0], sites[1]),
            ObservableConfig::Tunneling => "H_tun".into(),
            ObservableConfig::Interaction => "V".into(),
            ObservableConfig::Hamiltonian => "H".into(),
            ObservableConfig::Operator { label, .. } => label.clone(),
        }
    }

    pub fn build(&self, modes: usize, spec: &HamiltonianSpec, h: &HamiltonianConfig, field: &str) -> Checked<OperatorSum> {
        let site = |s: usize| {
            if s == 0 || s > modes {
                Err(bad(field, format!("site {s} outside 1..={modes}")))
            } else {
                Ok(s - 1)
            }
        };
        let wrap = |r: bosim_core::Result<KParticleOperator>| r.map(OperatorSum::from).map_err(|e| bad(field, e.to_string()));
        match self {
            ObservableConfig::Density { site: s } => wrap(density(site(*s)?, modes)),
            ObservableConfig::DensitySquared { site: s } => {
                density_squared(site(*s)?, modes).map_err(|e| bad(field, e.to_string()))
            }
            ObservableConfig::DensityProduct { sites } => {
                let a = density(site(sites[0])?, modes).map_err(|e| bad(field, e.to_string()))?;
                let b = density(site(sites[1])?, modes).map_err(|e| bad(field, e.to_string()))?;
                normal_ordered_product(&a, &b).map_err(|e| bad(field, e.to_string()))
            }
            ObservableConfig::Tunneling => wrap(tunneling(h.j, modes, h.boundary)),
            ObservableConfig::Interaction => wrap(onsite_interaction(1.0, modes)),
            ObservableConfig::Hamiltonian => Ok(spec.operator_sum()),
            ObservableConfig::Operator { k, terms, .. } => {
                let raw = OperatorJson {
                    k: *k,
                    terms: terms.clone(),
                };
                wrap(raw.into_operator(modes))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default)]
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl TimeGrid {
    pub fn points(&self, limit: usize) -> Checked<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(bad("time", "need finite start <= stop and step > 0"));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if n > limit {
            return Err(bad("time", format!("{n} time points exceed the limit {limit}")));
        }
        Ok((0..n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomConfig {
    /// Mixing angles θ (the double-well time for J = 1).
    pub thetas: Option<Vec<f64>>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub particles: usize,
    /// 1-based observation site.
    #[serde(default = "first")]
    pub site: usize,
    /// Species counts to sample; absent means an exhaustive scan.
    pub species: Option<Vec<usize>>,
    pub samples: Option<usize>,
    #[serde(default)]
    pub dedupe: bool,
    pub max_species: Option<usize>,
}

fn first() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "one")]
    pub j0: f64,
    pub etas: Option<Vec<f64>>,
    pub count: Option<usize>,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DftConfig {
    #[serde(default)]
    pub window: bosim_core::spectral::Window,
    pub threshold: Option<f64>,
    /// Angular-frequency interval for reported peaks.
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    /// Label peaks with symmetry blocks (needs a species-blind system small enough for projectors).
    #[serde(default)]
    pub attribute: bool,
}

/// Parses TOML, or JSON when the file ends in `.json`.
pub fn parse(path: &Path, text: &str) -> Checked<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| bad("", format!("invalid JSON config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| bad("", format!("invalid config: {e}")))
    }
}

impl ExperimentConfig {
    pub fn system(&self) -> Checked<&SystemConfig> {
        let s = self.system.as_ref().ok_or_else(|| bad("system", "missing table"))?;
        if s.modes == 0 {
            return Err(bad("system.modes", "must be at least 1"));
        }
        Ok(s)
    }

    pub fn hamiltonian(&self) -> Checked<&HamiltonianConfig> {
        self.hamiltonian.as_ref().ok_or_else(|| bad("hamiltonian", "missing table"))
    }

    pub fn time(&self) -> Checked<&TimeGrid> {
        self.time.as_ref().ok_or_else(|| bad("time", "missing table"))
    }

    /// Parsed states on a common species alphabet.
    pub fn fock_states(&self, modes: usize) -> Checked<Vec<(String, FockState)>> {
        if self.states.is_empty() {
            return Err(bad("states", "at least one state is required"));
        }
        let species = self
            .system()?
            .species
            .unwrap_or_else(|| self.states.iter().map(|s| max_species_label(&s.fock)).max().unwrap_or(1))
            .max(1);
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                FockState::from_text(&s.fock, modes, species)
                    .map(|st| (s.label(), st))
                    .map_err(|e| bad(format!("states[{i}].fock"), e.to_string()))
            })
            .collect()
    }

    pub fn observables(&self) -> Checked<&[ObservableConfig]> {
        if self.observables.is_empty() {
            return Err(bad("observables", "at least one observable is required"));
        }
        Ok(&self.observables)
    }
}

fn max_species_label(text: &str) -> usize {
    text.split_whitespace()
        .filter_map(|t| t.split_once(':')?.1.split_once('^')?.0.parse().ok())
        .max()
        .unwrap_or(1)
}
