//! Experiment runners: each turns a validated config into in-memory artifacts.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use bosim_core::dynamics::{
    evolve_ev_noninteracting, evolve_ev_with, format_g15, HamiltonianSpec, ManyBodyHamiltonian, TimeSeries,
};
use bosim_core::fock::{FockBasis, FockState, SpeciesDistribution, SystemShape, DEFAULT_BASIS_LIMIT};
use bosim_core::measures::{fi_experiment, probe_counting_ratio, FiConfig, StateSelection, HISTOGRAM_BINS};
use bosim_core::operators::{KParticleOperator, OperatorSum};
use bosim_core::spectral::{dft_trace_with, expected_frequencies, match_peaks, spectrum_sweep, PEAK_THRESHOLD};
use bosim_core::symmetry::{
    accidental_degeneracies, block_spectra, block_spectra_csv, isotypic_projectors, state_weights, IsotypicProjector,
};
use bosim_core::Error;
use serde_json::{json, Value};

use crate::config::{bad, ConfigError, ExperimentConfig, ObservableConfig};

/// Largest time grid accepted.
pub const MAX_TIME_POINTS: usize = 1_000_000;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Resource(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Resource(_) => 3,
            RunError::Numerical(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Resource(e) => write!(f, "resource limit: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::BasisTooLarge { .. } => RunError::Resource(e.to_string()),
            Error::EigenFailed | Error::KrylovNotConverged { .. } | Error::QuadratureNotConverged { .. } => {
                RunError::Numerical(e.to_string())
            }
            other => RunError::Config(bad("", other.to_string())),
        }
    }
}

pub type Run<T> = Result<T, RunError>;

/// Output file held in memory until the run succeeds.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, body: String) -> Self {
        Artifact {
            name: name.to_string(),
            bytes: body.into_bytes(),
        }
    }

    fn json(name: &str, value: &Value) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("plain data");
        s.push('\n');
        Self::text(name, s)
    }
}

/// Quotes a CSV field when it holds separators or quotes.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', ' ']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn g(x: f64) -> String {
    format_g15(x)
}

fn n1n2() -> OperatorSum {
    let mut op = KParticleOperator::zero(2, 2);
    op.add_term(&[0, 1], &[0, 1], bosim_core::linalg::ONE).expect("valid term");
    op.into()
}

pub fn hom(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let thetas = match cfg.hom.as_ref().and_then(|h| h.thetas.clone()) {
        Some(t) if t.is_empty() => return Err(bad("hom.thetas", "empty list").into()),
        Some(t) => t,
        None => {
            let n = cfg.hom.as_ref().and_then(|h| h.count).unwrap_or(33).max(2);
            (0..n).map(|k| std::f64::consts::FRAC_PI_2 * k as f64 / (n - 1) as f64).collect()
        }
    };
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(bad("hom.thetas", "must be finite").into());
    }
    let spec = HamiltonianSpec::double_well(1.0, 0.0)?;
    let same = FockState::from_entries(2, 2, &[(0, 0, 1), (1, 0, 1)])?;
    let diff = FockState::from_entries(2, 2, &[(0, 0, 1), (1, 1, 1)])?;
    let ti = evolve_ev_noninteracting(&n1n2(), &same, &spec, &thetas)?;
    let td = evolve_ev_noninteracting(&n1n2(), &diff, &spec, &thetas)?;
    let mut csv = String::from("theta,R,distinguishable,indistinguishable,closed_distinguishable,closed_indistinguishable\n");
    for (k, th) in thetas.iter().enumerate() {
        let r = th.cos().powi(2);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            g(*th),
            g(r),
            g(td.values[k]),
            g(ti.values[k]),
            g(r * r + (1.0 - r).powi(2)),
            g((1.0 - 2.0 * r).powi(2))
        ));
    }
    Ok(vec![Artifact::text("hom.csv", csv)])
}

struct Traces {
    u: f64,
    spec: HamiltonianSpec,
}

fn hamiltonians(cfg: &ExperimentConfig, modes: usize) -> Run<Vec<Traces>> {
    Ok(cfg
        .hamiltonian()?
        .specs(modes)?
        .into_iter()
        .map(|(u, spec)| Traces { u, spec })
        .collect())
}

fn observables(cfg: &ExperimentConfig, modes: usize, spec: &HamiltonianSpec) -> Run<Vec<(String, OperatorSum)>> {
    let h = cfg.hamiltonian()?;
    cfg.observables()?
        .iter()
        .enumerate()
        .map(|(i, o): (usize, &ObservableConfig)| Ok((o.label(), o.build(modes, spec, h, &format!("observables[{i}]"))?)))
        .collect()
}

fn trace(spec: &HamiltonianSpec, op: &OperatorSum, state: &FockState, times: &[f64]) -> Run<TimeSeries> {
    let ts = if spec.is_interacting() {
        let h = ManyBodyHamiltonian::for_state(spec, state)?;
        evolve_ev_with(&h, op, state, times)?
    } else {
        evolve_ev_noninteracting(op, state, spec, times)?
    };
    if let Some(k) = ts.values.iter().position(|v| !v.is_finite()) {
        return Err(RunError::Numerical(format!("{state}: non-finite value at t = {}", ts.times[k])));
    }
    Ok(ts)
}

pub fn evolve(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let modes = cfg.system()?.modes;
    let states = cfg.fock_states(modes)?;
    let times = cfg.time()?.points(MAX_TIME_POINTS)?;
    let hs = hamiltonians(cfg, modes)?;
    let mut csv = String::from("U,state,observable,t,value\n");
    for h in &hs {
        let ops = observables(cfg, modes, &h.spec)?;
        for (label, state) in &states {
            for (name, op) in &ops {
                let ts = trace(&h.spec, op, state, &times)?;
                for (t, v) in ts.times.iter().zip(&ts.values) {
                    csv.push_str(&format!("{},{},{},{},{}\n", g(h.u), field(label), field(name), g(*t), g(*v)));
                }
            }
        }
    }
    Ok(vec![Artifact::text("traces.csv", csv)])
}

pub fn fi_scan(cfg: &ExperimentConfig, seed: u64) -> Run<Vec<Artifact>> {
    let modes = cfg.system()?.modes;
    let scan = cfg.scan.as_ref().ok_or_else(|| bad("scan", "missing table"))?;
    if scan.site == 0 || scan.site > modes {
        return Err(bad("scan.site", format!("outside 1..={modes}")).into());
    }
    let selection = match &scan.species {
        Some(species) => {
            if species.is_empty() || species.contains(&0) {
                return Err(bad("scan.species", "need positive species counts").into());
            }
            StateSelection::Sampled {
                species: species.clone(),
                samples: scan.samples.ok_or_else(|| bad("scan.samples", "required with scan.species"))?,
                seed,
                dedupe: scan.dedupe,
            }
        }
        None => StateSelection::Exhaustive {
            max_species: scan.max_species.ok_or_else(|| bad("scan", "set species+samples or max_species"))?,
        },
    };
    let mut records = String::from("U,state,species,I,F,absdev\n");
    let mut hist = String::from("U,I_bin,F_bin,count\n");
    let mut summary = Vec::new();
    for h in hamiltonians(cfg, modes)? {
        let s = fi_experiment(&FiConfig {
            modes,
            particles: scan.particles,
            spec: h.spec.clone(),
            site: scan.site - 1,
            selection: selection.clone(),
        })?;
        for r in &s.records {
            records.push_str(&format!(
                "{},{},{},{},{},{}\n",
                g(h.u),
                field(&r.state.to_text()),
                r.species,
                g(r.doi_value()),
                g(r.f),
                g(r.absdev())
            ));
        }
        for i in 0..HISTOGRAM_BINS {
            for f in 0..HISTOGRAM_BINS {
                if s.histogram[i][f] > 0 {
                    hist.push_str(&format!("{},{i},{f},{}\n", g(h.u), s.histogram[i][f]));
                }
            }
        }
        summary.push(json!({
            "U": h.u,
            "records": s.records.len(),
            "skipped": s.skipped,
            "mean_absdev": s.mean_absdev,
            "bound_violation_fraction": s.bound_violation_fraction,
            "coefficient_mean": s.stats.map(|st| st.mean),
            "coefficient_std": s.stats.map(|st| st.std),
            "outside_histogram": s.outside_histogram,
        }));
    }
    Ok(vec![
        Artifact::text("fi_records.csv", records),
        Artifact::text("fi_histogram.csv", hist),
        Artifact::json("fi_summary.json", &Value::Array(summary)),
    ])
}

pub fn probe(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let modes = cfg.system()?.modes;
    let states = cfg.fock_states(modes)?;
    let times = cfg.time()?.points(MAX_TIME_POINTS)?;
    let mut csv = String::from("U,state,observable,expected,t,ratio\n");
    for h in hamiltonians(cfg, modes)? {
        for (label, state) in &states {
            for (name, op) in observables(cfg, modes, &h.spec)? {
                let r = probe_counting_ratio(&op, &h.spec, state, &times)?;
                for (t, v) in r.times.iter().zip(&r.ratios) {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        g(h.u),
                        field(label),
                        field(&name),
                        r.expected,
                        g(*t),
                        v.map(g).unwrap_or_default()
                    ));
                }
            }
        }
    }
    Ok(vec![Artifact::text("probe.csv", csv)])
}

/// Sector basis from `system.distribution`, or the full basis from species and particles.
fn system_basis(cfg: &ExperimentConfig) -> Run<Arc<FockBasis>> {
    let sys = cfg.system()?;
    let basis = match &sys.distribution {
        Some(d) => FockBasis::sector(sys.modes, &SpeciesDistribution(d.clone()), DEFAULT_BASIS_LIMIT)?,
        None => {
            let species = sys.species.ok_or_else(|| bad("system.species", "required without distribution"))?;
            let particles = sys.particles.ok_or_else(|| bad("system.particles", "required without distribution"))?;
            FockBasis::full(SystemShape::new(sys.modes, species, particles)?, DEFAULT_BASIS_LIMIT)?
        }
    };
    Ok(Arc::new(basis))
}

pub fn sweep(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let basis = system_basis(cfg)?;
    let sw = cfg.sweep.as_ref().ok_or_else(|| bad("sweep", "missing table"))?;
    let etas = match (&sw.etas, sw.count) {
        (Some(e), _) => e.clone(),
        (None, Some(n)) if n >= 2 => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
        _ => return Err(bad("sweep", "set etas or count >= 2").into()),
    };
    let s = spectrum_sweep(basis, sw.j0, &etas, sw.boundary)?;
    let blocks: Vec<Value> = s
        .blocks
        .iter()
        .map(|b| json!({"lambda": b.lambda.label(), "nu_multiplicity": b.nu_multiplicity, "levels": b.levels.len()}))
        .collect();
    Ok(vec![
        Artifact::text("spectrum.csv", s.to_csv()),
        Artifact::json("blocks.json", &json!({"j0": sw.j0, "blocks": blocks})),
    ])
}

pub fn dft(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let modes = cfg.system()?.modes;
    let states = cfg.fock_states(modes)?;
    let times = cfg.time()?.points(MAX_TIME_POINTS)?;
    let d = cfg.dft.clone().unwrap_or(crate::config::DftConfig {
        window: Default::default(),
        threshold: None,
        fmin: None,
        fmax: None,
        attribute: false,
    });
    let threshold = d.threshold.unwrap_or(PEAK_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(bad("dft.threshold", "must lie in (0, 1)").into());
    }
    let mut csv = String::from("U,state,observable,freq,amplitude\n");
    let mut reports = Vec::new();
    let mut projector_cache: HashMap<Vec<usize>, Vec<IsotypicProjector>> = HashMap::new();
    for h in hamiltonians(cfg, modes)? {
        for (label, state) in &states {
            for (name, op) in observables(cfg, modes, &h.spec)? {
                let hm = ManyBodyHamiltonian::for_state(&h.spec, state)?;
                let ts = evolve_ev_with(&hm, &op, state, &times)?;
                let sp = dft_trace_with(&ts, threshold, d.window)?;
                for (w, a) in sp.frequencies.iter().zip(&sp.amplitudes) {
                    csv.push_str(&format!("{},{},{},{},{}\n", g(h.u), field(label), field(&name), g(*w), g(*a)));
                }
                let peaks = sp.peaks_in(d.fmin.unwrap_or(0.0), d.fmax.unwrap_or(f64::INFINITY));
                let mut entry = json!({
                    "U": h.u, "state": label, "observable": name,
                    "bin_width": sp.bin_width, "peaks": peaks,
                });
                if d.attribute {
                    let key = state.species_distribution().0;
                    if !projector_cache.contains_key(&key) {
                        projector_cache.insert(key.clone(), isotypic_projectors(hm.basis_arc())?);
                    }
                    let ps = &projector_cache[&key];
                    let blocks = block_spectra(&hm, ps)?;
                    let expected = expected_frequencies(&blocks, None, 1e-9);
                    let report = match_peaks(&peaks, &expected, sp.bin_width)?;
                    entry["attribution"] = serde_json::to_value(&report).expect("plain data");
                    entry["weights"] = json!(state_weights(state, ps)?);
                }
                reports.push(entry);
            }
        }
    }
    Ok(vec![
        Artifact::text("dft.csv", csv),
        Artifact::json("peaks.json", &Value::Array(reports)),
    ])
}

pub fn blocks(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let basis = system_basis(cfg)?;
    let ps = isotypic_projectors(basis.clone())?;
    let mut csv = String::new();
    let mut out = Vec::new();
    for h in hamiltonians(cfg, basis.modes())? {
        let hm = ManyBodyHamiltonian::build(&h.spec, basis.clone())?;
        let spectra = block_spectra(&hm, &ps)?;
        let body = block_spectra_csv(&spectra);
        let mut lines = body.lines();
        let header = lines.next().unwrap_or_default();
        if csv.is_empty() {
            csv = format!("U,{header}\n");
        }
        for line in lines {
            csv.push_str(&format!("{},{line}\n", g(h.u)));
        }
        let accidental: Vec<Value> = accidental_degeneracies(&spectra)
            .into_iter()
            .map(|(a, b, e)| json!({"lambda_a": a.label(), "lambda_b": b.label(), "energy": e}))
            .collect();
        let blocks: Vec<Value> = spectra
            .iter()
            .map(|s| json!({"lambda": s.lambda.label(), "nu_multiplicity": s.nu_multiplicity, "eigenvalues": s.per_copy()}))
            .collect();
        out.push(json!({"U": h.u, "blocks": blocks, "accidental_degeneracies": accidental}));
    }
    Ok(vec![
        Artifact::text("blocks.csv", csv),
        Artifact::json("blocks.json", &Value::Array(out)),
    ])
}

pub fn weights(cfg: &ExperimentConfig) -> Run<Vec<Artifact>> {
    let modes = cfg.system()?.modes;
    let states = cfg.fock_states(modes)?;
    let mut cache: BTreeMap<Vec<usize>, Vec<IsotypicProjector>> = BTreeMap::new();
    let mut csv = String::from("state,lambda,weight\n");
    for (label, state) in &states {
        let key = state.species_distribution().0;
        if !cache.contains_key(&key) {
            let basis = Arc::new(FockBasis::sector_of(state, DEFAULT_BASIS_LIMIT)?);
            cache.insert(key.clone(), isotypic_projectors(basis)?);
        }
        for (lambda, w) in state_weights(state, &cache[&key])? {
            csv.push_str(&format!("{},{lambda},{}\n", field(label), g(w)));
        }
    }
    Ok(vec![Artifact::text("weights.csv", csv)])
}
