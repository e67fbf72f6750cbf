//! Python module `bosim`. Modes and sites are 1-based here, as in the text form of states.

use std::collections::BTreeMap;
use std::sync::Arc;

use bosim_core::dynamics::{evolve_ev_noninteracting, evolve_ev_with, HamiltonianSpec, ManyBodyHamiltonian, TimeSeries};
use bosim_core::fock::{doi as core_doi, FockBasis, FockState, SystemShape, DEFAULT_BASIS_LIMIT};
use bosim_core::measures::{density_squared, excess_fluctuation as core_excess};
use bosim_core::operators::{density, Boundary, OperatorSum};
use bosim_core::spectral::{dft_trace_with, Window, PEAK_THRESHOLD};
use bosim_core::symmetry::{isotypic_projectors, state_weights};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: bosim_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn site(l: usize, modes: usize) -> PyResult<usize> {
    if l == 0 || l > modes {
        return Err(PyValueError::new_err(format!("site {l} outside 1..={modes}")));
    }
    Ok(l - 1)
}

fn boundary(name: &str) -> PyResult<Boundary> {
    match name {
        "hard-wall" => Ok(Boundary::HardWall),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(PyValueError::new_err(format!("unknown boundary '{name}'"))),
    }
}

/// Parses `m:α^n ...` into a state of the given shape.
fn parse(fock: &str, modes: usize, species: usize) -> PyResult<FockState> {
    FockState::from_text(fock, modes, species).map_err(err)
}

/// Number of Fock states with `particles` bosons in `modes` × `species` slots.
#[pyfunction]
fn basis_size(modes: usize, species: usize, particles: usize) -> PyResult<u128> {
    SystemShape::new(modes, species, particles).and_then(|s| s.basis_size()).map_err(err)
}

/// Degree of indistinguishability as `(numerator, denominator)`.
#[pyfunction]
fn doi(fock: &str, modes: usize, species: usize) -> PyResult<(u64, u64)> {
    let r = core_doi(&parse(fock, modes, species)?).map_err(err)?.ratio();
    Ok((*r.numer(), *r.denom()))
}

/// Trace of `n_site` (or `n_site²`) under the Bose-Hubbard chain.
#[pyfunction]
#[pyo3(signature = (fock, modes, species, site_index, times, j=1.0, u=0.0, f=0.0, squared=false, boundary_name="hard-wall"))]
#[allow(clippy::too_many_arguments)]
fn evolve_density(
    fock: &str,
    modes: usize,
    species: usize,
    site_index: usize,
    times: Vec<f64>,
    j: f64,
    u: f64,
    f: f64,
    squared: bool,
    boundary_name: &str,
) -> PyResult<Vec<f64>> {
    let state = parse(fock, modes, species)?;
    let l = site(site_index, modes)?;
    let spec = HamiltonianSpec::bose_hubbard(j, u, f, modes, boundary(boundary_name)?).map_err(err)?;
    let op = if squared {
        density_squared(l, modes).map_err(err)?
    } else {
        OperatorSum::from(density(l, modes).map_err(err)?)
    };
    let ts = if spec.is_interacting() {
        let h = ManyBodyHamiltonian::for_state(&spec, &state).map_err(err)?;
        evolve_ev_with(&h, &op, &state, &times)
    } else {
        evolve_ev_noninteracting(&op, &state, &spec, &times)
    }
    .map_err(err)?;
    Ok(ts.values)
}

/// Excess fluctuation F of `n_site²` on a Bose-Hubbard chain.
#[pyfunction]
#[pyo3(signature = (fock, modes, species, site_index, j=1.0, u=0.0, boundary_name="hard-wall"))]
fn excess_fluctuation(
    fock: &str,
    modes: usize,
    species: usize,
    site_index: usize,
    j: f64,
    u: f64,
    boundary_name: &str,
) -> PyResult<f64> {
    let state = parse(fock, modes, species)?;
    let spec = HamiltonianSpec::bose_hubbard(j, u, 0.0, modes, boundary(boundary_name)?).map_err(err)?;
    core_excess(&state, &spec, site(site_index, modes)?).map_err(err)
}

/// Weight of the state in each symmetry block, keyed by partition label.
#[pyfunction]
fn block_weights(fock: &str, modes: usize, species: usize) -> PyResult<BTreeMap<String, f64>> {
    let state = parse(fock, modes, species)?;
    let basis = Arc::new(FockBasis::sector_of(&state, DEFAULT_BASIS_LIMIT).map_err(err)?);
    let ps = isotypic_projectors(basis).map_err(err)?;
    state_weights(&state, &ps).map_err(err)
}

/// Peaks `(ω, amplitude)` of the one-sided amplitude spectrum of a uniformly sampled trace.
#[pyfunction]
#[pyo3(signature = (times, values, hann=true, threshold=PEAK_THRESHOLD))]
fn dft_peaks(times: Vec<f64>, values: Vec<f64>, hann: bool, threshold: f64) -> PyResult<Vec<(f64, f64)>> {
    if times.len() != values.len() {
        return Err(PyValueError::new_err("times and values differ in length"));
    }
    let window = if hann { Window::Hann } else { Window::Rectangular };
    let spec = dft_trace_with(&TimeSeries::new(times, values), threshold, window).map_err(err)?;
    Ok(spec.peaks.iter().map(|p| (p.frequency, p.amplitude)).collect())
}

#[pymodule]
fn bosim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", bosim_core::VERSION)?;
    m.add_function(wrap_pyfunction!(basis_size, m)?)?;
    m.add_function(wrap_pyfunction!(doi, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_density, m)?)?;
    m.add_function(wrap_pyfunction!(excess_fluctuation, m)?)?;
    m.add_function(wrap_pyfunction!(block_weights, m)?)?;
    m.add_function(wrap_pyfunction!(dft_peaks, m)?)?;
    Ok(())
}
