//! Spectrum sweeps, DFT of traces, peak extraction and attribution of
//! frequencies to symmetry blocks.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::{format_g15, HamiltonianSpec, ManyBodyHamiltonian, TimeSeries};
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::operators::Boundary;
use crate::symmetry::{block_spectra, isotypic_projectors, BlockSpectrum, Partition};

/// Default relative peak threshold.
pub const PEAK_THRESHOLD: f64 = 1e-4;
/// Upper edge of the angular-frequency window used for the double-well forensics.
pub const FORENSICS_WINDOW: f64 = 2.0 * std::f64::consts::PI;

/// Levels of one block followed across the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBlock {
    pub lambda: Partition,
    pub nu_multiplicity: usize,
    /// `levels[k][i]`: level `k` at grid point `i`.
    pub levels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSweep {
    pub etas: Vec<f64>,
    pub j0: f64,
    pub blocks: Vec<SweepBlock>,
    /// Full spectrum at every grid point, ascending.
    pub full: Vec<Vec<f64>>,
}

impl SpectrumSweep {
    pub fn block(&self, lambda: &Partition) -> Option<&SweepBlock> {
        self.blocks.iter().find(|b| &b.lambda == lambda)
    }

    /// One copy of the block spectrum at grid point `i`, ascending.
    pub fn block_at(&self, lambda: &Partition, i: usize) -> Option<Vec<f64>> {
        let b = self.block(lambda)?;
        let mut v: Vec<f64> = b.levels.iter().map(|l| l[i]).collect();
        v.sort_by(f64::total_cmp);
        Some(v)
    }

    /// CSV `eta,lambda,level,eigenvalue`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,lambda,level,eigenvalue\n");
        for (i, eta) in self.etas.iter().enumerate() {
            for b in &self.blocks {
                for (k, level) in b.levels.iter().enumerate() {
                    out.push_str(&format!("{},{},{},{}\n", format_g15(*eta), b.lambda, k, format_g15(level[i])));
                }
            }
        }
        out
    }
}

/// Reorders `next` so that entry `k` is the nearest unused value to `prev[k]`.
fn continue_levels(prev: &[f64], next: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * next.len());
    for (i, a) in prev.iter().enumerate() {
        for (j, b) in next.iter().enumerate() {
            pairs.push(((a - b).abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![f64::NAN; prev.len()];
    let mut used = vec![false; next.len()];
    for (_, i, j) in pairs {
        if out[i].is_nan() && !used[j] {
            out[i] = next[j];
            used[j] = true;
        }
    }
    out
}

/// Block-resolved spectra of the Bose-Hubbard chain with `J = (1−η)J0`, `U = ηJ0`.
pub fn spectrum_sweep(basis: Arc<FockBasis>, j0: f64, etas: &[f64], boundary: Boundary) -> Result<SpectrumSweep> {
    if etas.windows(2).any(|w| w[1] < w[0]) || etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::InvalidInput("eta grid must be sorted within [0, 1]".into()));
    }
    let projectors = isotypic_projectors(basis.clone())?;
    let modes = basis.modes();
    let points: Vec<(Vec<BlockSpectrum>, Vec<f64>)> = etas
        .par_iter()
        .map(|&eta| {
            let spec = HamiltonianSpec::bose_hubbard((1.0 - eta) * j0, eta * j0, 0.0, modes, boundary)?;
            let h = ManyBodyHamiltonian::build(&spec, basis.clone())?;
            let blocks = block_spectra(&h, &projectors)?;
            let full = h.eigen()?.values.clone();
            Ok((blocks, full))
        })
        .collect::<Result<_>>()?;
    let mut blocks: Vec<SweepBlock> = Vec::new();
    for (i, (spectra, _)) in points.iter().enumerate() {
        for (b, s) in spectra.iter().enumerate() {
            let copy = s.per_copy();
            if i == 0 {
                blocks.push(SweepBlock {
                    lambda: s.lambda.clone(),
                    nu_multiplicity: s.nu_multiplicity,
                    levels: copy.iter().map(|&e| vec![e]).collect(),
                });
            } else {
                let prev: Vec<f64> = blocks[b].levels.iter().map(|l| l[i - 1]).collect();
                for (k, e) in continue_levels(&prev, &copy).into_iter().enumerate() {
                    blocks[b].levels[k].push(e);
                }
            }
        }
    }
    Ok(SpectrumSweep {
        etas: etas.to_vec(),
        j0,
        blocks,
        full: points.into_iter().map(|(_, f)| f).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Taper applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann taper; amplitudes are divided by its coherent gain 1/2.
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided amplitude spectrum of a mean-subtracted real trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySpectrum {
    pub window: Window,
    /// Angular frequencies `2πk/(nΔt)`, `k = 0..=n/2`.
    pub frequencies: Vec<f64>,
    /// `2|X_k|/n` (`|X_k|/n` at `k = 0` and at the Nyquist bin of even `n`).
    pub amplitudes: Vec<f64>,
    pub samples: usize,
    pub bin_width: f64,
    pub peaks: Vec<Peak>,
}

impl FrequencySpectrum {
    /// `Σ x_i²` of the (windowed, gain-corrected) mean-subtracted signal, rebuilt from the amplitudes.
    pub fn signal_energy(&self) -> f64 {
        let n = self.samples as f64;
        let last = self.amplitudes.len() - 1;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k == 0 || (self.samples % 2 == 0 && k == last) {
                    n * a * a
                } else {
                    n * a * a / 2.0
                }
            })
            .sum()
    }

    /// Peaks with frequency in `[lo, hi]`.
    pub fn peaks_in(&self, lo: f64, hi: f64) -> Vec<Peak> {
        self.peaks
            .iter()
            .copied()
            .filter(|p| p.frequency >= lo && p.frequency <= hi)
            .collect()
    }

    /// CSV `freq,amplitude`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq,amplitude\n");
        for (w, a) in self.frequencies.iter().zip(&self.amplitudes) {
            out.push_str(&format!("{},{}\n", format_g15(*w), format_g15(*a)));
        }
        out
    }
}

/// DFT of a uniformly sampled trace with peaks above `threshold × max`.
pub fn dft_trace_with(ts: &TimeSeries, threshold: f64, window: Window) -> Result<FrequencySpectrum> {
    let dt = ts.uniform_step().ok_or(Error::NonUniformGrid)?;
    let n = ts.values.len();
    let w = window.weights(n);
    // weighted mean keeps the tapered signal free of a DC component
    let mean = ts.values.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / w.iter().sum::<f64>();
    let gain = w.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = ts
        .values
        .iter()
        .zip(&w)
        .map(|(&x, &w)| Complex::new((x - mean) * w / gain, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let bin_width = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let frequencies: Vec<f64> = (0..=half).map(|k| k as f64 * bin_width).collect();
    let amplitudes: Vec<f64> = (0..=half)
        .map(|k| {
            let a = buf[k].norm() / n as f64;
            if k == 0 || (n % 2 == 0 && k == half) {
                a
            } else {
                2.0 * a
            }
        })
        .collect();
    let peaks = find_peaks(&amplitudes, bin_width, threshold);
    Ok(FrequencySpectrum {
        window,
        frequencies,
        amplitudes,
        samples: n,
        bin_width,
        peaks,
    })
}

/// Rectangular window, default threshold.
pub fn dft_trace(ts: &TimeSeries) -> Result<FrequencySpectrum> {
    dft_trace_with(ts, PEAK_THRESHOLD, Window::Rectangular)
}

/// Strict local maxima above `threshold × max`, refined by a parabola through three bins.
pub fn find_peaks(amplitudes: &[f64], bin_width: f64, threshold: f64) -> Vec<Peak> {
    let max = amplitudes.iter().skip(1).copied().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Vec::new();
    }
    let floor = threshold * max;
    let mut peaks = Vec::new();
    for k in 1..amplitudes.len() {
        let b = amplitudes[k];
        let a = amplitudes[k - 1];
        let c = amplitudes.get(k + 1).copied().unwrap_or(0.0);
        if b < floor || b <= a || b < c || (b == c) {
            continue;
        }
        let den = a - 2.0 * b + c;
        let delta = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        peaks.push(Peak {
            frequency: (k as f64 + delta) * bin_width,
            amplitude: b - 0.25 * (a - c) * delta,
        });
    }
    peaks
}

/// Positive pairwise differences of one block copy, deduplicated within `tol`.
pub fn block_frequencies(levels: &[f64], tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, a) in levels.iter().enumerate() {
        for b in &levels[i + 1..] {
            let d = (a - b).abs();
            if d > tol {
                out.push(d);
            }
        }
    }
    dedupe_sorted(out, tol)
}

fn dedupe_sorted(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        if out.last().is_none_or(|&l| x - l > tol) {
            out.push(x);
        }
    }
    out
}

/// Expected frequencies per block label, restricted to `subset` when given.
pub fn expected_frequencies(
    spectra: &[BlockSpectrum],
    subset: Option<&[Partition]>,
    tol: f64,
) -> BTreeMap<String, Vec<f64>> {
    spectra
        .iter()
        .filter(|s| subset.is_none_or(|set| set.contains(&s.lambda)))
        .map(|s| (s.lambda.label(), block_frequencies(&s.per_copy(), tol)))
        .collect()
}

/// Union of expected frequency sets.
pub fn merged_frequencies(sets: &BTreeMap<String, Vec<f64>>, tol: f64) -> Vec<f64> {
    dedupe_sorted(sets.values().flatten().copied().collect(), tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakAttribution {
    pub frequency: f64,
    pub amplitude: f64,
    pub lambdas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    pub tolerance: f64,
    pub peaks: Vec<PeakAttribution>,
    /// Indices into `peaks` without any matching expected frequency.
    pub unmatched: Vec<usize>,
}

impl AttributionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Peaks attributed to `label` only.
    pub fn exclusive_to(&self, label: &str) -> Vec<&PeakAttribution> {
        self.peaks
            .iter()
            .filter(|p| p.lambdas.len() == 1 && p.lambdas[0] == label)
            .collect()
    }
}

/// Labels each observed peak with every block whose expected set has a frequency within `tol`.
pub fn match_peaks(observed: &[Peak], expected: &BTreeMap<String, Vec<f64>>, tol: f64) -> Result<AttributionReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("matching tolerance must be positive".into()));
    }
    let mut peaks = Vec::new();
    let mut unmatched = Vec::new();
    for (i, p) in observed.iter().enumerate() {
        let lambdas: Vec<String> = expected
            .iter()
            .filter(|(_, fs)| fs.iter().any(|f| (f - p.frequency).abs() <= tol))
            .map(|(k, _)| k.clone())
            .collect();
        if lambdas.is_empty() {
            unmatched.push(i);
        }
        peaks.push(PeakAttribution {
            frequency: p.frequency,
            amplitude: p.amplitude,
            lambdas,
        });
    }
    Ok(AttributionReport {
        tolerance: tol,
        peaks,
        unmatched,
    })
}

/// Whether every frequency of `a` lies within `tol` of some frequency of `b`.
pub fn peak_set_contained(a: &[Peak], b: &[Peak], tol: f64) -> bool {
    a.iter().all(|p| b.iter().any(|q| (p.frequency - q.frequency).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockState, SpeciesDistribution, DEFAULT_BASIS_LIMIT};
    use crate::measures::density_squared;
    use crate::dynamics::evolve_ev_with;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn constant_trace_has_no_peaks() {
        let t = grid(200, 0.1);
        let ts = TimeSeries::new(t, vec![3.5; 200]);
        let s = dft_trace(&ts).unwrap();
        assert!(s.peaks.is_empty());
    }

    #[test]
    fn cosine_on_grid() {
        let n = 2000;
        let dt = 0.1;
        let w0 = 2.0 * PI * 37.0 / (n as f64 * dt);
        let t = grid(n, dt);
        let v: Vec<f64> = t.iter().map(|t| 0.7 * (w0 * t).cos() + 2.0).collect();
        let s = dft_trace(&TimeSeries::new(t, v)).unwrap();
        assert_eq!(s.peaks.len(), 1);
        assert!((s.peaks[0].frequency - w0).abs() < 1e-9);
        assert!((s.peaks[0].amplitude - 0.7).abs() < 0.007);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let ts = TimeSeries::new(vec![0.0, 0.1, 0.3], vec![1.0, 2.0, 3.0]);
        assert_eq!(dft_trace(&ts).unwrap_err(), Error::NonUniformGrid);
    }

    #[test]
    fn frequency_counts() {
        let levels = [0.0, 1.0, 3.0];
        assert_eq!(block_frequencies(&levels, 1e-9), vec![1.0, 2.0, 3.0]);
        assert!(block_frequencies(&[0.4], 1e-9).is_empty());
        let nine: Vec<f64> = (0..9).map(|i| (i as f64).powf(1.5)).collect();
        assert!(block_frequencies(&nine, 1e-9).len() <= 36);
    }

    #[test]
    fn synthetic_matching() {
        let mut expected = BTreeMap::new();
        expected.insert("8".to_string(), vec![0.5, 1.2]);
        expected.insert("7+1".to_string(), vec![1.2, 1.7]);
        let observed: Vec<Peak> = [0.5, 1.2, 1.7]
            .iter()
            .map(|&f| Peak { frequency: f, amplitude: 1.0 })
            .collect();
        let r = match_peaks(&observed, &expected, 1e-3).unwrap();
        assert!(r.unmatched.is_empty());
        assert_eq!(r.peaks[1].lambdas, vec!["7+1".to_string(), "8".to_string()]);
        assert_eq!(r.exclusive_to("7+1").len(), 1);
        let r = match_peaks(&[Peak { frequency: 3.0, amplitude: 1.0 }], &expected, 1e-3).unwrap();
        assert_eq!(r.unmatched, vec![0]);
    }

    #[test]
    fn sweep_endpoints() {
        let basis = Arc::new(FockBasis::sector(3, &SpeciesDistribution(vec![1, 1, 1]), DEFAULT_BASIS_LIMIT).unwrap());
        let etas = [0.0, 0.25, 0.5, 0.75, 1.0];
        let sweep = spectrum_sweep(basis, 1.0, &etas, Boundary::HardWall).unwrap();
        let sizes: Vec<usize> = sweep.blocks.iter().map(|b| b.levels.len()).collect();
        assert_eq!(sizes, vec![10, 8, 1]);
        let bosonic = sweep.block_at(&Partition(vec![3]), 0).unwrap();
        for b in &sweep.blocks {
            for e in sweep.block_at(&b.lambda, 0).unwrap() {
                assert!(bosonic.iter().any(|x| (x - e).abs() < 1e-9));
            }
            for e in sweep.block_at(&b.lambda, 4).unwrap() {
                assert!([0.0, 1.0, 3.0].iter().any(|x| (x - e).abs() < 1e-9));
            }
        }
        for b in &sweep.blocks {
            for level in &b.levels {
                assert!(level.iter().all(|x| x.is_finite()));
            }
        }
        assert!(sweep.to_csv().starts_with("eta,lambda,level,eigenvalue\n0,3,0,"));
    }

    #[test]
    fn peaks_are_block_differences() {
        // indistinguishable double-well trace probes only the symmetric block
        let s = FockState::from_entries(2, 1, &[(0, 0, 4), (1, 0, 4)]).unwrap();
        let basis = Arc::new(FockBasis::sector_of(&s, DEFAULT_BASIS_LIMIT).unwrap());
        let spec = HamiltonianSpec::double_well(1.0, 0.3).unwrap();
        let h = ManyBodyHamiltonian::build(&spec, basis.clone()).unwrap();
        let ps = isotypic_projectors(basis).unwrap();
        let blocks = block_spectra(&h, &ps).unwrap();
        let times = grid(10001, 0.1);
        let ts = evolve_ev_with(&h, &density_squared(0, 2).unwrap(), &s, &times).unwrap();
        let spec = dft_trace_with(&ts, PEAK_THRESHOLD, Window::Hann).unwrap();
        let expected = expected_frequencies(&blocks, None, 1e-9);
        let r = match_peaks(&spec.peaks, &expected, spec.bin_width).unwrap();
        assert!(!spec.peaks.is_empty());
        assert!(r.unmatched.is_empty(), "{:?}", r.unmatched);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn parseval(values in proptest::collection::vec(-5.0f64..5.0, 2..300)) {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let energy: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
            let s = dft_trace(&TimeSeries::new(grid(n, 0.1), values)).unwrap();
            prop_assert!((s.signal_energy() - energy).abs() <= 1e-10 * energy.max(1.0));
            prop_assert!(s.frequencies.iter().all(|&w| w >= 0.0));
        }
    }
}
