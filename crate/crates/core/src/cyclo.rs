//! Cyclostationary statistics: finite-time spectrum, cyclic periodogram
//! (SCF estimate) and the degree of cyclostationarity (DCS).
//!
//! The SCF at cycle frequency `alpha` is estimated from a single full-window
//! DFT as `Y(f - alpha/2) Y*(f + alpha/2)`, with `alpha` snapped to the
//! nearest multiple of the bin spacing `1/T0`. When the snapped shift is an
//! odd number of bins the two half-shift splits (floor/ceil and ceil/floor)
//! are both formed and their energies averaged.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::waveform::DsssParams;

pub const DEFAULT_BIT_CYCLES: usize = 4;
pub const DEFAULT_CHIP_CYCLES: usize = 2;

/// Non-zero cycle frequencies examined by the detector, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSet {
    alphas_hz: Vec<f64>,
}

impl CycleSet {
    pub fn new(mut alphas_hz: Vec<f64>) -> Result<Self> {
        if alphas_hz.iter().any(|a| !a.is_finite() || *a == 0.0) {
            return Err(Error::param("cycle frequencies must be finite and non-zero"));
        }
        alphas_hz.sort_by(f64::total_cmp);
        alphas_hz.dedup();
        Ok(Self { alphas_hz })
    }

    /// Bit-rate harmonics `k/T_b` (k = 1..=k_bit) and chip-rate harmonics
    /// `k/T_c` (k = 1..=k_chip), restricted to `(0, fs/2)`.
    pub fn for_dsss(params: &DsssParams, k_bit: usize, k_chip: usize) -> Self {
        let nyquist = params.sample_rate_hz() / 2.0;
        let bit_rate = 1.0 / params.bit_duration_s;
        let chip_rate = params.bandwidth_hz();
        let mut alphas: Vec<f64> = (1..=k_bit)
            .map(|k| k as f64 * bit_rate)
            .chain((1..=k_chip).map(|k| k as f64 * chip_rate))
            .filter(|&a| a > 0.0 && a < nyquist * (1.0 - 1e-12))
            .collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
        Self { alphas_hz: alphas }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas_hz
    }

    pub fn len(&self) -> usize {
        self.alphas_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas_hz.is_empty()
    }
}

/// DFT of the observation window scaled by the sample period, natural order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub bin_spacing_hz: f64,
    pub sample_rate_hz: f64,
}

impl Spectrum {
    /// Bins reordered by frequency, from `-fs/2` upwards.
    pub fn centered(&self) -> Vec<Complex64> {
        let n = self.bins.len();
        let center = n / 2;
        (0..n).map(|j| self.bins[(j + n - center) % n]).collect()
    }

    pub fn observation_time_s(&self) -> f64 {
        1.0 / self.bin_spacing_hz
    }
}

pub fn finite_time_spectrum(samples: &[f64], sample_rate_hz: f64) -> Result<Spectrum> {
    if samples.len() < 2 {
        return Err(Error::param("spectrum needs at least two samples"));
    }
    let n = samples.len();
    let dt = 1.0 / sample_rate_hz;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut bins: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x * dt, 0.0)).collect();
    fft.process(&mut bins);
    Ok(Spectrum { bins, bin_spacing_hz: sample_rate_hz / n as f64, sample_rate_hz })
}

/// Cyclic periodogram at one cycle frequency.
#[derive(Debug, Clone)]
pub struct CyclicSlice {
    pub alpha_hz: f64,
    pub shift_bins: usize,
    /// One product sequence for an even shift, two (floor/ceil splits) for odd.
    pub variants: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone)]
pub struct ScfEstimate {
    /// `|Y(f)|^2` over all bins, the `alpha = 0` entry.
    pub zero: Vec<f64>,
    pub cyclic: Vec<CyclicSlice>,
    pub frequency_resolution_hz: f64,
    pub observation_time_s: f64,
}

/// Integer bin shift for `alpha`, or `None` when it must be excluded.
fn snap_alpha(alpha_hz: f64, bin_spacing_hz: f64, sample_rate_hz: f64, n: usize) -> Option<usize> {
    if alpha_hz >= sample_rate_hz {
        log::warn!("cycle frequency {alpha_hz} Hz is not below the sample rate; excluded");
        return None;
    }
    let shift = (alpha_hz / bin_spacing_hz).round() as usize;
    if shift == 0 || shift >= n {
        log::warn!("cycle frequency {alpha_hz} Hz does not resolve to a usable bin shift; excluded");
        return None;
    }
    Some(shift)
}

fn split_pairs(shift: usize) -> Vec<(usize, usize)> {
    let lo = shift / 2;
    let hi = shift - lo;
    if lo == hi {
        vec![(lo, hi)]
    } else {
        vec![(lo, hi), (hi, lo)]
    }
}

pub fn estimate_scf(spectrum: &Spectrum, cycles: &CycleSet) -> ScfEstimate {
    let y = spectrum.centered();
    let n = y.len();
    let zero = y.iter().map(|v| v.norm_sqr()).collect();
    let cyclic = cycles
        .alphas()
        .iter()
        .filter_map(|&alpha| {
            let shift = snap_alpha(alpha, spectrum.bin_spacing_hz, spectrum.sample_rate_hz, n)?;
            let variants = split_pairs(shift)
                .into_iter()
                .map(|(lo, hi)| (lo..n - hi).map(|j| y[j - lo] * y[j + hi].conj()).collect())
                .collect();
            Some(CyclicSlice { alpha_hz: alpha, shift_bins: shift, variants })
        })
        .collect();
    ScfEstimate {
        zero,
        cyclic,
        frequency_resolution_hz: spectrum.bin_spacing_hz,
        observation_time_s: spectrum.observation_time_s(),
    }
}

/// Ratio of cyclic SCF energy to the `alpha = 0` energy, summed over cycles.
pub fn dcs(scf: &ScfEstimate) -> Result<f64> {
    let df = scf.frequency_resolution_hz;
    let denom: f64 = scf.zero.iter().map(|p| p * p).sum::<f64>() * df;
    if !(denom > 0.0) {
        return Err(Error::param("DCS undefined: zero-energy observation"));
    }
    let numer: f64 = scf
        .cyclic
        .iter()
        .map(|slice| {
            let total: f64 = slice
                .variants
                .iter()
                .map(|v| v.iter().map(|s| s.norm_sqr()).sum::<f64>() * df)
                .sum();
            total / slice.variants.len() as f64
        })
        .sum();
    Ok(numer / denom)
}

/// Reusable DCS evaluator for fixed-length windows.
///
/// Since `|Y(f - a/2) Y*(f + a/2)|^2 = |Y(f - a/2)|^2 |Y(f + a/2)|^2`, only the
/// periodogram is needed; this avoids forming the complex products. An
/// optional band limit zeroes bins outside `|f| <= limit`, modelling an ideal
/// receiver front-end filter.
#[derive(Clone)]
pub struct DcsEstimator {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
    sample_rate_hz: f64,
    pairs: Vec<Vec<(usize, usize)>>,
    band_limit_hz: Option<f64>,
}

impl std::fmt::Debug for DcsEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DcsEstimator")
            .field("len", &self.len)
            .field("pairs", &self.pairs)
            .field("band_limit_hz", &self.band_limit_hz)
            .finish()
    }
}

impl DcsEstimator {
    pub fn new(len: usize, sample_rate_hz: f64, cycles: &CycleSet) -> Result<Self> {
        if len < 2 {
            return Err(Error::param("DCS window needs at least two samples"));
        }
        let spacing = sample_rate_hz / len as f64;
        let pairs = cycles
            .alphas()
            .iter()
            .filter_map(|&a| snap_alpha(a, spacing, sample_rate_hz, len))
            .map(split_pairs)
            .collect();
        Ok(Self {
            fft: FftPlanner::<f64>::new().plan_fft_forward(len),
            len,
            sample_rate_hz,
            pairs,
            band_limit_hz: None,
        })
    }

    pub fn with_band_limit(mut self, limit_hz: f64) -> Self {
        self.band_limit_hz = Some(limit_hz);
        self
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Unscaled `|DFT|^2`, centred (lowest frequency first), band-limited.
    pub fn periodogram(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.len {
            return Err(Error::param(format!(
                "window has {} samples, estimator expects {}",
                samples.len(),
                self.len
            )));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        let n = self.len;
        let center = n / 2;
        let spacing = self.sample_rate_hz / n as f64;
        let keep = |j: usize| match self.band_limit_hz {
            Some(limit) => ((j as f64 - center as f64) * spacing).abs() <= limit * (1.0 + 1e-12),
            None => true,
        };
        Ok((0..n)
            .map(|j| if keep(j) { buf[(j + n - center) % n].norm_sqr() } else { 0.0 })
            .collect())
    }

    /// Mean power of the (band-limited) window, by Parseval.
    pub fn power_from_periodogram(&self, power: &[f64]) -> f64 {
        power.iter().sum::<f64>() / (self.len as f64 * self.len as f64)
    }

    pub fn dcs_from_periodogram(&self, power: &[f64]) -> Result<f64> {
        let n = self.len;
        let denom: f64 = power.iter().map(|p| p * p).sum();
        if !(denom > 0.0) {
            return Err(Error::param("DCS undefined: zero-energy observation"));
        }
        // scaling by dt cancels in the ratio
        let numer: f64 = self
            .pairs
            .iter()
            .map(|variants| {
                variants
                    .iter()
                    .map(|&(lo, hi)| (lo..n - hi).map(|j| power[j - lo] * power[j + hi]).sum::<f64>())
                    .sum::<f64>()
                    / variants.len() as f64
            })
            .sum();
        Ok(numer / denom)
    }

    pub fn estimate(&self, samples: &[f64]) -> Result<f64> {
        self.dcs_from_periodogram(&self.periodogram(samples)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{random_bits, synthesize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_gives_two_conjugate_peaks() {
        let n = 64;
        let fs = 64.0;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / fs).cos()).collect();
        let s = finite_time_spectrum(&x, fs).unwrap();
        let mags: Vec<f64> = s.bins.iter().map(|b| b.norm()).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
        let mut top = [idx[0], idx[1]];
        top.sort();
        assert_eq!(top, [5, 59]);
        assert!((s.bins[5] - s.bins[59].conj()).norm() < 1e-12);
        assert!(mags[idx[2]] < 1e-12);
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1000).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
        let fs = 250.0;
        let s = finite_time_spectrum(&x, fs).unwrap();
        let lhs: f64 = s.bins.iter().map(|b| b.norm_sqr()).sum::<f64>() * s.bin_spacing_hz;
        let rhs: f64 = x.iter().map(|v| v * v).sum::<f64>() / fs;
        assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_input_zero_spectrum_and_dcs_error() {
        let s = finite_time_spectrum(&[0.0; 16], 1.0).unwrap();
        assert!(s.bins.iter().all(|b| b.norm() == 0.0));
        let cycles = CycleSet::new(vec![0.25]).unwrap();
        let scf = estimate_scf(&s, &cycles);
        assert!(dcs(&scf).is_err());
        assert!(DcsEstimator::new(16, 1.0, &cycles).unwrap().estimate(&[0.0; 16]).is_err());
    }

    #[test]
    fn zero_cycle_entry_is_periodogram() {
        let x = [1.0, 2.0, -1.0, 0.5, 0.0, -2.0, 1.5, 0.25];
        let s = finite_time_spectrum(&x, 8.0).unwrap();
        let scf = estimate_scf(&s, &CycleSet::new(vec![2.0]).unwrap());
        let centered = s.centered();
        for (p, y) in scf.zero.iter().zip(&centered) {
            assert!(*p >= 0.0);
            assert!((p - y.norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn ratio_identities() {
        let zero = vec![1.0, 2.0, 3.0];
        let as_complex: Vec<Complex64> = zero.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        let base = ScfEstimate {
            zero: zero.clone(),
            cyclic: vec![],
            frequency_resolution_hz: 0.5,
            observation_time_s: 2.0,
        };
        let silent = ScfEstimate {
            cyclic: vec![CyclicSlice { alpha_hz: 1.0, shift_bins: 2, variants: vec![vec![Complex64::default(); 3]] }],
            ..base.clone()
        };
        assert_eq!(dcs(&silent).unwrap(), 0.0);
        let equal = ScfEstimate {
            cyclic: vec![CyclicSlice { alpha_hz: 1.0, shift_bins: 2, variants: vec![as_complex] }],
            ..base
        };
        assert!((dcs(&equal).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_band_alpha_is_excluded() {
        let s = finite_time_spectrum(&[1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0], 8.0).unwrap();
        let scf = estimate_scf(&s, &CycleSet::new(vec![2.0, 9.0]).unwrap());
        assert_eq!(scf.cyclic.len(), 1);
    }

    #[test]
    fn dsss_cycles_stay_below_nyquist() {
        let p = DsssParams::new(7, 1.0, 0).unwrap();
        let c = CycleSet::for_dsss(&p, 4, 2);
        // fs = 28 Hz: bit harmonics 1..4 and chip rate 7; 14 sits at fs/2
        assert_eq!(c.alphas(), &[1.0, 2.0, 3.0, 4.0, 7.0]);
    }

    #[test]
    fn fast_estimator_matches_scf_path() {
        let p = DsssParams::new(7, 1.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits = random_bits(&mut rng, 33);
        let w = synthesize(&p, &bits, 1.0).unwrap();
        let x = w.observation();
        let cycles = CycleSet::for_dsss(&p, 4, 2);
        let slow = dcs(&estimate_scf(&finite_time_spectrum(x, w.sample_rate_hz).unwrap(), &cycles)).unwrap();
        let fast = DcsEstimator::new(x.len(), w.sample_rate_hz, &cycles).unwrap().estimate(x).unwrap();
        assert!((slow / fast - 1.0).abs() < 1e-10, "{slow} vs {fast}");
    }
}
