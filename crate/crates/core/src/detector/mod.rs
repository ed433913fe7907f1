//! Willie's per-hop detectors and their Monte-Carlo calibration.
//!
//! Both detectors observe `obs_bits` bit periods of either noise alone (H0)
//! or the DSSS signal plus noise (H1). The cycle detector thresholds the DCS
//! estimate, the energy detector the mean sample power. Detection error
//! probability is `P_MD + P_FA` at the empirically optimal threshold.

mod isotonic;
mod table;
mod threshold;

pub use isotonic::{fit_grid_non_increasing, fit_non_decreasing, fit_non_increasing};
pub use table::{calibrate, CalibrationTable, DepEstimate, DepPoint, SnrBound};
pub use threshold::{dep_ci_halfwidth, optimize_threshold, ThresholdChoice};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cyclo::{CycleSet, DcsEstimator, DEFAULT_BIT_CYCLES, DEFAULT_CHIP_CYCLES};
use crate::error::{Error, Result};
use crate::rng;
use crate::waveform::{self, rrc_pulse, DsssParams, DEFAULT_SPAN_CHIPS};

pub const DEFAULT_TRIALS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Cycle,
    Energy,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Cycle => "cycle",
            DetectorKind::Energy => "energy",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycle" => Ok(DetectorKind::Cycle),
            "energy" => Ok(DetectorKind::Energy),
            other => Err(Error::Config(format!("unknown detector '{other}' (expected cycle or energy)"))),
        }
    }
}

/// Seedable description of the waveform Willie is calibrated against.
///
/// Time is normalized to one bit per second; the detectors only depend on
/// SNR and the number of observed bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    #[serde(default = "default_spreading_length")]
    pub spreading_length: usize,
    #[serde(default = "default_samples_per_chip")]
    pub samples_per_chip: usize,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_span")]
    pub span_chips: usize,
    #[serde(default)]
    pub code_seed: u64,
    #[serde(default = "default_bit_cycles")]
    pub k_bit_cycles: usize,
    #[serde(default = "default_chip_cycles")]
    pub k_chip_cycles: usize,
}

fn default_spreading_length() -> usize {
    7
}
fn default_samples_per_chip() -> usize {
    4
}
fn default_rolloff() -> f64 {
    1.0
}
fn default_span() -> usize {
    DEFAULT_SPAN_CHIPS
}
fn default_bit_cycles() -> usize {
    DEFAULT_BIT_CYCLES
}
fn default_chip_cycles() -> usize {
    DEFAULT_CHIP_CYCLES
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            spreading_length: default_spreading_length(),
            samples_per_chip: default_samples_per_chip(),
            rolloff: default_rolloff(),
            span_chips: default_span(),
            code_seed: 0,
            k_bit_cycles: default_bit_cycles(),
            k_chip_cycles: default_chip_cycles(),
        }
    }
}

impl WaveformSpec {
    pub fn params(&self) -> Result<DsssParams> {
        let params = DsssParams {
            spreading_length: self.spreading_length,
            bit_duration_s: 1.0,
            rolloff: self.rolloff,
            samples_per_chip: self.samples_per_chip,
            span_chips: self.span_chips,
            code: waveform::spreading_code(self.spreading_length, self.code_seed)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn cycles(&self) -> Result<CycleSet> {
        Ok(CycleSet::for_dsss(&self.params()?, self.k_bit_cycles, self.k_chip_cycles))
    }

    pub fn fingerprint(&self, detector: DetectorKind) -> Fingerprint {
        Fingerprint {
            detector,
            spreading_length: self.spreading_length,
            rolloff: self.rolloff,
            samples_per_chip: self.samples_per_chip,
            span_chips: self.span_chips,
            code_seed: self.code_seed,
            k_bit_cycles: self.k_bit_cycles,
            k_chip_cycles: self.k_chip_cycles,
        }
    }
}

/// Identity of a calibration: what was simulated, not how many trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub detector: DetectorKind,
    pub spreading_length: usize,
    pub rolloff: f64,
    pub samples_per_chip: usize,
    pub span_chips: usize,
    pub code_seed: u64,
    pub k_bit_cycles: usize,
    pub k_chip_cycles: usize,
}

impl Fingerprint {
    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("fingerprint serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn file_name(&self) -> String {
        format!("calibration_{}_{}.json", self.detector, self.hash())
    }
}

/// Sorted detector statistics under both hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatistics {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub trials: usize,
    pub snr_w: f64,
    pub obs_bits: usize,
}

/// Simulates `trials` windows under each hypothesis at Willie's in-band SNR
/// `snr_w` (no despreading gain). Each trial's randomness is derived from
/// `(seed, hypothesis, trial)`, so results do not depend on scheduling.
pub fn run_trials(
    kind: DetectorKind,
    spec: &WaveformSpec,
    snr_w: f64,
    obs_bits: usize,
    trials: usize,
    seed: u64,
) -> Result<TrialStatistics> {
    if trials < 2 {
        return Err(Error::param(format!("need at least 2 trials, got {trials}")));
    }
    if obs_bits < 8 {
        return Err(Error::param(format!("observation must cover at least 8 bits, got {obs_bits}")));
    }
    if !(snr_w >= 0.0) || !snr_w.is_finite() {
        return Err(Error::param(format!("SNR at Willie must be finite and non-negative, got {snr_w}")));
    }
    let params = spec.params()?;
    let taps = rrc_pulse(params.rolloff, params.span_chips, params.samples_per_chip, params.spreading_length)?;
    let window = obs_bits * params.samples_per_bit();
    let fs = params.sample_rate_hz();

    // N0 = 1 W/Hz; the in-band signal power is then snr_w * Omega
    let n0 = 1.0;
    let sigma = waveform::noise_variance(n0, fs).sqrt();
    let amplitude = (snr_w * n0 * params.bandwidth_hz()).sqrt();

    // Willie's front end passes the occupied band |f| <= Omega
    let front_end = DcsEstimator::new(window, fs, &spec.cycles()?)?.with_band_limit(params.bandwidth_hz());
    let statistic = |samples: &[f64]| -> Result<f64> {
        let power = front_end.periodogram(samples)?;
        match kind {
            DetectorKind::Cycle => front_end.dcs_from_periodogram(&power),
            DetectorKind::Energy => Ok(front_end.power_from_periodogram(&power)),
        }
    };

    let simulate = |hypothesis: u64, trial: usize| -> Result<f64> {
        let mut rng = rng::stream(seed, &[hypothesis, trial as u64]);
        let mut samples = if hypothesis == 1 {
            let bits = waveform::random_bits(&mut rng, obs_bits);
            let wf = waveform::synthesize_with_taps(&params, &taps, &bits, amplitude);
            wf.observation().to_vec()
        } else {
            vec![0.0; window]
        };
        waveform::add_noise_in_place(&mut samples, sigma, &mut rng);
        statistic(&samples)
    };

    let collect = |hypothesis: u64| -> Result<Vec<f64>> {
        let mut v = (0..trials)
            .into_par_iter()
            .map(|t| simulate(hypothesis, t))
            .collect::<Result<Vec<f64>>>()?;
        v.sort_by(f64::total_cmp);
        Ok(v)
    };

    Ok(TrialStatistics { h0: collect(0)?, h1: collect(1)?, trials, snr_w, obs_bits })
}
