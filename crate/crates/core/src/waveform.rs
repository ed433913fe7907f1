//! Baseband DSSS waveform synthesis.
//!
//! Bits are spread by a bipolar code, shaped with a root-raised-cosine chip
//! pulse, and scaled by the transmit amplitude. Time is normalized so that the
//! pulse energy is `1/L` per chip in units of the bit duration; a long random
//! waveform therefore has mean power `amplitude^2`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SPAN_CHIPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsssParams {
    /// Chips per bit, `L`.
    pub spreading_length: usize,
    pub bit_duration_s: f64,
    pub rolloff: f64,
    pub samples_per_chip: usize,
    pub span_chips: usize,
    /// Bipolar code of length `L`, entries +1.0 or -1.0.
    pub code: Vec<f64>,
}

impl DsssParams {
    /// Parameters with the default spreading code for `spreading_length`
    /// (m-sequence when `L = 2^k - 1`, seeded random otherwise) and the
    /// smallest Nyquist-safe oversampling.
    pub fn new(spreading_length: usize, bit_duration_s: f64, code_seed: u64) -> Result<Self> {
        let rolloff = 1.0;
        let params = Self {
            spreading_length,
            bit_duration_s,
            rolloff,
            samples_per_chip: min_samples_per_chip(rolloff),
            span_chips: DEFAULT_SPAN_CHIPS,
            code: spreading_code(spreading_length, code_seed)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_samples_per_chip(mut self, samples_per_chip: usize) -> Result<Self> {
        self.samples_per_chip = samples_per_chip;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spreading_length == 0 {
            return Err(Error::param("spreading length must be positive"));
        }
        if self.code.len() != self.spreading_length {
            return Err(Error::param(format!(
                "code length {} does not match spreading length {}",
                self.code.len(),
                self.spreading_length
            )));
        }
        if self.code.iter().any(|&c| c != 1.0 && c != -1.0) {
            return Err(Error::param("spreading code entries must be +1 or -1"));
        }
        if !(self.bit_duration_s > 0.0) || !self.bit_duration_s.is_finite() {
            return Err(Error::param("bit duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::param(format!("roll-off {} outside [0, 1]", self.rolloff)));
        }
        let min_spc = min_samples_per_chip(self.rolloff);
        if self.samples_per_chip < min_spc {
            return Err(Error::param(format!(
                "{} samples per chip is below the Nyquist minimum {min_spc} for roll-off {}",
                self.samples_per_chip, self.rolloff
            )));
        }
        if self.span_chips < 4 || self.span_chips % 2 != 0 {
            return Err(Error::param("pulse span must be an even number of chips, at least 4"));
        }
        Ok(())
    }

    pub fn chip_duration_s(&self) -> f64 {
        self.bit_duration_s / self.spreading_length as f64
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.samples_per_chip as f64 / self.chip_duration_s()
    }

    /// Occupied bandwidth `1 / T_c`.
    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / self.chip_duration_s()
    }

    pub fn samples_per_bit(&self) -> usize {
        self.spreading_length * self.samples_per_chip
    }

    /// Samples trimmed from each edge of a synthesized waveform.
    pub fn edge_samples(&self) -> usize {
        self.span_chips / 2 * self.samples_per_chip
    }
}

fn min_samples_per_chip(rolloff: f64) -> usize {
    (2.0 * (1.0 + rolloff)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Leading and trailing samples that belong to pulse tails.
    pub edge_samples: usize,
}

impl Waveform {
    /// The steady-state window: bit periods only, pulse tails discarded.
    pub fn observation(&self) -> &[f64] {
        let end = self.samples.len().saturating_sub(self.edge_samples);
        &self.samples[self.edge_samples.min(end)..end]
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64
}

/// Continuous root-raised-cosine shape at `t` chips from the pulse centre,
/// unit value scaling (`h(0) = 1 - beta + 4 beta / pi`).
pub fn rrc_shape(t: f64, beta: f64) -> f64 {
    use std::f64::consts::PI;
    if t == 0.0 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && ((4.0 * beta * t).abs() - 1.0).abs() < 1e-12 {
        let arg = PI / (4.0 * beta);
        return beta / std::f64::consts::SQRT_2
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Root-raised-cosine chip pulse sampled at `samples_per_chip`, spanning
/// `span_chips` chips (`span * spc + 1` taps, symmetric about the centre).
///
/// Taps are scaled so the pulse energy, integrated with a sample period of
/// `T_c / spc` expressed in bit durations, equals `1 / L`.
pub fn rrc_pulse(
    rolloff: f64,
    span_chips: usize,
    samples_per_chip: usize,
    spreading_length: usize,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::param(format!("roll-off {rolloff} outside [0, 1]")));
    }
    if span_chips < 4 || samples_per_chip == 0 || spreading_length == 0 {
        return Err(Error::param("pulse needs span >= 4 chips and positive sampling"));
    }
    let half = (span_chips * samples_per_chip) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..=span_chips * samples_per_chip)
        .map(|k| rrc_shape((k as f64 - half) / samples_per_chip as f64, rolloff))
        .collect();
    let dt_bits = 1.0 / (samples_per_chip * spreading_length) as f64;
    let energy: f64 = taps.iter().map(|t| t * t).sum::<f64>() * dt_bits;
    let scale = (1.0 / spreading_length as f64 / energy).sqrt();
    taps.iter_mut().for_each(|t| *t *= scale);
    Ok(taps)
}

/// Feedback taps of primitive polynomials for Fibonacci LFSRs of degree 2..=12.
fn lfsr_taps(degree: u32) -> Option<&'static [u32]> {
    Some(match degree {
        2 => &[2, 1],
        3 => &[3, 2],
        4 => &[4, 3],
        5 => &[5, 3],
        6 => &[6, 5],
        7 => &[7, 6],
        8 => &[8, 6, 5, 4],
        9 => &[9, 5],
        10 => &[10, 7],
        11 => &[11, 9],
        12 => &[12, 6, 4, 1],
        _ => return None,
    })
}

/// One period of the maximal-length sequence of the given degree, as ±1.
pub fn m_sequence(degree: u32) -> Option<Vec<f64>> {
    let taps = lfsr_taps(degree)?;
    let len = (1usize << degree) - 1;
    let mut state: u32 = (1 << degree) - 1;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let bit = state & 1;
        out.push(if bit == 1 { -1.0 } else { 1.0 });
        let feedback = taps.iter().fold(0, |acc, &t| acc ^ ((state >> (degree - t)) & 1));
        state = (state >> 1) | (feedback << (degree - 1));
    }
    Some(out)
}

/// Default spreading code: an m-sequence when `length = 2^k - 1` (k <= 12),
/// otherwise a random bipolar code drawn from `seed`.
pub fn spreading_code(length: usize, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::param("spreading length must be positive"));
    }
    if length == 1 {
        return Ok(vec![1.0]);
    }
    if (length + 1).is_power_of_two() {
        if let Some(seq) = m_sequence((length + 1).trailing_zeros()) {
            return Ok(seq);
        }
    }
    let mut rng = rng::stream(seed, &[length as u64]);
    Ok((0..length).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
}

pub fn random_bits<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Spreads and pulse-shapes `bits` (each ±1) at the given amplitude `sqrt(P)`.
///
/// The output holds `bits.len() * L * spc` steady-state samples plus
/// `span/2` chips of pulse tail on each side.
pub fn synthesize(params: &DsssParams, bits: &[f64], amplitude: f64) -> Result<Waveform> {
    params.validate()?;
    if bits.is_empty() {
        return Err(Error::param("at least one bit is required"));
    }
    let taps = rrc_pulse(params.rolloff, params.span_chips, params.samples_per_chip, params.spreading_length)?;
    Ok(synthesize_with_taps(params, &taps, bits, amplitude))
}

pub(crate) fn synthesize_with_taps(
    params: &DsssParams,
    taps: &[f64],
    bits: &[f64],
    amplitude: f64,
) -> Waveform {
    let spc = params.samples_per_chip;
    let chips = bits.len() * params.spreading_length;
    let mut samples = vec![0.0; chips * spc + params.span_chips * spc];
    for (m, &b) in bits.iter().enumerate() {
        for (l, &c) in params.code.iter().enumerate() {
            let weight = amplitude * b * c;
            let start = (m * params.spreading_length + l) * spc;
            for (out, &t) in samples[start..start + taps.len()].iter_mut().zip(taps) {
                *out += weight * t;
            }
        }
    }
    Waveform {
        samples,
        sample_rate_hz: params.sample_rate_hz(),
        edge_samples: params.edge_samples(),
    }
}

/// Per-sample variance of real white noise with one-sided density `n0`
/// sampled at `sample_rate_hz` (two-sided PSD `n0 / 2`).
pub fn noise_variance(n0_w_per_hz: f64, sample_rate_hz: f64) -> f64 {
    n0_w_per_hz / 2.0 * sample_rate_hz
}

/// Adds white Gaussian noise with one-sided density `n0` (so PSD `n0/2`).
pub fn add_awgn(waveform: &Waveform, n0_w_per_hz: f64, seed: u64) -> Result<Waveform> {
    let mut rng = rng::stream(seed, &[]);
    add_awgn_with(waveform, n0_w_per_hz, &mut rng)
}

pub fn add_awgn_with<R: Rng>(waveform: &Waveform, n0_w_per_hz: f64, rng: &mut R) -> Result<Waveform> {
    if !(n0_w_per_hz >= 0.0) {
        return Err(Error::param("noise density must be non-negative"));
    }
    let mut out = waveform.clone();
    if n0_w_per_hz == 0.0 {
        return Ok(out);
    }
    add_noise_in_place(&mut out.samples, noise_variance(n0_w_per_hz, waveform.sample_rate_hz).sqrt(), rng);
    Ok(out)
}

pub(crate) fn add_noise_in_place<R: Rng>(samples: &mut [f64], sigma: f64, rng: &mut R) {
    for s in samples.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *s += sigma * z;
    }
}
