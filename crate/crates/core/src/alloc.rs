//! Closed-form single-hop resource allocation.
//!
//! Two objectives are supported. Covert-max spends the whole bandwidth on
//! spreading at the required rate, which maximizes the detection SNR gain
//! `theta = snr_rx / snr_willie`. Latency-min transmits at the highest power
//! Willie's SNR ceiling allows and picks the smallest spreading gain that
//! still meets Bob's SNR requirement.

use serde::{Deserialize, Serialize};

use crate::detector::{CalibrationTable, DepEstimate};
use crate::error::{Error, Result};
use crate::units::q_function;

const BISECTION_STEPS: usize = 200;

/// Relative slack used when re-checking closed-form results.
pub const VERIFY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    CovertMax,
    LatencyMin,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::CovertMax => "covert_max",
            Objective::LatencyMin => "latency_min",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covert_max" | "covert-max" => Ok(Objective::CovertMax),
            "latency_min" | "latency-min" => Ok(Objective::LatencyMin),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected covert_max or latency_min)"
            ))),
        }
    }
}

/// Per-link requirements and budgets, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub d_reqd_bps: f64,
    pub snr_reqd: f64,
    pub dep_reqd: f64,
    pub omega_max_hz: f64,
    pub p_max_w: f64,
    pub n0_w_per_hz: f64,
    pub m_bits: f64,
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_reqd_bps", self.d_reqd_bps),
            ("snr_reqd", self.snr_reqd),
            ("omega_max_hz", self.omega_max_hz),
            ("p_max_w", self.p_max_w),
            ("n0_w_per_hz", self.n0_w_per_hz),
            ("m_bits", self.m_bits),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(self.dep_reqd > 0.0 && self.dep_reqd < 1.0) {
            return Err(Error::param(format!("dep_reqd must lie in (0, 1), got {}", self.dep_reqd)));
        }
        Ok(())
    }

    pub fn ber_reqd(&self) -> f64 {
        ber(self.snr_reqd)
    }
}

/// Channel power gains from the transmitter to its receiver and to Willie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    pub rx: f64,
    pub willie: f64,
}

impl LinkGains {
    pub fn new(rx: f64, willie: f64) -> Self {
        Self { rx, willie }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rx > 0.0 && self.rx.is_finite() && self.willie > 0.0 && self.willie.is_finite()) {
            return Err(Error::Infeasible(format!(
                "link gains must be positive and finite (rx {}, willie {})",
                self.rx, self.willie
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopAllocation {
    pub power_w: f64,
    pub bandwidth_hz: f64,
    pub spreading_gain: f64,
    pub data_rate_bps: f64,
    pub latency_s: f64,
    pub snr_rx: f64,
    pub snr_willie: f64,
    pub theta: f64,
    /// Willie's SNR ceiling the allocation was built against (latency-min).
    pub snr_w_max: Option<f64>,
    pub dep: Option<DepEstimate>,
}

impl HopAllocation {
    /// Assembles an allocation from `(P, Omega, eta)`; every other field is
    /// derived.
    pub fn from_primary(
        power_w: f64,
        bandwidth_hz: f64,
        spreading_gain: f64,
        gains: LinkGains,
        constraints: &Constraints,
    ) -> Self {
        let (snr_rx, snr_willie) =
            snr_pair(power_w, bandwidth_hz, spreading_gain, gains.rx, gains.willie, constraints.n0_w_per_hz);
        let data_rate_bps = bandwidth_hz / spreading_gain;
        Self {
            power_w,
            bandwidth_hz,
            spreading_gain,
            data_rate_bps,
            latency_s: constraints.m_bits / data_rate_bps,
            snr_rx,
            snr_willie,
            theta: snr_rx / snr_willie,
            snr_w_max: None,
            dep: None,
        }
    }

    /// Fills the DEP estimate from a calibration table at `obs_bits`.
    pub fn with_dep(mut self, table: &CalibrationTable, obs_bits: f64) -> Self {
        self.dep = Some(table.dep_lookup(self.snr_willie, obs_bits));
        self
    }
}

/// Bob's despread SNR and Willie's raw SNR for one hop.
pub fn snr_pair(power_w: f64, bandwidth_hz: f64, eta: f64, gain_rx: f64, gain_willie: f64, n0: f64) -> (f64, f64) {
    let noise = n0 * bandwidth_hz;
    (power_w * gain_rx * eta / noise, power_w * gain_willie / noise)
}

/// Uncoded BPSK bit error rate `Q(sqrt(2 snr))`.
pub fn ber(snr: f64) -> f64 {
    q_function((2.0 * snr.max(0.0)).sqrt())
}

/// Inverse of [`ber`] by bisection.
pub fn snr_for_ber(target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(Error::param(format!("BER target must lie in (0, 0.5), got {target}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while ber(hi) > target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::param(format!("BER target {target} is below the representable range")));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ber(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

pub fn allocate_covert_max(gains: LinkGains, c: &Constraints) -> Result<HopAllocation> {
    c.validate()?;
    gains.validate()?;
    let eta = c.omega_max_hz / c.d_reqd_bps;
    if eta < 1.0 {
        return Err(Error::Infeasible(format!(
            "required rate {} bps exceeds the bandwidth {} Hz",
            c.d_reqd_bps, c.omega_max_hz
        )));
    }
    let power = (c.snr_reqd / gains.rx) * (c.n0_w_per_hz * c.omega_max_hz / eta);
    if power > c.p_max_w {
        return Err(Error::Infeasible(format!(
            "required power {power:.3e} W exceeds the budget {:.3e} W",
            c.p_max_w
        )));
    }
    let mut alloc = HopAllocation::from_primary(power, c.omega_max_hz, eta, gains, c);
    alloc.data_rate_bps = c.d_reqd_bps;
    alloc.latency_s = c.m_bits / c.d_reqd_bps;
    Ok(alloc)
}

/// Latency-min allocation under Willie's SNR ceiling `snr_w_max`.
pub fn allocate_latency_min(gains: LinkGains, c: &Constraints, snr_w_max: f64) -> Result<HopAllocation> {
    c.validate()?;
    gains.validate()?;
    if !(snr_w_max > 0.0) || snr_w_max.is_nan() {
        return Err(Error::param(format!("snr_w_max must be positive, got {snr_w_max}")));
    }
    let omega = c.omega_max_hz;
    let noise = c.n0_w_per_hz * omega;
    let power = c.p_max_w.min(snr_w_max * noise / gains.willie);
    let snr_w_eff = power * gains.willie / noise;
    let latency = c.m_bits * (c.snr_reqd / snr_w_eff) * (gains.willie / gains.rx) / omega;
    let eta = omega * latency / c.m_bits;

    let mut alloc = if eta < 1.0 {
        // full-rate transmission with just enough power for Bob
        let reduced = c.snr_reqd * noise / gains.rx;
        let mut a = HopAllocation::from_primary(reduced, omega, 1.0, gains, c);
        a.data_rate_bps = omega;
        a.latency_s = c.m_bits / omega;
        a
    } else {
        let mut a = HopAllocation::from_primary(power, omega, eta, gains, c);
        a.latency_s = latency;
        a
    };
    alloc.snr_w_max = Some(snr_w_max);
    Ok(alloc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub objective: Objective,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= VERIFY_RTOL * a.abs().max(b.abs())
}

fn at_most(value: f64, limit: f64) -> bool {
    value <= limit * (1.0 + VERIFY_RTOL)
}

/// Re-derives every quantity from `(P, Omega, eta)` and checks the
/// allocation against its objective's constraints.
pub fn verify_allocation(
    alloc: &HopAllocation,
    c: &Constraints,
    gains: LinkGains,
    objective: Objective,
) -> VerificationReport {
    let (snr_rx, snr_willie) = snr_pair(
        alloc.power_w,
        alloc.bandwidth_hz,
        alloc.spreading_gain,
        gains.rx,
        gains.willie,
        c.n0_w_per_hz,
    );
    let rate = alloc.bandwidth_hz / alloc.spreading_gain;
    let ber_reqd = c.ber_reqd();
    let ber_rx = ber(snr_rx);
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, value: f64, limit: f64| {
        checks.push(Check { name: name.to_string(), passed, value, limit });
    };

    push("power_budget", at_most(alloc.power_w, c.p_max_w), alloc.power_w, c.p_max_w);
    push("bandwidth_budget", at_most(alloc.bandwidth_hz, c.omega_max_hz), alloc.bandwidth_hz, c.omega_max_hz);
    push("spreading_gain_at_least_one", alloc.spreading_gain >= 1.0, alloc.spreading_gain, 1.0);
    push("ber", at_most(ber_rx, ber_reqd), ber_rx, ber_reqd);
    push("snr_rx_consistent", rel_close(alloc.snr_rx, snr_rx), alloc.snr_rx, snr_rx);
    push("snr_willie_consistent", rel_close(alloc.snr_willie, snr_willie), alloc.snr_willie, snr_willie);
    push("theta_consistent", rel_close(alloc.theta, snr_rx / snr_willie), alloc.theta, snr_rx / snr_willie);
    push(
        "latency_consistent",
        rel_close(alloc.latency_s, c.m_bits / alloc.data_rate_bps),
        alloc.latency_s,
        c.m_bits / alloc.data_rate_bps,
    );
    match objective {
        Objective::CovertMax => {
            push("ber_equality", rel_close(ber_rx, ber_reqd), ber_rx, ber_reqd);
            push(
                "data_rate",
                rel_close(alloc.data_rate_bps, rate) && alloc.data_rate_bps >= c.d_reqd_bps * (1.0 - VERIFY_RTOL),
                rate,
                c.d_reqd_bps,
            );
        }
        Objective::LatencyMin => {
            push("data_rate_consistent", rel_close(alloc.data_rate_bps, rate), alloc.data_rate_bps, rate);
            let ceiling = alloc.snr_w_max.unwrap_or(f64::NAN);
            push("snr_willie_ceiling", at_most(snr_willie, ceiling), snr_willie, ceiling);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    VerificationReport { objective, passed, checks }
}
