//! Calibration tables: DEP on a (SNR dB x observation bits) grid, a
//! monotone fit, interpolated lookup and inversion.
//!
//! Lookups interpolate bilinearly in (SNR dB, log2 bits). Outside the
//! observation grid the table is extended by a constant SNR shift per
//! doubling of the observation, estimated from the two outermost columns;
//! such values carry an `extrapolated` flag.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::isotonic::fit_grid_non_increasing;
use super::threshold::{dep_ci_halfwidth, optimize_threshold};
use super::{run_trials, DetectorKind, Fingerprint, WaveformSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::units::{db_to_linear, linear_to_db};

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepPoint {
    pub snr_w_db: f64,
    pub obs_bits: u64,
    pub dep: f64,
    pub threshold: f64,
    pub p_md: f64,
    pub p_fa: f64,
    pub ci_halfwidth: f64,
}

/// A DEP value read from a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepEstimate {
    pub dep: f64,
    pub extrapolated: bool,
}

/// Largest Willie SNR that keeps the fitted DEP at or above a requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrBound {
    pub snr_w: f64,
    pub snr_w_db: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub tool_version: String,
    pub created_unix_s: u64,
    pub detector: DetectorKind,
    pub fingerprint: Fingerprint,
    pub fingerprint_hash: String,
    pub snr_grid_db: Vec<f64>,
    pub obs_grid_bits: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Raw Monte-Carlo points, `raw[obs_index][snr_index]`. Empty for
    /// synthetic tables.
    #[serde(default)]
    pub raw: Vec<Vec<DepPoint>>,
    /// Fitted DEP, non-increasing along both axes, `fitted[obs][snr]`.
    pub fitted: Vec<Vec<f64>>,
    /// SNR shift (dB) per doubling of the observation used beyond the largest
    /// and below the smallest observation column.
    pub extrapolation_db_per_doubling_above: f64,
    pub extrapolation_db_per_doubling_below: f64,
    /// Raw cells whose monotonicity violation exceeds twice the Monte-Carlo CI.
    #[serde(default)]
    pub flagged_cells: Vec<[usize; 2]>,
}

fn check_grids(snr_grid_db: &[f64], obs_grid_bits: &[u64]) -> Result<()> {
    if snr_grid_db.is_empty() || obs_grid_bits.is_empty() {
        return Err(Error::param("calibration grids must be nonempty"));
    }
    if snr_grid_db.iter().any(|s| !s.is_finite()) || snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("SNR grid must be finite and strictly increasing"));
    }
    if obs_grid_bits.windows(2).any(|w| w[0] >= w[1]) || obs_grid_bits[0] == 0 {
        return Err(Error::param("observation grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Monte-Carlo calibration over the full grid, followed by the monotone fit.
pub fn calibrate(
    kind: DetectorKind,
    spec: &WaveformSpec,
    snr_grid_db: &[f64],
    obs_grid_bits: &[u64],
    trials: usize,
    seed: u64,
) -> Result<CalibrationTable> {
    check_grids(snr_grid_db, obs_grid_bits)?;
    let cells: Vec<(usize, usize)> = (0..obs_grid_bits.len())
        .flat_map(|o| (0..snr_grid_db.len()).map(move |s| (o, s)))
        .collect();
    let points = cells
        .par_iter()
        .map(|&(o, s)| {
            let snr_db = snr_grid_db[s];
            let bits = obs_grid_bits[o];
            let cell_seed = derive_seed(seed, &[bits, s as u64]);
            let stats = run_trials(kind, spec, db_to_linear(snr_db), bits as usize, trials, cell_seed)?;
            let choice = optimize_threshold(&stats);
            Ok(DepPoint {
                snr_w_db: snr_db,
                obs_bits: bits,
                dep: choice.dep,
                threshold: choice.threshold,
                p_md: choice.p_md,
                p_fa: choice.p_fa,
                ci_halfwidth: dep_ci_halfwidth(&choice, stats.h0.len(), stats.h1.len()),
            })
        })
        .collect::<Result<Vec<DepPoint>>>()?;
    let raw: Vec<Vec<DepPoint>> = points.chunks(snr_grid_db.len()).map(|c| c.to_vec()).collect();

    let fingerprint = spec.fingerprint(kind);
    let mut table = CalibrationTable {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        detector: kind,
        fingerprint_hash: fingerprint.hash(),
        fingerprint,
        snr_grid_db: snr_grid_db.to_vec(),
        obs_grid_bits: obs_grid_bits.to_vec(),
        trials,
        seed,
        fitted: Vec::new(),
        raw,
        extrapolation_db_per_doubling_above: 0.0,
        extrapolation_db_per_doubling_below: 0.0,
        flagged_cells: Vec::new(),
    };
    table.flagged_cells = table.monotonicity_violations(2.0);
    for [o, s] in &table.flagged_cells {
        log::warn!(
            "{kind} calibration: raw DEP at {} dB / {} bits breaks monotonicity beyond 2x CI",
            snr_grid_db[*s],
            obs_grid_bits[*o]
        );
    }
    let raw_dep: Vec<Vec<f64>> = table.raw.iter().map(|r| r.iter().map(|p| p.dep).collect()).collect();
    table.set_fitted(fit_grid_non_increasing(&raw_dep));
    Ok(table)
}

impl CalibrationTable {
    /// Table built from a closed-form DEP model instead of simulation.
    pub fn from_model(
        fingerprint: Fingerprint,
        snr_grid_db: &[f64],
        obs_grid_bits: &[u64],
        dep: impl Fn(f64, u64) -> f64,
    ) -> Result<Self> {
        check_grids(snr_grid_db, obs_grid_bits)?;
        let values: Vec<Vec<f64>> = obs_grid_bits
            .iter()
            .map(|&b| snr_grid_db.iter().map(|&s| dep(db_to_linear(s), b).clamp(0.0, 1.0)).collect())
            .collect();
        let mut table = CalibrationTable {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: 0,
            detector: fingerprint.detector,
            fingerprint_hash: fingerprint.hash(),
            fingerprint,
            snr_grid_db: snr_grid_db.to_vec(),
            obs_grid_bits: obs_grid_bits.to_vec(),
            trials: 0,
            seed: 0,
            raw: Vec::new(),
            fitted: Vec::new(),
            extrapolation_db_per_doubling_above: 0.0,
            extrapolation_db_per_doubling_below: 0.0,
            flagged_cells: Vec::new(),
        };
        table.set_fitted(fit_grid_non_increasing(&values));
        Ok(table)
    }

    fn set_fitted(&mut self, fitted: Vec<Vec<f64>>) {
        self.fitted = fitted;
        let k = self.obs_grid_bits.len();
        if k >= 2 {
            self.extrapolation_db_per_doubling_above = self.column_shift(k - 2, k - 1);
            self.extrapolation_db_per_doubling_below = self.column_shift(0, 1);
        }
    }

    /// Median SNR shift (dB per doubling) between two columns over the DEP
    /// levels both columns bracket.
    fn column_shift(&self, lower: usize, upper: usize) -> f64 {
        let doublings =
            (self.obs_grid_bits[upper] as f64).log2() - (self.obs_grid_bits[lower] as f64).log2();
        let mut shifts: Vec<f64> = (1..20)
            .map(|i| i as f64 * 0.05)
            .filter_map(|level| {
                let (a, _) = self.invert_column(lower, level).ok().filter(|(_, clamped)| !clamped)?;
                let (b, _) = self.invert_column(upper, level).ok().filter(|(_, clamped)| !clamped)?;
                Some((a - b) / doublings)
            })
            .collect();
        if shifts.is_empty() {
            return 0.0;
        }
        shifts.sort_by(f64::total_cmp);
        shifts[shifts.len() / 2].max(0.0)
    }

    /// Cells where the raw DEP rises with SNR or with observation length by
    /// more than `ci_multiple` times the larger CI of the two cells compared.
    pub fn monotonicity_violations(&self, ci_multiple: f64) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for (o, row) in self.raw.iter().enumerate() {
            for (s, p) in row.iter().enumerate() {
                let mut violated = false;
                if s > 0 {
                    let q = &row[s - 1];
                    violated |= p.dep - q.dep > ci_multiple * p.ci_halfwidth.max(q.ci_halfwidth);
                }
                if o > 0 {
                    let q = &self.raw[o - 1][s];
                    violated |= p.dep - q.dep > ci_multiple * p.ci_halfwidth.max(q.ci_halfwidth);
                }
                if violated {
                    out.push([o, s]);
                }
            }
        }
        out
    }

    pub fn max_ci_halfwidth(&self) -> f64 {
        self.raw.iter().flatten().map(|p| p.ci_halfwidth).fold(0.0, f64::max)
    }

    pub fn cell_count(&self) -> usize {
        self.snr_grid_db.len() * self.obs_grid_bits.len()
    }

    /// Piecewise-linear fitted DEP along one observation column, SNR clamped
    /// to the grid.
    fn column_dep(&self, column: usize, snr_db: f64) -> f64 {
        let grid = &self.snr_grid_db;
        let values = &self.fitted[column];
        if grid.len() == 1 || snr_db <= grid[0] {
            return values[0];
        }
        let last = grid.len() - 1;
        if snr_db >= grid[last] {
            return values[last];
        }
        let i = grid.partition_point(|&g| g <= snr_db) - 1;
        let t = (snr_db - grid[i]) / (grid[i + 1] - grid[i]);
        values[i] + t * (values[i + 1] - values[i])
    }

    /// Largest SNR (dB) on one column with fitted DEP >= `dep_reqd`.
    fn invert_column(&self, column: usize, dep_reqd: f64) -> Result<(f64, bool)> {
        self.bisect(|s| self.column_dep(column, s), dep_reqd)
    }

    /// Where `obs_bits` falls relative to the observation grid.
    fn locate_obs(&self, obs_bits: f64) -> ObsPosition {
        let grid = &self.obs_grid_bits;
        let x = obs_bits.log2();
        let first = (grid[0] as f64).log2();
        let last_idx = grid.len() - 1;
        let last = (grid[last_idx] as f64).log2();
        if x < first {
            ObsPosition::Below { doublings: first - x }
        } else if x > last {
            ObsPosition::Above { doublings: x - last }
        } else if x == last {
            ObsPosition::Between { column: last_idx, weight: 0.0 }
        } else {
            let i = grid.partition_point(|&g| (g as f64).log2() <= x).min(last_idx) - 1;
            let x0 = (grid[i] as f64).log2();
            let x1 = (grid[i + 1] as f64).log2();
            ObsPosition::Between { column: i, weight: (x - x0) / (x1 - x0) }
        }
    }

    /// Fitted DEP at Willie SNR `snr_w` (linear) and `obs_bits` observed bits.
    pub fn dep_lookup(&self, snr_w: f64, obs_bits: f64) -> DepEstimate {
        let snr_db = if snr_w > 0.0 { linear_to_db(snr_w) } else { f64::NEG_INFINITY };
        self.dep_lookup_db(snr_db, obs_bits)
    }

    pub fn dep_lookup_db(&self, snr_db: f64, obs_bits: f64) -> DepEstimate {
        let last = self.obs_grid_bits.len() - 1;
        let (dep, extrapolated) = match self.locate_obs(obs_bits) {
            ObsPosition::Between { column, weight } => {
                let a = self.column_dep(column, snr_db);
                let dep = if weight > 0.0 {
                    a + weight * (self.column_dep(column + 1, snr_db) - a)
                } else {
                    a
                };
                (dep, false)
            }
            ObsPosition::Above { doublings } => (
                self.column_dep(last, snr_db + doublings * self.extrapolation_db_per_doubling_above),
                true,
            ),
            ObsPosition::Below { doublings } => (
                self.column_dep(0, snr_db - doublings * self.extrapolation_db_per_doubling_below),
                true,
            ),
        };
        DepEstimate { dep: dep.clamp(0.0, 1.0), extrapolated }
    }

    /// Largest Willie SNR whose fitted DEP is still at least `dep_reqd`.
    pub fn invert_dep(&self, dep_reqd: f64, obs_bits: f64) -> Result<SnrBound> {
        if !(dep_reqd > 0.0 && dep_reqd < 1.0) {
            return Err(Error::param(format!("DEP requirement {dep_reqd} must lie in (0, 1)")));
        }
        let last = self.obs_grid_bits.len() - 1;
        let (snr_w_db, extrapolated) = match self.locate_obs(obs_bits) {
            ObsPosition::Between { column, weight } if weight == 0.0 => self.invert_column(column, dep_reqd)?,
            ObsPosition::Between { column, weight } => {
                let f = |s: f64| {
                    let a = self.column_dep(column, s);
                    a + weight * (self.column_dep(column + 1, s) - a)
                };
                self.bisect(f, dep_reqd)?
            }
            ObsPosition::Above { doublings } => {
                let (s, _) = self.invert_column(last, dep_reqd)?;
                (s - doublings * self.extrapolation_db_per_doubling_above, true)
            }
            ObsPosition::Below { doublings } => {
                let (s, _) = self.invert_column(0, dep_reqd)?;
                (s + doublings * self.extrapolation_db_per_doubling_below, true)
            }
        };
        Ok(SnrBound { snr_w: db_to_linear(snr_w_db), snr_w_db, extrapolated })
    }

    /// Largest SNR (dB) in the grid range where `f` stays at or above
    /// `dep_reqd`. A requirement still met at the top of the range yields the
    /// top itself, flagged `true`: a conservative ceiling.
    fn bisect(&self, f: impl Fn(f64) -> f64, dep_reqd: f64) -> Result<(f64, bool)> {
        let grid = &self.snr_grid_db;
        let (mut lo, mut hi) = (grid[0], grid[grid.len() - 1]);
        if f(lo) < dep_reqd {
            return Err(Error::Infeasible(format!(
                "requirement exceeds detector-limited covertness: DEP {dep_reqd} is above the fitted {:.4} at the lowest calibrated SNR {lo} dB",
                f(lo)
            )));
        }
        if f(hi) >= dep_reqd {
            log::debug!("DEP {dep_reqd} still met at {hi} dB; ceiling clamped to the calibrated range");
            return Ok((hi, true));
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) >= dep_reqd {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, false))
    }

    /// Errors unless the table was calibrated for `expected`.
    pub fn check_fingerprint(&self, expected: &Fingerprint) -> Result<()> {
        if &self.fingerprint != expected || self.fingerprint_hash != expected.hash() {
            return Err(Error::FingerprintMismatch {
                expected: expected.hash(),
                found: self.fingerprint_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingCalibration(format!(
                    "{} not found; run `calibrate` first",
                    path.display()
                ))
            } else {
                Error::Io(e)
            }
        })?;
        let table: CalibrationTable = serde_json::from_str(&text)?;
        check_grids(&table.snr_grid_db, &table.obs_grid_bits)?;
        if table.fitted.len() != table.obs_grid_bits.len()
            || table.fitted.iter().any(|r| r.len() != table.snr_grid_db.len())
        {
            return Err(Error::Config(format!("{}: fitted grid has the wrong shape", path.display())));
        }
        Ok(table)
    }
}

enum ObsPosition {
    Between { column: usize, weight: f64 },
    Above { doublings: f64 },
    Below { doublings: f64 },
}
