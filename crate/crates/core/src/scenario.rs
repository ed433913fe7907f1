//! Scenario configuration, routing runs and parameter sweeps.
//!
//! Configs are JSON documents whose keys carry their units (`omega_max_hz`,
//! `n0_dbm_per_hz`, `m_bits`). Decibel quantities are converted to linear
//! SI values once, in [`ScenarioConfig::constraints`].

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{snr_for_ber, Constraints, Objective};
use crate::detector::{CalibrationTable, DetectorKind, WaveformSpec, DEFAULT_TRIALS};
use crate::error::{Error, Result};
use crate::rng;
use crate::routing::{build_graph, route_metrics, RouteMetrics};
use crate::topology::{grid_topology, import_gains, random_topology, PathLossModel, Topology, TopologyRecord};
use crate::units::{db_to_linear, dbm_to_watts};

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "swept_param",
    "swept_value",
    "detector",
    "e2e_latency_s",
    "e2e_dep",
    "dep_extrapolated",
    "hop_count",
    "bottleneck_theta_db",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossSpec {
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_carrier")]
    pub carrier_frequency_hz: f64,
    /// Gain at 1 m; free-space at the carrier when absent.
    #[serde(default)]
    pub reference_gain_db: Option<f64>,
}

fn default_exponent() -> f64 {
    3.0
}
fn default_carrier() -> f64 {
    900e6
}

impl Default for PathLossSpec {
    fn default() -> Self {
        Self { exponent: default_exponent(), carrier_frequency_hz: default_carrier(), reference_gain_db: None }
    }
}

impl PathLossSpec {
    pub fn model(&self) -> PathLossModel {
        let mut m = PathLossModel::free_space_reference(self.carrier_frequency_hz, self.exponent);
        if let Some(g) = self.reference_gain_db {
            m.reference_gain_db = g;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Grid {
        nx: usize,
        ny: usize,
        spacing_m: f64,
        willie_position_m: [f64; 3],
        #[serde(default)]
        path_loss: PathLossSpec,
        #[serde(default)]
        max_link_distance_m: Option<f64>,
        #[serde(default)]
        alice: Option<usize>,
        #[serde(default)]
        bob: Option<usize>,
    },
    Random {
        nodes: usize,
        side_m: f64,
        #[serde(default)]
        path_loss: PathLossSpec,
        #[serde(default)]
        max_link_distance_m: Option<f64>,
    },
    /// A topology JSON (as written by `gen-topology`) with optional gains CSV.
    Import {
        topology_json: PathBuf,
        #[serde(default)]
        gains_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSpec {
    #[serde(default = "default_d_reqd")]
    pub d_reqd_bps: f64,
    /// Give either `snr_reqd_db` or `ber_reqd`; 10 dB when neither is set.
    #[serde(default)]
    pub snr_reqd_db: Option<f64>,
    #[serde(default)]
    pub ber_reqd: Option<f64>,
    #[serde(default = "default_dep_reqd")]
    pub dep_reqd: f64,
    #[serde(default = "default_omega")]
    pub omega_max_hz: f64,
    #[serde(default = "default_p_max")]
    pub p_max_dbm: f64,
    #[serde(default = "default_n0")]
    pub n0_dbm_per_hz: f64,
    #[serde(default = "default_m_bits")]
    pub m_bits: f64,
}

fn default_d_reqd() -> f64 {
    2.5e6
}
fn default_dep_reqd() -> f64 {
    0.85
}
fn default_omega() -> f64 {
    10e6
}
fn default_p_max() -> f64 {
    30.0
}
fn default_n0() -> f64 {
    -113.0
}
fn default_m_bits() -> f64 {
    1e8
}

impl Default for ConstraintsSpec {
    fn default() -> Self {
        Self {
            d_reqd_bps: default_d_reqd(),
            snr_reqd_db: None,
            ber_reqd: None,
            dep_reqd: default_dep_reqd(),
            omega_max_hz: default_omega(),
            p_max_dbm: default_p_max(),
            n0_dbm_per_hz: default_n0(),
            m_bits: default_m_bits(),
        }
    }
}

impl ConstraintsSpec {
    pub fn to_constraints(&self) -> Result<Constraints> {
        let snr_reqd = match (self.snr_reqd_db, self.ber_reqd) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either snr_reqd_db or ber_reqd, not both".into()));
            }
            (Some(db), None) => db_to_linear(db),
            (None, Some(ber)) => snr_for_ber(ber).map_err(|e| Error::Config(e.to_string()))?,
            (None, None) => db_to_linear(10.0),
        };
        let c = Constraints {
            d_reqd_bps: self.d_reqd_bps,
            snr_reqd,
            dep_reqd: self.dep_reqd,
            omega_max_hz: self.omega_max_hz,
            p_max_w: dbm_to_watts(self.p_max_dbm),
            n0_w_per_hz: dbm_to_watts(self.n0_dbm_per_hz),
            m_bits: self.m_bits,
        };
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "default_snr_grid")]
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_obs_grid")]
    pub obs_grid_bits: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Where tables are written and looked up; the output directory when
    /// absent.
    #[serde(default)]
    pub table_dir: Option<PathBuf>,
}

pub fn default_snr_grid() -> Vec<f64> {
    (0..13).map(|i| -25.0 + 2.5 * i as f64).collect()
}
pub fn default_obs_grid() -> Vec<u64> {
    vec![16, 64, 256, 1024]
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            snr_grid_db: default_snr_grid(),
            obs_grid_bits: default_obs_grid(),
            trials: default_trials(),
            table_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DepReqd,
    MBits,
    DReqdBps,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::DepReqd => "dep_reqd",
            SweepParam::MBits => "m_bits",
            SweepParam::DReqdBps => "d_reqd_bps",
        }
    }

    fn apply(self, c: &mut Constraints, value: f64) {
        match self {
            SweepParam::DepReqd => c.dep_reqd = value,
            SweepParam::MBits => c.m_bits = value,
            SweepParam::DReqdBps => c.d_reqd_bps = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Detectors to sweep; the scenario's detector when empty.
    #[serde(default)]
    pub detectors: Vec<DetectorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologySpec,
    #[serde(default)]
    pub constraints: ConstraintsSpec,
    #[serde(default = "default_mode")]
    pub mode: Objective,
    #[serde(default = "default_detector")]
    pub detector: DetectorKind,
    #[serde(default)]
    pub waveform: WaveformSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> Objective {
    Objective::CovertMax
}
fn default_detector() -> DetectorKind {
    DetectorKind::Cycle
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESETS: [&str; 4] = ["grid-covert", "grid-latency", "grid-dep-sweep", "grid-m-sweep"];

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TopologySpec::Import { topology_json, gains_csv } = &mut self.topology {
            fix(topology_json);
            if let Some(g) = gains_csv {
                fix(g);
            }
        }
        if let Some(d) = &mut self.output_dir {
            fix(d);
        }
        if let Some(d) = &mut self.calibration.table_dir {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constraints()?;
        self.waveform.params().map_err(|e| Error::Config(e.to_string()))?;
        let cal = &self.calibration;
        if cal.snr_grid_db.is_empty() || cal.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("calibration.snr_grid_db must be nonempty and increasing".into()));
        }
        if cal.obs_grid_bits.is_empty() || cal.obs_grid_bits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("calibration.obs_grid_bits must be nonempty and increasing".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("sweep values must be strictly increasing".into()));
            }
        }
        if let TopologySpec::Import { topology_json, gains_csv } = &self.topology {
            for p in std::iter::once(topology_json).chain(gains_csv) {
                if !p.exists() {
                    return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn constraints(&self) -> Result<Constraints> {
        self.constraints.to_constraints()
    }

    pub fn topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Grid { nx, ny, spacing_m, willie_position_m, path_loss, max_link_distance_m, alice, bob } => {
                let mut topo = grid_topology(*nx, *ny, *spacing_m, *willie_position_m)?
                    .with_path_loss(path_loss.model())?
                    .with_max_link_distance(*max_link_distance_m);
                let a = alice.map_or(topo.alice(), crate::topology::NodeId);
                let b = bob.map_or(topo.bob(), crate::topology::NodeId);
                topo.set_endpoints(a, b)?;
                Ok(topo)
            }
            TopologySpec::Random { nodes, side_m, path_loss, max_link_distance_m } => {
                let mut r = rng::stream(self.seed, &[0x746f_706f]);
                Ok(random_topology(&mut r, *nodes, *side_m, path_loss.model())?
                    .with_max_link_distance(*max_link_distance_m))
            }
            TopologySpec::Import { topology_json, gains_csv } => {
                let text = std::fs::read_to_string(topology_json)?;
                let record: TopologyRecord = serde_json::from_str(&text)?;
                let gains = gains_csv.as_ref().map(import_gains).transpose()?;
                Topology::from_record(&record, gains)
            }
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn table_dir(&self) -> PathBuf {
        self.calibration.table_dir.clone().unwrap_or_else(|| self.output_dir())
    }

    /// Detectors this scenario needs tables for.
    pub fn detectors(&self) -> Vec<DetectorKind> {
        match &self.sweep {
            Some(s) if !s.detectors.is_empty() => s.detectors.clone(),
            _ => vec![self.detector],
        }
    }

    pub fn table_path(&self, kind: DetectorKind) -> PathBuf {
        self.table_dir().join(self.waveform.fingerprint(kind).file_name())
    }

    /// Loads the table for `kind` and checks it matches the waveform.
    pub fn load_table(&self, kind: DetectorKind) -> Result<CalibrationTable> {
        let table = CalibrationTable::load(self.table_path(kind))?;
        table.check_fingerprint(&self.waveform.fingerprint(kind))?;
        Ok(table)
    }

    /// Built-in scenarios on a 6x6 grid spanning 250 m with Willie between
    /// two interior nodes.
    pub fn preset(name: &str) -> Result<Self> {
        let grid = TopologySpec::Grid {
            nx: 6,
            ny: 6,
            spacing_m: 50.0,
            willie_position_m: [200.0, 75.0, 0.0],
            path_loss: PathLossSpec::default(),
            max_link_distance_m: None,
            alice: None,
            bob: None,
        };
        let mut cfg = ScenarioConfig {
            topology: grid,
            constraints: ConstraintsSpec { p_max_dbm: 50.0, ..Default::default() },
            mode: Objective::CovertMax,
            detector: DetectorKind::Cycle,
            waveform: WaveformSpec::default(),
            calibration: CalibrationSpec::default(),
            sweep: None,
            output_dir: None,
            seed: 1,
        };
        match name {
            "grid-covert" => {}
            "grid-latency" => cfg.mode = Objective::LatencyMin,
            "grid-dep-sweep" => {
                cfg.mode = Objective::LatencyMin;
                cfg.constraints.m_bits = 256.0;
                cfg.sweep = Some(SweepSpec {
                    param: SweepParam::DepReqd,
                    values: vec![
                        0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.93, 0.95, 0.97,
                    ],
                    detectors: vec![DetectorKind::Cycle, DetectorKind::Energy],
                });
            }
            "grid-m-sweep" => {
                cfg.mode = Objective::LatencyMin;
                cfg.constraints.dep_reqd = 0.05;
                cfg.sweep = Some(SweepSpec {
                    param: SweepParam::MBits,
                    values: vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 4096.0, 1e4, 1e5, 1e6],
                    detectors: vec![DetectorKind::Cycle, DetectorKind::Energy],
                });
            }
            other => {
                return Err(Error::Config(format!("unknown preset '{other}' (known: {})", PRESETS.join(", "))));
            }
        }
        Ok(cfg)
    }
}

/// Result of one routing solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteOutcome {
    pub mode: Objective,
    pub detector: Option<DetectorKind>,
    pub snr_w_max: Option<f64>,
    #[serde(flatten)]
    pub metrics: RouteMetrics,
}

/// Builds the graph and solves the configured objective. Hop DEPs are filled
/// when a table is given.
pub fn run_route(
    topology: &Topology,
    constraints: &Constraints,
    mode: Objective,
    table: Option<&CalibrationTable>,
) -> Result<RouteOutcome> {
    let graph = build_graph(topology, constraints, mode, table)?;
    let route = graph.solve()?;
    Ok(RouteOutcome {
        mode,
        detector: table.map(|t| t.detector),
        snr_w_max: graph.snr_w_max(),
        metrics: route_metrics(&route, table, constraints.m_bits),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_param: String,
    pub swept_value: f64,
    pub detector: DetectorKind,
    pub e2e_latency_s: Option<f64>,
    pub e2e_dep: Option<f64>,
    pub dep_extrapolated: Option<bool>,
    pub hop_count: Option<usize>,
    pub bottleneck_theta_db: Option<f64>,
    pub status: String,
    /// Not part of the CSV.
    #[serde(default)]
    pub max_eta: Option<f64>,
    #[serde(default)]
    pub detail: Option<String>,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn csv_record(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.swept_param.clone(),
            self.swept_value.to_string(),
            self.detector.to_string(),
            opt(self.e2e_latency_s),
            opt(self.e2e_dep),
            self.dep_extrapolated.map(|b| b.to_string()).unwrap_or_default(),
            self.hop_count.map(|h| h.to_string()).unwrap_or_default(),
            opt(self.bottleneck_theta_db),
            self.status.clone(),
        ]
    }
}

/// Solves one route per (detector, grid value). Infeasible or disconnected
/// points produce a row with `status = infeasible`; other errors abort.
pub fn run_sweep(
    topology: &Topology,
    base: &Constraints,
    mode: Objective,
    sweep: &SweepSpec,
    tables: &[CalibrationTable],
) -> Result<Vec<SweepRow>> {
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep grid required".into()));
    }
    if tables.is_empty() {
        return Err(Error::MissingCalibration("sweep needs at least one calibration table".into()));
    }
    let points: Vec<(usize, usize)> =
        (0..tables.len()).flat_map(|t| (0..sweep.values.len()).map(move |v| (t, v))).collect();
    points
        .par_iter()
        .map(|&(t, v)| {
            let table = &tables[t];
            let value = sweep.values[v];
            let mut c = *base;
            sweep.param.apply(&mut c, value);
            let mut row = SweepRow {
                swept_param: sweep.param.as_str().to_string(),
                swept_value: value,
                detector: table.detector,
                e2e_latency_s: None,
                e2e_dep: None,
                dep_extrapolated: None,
                hop_count: None,
                bottleneck_theta_db: None,
                status: "ok".into(),
                max_eta: None,
                detail: None,
            };
            if let Err(e) = c.validate() {
                row.status = "infeasible".into();
                row.detail = Some(e.to_string());
                return Ok(row);
            }
            match run_route(topology, &c, mode, Some(table)) {
                Ok(out) => {
                    let s = &out.metrics.summary;
                    row.e2e_latency_s = Some(s.e2e_latency_s);
                    row.e2e_dep = s.e2e_dep;
                    row.dep_extrapolated = Some(s.dep_extrapolated);
                    row.hop_count = Some(s.hop_count);
                    row.bottleneck_theta_db = Some(s.bottleneck_theta_db);
                    row.max_eta = Some(s.max_eta);
                }
                Err(e @ (Error::Infeasible(_) | Error::Disconnected(_) | Error::InvalidParameter(_))) => {
                    row.status = "infeasible".into();
                    row.detail = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
