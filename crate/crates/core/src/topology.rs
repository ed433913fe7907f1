//! Node and adversary geometry plus per-link channel power gains.
//!
//! Gains are either evaluated from a log-distance path-loss model or looked
//! up in an imported table (for example ray-traced data). Tables are exchanged
//! as CSV in dB; internally every gain is a linear power gain `|h|^2`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, linear_to_db};

const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Receiving end of a gain lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Node(NodeId),
    Willie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub reference_gain_db: f64,
    pub reference_distance_m: f64,
    pub exponent: f64,
    pub carrier_frequency_hz: f64,
}

impl PathLossModel {
    /// Log-distance model anchored to the free-space gain at 1 m.
    pub fn free_space_reference(carrier_frequency_hz: f64, exponent: f64) -> Self {
        let d0 = 1.0;
        let wavelength = SPEED_OF_LIGHT_M_S / carrier_frequency_hz;
        let fspl = (4.0 * std::f64::consts::PI * d0 / wavelength).powi(2);
        Self {
            reference_gain_db: -linear_to_db(fspl),
            reference_distance_m: d0,
            exponent,
            carrier_frequency_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent >= 1.0) {
            return Err(Error::param(format!(
                "path-loss exponent must be >= 1, got {}",
                self.exponent
            )));
        }
        if !(self.reference_distance_m > 0.0) || !self.reference_gain_db.is_finite() {
            return Err(Error::param("path-loss reference must be positive and finite"));
        }
        Ok(())
    }

    pub fn gain_db(&self, distance_m: f64) -> f64 {
        self.reference_gain_db
            - 10.0 * self.exponent * (distance_m / self.reference_distance_m).log10()
    }

    pub fn gain(&self, distance_m: f64) -> f64 {
        db_to_linear(self.reference_gain_db)
            * (distance_m / self.reference_distance_m).powf(-self.exponent)
    }
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self::free_space_reference(900e6, 3.0)
    }
}

/// Node-to-node and node-to-Willie gains in dB, as read from or written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    /// `node_db[tx][rx]`; the diagonal is never read.
    node_db: Vec<Vec<f64>>,
    willie_db: Vec<f64>,
}

impl GainTable {
    pub fn new(node_db: Vec<Vec<f64>>, willie_db: Vec<f64>) -> Result<Self> {
        let n = willie_db.len();
        if node_db.len() != n || node_db.iter().any(|row| row.len() != n) {
            return Err(Error::GainTable(format!(
                "expected {n}x{n} node gains plus {n} Willie gains"
            )));
        }
        for (tx, row) in node_db.iter().enumerate() {
            for (rx, &g) in row.iter().enumerate() {
                if tx != rx && !g.is_finite() {
                    return Err(Error::GainTable(format!("row {tx}, node_{rx}: gain {g} dB is not finite")));
                }
            }
            if !willie_db[tx].is_finite() {
                return Err(Error::GainTable(format!(
                    "row {tx}, willie: gain {} dB is not finite",
                    willie_db[tx]
                )));
            }
        }
        Ok(Self { node_db, willie_db })
    }

    pub fn node_count(&self) -> usize {
        self.willie_db.len()
    }

    pub fn node_gain_db(&self, tx: usize, rx: usize) -> f64 {
        self.node_db[tx][rx]
    }

    pub fn willie_gain_db(&self, tx: usize) -> f64 {
        self.willie_db[tx]
    }

    /// Parses the `node_0,...,node_{N-1},willie` CSV layout. Row numbers in
    /// errors count data rows from 0 (the header is not counted).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let n = headers.len().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| {
            Error::GainTable("header needs at least one node column and a willie column".into())
        })?;
        for (i, h) in headers.iter().enumerate() {
            let expected = if i == n { "willie".to_string() } else { format!("node_{i}") };
            if h.trim() != expected {
                return Err(Error::GainTable(format!(
                    "header column {i} is '{h}', expected '{expected}'"
                )));
            }
        }

        let mut node_db = Vec::with_capacity(n);
        let mut willie_db = Vec::with_capacity(n);
        for (row_idx, record) in rdr.records().enumerate() {
            let record =
                record.map_err(|e| Error::GainTable(format!("row {row_idx}: malformed ({e})")))?;
            if record.len() != n + 1 {
                return Err(Error::GainTable(format!(
                    "row {row_idx}: expected {} fields, found {}",
                    n + 1,
                    record.len()
                )));
            }
            let mut row = vec![0.0; n];
            for (col, field) in record.iter().enumerate() {
                if col == row_idx {
                    // diagonal: ignored
                    continue;
                }
                let name = if col == n { "willie".to_string() } else { format!("node_{col}") };
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::GainTable(format!("row {row_idx}, {name}: cannot parse '{field}'"))
                })?;
                if !value.is_finite() {
                    return Err(Error::GainTable(format!(
                        "row {row_idx}, {name}: gain '{field}' dB is not finite"
                    )));
                }
                if col == n {
                    willie_db.push(value);
                } else {
                    row[col] = value;
                }
            }
            node_db.push(row);
        }
        if node_db.len() != n {
            return Err(Error::GainTable(format!(
                "dimension mismatch: header names {n} nodes but {} rows present",
                node_db.len()
            )));
        }
        Self::new(node_db, willie_db)
    }

    /// Writes the CSV layout. Values use the shortest round-trip float text,
    /// so reading the file back reproduces every dB value bit-exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.node_count();
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..n).map(|i| format!("node_{i}")).collect();
        header.push("willie".into());
        wtr.write_record(&header)?;
        for tx in 0..n {
            let mut row: Vec<String> = (0..n)
                .map(|rx| if rx == tx { "0".to_string() } else { format!("{}", self.node_db[tx][rx]) })
                .collect();
            row.push(format!("{}", self.willie_db[tx]));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads a gain CSV from disk.
pub fn import_gains(path: impl AsRef<Path>) -> Result<GainTable> {
    let file = std::fs::File::open(path.as_ref())?;
    GainTable::read_csv(file)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    Model(PathLossModel),
    Imported(GainTable),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub position_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    willie_position_m: [f64; 3],
    alice: NodeId,
    bob: NodeId,
    gain_source: GainSource,
    max_link_distance_m: Option<f64>,
}

impl Topology {
    pub fn new(
        positions: Vec<[f64; 3]>,
        willie_position_m: [f64; 3],
        alice: NodeId,
        bob: NodeId,
        model: PathLossModel,
    ) -> Result<Self> {
        model.validate()?;
        if positions.len() < 2 {
            return Err(Error::InvalidTopology("at least two nodes are required".into()));
        }
        if alice == bob {
            return Err(Error::InvalidTopology("alice and bob must differ".into()));
        }
        for id in [alice, bob] {
            if id.0 >= positions.len() {
                return Err(Error::UnknownNode(id.0));
            }
        }
        let finite = |p: &[f64; 3]| p.iter().all(|c| c.is_finite());
        if !positions.iter().all(finite) || !finite(&willie_position_m) {
            return Err(Error::InvalidTopology("positions must be finite".into()));
        }
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(i, position_m)| Node { id: NodeId(i), position_m })
            .collect();
        Ok(Self {
            nodes,
            willie_position_m,
            alice,
            bob,
            gain_source: GainSource::Model(model),
            max_link_distance_m: None,
        })
    }

    /// Switches the topology to table lookups.
    pub fn with_imported_gains(mut self, table: GainTable) -> Result<Self> {
        if table.node_count() != self.nodes.len() {
            return Err(Error::GainTable(format!(
                "dimension mismatch: table has {} nodes, topology has {}",
                table.node_count(),
                self.nodes.len()
            )));
        }
        self.gain_source = GainSource::Imported(table);
        Ok(self)
    }

    /// Replaces the gain source with a path-loss model.
    pub fn with_path_loss(mut self, model: PathLossModel) -> Result<Self> {
        model.validate()?;
        self.gain_source = GainSource::Model(model);
        Ok(self)
    }

    /// Rebuilds a topology from its JSON record. Imported-gain records need
    /// the gain table supplied separately.
    pub fn from_record(record: &TopologyRecord, gains: Option<GainTable>) -> Result<Self> {
        let positions = record.nodes.iter().map(|n| n.position_m).collect();
        let model = record.path_loss.unwrap_or_default();
        let topo = Topology::new(positions, record.willie_position_m, record.alice, record.bob, model)?
            .with_max_link_distance(record.max_link_distance_m);
        match gains {
            Some(table) => topo.with_imported_gains(table),
            None if record.gain_source == "imported" => Err(Error::GainTable(
                "topology record uses imported gains but no gain table was given".into(),
            )),
            None => Ok(topo),
        }
    }

    /// Links longer than `max_m` are dropped from routing graphs.
    pub fn with_max_link_distance(mut self, max_m: Option<f64>) -> Self {
        self.max_link_distance_m = max_m;
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn alice(&self) -> NodeId {
        self.alice
    }

    pub fn bob(&self) -> NodeId {
        self.bob
    }

    pub fn set_endpoints(&mut self, alice: NodeId, bob: NodeId) -> Result<()> {
        for id in [alice, bob] {
            self.position(id)?;
        }
        if alice == bob {
            return Err(Error::InvalidTopology("alice and bob must differ".into()));
        }
        self.alice = alice;
        self.bob = bob;
        Ok(())
    }

    pub fn willie_position(&self) -> [f64; 3] {
        self.willie_position_m
    }

    pub fn gain_source(&self) -> &GainSource {
        &self.gain_source
    }

    pub fn max_link_distance(&self) -> Option<f64> {
        self.max_link_distance_m
    }

    pub fn position(&self, id: NodeId) -> Result<[f64; 3]> {
        self.nodes.get(id.0).map(|n| n.position_m).ok_or(Error::UnknownNode(id.0))
    }

    pub fn distance(&self, tx: NodeId, to: Endpoint) -> Result<f64> {
        let a = self.position(tx)?;
        let b = match to {
            Endpoint::Node(rx) => self.position(rx)?,
            Endpoint::Willie => self.willie_position_m,
        };
        Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
    }

    /// Whether the optional range filter admits the link.
    pub fn link_allowed(&self, tx: NodeId, rx: NodeId) -> Result<bool> {
        match self.max_link_distance_m {
            None => Ok(true),
            Some(max) => Ok(self.distance(tx, Endpoint::Node(rx))? <= max),
        }
    }

    /// Linear power gain `|h|^2` from `tx` to a node or to Willie.
    ///
    /// Lookups are directional; no reciprocity is assumed.
    pub fn link_gain(&self, tx: NodeId, to: Endpoint) -> Result<f64> {
        self.position(tx)?;
        if let Endpoint::Node(rx) = to {
            self.position(rx)?;
            if rx == tx {
                return Err(Error::InvalidParameter(format!("self link {tx}->{tx} has no gain")));
            }
        }
        let gain = match &self.gain_source {
            GainSource::Model(model) => {
                let d = self.distance(tx, to)?;
                if d <= 0.0 {
                    return Err(Error::InvalidTopology(format!(
                        "node {tx} is co-located with its receiver"
                    )));
                }
                model.gain(d)
            }
            GainSource::Imported(table) => {
                let db = match to {
                    Endpoint::Node(rx) => table.node_gain_db(tx.0, rx.0),
                    Endpoint::Willie => table.willie_gain_db(tx.0),
                };
                db_to_linear(db)
            }
        };
        Ok(gain)
    }

    pub fn link_gain_db(&self, tx: NodeId, to: Endpoint) -> Result<f64> {
        match (&self.gain_source, to) {
            (GainSource::Imported(t), Endpoint::Node(rx)) if rx != tx => {
                self.position(rx)?;
                self.position(tx)?;
                Ok(t.node_gain_db(tx.0, rx.0))
            }
            (GainSource::Imported(t), Endpoint::Willie) => {
                self.position(tx)?;
                Ok(t.willie_gain_db(tx.0))
            }
            (GainSource::Model(m), _) => {
                // evaluate in the log domain so exported text is exact
                self.link_gain(tx, to)?;
                Ok(m.gain_db(self.distance(tx, to)?))
            }
            _ => self.link_gain(tx, to).map(linear_to_db),
        }
    }

    /// Snapshot of the current gains in table form (dB).
    pub fn gain_table(&self) -> Result<GainTable> {
        let n = self.node_count();
        let mut node_db = vec![vec![0.0; n]; n];
        let mut willie_db = Vec::with_capacity(n);
        for tx in 0..n {
            for rx in 0..n {
                if tx != rx {
                    node_db[tx][rx] = self.link_gain_db(NodeId(tx), Endpoint::Node(NodeId(rx)))?;
                }
            }
            willie_db.push(self.link_gain_db(NodeId(tx), Endpoint::Willie)?);
        }
        GainTable::new(node_db, willie_db)
    }

    pub fn export_gains(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.gain_table()?.write_csv(file)
    }

    pub fn to_record(&self) -> TopologyRecord {
        TopologyRecord {
            nodes: self.nodes.clone(),
            willie_position_m: self.willie_position_m,
            alice: self.alice,
            bob: self.bob,
            gain_source: match self.gain_source {
                GainSource::Model(_) => "model".into(),
                GainSource::Imported(_) => "imported".into(),
            },
            path_loss: match self.gain_source {
                GainSource::Model(m) => Some(m),
                GainSource::Imported(_) => None,
            },
            max_link_distance_m: self.max_link_distance_m,
        }
    }
}

/// JSON form of a topology, consumed by plotting scripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub nodes: Vec<Node>,
    pub willie_position_m: [f64; 3],
    pub alice: NodeId,
    pub bob: NodeId,
    pub gain_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss: Option<PathLossModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_link_distance_m: Option<f64>,
}

/// Regular `nx` by `ny` grid at height 0. Node `(i, j)` has index `i * ny + j`
/// and sits at `(i * spacing, j * spacing, 0)`; Alice is the `(0, 0)` corner and
/// Bob the opposite one.
pub fn grid_topology(
    nx: usize,
    ny: usize,
    spacing_m: f64,
    willie_position_m: [f64; 3],
) -> Result<Topology> {
    if nx * ny < 2 {
        return Err(Error::InvalidTopology(format!("grid {nx}x{ny} has fewer than two nodes")));
    }
    if !(spacing_m > 0.0) {
        return Err(Error::param("grid spacing must be positive"));
    }
    let mut positions = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            positions.push([i as f64 * spacing_m, j as f64 * spacing_m, 0.0]);
        }
    }
    let bob = NodeId(nx * ny - 1);
    Topology::new(positions, willie_position_m, NodeId(0), bob, PathLossModel::default())
}

/// Uniformly scattered nodes in a `side_m` square with Willie placed at random
/// inside it. Alice is node 0 and Bob node `n - 1`.
pub fn random_topology<R: Rng>(
    rng: &mut R,
    n: usize,
    side_m: f64,
    model: PathLossModel,
) -> Result<Topology> {
    let point = |rng: &mut R| [rng.random::<f64>() * side_m, rng.random::<f64>() * side_m, 0.0];
    let positions: Vec<_> = (0..n).map(|_| point(rng)).collect();
    let willie = point(rng);
    Topology::new(positions, willie, NodeId(0), NodeId(n.saturating_sub(1)), model)
}
