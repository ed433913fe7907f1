//! Hop graphs over feasible links and the two route optimizations.
//!
//! Covert-max routes maximize the bottleneck detection SNR gain with a
//! widest-path search; latency-min routes minimize summed hop latency with
//! Dijkstra. Both break ties toward fewer hops, then toward the
//! lexicographically smallest node sequence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate_covert_max, allocate_latency_min, Constraints, HopAllocation, LinkGains, Objective};
use crate::detector::CalibrationTable;
use crate::error::{Error, Result};
use crate::topology::{Endpoint, NodeId, Topology};
use crate::units::{linear_to_db, watts_to_dbm};

pub use crate::alloc::Objective as RouteMode;

/// Relative tolerance for comparing the theta and DEP bottleneck objectives.
pub const OBJECTIVE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tx: NodeId,
    pub rx: NodeId,
    pub alloc: HopAllocation,
}

/// Directed graph of feasible hops; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct HopGraph {
    objective: Objective,
    node_count: usize,
    alice: NodeId,
    bob: NodeId,
    /// Outgoing edges per node, sorted by receiver.
    out: Vec<Vec<Edge>>,
    snr_w_max: Option<f64>,
}

impl HopGraph {
    /// Graph from explicit edges; used for synthetic instances.
    pub fn from_edges(
        objective: Objective,
        node_count: usize,
        alice: NodeId,
        bob: NodeId,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        if alice.0 >= node_count || bob.0 >= node_count {
            return Err(Error::UnknownNode(alice.0.max(bob.0)));
        }
        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); node_count];
        for e in edges {
            if e.tx.0 >= node_count || e.rx.0 >= node_count {
                return Err(Error::UnknownNode(e.tx.0.max(e.rx.0)));
            }
            if e.tx == e.rx {
                return Err(Error::InvalidTopology(format!("self edge at node {}", e.tx)));
            }
            let w = weight(objective, &e.alloc);
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::param(format!("edge {}->{} has invalid weight {w}", e.tx, e.rx)));
            }
            out[e.tx.0].push(e);
        }
        for list in &mut out {
            list.sort_by_key(|e| e.rx);
            if list.windows(2).any(|w| w[0].rx == w[1].rx) {
                return Err(Error::InvalidTopology("duplicate edge".into()));
            }
        }
        Ok(Self { objective, node_count, alice, bob, out, snr_w_max: None })
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn alice(&self) -> NodeId {
        self.alice
    }

    pub fn bob(&self) -> NodeId {
        self.bob
    }

    /// Willie's SNR ceiling used to build a latency-min graph.
    pub fn snr_w_max(&self) -> Option<f64> {
        self.snr_w_max
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.out.iter().flatten()
    }

    pub fn outgoing(&self, node: NodeId) -> &[Edge] {
        &self.out[node.0]
    }

    pub fn edge(&self, tx: NodeId, rx: NodeId) -> Option<&Edge> {
        let list = self.out.get(tx.0)?;
        list.binary_search_by_key(&rx, |e| e.rx).ok().map(|i| &list[i])
    }

    fn check_endpoints(&self) -> Result<()> {
        if self.out[self.alice.0].is_empty() {
            return Err(Error::Disconnected(format!("no feasible link leaves Alice (node {})", self.alice)));
        }
        if !self.edges().any(|e| e.rx == self.bob) {
            return Err(Error::Disconnected(format!("no feasible link reaches Bob (node {})", self.bob)));
        }
        Ok(())
    }

    /// Widest path on the mode's natural weight (theta).
    pub fn widest_path(&self) -> Result<Route> {
        self.widest_path_by(|a| a.theta)
    }

    /// Widest path on an arbitrary positive edge weight.
    pub fn widest_path_by(&self, weight: impl Fn(&HopAllocation) -> f64) -> Result<Route> {
        let (a, b) = (self.alice.0, self.bob.0);
        if a == b {
            return Err(Error::InvalidTopology("Alice and Bob coincide".into()));
        }
        // phase 1: best bottleneck value
        let mut best = vec![f64::NEG_INFINITY; self.node_count];
        let mut done = vec![false; self.node_count];
        best[a] = f64::INFINITY;
        let mut heap = BinaryHeap::new();
        heap.push(MaxItem(f64::INFINITY, a));
        while let Some(MaxItem(width, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == b {
                break;
            }
            for e in &self.out[u] {
                let w = width.min(weight(&e.alloc));
                if w > best[e.rx.0] {
                    best[e.rx.0] = w;
                    heap.push(MaxItem(w, e.rx.0));
                }
            }
        }
        let bottleneck = best[b];
        if bottleneck == f64::NEG_INFINITY {
            return Err(self.disconnected());
        }
        // phase 2: fewest hops, then smallest sequence, over edges >= bottleneck
        let allowed = |e: &Edge| weight(&e.alloc) >= bottleneck;
        let dist = self.hops_to_bob(&allowed);
        let mut nodes = vec![self.alice];
        let mut u = a;
        while u != b {
            let next = self.out[u]
                .iter()
                .filter(|e| allowed(e) && dist[e.rx.0] == dist[u] - 1)
                .map(|e| e.rx)
                .next()
                .expect("hop distances are consistent");
            nodes.push(next);
            u = next.0;
        }
        Ok(self.route_along(&nodes))
    }

    /// Breadth-first hop counts to Bob over the allowed edges.
    fn hops_to_bob(&self, allowed: &impl Fn(&Edge) -> bool) -> Vec<usize> {
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); self.node_count];
        for e in self.edges().filter(|e| allowed(e)) {
            incoming[e.rx.0].push(e.tx.0);
        }
        let mut dist = vec![usize::MAX; self.node_count];
        dist[self.bob.0] = 0;
        let mut queue = VecDeque::from([self.bob.0]);
        while let Some(v) = queue.pop_front() {
            for &u in &incoming[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Minimum total latency route.
    pub fn shortest_path(&self) -> Result<Route> {
        self.shortest_path_by(|a| a.latency_s)
    }

    pub fn shortest_path_by(&self, weight: impl Fn(&HopAllocation) -> f64) -> Result<Route> {
        let (a, b) = (self.alice.0, self.bob.0);
        if a == b {
            return Err(Error::InvalidTopology("Alice and Bob coincide".into()));
        }
        let mut best: Vec<Option<Label>> = vec![None; self.node_count];
        let mut done = vec![false; self.node_count];
        best[a] = Some(Label { cost: 0.0, path: vec![a] });
        let mut heap = BinaryHeap::new();
        heap.push(std::cmp::Reverse(best[a].clone().unwrap()));
        while let Some(std::cmp::Reverse(label)) = heap.pop() {
            let u = *label.path.last().unwrap();
            if done[u] || best[u].as_ref() != Some(&label) {
                continue;
            }
            done[u] = true;
            if u == b {
                break;
            }
            for e in &self.out[u] {
                let v = e.rx.0;
                if done[v] {
                    continue;
                }
                let mut path = label.path.clone();
                path.push(v);
                let candidate = Label { cost: label.cost + weight(&e.alloc), path };
                if best[v].as_ref().is_none_or(|cur| candidate < *cur) {
                    best[v] = Some(candidate.clone());
                    heap.push(std::cmp::Reverse(candidate));
                }
            }
        }
        match &best[b] {
            Some(label) => {
                let nodes: Vec<NodeId> = label.path.iter().map(|&i| NodeId(i)).collect();
                Ok(self.route_along(&nodes))
            }
            None => Err(self.disconnected()),
        }
    }

    /// The mode's route: widest on theta or shortest on latency.
    pub fn solve(&self) -> Result<Route> {
        match self.objective {
            Objective::CovertMax => self.widest_path(),
            Objective::LatencyMin => self.shortest_path(),
        }
    }

    fn disconnected(&self) -> Error {
        Error::Disconnected(format!("no feasible route from Alice (node {}) to Bob (node {})", self.alice, self.bob))
    }

    fn route_along(&self, nodes: &[NodeId]) -> Route {
        let hops = nodes
            .windows(2)
            .map(|w| self.edge(w[0], w[1]).expect("route follows graph edges").clone())
            .collect();
        Route::new(self.objective, hops)
    }
}

fn weight(objective: Objective, alloc: &HopAllocation) -> f64 {
    match objective {
        Objective::CovertMax => alloc.theta,
        Objective::LatencyMin => alloc.latency_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MaxItem(f64, usize);

impl Eq for MaxItem {}

impl PartialOrd for MaxItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MaxItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // wider first, then smaller node index
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Dijkstra label ordered by cost, then hop count, then node sequence.
#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

/// Builds the hop graph: one edge per ordered node pair whose allocation is
/// feasible. Latency-min needs a calibration table to bound Willie's SNR.
pub fn build_graph(
    topology: &Topology,
    constraints: &Constraints,
    objective: Objective,
    table: Option<&CalibrationTable>,
) -> Result<HopGraph> {
    constraints.validate()?;
    let snr_w_max = match objective {
        Objective::CovertMax => None,
        Objective::LatencyMin => {
            let table = table.ok_or_else(|| {
                Error::MissingCalibration("latency-min routing needs a calibration table; run `calibrate` first".into())
            })?;
            Some(table.invert_dep(constraints.dep_reqd, constraints.m_bits)?.snr_w)
        }
    };
    let n = topology.node_count();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|t| (0..n).map(move |r| (t, r))).filter(|(t, r)| t != r).collect();
    let edges = pairs
        .par_iter()
        .map(|&(t, r)| -> Result<Option<Edge>> {
            let (tx, rx) = (NodeId(t), NodeId(r));
            if !topology.link_allowed(tx, rx)? {
                return Ok(None);
            }
            let gains = LinkGains::new(topology.link_gain(tx, Endpoint::Node(rx))?, topology.link_gain(tx, Endpoint::Willie)?);
            let alloc = match snr_w_max {
                None => allocate_covert_max(gains, constraints),
                Some(ceiling) => allocate_latency_min(gains, constraints, ceiling),
            };
            match alloc {
                Ok(a) => {
                    let a = match table {
                        Some(t) => a.with_dep(t, constraints.m_bits),
                        None => a,
                    };
                    Ok(Some(Edge { tx, rx, alloc: a }))
                }
                Err(Error::Infeasible(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut graph = HopGraph::from_edges(objective, n, topology.alice(), topology.bob(), edges.into_iter().flatten())?;
    graph.snr_w_max = snr_w_max;
    graph.check_endpoints()?;
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub objective: Objective,
    pub hops: Vec<Edge>,
}

impl Route {
    pub fn new(objective: Objective, hops: Vec<Edge>) -> Self {
        Self { objective, hops }
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = self.hops.iter().map(|h| h.tx).collect();
        if let Some(last) = self.hops.last() {
            nodes.push(last.rx);
        }
        nodes
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    /// Index of the hop with the smallest theta (first on ties).
    pub fn bottleneck_hop(&self) -> Option<usize> {
        self.hops
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.alloc.theta.total_cmp(&b.1.alloc.theta).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    pub fn bottleneck_theta(&self) -> f64 {
        self.hops.iter().map(|h| h.alloc.theta).fold(f64::INFINITY, f64::min)
    }

    pub fn e2e_latency_s(&self) -> f64 {
        self.hops.iter().map(|h| h.alloc.latency_s).sum()
    }

    pub fn max_spreading_gain(&self) -> f64 {
        self.hops.iter().map(|h| h.alloc.spreading_gain).fold(0.0, f64::max)
    }

    /// Checks contiguity from Alice to Bob and that no node repeats.
    pub fn is_simple_chain(&self, alice: NodeId, bob: NodeId) -> bool {
        let nodes = self.nodes();
        let mut seen = std::collections::HashSet::new();
        !self.hops.is_empty()
            && nodes.first() == Some(&alice)
            && nodes.last() == Some(&bob)
            && self.hops.windows(2).all(|w| w[0].rx == w[1].tx)
            && nodes.iter().all(|n| seen.insert(*n))
    }
}

/// End-to-end covertness: the weakest hop's DEP.
pub fn end_to_end_dep(hop_deps: &[f64]) -> Option<f64> {
    hop_deps.iter().copied().reduce(f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub tx: NodeId,
    pub rx: NodeId,
    pub power_dbm: f64,
    pub bandwidth_hz: f64,
    pub eta: f64,
    pub data_rate_bps: f64,
    pub latency_s: f64,
    pub snr_rx_db: f64,
    pub snr_willie_db: f64,
    pub theta_db: f64,
    pub dep: Option<f64>,
    pub dep_extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub objective: Objective,
    pub nodes: Vec<NodeId>,
    pub hop_count: usize,
    pub e2e_dep: Option<f64>,
    pub dep_extrapolated: bool,
    pub bottleneck_hop: Option<usize>,
    pub bottleneck_theta_db: f64,
    pub e2e_latency_s: f64,
    pub max_eta: f64,
}

/// Serializable route: per-hop records plus the end-to-end summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteMetrics {
    pub hops: Vec<HopRecord>,
    pub summary: RouteSummary,
}

/// Per-hop table and end-to-end metrics. Hop DEPs are looked up at
/// `obs_bits` when a table is given; otherwise they are reported as absent
/// and only the theta bottleneck and latency are meaningful.
pub fn route_metrics(route: &Route, table: Option<&CalibrationTable>, obs_bits: f64) -> RouteMetrics {
    let hops: Vec<HopRecord> = route
        .hops
        .iter()
        .map(|h| {
            let a = &h.alloc;
            let dep = table.map(|t| t.dep_lookup(a.snr_willie, obs_bits));
            HopRecord {
                tx: h.tx,
                rx: h.rx,
                power_dbm: watts_to_dbm(a.power_w),
                bandwidth_hz: a.bandwidth_hz,
                eta: a.spreading_gain,
                data_rate_bps: a.data_rate_bps,
                latency_s: a.latency_s,
                snr_rx_db: linear_to_db(a.snr_rx),
                snr_willie_db: linear_to_db(a.snr_willie),
                theta_db: linear_to_db(a.theta),
                dep: dep.map(|d| d.dep),
                dep_extrapolated: dep.is_some_and(|d| d.extrapolated),
            }
        })
        .collect();
    let deps: Option<Vec<f64>> = hops.iter().map(|h| h.dep).collect();
    let summary = RouteSummary {
        objective: route.objective,
        nodes: route.nodes(),
        hop_count: route.hop_count(),
        e2e_dep: deps.as_deref().and_then(end_to_end_dep),
        dep_extrapolated: hops.iter().any(|h| h.dep_extrapolated),
        bottleneck_hop: route.bottleneck_hop(),
        bottleneck_theta_db: linear_to_db(route.bottleneck_theta()),
        e2e_latency_s: route.e2e_latency_s(),
        max_eta: route.max_spreading_gain(),
    };
    RouteMetrics { hops, summary }
}

/// Outcome of comparing widest paths on theta and on per-hop DEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Outcome {
    pub theta_route: Vec<NodeId>,
    pub dep_route: Vec<NodeId>,
    /// DEP objective (min hop DEP) of the theta-widest route.
    pub theta_route_dep: f64,
    /// DEP objective of the DEP-widest route.
    pub dep_route_dep: f64,
    pub same_route: bool,
    pub objective_equal: bool,
}

/// Runs both widest-path formulations on a covert-max graph.
pub fn compare_widest_paths(graph: &HopGraph, table: &CalibrationTable, obs_bits: f64) -> Result<Theorem1Outcome> {
    let dep_of = |a: &HopAllocation| table.dep_lookup(a.snr_willie, obs_bits).dep;
    let theta_route = graph.widest_path_by(|a| a.theta)?;
    let dep_route = graph.widest_path_by(|a| dep_of(a))?;
    let objective = |r: &Route| r.hops.iter().map(|h| dep_of(&h.alloc)).fold(f64::INFINITY, f64::min);
    let (a, b) = (objective(&theta_route), objective(&dep_route));
    Ok(Theorem1Outcome {
        same_route: theta_route.nodes() == dep_route.nodes(),
        objective_equal: (a - b).abs() <= OBJECTIVE_RTOL * a.abs().max(b.abs()),
        theta_route: theta_route.nodes(),
        dep_route: dep_route.nodes(),
        theta_route_dep: a,
        dep_route_dep: b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub cases: usize,
    pub objective_equal: usize,
    pub same_route: usize,
    pub outcomes: Vec<Theorem1Outcome>,
}

/// Theta-versus-DEP widest-path check over a batch of random topologies built from `seeds`.
/// Disconnected instances are skipped and not counted.
pub fn verify_theorem1(
    make_topology: impl Fn(u64) -> Result<Topology>,
    constraints: &Constraints,
    table: &CalibrationTable,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<Theorem1Report> {
    let mut outcomes = Vec::new();
    for seed in seeds {
        let topo = make_topology(seed)?;
        let graph = match build_graph(&topo, constraints, Objective::CovertMax, None) {
            Ok(g) => g,
            Err(Error::Disconnected(_)) => continue,
            Err(e) => return Err(e),
        };
        match compare_widest_paths(&graph, table, constraints.m_bits) {
            Ok(o) => outcomes.push(o),
            Err(Error::Disconnected(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(Theorem1Report {
        cases: outcomes.len(),
        objective_equal: outcomes.iter().filter(|o| o.objective_equal).count(),
        same_route: outcomes.iter().filter(|o| o.same_route).count(),
        outcomes,
    })
}
