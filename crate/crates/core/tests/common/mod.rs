#![allow(dead_code)]

use covroute_core::detector::{CalibrationTable, DetectorKind, WaveformSpec};
use covroute_core::routing::Edge;
use covroute_core::scenario::{default_obs_grid, default_snr_grid};
use covroute_core::topology::{random_topology, PathLossModel};
use covroute_core::{Constraints, HopAllocation, HopGraph, NodeId, Objective, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Allocation carrying only a routing weight; theta and latency both equal `w`.
pub fn weighted(w: f64) -> HopAllocation {
    HopAllocation {
        power_w: 1.0,
        bandwidth_hz: 1.0,
        spreading_gain: 1.0,
        data_rate_bps: 1.0,
        latency_s: w,
        snr_rx: w,
        snr_willie: 1.0,
        theta: w,
        snr_w_max: None,
        dep: None,
    }
}

/// Random directed graph on `n` nodes with edge probability `p` and weights
/// drawn from a small integer set, so ties are frequent.
pub fn random_graph(rng: &mut impl Rng, objective: Objective, n: usize, p: f64) -> HopGraph {
    let mut edges = Vec::new();
    for t in 0..n {
        for r in 0..n {
            if t != r && rng.random::<f64>() < p {
                let w = rng.random_range(1..=12) as f64;
                edges.push(Edge { tx: NodeId(t), rx: NodeId(r), alloc: weighted(w) });
            }
        }
    }
    HopGraph::from_edges(objective, n, NodeId(0), NodeId(n - 1), edges).unwrap()
}

/// Every simple Alice-to-Bob path, by depth-first enumeration.
pub fn all_simple_paths(graph: &HopGraph) -> Vec<Vec<NodeId>> {
    fn walk(g: &HopGraph, at: NodeId, path: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
        if at == g.bob() {
            out.push(path.clone());
            return;
        }
        for e in g.outgoing(at) {
            if !path.contains(&e.rx) {
                path.push(e.rx);
                walk(g, e.rx, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(graph, graph.alice(), &mut vec![graph.alice()], &mut out);
    out
}

pub fn path_weights(graph: &HopGraph, path: &[NodeId], weight: impl Fn(&HopAllocation) -> f64) -> Vec<f64> {
    path.windows(2).map(|w| weight(&graph.edge(w[0], w[1]).expect("path edge exists").alloc)).collect()
}

pub fn bottleneck(graph: &HopGraph, path: &[NodeId], weight: impl Fn(&HopAllocation) -> f64) -> f64 {
    path_weights(graph, path, weight).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn total(graph: &HopGraph, path: &[NodeId], weight: impl Fn(&HopAllocation) -> f64) -> f64 {
    path_weights(graph, path, weight).into_iter().sum()
}

/// Closed-form table strictly decreasing in both SNR and observation length.
pub fn model_table(kind: DetectorKind) -> CalibrationTable {
    let fp = WaveformSpec::default().fingerprint(kind);
    CalibrationTable::from_model(fp, &default_snr_grid(), &default_obs_grid(), |snr, bits| {
        1.0 / (1.0 + snr * (bits as f64 / 16.0).sqrt())
    })
    .unwrap()
}

/// Table following `1 / (1 + snr)` at every observation length.
pub fn inverse_table() -> CalibrationTable {
    let fp = WaveformSpec::default().fingerprint(DetectorKind::Cycle);
    CalibrationTable::from_model(fp, &default_snr_grid(), &default_obs_grid(), |snr, _| 1.0 / (1.0 + snr)).unwrap()
}

/// Link-budget constraints at the reference operating point with a generous
/// power cap so small random layouts stay connected.
pub fn field_constraints() -> Constraints {
    Constraints {
        d_reqd_bps: 2.5e6,
        snr_reqd: 10.0,
        dep_reqd: 0.5,
        omega_max_hz: 1e7,
        p_max_w: 100.0,
        n0_w_per_hz: covroute_core::units::dbm_to_watts(-113.0),
        m_bits: 256.0,
    }
}

pub fn random_field(seed: u64, nodes: usize) -> Topology {
    let mut r = rng(seed);
    random_topology(&mut r, nodes, 120.0, PathLossModel::free_space_reference(900e6, 3.0)).unwrap()
}
