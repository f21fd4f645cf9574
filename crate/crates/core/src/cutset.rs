//! Feasibility test: saturated cut-set detection and the linear cut-set
//! constraints that relieve them.
//!
//! Candidate cuts come from a seeded search. Every branch loaded at or above
//! the utilization threshold seeds a minimum cut (capacities = thermal
//! limits) between its two ends; bridges also yield the singleton cut, and an
//! optional corridor branch list yields the cut it induces. Each candidate is
//! then scored with the signed aggregate flow from its source side.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintTag, LinearConstraint, Provenance, Sense};
use crate::grid::{BranchId, BusId, Network};
use crate::sensitivity::SensitivitySet;

pub const DEFAULT_UTILIZATION_THRESHOLD: f64 = 0.98;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutsetError {
    #[error("cut-set references branch {0}, which is not in service")]
    OutOfService(BranchId),
    #[error("cut-set references unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("sensitivities were computed for a different topology")]
    TopologyMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    /// Sorted branch ids crossing the partition.
    pub branches: Vec<BranchId>,
    /// Source side of the cut; flow is measured from here.
    pub side_a: Vec<BusId>,
    pub side_b: Vec<BusId>,
    pub aggregate_flow_mw: f64,
    pub aggregate_limit_mw: f64,
    pub transfer_margin_mw: f64,
}

impl CutSet {
    /// Scores the partition `side_a` / rest against `flows`.
    pub fn from_partition(net: &Network, side_a: &BTreeSet<BusId>, flows_mw: &[f64]) -> Self {
        let mut branches = Vec::new();
        let mut flow = 0.0;
        let mut limit = 0.0;
        for (u, br) in net.branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let fa = side_a.contains(&br.from_bus);
            let ta = side_a.contains(&br.to_bus);
            if fa == ta {
                continue;
            }
            branches.push(br.id);
            flow += if fa { flows_mw[u] } else { -flows_mw[u] };
            limit += br.flow_limit_mw;
        }
        branches.sort_unstable();
        let side_b = net.buses.iter().map(|b| b.id).filter(|id| !side_a.contains(id)).collect();
        CutSet {
            branches,
            side_a: side_a.iter().copied().collect(),
            side_b,
            aggregate_flow_mw: flow,
            aggregate_limit_mw: limit,
            transfer_margin_mw: (flow - limit).max(0.0),
        }
    }

    pub fn utilization(&self) -> f64 {
        self.aggregate_flow_mw / self.aggregate_limit_mw
    }

    pub fn is_saturated(&self) -> bool {
        self.aggregate_flow_mw > self.aggregate_limit_mw
    }

    pub fn transfer_margin(&self) -> f64 {
        transfer_margin(self.aggregate_flow_mw, self.aggregate_limit_mw)
    }

    /// Same cut measured from the other side.
    pub fn flipped(&self) -> Self {
        CutSet {
            branches: self.branches.clone(),
            side_a: self.side_b.clone(),
            side_b: self.side_a.clone(),
            aggregate_flow_mw: -self.aggregate_flow_mw,
            aggregate_limit_mw: self.aggregate_limit_mw,
            transfer_margin_mw: (-self.aggregate_flow_mw - self.aggregate_limit_mw).max(0.0),
        }
    }

    /// Canonical key: sorted branch ids joined by `-`.
    pub fn key(&self) -> String {
        self.branches.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("-")
    }
}

/// Overload of a cut in MW, zero when within its aggregate limit.
pub fn transfer_margin(aggregate_flow_mw: f64, aggregate_limit_mw: f64) -> f64 {
    (aggregate_flow_mw - aggregate_limit_mw).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtOptions {
    pub utilization_threshold: f64,
    /// Branches crossing the fire region; tested as one more candidate cut.
    #[serde(default)]
    pub corridor: Vec<BranchId>,
}

impl Default for FtOptions {
    fn default() -> Self {
        Self { utilization_threshold: DEFAULT_UTILIZATION_THRESHOLD, corridor: Vec::new() }
    }
}

/// Dense Edmonds-Karp on an undirected capacity graph.
pub(crate) struct MinCut {
    n: usize,
    cap: Vec<f64>,
}

const FLOW_EPS: f64 = 1e-9;

impl MinCut {
    pub(crate) fn new(n: usize) -> Self {
        Self { n, cap: vec![0.0; n * n] }
    }

    pub(crate) fn add_undirected(&mut self, a: usize, b: usize, c: f64) {
        self.cap[a * self.n + b] += c;
        self.cap[b * self.n + a] += c;
    }

    /// Returns the max-flow value and the source side of a minimum cut.
    pub(crate) fn solve(mut self, s: usize, t: usize) -> (f64, Vec<bool>) {
        let n = self.n;
        let mut total = 0.0;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                if v == t {
                    break;
                }
                for w in 0..n {
                    if parent[w] == usize::MAX && self.cap[v * n + w] > FLOW_EPS {
                        parent[w] = v;
                        queue.push_back(w);
                    }
                }
            }
            if parent[t] == usize::MAX {
                let reach = parent.iter().map(|&p| p != usize::MAX).collect();
                return (total, reach);
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let u = parent[v];
                push = push.min(self.cap[u * n + v]);
                v = u;
            }
            let mut v = t;
            while v != s {
                let u = parent[v];
                self.cap[u * n + v] -= push;
                self.cap[v * n + u] += push;
                v = u;
            }
            total += push;
        }
    }
}

/// Minimum-capacity cut separating buses `s` and `t` on in-service branches,
/// returned as the source-side bus set and its capacity.
pub fn min_cut_between(net: &Network, s: BusId, t: BusId) -> (BTreeSet<BusId>, f64) {
    min_cut_between_excluding(net, s, t, &BTreeSet::new())
}

fn min_cut_between_excluding(
    net: &Network,
    s: BusId,
    t: BusId,
    removed: &BTreeSet<BranchId>,
) -> (BTreeSet<BusId>, f64) {
    let mut g = MinCut::new(net.buses.len());
    for br in net.branches.iter().filter(|b| b.in_service && !removed.contains(&b.id)) {
        g.add_undirected(net.bus_index(br.from_bus).unwrap(), net.bus_index(br.to_bus).unwrap(), br.flow_limit_mw);
    }
    let (value, reach) = g.solve(net.bus_index(s).unwrap(), net.bus_index(t).unwrap());
    let side = net.buses.iter().zip(reach).filter(|(_, r)| *r).map(|(b, _)| b.id).collect();
    (side, value)
}

/// Side of the bus `anchor` once `removed` branches are taken out, or `None`
/// when the removal does not split the network.
fn component_after_removal(net: &Network, removed: &BTreeSet<BranchId>, anchor: BusId) -> Option<BTreeSet<BusId>> {
    let labels = net.islands_without(removed);
    if labels.iter().all(|&c| c == labels[0]) {
        return None;
    }
    let mine = labels[net.bus_index(anchor)?];
    Some(net.buses.iter().zip(&labels).filter(|(_, &c)| c == mine).map(|(b, _)| b.id).collect())
}

/// Candidate source-side partitions produced by the seeded search, before
/// scoring. Exposed for the brute-force comparison tests.
pub fn candidate_partitions(net: &Network, flows_mw: &[f64], opts: &FtOptions) -> Vec<BTreeSet<BusId>> {
    let mut out = Vec::new();
    for (u, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let util = flows_mw[u].abs() / br.flow_limit_mw;
        if util < opts.utilization_threshold {
            continue;
        }
        let (src, dst) = if flows_mw[u] >= 0.0 { (br.from_bus, br.to_bus) } else { (br.to_bus, br.from_bus) };
        out.push(min_cut_between(net, src, dst).0);
        if let Some(side) = component_after_removal(net, &BTreeSet::from([br.id]), src) {
            out.push(side);
        }
    }
    let corridor: BTreeSet<BranchId> = opts
        .corridor
        .iter()
        .copied()
        .filter(|id| net.branch(*id).is_some_and(|b| b.in_service))
        .collect();
    if let Some(anchor) = corridor
        .iter()
        .map(|id| net.branch_index(*id).unwrap())
        .max_by(|&a, &b| {
            let ua = flows_mw[a].abs() / net.branches[a].flow_limit_mw;
            let ub = flows_mw[b].abs() / net.branches[b].flow_limit_mw;
            ua.total_cmp(&ub)
        })
        .map(|u| {
            let br = &net.branches[u];
            if flows_mw[u] >= 0.0 {
                br.from_bus
            } else {
                br.to_bus
            }
        })
    {
        if let Some(side) = component_after_removal(net, &corridor, anchor) {
            out.push(side);
        }
    }
    out
}

/// Saturated cut-sets for the given flows, sorted by decreasing transfer
/// margin. A cut is reported when its utilization exceeds the threshold.
pub fn find_saturated_cutsets(net: &Network, flows_mw: &[f64], opts: &FtOptions) -> Vec<CutSet> {
    let mut best: BTreeMap<String, CutSet> = BTreeMap::new();
    for side in candidate_partitions(net, flows_mw, opts) {
        let cut = CutSet::from_partition(net, &side, flows_mw);
        if cut.branches.is_empty() || !(cut.utilization() > opts.utilization_threshold) {
            continue;
        }
        debug_assert!(disconnects(net, &cut));
        let key = cut.key();
        match best.get(&key) {
            Some(prev) if prev.aggregate_flow_mw >= cut.aggregate_flow_mw => {}
            _ => {
                best.insert(key, cut);
            }
        }
    }
    let mut cuts: Vec<CutSet> = best.into_values().collect();
    cuts.sort_by(|a, b| {
        b.transfer_margin_mw
            .total_cmp(&a.transfer_margin_mw)
            .then(b.utilization().total_cmp(&a.utilization()))
            .then(a.branches.cmp(&b.branches))
    });
    cuts
}

/// True when removing the cut's branches separates its two sides.
pub fn disconnects(net: &Network, cut: &CutSet) -> bool {
    let removed: BTreeSet<BranchId> = cut.branches.iter().copied().collect();
    let labels = net.islands_without(&removed);
    let side_a: BTreeSet<BusId> = cut.side_a.iter().copied().collect();
    !cut.side_a.is_empty()
        && !cut.side_b.is_empty()
        && net.buses.iter().zip(&labels).all(|(bus, &la)| {
            // no bus of side_b shares a component with any bus of side_a
            side_a.contains(&bus.id)
                || net
                    .buses
                    .iter()
                    .zip(&labels)
                    .filter(|(b, _)| side_a.contains(&b.id))
                    .all(|(_, &lb)| lb != la)
        })
}

/// Row coefficients of the signed aggregate flow across `cut` with respect
/// to the decision vector `[dp, shed]`.
pub fn cut_flow_coefficients(cut: &CutSet, sens: &SensitivitySet, net: &Network) -> Result<Vec<f64>, CutsetError> {
    let side_a: BTreeSet<BusId> = cut.side_a.iter().copied().collect();
    let mut row = vec![0.0; net.buses.len()];
    for id in &cut.branches {
        let u = net.branch_index(*id).ok_or(CutsetError::UnknownBranch(*id))?;
        let br = &net.branches[u];
        if !br.in_service {
            return Err(CutsetError::OutOfService(*id));
        }
        let sign = if side_a.contains(&br.from_bus) { 1.0 } else { -1.0 };
        for (i, r) in row.iter_mut().enumerate() {
            *r += sign * sens.ptdf[(u, i)];
        }
    }
    Ok(decision_row(net, &row))
}

/// Maps a per-bus sensitivity row onto the `[dp, shed]` decision vector.
pub(crate) fn decision_row(net: &Network, bus_row: &[f64]) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(net.generators.len() + net.loads.len());
    coeffs.extend(net.generators.iter().map(|g| bus_row[net.bus_index(g.bus).unwrap()]));
    // shedding raises net injection at the load bus
    coeffs.extend(net.loads.iter().map(|l| bus_row[net.bus_index(l.bus).unwrap()]));
    coeffs
}

/// Linear constraint forcing the cut's aggregate flow down by its margin:
/// `sum_u sign_u * dflow_u <= -margin`.
pub fn cutset_constraint(
    cut: &CutSet,
    sens: &SensitivitySet,
    net: &Network,
    contingency: Option<&str>,
) -> Result<LinearConstraint, CutsetError> {
    if sens.topology_hash != crate::sensitivity::topology_hash(net) {
        return Err(CutsetError::TopologyMismatch);
    }
    Ok(LinearConstraint {
        coeffs: cut_flow_coefficients(cut, sens, net)?,
        sense: Sense::Le,
        rhs: -cut.transfer_margin(),
        tag: ConstraintTag::Cutset,
        provenance: Provenance::new(contingency, format!("cut:{}", cut.key())),
    })
}
