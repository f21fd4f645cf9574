//! DC power flow and linear sensitivity factors (PTDF, LODF).

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{BranchId, BusId, Network, BALANCE_TOL_PU};

/// `|1 - ptdf_line[a][a]|` below this marks branch `a` as radial.
pub const BRIDGE_DENOMINATOR_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("network is islanded; susceptance matrix is singular")]
    Islanded,
    #[error("injections are unbalanced by {0} MW")]
    Unbalanced(f64),
    #[error("unknown bus id {0}")]
    UnknownBus(BusId),
    #[error("expected {expected} injections, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Digest of the in-service branch set, including the electrical data that
/// the factorization depends on.
pub fn topology_hash(net: &Network) -> String {
    let mut h = Sha256::new();
    h.update(net.mva_base.to_le_bytes());
    for bus in &net.buses {
        h.update(bus.id.to_le_bytes());
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        h.update(br.id.to_le_bytes());
        h.update(br.from_bus.to_le_bytes());
        h.update(br.to_bus.to_le_bytes());
        h.update(br.reactance.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Inverse of the reduced susceptance matrix, padded with a zero row and
/// column at the reference bus.
#[derive(Debug, Clone)]
struct ReducedInverse {
    reference: usize,
    /// buses x buses, per-unit reactance units
    x: DMatrix<f64>,
}

impl ReducedInverse {
    fn new(net: &Network, reference: BusId) -> Result<Self, SensitivityError> {
        let r = net.bus_index(reference).ok_or(SensitivityError::UnknownBus(reference))?;
        if !net.is_connected() {
            return Err(SensitivityError::Islanded);
        }
        let n = net.buses.len();
        let mut b = DMatrix::<f64>::zeros(n, n);
        for br in net.branches.iter().filter(|b| b.in_service) {
            let f = net.bus_index(br.from_bus).unwrap();
            let t = net.bus_index(br.to_bus).unwrap();
            let y = 1.0 / br.reactance;
            b[(f, f)] += y;
            b[(t, t)] += y;
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
        let keep: Vec<usize> = (0..n).filter(|&k| k != r).collect();
        let reduced = b.select_rows(&keep).select_columns(&keep);
        let inv = reduced.lu().try_inverse().ok_or(SensitivityError::Islanded)?;
        let mut x = DMatrix::zeros(n, n);
        for (a, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                x[(i, j)] = inv[(a, c)];
            }
        }
        Ok(Self { reference: r, x })
    }

    fn angles(&self, injections_pu: &[f64]) -> DVector<f64> {
        let p = DVector::from_column_slice(injections_pu);
        &self.x * p
    }
}

/// Solution of a DC power flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcFlow {
    /// Bus angles in radians, reference bus at zero.
    pub angles: Vec<f64>,
    /// Branch flows in MW, positive from `from_bus` to `to_bus`.
    pub flows_mw: Vec<f64>,
}

/// Solves `B theta = P` with the reference angle fixed at zero.
pub fn solve_dc_power_flow(net: &Network, injections_mw: &[f64]) -> Result<DcFlow, SensitivityError> {
    if injections_mw.len() != net.buses.len() {
        return Err(SensitivityError::Dimension { expected: net.buses.len(), got: injections_mw.len() });
    }
    let total: f64 = injections_mw.iter().sum();
    if (total / net.mva_base).abs() > BALANCE_TOL_PU {
        return Err(SensitivityError::Unbalanced(total));
    }
    let inv = ReducedInverse::new(net, net.reference_bus())?;
    Ok(flow_from_inverse(net, &inv, injections_mw))
}

fn flow_from_inverse(net: &Network, inv: &ReducedInverse, injections_mw: &[f64]) -> DcFlow {
    let p: Vec<f64> = injections_mw.iter().map(|v| v / net.mva_base).collect();
    let theta = inv.angles(&p);
    let flows_mw = net
        .branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return 0.0;
            }
            let f = net.bus_index(br.from_bus).unwrap();
            let t = net.bus_index(br.to_bus).unwrap();
            (theta[f] - theta[t]) / br.reactance * net.mva_base
        })
        .collect();
    DcFlow { angles: theta.iter().copied().collect(), flows_mw }
}

/// PTDF matrix `[branches x buses]` for injections withdrawn at `reference`.
pub fn compute_ptdf(net: &Network, reference: BusId) -> Result<DMatrix<f64>, SensitivityError> {
    let inv = ReducedInverse::new(net, reference)?;
    Ok(ptdf_from_inverse(net, &inv))
}

fn ptdf_from_inverse(net: &Network, inv: &ReducedInverse) -> DMatrix<f64> {
    let n = net.buses.len();
    let mut ptdf = DMatrix::zeros(net.branches.len(), n);
    for (u, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        for i in 0..n {
            ptdf[(u, i)] = (inv.x[(f, i)] - inv.x[(t, i)]) / br.reactance;
        }
    }
    debug_assert!(ptdf.column(inv.reference).iter().all(|v| *v == 0.0));
    ptdf
}

/// In-service branches whose removal islands the network.
pub fn find_bridges(net: &Network) -> Vec<bool> {
    net.branches
        .iter()
        .map(|br| {
            br.in_service && net.islands_without(&BTreeSet::from([br.id])).iter().any(|&c| c != 0)
        })
        .collect()
}

/// Line outage distribution factors from a PTDF matrix.
///
/// Returns the matrix and the per-branch radial flag. Columns of radial or
/// out-of-service branches are NaN except for the `-1` diagonal.
pub fn compute_lodf(ptdf: &DMatrix<f64>, net: &Network) -> (DMatrix<f64>, Vec<bool>) {
    let m = net.branches.len();
    let mut radial = find_bridges(net);
    // branch-to-branch transfer factors: injection at from, withdrawal at to
    let mut line = DMatrix::zeros(m, m);
    for (a, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        for u in 0..m {
            line[(u, a)] = ptdf[(u, f)] - ptdf[(u, t)];
        }
    }
    let mut lodf = DMatrix::from_element(m, m, f64::NAN);
    for (a, br) in net.branches.iter().enumerate() {
        lodf[(a, a)] = -1.0;
        if !br.in_service {
            continue;
        }
        let denom = 1.0 - line[(a, a)];
        if denom.abs() < BRIDGE_DENOMINATOR_TOL {
            radial[a] = true;
        }
        if radial[a] {
            continue;
        }
        for u in 0..m {
            if u != a {
                lodf[(u, a)] = if net.branches[u].in_service { line[(u, a)] / denom } else { 0.0 };
            }
        }
    }
    (lodf, radial)
}

/// PTDF, LODF and base-case flows for one topology.
#[derive(Debug, Clone)]
pub struct SensitivitySet {
    pub ptdf: DMatrix<f64>,
    pub lodf: DMatrix<f64>,
    /// True where the branch outage would island the system.
    pub radial: Vec<bool>,
    pub base_flows_mw: Vec<f64>,
    pub reference_bus: BusId,
    pub topology_hash: String,
}

impl SensitivitySet {
    /// Sensitivities at the network's reference bus, with base flows from
    /// its `p0`/`l0` operating point.
    pub fn compute(net: &Network) -> Result<Self, SensitivityError> {
        let reference = net.reference_bus();
        let inv = ReducedInverse::new(net, reference)?;
        let ptdf = ptdf_from_inverse(net, &inv);
        let (lodf, radial) = compute_lodf(&ptdf, net);
        let base_flows_mw = flow_from_inverse(net, &inv, &net.base_injections_mw()).flows_mw;
        Ok(Self { ptdf, lodf, radial, base_flows_mw, reference_bus: reference, topology_hash: topology_hash(net) })
    }

    /// LODF entry, `None` when the outage of `a` islands the network or `a`
    /// is out of service.
    pub fn lodf_factor(&self, u: usize, a: usize) -> Option<f64> {
        let v = self.lodf[(u, a)];
        (!self.radial[a] && v.is_finite()).then_some(v)
    }

    /// Flows for an arbitrary balanced injection vector, via the PTDF.
    pub fn flows_for(&self, injections_mw: &[f64]) -> Vec<f64> {
        let p = DVector::from_column_slice(injections_mw);
        (&self.ptdf * p).iter().copied().collect()
    }

    /// Recomputes base flows for a new operating point on the same topology.
    pub fn with_operating_point(&self, net: &Network) -> Self {
        debug_assert_eq!(self.topology_hash, topology_hash(net));
        let mut s = self.clone();
        s.base_flows_mw = self.flows_for(&net.base_injections_mw());
        s
    }

    pub fn branch_ids<'a>(&self, net: &'a Network) -> impl Iterator<Item = BranchId> + 'a {
        net.branches.iter().map(|b| b.id)
    }
}

/// Sensitivities keyed by topology digest, so repeated redispatch rounds on
/// an unchanged topology skip the factorization.
#[derive(Debug, Default)]
pub struct SensitivityCache {
    entries: Mutex<HashMap<String, Arc<SensitivitySet>>>,
}

impl SensitivityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, net: &Network) -> Result<SensitivitySet, SensitivityError> {
        let key = topology_hash(net);
        let cached = self.entries.lock().unwrap().get(&key).cloned();
        match cached {
            Some(s) if s.reference_bus == net.reference_bus() => Ok(s.with_operating_point(net)),
            _ => {
                let s = SensitivitySet::compute(net)?;
                self.entries.lock().unwrap().insert(key, Arc::new(s.clone()));
                Ok(s)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, Generator, Load};

    fn bus(id: u32, r: bool) -> Bus {
        Bus { id, is_reference: r }
    }

    fn line(id: u32, f: u32, t: u32, x: f64) -> Branch {
        Branch { id, from_bus: f, to_bus: t, reactance: x, flow_limit_mw: 500.0, in_service: true }
    }

    fn gen(id: u32, bus: u32, p: f64) -> Generator {
        Generator { id, bus, p0_mw: p, p_min_mw: 0.0, p_max_mw: 500.0, cost_a: 0.0, cost_b: 10.0, cost_c: 0.0, dynamics: None }
    }

    fn load(id: u32, bus: u32, l: f64) -> Load {
        Load { id, bus, l0_mw: l, l_min_mw: 0.0, l_max_mw: l, shed_cost: 1e4 }
    }

    fn two_bus() -> Network {
        Network::new(
            vec![bus(1, false), bus(2, true)],
            vec![line(1, 1, 2, 0.1)],
            vec![gen(1, 1, 100.0)],
            vec![load(2, 2, 100.0)],
            100.0,
        )
        .unwrap()
    }

    fn ring3() -> Network {
        Network::new(
            vec![bus(1, false), bus(2, false), bus(3, true)],
            vec![line(1, 1, 2, 0.1), line(2, 2, 3, 0.1), line(3, 1, 3, 0.1)],
            vec![gen(1, 1, 90.0)],
            vec![load(2, 2, 90.0)],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_single_path() {
        let net = two_bus();
        let sol = solve_dc_power_flow(&net, &[100.0, -100.0]).unwrap();
        assert!((sol.flows_mw[0] - 100.0).abs() < 1e-9);
        assert_eq!(sol.angles[1], 0.0);
        let ptdf = compute_ptdf(&net, 2).unwrap();
        assert!((ptdf[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(ptdf[(0, 1)], 0.0);
    }

    #[test]
    fn ring_splits_two_to_one() {
        // direct path x vs. two-branch path 2x: 2/3 direct, 1/3 around
        let net = ring3();
        let sol = solve_dc_power_flow(&net, &[90.0, -90.0, 0.0]).unwrap();
        assert!((sol.flows_mw[0] - 60.0).abs() < 1e-9);
        assert!((sol.flows_mw[2] - 30.0).abs() < 1e-9);
        assert!((sol.flows_mw[1] + 30.0).abs() < 1e-9);
    }

    #[test]
    fn ring_ptdf_hand_solved() {
        // ref 3, inject at 1: direct 1-3 takes 2/3, path 1-2-3 takes 1/3
        let ptdf = compute_ptdf(&ring3(), 3).unwrap();
        assert!((ptdf[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        assert!(ptdf.column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_injection_zero_flow() {
        let sol = solve_dc_power_flow(&ring3(), &[0.0; 3]).unwrap();
        assert!(sol.flows_mw.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn rejects_unbalanced_and_islanded() {
        let net = ring3();
        assert!(matches!(solve_dc_power_flow(&net, &[10.0, 0.0, 0.0]), Err(SensitivityError::Unbalanced(_))));
        let out = net.apply_outage(&BTreeSet::from([1, 2])).unwrap().network;
        assert_eq!(solve_dc_power_flow(&out, &[0.0; 3]).unwrap_err(), SensitivityError::Islanded);
        assert_eq!(compute_ptdf(&out, 3).unwrap_err(), SensitivityError::Islanded);
    }

    #[test]
    fn parallel_pair_lodf_is_one() {
        let net = Network::new(
            vec![bus(1, false), bus(2, true)],
            vec![line(1, 1, 2, 0.2), line(2, 1, 2, 0.2)],
            vec![gen(1, 1, 50.0)],
            vec![load(2, 2, 50.0)],
            100.0,
        )
        .unwrap();
        let s = SensitivitySet::compute(&net).unwrap();
        assert!((s.lodf[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((s.lodf[(1, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(s.lodf[(0, 0)], -1.0);
    }

    #[test]
    fn radial_branch_flagged() {
        let s = SensitivitySet::compute(&two_bus()).unwrap();
        assert!(s.radial[0]);
        assert_eq!(s.lodf_factor(0, 0), None);
        assert_eq!(s.lodf[(0, 0)], -1.0);
    }

    #[test]
    fn cache_reuses_factorization() {
        let net = ring3();
        let cache = SensitivityCache::new();
        let a = cache.get(&net).unwrap();
        let shifted = net.with_operating_point(&[45.0], &[45.0]);
        let b = cache.get(&shifted).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(a.topology_hash, b.topology_hash);
        assert!((b.base_flows_mw[0] - 30.0).abs() < 1e-9);
        let out = net.apply_outage(&BTreeSet::from([3])).unwrap().network;
        cache.get(&out).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
