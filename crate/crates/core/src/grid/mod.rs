//! Static grid model: buses, branches, generators and loads.
//!
//! Quantities are stored in MW at this boundary; the sensitivity and
//! dynamics code converts to per-unit on [`Network::mva_base`].

mod json;
mod matpower;

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{parse_dynamics_sidecar, parse_json_case, DynamicsSidecar, GeneratorDynamicsEntry, LoadShedCostEntry};
pub use matpower::parse_matpower_case;

pub type BusId = u32;
pub type BranchId = u32;
pub type GenId = u32;
pub type LoadId = u32;

/// Balance tolerance for the base case, in per-unit.
pub const BALANCE_TOL_PU: f64 = 1e-6;

/// Multiplier applied to the largest marginal generation cost when a load
/// carries no explicit shedding cost.
pub const DEFAULT_SHED_COST_FACTOR: f64 = 10.0;

/// Headroom above `l0` used when a load does not state `l_max_mw`.
pub const DEFAULT_LOAD_MAX_FACTOR: f64 = 1.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("schema violation at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("invariant violated at {path}: {msg}")]
    Invariant { path: String, msg: String },
    #[error("unknown branch id {0}")]
    UnknownBranch(BranchId),
    #[error("branch {0} is already out of service")]
    BranchOutOfService(BranchId),
}

fn invariant(path: impl Into<String>, msg: impl Into<String>) -> GridError {
    GridError::Invariant { path: path.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance, per-unit on the system base.
    pub reactance: f64,
    /// Symmetric thermal limit; the lower limit is its negation.
    pub flow_limit_mw: f64,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

/// Classical-model machine data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDynamics {
    /// Inertia constant in seconds on the machine base.
    pub inertia_h: f64,
    #[serde(default)]
    pub damping_d: f64,
    /// Transient reactance, per-unit on the machine base.
    pub xd_prime: f64,
    pub mva_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: GenId,
    pub bus: BusId,
    pub p0_mw: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    #[serde(default)]
    pub cost_a: f64,
    #[serde(default)]
    pub cost_b: f64,
    #[serde(default)]
    pub cost_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<GenDynamics>,
}

impl Generator {
    /// Quadratic cost `a + b p + c p^2` in $/hr.
    pub fn cost(&self, p_mw: f64) -> f64 {
        self.cost_a + self.cost_b * p_mw + self.cost_c * p_mw * p_mw
    }

    pub fn marginal_cost(&self, p_mw: f64) -> f64 {
        self.cost_b + 2.0 * self.cost_c * p_mw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: LoadId,
    pub bus: BusId,
    pub l0_mw: f64,
    pub l_min_mw: f64,
    pub l_max_mw: f64,
    /// Cost of shedding one MW for one hour.
    pub shed_cost: f64,
}

/// The static grid. Construct through [`Network::new`] or one of the parsers
/// so that the id lookup tables are populated and invariants checked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub mva_base: f64,
    #[serde(skip)]
    index: NetworkIndex,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
            && self.loads == other.loads
            && self.mva_base == other.mva_base
    }
}

#[derive(Debug, Clone, Default)]
struct NetworkIndex {
    bus: HashMap<BusId, usize>,
    branch: HashMap<BranchId, usize>,
    generator: HashMap<GenId, usize>,
    load: HashMap<LoadId, usize>,
}

/// Result of taking a set of branches out of service.
#[derive(Debug, Clone)]
pub struct Outage {
    pub network: Network,
    pub islanded: bool,
    /// Island label per bus, in bus order. Labels start at 0.
    pub island_of_bus: Vec<usize>,
}

impl Network {
    /// Builds a network and checks every invariant.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
        mva_base: f64,
    ) -> Result<Self, GridError> {
        let net = Self::assemble(buses, branches, generators, loads, mva_base)?;
        net.validate()?;
        Ok(net)
    }

    /// Builds lookup tables only. Structural checks (unique ids, dangling
    /// references) are still enforced since nothing works without them.
    pub(crate) fn assemble(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
        mva_base: f64,
    ) -> Result<Self, GridError> {
        let mut net = Network { buses, branches, generators, loads, mva_base, index: NetworkIndex::default() };
        net.reindex()?;
        Ok(net)
    }

    fn reindex(&mut self) -> Result<(), GridError> {
        let mut index = NetworkIndex::default();
        for (k, b) in self.buses.iter().enumerate() {
            if index.bus.insert(b.id, k).is_some() {
                return Err(invariant(format!("buses[{k}]"), format!("duplicate bus id {}", b.id)));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if index.branch.insert(br.id, k).is_some() {
                return Err(invariant(format!("branches[{k}]"), format!("duplicate branch id {}", br.id)));
            }
            for end in [br.from_bus, br.to_bus] {
                if !index.bus.contains_key(&end) {
                    return Err(invariant(
                        format!("branches[{k}]"),
                        format!("branch {} references unknown bus {end}", br.id),
                    ));
                }
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            if index.generator.insert(g.id, k).is_some() {
                return Err(invariant(format!("generators[{k}]"), format!("duplicate generator id {}", g.id)));
            }
            if !index.bus.contains_key(&g.bus) {
                return Err(invariant(
                    format!("generators[{k}]"),
                    format!("generator {} references unknown bus {}", g.id, g.bus),
                ));
            }
        }
        for (k, l) in self.loads.iter().enumerate() {
            if index.load.insert(l.id, k).is_some() {
                return Err(invariant(format!("loads[{k}]"), format!("duplicate load id {}", l.id)));
            }
            if !index.bus.contains_key(&l.bus) {
                return Err(invariant(
                    format!("loads[{k}]"),
                    format!("load {} references unknown bus {}", l.id, l.bus),
                ));
            }
        }
        self.index = index;
        Ok(())
    }

    /// Checks every documented invariant of the base case.
    pub fn validate(&self) -> Result<(), GridError> {
        self.validate_components()?;
        if !self.is_connected() {
            return Err(invariant("branches", "network is not connected with all in-service branches"));
        }
        let gen: f64 = self.generators.iter().map(|g| g.p0_mw).sum();
        let load: f64 = self.loads.iter().map(|l| l.l0_mw).sum();
        if ((gen - load) / self.mva_base).abs() > BALANCE_TOL_PU {
            return Err(invariant(
                "generators",
                format!("base case unbalanced: generation {gen} MW vs load {load} MW"),
            ));
        }
        Ok(())
    }

    /// Per-component invariants, without the system-wide connectivity and
    /// balance checks.
    pub fn validate_components(&self) -> Result<(), GridError> {
        if !(self.mva_base > 0.0) {
            return Err(invariant("mva_base", "must be positive"));
        }
        let refs = self.buses.iter().filter(|b| b.is_reference).count();
        match refs {
            0 => return Err(invariant("buses", "no reference bus")),
            1 => {}
            _ => return Err(invariant("buses", "multiple reference buses")),
        }
        for (k, br) in self.branches.iter().enumerate() {
            let path = format!("branches[{k}]");
            if br.from_bus == br.to_bus {
                return Err(invariant(path, format!("branch {} connects bus {} to itself", br.id, br.from_bus)));
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(invariant(path, format!("branch {} has non-positive reactance", br.id)));
            }
            if !(br.flow_limit_mw > 0.0) {
                return Err(invariant(path, format!("branch {} has non-positive flow limit", br.id)));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let path = format!("generators[{k}]");
            if !(g.p_min_mw <= g.p0_mw && g.p0_mw <= g.p_max_mw) {
                return Err(invariant(
                    path,
                    format!(
                        "generator {}: p0 {} outside [{}, {}]",
                        g.id, g.p0_mw, g.p_min_mw, g.p_max_mw
                    ),
                ));
            }
            if g.cost_c < 0.0 {
                return Err(invariant(path, format!("generator {}: negative quadratic cost", g.id)));
            }
            if let Some(d) = &g.dynamics {
                if !(d.inertia_h > 0.0) {
                    return Err(invariant(path, format!("generator {}: inertia_h must be positive", g.id)));
                }
                if !(d.xd_prime > 0.0) {
                    return Err(invariant(path, format!("generator {}: xd_prime must be positive", g.id)));
                }
                if !(d.mva_base > 0.0) {
                    return Err(invariant(path, format!("generator {}: mva_base must be positive", g.id)));
                }
            }
        }
        let max_marginal = self.max_marginal_cost();
        for (k, l) in self.loads.iter().enumerate() {
            let path = format!("loads[{k}]");
            if !(0.0 <= l.l_min_mw && l.l_min_mw <= l.l0_mw && l.l0_mw <= l.l_max_mw) {
                return Err(invariant(
                    path,
                    format!("load {}: bounds violate 0 <= l_min <= l0 <= l_max", l.id),
                ));
            }
            if !(l.shed_cost > max_marginal) {
                return Err(invariant(
                    path,
                    format!(
                        "load {}: shed_cost {} must exceed the largest marginal generation cost {}",
                        l.id, l.shed_cost, max_marginal
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Largest generator marginal cost evaluated at `p_max`.
    pub fn max_marginal_cost(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.marginal_cost(g.p_max_mw))
            .fold(0.0_f64, f64::max)
    }

    pub fn default_shed_cost(&self) -> f64 {
        let m = self.max_marginal_cost();
        if m > 0.0 {
            DEFAULT_SHED_COST_FACTOR * m
        } else {
            // all-zero cost data still needs a positive disincentive
            1.0
        }
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.bus.get(&id).copied()
    }

    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.index.branch.get(&id).copied()
    }

    pub fn generator_index(&self, id: GenId) -> Option<usize> {
        self.index.generator.get(&id).copied()
    }

    pub fn load_index(&self, id: LoadId) -> Option<usize> {
        self.index.load.get(&id).copied()
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branch_index(id).map(|k| &self.branches[k])
    }

    /// Finds the first branch joining two buses, in either orientation.
    pub fn find_branch(&self, a: BusId, b: BusId) -> Option<&Branch> {
        self.branches
            .iter()
            .find(|br| (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a))
    }

    pub fn reference_bus(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.is_reference)
            .map(|b| b.id)
            .expect("validated network has a reference bus")
    }

    /// Net injection per bus in MW from `p0` and `l0`.
    pub fn base_injections_mw(&self) -> Vec<f64> {
        let p: Vec<f64> = self.generators.iter().map(|g| g.p0_mw).collect();
        let l: Vec<f64> = self.loads.iter().map(|l| l.l0_mw).collect();
        self.injections_mw(&p, &l)
    }

    /// Net injection per bus for the given generator outputs and load levels.
    pub fn injections_mw(&self, gen_mw: &[f64], load_mw: &[f64]) -> Vec<f64> {
        let mut inj = vec![0.0; self.buses.len()];
        for (g, p) in self.generators.iter().zip(gen_mw) {
            inj[self.index.bus[&g.bus]] += p;
        }
        for (l, d) in self.loads.iter().zip(load_mw) {
            inj[self.index.bus[&l.bus]] -= d;
        }
        inj
    }

    /// Connected-component label per bus using in-service branches.
    pub fn islands(&self) -> Vec<usize> {
        self.islands_without(&BTreeSet::new())
    }

    /// Component labels with the listed branches additionally removed.
    pub fn islands_without(&self, removed: &BTreeSet<BranchId>) -> Vec<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service && !removed.contains(&b.id)) {
            let (f, t) = (self.index.bus[&br.from_bus], self.index.bus[&br.to_bus]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.islands().iter().all(|&c| c == 0)
    }

    /// Returns a copy with the given branches out of service. The input is
    /// left untouched.
    pub fn apply_outage(&self, branch_ids: &BTreeSet<BranchId>) -> Result<Outage, GridError> {
        let mut network = self.clone();
        for &id in branch_ids {
            let k = self.branch_index(id).ok_or(GridError::UnknownBranch(id))?;
            if !network.branches[k].in_service {
                return Err(GridError::BranchOutOfService(id));
            }
            network.branches[k].in_service = false;
        }
        let island_of_bus = network.islands();
        let islanded = island_of_bus.iter().any(|&c| c != 0);
        Ok(Outage { network, islanded, island_of_bus })
    }

    /// Same network with a new operating point. Lengths must match the
    /// generator and load lists.
    pub fn with_operating_point(&self, gen_mw: &[f64], load_mw: &[f64]) -> Network {
        assert_eq!(gen_mw.len(), self.generators.len());
        assert_eq!(load_mw.len(), self.loads.len());
        let mut net = self.clone();
        for (g, &p) in net.generators.iter_mut().zip(gen_mw) {
            g.p0_mw = p;
        }
        for (l, &d) in net.loads.iter_mut().zip(load_mw) {
            l.l0_mw = d;
        }
        net
    }

    pub fn in_service_branch_ids(&self) -> BTreeSet<BranchId> {
        self.branches.iter().filter(|b| b.in_service).map(|b| b.id).collect()
    }

    /// Canonical JSON text: fields in declaration order, pretty-printed.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn has_dynamics(&self) -> bool {
        self.generators.iter().all(|g| g.dynamics.is_some())
    }

    /// Merges dynamics and shedding costs from a sidecar by id.
    pub fn merge_sidecar(&mut self, sidecar: &DynamicsSidecar) -> Result<(), GridError> {
        for (k, entry) in sidecar.generator_dynamics.iter().enumerate() {
            let idx = self.generator_index(entry.id).ok_or_else(|| GridError::Schema {
                path: format!("generator_dynamics[{k}].id"),
                msg: format!("unknown generator id {}", entry.id),
            })?;
            self.generators[idx].dynamics = Some(GenDynamics {
                inertia_h: entry.inertia_h,
                damping_d: entry.damping_d,
                xd_prime: entry.xd_prime,
                mva_base: entry.mva_base,
            });
        }
        for (k, entry) in sidecar.load_shed_costs.iter().enumerate() {
            let idx = self.load_index(entry.id).ok_or_else(|| GridError::Schema {
                path: format!("load_shed_costs[{k}].id"),
                msg: format!("unknown load id {}", entry.id),
            })?;
            self.loads[idx].shed_cost = entry.shed_cost;
        }
        self.validate_components()
    }
}
