//! Classical multi-machine model: constant EMF behind transient reactance,
//! constant-admittance loads, network reduced to the internal machine nodes.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Complex, DMatrix, DVector};

use super::{DynamicsError, TdsOptions};
use crate::grid::{BranchId, GenId, Network};
use crate::sensitivity::solve_dc_power_flow;

pub type C64 = Complex<f64>;

/// Network topology at one instant of a switching sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetworkState {
    pub tripped: BTreeSet<BranchId>,
    /// Active faults as (branch, position bits) to stay hashable.
    pub faults: BTreeMap<BranchId, u64>,
}

impl NetworkState {
    pub fn fault(&mut self, branch: BranchId, pos: f64) {
        self.faults.insert(branch, pos.to_bits());
    }

    pub fn clear(&mut self, branch: BranchId) {
        self.faults.remove(&branch);
    }

    pub fn trip(&mut self, branch: BranchId) {
        self.faults.remove(&branch);
        self.tripped.insert(branch);
    }
}

/// Initialized classical model of a network at an operating point.
#[derive(Debug, Clone)]
pub struct SwingSystem {
    net: Network,
    pub machine_ids: Vec<GenId>,
    machine_bus: Vec<usize>,
    /// Internal EMF magnitudes, per-unit.
    pub emf: Vec<f64>,
    /// Initial rotor angles, radians.
    pub delta0: Vec<f64>,
    /// Mechanical power, per-unit on the system base.
    pub pm: Vec<f64>,
    /// Inertia constants on the system base, seconds.
    pub h: Vec<f64>,
    /// Damping on the system base, per-unit power per per-unit speed.
    pub d: Vec<f64>,
    /// Transient reactances on the system base.
    pub xd: Vec<f64>,
    pub omega_s: f64,
    fault_admittance: f64,
    loads_as_admittance: bool,
}

impl SwingSystem {
    /// Initializes machine EMFs and angles from a DC power flow at the
    /// network's operating point, then refines the angles so the reduced
    /// network delivers each machine's dispatch exactly (the machine at the
    /// reference bus absorbs losses). Mechanical power is set to the
    /// resulting electrical output.
    pub fn new(net: &Network, opts: &TdsOptions) -> Result<Self, DynamicsError> {
        Self::build(net, opts, true)
    }

    pub(crate) fn build(net: &Network, opts: &TdsOptions, loads_as_admittance: bool) -> Result<Self, DynamicsError> {
        let base = net.mva_base;
        let mut machine_ids = Vec::new();
        let mut machine_bus = Vec::new();
        let mut h = Vec::new();
        let mut d = Vec::new();
        let mut xd = Vec::new();
        for g in &net.generators {
            let dyn_data = g.dynamics.as_ref().ok_or(DynamicsError::MissingDynamics(g.id))?;
            machine_ids.push(g.id);
            machine_bus.push(net.bus_index(g.bus).unwrap());
            let scale = dyn_data.mva_base / base;
            h.push(dyn_data.inertia_h * scale);
            d.push(dyn_data.damping_d * scale);
            xd.push(dyn_data.xd_prime / scale);
        }
        if machine_ids.is_empty() {
            return Err(DynamicsError::TooFewMachines(0));
        }
        let flow = solve_dc_power_flow(net, &net.base_injections_mw())
            .map_err(|e| DynamicsError::Initialization(e.to_string()))?;
        let p: Vec<f64> = net.generators.iter().map(|g| g.p0_mw / base).collect();
        let mut emf = Vec::with_capacity(p.len());
        let mut delta0 = Vec::with_capacity(p.len());
        for (k, &pk) in p.iter().enumerate() {
            // unit terminal voltage, zero reactive output
            let theta = flow.angles[machine_bus[k]];
            let e = C64::new(1.0, xd[k] * pk);
            emf.push(e.norm());
            delta0.push(theta + e.arg());
        }
        let mut sys = SwingSystem {
            net: net.clone(),
            machine_ids,
            machine_bus,
            emf,
            delta0,
            pm: vec![0.0; p.len()],
            h,
            d,
            xd,
            omega_s: 2.0 * std::f64::consts::PI * opts.frequency_hz,
            fault_admittance: opts.fault_admittance,
            loads_as_admittance,
        };
        let y = sys.reduced_admittance(&NetworkState::default())?;
        let slack = net
            .generators
            .iter()
            .position(|g| g.bus == net.reference_bus())
            .unwrap_or_else(|| (0..p.len()).max_by(|&a, &b| sys.h[a].total_cmp(&sys.h[b])).unwrap());
        if let Some(delta) = sys.refine_angles(&y, &p, slack) {
            sys.delta0 = delta;
        }
        sys.pm = sys.electrical_power(&y, &sys.delta0);
        Ok(sys)
    }

    /// Newton iterations on the reduced network so non-slack machines deliver
    /// `p`. Returns `None` if the iteration fails to converge.
    fn refine_angles(&self, y: &DMatrix<C64>, p: &[f64], slack: usize) -> Option<Vec<f64>> {
        let n = p.len();
        if n < 2 {
            return None;
        }
        let idx: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
        let mut delta = self.delta0.clone();
        for _ in 0..30 {
            let pe = self.electrical_power(y, &delta);
            let mismatch: Vec<f64> = idx.iter().map(|&i| p[i] - pe[i]).collect();
            let worst = mismatch.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if worst < 1e-12 {
                return Some(delta);
            }
            let mut jac = DMatrix::zeros(idx.len(), idx.len());
            for (a, &i) in idx.iter().enumerate() {
                for (b, &k) in idx.iter().enumerate() {
                    jac[(a, b)] = self.dpe_ddelta(y, &delta, i, k);
                }
            }
            let step = jac.lu().solve(&DVector::from_vec(mismatch))?;
            for (a, &i) in idx.iter().enumerate() {
                delta[i] += step[a];
            }
            if delta.iter().any(|v| !v.is_finite()) {
                return None;
            }
        }
        let pe = self.electrical_power(y, &delta);
        idx.iter().all(|&i| (p[i] - pe[i]).abs() < 1e-9).then_some(delta)
    }

    fn dpe_ddelta(&self, y: &DMatrix<C64>, delta: &[f64], i: usize, k: usize) -> f64 {
        let e = &self.emf;
        if i == k {
            let mut s = 0.0;
            for j in 0..delta.len() {
                if j != i {
                    let a = delta[i] - delta[j];
                    s += e[i] * e[j] * (-y[(i, j)].re * a.sin() + y[(i, j)].im * a.cos());
                }
            }
            s
        } else {
            let a = delta[i] - delta[k];
            e[i] * e[k] * (y[(i, k)].re * a.sin() - y[(i, k)].im * a.cos())
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn machines(&self) -> usize {
        self.machine_ids.len()
    }

    /// Inertia coefficients `M_i = 2 H_i S_i / omega_s` in MW s^2/rad.
    pub fn inertia_coefficients(&self) -> Vec<f64> {
        self.h.iter().map(|h| 2.0 * h * self.net.mva_base / self.omega_s).collect()
    }

    /// Electrical output per machine, per-unit, for the reduced admittance.
    pub fn electrical_power(&self, y: &DMatrix<C64>, delta: &[f64]) -> Vec<f64> {
        let n = delta.len();
        let e = &self.emf;
        (0..n)
            .map(|i| {
                let mut p = e[i] * e[i] * y[(i, i)].re;
                for k in 0..n {
                    if k != i {
                        let a = delta[i] - delta[k];
                        p += e[i] * e[k] * (y[(i, k)].re * a.cos() + y[(i, k)].im * a.sin());
                    }
                }
                p
            })
            .collect()
    }

    /// Admittance matrix reduced to the machine internal nodes for the given
    /// switching state.
    pub fn reduced_admittance(&self, state: &NetworkState) -> Result<DMatrix<C64>, DynamicsError> {
        let net = &self.net;
        let nb = net.buses.len();
        let ng = self.machine_ids.len();
        let nf = state.faults.len();
        // node layout: machines, buses, fault points
        let size = ng + nb + nf;
        let mut y = DMatrix::<C64>::zeros(size, size);
        let add = |y: &mut DMatrix<C64>, a: usize, b: usize, adm: C64| {
            y[(a, a)] += adm;
            y[(b, b)] += adm;
            y[(a, b)] -= adm;
            y[(b, a)] -= adm;
        };
        let fault_nodes: BTreeMap<BranchId, (usize, f64)> = state
            .faults
            .iter()
            .enumerate()
            .map(|(k, (b, bits))| (*b, (ng + nb + k, f64::from_bits(*bits))))
            .collect();
        let shunt = C64::new(0.0, -self.fault_admittance);
        for br in &net.branches {
            if !br.in_service || state.tripped.contains(&br.id) {
                continue;
            }
            let f = ng + net.bus_index(br.from_bus).unwrap();
            let t = ng + net.bus_index(br.to_bus).unwrap();
            match fault_nodes.get(&br.id) {
                None => add(&mut y, f, t, C64::new(0.0, -1.0 / br.reactance)),
                Some(&(node, pos)) => {
                    if pos <= 0.0 {
                        y[(f, f)] += shunt;
                        add(&mut y, f, t, C64::new(0.0, -1.0 / br.reactance));
                    } else if pos >= 1.0 {
                        y[(t, t)] += shunt;
                        add(&mut y, f, t, C64::new(0.0, -1.0 / br.reactance));
                    } else {
                        add(&mut y, f, node, C64::new(0.0, -1.0 / (pos * br.reactance)));
                        add(&mut y, node, t, C64::new(0.0, -1.0 / ((1.0 - pos) * br.reactance)));
                    }
                    y[(node, node)] += shunt;
                }
            }
        }
        // unused fault nodes (endpoint faults) keep a unit self-admittance so
        // the elimination stays regular
        for &(node, pos) in fault_nodes.values() {
            if pos <= 0.0 || pos >= 1.0 {
                y[(node, node)] = C64::new(1.0, 0.0);
            }
        }
        for (k, &bus) in self.machine_bus.iter().enumerate() {
            add(&mut y, k, ng + bus, C64::new(0.0, -1.0 / self.xd[k]));
        }
        if self.loads_as_admittance {
            for l in &net.loads {
                // constant admittance at unit voltage
                let bus = ng + net.bus_index(l.bus).unwrap();
                y[(bus, bus)] += C64::new(l.l0_mw / net.mva_base, 0.0);
            }
        }
        kron(&y, ng)
    }
}

/// Eliminates every node after the first `keep`.
fn kron(y: &DMatrix<C64>, keep: usize) -> Result<DMatrix<C64>, DynamicsError> {
    let n = y.nrows();
    if n == keep {
        return Ok(y.clone());
    }
    let ygg = y.view((0, 0), (keep, keep));
    let ygb = y.view((0, keep), (keep, n - keep));
    let ybg = y.view((keep, 0), (n - keep, keep));
    let ybb = y.view((keep, keep), (n - keep, n - keep)).clone_owned();
    let lu = ybb.lu();
    let x = lu.solve(&ybg.clone_owned()).ok_or(DynamicsError::SingularNetwork)?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(DynamicsError::SingularNetwork);
    }
    Ok(ygg.clone_owned() - ygb * x)
}

/// Pre-disturbance admittance reduced to the generator internal nodes.
///
/// With `loads_as_admittance` false the loads are left out of the network.
pub fn kron_reduce(net: &Network, loads_as_admittance: bool) -> Result<DMatrix<C64>, DynamicsError> {
    let sys = SwingSystem::build(net, &TdsOptions::default(), loads_as_admittance)?;
    sys.reduced_admittance(&NetworkState::default())
}
