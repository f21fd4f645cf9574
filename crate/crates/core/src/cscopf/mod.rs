//! Preventive redispatch: the convex QP over generation changes and load
//! shedding, its solver, and the real-time verification loop.

mod qp;
mod realtime;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintTag, LinearConstraint, Provenance, Sense};
use crate::cutset::decision_row;
use crate::grid::{BranchId, GenId, LoadId, Network};
use crate::sensitivity::SensitivitySet;

pub use qp::{solve_dense, DenseQp, KktResiduals, QpResult, QpStatus, SolverOptions};
pub use realtime::{
    run_cscopf, verify, Contingency, IterationReport, Mode, RedispatchSolution, RunOptions, SolutionStatus, Verification,
};

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("stability correction {0} MW given without critical machines")]
    StabilityWithoutMachines(f64),
    #[error("unknown generator {0} in the critical set")]
    UnknownGenerator(GenId),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("outage of branch {0} islands the network")]
    IslandingOutage(BranchId),
    #[error("sensitivities do not match the network topology")]
    TopologyMismatch,
    #[error("constraint has {got} coefficients, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("mode {0} needs a trained TSCP model")]
    MissingModel(&'static str),
    #[error("TSCP model loads do not match the network")]
    ModelMismatch,
    #[error("economic dispatch is infeasible")]
    DispatchInfeasible,
    #[error(transparent)]
    Sensitivity(#[from] crate::sensitivity::SensitivityError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Cutset(#[from] crate::cutset::CutsetError),
    #[error(transparent)]
    Tscp(#[from] crate::tscp::TscpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// Let loads rise above `l0` (negative shedding) within `l_max`.
    pub allow_load_increase: bool,
    /// Branches monitored in the outage rows; all in-service when `None`.
    pub monitored: Option<Vec<BranchId>>,
    /// Skip outage rows for bridges instead of failing.
    pub allow_islanding: bool,
    pub contingency_id: Option<String>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { allow_load_increase: false, monitored: None, allow_islanding: true, contingency_id: None }
    }
}

/// `sum c x^2 + sum d x` over `x = [dp, shed]` subject to bounds and rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProgram {
    pub gen_ids: Vec<GenId>,
    pub load_ids: Vec<LoadId>,
    /// `c_i` for each `dp_i`, zero for shedding.
    pub quad: Vec<f64>,
    /// `b_i + 2 c_i p0_i` for `dp_i`, shedding cost for each load.
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    /// `(monitored, outaged)` pairs left out because the outage is a bridge.
    pub skipped_outage_rows: Vec<(BranchId, BranchId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt: KktResiduals,
    /// Constraints supporting an infeasibility certificate.
    pub certificate: Vec<(ConstraintTag, Provenance)>,
}

impl QuadraticProgram {
    pub fn n_vars(&self) -> usize {
        self.quad.len()
    }

    pub fn n_gen(&self) -> usize {
        self.gen_ids.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, v)| self.quad[j] * v * v + self.linear[j] * v).sum()
    }

    pub fn count(&self, tag: ConstraintTag) -> usize {
        self.constraints.iter().filter(|c| c.tag == tag).count()
    }

    pub fn push(&mut self, c: LinearConstraint) -> Result<(), OpfError> {
        if c.coeffs.len() != self.n_vars() {
            return Err(OpfError::Dimension { expected: self.n_vars(), got: c.coeffs.len() });
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Rows first, then one identity row per variable.
    pub fn to_dense(&self) -> DenseQp {
        let n = self.n_vars();
        let m = self.constraints.len() + n;
        let mut a = DMatrix::zeros(m, n);
        let mut l = Vec::with_capacity(m);
        let mut u = Vec::with_capacity(m);
        for (i, c) in self.constraints.iter().enumerate() {
            for j in 0..n {
                a[(i, j)] = c.coeffs[j];
            }
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            l.push(lo);
            u.push(hi);
        }
        for j in 0..n {
            a[(self.constraints.len() + j, j)] = 1.0;
            l.push(self.lower[j]);
            u.push(self.upper[j]);
        }
        DenseQp { p: self.quad.iter().map(|c| 2.0 * c).collect(), q: self.linear.clone(), a, l, u }
    }

    pub fn solve(&self, opts: &SolverOptions) -> QpSolution {
        let dense = self.to_dense();
        let r = solve_dense(&dense, opts);
        let nc = self.constraints.len();
        let certificate = r
            .certificate_rows
            .iter()
            .map(|&i| {
                if i < nc {
                    (self.constraints[i].tag, self.constraints[i].provenance.clone())
                } else {
                    let j = i - nc;
                    let name = if j < self.n_gen() {
                        format!("dp:{}", self.gen_ids[j])
                    } else {
                        format!("shed:{}", self.load_ids[j - self.n_gen()])
                    };
                    (ConstraintTag::VariableLimit, Provenance::new(None, name))
                }
            })
            .collect();
        QpSolution { objective: self.objective(&r.x), x: r.x, status: r.status, iterations: r.iterations, kkt: r.kkt, certificate }
    }

    /// Largest violation of any row or bound by `x`, re-evaluated from the
    /// constraint data.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        (0..self.n_vars()).fold(rows, |m, j| m.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]))
    }
}

pub fn solve_qp(qp: &QuadraticProgram, tol: f64) -> QpSolution {
    qp.solve(&SolverOptions { tol, ..SolverOptions::default() })
}

/// Change of the stability row: the critical machines must give up
/// `tscf_mw` in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRequirement {
    pub tscf_mw: f64,
    pub critical_machines: Vec<GenId>,
}

/// Row `sum_{i in cm} dp_i <= rhs`.
pub fn stability_constraint(net: &Network, cm: &[GenId], rhs: f64, provenance: Provenance) -> Result<LinearConstraint, OpfError> {
    let mut coeffs = vec![0.0; net.generators.len() + net.loads.len()];
    for id in cm {
        coeffs[net.generator_index(*id).ok_or(OpfError::UnknownGenerator(*id))?] = 1.0;
    }
    Ok(LinearConstraint { coeffs, sense: Sense::Le, rhs, tag: ConstraintTag::Stability, provenance })
}

pub fn cm_key(cm: &[GenId]) -> String {
    cm.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(",")
}

/// Assembles the redispatch QP: variable bounds, base-case flow limits,
/// power balance, single-outage flow limits for every outage in `xi`, the
/// supplied cut-set rows and the stability row.
pub fn build_qp(
    net: &Network,
    sens: &SensitivitySet,
    cut_rows: &[LinearConstraint],
    stability: Option<&StabilityRequirement>,
    xi: &[BranchId],
    opts: &QpOptions,
) -> Result<QuadraticProgram, OpfError> {
    if sens.topology_hash != crate::sensitivity::topology_hash(net) {
        return Err(OpfError::TopologyMismatch);
    }
    let ng = net.generators.len();
    let nl = net.loads.len();
    let cid = opts.contingency_id.as_deref();
    let mut quad = Vec::with_capacity(ng + nl);
    let mut linear = Vec::with_capacity(ng + nl);
    let mut lower = Vec::with_capacity(ng + nl);
    let mut upper = Vec::with_capacity(ng + nl);
    for g in &net.generators {
        quad.push(g.cost_c);
        linear.push(g.marginal_cost(g.p0_mw));
        lower.push(g.p_min_mw - g.p0_mw);
        upper.push(g.p_max_mw - g.p0_mw);
    }
    for l in &net.loads {
        quad.push(0.0);
        linear.push(l.shed_cost);
        let lo = l.l0_mw - l.l_max_mw;
        lower.push(if opts.allow_load_increase { lo } else { lo.max(0.0) });
        upper.push(l.l0_mw - l.l_min_mw);
    }
    let mut qp = QuadraticProgram {
        gen_ids: net.generators.iter().map(|g| g.id).collect(),
        load_ids: net.loads.iter().map(|l| l.id).collect(),
        quad,
        linear,
        lower,
        upper,
        constraints: Vec::new(),
        skipped_outage_rows: Vec::new(),
    };

    let rows: Vec<Vec<f64>> = (0..net.branches.len())
        .map(|u| decision_row(net, &sens.ptdf.row(u).iter().copied().collect::<Vec<_>>()))
        .collect();
    let f0 = &sens.base_flows_mw;
    let limit_pair = |qp: &mut QuadraticProgram, coeffs: Vec<f64>, flow: f64, lim: f64, tag, key: String| {
        qp.constraints.push(LinearConstraint {
            coeffs: coeffs.clone(),
            sense: Sense::Le,
            rhs: lim - flow,
            tag,
            provenance: Provenance::new(cid, format!("{key}:max")),
        });
        qp.constraints.push(LinearConstraint {
            coeffs,
            sense: Sense::Ge,
            rhs: -lim - flow,
            tag,
            provenance: Provenance::new(cid, format!("{key}:min")),
        });
    };
    for (u, br) in net.branches.iter().enumerate() {
        if br.in_service {
            limit_pair(&mut qp, rows[u].clone(), f0[u], br.flow_limit_mw, ConstraintTag::BranchFlow, format!("flow:{}", br.id));
        }
    }

    // generation change plus shedding sums to zero
    let balance = vec![1.0; ng + nl];
    qp.constraints.push(LinearConstraint {
        coeffs: balance,
        sense: Sense::Eq,
        rhs: 0.0,
        tag: ConstraintTag::Balance,
        provenance: Provenance::new(cid, "balance"),
    });

    let monitored: BTreeSet<BranchId> = match &opts.monitored {
        Some(list) => list.iter().copied().collect(),
        None => net.in_service_branch_ids(),
    };
    for &a_id in xi {
        let a = net.branch_index(a_id).ok_or(OpfError::UnknownBranch(a_id))?;
        for (u, br) in net.branches.iter().enumerate() {
            if u == a || !br.in_service || !monitored.contains(&br.id) {
                continue;
            }
            let Some(factor) = sens.lodf_factor(u, a) else {
                if !opts.allow_islanding {
                    return Err(OpfError::IslandingOutage(a_id));
                }
                qp.skipped_outage_rows.push((br.id, a_id));
                continue;
            };
            let coeffs: Vec<f64> = rows[u].iter().zip(&rows[a]).map(|(x, y)| x + factor * y).collect();
            let flow = f0[u] + factor * f0[a];
            limit_pair(&mut qp, coeffs, flow, br.flow_limit_mw, ConstraintTag::NMinus1, format!("n-1:{}:{}", br.id, a_id));
        }
    }

    for c in cut_rows {
        qp.push(c.clone())?;
    }
    if let Some(s) = stability {
        if s.critical_machines.is_empty() {
            return Err(OpfError::StabilityWithoutMachines(s.tscf_mw));
        }
        let prov = Provenance::new(cid, format!("stability:{}", cm_key(&s.critical_machines)));
        qp.constraints.push(stability_constraint(net, &s.critical_machines, -s.tscf_mw, prov)?);
    }
    Ok(qp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchCost {
    /// `sum F_i(p0_i)`, $/hr.
    pub base: f64,
    /// `sum F_i(p0_i + dp_i)`.
    pub total: f64,
    /// `sum c_i dp_i^2 + (b_i + 2 c_i p0_i) dp_i`.
    pub delta: f64,
}

pub fn dispatch_cost(net: &Network, delta_p: &[f64]) -> DispatchCost {
    let mut out = DispatchCost { base: 0.0, total: 0.0, delta: 0.0 };
    for (g, &dp) in net.generators.iter().zip(delta_p) {
        out.base += g.cost(g.p0_mw);
        out.total += g.cost(g.p0_mw + dp);
        out.delta += g.cost_c * dp * dp + g.marginal_cost(g.p0_mw) * dp;
    }
    out
}

/// Least-cost generation meeting the current load, ignoring the network.
pub fn economic_dispatch(net: &Network) -> Result<Vec<f64>, OpfError> {
    let ng = net.generators.len();
    let demand: f64 = net.loads.iter().map(|l| l.l0_mw).sum();
    let mut a = DMatrix::zeros(ng + 1, ng);
    let mut l = vec![demand];
    let mut u = vec![demand];
    for (j, g) in net.generators.iter().enumerate() {
        a[(0, j)] = 1.0;
        a[(j + 1, j)] = 1.0;
        l.push(g.p_min_mw);
        u.push(g.p_max_mw);
    }
    let qp = DenseQp {
        p: net.generators.iter().map(|g| 2.0 * g.cost_c).collect(),
        q: net.generators.iter().map(|g| g.cost_b).collect(),
        a,
        l,
        u,
    };
    let r = solve_dense(&qp, &SolverOptions::default());
    if r.status != QpStatus::Optimal {
        return Err(OpfError::DispatchInfeasible);
    }
    // remove solver residue from the balance
    let mut p = r.x;
    let err: f64 = demand - p.iter().sum::<f64>();
    if let Some((k, _)) = net
        .generators
        .iter()
        .enumerate()
        .filter(|(k, g)| p[*k] + err >= g.p_min_mw && p[*k] + err <= g.p_max_mw)
        .max_by(|a, b| (a.1.p_max_mw - a.1.p_min_mw).total_cmp(&(b.1.p_max_mw - b.1.p_min_mw)))
    {
        p[k] += err;
    }
    Ok(p)
}
