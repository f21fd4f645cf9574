use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{build_qp, cm_key, dispatch_cost, stability_constraint, OpfError, QpOptions, QpStatus, SolverOptions};
use crate::constraint::{ConstraintTag, LinearConstraint, Provenance, Sense};
use crate::cutset::{cut_flow_coefficients, find_saturated_cutsets, CutSet, FtOptions};
use crate::dynamics::{assess, FaultSequence, SimeConfig, StabilityAssessment, TdsOptions};
use crate::grid::{BranchId, GenId, Network};
use crate::sensitivity::SensitivitySet;
use crate::tscp::TscpModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Flow, balance and outage rows only.
    Rtsced,
    /// Adds stability rows from simulation in the loop.
    Tscopf,
    /// Adds cut-set rows and the predicted stability row.
    Cscopf,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Rtsced => "rtsced",
            Mode::Tscopf => "tscopf",
            Mode::Cscopf => "cscopf",
        }
    }

    fn uses_cuts(self) -> bool {
        self == Mode::Cscopf
    }

    fn uses_stability(self) -> bool {
        self != Mode::Rtsced
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rtsced" => Ok(Mode::Rtsced),
            "tscopf" => Ok(Mode::Tscopf),
            "cscopf" => Ok(Mode::Cscopf),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// A wildfire contingency: its switching sequence and the branches it
/// removes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub id: String,
    pub sequence: FaultSequence,
    /// Branches out after the sequence. Defaults to the tripped branches.
    #[serde(default)]
    pub outages: Vec<BranchId>,
}

impl Contingency {
    pub fn new(id: impl Into<String>, sequence: FaultSequence) -> Self {
        let outages = sequence.tripped_branches();
        Self { id: id.into(), sequence, outages }
    }

    pub fn outage_set(&self) -> Vec<BranchId> {
        if self.outages.is_empty() {
            self.sequence.tripped_branches()
        } else {
            self.outages.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_iter: usize,
    pub solver: SolverOptions,
    pub tds: TdsOptions,
    pub sime: SimeConfig,
    pub ft: FtOptions,
    pub qp: QpOptions,
    /// Cut-set rows target this far below the saturation threshold, MW.
    pub cut_backoff_mw: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 10,
            solver: SolverOptions::default(),
            tds: TdsOptions::default(),
            sime: SimeConfig::default(),
            ft: FtOptions::default(),
            qp: QpOptions::default(),
            cut_backoff_mw: 1e-3,
        }
    }
}

/// Screening of one dispatch: post-contingency cut-sets and one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub saturated_cuts: Vec<CutSet>,
    pub stability: StabilityAssessment,
}

impl Verification {
    pub fn is_stable(&self) -> bool {
        self.stability.is_stable()
    }

    pub fn is_cut_secure(&self) -> bool {
        self.saturated_cuts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub objective: f64,
    pub qp_status: QpStatus,
    pub constraints_total: usize,
    /// Rows added to the dynamic list after this round's verification.
    pub added: Vec<Provenance>,
    pub tsi: f64,
    pub saturated_cuts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedispatchSolution {
    pub mode: Mode,
    pub gen_ids: Vec<GenId>,
    pub load_ids: Vec<u32>,
    pub delta_p: Vec<f64>,
    /// MW shed per load; positive is a reduction.
    pub delta_l: Vec<f64>,
    /// Redispatch objective, $/hr.
    pub objective_value: f64,
    /// Generation cost after redispatch, $/hr.
    pub total_cost: f64,
    pub base_cost: f64,
    pub load_shed_mw: f64,
    pub status: SolutionStatus,
    pub iterations: Vec<IterationReport>,
    pub solve_time_s: f64,
    /// Dynamic rows (cut-set and stability) in the order they were added.
    pub dynamic_constraints: Vec<LinearConstraint>,
    /// Screening of the dispatch before any redispatch.
    pub initial: Verification,
    /// Screening of the returned dispatch.
    pub verification: Verification,
    /// Largest violation of any QP row, re-evaluated from the row data.
    pub max_row_violation: f64,
    /// Constraints supporting infeasibility, when the QP had no solution.
    pub certificate: Vec<(ConstraintTag, Provenance)>,
    /// Violations left when the loop stopped early.
    pub unresolved: Vec<String>,
}

impl RedispatchSolution {
    /// Network with the redispatch applied.
    pub fn apply(&self, net: &Network) -> Network {
        apply_delta(net, &self.delta_p, &self.delta_l)
    }
}

fn apply_delta(net: &Network, dp: &[f64], shed: &[f64]) -> Network {
    let gen: Vec<f64> = net.generators.iter().zip(dp).map(|(g, d)| g.p0_mw + d).collect();
    let load: Vec<f64> = net.loads.iter().zip(shed).map(|(l, s)| l.l0_mw - s).collect();
    net.with_operating_point(&gen, &load)
}

struct PostTopology {
    net: Network,
    sens: SensitivitySet,
}

impl PostTopology {
    fn new(net: &Network, outages: &[BranchId]) -> Result<Self, OpfError> {
        let set: BTreeSet<BranchId> = outages.iter().copied().collect();
        let outage = net.apply_outage(&set)?;
        if outage.islanded {
            let first = outages.first().copied().unwrap_or_default();
            return Err(OpfError::IslandingOutage(first));
        }
        let sens = SensitivitySet::compute(&outage.network)?;
        Ok(Self { net: outage.network, sens })
    }

    fn flows(&self, case: &Network) -> Vec<f64> {
        self.sens.flows_for(&case.base_injections_mw())
    }
}

/// Runs the cut-set screen and one simulation on `case`.
pub fn verify(
    case: &Network,
    contingency: &Contingency,
    opts: &RunOptions,
) -> Result<Verification, OpfError> {
    let post = PostTopology::new(case, &contingency.outage_set())?;
    verify_with(case, &post, contingency, opts)
}

fn verify_with(case: &Network, post: &PostTopology, contingency: &Contingency, opts: &RunOptions) -> Result<Verification, OpfError> {
    let flows = post.flows(case);
    let saturated_cuts = find_saturated_cutsets(&post.net, &flows, &opts.ft);
    let (stability, _) = assess(case, &contingency.sequence, &opts.tds, &opts.sime)?;
    Ok(Verification { saturated_cuts, stability })
}

/// Cut-set row rebased to the original dispatch: the post-contingency flow
/// across `cut` must stay below the screening threshold.
fn cut_row(
    base: &Network,
    post: &PostTopology,
    cut: &CutSet,
    base_flows: &[f64],
    opts: &RunOptions,
    cid: &str,
) -> Result<LinearConstraint, OpfError> {
    let side: BTreeSet<u32> = cut.side_a.iter().copied().collect();
    let at_base = CutSet::from_partition(&post.net, &side, base_flows);
    let target = opts.ft.utilization_threshold * cut.aggregate_limit_mw - opts.cut_backoff_mw;
    let coeffs = cut_flow_coefficients(cut, &post.sens, &post.net)?;
    debug_assert_eq!(coeffs.len(), base.generators.len() + base.loads.len());
    Ok(LinearConstraint {
        coeffs,
        sense: Sense::Le,
        rhs: target - at_base.aggregate_flow_mw,
        tag: ConstraintTag::Cutset,
        provenance: Provenance::new(Some(cid), format!("cut:{}", cut.key())),
    })
}

/// Preventive redispatch against one wildfire contingency.
///
/// Each round solves the QP with the current rows, applies the redispatch,
/// and screens the result for saturated post-contingency cut-sets and
/// transient instability. Violations the mode cares about become new rows;
/// the loop ends when a round adds nothing or the iteration cap is reached.
pub fn run_cscopf(
    net: &Network,
    contingency: &Contingency,
    model: Option<&TscpModel>,
    mode: Mode,
    opts: &RunOptions,
) -> Result<RedispatchSolution, OpfError> {
    let start = Instant::now();
    let cid = contingency.id.as_str();
    let xi = contingency.outage_set();
    let sens = SensitivitySet::compute(net)?;
    let post = PostTopology::new(net, &xi)?;
    let base_post_flows = post.flows(net);
    let mut qp_opts = opts.qp.clone();
    qp_opts.contingency_id = Some(cid.to_string());
    let ng = net.generators.len();

    let initial = verify_with(net, &post, contingency, opts)?;
    let mut dynamic: Vec<LinearConstraint> = Vec::new();
    let mut seen: BTreeSet<Provenance> = BTreeSet::new();
    let mut add = |dynamic: &mut Vec<LinearConstraint>, c: LinearConstraint| -> Option<Provenance> {
        seen.insert(c.provenance.clone()).then(|| {
            let p = c.provenance.clone();
            dynamic.push(c);
            p
        })
    };

    if mode.uses_cuts() {
        for cut in &initial.saturated_cuts {
            add(&mut dynamic, cut_row(net, &post, cut, &base_post_flows, opts, cid)?);
        }
    }
    match mode {
        Mode::Cscopf => {
            let model = model.ok_or(OpfError::MissingModel("cscopf"))?;
            let ids: Vec<u32> = net.loads.iter().map(|l| l.id).collect();
            if !model.load_ids.is_empty() && model.load_ids != ids {
                return Err(OpfError::ModelMismatch);
            }
            let loads: Vec<f64> = net.loads.iter().map(|l| l.l0_mw).collect();
            let tscf = model.predict(&loads)?;
            if tscf > 0.0 {
                if model.critical_machines.is_empty() {
                    return Err(OpfError::StabilityWithoutMachines(tscf));
                }
                let prov = Provenance::new(Some(cid), format!("stability:{}:predicted", cm_key(&model.critical_machines)));
                add(&mut dynamic, stability_constraint(net, &model.critical_machines, -tscf, prov)?);
            }
        }
        Mode::Tscopf if !initial.is_stable() => {
            let s = &initial.stability;
            let prov = Provenance::new(Some(cid), format!("stability:{}:0", cm_key(&s.critical_machines)));
            add(&mut dynamic, stability_constraint(net, &s.critical_machines, -s.delta_p_tr_mw, prov)?);
        }
        _ => {}
    }

    let mut iterations = Vec::new();
    let mut x = vec![0.0; ng + net.loads.len()];
    let mut objective = 0.0;
    let mut status = SolutionStatus::IterationLimit;
    let mut certificate = Vec::new();
    let mut unresolved = Vec::new();
    let mut verification = initial.clone();
    let mut max_row_violation = 0.0;
    for it in 1..=opts.max_iter.max(1) {
        let qp = build_qp(net, &sens, &dynamic, None, &xi, &qp_opts)?;
        let sol = qp.solve(&opts.solver);
        if sol.status != QpStatus::Optimal {
            iterations.push(IterationReport {
                iteration: it,
                objective: sol.objective,
                qp_status: sol.status,
                constraints_total: qp.constraints.len(),
                added: vec![],
                tsi: verification.stability.tsi,
                saturated_cuts: vec![],
            });
            status = if sol.status == QpStatus::Infeasible { SolutionStatus::Infeasible } else { SolutionStatus::IterationLimit };
            certificate = sol.certificate;
            break;
        }
        // solver round-off below a microwatt is reported as exactly zero
        x = sol.x.iter().map(|&v| if v.abs() < 1e-9 { 0.0 } else { v }).collect();
        objective = sol.objective;
        max_row_violation = qp.max_violation(&x);
        let case = apply_delta(net, &x[..ng], &x[ng..]);
        verification = verify_with(&case, &post, contingency, opts)?;

        let mut added = Vec::new();
        let mut pending = Vec::new();
        if mode.uses_cuts() {
            for cut in &verification.saturated_cuts {
                let row = cut_row(net, &post, cut, &base_post_flows, opts, cid)?;
                match add(&mut dynamic, row) {
                    Some(p) => added.push(p),
                    None => pending.push(format!("cut {} still saturated", cut.key())),
                }
            }
        }
        if mode.uses_stability() && !verification.is_stable() {
            let s = &verification.stability;
            if s.critical_machines.is_empty() || s.delta_p_tr_mw <= 0.0 {
                pending.push(format!("unstable (TSI {:.3}) without a usable correction", s.tsi));
            } else {
                let current: f64 = s
                    .critical_machines
                    .iter()
                    .filter_map(|id| net.generator_index(*id))
                    .map(|k| x[k])
                    .sum();
                let prov = Provenance::new(Some(cid), format!("stability:{}:{it}", cm_key(&s.critical_machines)));
                let row = stability_constraint(net, &s.critical_machines, current - s.delta_p_tr_mw, prov)?;
                if let Some(p) = add(&mut dynamic, row) {
                    added.push(p);
                }
            }
        }
        iterations.push(IterationReport {
            iteration: it,
            objective,
            qp_status: sol.status,
            constraints_total: qp.constraints.len(),
            added: added.clone(),
            tsi: verification.stability.tsi,
            saturated_cuts: verification.saturated_cuts.iter().map(|c| c.key()).collect(),
        });
        if added.is_empty() {
            status = if pending.is_empty() { SolutionStatus::Optimal } else { SolutionStatus::IterationLimit };
            unresolved = pending;
            break;
        }
        if it == opts.max_iter.max(1) {
            unresolved = pending;
            unresolved.extend(added.iter().map(|p| format!("constraint {} added on the last round", p.key)));
        }
    }

    let cost = dispatch_cost(net, &x[..ng]);
    Ok(RedispatchSolution {
        mode,
        gen_ids: net.generators.iter().map(|g| g.id).collect(),
        load_ids: net.loads.iter().map(|l| l.id).collect(),
        delta_p: x[..ng].to_vec(),
        delta_l: x[ng..].to_vec(),
        objective_value: objective,
        total_cost: cost.total,
        base_cost: cost.base,
        load_shed_mw: x[ng..].iter().sum(),
        status,
        iterations,
        solve_time_s: start.elapsed().as_secs_f64(),
        dynamic_constraints: dynamic,
        initial,
        verification,
        max_row_violation,
        certificate,
        unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Rtsced, Mode::Tscopf, Mode::Cscopf] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("scopf".parse::<Mode>().is_err());
    }
}
