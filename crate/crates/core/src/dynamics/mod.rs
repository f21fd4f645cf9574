//! Transient stability: classical swing simulation under switching
//! sequences, the transient stability index, critical-machine splitting,
//! the SIME margin and the IEEAC power transfer.

mod fault;
mod network;
mod sime;
mod simulate;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BranchId, GenId};

pub use fault::{EventKind, FaultEvent, FaultSequence};
pub use network::{kron_reduce, NetworkState, SwingSystem, C64};
pub use sime::{
    assess, estimate_tau, ieeac_factor, ieeac_transfer, shift_generation, sime_margin, SimeConfig, SimeMargin,
    StabilityAssessment,
};
pub use simulate::{event_schedule, simulate_swing, simulate_swing_with, SwingState};

/// Largest accepted integration step, seconds.
pub const MAX_TIME_STEP: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("generator {0} has no dynamics data; supply a dynamics sidecar")]
    MissingDynamics(GenId),
    #[error("need at least two machines, found {0}")]
    TooFewMachines(usize),
    #[error("invalid fault sequence: {0}")]
    InvalidSequence(String),
    #[error("event references unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("event references branch {0}, which is out of service")]
    BranchOutOfService(BranchId),
    #[error("time step {0} s rejected; must lie in (0, 0.02]")]
    InvalidStep(f64),
    #[error("t_end {t_end} s precedes the last event at {last_event} s")]
    HorizonTooShort { t_end: f64, last_event: f64 },
    #[error("network admittance matrix is singular (isolated island without shunt)")]
    SingularNetwork,
    #[error("initialization failed: {0}")]
    Initialization(String),
    #[error("no critical machines: the trajectory is stable")]
    NoCriticalMachines,
    #[error("margin undetermined, extend t_end")]
    MarginUndetermined,
    #[error("invalid SIME parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdsOptions {
    /// Integration step, seconds.
    pub dt: f64,
    pub t_end: f64,
    pub frequency_hz: f64,
    /// Shunt admittance magnitude placed at a fault point, per-unit.
    pub fault_admittance: f64,
}

impl Default for TdsOptions {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 5.0, frequency_hz: 60.0, fault_admittance: 1e6 }
    }
}

/// Simulated rotor motion. Matrices are `[machines x steps]`.
#[derive(Debug, Clone)]
pub struct RotorTrajectories {
    pub time_grid: Vec<f64>,
    /// Rotor angles, radians.
    pub angles: DMatrix<f64>,
    /// Speed deviations, per-unit.
    pub speeds: DMatrix<f64>,
    pub electrical_power_mw: DMatrix<f64>,
    pub mechanical_power_mw: Vec<f64>,
    pub machine_ids: Vec<GenId>,
    /// `M_i = 2 H_i S_i / omega_s`, MW s^2/rad.
    pub inertia: Vec<f64>,
    pub omega_s: f64,
    /// Step indices at which the network switched.
    pub event_steps: Vec<usize>,
    /// Per step: a fault was on the network during the step.
    pub faulted: Vec<bool>,
    pub dt: f64,
}

impl RotorTrajectories {
    pub fn steps(&self) -> usize {
        self.time_grid.len()
    }

    pub fn machines(&self) -> usize {
        self.machine_ids.len()
    }

    /// CSV with a `time` column and one angle column per machine, degrees.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for id in &self.machine_ids {
            out.push_str(&format!(",delta_{id}_deg"));
        }
        out.push('\n');
        for k in 0..self.steps() {
            out.push_str(&format!("{}", self.time_grid[k]));
            for i in 0..self.machines() {
                out.push_str(&format!(",{}", self.angles[(i, k)].to_degrees()));
            }
            out.push('\n');
        }
        out
    }

    /// Largest adjacent gap in the sorted angles at step `k`, in radians,
    /// with the angle value just below the gap.
    fn max_gap_at(&self, k: usize) -> (f64, f64) {
        let mut col: Vec<f64> = self.angles.column(k).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let mut best = (0.0, col[0]);
        for w in col.windows(2) {
            let gap = w[1] - w[0];
            if gap > best.0 {
                best = (gap, w[0]);
            }
        }
        best
    }
}

/// `(360 - d) / (360 + d) * 100` with `d` in degrees.
pub fn tsi_from_delta_max(delta_max_deg: f64) -> f64 {
    100.0 * (360.0 - delta_max_deg) / (360.0 + delta_max_deg)
}

/// Transient stability index and the largest adjacent rotor-angle gap over
/// the whole trajectory, in degrees.
pub fn compute_tsi(traj: &RotorTrajectories) -> Result<(f64, f64), DynamicsError> {
    if traj.machines() < 2 {
        return Err(DynamicsError::TooFewMachines(traj.machines()));
    }
    let delta_max = (0..traj.steps()).map(|k| traj.max_gap_at(k).0).fold(0.0, f64::max).to_degrees();
    Ok((tsi_from_delta_max(delta_max), delta_max))
}

/// Splits machines into critical (above the largest angle gap, at the
/// instant that gap peaks) and non-critical. Stable trajectories have no
/// critical machines.
pub fn identify_critical_machines(traj: &RotorTrajectories) -> (Vec<GenId>, Vec<GenId>) {
    let all = traj.machine_ids.clone();
    match compute_tsi(traj) {
        Ok((tsi, _)) if tsi <= 0.0 => {}
        _ => return (Vec::new(), all),
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..traj.steps() {
        let gap = traj.max_gap_at(k).0;
        if gap > best.1 {
            best = (k, gap);
        }
    }
    let (_, below) = traj.max_gap_at(best.0);
    let mut cm = Vec::new();
    let mut nm = Vec::new();
    for (i, id) in all.iter().enumerate() {
        if traj.angles[(i, best.0)] > below {
            cm.push(*id);
        } else {
            nm.push(*id);
        }
    }
    (cm, nm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(angles_deg: &[&[f64]]) -> RotorTrajectories {
        let m = angles_deg.len();
        let steps = angles_deg[0].len();
        let angles = DMatrix::from_fn(m, steps, |i, k| angles_deg[i][k].to_radians());
        RotorTrajectories {
            time_grid: (0..steps).map(|k| k as f64).collect(),
            angles,
            speeds: DMatrix::zeros(m, steps),
            electrical_power_mw: DMatrix::zeros(m, steps),
            mechanical_power_mw: vec![0.0; m],
            machine_ids: (1..=m as u32).collect(),
            inertia: vec![1.0; m],
            omega_s: 377.0,
            event_steps: vec![],
            faulted: vec![false; steps],
            dt: 1.0,
        }
    }

    #[test]
    fn tsi_formula_values() {
        assert_eq!(tsi_from_delta_max(0.0), 100.0);
        assert_eq!(tsi_from_delta_max(360.0), 0.0);
        assert_eq!(tsi_from_delta_max(540.0), -20.0);
    }

    #[test]
    fn tsi_uses_adjacent_gap() {
        // sorted 0, 100, 150: gaps 100 and 50
        let t = traj(&[&[0.0], &[150.0], &[100.0]]);
        let (tsi, dmax) = compute_tsi(&t).unwrap();
        assert!((dmax - 100.0).abs() < 1e-9);
        assert!((tsi - 100.0 * 260.0 / 460.0).abs() < 1e-9);
    }

    #[test]
    fn single_machine_is_an_error() {
        assert_eq!(compute_tsi(&traj(&[&[0.0]])).unwrap_err(), DynamicsError::TooFewMachines(1));
    }

    #[test]
    fn stable_case_has_no_cm() {
        let t = traj(&[&[0.0, 10.0], &[5.0, 20.0], &[3.0, 8.0]]);
        let (cm, nm) = identify_critical_machines(&t);
        assert!(cm.is_empty());
        assert_eq!(nm, vec![1, 2, 3]);
    }

    #[test]
    fn runaway_machine_is_critical() {
        let t = traj(&[&[20.0, 200.0, 500.0], &[10.0, 15.0, 20.0], &[0.0, 5.0, 12.0]]);
        let (cm, nm) = identify_critical_machines(&t);
        assert_eq!(cm, vec![1]);
        assert_eq!(nm, vec![2, 3]);
    }

    #[test]
    fn partition_invariant_under_uniform_shift() {
        let base: [&[f64]; 3] = [&[20.0, 200.0, 500.0], &[10.0, 15.0, 20.0], &[0.0, 5.0, 12.0]];
        let shifted: Vec<Vec<f64>> = base.iter().map(|r| r.iter().map(|v| v - 1234.5).collect()).collect();
        let refs: Vec<&[f64]> = shifted.iter().map(|v| v.as_slice()).collect();
        assert_eq!(identify_critical_machines(&traj(&base)), identify_critical_machines(&traj(&refs)));
    }
}
