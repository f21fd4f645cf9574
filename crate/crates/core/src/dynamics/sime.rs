//! Single machine equivalent (SIME) margin and the IEEAC generation
//! transfer that restores a target margin.

use serde::{Deserialize, Serialize};

use super::{
    compute_tsi, identify_critical_machines, simulate_swing_with, DynamicsError, FaultSequence, RotorTrajectories,
    TdsOptions,
};
use crate::grid::{GenId, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimeConfig {
    /// Absolute margin target, MW s.
    pub epsilon: f64,
    /// Margin target as a fraction of `|eta_us|`, added to `epsilon`.
    pub epsilon_relative: f64,
    /// Sensitivity factor relating margin to transferred power.
    pub tau: f64,
    /// OMIB angle beyond which the equivalent is declared lost, degrees.
    pub instability_angle_deg: f64,
}

impl Default for SimeConfig {
    fn default() -> Self {
        Self { epsilon: 0.0, epsilon_relative: 0.05, tau: 1.0, instability_angle_deg: 360.0 }
    }
}

impl SimeConfig {
    pub fn target_margin(&self, eta_us: f64) -> f64 {
        self.epsilon + self.epsilon_relative * eta_us.abs()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.tau > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.epsilon < 0.0 || self.epsilon_relative < 0.0 {
            return Err(DynamicsError::InvalidParameter("epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

/// OMIB margin of an unstable trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimeMargin {
    /// Unstable margin `-1/2 M_omib omega_u^2`, MW s. Negative.
    pub eta: f64,
    pub m_total: f64,
    pub m_cm: f64,
    pub m_nm: f64,
    /// Time of the unstable crossing, when one was found.
    pub crossing_time: Option<f64>,
    /// No crossing before the angle cutoff; `eta` is the kinetic energy at
    /// the last switching instant before the cutoff.
    pub fallback: bool,
    /// The OMIB swung back before losing synchronism on a later swing.
    pub multi_swing: bool,
}

struct Omib {
    delta: Vec<f64>,
    omega: Vec<f64>,
    accel: Vec<f64>,
    m: f64,
}

fn omib(traj: &RotorTrajectories, cm: &[usize], nm: &[usize]) -> Omib {
    let m_cm: f64 = cm.iter().map(|&i| traj.inertia[i]).sum();
    let m_nm: f64 = nm.iter().map(|&i| traj.inertia[i]).sum();
    let m = m_cm * m_nm / (m_cm + m_nm);
    let mut delta = Vec::with_capacity(traj.steps());
    let mut omega = Vec::with_capacity(traj.steps());
    let mut accel = Vec::with_capacity(traj.steps());
    for k in 0..traj.steps() {
        let mean = |set: &[usize], mm: f64, f: &dyn Fn(usize) -> f64| set.iter().map(|&i| traj.inertia[i] * f(i)).sum::<f64>() / mm;
        delta.push(mean(cm, m_cm, &|i| traj.angles[(i, k)]) - mean(nm, m_nm, &|i| traj.angles[(i, k)]));
        omega.push(traj.omega_s * (mean(cm, m_cm, &|i| traj.speeds[(i, k)]) - mean(nm, m_nm, &|i| traj.speeds[(i, k)])));
        let pa = |i: usize| traj.mechanical_power_mw[i] - traj.electrical_power_mw[(i, k)];
        let cm_pa: f64 = cm.iter().map(|&i| pa(i)).sum();
        let nm_pa: f64 = nm.iter().map(|&i| pa(i)).sum();
        accel.push(m * (cm_pa / m_cm - nm_pa / m_nm));
    }
    Omib { delta, omega, accel, m }
}

/// SIME margin for the given machine split.
///
/// The unstable margin is taken where the OMIB accelerating power crosses
/// zero from below while the OMIB is still moving away. Only fault-free
/// steps after the first event qualify, so repeated faults in a sequence
/// are handled; jumps at switching instants are not crossings.
pub fn sime_margin(
    traj: &RotorTrajectories,
    cm: &[GenId],
    nm: &[GenId],
    cfg: &SimeConfig,
) -> Result<SimeMargin, DynamicsError> {
    if cm.is_empty() {
        return Err(DynamicsError::NoCriticalMachines);
    }
    if nm.is_empty() {
        return Err(DynamicsError::InvalidParameter("no non-critical machines".into()));
    }
    let pos = |id: &GenId| traj.machine_ids.iter().position(|m| m == id);
    let cm_idx: Vec<usize> = cm.iter().filter_map(pos).collect();
    let nm_idx: Vec<usize> = nm.iter().filter_map(pos).collect();
    let o = omib(traj, &cm_idx, &nm_idx);
    let m_cm: f64 = cm_idx.iter().map(|&i| traj.inertia[i]).sum();
    let m_nm: f64 = nm_idx.iter().map(|&i| traj.inertia[i]).sum();
    let margin = |w: f64, crossing_time: Option<f64>, multi_swing: bool| SimeMargin {
        eta: -0.5 * o.m * w * w,
        m_total: m_cm + m_nm,
        m_cm,
        m_nm,
        crossing_time,
        fallback: crossing_time.is_none(),
        multi_swing,
    };

    let start = traj.event_steps.first().copied().unwrap_or(0).min(traj.steps() - 1);
    let end = traj.steps() - 1;
    // orient so the OMIB runs away in the positive direction
    let dir = if o.delta[end] >= o.delta[start] { 1.0 } else { -1.0 };
    let cutoff = cfg.instability_angle_deg.to_radians();
    let faulted = |k: usize| traj.faulted.get(k).copied().unwrap_or(false);
    let mut multi_swing = false;
    let mut last_switch = start;
    for k in (start + 1)..=end {
        if traj.event_steps.contains(&k) {
            last_switch = k;
            continue;
        }
        if faulted(k - 1) || faulted(k) {
            continue;
        }
        let (w0, w1) = (dir * o.omega[k - 1], dir * o.omega[k]);
        let (p0, p1) = (dir * o.accel[k - 1], dir * o.accel[k]);
        if w1 <= 0.0 {
            multi_swing = true;
        }
        if p0 < 0.0 && p1 >= 0.0 && w1 > 0.0 {
            let s = p0 / (p0 - p1);
            let w = w0 + s * (w1 - w0);
            return Ok(margin(w, Some(traj.time_grid[k - 1] + s * traj.dt), multi_swing));
        }
        if dir * o.delta[k] > cutoff {
            // no crossing: kinetic energy at the last switching instant
            return Ok(margin(o.omega[last_switch], None, multi_swing));
        }
    }
    Err(DynamicsError::MarginUndetermined)
}

/// `(M/M_CM + M/M_NM)^-1`.
pub fn ieeac_factor(m_total: f64, m_cm: f64, m_nm: f64) -> Result<f64, DynamicsError> {
    if !(m_cm > 0.0) || !(m_nm > 0.0) {
        return Err(DynamicsError::InvalidParameter("M_CM and M_NM must be positive".into()));
    }
    Ok(1.0 / (m_total / m_cm + m_total / m_nm))
}

/// Generation to move from critical to non-critical machines:
/// `((-eta_us + eps) / tau) * (M/M_CM + M/M_NM)^-1`, zero once the margin
/// meets the target.
pub fn ieeac_transfer(eta_us: f64, cfg: &SimeConfig, m_total: f64, m_cm: f64, m_nm: f64) -> Result<f64, DynamicsError> {
    cfg.validate()?;
    let factor = ieeac_factor(m_total, m_cm, m_nm)?;
    let eps = cfg.target_margin(eta_us);
    if eta_us >= eps {
        return Ok(0.0);
    }
    Ok((-eta_us + eps) / cfg.tau * factor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityAssessment {
    pub tsi: f64,
    pub delta_max_deg: f64,
    pub critical_machines: Vec<GenId>,
    pub noncritical_machines: Vec<GenId>,
    /// SIME margin, present only for unstable cases.
    pub eta: Option<f64>,
    pub m_total: f64,
    pub m_cm: f64,
    pub m_nm: f64,
    /// Transient stability correction factor, MW. Zero when stable.
    pub delta_p_tr_mw: f64,
    pub margin_fallback: bool,
    pub multi_swing: bool,
}

impl StabilityAssessment {
    pub fn is_stable(&self) -> bool {
        self.tsi > 0.0
    }
}

fn assess_trajectory(traj: &RotorTrajectories, cfg: &SimeConfig) -> Result<StabilityAssessment, DynamicsError> {
    let (tsi, delta_max_deg) = compute_tsi(traj)?;
    let (cm, nm) = identify_critical_machines(traj);
    let m_total: f64 = traj.inertia.iter().sum();
    if cm.is_empty() {
        return Ok(StabilityAssessment {
            tsi,
            delta_max_deg,
            critical_machines: cm,
            noncritical_machines: nm,
            eta: None,
            m_total,
            m_cm: 0.0,
            m_nm: m_total,
            delta_p_tr_mw: 0.0,
            margin_fallback: false,
            multi_swing: false,
        });
    }
    let margin = sime_margin(traj, &cm, &nm, cfg)?;
    let delta_p_tr_mw = ieeac_transfer(margin.eta, cfg, margin.m_total, margin.m_cm, margin.m_nm)?;
    Ok(StabilityAssessment {
        tsi,
        delta_max_deg,
        critical_machines: cm,
        noncritical_machines: nm,
        eta: Some(margin.eta),
        m_total: margin.m_total,
        m_cm: margin.m_cm,
        m_nm: margin.m_nm,
        delta_p_tr_mw,
        margin_fallback: margin.fallback,
        multi_swing: margin.multi_swing,
    })
}

/// Simulates the sequence and evaluates TSI, the machine split and, when
/// unstable, the SIME margin and transfer.
pub fn assess(
    net: &Network,
    seq: &FaultSequence,
    opts: &TdsOptions,
    cfg: &SimeConfig,
) -> Result<(StabilityAssessment, RotorTrajectories), DynamicsError> {
    let traj = simulate_swing_with(net, seq, opts)?;
    let a = assess_trajectory(&traj, cfg)?;
    Ok((a, traj))
}

/// Moves `mw` of generation from the critical machines (pro rata to output)
/// to the non-critical ones (pro rata to upward headroom).
pub fn shift_generation(net: &Network, cm: &[GenId], nm: &[GenId], mw: f64) -> Network {
    let mut out = net.clone();
    let down: f64 = out.generators.iter().filter(|g| cm.contains(&g.id)).map(|g| g.p0_mw.max(0.0)).sum();
    let up: f64 = out.generators.iter().filter(|g| nm.contains(&g.id)).map(|g| (g.p_max_mw - g.p0_mw).max(0.0)).sum();
    for g in out.generators.iter_mut() {
        if cm.contains(&g.id) && down > 0.0 {
            g.p0_mw -= mw * g.p0_mw.max(0.0) / down;
        } else if nm.contains(&g.id) && up > 0.0 {
            g.p0_mw += mw * (g.p_max_mw - g.p0_mw).max(0.0) / up;
        }
    }
    out
}

/// Re-estimates `tau` from two simulations: the base case and one with
/// `shift_mw` moved off the critical machines. The returned value makes the
/// IEEAC transfer reproduce the observed margin change per MW.
pub fn estimate_tau(
    net: &Network,
    seq: &FaultSequence,
    opts: &TdsOptions,
    cfg: &SimeConfig,
    shift_mw: f64,
) -> Result<f64, DynamicsError> {
    let (base, _) = assess(net, seq, opts, cfg)?;
    let eta0 = base.eta.ok_or(DynamicsError::NoCriticalMachines)?;
    let shifted = shift_generation(net, &base.critical_machines, &base.noncritical_machines, shift_mw);
    let traj = simulate_swing_with(&shifted, seq, opts)?;
    let margin = sime_margin(&traj, &base.critical_machines, &base.noncritical_machines, cfg)?;
    let slope = (margin.eta - eta0) / shift_mw;
    if !(slope > 0.0) {
        return Err(DynamicsError::InvalidParameter(format!(
            "margin did not improve with the shift (slope {slope})"
        )));
    }
    Ok(slope * ieeac_factor(base.m_total, base.m_cm, base.m_nm)?)
}
