use std::collections::HashMap;

use nalgebra::DMatrix;

use super::network::{NetworkState, SwingSystem, C64};
use super::{DynamicsError, EventKind, FaultSequence, RotorTrajectories, TdsOptions, MAX_TIME_STEP};
use crate::grid::Network;

/// Machine state: rotor angles (rad) and speed deviations (pu).
#[derive(Debug, Clone, PartialEq)]
pub struct SwingState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SwingSystem {
    pub fn initial_state(&self) -> SwingState {
        SwingState { delta: self.delta0.clone(), omega: vec![0.0; self.machines()] }
    }

    fn derivative(&self, y: &DMatrix<C64>, s: &SwingState) -> (SwingState, Vec<f64>) {
        let pe = self.electrical_power(y, &s.delta);
        let mut dd = Vec::with_capacity(pe.len());
        let mut dw = Vec::with_capacity(pe.len());
        for i in 0..pe.len() {
            dd.push(self.omega_s * s.omega[i]);
            dw.push((self.pm[i] - pe[i] - self.d[i] * s.omega[i]) / (2.0 * self.h[i]));
        }
        (SwingState { delta: dd, omega: dw }, pe)
    }

    /// One classical RK4 step. Returns the new state and the electrical
    /// power at the start of the step.
    pub fn rk4_step(&self, y: &DMatrix<C64>, s: &SwingState, dt: f64) -> (SwingState, Vec<f64>) {
        let axpy = |a: &SwingState, k: &SwingState, h: f64| SwingState {
            delta: a.delta.iter().zip(&k.delta).map(|(x, d)| x + h * d).collect(),
            omega: a.omega.iter().zip(&k.omega).map(|(x, d)| x + h * d).collect(),
        };
        let (k1, pe) = self.derivative(y, s);
        let (k2, _) = self.derivative(y, &axpy(s, &k1, 0.5 * dt));
        let (k3, _) = self.derivative(y, &axpy(s, &k2, 0.5 * dt));
        let (k4, _) = self.derivative(y, &axpy(s, &k3, dt));
        let n = s.delta.len();
        let mut out = s.clone();
        for i in 0..n {
            out.delta[i] += dt / 6.0 * (k1.delta[i] + 2.0 * k2.delta[i] + 2.0 * k3.delta[i] + k4.delta[i]);
            out.omega[i] += dt / 6.0 * (k1.omega[i] + 2.0 * k2.omega[i] + 2.0 * k3.omega[i] + k4.omega[i]);
        }
        (out, pe)
    }

    /// Integrates from `x0` over `steps` fixed steps. `schedule` maps a step
    /// index to the network state that takes effect at that step.
    pub fn integrate(
        &self,
        x0: SwingState,
        dt: f64,
        steps: usize,
        schedule: &[(usize, NetworkState)],
    ) -> Result<RotorTrajectories, DynamicsError> {
        let n = self.machines();
        let mut cache: HashMap<NetworkState, DMatrix<C64>> = HashMap::new();
        let mut current = NetworkState::default();
        let mut y = self.reduced_admittance(&current)?;
        cache.insert(current.clone(), y.clone());

        let mut angles = DMatrix::zeros(n, steps + 1);
        let mut speeds = DMatrix::zeros(n, steps + 1);
        let mut pe_mw = DMatrix::zeros(n, steps + 1);
        let mut faulted = Vec::with_capacity(steps + 1);
        let base = self.network().mva_base;
        let mut state = x0;
        let mut next_event = 0;
        for k in 0..=steps {
            while next_event < schedule.len() && schedule[next_event].0 <= k {
                current = schedule[next_event].1.clone();
                y = match cache.get(&current) {
                    Some(m) => m.clone(),
                    None => {
                        let m = self.reduced_admittance(&current)?;
                        cache.insert(current.clone(), m.clone());
                        m
                    }
                };
                next_event += 1;
            }
            faulted.push(!current.faults.is_empty());
            for i in 0..n {
                angles[(i, k)] = state.delta[i];
                speeds[(i, k)] = state.omega[i];
            }
            if k == steps {
                let pe = self.electrical_power(&y, &state.delta);
                for i in 0..n {
                    pe_mw[(i, k)] = pe[i] * base;
                }
                break;
            }
            let (next, pe) = self.rk4_step(&y, &state, dt);
            for i in 0..n {
                pe_mw[(i, k)] = pe[i] * base;
            }
            state = next;
        }
        Ok(RotorTrajectories {
            time_grid: (0..=steps).map(|k| k as f64 * dt).collect(),
            angles,
            speeds,
            electrical_power_mw: pe_mw,
            mechanical_power_mw: self.pm.iter().map(|p| p * base).collect(),
            machine_ids: self.machine_ids.clone(),
            inertia: self.inertia_coefficients(),
            omega_s: self.omega_s,
            event_steps: schedule.iter().map(|(k, _)| *k).collect(),
            faulted,
            dt,
        })
    }
}

/// Converts an event list into network states snapped to the step grid.
pub fn event_schedule(seq: &FaultSequence, dt: f64) -> Vec<(usize, NetworkState)> {
    let mut out: Vec<(usize, NetworkState)> = Vec::new();
    let mut state = NetworkState::default();
    for e in &seq.events {
        match e.kind {
            EventKind::ApplyFault => state.fault(e.branch, e.pos),
            EventKind::ClearFault => state.clear(e.branch),
            EventKind::TripBranch => state.trip(e.branch),
        }
        let step = (e.t / dt).round() as usize;
        match out.last_mut() {
            Some(last) if last.0 == step => last.1 = state.clone(),
            _ => out.push((step, state.clone())),
        }
    }
    out
}

/// Fixed-step RK4 time-domain simulation of the classical swing model.
pub fn simulate_swing(net: &Network, seq: &FaultSequence, dt: f64, t_end: f64) -> Result<RotorTrajectories, DynamicsError> {
    let opts = TdsOptions { dt, t_end, ..TdsOptions::default() };
    simulate_swing_with(net, seq, &opts)
}

pub fn simulate_swing_with(net: &Network, seq: &FaultSequence, opts: &TdsOptions) -> Result<RotorTrajectories, DynamicsError> {
    if !(opts.dt > 0.0) {
        return Err(DynamicsError::InvalidStep(opts.dt));
    }
    if opts.dt > MAX_TIME_STEP {
        return Err(DynamicsError::InvalidStep(opts.dt));
    }
    if opts.t_end < seq.last_event_time() {
        return Err(DynamicsError::HorizonTooShort { t_end: opts.t_end, last_event: seq.last_event_time() });
    }
    seq.validate(net)?;
    let sys = SwingSystem::new(net, opts)?;
    let steps = (opts.t_end / opts.dt).round() as usize;
    sys.integrate(sys.initial_state(), opts.dt, steps, &event_schedule(seq, opts.dt))
}
