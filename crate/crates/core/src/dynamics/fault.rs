use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::grid::{BranchId, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ApplyFault,
    ClearFault,
    TripBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    /// Seconds from the start of the simulation.
    pub t: f64,
    pub kind: EventKind,
    pub branch: BranchId,
    /// Fractional position of the fault along the branch, from `from_bus`.
    #[serde(default = "half")]
    pub pos: f64,
}

fn half() -> f64 {
    0.5
}

/// Ordered switching events; wildfire arc faults are a run of
/// apply/clear pairs followed by permanent trips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultSequence {
    pub events: Vec<FaultEvent>,
}

impl FaultSequence {
    pub fn from_json(text: &str) -> Result<Self, DynamicsError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let seq: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| DynamicsError::InvalidSequence(format!("{}: {}", e.path(), e.inner())))?;
        seq.check_shape()?;
        Ok(seq)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sequence serializes")
    }

    /// `count` arc faults of `duration` seconds, evenly spread over
    /// `[start, start + window]` and cycling through `branches`, then a
    /// permanent trip of every branch after the last fault clears.
    pub fn repeated_arc_faults(
        branches: &[(BranchId, f64)],
        count: usize,
        start: f64,
        window: f64,
        duration: f64,
    ) -> Self {
        let mut events = Vec::new();
        let spacing = if count > 1 { (window - duration) / (count - 1) as f64 } else { 0.0 };
        let mut end = start;
        for k in 0..count {
            let (branch, pos) = branches[k % branches.len()];
            let t = start + spacing * k as f64;
            events.push(FaultEvent { t, kind: EventKind::ApplyFault, branch, pos });
            events.push(FaultEvent { t: t + duration, kind: EventKind::ClearFault, branch, pos });
            end = t + duration;
        }
        let mut seen = Vec::new();
        for &(branch, pos) in branches {
            if !seen.contains(&branch) {
                seen.push(branch);
                events.push(FaultEvent { t: end, kind: EventKind::TripBranch, branch, pos });
            }
        }
        Self { events }
    }

    /// Branches permanently removed by the sequence.
    pub fn tripped_branches(&self) -> Vec<BranchId> {
        self.events.iter().filter(|e| e.kind == EventKind::TripBranch).map(|e| e.branch).collect()
    }

    pub fn last_event_time(&self) -> f64 {
        self.events.iter().map(|e| e.t).fold(0.0, f64::max)
    }

    /// Ordering and pairing checks that do not need a network.
    pub fn check_shape(&self) -> Result<(), DynamicsError> {
        let mut active: BTreeMap<BranchId, usize> = BTreeMap::new();
        let mut last = f64::NEG_INFINITY;
        for (k, e) in self.events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(DynamicsError::InvalidSequence(format!("events[{k}]: bad time {}", e.t)));
            }
            if e.t < last {
                return Err(DynamicsError::InvalidSequence(format!("events[{k}]: times must be nondecreasing")));
            }
            if !(0.0..=1.0).contains(&e.pos) {
                return Err(DynamicsError::InvalidSequence(format!("events[{k}]: pos must lie in [0, 1]")));
            }
            last = e.t;
            match e.kind {
                EventKind::ApplyFault => *active.entry(e.branch).or_default() += 1,
                EventKind::ClearFault => match active.get_mut(&e.branch) {
                    Some(n) if *n > 0 => *n -= 1,
                    _ => {
                        return Err(DynamicsError::InvalidSequence(format!(
                            "events[{k}]: clear_fault on branch {} without an active fault",
                            e.branch
                        )))
                    }
                },
                EventKind::TripBranch => {
                    active.remove(&e.branch);
                }
            }
        }
        if let Some((b, _)) = active.iter().find(|(_, n)| **n > 0) {
            return Err(DynamicsError::InvalidSequence(format!("fault on branch {b} is never cleared")));
        }
        Ok(())
    }

    /// Shape checks plus branch existence and service status.
    pub fn validate(&self, net: &Network) -> Result<(), DynamicsError> {
        self.check_shape()?;
        let mut tripped = Vec::new();
        for e in &self.events {
            let br = net.branch(e.branch).ok_or(DynamicsError::UnknownBranch(e.branch))?;
            if !br.in_service || tripped.contains(&e.branch) {
                return Err(DynamicsError::BranchOutOfService(e.branch));
            }
            if e.kind == EventKind::TripBranch {
                tripped.push(e.branch);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_schema() {
        let seq = FaultSequence::from_json(
            r#"{"events":[{"t":0.1,"kind":"apply_fault","branch":3,"pos":0.25},
                          {"t":0.2,"kind":"clear_fault","branch":3,"pos":0.25},
                          {"t":0.2,"kind":"trip_branch","branch":3}]}"#,
        )
        .unwrap();
        assert_eq!(seq.events.len(), 3);
        assert_eq!(seq.events[2].pos, 0.5);
        assert_eq!(seq.tripped_branches(), vec![3]);
        assert_eq!(FaultSequence::from_json(&seq.to_json()).unwrap(), seq);
    }

    #[test]
    fn rejects_uncleared_and_unordered() {
        let open = r#"{"events":[{"t":0.1,"kind":"apply_fault","branch":3}]}"#;
        assert!(FaultSequence::from_json(open).is_err());
        let unordered = r#"{"events":[{"t":0.3,"kind":"apply_fault","branch":3},
                                       {"t":0.2,"kind":"clear_fault","branch":3}]}"#;
        assert!(FaultSequence::from_json(unordered).is_err());
    }

    #[test]
    fn trip_clears_fault() {
        let seq = FaultSequence {
            events: vec![
                FaultEvent { t: 0.1, kind: EventKind::ApplyFault, branch: 1, pos: 0.5 },
                FaultEvent { t: 0.2, kind: EventKind::TripBranch, branch: 1, pos: 0.5 },
            ],
        };
        seq.check_shape().unwrap();
    }

    #[test]
    fn repeated_faults_layout() {
        let seq = FaultSequence::repeated_arc_faults(&[(4, 0.3), (5, 0.6)], 5, 0.1, 3.0, 0.08);
        seq.check_shape().unwrap();
        assert_eq!(seq.events.len(), 12);
        assert!((seq.last_event_time() - 3.1).abs() < 1e-12);
        assert_eq!(seq.tripped_branches(), vec![4, 5]);
    }
}
