//! Shipped cases: the IEEE 118-bus network and a nine-bus wildfire
//! corridor with classical machine data and a scripted arc-fault sequence.

use crate::cscopf::Contingency;
use crate::grid::{parse_dynamics_sidecar, parse_json_case, parse_matpower_case, Network};

pub const CASE118_M: &str = include_str!("../data/case118.m");
pub const WILDFIRE9_JSON: &str = include_str!("../data/wildfire9.json");
pub const WILDFIRE9_DYNAMICS_JSON: &str = include_str!("../data/wildfire9_dynamics.json");
pub const WILDFIRE9_CONTINGENCY_JSON: &str = include_str!("../data/wildfire9_contingency.json");

pub fn case118() -> Network {
    parse_matpower_case(CASE118_M).expect("shipped case parses")
}

/// Nine-bus, two-area system joined by a four-line corridor, with dynamics
/// merged in.
pub fn wildfire9() -> Network {
    let mut net = parse_json_case(WILDFIRE9_JSON).expect("shipped case parses");
    net.merge_sidecar(&parse_dynamics_sidecar(WILDFIRE9_DYNAMICS_JSON).expect("sidecar parses"))
        .expect("sidecar matches case");
    net
}

/// Five arc faults on the two fire-exposed corridor lines, then their trip.
pub fn wildfire9_contingency() -> Contingency {
    serde_json::from_str(WILDFIRE9_CONTINGENCY_JSON).expect("shipped contingency parses")
}
