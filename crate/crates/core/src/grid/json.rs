use serde::{Deserialize, Serialize};

use super::{
    Branch, Bus, GenId, Generator, GridError, Load, LoadId, Network, DEFAULT_LOAD_MAX_FACTOR,
};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    #[serde(default)]
    loads: Vec<RawLoad>,
    #[serde(default = "default_mva_base")]
    mva_base: f64,
}

fn default_mva_base() -> f64 {
    100.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    id: LoadId,
    bus: u32,
    l0_mw: f64,
    l_min_mw: Option<f64>,
    l_max_mw: Option<f64>,
    shed_cost: Option<f64>,
}

/// Parses the native JSON case format.
///
/// Omitted optional fields take their defaults: `l_min_mw = 0`,
/// `l_max_mw = 1.25 l0`, `shed_cost` ten times the largest marginal cost,
/// `damping_d = 0`, `mva_base = 100`.
pub fn parse_json_case(text: &str) -> Result<Network, GridError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawCase = serde_path_to_error::deserialize(de).map_err(|e| GridError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    let loads = raw
        .loads
        .iter()
        .map(|l| Load {
            id: l.id,
            bus: l.bus,
            l0_mw: l.l0_mw,
            l_min_mw: l.l_min_mw.unwrap_or(0.0),
            l_max_mw: l.l_max_mw.unwrap_or(l.l0_mw * DEFAULT_LOAD_MAX_FACTOR),
            shed_cost: f64::NAN,
        })
        .collect();
    let mut net = Network::assemble(raw.buses, raw.branches, raw.generators, loads, raw.mva_base)?;
    let default_shed = net.default_shed_cost();
    for (load, raw) in net.loads.iter_mut().zip(&raw.loads) {
        load.shed_cost = raw.shed_cost.unwrap_or(default_shed);
    }
    net.validate()?;
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDynamicsEntry {
    pub id: GenId,
    pub inertia_h: f64,
    #[serde(default)]
    pub damping_d: f64,
    pub xd_prime: f64,
    pub mva_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadShedCostEntry {
    pub id: LoadId,
    pub shed_cost: f64,
}

/// Machine dynamics and shedding costs that MATPOWER files cannot carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSidecar {
    #[serde(default)]
    pub generator_dynamics: Vec<GeneratorDynamicsEntry>,
    #[serde(default)]
    pub load_shed_costs: Vec<LoadShedCostEntry>,
}

pub fn parse_dynamics_sidecar(text: &str) -> Result<DynamicsSidecar, GridError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| GridError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "buses": [{"id": 1, "is_reference": false}, {"id": 2, "is_reference": true}],
        "branches": [{"id": 1, "from_bus": 1, "to_bus": 2, "reactance": 0.1, "flow_limit_mw": 100}],
        "generators": [{"id": 1, "bus": 1, "p0_mw": 50, "p_min_mw": 0, "p_max_mw": 100,
                        "cost_b": 20, "cost_c": 0.1,
                        "dynamics": {"inertia_h": 5, "xd_prime": 0.3, "mva_base": 100}}],
        "loads": [{"id": 1, "bus": 2, "l0_mw": 50}],
        "mva_base": 100
    }"#;

    #[test]
    fn minimal_two_bus() {
        let net = parse_json_case(TWO_BUS).unwrap();
        assert_eq!(net.branches.len(), 1);
        assert!(net.branches[0].in_service);
        assert_eq!(net.generators[0].dynamics.as_ref().unwrap().damping_d, 0.0);
        assert_eq!(net.loads[0].l_min_mw, 0.0);
        // 10x the marginal cost at p_max: 10 * (20 + 2*0.1*100)
        assert_eq!(net.loads[0].shed_cost, 400.0);
    }

    #[test]
    fn p0_above_max_names_generator() {
        let text = TWO_BUS.replace("\"p_max_mw\": 100", "\"p_max_mw\": 40");
        let err = parse_json_case(&text).unwrap_err();
        match err {
            GridError::Invariant { path, msg } => {
                assert_eq!(path, "generators[0]");
                assert!(msg.contains("generator 1"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_error_reports_path() {
        let text = TWO_BUS.replace("\"reactance\": 0.1", "\"reactance\": \"x\"");
        match parse_json_case(&text).unwrap_err() {
            GridError::Schema { path, .. } => assert_eq!(path, "branches[0].reactance"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let net = parse_json_case(TWO_BUS).unwrap();
        let canonical = net.to_canonical_json();
        let again = parse_json_case(&canonical).unwrap();
        assert_eq!(again, net);
        assert_eq!(again.to_canonical_json(), canonical);
    }

    #[test]
    fn sidecar_merges_by_id() {
        let mut net = parse_json_case(TWO_BUS).unwrap();
        let sidecar = parse_dynamics_sidecar(
            r#"{"generator_dynamics": [{"id": 1, "inertia_h": 3.5, "damping_d": 1.0, "xd_prime": 0.2, "mva_base": 120}],
                "load_shed_costs": [{"id": 1, "shed_cost": 900}]}"#,
        )
        .unwrap();
        net.merge_sidecar(&sidecar).unwrap();
        assert_eq!(net.generators[0].dynamics.as_ref().unwrap().inertia_h, 3.5);
        assert_eq!(net.loads[0].shed_cost, 900.0);

        let bad = parse_dynamics_sidecar(r#"{"generator_dynamics": [{"id": 7, "inertia_h": 1, "xd_prime": 0.2, "mva_base": 1}]}"#)
            .unwrap();
        assert!(matches!(net.merge_sidecar(&bad), Err(GridError::Schema { .. })));
    }
}
