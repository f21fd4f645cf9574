use std::fs;
use std::path::Path;

use cscopf_core::cscopf::{run_cscopf, Contingency, Mode, RedispatchSolution, SolutionStatus};
use cscopf_core::cutset::find_saturated_cutsets;
use cscopf_core::dynamics::{assess, estimate_tau, FaultSequence, SimeConfig, TdsOptions};
use cscopf_core::grid::{parse_dynamics_sidecar, parse_json_case, parse_matpower_case, Network};
use cscopf_core::sensitivity::SensitivitySet;
use cscopf_core::tscp::{build_dataset, evaluate, sample_loads, train_model, Dataset, RowStatus, TscpModel};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{csv_text, pretty, report, OutDir};

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

/// MATPOWER when the extension is `.m`, the JSON case schema otherwise.
pub fn load_network(case: &Path, dynamics: Option<&Path>) -> CliResult<Network> {
    let text = read(case)?;
    let parsed = if case.extension().is_some_and(|e| e == "m") { parse_matpower_case(&text) } else { parse_json_case(&text) };
    let mut net = parsed.map_err(|e| CliError::input(case, e))?;
    if let Some(d) = dynamics {
        let sidecar = parse_dynamics_sidecar(&read(d)?).map_err(|e| CliError::input(d, e))?;
        net.merge_sidecar(&sidecar).map_err(|e| CliError::input(d, e))?;
    }
    Ok(net)
}

/// A contingency document, or a bare fault sequence named after the file.
pub fn load_contingency(path: &Path) -> CliResult<Contingency> {
    let text = read(path)?;
    if let Ok(c) = serde_json::from_str::<Contingency>(&text) {
        return Ok(c);
    }
    let seq = FaultSequence::from_json(&text).map_err(|e| CliError::input(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Contingency::new(id, seq))
}

fn load_model(path: &Path) -> CliResult<TscpModel> {
    TscpModel::from_json(&read(path)?).map_err(|e| CliError::input(path, e))
}

struct Case {
    net: Network,
    contingency: Contingency,
}

fn dynamic_case(cfg: &RunConfig) -> CliResult<Case> {
    let case = cfg.require(&cfg.case, "--case")?;
    let net = load_network(case, cfg.dynamics.as_deref())?;
    net.validate().map_err(|e| CliError::input(case, e))?;
    if !net.has_dynamics() {
        return Err(CliError::input(case, "no generator dynamics; pass --dynamics"));
    }
    let cpath = cfg.require(&cfg.contingency, "--contingency")?;
    let contingency = load_contingency(cpath)?;
    contingency.sequence.validate(&net).map_err(|e| CliError::input(cpath, e))?;
    Ok(Case { net, contingency })
}

/// SIME settings with `tau` taken from, in order: the explicit setting, a
/// re-estimate when requested, the model's training value, the default.
fn resolve_sime(cfg: &RunConfig, case: &Case, tds: &TdsOptions, model: Option<&TscpModel>) -> CliResult<SimeConfig> {
    let mut sime = cfg.sime_config();
    if cfg.sime.tau.is_some() {
        return Ok(sime);
    }
    if let Some(mw) = cfg.sime.estimate_tau_mw {
        sime.tau = estimate_tau(&case.net, &case.contingency.sequence, tds, &sime, mw)
            .map_err(|e| CliError::Failed(format!("tau estimate: {e}")))?;
    } else if let Some(t) = model.and_then(|m| m.sime_tau) {
        sime.tau = t;
    }
    Ok(sime)
}

fn emit(command: &str, result: Value, solve_time_s: Option<f64>) {
    print!("{}", pretty(&report(command, result, solve_time_s)));
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn validate(cfg: &RunConfig) -> CliResult<u8> {
    let case = cfg.require(&cfg.case, "--case")?;
    let net = load_network(case, cfg.dynamics.as_deref())?;
    net.validate().map_err(|e| CliError::input(case, e))?;
    let mut result = json!({
        "buses": net.buses.len(),
        "branches": net.branches.len(),
        "generators": net.generators.len(),
        "loads": net.loads.len(),
        "reference_bus": net.reference_bus(),
        "has_dynamics": net.has_dynamics(),
        "total_generation_mw": net.generators.iter().map(|g| g.p0_mw).sum::<f64>(),
        "total_load_mw": net.loads.iter().map(|l| l.l0_mw).sum::<f64>(),
        "topology_hash": cscopf_core::sensitivity::topology_hash(&net),
    });
    if let Some(cpath) = &cfg.contingency {
        let c = load_contingency(cpath)?;
        c.sequence.validate(&net).map_err(|e| CliError::input(cpath, e))?;
        result["contingency"] = json!({ "id": c.id, "events": c.sequence.events.len(), "outages": c.outage_set() });
    }
    emit("validate", result, None);
    Ok(0)
}

pub fn ptdf(cfg: &RunConfig) -> CliResult<u8> {
    let case = cfg.require(&cfg.case, "--case")?;
    let net = load_network(case, None)?;
    net.validate().map_err(|e| CliError::input(case, e))?;
    let sens = SensitivitySet::compute(&net).map_err(|e| CliError::input(case, e))?;
    let out = OutDir::create(&cfg.output_dir())?;

    let mut header = vec!["branch".to_string()];
    header.extend(net.buses.iter().map(|b| format!("bus_{}", b.id)));
    let rows: Vec<Vec<String>> = net
        .branches
        .iter()
        .enumerate()
        .map(|(u, br)| std::iter::once(br.id.to_string()).chain(sens.ptdf.row(u).iter().map(|v| num(*v))).collect())
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let ptdf_path = out.write("ptdf.csv", &csv_text(&h, &rows))?;

    let mut header = vec!["branch".to_string()];
    header.extend(net.branches.iter().map(|b| format!("out_{}", b.id)));
    let m = net.branches.len();
    let rows: Vec<Vec<String>> = (0..m)
        .map(|u| {
            std::iter::once(net.branches[u].id.to_string())
                .chain((0..m).map(|a| sens.lodf_factor(u, a).map(num).unwrap_or_default()))
                .collect()
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let lodf_path = out.write("lodf.csv", &csv_text(&h, &rows))?;

    let flows: Vec<Value> = net
        .branches
        .iter()
        .zip(&sens.base_flows_mw)
        .map(|(br, f)| {
            json!({ "branch": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus, "flow_mw": f, "limit_mw": br.flow_limit_mw })
        })
        .collect();
    let radial: Vec<u32> = net.branches.iter().zip(&sens.radial).filter(|(_, r)| **r).map(|(b, _)| b.id).collect();
    emit(
        "ptdf",
        json!({
            "reference_bus": sens.reference_bus,
            "base_flows": flows,
            "radial_branches": radial,
            "files": [ptdf_path, lodf_path],
        }),
        None,
    );
    Ok(0)
}

pub fn ft(cfg: &RunConfig) -> CliResult<u8> {
    let case = cfg.require(&cfg.case, "--case")?;
    let net = load_network(case, None)?;
    net.validate().map_err(|e| CliError::input(case, e))?;
    let opts = cfg.run_options();
    let (id, outages) = match &cfg.contingency {
        Some(p) => {
            let c = load_contingency(p)?;
            (Some(c.id.clone()), c.outage_set())
        }
        None => (None, Vec::new()),
    };
    let post = net
        .apply_outage(&outages.iter().copied().collect())
        .map_err(|e| CliError::input(cfg.contingency.as_deref().unwrap_or(case), e))?;
    if post.islanded {
        return Err(CliError::input(cfg.contingency.as_deref().unwrap_or(case), "outage set islands the network"));
    }
    let sens = SensitivitySet::compute(&post.network).map_err(|e| CliError::Failed(e.to_string()))?;
    let flows = sens.flows_for(&net.base_injections_mw());
    let cuts: Vec<Value> = find_saturated_cutsets(&post.network, &flows, &opts.ft)
        .iter()
        .map(|c| {
            let mut v = serde_json::to_value(c).expect("cut serializes");
            v["utilization"] = json!(c.utilization());
            v
        })
        .collect();
    emit(
        "ft",
        json!({
            "contingency": id,
            "outages": outages,
            "utilization_threshold": opts.ft.utilization_threshold,
            "saturated_cuts": cuts,
        }),
        None,
    );
    Ok(0)
}

pub fn tds(cfg: &RunConfig) -> CliResult<u8> {
    let case = dynamic_case(cfg)?;
    let tds = cfg.tds_options();
    let sime = resolve_sime(cfg, &case, &tds, None)?;
    let (a, traj) = assess(&case.net, &case.contingency.sequence, &tds, &sime).map_err(|e| CliError::Failed(e.to_string()))?;
    let out = OutDir::create(&cfg.output_dir())?;
    let path = out.write("trajectories.csv", &traj.to_csv())?;
    emit(
        "tds",
        json!({ "contingency": case.contingency.id, "tau": sime.tau, "assessment": a, "files": [path] }),
        None,
    );
    Ok(0)
}

fn subset(ds: &Dataset, rows: std::ops::Range<usize>) -> Dataset {
    Dataset {
        load_ids: ds.load_ids.clone(),
        x: ds.x.rows(rows.start, rows.len()).into_owned(),
        y: ds.y[rows.clone()].to_vec(),
        status: ds.status[rows.clone()].to_vec(),
        critical_machines: ds.critical_machines[rows].to_vec(),
    }
}

pub fn train_tscp(cfg: &RunConfig) -> CliResult<u8> {
    let case = dynamic_case(cfg)?;
    let tds = cfg.tds_options();
    let sime = resolve_sime(cfg, &case, &tds, None)?;
    let n = cfg.sample_count();
    let seed = cfg.sample_seed();
    let samples = sample_loads(&case.net, &cfg.sampling_spec(), n, seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let ds = build_dataset(&case.net, &samples, &case.contingency.sequence, &tds, &sime);
    let failed = ds.status.iter().filter(|s| matches!(s, RowStatus::Failed(_))).count();
    let unstable = ds.status.iter().filter(|s| **s == RowStatus::Unstable).count();

    let n_test = (n as f64 * cfg.test_fraction.unwrap_or(0.2)).floor() as usize;
    let n_test = if n_test >= n { 0 } else { n_test };
    let train = subset(&ds, 0..n - n_test);
    let test = if n_test > 0 { subset(&ds, n - n_test..n) } else { train.clone() };
    let include_stable = cfg.include_stable.unwrap_or(true);
    let mut model = train_model(&train, &case.contingency.id, Some(seed), include_stable)
        .map_err(|e| CliError::Failed(format!("training: {e}")))?;
    model.sime_tau = Some(sime.tau);
    let (xt, yt) = test.training_rows(include_stable);
    let metrics = evaluate(&model, &xt, &yt, cfg.noise_level.unwrap_or(0.05), cfg.eval_seed.unwrap_or(0))
        .map_err(|e| CliError::Failed(format!("evaluation: {e}")))?;

    let out = OutDir::create(&cfg.output_dir())?;
    let model_path = out.write("tscp_model.json", &model.to_json())?;
    let dataset_path = out.write("dataset.csv", &ds.to_csv().map_err(|e| CliError::Failed(e.to_string()))?)?;
    let result = json!({
        "contingency": case.contingency.id,
        "samples": n,
        "seed": seed,
        "tau": sime.tau,
        "unstable_rows": unstable,
        "failed_rows": failed,
        "train_rows": n - n_test,
        "test_rows": if n_test > 0 { n_test } else { n },
        "critical_machines": model.critical_machines,
        "metrics": metrics,
    });
    let metrics_path = out.write_json("metrics.json", &report("train-tscp", result.clone(), None))?;
    let mut shown = result;
    shown["files"] = json!([model_path, dataset_path, metrics_path]);
    emit("train-tscp", shown, None);
    Ok(0)
}

pub fn eval_tscp(cfg: &RunConfig) -> CliResult<u8> {
    let mpath = cfg.require(&cfg.tscp_model, "--tscp-model")?;
    let dpath = cfg.require(&cfg.dataset, "--dataset")?;
    let model = load_model(mpath)?;
    let ds = Dataset::from_csv(&read(dpath)?).map_err(|e| CliError::input(dpath, e))?;
    if !model.load_ids.is_empty() && model.load_ids != ds.load_ids {
        return Err(CliError::input(dpath, "dataset loads do not match the model"));
    }
    let (x, y) = ds.training_rows(cfg.include_stable.unwrap_or(true));
    let metrics = evaluate(&model, &x, &y, cfg.noise_level.unwrap_or(0.05), cfg.eval_seed.unwrap_or(0))
        .map_err(|e| CliError::input(dpath, e))?;
    emit("eval-tscp", json!({ "rows": y.len(), "metrics": metrics }), None);
    Ok(0)
}

fn comparison_row(net: &Network, sol: &RedispatchSolution, cm: &[u32]) -> Vec<String> {
    let cm_shift: f64 = net.generators.iter().zip(&sol.delta_p).filter(|(g, _)| cm.contains(&g.id)).map(|(_, d)| *d).sum();
    let status = serde_json::to_value(&sol.status).expect("status serializes");
    vec![
        sol.mode.name().to_string(),
        status.as_str().unwrap_or_default().to_string(),
        sol.verification.is_stable().to_string(),
        sol.verification.is_cut_secure().to_string(),
        num(sol.verification.stability.tsi),
        sol.verification.saturated_cuts.len().to_string(),
        num(cm_shift),
        num(sol.load_shed_mw),
        num(sol.total_cost),
        num(sol.total_cost - sol.base_cost),
        sol.iterations.len().to_string(),
    ]
}

pub fn cscopf(cfg: &RunConfig) -> CliResult<u8> {
    let modes = cfg.modes()?;
    let case = dynamic_case(cfg)?;
    let model = match &cfg.tscp_model {
        Some(p) => Some(load_model(p)?),
        None if modes.contains(&Mode::Cscopf) => {
            return Err(CliError::Usage("mode cscopf needs --tscp-model".into()));
        }
        None => None,
    };
    let mut opts = cfg.run_options();
    opts.sime = resolve_sime(cfg, &case, &opts.tds, model.as_ref())?;
    let out = OutDir::create(&cfg.output_dir())?;
    let mut files = Vec::new();

    let (pre, pre_traj) = assess(&case.net, &case.contingency.sequence, &opts.tds, &opts.sime)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    files.push(out.write("trajectories_pre.csv", &pre_traj.to_csv())?);

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut total_time = 0.0;
    let mut unresolved = false;
    for mode in &modes {
        let sol = run_cscopf(&case.net, &case.contingency, model.as_ref(), *mode, &opts).map_err(|e| match e {
            cscopf_core::cscopf::OpfError::ModelMismatch => {
                CliError::input(cfg.tscp_model.as_deref().unwrap_or(Path::new("")), e)
            }
            other => CliError::Failed(other.to_string()),
        })?;
        total_time += sol.solve_time_s;
        unresolved |= sol.status != SolutionStatus::Optimal || !sol.unresolved.is_empty();
        let name = mode.name();

        let mut body = serde_json::to_value(&sol).expect("solution serializes");
        let time = body.as_object_mut().and_then(|o| o.remove("solve_time_s")).and_then(|v| v.as_f64());
        files.push(out.write_json(&format!("solution_{name}.json"), &report("cscopf", body, time))?);

        let dp_rows: Vec<Vec<String>> = case
            .net
            .generators
            .iter()
            .zip(&sol.delta_p)
            .map(|(g, d)| {
                vec![
                    g.id.to_string(),
                    g.bus.to_string(),
                    num(g.p0_mw),
                    num(*d),
                    num(g.p0_mw + d),
                    pre.critical_machines.contains(&g.id).to_string(),
                ]
            })
            .collect();
        let header = ["gen_id", "bus", "p0_mw", "delta_p_mw", "p_mw", "critical"];
        files.push(out.write(&format!("delta_p_{name}.csv"), &csv_text(&header, &dp_rows))?);

        let (_, traj) = assess(&sol.apply(&case.net), &case.contingency.sequence, &opts.tds, &opts.sime)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        files.push(out.write(&format!("trajectories_{name}.csv"), &traj.to_csv())?);

        rows.push(comparison_row(&case.net, &sol, &pre.critical_machines));
        summaries.push(json!({
            "mode": name,
            "status": sol.status,
            "transient_stable": sol.verification.is_stable(),
            "cutset_secure": sol.verification.is_cut_secure(),
            "tsi": sol.verification.stability.tsi,
            "saturated_cuts": sol.verification.saturated_cuts.iter().map(|c| c.key()).collect::<Vec<_>>(),
            "delta_p": sol.delta_p,
            "delta_l": sol.delta_l,
            "objective_value": sol.objective_value,
            "total_cost": sol.total_cost,
            "iterations": sol.iterations.len(),
            "unresolved": sol.unresolved,
            "certificate": sol.certificate,
        }));
    }
    if modes.len() > 1 {
        let header = [
            "mode",
            "status",
            "transient_stable",
            "cutset_secure",
            "tsi",
            "saturated_cuts",
            "cm_shift_mw",
            "load_shed_mw",
            "total_cost",
            "delta_cost",
            "iterations",
        ];
        files.push(out.write("comparison.csv", &csv_text(&header, &rows))?);
    }
    emit(
        "cscopf",
        json!({
            "contingency": case.contingency.id,
            "tau": opts.sime.tau,
            "initial": { "tsi": pre.tsi, "critical_machines": pre.critical_machines },
            "modes": summaries,
            "files": files,
        }),
        Some(total_time),
    );
    Ok(if unresolved { 1 } else { 0 })
}
