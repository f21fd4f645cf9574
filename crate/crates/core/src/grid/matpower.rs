//! Reader for the subset of the MATPOWER case format used by standard test
//! systems: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and a
//! polynomial `mpc.gencost`.

use super::{Branch, Bus, Generator, GridError, Load, Network, BALANCE_TOL_PU, DEFAULT_LOAD_MAX_FACTOR};

/// Flow limit assigned to branches whose `rateA` is zero (unlimited).
pub const UNLIMITED_RATE_MW: f64 = 9900.0;

struct Matrix {
    /// (line number, row values)
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_scalar(text: &str, name: &str) -> Result<Option<f64>, GridError> {
    let key = format!("mpc.{name}");
    for (k, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if let Some(rest) = line.strip_prefix(&key) {
            let rest = rest.trim_start();
            if let Some(value) = rest.strip_prefix('=') {
                let value = value.trim().trim_end_matches(';').trim();
                return value
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| GridError::Parse { line: k + 1, msg: format!("bad value for {key}: {value:?}") });
            }
        }
    }
    Ok(None)
}

fn parse_matrix(text: &str, name: &str) -> Result<Option<Matrix>, GridError> {
    let key = format!("mpc.{name}");
    let mut lines = text.lines().enumerate();
    let mut start = None;
    for (k, raw) in lines.by_ref() {
        let line = strip_comment(raw).trim();
        if let Some(rest) = line.strip_prefix(&key) {
            let rest = rest.trim_start();
            if let Some(rest) = rest.strip_prefix('=') {
                let rest = rest.trim_start();
                if let Some(rest) = rest.strip_prefix('[') {
                    start = Some((k, rest.to_string()));
                    break;
                }
            }
        }
    }
    let Some((first_line, first_rest)) = start else {
        return Ok(None);
    };
    let mut rows = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    let mut pending_line = first_line + 1;
    let mut closed = false;

    let mut consume = |line_no: usize, body: &str, rows: &mut Vec<(usize, Vec<f64>)>| -> Result<bool, GridError> {
        let (body, ends) = match body.find(']') {
            Some(k) => (&body[..k], true),
            None => (body, false),
        };
        // rows end at ';' or at the end of a line
        for (k, chunk) in body.split(';').enumerate() {
            if k > 0 && !pending.is_empty() {
                rows.push((pending_line, std::mem::take(&mut pending)));
            }
            for tok in chunk.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                let v = match tok {
                    "Inf" | "inf" => f64::INFINITY,
                    "-Inf" | "-inf" => f64::NEG_INFINITY,
                    _ => tok.parse::<f64>().map_err(|_| GridError::Parse {
                        line: line_no,
                        msg: format!("malformed {key} row: unexpected token {tok:?}"),
                    })?,
                };
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.push(v);
            }
        }
        if !pending.is_empty() {
            rows.push((pending_line, std::mem::take(&mut pending)));
        }
        Ok(ends)
    };

    if consume(first_line + 1, strip_comment(&first_rest), &mut rows)? {
        closed = true;
    }
    if !closed {
        for (k, raw) in lines {
            if consume(k + 1, strip_comment(raw), &mut rows)? {
                closed = true;
                break;
            }
        }
    }
    if !closed {
        return Err(GridError::Parse { line: first_line + 1, msg: format!("{key} matrix is never closed") });
    }
    Ok(Some(Matrix { rows }))
}

fn require(text: &str, name: &str) -> Result<Matrix, GridError> {
    parse_matrix(text, name)?.ok_or_else(|| GridError::Parse { line: 0, msg: format!("missing mpc.{name} matrix") })
}

fn check_width(m: &Matrix, name: &str, min: usize) -> Result<(), GridError> {
    for (line, row) in &m.rows {
        if row.len() < min {
            return Err(GridError::Parse {
                line: *line,
                msg: format!("malformed mpc.{name} row: expected at least {min} columns, found {}", row.len()),
            });
        }
    }
    Ok(())
}

/// Parses MATPOWER case text.
///
/// Loads come from the bus `Pd` column with load id equal to the bus number.
/// Generators are numbered by row, starting at 1, and out-of-service rows
/// are skipped. MATPOWER dispatches include losses, so any mismatch between
/// total `Pg` and total `Pd` is assigned to the reference-bus generator
/// (or spread proportionally when that would leave its limits).
pub fn parse_matpower_case(text: &str) -> Result<Network, GridError> {
    let base = parse_scalar(text, "baseMVA")?.unwrap_or(100.0);
    let bus = require(text, "bus")?;
    let gen = require(text, "gen")?;
    let branch = require(text, "branch")?;
    let gencost = parse_matrix(text, "gencost")?;
    check_width(&bus, "bus", 3)?;
    check_width(&gen, "gen", 10)?;
    check_width(&branch, "branch", 4)?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    let mut loads = Vec::new();
    let mut reference = None;
    for (line, row) in &bus.rows {
        let id = row[0] as u32;
        let kind = row[1] as i64;
        match kind {
            1 | 2 => {}
            3 => {
                if let Some(prev) = reference {
                    return Err(GridError::Invariant {
                        path: format!("mpc.bus line {line}"),
                        msg: format!("multiple reference buses ({prev} and {id})"),
                    });
                }
                reference = Some(id);
            }
            4 => return Err(GridError::Unsupported(format!("isolated bus {id} (type 4) at line {line}"))),
            _ => return Err(GridError::Parse { line: *line, msg: format!("unknown bus type {kind}") }),
        }
        buses.push(Bus { id, is_reference: kind == 3 });
        let pd = row[2];
        if pd != 0.0 {
            loads.push(Load {
                id,
                bus: id,
                l0_mw: pd,
                l_min_mw: 0.0,
                l_max_mw: pd * DEFAULT_LOAD_MAX_FACTOR,
                shed_cost: f64::NAN,
            });
        }
    }

    let mut branches = Vec::with_capacity(branch.rows.len());
    for (k, (line, row)) in branch.rows.iter().enumerate() {
        let x = row[3];
        if x == 0.0 {
            return Err(GridError::Invariant {
                path: format!("mpc.branch line {line}"),
                msg: format!("zero-reactance branch {}-{}", row[0], row[1]),
            });
        }
        let rate = row.get(5).copied().unwrap_or(0.0);
        let status = row.get(10).copied().unwrap_or(1.0);
        branches.push(Branch {
            id: k as u32 + 1,
            from_bus: row[0] as u32,
            to_bus: row[1] as u32,
            reactance: x,
            flow_limit_mw: if rate > 0.0 { rate } else { UNLIMITED_RATE_MW },
            in_service: status != 0.0,
        });
    }

    if let Some(gc) = &gencost {
        if gc.rows.len() < gen.rows.len() {
            return Err(GridError::Parse {
                line: gc.rows.last().map(|r| r.0).unwrap_or(0),
                msg: format!("mpc.gencost has {} rows for {} generators", gc.rows.len(), gen.rows.len()),
            });
        }
    }

    let mut generators = Vec::with_capacity(gen.rows.len());
    for (k, (_, row)) in gen.rows.iter().enumerate() {
        if row[7] <= 0.0 {
            continue;
        }
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        if let Some(gc) = &gencost {
            let (line, cost) = &gc.rows[k];
            if cost.len() < 4 {
                return Err(GridError::Parse { line: *line, msg: "malformed mpc.gencost row".into() });
            }
            match cost[0] as i64 {
                1 => {
                    return Err(GridError::Unsupported(format!(
                        "piecewise-linear cost model at line {line}"
                    )))
                }
                2 => {}
                other => return Err(GridError::Parse { line: *line, msg: format!("unknown cost model {other}") }),
            }
            let n = cost[3] as usize;
            if n > 3 {
                return Err(GridError::Unsupported(format!("polynomial cost of degree {} at line {line}", n - 1)));
            }
            if cost.len() < 4 + n {
                return Err(GridError::Parse { line: *line, msg: format!("expected {n} cost coefficients") });
            }
            let coeffs = &cost[4..4 + n];
            // highest order first
            let mut padded = [0.0; 3];
            padded[3 - n..].copy_from_slice(coeffs);
            c = padded[0];
            b = padded[1];
            a = padded[2];
        }
        generators.push(Generator {
            id: k as u32 + 1,
            bus: row[0] as u32,
            p0_mw: row[1],
            p_min_mw: row[9],
            p_max_mw: row[8],
            cost_a: a,
            cost_b: b,
            cost_c: c,
            dynamics: None,
        });
    }

    if reference.is_none() {
        return Err(GridError::Invariant { path: "mpc.bus".into(), msg: "no reference bus".into() });
    }
    let reference = reference.unwrap();
    rebalance(&mut generators, &loads, reference, base);

    let mut net = Network::assemble(buses, branches, generators, loads, base)?;
    let shed = net.default_shed_cost();
    for l in &mut net.loads {
        l.shed_cost = shed;
    }
    net.validate()?;
    Ok(net)
}

fn rebalance(generators: &mut [Generator], loads: &[Load], reference: u32, base: f64) {
    let total_load: f64 = loads.iter().map(|l| l.l0_mw).sum();
    let total_gen: f64 = generators.iter().map(|g| g.p0_mw).sum();
    let mismatch = total_load - total_gen;
    if (mismatch / base).abs() <= BALANCE_TOL_PU * 0.5 {
        return;
    }
    if let Some(slack) = generators.iter_mut().find(|g| g.bus == reference) {
        let p = slack.p0_mw + mismatch;
        if p >= slack.p_min_mw && p <= slack.p_max_mw {
            slack.p0_mw = p;
            return;
        }
    }
    if total_gen > 0.0 {
        let scale = total_load / total_gen;
        for g in generators.iter_mut() {
            g.p0_mw *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const THREE_BUS: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	150	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	100	0	300	-300	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
	2	50	0	300	-300	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	250	250	250	0	0	1	-360	360;
	1	3	0.01	0.1	0	0	250	250	0	0	1	-360	360;
	2	3	0.01	0.2	0	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.01	20	5;
	2	0	0	2	30	0;
];
";

    #[test]
    fn parses_hand_written_case() {
        let net = parse_matpower_case(THREE_BUS).unwrap();
        assert_eq!(net.branches.len(), 3);
        assert_eq!(net.generators.len(), 2);
        assert_eq!(net.loads.len(), 1);
        assert_eq!(net.reference_bus(), 1);
        assert_eq!(net.branches[1].flow_limit_mw, UNLIMITED_RATE_MW);
        let g = &net.generators[0];
        assert_eq!((g.cost_a, g.cost_b, g.cost_c), (5.0, 20.0, 0.01));
        let g = &net.generators[1];
        assert_eq!((g.cost_a, g.cost_b, g.cost_c), (0.0, 30.0, 0.0));
    }

    #[test]
    fn multiple_reference_buses() {
        let text = THREE_BUS.replacen("2\t2\t0", "2\t3\t0", 1);
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("multiple reference buses"), "{err}");
    }

    #[test]
    fn piecewise_cost_is_unsupported() {
        let text = THREE_BUS.replace("2\t0\t0\t2\t30\t0;", "1\t0\t0\t2\t0\t0\t100\t3000;");
        assert!(matches!(parse_matpower_case(&text), Err(GridError::Unsupported(_))));
    }

    #[test]
    fn zero_reactance_rejected() {
        let text = THREE_BUS.replace("2\t3\t0.01\t0.2", "2\t3\t0.01\t0");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("zero-reactance"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = THREE_BUS.replace("1\t3\t0.01\t0.1", "1\t3\t0.01\tabc");
        match parse_matpower_case(&text).unwrap_err() {
            GridError::Parse { line, .. } => assert_eq!(line, 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_is_deterministic() {
        let a = parse_matpower_case(THREE_BUS).unwrap().to_canonical_json();
        let b = parse_matpower_case(THREE_BUS).unwrap().to_canonical_json();
        assert_eq!(a, b);
    }
}
