#![allow(dead_code)]

use cscopf_core::grid::{Branch, Bus, GenDynamics, Generator, Load, Network};

pub fn machine(id: u32, bus: u32, p: f64, h: f64, xd: f64) -> Generator {
    Generator {
        id,
        bus,
        p0_mw: p,
        p_min_mw: -1000.0,
        p_max_mw: 1000.0,
        cost_a: 0.0,
        cost_b: 10.0,
        cost_c: 0.01,
        dynamics: Some(GenDynamics { inertia_h: h, damping_d: 0.0, xd_prime: xd, mva_base: 100.0 }),
    }
}

pub fn line(id: u32, f: u32, t: u32, x: f64, lim: f64) -> Branch {
    Branch { id, from_bus: f, to_bus: t, reactance: x, flow_limit_mw: lim, in_service: true }
}

pub fn load(id: u32, bus: u32, l: f64) -> Load {
    Load { id, bus, l0_mw: l, l_min_mw: 0.0, l_max_mw: 1.25 * l, shed_cost: 1e4 }
}

/// Machine 1 against a near-infinite bus through a single line.
pub fn smib(pm_mw: f64) -> Network {
    Network::new(
        vec![Bus { id: 1, is_reference: false }, Bus { id: 2, is_reference: true }],
        vec![line(1, 1, 2, 0.2, 500.0)],
        vec![machine(1, 1, pm_mw, 5.0, 0.3), machine(2, 2, -pm_mw, 1000.0, 0.001)],
        vec![],
        100.0,
    )
    .unwrap()
}

/// Three machines on a lossless meshed network with no loads.
pub fn lossless3() -> Network {
    Network::new(
        (1..=4).map(|id| Bus { id, is_reference: id == 1 }).collect(),
        vec![line(1, 1, 2, 0.1, 500.0), line(2, 2, 3, 0.15, 500.0), line(3, 3, 4, 0.1, 500.0), line(4, 4, 1, 0.2, 500.0)],
        vec![machine(1, 1, 50.0, 4.0, 0.2), machine(2, 2, 30.0, 6.0, 0.25), machine(3, 3, -80.0, 8.0, 0.15)],
        vec![],
        100.0,
    )
    .unwrap()
}

/// WSCC-style three-machine, nine-bus layout with constant-admittance loads.
pub fn nine_bus() -> Network {
    Network::new(
        (1..=9).map(|id| Bus { id, is_reference: id == 1 }).collect(),
        vec![
            line(1, 1, 4, 0.0576, 300.0),
            line(2, 4, 5, 0.092, 300.0),
            line(3, 5, 6, 0.17, 300.0),
            line(4, 3, 6, 0.0586, 300.0),
            line(5, 6, 7, 0.1008, 300.0),
            line(6, 7, 8, 0.072, 300.0),
            line(7, 8, 2, 0.0625, 300.0),
            line(8, 8, 9, 0.161, 300.0),
            line(9, 9, 4, 0.085, 300.0),
        ],
        vec![machine(1, 1, 67.0, 23.64, 0.0608), machine(2, 2, 163.0, 6.4, 0.1198), machine(3, 3, 85.0, 3.01, 0.1813)],
        vec![load(5, 5, 125.0), load(7, 7, 100.0), load(9, 9, 90.0)],
        100.0,
    )
    .unwrap()
}

pub mod oracle {
    use std::collections::BTreeSet;

    use cscopf_core::grid::{Branch, Bus, Generator, Load, Network};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Connected network: a random spanning tree plus `extra` chords, two
    /// generators and a load on every other bus, balanced at `p0`/`l0`.
    pub fn random_network(seed: u64, nb: usize, extra: usize) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for k in 2..=nb as u32 {
            pairs.push((rng.random_range(1..k), k));
        }
        let mut tries = 0;
        while pairs.len() < nb - 1 + extra && tries < 1000 {
            tries += 1;
            let a = rng.random_range(1..=nb as u32);
            let b = rng.random_range(1..=nb as u32);
            if a != b && !pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
                pairs.push((a, b));
            }
        }
        let branches = pairs
            .iter()
            .enumerate()
            .map(|(k, &(f, t))| Branch {
                id: k as u32 + 1,
                from_bus: f,
                to_bus: t,
                reactance: rng.random_range(0.05..0.5),
                flow_limit_mw: rng.random_range(50.0..200.0),
                in_service: true,
            })
            .collect();
        let loads: Vec<Load> = (2..=nb as u32)
            .step_by(2)
            .map(|bus| {
                let l0 = rng.random_range(20.0..120.0);
                Load { id: bus, bus, l0_mw: l0, l_min_mw: 0.0, l_max_mw: 1.25 * l0, shed_cost: 1e3 }
            })
            .collect();
        let total: f64 = loads.iter().map(|l| l.l0_mw).sum();
        let share = rng.random_range(0.2..0.8);
        let g2_bus = rng.random_range(2..=nb as u32);
        let gens = vec![
            Generator {
                id: 1,
                bus: 1,
                p0_mw: total * share,
                p_min_mw: 0.0,
                p_max_mw: 2.0 * total,
                cost_a: 0.0,
                cost_b: 20.0,
                cost_c: 0.02,
                dynamics: None,
            },
            Generator {
                id: 2,
                bus: g2_bus,
                p0_mw: total * (1.0 - share),
                p_min_mw: 0.0,
                p_max_mw: 2.0 * total,
                cost_a: 0.0,
                cost_b: 25.0,
                cost_c: 0.01,
                dynamics: None,
            },
        ];
        let buses = (1..=nb as u32).map(|id| Bus { id, is_reference: id == 1 }).collect();
        Network::new(buses, branches, gens, loads, 100.0).unwrap()
    }

    /// Random balanced injection vector, MW per bus.
    pub fn random_injections(rng: &mut ChaCha8Rng, nb: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..nb).map(|_| rng.random_range(-100.0..100.0)).collect();
        let mean = p.iter().sum::<f64>() / nb as f64;
        p.iter_mut().for_each(|v| *v -= mean);
        p
    }

    /// DC power flow by a direct Laplacian solve, skipping `removed`.
    /// Returns `None` when the remaining network is islanded.
    pub fn dc_flows(net: &Network, injections_mw: &[f64], removed: &BTreeSet<u32>) -> Option<Vec<f64>> {
        let n = net.buses.len();
        let idx = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
        let r = idx(net.reference_bus());
        let mut b = DMatrix::<f64>::zeros(n, n);
        for br in net.branches.iter().filter(|b| b.in_service && !removed.contains(&b.id)) {
            let (f, t) = (idx(br.from_bus), idx(br.to_bus));
            let y = 1.0 / br.reactance;
            b[(f, f)] += y;
            b[(t, t)] += y;
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
        let keep: Vec<usize> = (0..n).filter(|&k| k != r).collect();
        let red = b.select_rows(&keep).select_columns(&keep);
        let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| injections_mw[k] / net.mva_base));
        if !connected(net, removed) {
            return None;
        }
        let th_red = red.lu().solve(&rhs)?;
        let mut theta = vec![0.0; n];
        for (a, &k) in keep.iter().enumerate() {
            theta[k] = th_red[a];
        }
        Some(
            net.branches
                .iter()
                .map(|br| {
                    if !br.in_service || removed.contains(&br.id) {
                        0.0
                    } else {
                        (theta[idx(br.from_bus)] - theta[idx(br.to_bus)]) / br.reactance * net.mva_base
                    }
                })
                .collect(),
        )
    }

    fn connected(net: &Network, removed: &BTreeSet<u32>) -> bool {
        let mut seen = BTreeSet::from([net.buses[0].id]);
        let mut stack = vec![net.buses[0].id];
        while let Some(b) = stack.pop() {
            for br in net.branches.iter().filter(|br| br.in_service && !removed.contains(&br.id)) {
                let other = if br.from_bus == b { br.to_bus } else if br.to_bus == b { br.from_bus } else { continue };
                if seen.insert(other) {
                    stack.push(other);
                }
            }
        }
        seen.len() == net.buses.len()
    }

    /// One bipartition of the buses, scored from `side_a`.
    #[derive(Debug, Clone)]
    pub struct Partition {
        pub side_a: BTreeSet<u32>,
        pub branches: Vec<u32>,
        pub flow: f64,
        pub capacity: f64,
    }

    /// Every bipartition of the bus set, both orientations.
    pub fn all_partitions(net: &Network, flows: &[f64]) -> Vec<Partition> {
        let ids: Vec<u32> = net.buses.iter().map(|b| b.id).collect();
        let n = ids.len();
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) - 1 {
            let side: BTreeSet<u32> = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ids[k]).collect();
            let mut branches = Vec::new();
            let (mut flow, mut capacity) = (0.0, 0.0);
            for (u, br) in net.branches.iter().enumerate() {
                let (fa, ta) = (side.contains(&br.from_bus), side.contains(&br.to_bus));
                if br.in_service && fa != ta {
                    branches.push(br.id);
                    flow += if fa { flows[u] } else { -flows[u] };
                    capacity += br.flow_limit_mw;
                }
            }
            branches.sort_unstable();
            out.push(Partition { side_a: side, branches, flow, capacity });
        }
        out
    }

    /// Dense grid minimum of a separable convex quadratic over a box and
    /// `a x <= b` rows, refined around the incumbent.
    pub fn grid_minimum(
        c: &[f64],
        d: &[f64],
        lo: &[f64],
        hi: &[f64],
        rows: &[(Vec<f64>, f64)],
    ) -> Option<Vec<f64>> {
        let n = c.len();
        let f = |x: &[f64]| (0..n).map(|j| c[j] * x[j] * x[j] + d[j] * x[j]).sum::<f64>();
        let feasible = |x: &[f64]| {
            rows.iter().all(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() <= *b + 1e-12)
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut center: Vec<f64> = (0..n).map(|j| 0.5 * (lo[j] + hi[j])).collect();
        let mut half: Vec<f64> = (0..n).map(|j| 0.5 * (hi[j] - lo[j])).collect();
        for step in [0.05, 0.01, 0.002, 0.0004, 0.00008, 0.000016] {
            let counts: Vec<usize> = half.iter().map(|h| (2.0 * h / step).round() as usize + 1).collect();
            let total: usize = counts.iter().product();
            let mut x = vec![0.0; n];
            for k in 0..total {
                let mut r = k;
                for j in 0..n {
                    let i = r % counts[j];
                    r /= counts[j];
                    x[j] = (center[j] - half[j] + i as f64 * step).clamp(lo[j], hi[j]);
                }
                if feasible(&x) {
                    let v = f(&x);
                    if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                        best = Some((v, x.clone()));
                    }
                }
            }
            let (_, bx) = best.as_ref()?;
            center = bx.clone();
            half = vec![step * 3.0; n];
        }
        best.map(|(_, x)| x)
    }
}

pub mod qp_oracle {
    use cscopf_core::constraint::{ConstraintTag, LinearConstraint, Provenance, Sense};
    use cscopf_core::cscopf::QuadraticProgram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub struct SmallQp {
        pub qp: QuadraticProgram,
        pub rows: Vec<(Vec<f64>, f64)>,
    }

    /// Strictly convex QP in one to three variables with random `<=`/`>=`
    /// rows, each keeping a random interior point at least 0.3 inside.
    pub fn random_small_qp(seed: u64) -> SmallQp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=3);
        let quad: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let linear: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..-1.0)).collect();
        let upper: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let inside: Vec<f64> = (0..n).map(|j| rng.random_range(lower[j] * 0.5..upper[j] * 0.5)).collect();
        let mut constraints = Vec::new();
        let mut rows = Vec::new();
        for k in 0..rng.random_range(0..=3) {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at: f64 = a.iter().zip(&inside).map(|(x, y)| x * y).sum();
            let slack = rng.random_range(0.3..2.0);
            let (sense, rhs, oracle_row) = if rng.random_bool(0.5) {
                (Sense::Le, at + slack, (a.clone(), at + slack))
            } else {
                (Sense::Ge, at - slack, (a.iter().map(|v| -v).collect(), -(at - slack)))
            };
            rows.push(oracle_row);
            constraints.push(LinearConstraint {
                coeffs: a,
                sense,
                rhs,
                tag: ConstraintTag::BranchFlow,
                provenance: Provenance::new(None, format!("row:{k}")),
            });
        }
        let qp = QuadraticProgram {
            gen_ids: (1..=n as u32).collect(),
            load_ids: vec![],
            quad,
            linear,
            lower,
            upper,
            constraints,
            skipped_outage_rows: vec![],
        };
        SmallQp { qp, rows }
    }
}

pub mod fixture {
    use cscopf_core::cscopf::{Contingency, RunOptions};
    use cscopf_core::dynamics::estimate_tau;
    use cscopf_core::fixtures::{wildfire9, wildfire9_contingency};
    use cscopf_core::grid::Network;
    use cscopf_core::tscp::{build_dataset, sample_loads, train_model, SamplingSpec, TscpModel};

    pub struct Fixture {
        pub net: Network,
        pub contingency: Contingency,
        pub opts: RunOptions,
        pub model: TscpModel,
    }

    /// Wildfire fixture with `tau` re-estimated from a 4 MW shift and a
    /// predictor trained on 200 samples.
    pub fn wildfire() -> Fixture {
        let net = wildfire9();
        let contingency = wildfire9_contingency();
        let mut opts = RunOptions::default();
        opts.sime.tau = estimate_tau(&net, &contingency.sequence, &opts.tds, &opts.sime, 4.0).unwrap();
        let samples = sample_loads(&net, &SamplingSpec::default(), 200, 1).unwrap();
        let ds = build_dataset(&net, &samples, &contingency.sequence, &opts.tds, &opts.sime);
        let model = train_model(&ds, &contingency.id, Some(1), true).unwrap();
        Fixture { net, contingency, opts, model }
    }
}
