# Regenerates the wildfire9 fixture files in the current directory.
# Usage: python3 gen_wildfire9.py [key=value ...]
import json, sys
P = dict(h1=2.0, h2=10.0, h3=20.0, x1=0.15, xc=0.1, p1=180., p2=190., p3=180., lA=50., fault=0.1, d=10.0)
for a in sys.argv[1:]:
    k, v = a.split('='); P[k] = float(v)
buses = [{"id": i, "is_reference": i == 8} for i in range(1, 10)]
def br(i, f, t, x, lim): return {"id": i, "from_bus": f, "to_bus": t, "reactance": x, "flow_limit_mw": lim}
branches = [
    br(1, 1, 3, P['x1'], 300), br(2, 2, 3, 0.05, 300), br(3, 2, 4, 0.05, 300), br(4, 3, 4, 0.05, 300),
    br(5, 3, 5, P['xc'], 150), br(6, 4, 6, P['xc'], 150), br(7, 3, 6, P['xc'], 120), br(8, 4, 5, P['xc'], 120),
    br(9, 5, 6, 0.05, 250), br(10, 5, 7, 0.06, 250), br(11, 6, 9, 0.06, 250), br(12, 7, 8, 0.05, 300),
    br(13, 8, 9, 0.05, 300), br(14, 7, 9, 0.08, 250),
]
lam = 30.0
def gen(i, bus, p, c, pmax):
    return {"id": i, "bus": bus, "p0_mw": p, "p_min_mw": 0, "p_max_mw": pmax, "cost_a": 100.0,
            "cost_b": round(lam - 2 * c * p, 6), "cost_c": c}
gens = [gen(1, 1, P['p1'], 0.02, 250), gen(2, 2, P['p2'], 0.01, 350), gen(3, 8, P['p3'], 0.03, 450)]
total = P['p1'] + P['p2'] + P['p3']
lB = total - P['lA']
loads = [
    {"id": 1, "bus": 4, "l0_mw": P['lA'], "l_max_mw": P['lA']},
    {"id": 2, "bus": 5, "l0_mw": lB * 0.3, "l_max_mw": lB * 0.3 * 1.25},
    {"id": 3, "bus": 7, "l0_mw": lB * 0.4, "l_max_mw": lB * 0.4 * 1.25},
    {"id": 4, "bus": 9, "l0_mw": lB * 0.3, "l_max_mw": lB * 0.3 * 1.25},
]
for l in loads: l["shed_cost"] = 1000.0
case = {"buses": buses, "branches": branches, "generators": gens, "loads": loads, "mva_base": 100}
dyn = {"generator_dynamics": [
    {"id": 1, "inertia_h": P['h1'], "damping_d": P['d'], "xd_prime": 0.25, "mva_base": 100},
    {"id": 2, "inertia_h": P['h2'], "damping_d": P['d'], "xd_prime": 0.2, "mva_base": 100},
    {"id": 3, "inertia_h": P['h3'], "damping_d": P['d'], "xd_prime": 0.1, "mva_base": 100}]}
ev = []
starts = [0.2 + k * (3.0 - P['fault']) / 4 for k in range(5)]
lines = [(5, 0.1), (6, 0.5), (5, 0.6), (6, 0.7), (5, 0.8)]
for t, (b, pos) in zip(starts, lines):
    ev.append({"t": round(t, 4), "kind": "apply_fault", "branch": b, "pos": pos})
    ev.append({"t": round(t + P['fault'], 4), "kind": "clear_fault", "branch": b, "pos": pos})
tend = round(starts[-1] + P['fault'], 4)
ev.append({"t": tend, "kind": "trip_branch", "branch": 5, "pos": 0.5})
ev.append({"t": tend, "kind": "trip_branch", "branch": 6, "pos": 0.5})
json.dump(case, open("wildfire9.json", "w"), indent=2)
json.dump(dyn, open("wildfire9_dynamics.json", "w"), indent=2)
json.dump({"id": "corridor-3-5-4-6", "sequence": {"events": ev}, "outages": [5, 6]}, open("wildfire9_contingency.json", "w"), indent=2)
