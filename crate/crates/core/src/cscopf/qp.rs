//! Dense convex QP `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u` with diagonal
//! `P`, solved by operator splitting (ADMM) and finished by an active-set
//! polish that is accepted only when its KKT residuals pass.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute tolerance on primal, stationarity and complementarity.
    pub tol: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Splitting iterations before the interior-point fallback is tried.
    pub fallback_after: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, eps_rel: 1e-6, max_iter: 50_000, rho: 0.1, sigma: 1e-6, alpha: 1.6, scaling_iters: 15, polish: true, fallback_after: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.complementarity)
    }
}

/// Problem in solver form. Infinite entries of `l`/`u` denote open sides.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub a: DMatrix<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub x: Vec<f64>,
    /// Row multipliers; positive when the upper side binds.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt: KktResiduals,
    /// Rows carrying the infeasibility certificate, strongest first.
    pub certificate_rows: Vec<usize>,
}

impl DenseQp {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, v)| 0.5 * self.p[j] * v * v + self.q[j] * v).sum()
    }

    /// KKT residuals of a primal-dual pair, in the problem's own units.
    pub fn kkt(&self, x: &[f64], y: &[f64]) -> KktResiduals {
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let ax = &self.a * &xv;
        let aty = self.a.transpose() * &yv;
        let mut r = KktResiduals::default();
        for i in 0..self.m() {
            r.primal = r.primal.max(self.l[i] - ax[i]).max(ax[i] - self.u[i]);
            let c = if y[i] > 0.0 {
                if self.u[i].is_finite() { y[i] * (self.u[i] - ax[i]).abs() } else { y[i] }
            } else if y[i] < 0.0 {
                if self.l[i].is_finite() { -y[i] * (ax[i] - self.l[i]).abs() } else { -y[i] }
            } else {
                0.0
            };
            r.complementarity = r.complementarity.max(c);
        }
        for j in 0..self.n() {
            r.stationarity = r.stationarity.max((self.p[j] * x[j] + self.q[j] + aty[j]).abs());
        }
        r
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Scaled {
    p: DVector<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

/// Ruiz equilibration of the KKT matrix followed by cost scaling.
fn scale(qp: &DenseQp, iters: usize) -> Scaled {
    let (n, m) = (qp.n(), qp.m());
    let mut p = DVector::from_column_slice(&qp.p);
    let mut q = DVector::from_column_slice(&qp.q);
    let mut a = qp.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let clip = |v: f64| if v < 1e-4 { 1.0 } else { v.clamp(1e-4, 1e4) };
    for _ in 0..iters {
        let dk = DVector::from_fn(n, |j, _| {
            let col = (0..m).fold(p[j].abs(), |acc, i| acc.max(a[(i, j)].abs()));
            1.0 / clip(col).sqrt()
        });
        let ek = DVector::from_fn(m, |i, _| {
            let row = (0..n).fold(0.0_f64, |acc, j| acc.max(a[(i, j)].abs()));
            1.0 / clip(row).sqrt()
        });
        for j in 0..n {
            p[j] *= dk[j] * dk[j];
            q[j] *= dk[j];
            d[j] *= dk[j];
        }
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] *= ek[i] * dk[j];
            }
            e[i] *= ek[i];
        }
    }
    let mean_p = if n > 0 { p.iter().map(|v| v.abs()).sum::<f64>() / n as f64 } else { 0.0 };
    let c = 1.0 / clip(mean_p.max(inf_norm(&q)));
    p *= c;
    q *= c;
    let l = DVector::from_fn(m, |i, _| qp.l[i] * e[i]);
    let u = DVector::from_fn(m, |i, _| qp.u[i] * e[i]);
    Scaled { p, q, a, l, u, d, e, c }
}

fn is_equality(l: f64, u: f64) -> bool {
    l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-12 * (1.0 + l.abs())
}

/// Equality-constrained solve for a given active set: `(row, target)`.
/// Returns `x` and the multipliers of the active rows.
fn solve_active(qp: &DenseQp, active: &[(usize, f64)]) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, k) = (qp.n(), active.len());
    let delta = 1e-9;
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    for j in 0..n {
        kkt[(j, j)] = qp.p[j];
        rhs[j] = -qp.q[j];
    }
    for (r, &(i, target)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(i, j)];
            kkt[(j, n + r)] = qp.a[(i, j)];
        }
        rhs[n + r] = target;
    }
    let mut reg = kkt.clone();
    for j in 0..n {
        reg[(j, j)] += delta;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= delta;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..25 {
        let res = &rhs - &kkt * &sol;
        if inf_norm(&res) < 1e-13 * (1.0 + inf_norm(&rhs)) {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Free,
    Lower,
    Upper,
}

/// Greedy pick of linearly independent rows of `A`, in the given order.
fn independent_rows(qp: &DenseQp, order: &[usize]) -> Vec<usize> {
    let n = qp.n();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for &i in order {
        if basis.len() == n {
            break;
        }
        let a = qp.a.row(i).transpose();
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = a;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= c * b;
            }
        }
        let r = v.norm();
        if r > 1e-9 * norm {
            basis.push(v / r);
            keep.push(i);
        }
    }
    keep
}

/// Primal-dual active-set iteration started from an approximate pair.
/// Dependent rows are dropped from the working set, so duplicated
/// constraints do not make the system singular.
fn polish(qp: &DenseQp, x0: &[f64], y0: &[f64], tol: f64) -> Option<(Vec<f64>, Vec<f64>, KktResiduals)> {
    let m = qp.m();
    let ax0 = &qp.a * DVector::from_column_slice(x0);
    let mut side: Vec<Side> = (0..m)
        .map(|i| {
            if qp.u[i].is_finite() && (qp.u[i] - ax0[i] < y0[i] || is_equality(qp.l[i], qp.u[i])) {
                Side::Upper
            } else if qp.l[i].is_finite() && ax0[i] - qp.l[i] < -y0[i] {
                Side::Lower
            } else {
                Side::Free
            }
        })
        .collect();
    let mut weight: Vec<f64> = y0.iter().map(|v| v.abs()).collect();
    for _ in 0..100 {
        let mut order: Vec<usize> = (0..m).filter(|&i| side[i] != Side::Free).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (is_equality(qp.l[a], qp.u[a]), is_equality(qp.l[b], qp.u[b]));
            eb.cmp(&ea).then(weight[b].total_cmp(&weight[a]))
        });
        let rows = independent_rows(qp, &order);
        let mut in_set = vec![false; m];
        for &i in &rows {
            in_set[i] = true;
        }
        for i in 0..m {
            if !in_set[i] && !is_equality(qp.l[i], qp.u[i]) {
                side[i] = Side::Free;
            }
        }
        let active: Vec<(usize, f64)> =
            rows.iter().map(|&i| (i, if side[i] == Side::Lower { qp.l[i] } else { qp.u[i] })).collect();
        let (x, ya) = solve_active(qp, &active)?;
        let mut y = vec![0.0; m];
        for (r, &(i, _)) in active.iter().enumerate() {
            y[i] = ya[r];
            weight[i] = ya[r].abs();
        }
        let ax = &qp.a * &x;
        let mut changed = false;
        for i in 0..m {
            let eq = is_equality(qp.l[i], qp.u[i]);
            match side[i] {
                Side::Free => {
                    let viol = (ax[i] - qp.u[i]).max(qp.l[i] - ax[i]);
                    if viol > tol {
                        side[i] = if ax[i] > qp.u[i] { Side::Upper } else { Side::Lower };
                        weight[i] = f64::MAX / 4.0 + viol;
                        changed = true;
                    }
                }
                Side::Upper if !eq && y[i] < -tol => {
                    side[i] = Side::Free;
                    changed = true;
                }
                Side::Lower if y[i] > tol => {
                    side[i] = Side::Free;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            let xs: Vec<f64> = x.iter().copied().collect();
            let r = qp.kkt(&xs, &y);
            return (r.max() <= tol).then_some((xs, y, r));
        }
    }
    None
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter().zip(dv.iter()).filter(|(_, d)| **d < 0.0).fold(1.0, |a, (v, d)| a.min(-v / d))
}

/// Mehrotra predictor-corrector interior point on the same problem. Used
/// when the splitting iteration stalls; returns the best pair seen.
fn interior_point(qp: &DenseQp, x0: &[f64], max_iter: usize) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (qp.n(), qp.m());
    let mut eq = Vec::new();
    let mut ineq: Vec<(usize, f64, f64)> = Vec::new();
    for i in 0..m {
        let norm = qp.a.row(i).norm();
        if norm == 0.0 {
            continue;
        }
        if is_equality(qp.l[i], qp.u[i]) {
            eq.push(i);
            continue;
        }
        if qp.u[i].is_finite() {
            ineq.push((i, 1.0, 1.0 / norm));
        }
        if qp.l[i].is_finite() {
            ineq.push((i, -1.0, 1.0 / norm));
        }
    }
    let (me, mi) = (eq.len(), ineq.len());
    let g = DMatrix::from_fn(mi, n, |k, j| {
        let (i, sg, w) = ineq[k];
        sg * w * qp.a[(i, j)]
    });
    let h = DVector::from_fn(mi, |k, _| {
        let (i, sg, w) = ineq[k];
        w * if sg > 0.0 { qp.u[i] } else { -qp.l[i] }
    });
    let e = DMatrix::from_fn(me, n, |k, j| qp.a[(eq[k], j)]);
    let b = DVector::from_fn(me, |k, _| qp.l[eq[k]]);
    let p = DVector::from_column_slice(&qp.p);
    let q = DVector::from_column_slice(&qp.q);
    let gt = g.transpose();
    let et = e.transpose();
    let to_y = |z: &DVector<f64>, lam: &DVector<f64>| {
        let mut y = vec![0.0; m];
        for (k, &(i, sg, w)) in ineq.iter().enumerate() {
            y[i] += sg * w * z[k];
        }
        for (k, &i) in eq.iter().enumerate() {
            y[i] += lam[k];
        }
        y
    };

    let mut x = DVector::from_column_slice(x0);
    let mut s = (&h - &g * &x).map(|v| v.max(1.0));
    let mut z = DVector::from_element(mi, 1.0);
    let mut lam = DVector::zeros(me);
    let mut best = (f64::INFINITY, x0.to_vec(), vec![0.0; m]);
    for _ in 0..max_iter {
        let rd = p.component_mul(&x) + &q + &et * &lam + &gt * &z;
        let re = &e * &x - &b;
        let rg = &g * &x + &s - &h;
        let xs: Vec<f64> = x.iter().copied().collect();
        let ys = to_y(&z, &lam);
        let r = qp.kkt(&xs, &ys).max();
        if r < best.0 {
            best = (r, xs, ys);
        }
        let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
        if inf_norm(&rd) < 1e-11 && inf_norm(&re) < 1e-11 && inf_norm(&rg) < 1e-11 && mu < 1e-13 {
            break;
        }
        let w = z.component_div(&s);
        let mut kkt = DMatrix::zeros(n + me, n + me);
        let hm = &gt * DMatrix::from_diagonal(&w) * &g;
        kkt.view_mut((0, 0), (n, n)).copy_from(&hm);
        for j in 0..n {
            kkt[(j, j)] += p[j] + 1e-12;
        }
        kkt.view_mut((0, n), (n, me)).copy_from(&et);
        kkt.view_mut((n, 0), (me, n)).copy_from(&e);
        for r in 0..me {
            kkt[(n + r, n + r)] = -1e-12;
        }
        let lu = kkt.lu();
        let newton = |rc: &DVector<f64>| {
            let t = (rc - z.component_mul(&rg)).component_div(&s);
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&(&gt * &t - &rd));
            rhs.rows_mut(n, me).copy_from(&(-&re));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dl = sol.rows(n, me).into_owned();
            let gdx = &g * &dx;
            let ds = -&rg - &gdx;
            let dz = (-rc + z.component_mul(&rg) + z.component_mul(&gdx)).component_div(&s);
            Some((dx, dl, ds, dz))
        };
        let sz = s.component_mul(&z);
        let Some((_, _, ds_a, dz_a)) = newton(&sz) else { break };
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if mi > 0 { (&s + a_aff * &ds_a).dot(&(&z + a_aff * &dz_a)) / mi as f64 } else { 0.0 };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let rc = &sz + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
        let Some((dx, dl, ds, dz)) = newton(&rc) else { break };
        let a = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += a * dx;
        lam += a * dl;
        s += a * ds;
        z += a * dz;
        if s.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            break;
        }
    }
    (best.1, best.2)
}

/// Solves the QP. The result is `Optimal` only when the KKT residuals of
/// the returned pair are within `opts.tol`.
pub fn solve_dense(qp: &DenseQp, opts: &SolverOptions) -> QpResult {
    let (n, m) = (qp.n(), qp.m());
    assert!(qp.l.iter().zip(&qp.u).all(|(l, u)| l <= u), "row bounds must satisfy l <= u");
    let s = scale(qp, opts.scaling_iters);
    let rho_for = |i: usize, rho: f64| {
        if is_equality(s.l[i], s.u[i]) {
            1e3 * rho
        } else if !s.l[i].is_finite() && !s.u[i].is_finite() {
            1e-6
        } else {
            rho
        }
    };
    let mut rho = opts.rho;
    let mut rv = DVector::from_fn(m, |i, _| rho_for(i, rho));
    let factor = |rv: &DVector<f64>| {
        let mut k = s.a.transpose() * DMatrix::from_diagonal(rv) * &s.a;
        for j in 0..n {
            k[(j, j)] += s.p[j] + opts.sigma;
        }
        k.cholesky().expect("ADMM system is positive definite")
    };
    let mut chol = factor(&rv);

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let unscale_x = |x: &DVector<f64>| -> Vec<f64> { (0..n).map(|j| s.d[j] * x[j]).collect() };
    let unscale_y = |y: &DVector<f64>| -> Vec<f64> { (0..m).map(|i| s.e[i] * y[i] / s.c).collect() };

    for k in 1..=opts.max_iter {
        let rhs = opts.sigma * &x - &s.q + s.a.transpose() * (rv.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &s.a * &xt;
        let x_new = opts.alpha * &xt + (1.0 - opts.alpha) * &x;
        let zh = opts.alpha * &zt + (1.0 - opts.alpha) * &z;
        let z_new = DVector::from_fn(m, |i, _| (zh[i] + y[i] / rv[i]).clamp(s.l[i], s.u[i]));
        let y_new = &y + rv.component_mul(&(&zh - &z_new));
        let dy = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        let fallback_at = opts.fallback_after.min(opts.max_iter);
        if k % 10 != 0 && k != opts.max_iter && k != fallback_at {
            continue;
        }
        // residuals in original units
        let ax = &s.a * &x;
        let px = s.p.component_mul(&x);
        let aty = s.a.transpose() * &y;
        let r_prim = (0..m).map(|i| ((ax[i] - z[i]) / s.e[i]).abs()).fold(0.0, f64::max);
        let r_dual = (0..n).map(|j| ((px[j] + s.q[j] + aty[j]) / (s.c * s.d[j])).abs()).fold(0.0, f64::max);
        let ax_n = (0..m).map(|i| (ax[i] / s.e[i]).abs()).fold(0.0, f64::max);
        let z_n = (0..m).map(|i| (z[i] / s.e[i]).abs()).fold(0.0, f64::max);
        let dual_n = (0..n)
            .map(|j| (px[j] / (s.c * s.d[j])).abs().max((aty[j] / (s.c * s.d[j])).abs()).max((s.q[j] / (s.c * s.d[j])).abs()))
            .fold(0.0, f64::max);
        let eps_prim = opts.tol + opts.eps_rel * ax_n.max(z_n);
        let eps_dual = opts.tol + opts.eps_rel * dual_n;

        // primal infeasibility certificate from the dual increment
        let dy_u: DVector<f64> = DVector::from_fn(m, |i, _| {
            let v = s.e[i] * dy[i];
            if !s.u[i].is_finite() && v > 0.0 || !s.l[i].is_finite() && v < 0.0 {
                0.0
            } else {
                v
            }
        });
        let dy_norm = inf_norm(&dy_u);
        if dy_norm > 1e-12 {
            let at_dy = qp.a.transpose() * &dy_u;
            let support: f64 = (0..m)
                .map(|i| if dy_u[i] > 0.0 { qp.u[i] * dy_u[i] } else if dy_u[i] < 0.0 { qp.l[i] * dy_u[i] } else { 0.0 })
                .sum();
            if inf_norm(&at_dy) <= 1e-6 * dy_norm && support < -1e-6 * dy_norm {
                let mut rows: Vec<usize> = (0..m).filter(|&i| dy_u[i].abs() > 1e-3 * dy_norm).collect();
                rows.sort_by(|&a, &b| dy_u[b].abs().total_cmp(&dy_u[a].abs()));
                return QpResult {
                    x: unscale_x(&x),
                    y: unscale_y(&y),
                    status: QpStatus::Infeasible,
                    iterations: k,
                    kkt: qp.kkt(&unscale_x(&x), &unscale_y(&y)),
                    certificate_rows: rows,
                };
            }
        }

        let converged = r_prim <= eps_prim && r_dual <= eps_dual;
        let try_polish = opts.polish && (converged || k % 50 == 0);
        if try_polish {
            let (xs, ys) = (unscale_x(&x), unscale_y(&y));
            if let Some((xp, yp, r)) = polish(qp, &xs, &ys, opts.tol) {
                return QpResult { x: xp, y: yp, status: QpStatus::Optimal, iterations: k, kkt: r, certificate_rows: vec![] };
            }
        }
        if converged {
            let (xs, ys) = (unscale_x(&x), unscale_y(&y));
            let r = qp.kkt(&xs, &ys);
            if r.max() <= opts.tol {
                return QpResult { x: xs, y: ys, status: QpStatus::Optimal, iterations: k, kkt: r, certificate_rows: vec![] };
            }
        }

        if k == fallback_at {
            let (xi, yi) = interior_point(qp, &unscale_x(&x), 200);
            let polished = if opts.polish { polish(qp, &xi, &yi, opts.tol) } else { None };
            if let Some((xp, yp, r)) = polished {
                return QpResult { x: xp, y: yp, status: QpStatus::Optimal, iterations: k, kkt: r, certificate_rows: vec![] };
            }
            let r = qp.kkt(&xi, &yi);
            if r.max() <= opts.tol {
                return QpResult { x: xi, y: yi, status: QpStatus::Optimal, iterations: k, kkt: r, certificate_rows: vec![] };
            }
        }

        // adaptive step size
        if k % 50 == 0 {
            let pz = s.p.component_mul(&x);
            let sp = inf_norm(&(&ax - &z)) / inf_norm(&ax).max(inf_norm(&z)).max(1e-10);
            let sd = inf_norm(&(&pz + &s.q + &aty)) / inf_norm(&pz).max(inf_norm(&aty)).max(inf_norm(&s.q)).max(1e-10);
            let ratio = (sp / sd.max(1e-300)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                rv = DVector::from_fn(m, |i, _| rho_for(i, rho));
                chol = factor(&rv);
            }
        }
    }
    let (xs, ys) = (unscale_x(&x), unscale_y(&y));
    let r = qp.kkt(&xs, &ys);
    QpResult { x: xs, y: ys, status: QpStatus::IterationLimit, iterations: opts.max_iter, kkt: r, certificate_rows: vec![] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(p: Vec<f64>, q: Vec<f64>, rows: Vec<(Vec<f64>, f64, f64)>, lo: f64, hi: f64) -> DenseQp {
        let n = q.len();
        let m = rows.len() + n;
        let mut a = DMatrix::zeros(m, n);
        let mut l = Vec::new();
        let mut u = Vec::new();
        for (i, (r, lo_i, hi_i)) in rows.iter().enumerate() {
            for j in 0..n {
                a[(i, j)] = r[j];
            }
            l.push(*lo_i);
            u.push(*hi_i);
        }
        for j in 0..n {
            a[(rows.len() + j, j)] = 1.0;
            l.push(lo);
            u.push(hi);
        }
        DenseQp { p, q, a, l, u }
    }

    #[test]
    fn two_generators_forced_shift() {
        let qp = boxed(
            vec![2.0, 2.0],
            vec![0.0, 0.0],
            vec![(vec![1.0, 1.0], 0.0, 0.0), (vec![1.0, 0.0], f64::NEG_INFINITY, -10.0)],
            -100.0,
            100.0,
        );
        let r = solve_dense(&qp, &SolverOptions::default());
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] + 10.0).abs() < 1e-6 && (r.x[1] - 10.0).abs() < 1e-6, "{:?}", r.x);
        assert!((qp.objective(&r.x) - 200.0).abs() < 1e-4);
        assert!(r.kkt.max() <= 1e-6);
    }

    #[test]
    fn unconstrained_interior() {
        let qp = boxed(vec![2.0], vec![-4.0], vec![], -10.0, 10.0);
        let r = solve_dense(&qp, &SolverOptions::default());
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn linear_cost_goes_to_bound() {
        let qp = boxed(vec![0.0, 0.0], vec![1.0, -2.0], vec![], -3.0, 5.0);
        let r = solve_dense(&qp, &SolverOptions::default());
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] + 3.0).abs() < 1e-8 && (r.x[1] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn disjoint_bounds_are_infeasible() {
        let qp = boxed(vec![2.0], vec![0.0], vec![(vec![1.0], f64::NEG_INFINITY, -10.0)], -5.0, 5.0);
        let r = solve_dense(&qp, &SolverOptions::default());
        assert_eq!(r.status, QpStatus::Infeasible);
        assert!(r.certificate_rows.contains(&0));
        assert!(r.certificate_rows.contains(&1));
    }

    #[test]
    fn redundant_active_rows() {
        // the same bound twice plus a balance row
        let qp = boxed(
            vec![2.0, 2.0],
            vec![0.0, 0.0],
            vec![
                (vec![1.0, 1.0], 0.0, 0.0),
                (vec![1.0, 0.0], f64::NEG_INFINITY, -10.0),
                (vec![2.0, 0.0], f64::NEG_INFINITY, -20.0),
            ],
            -10.0,
            100.0,
        );
        let r = solve_dense(&qp, &SolverOptions::default());
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x[0] + 10.0).abs() < 1e-6);
        assert!(r.kkt.max() <= 1e-6, "{:?}", r.kkt);
    }
}
