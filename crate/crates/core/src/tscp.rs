//! Day-ahead TSCP model: load sampling, dataset generation by simulation,
//! affine least-squares fit of the transient stability correction factor,
//! and accuracy metrics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{assess, FaultSequence, SimeConfig, TdsOptions};
use crate::grid::{GenId, LoadId, Network};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
/// Largest relative input error accepted by [`evaluate`].
pub const MAX_NOISE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TscpError {
    #[error("invalid sampling spec: {0}")]
    Spec(String),
    #[error("load {0}: perturbation range does not meet its bounds")]
    EmptyRange(LoadId),
    #[error("need at least one sample")]
    NoSamples,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("regression is rank deficient and the ridge fallback is disabled")]
    RankDeficient,
    #[error("no usable training rows")]
    NoTrainingRows,
    #[error("noise level {0} outside [0, 0.05]")]
    NoiseLevel(f64),
    #[error("dataset csv: {0}")]
    Csv(String),
    #[error("model json: {0}")]
    Json(String),
}

/// Per-load multiplicative perturbation `l = l0 (1 + c + sigma z)`, where
/// `z` is a standard normal truncated at `truncation` and `c` is an optional
/// system-wide shift drawn the same way with `common_sigma`. Results are
/// clamped to the load bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub sigma: f64,
    pub truncation: f64,
    #[serde(default)]
    pub common_sigma: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { sigma: 0.05, truncation: 3.0, common_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSampleSet {
    /// `[n x loads]`, MW.
    pub samples: DMatrix<f64>,
    pub base: Vec<f64>,
    pub load_ids: Vec<LoadId>,
    pub spec: SamplingSpec,
    pub seed: u64,
}

impl LoadSampleSet {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.samples.row(k).iter().copied().collect()
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, truncation: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= truncation {
            return z;
        }
    }
}

pub fn sample_loads(net: &Network, spec: &SamplingSpec, n: usize, seed: u64) -> Result<LoadSampleSet, TscpError> {
    if n == 0 {
        return Err(TscpError::NoSamples);
    }
    for (name, v) in [("sigma", spec.sigma), ("truncation", spec.truncation), ("common_sigma", spec.common_sigma)] {
        if !v.is_finite() || v < 0.0 {
            return Err(TscpError::Spec(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    if spec.truncation == 0.0 && (spec.sigma > 0.0 || spec.common_sigma > 0.0) {
        return Err(TscpError::Spec("truncation must be positive when sigma is".into()));
    }
    let span = (spec.sigma + spec.common_sigma) * spec.truncation;
    for l in &net.loads {
        let (lo, hi) = (l.l0_mw * (1.0 - span), l.l0_mw * (1.0 + span));
        if lo.min(hi) > l.l_max_mw || lo.max(hi) < l.l_min_mw {
            return Err(TscpError::EmptyRange(l.id));
        }
    }
    let base: Vec<f64> = net.loads.iter().map(|l| l.l0_mw).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = DMatrix::zeros(n, base.len());
    for k in 0..n {
        let common = if spec.common_sigma > 0.0 { spec.common_sigma * truncated_normal(&mut rng, spec.truncation) } else { 0.0 };
        for (j, l) in net.loads.iter().enumerate() {
            let z = if spec.sigma > 0.0 { truncated_normal(&mut rng, spec.truncation) } else { 0.0 };
            let v = l.l0_mw * (1.0 + common + spec.sigma * z);
            samples[(k, j)] = v.clamp(l.l_min_mw, l.l_max_mw);
        }
    }
    Ok(LoadSampleSet {
        samples,
        base,
        load_ids: net.loads.iter().map(|l| l.id).collect(),
        spec: spec.clone(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Stable,
    Unstable,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub load_ids: Vec<LoadId>,
    /// `[n x loads]`, MW.
    pub x: DMatrix<f64>,
    /// Correction factor per row, MW. Zero for stable rows, NaN for failed.
    pub y: Vec<f64>,
    pub status: Vec<RowStatus>,
    pub critical_machines: Vec<Vec<GenId>>,
}

/// Network with loads set to `loads` and every generator scaled by the same
/// factor so that total generation meets total load.
pub fn rescale_dispatch(net: &Network, loads: &[f64]) -> Network {
    let l0: f64 = net.loads.iter().map(|l| l.l0_mw).sum();
    let l1: f64 = loads.iter().sum();
    let s = if l0.abs() > 0.0 { l1 / l0 } else { 1.0 };
    let gen: Vec<f64> = net.generators.iter().map(|g| g.p0_mw * s).collect();
    net.with_operating_point(&gen, loads)
}

/// Simulates the contingency for every sample. Rows are independent and run
/// in parallel; a failing row is flagged and the rest continue.
pub fn build_dataset(
    net: &Network,
    samples: &LoadSampleSet,
    seq: &FaultSequence,
    tds: &TdsOptions,
    sime: &SimeConfig,
) -> Dataset {
    let rows: Vec<(f64, RowStatus, Vec<GenId>)> = (0..samples.len())
        .into_par_iter()
        .map(|k| {
            let case = rescale_dispatch(net, &samples.row(k));
            match assess(&case, seq, tds, sime) {
                Ok((a, _)) if a.is_stable() => (0.0, RowStatus::Stable, Vec::new()),
                Ok((a, _)) => (a.delta_p_tr_mw, RowStatus::Unstable, a.critical_machines),
                Err(e) => (f64::NAN, RowStatus::Failed(e.to_string()), Vec::new()),
            }
        })
        .collect();
    let mut y = Vec::with_capacity(rows.len());
    let mut status = Vec::with_capacity(rows.len());
    let mut critical_machines = Vec::with_capacity(rows.len());
    for (v, s, cm) in rows {
        y.push(v);
        status.push(s);
        critical_machines.push(cm);
    }
    Dataset { load_ids: samples.load_ids.clone(), x: samples.samples.clone(), y, status, critical_machines }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows usable for training. Failed rows are always dropped; stable rows
    /// only when `include_stable` is false.
    pub fn training_rows(&self, include_stable: bool) -> (DMatrix<f64>, Vec<f64>) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| match self.status[k] {
                RowStatus::Unstable => true,
                RowStatus::Stable => include_stable,
                RowStatus::Failed(_) => false,
            })
            .collect();
        let x = DMatrix::from_fn(keep.len(), self.x.ncols(), |r, c| self.x[(keep[r], c)]);
        (x, keep.iter().map(|&k| self.y[k]).collect())
    }

    /// The critical-machine set seen most often among unstable rows.
    pub fn dominant_critical_machines(&self) -> Vec<GenId> {
        let mut counts: BTreeMap<&Vec<GenId>, usize> = BTreeMap::new();
        for (cm, s) in self.critical_machines.iter().zip(&self.status) {
            if *s == RowStatus::Unstable {
                *counts.entry(cm).or_default() += 1;
            }
        }
        let mut best: Option<(&Vec<GenId>, usize)> = None;
        for (cm, c) in counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((cm, c));
            }
        }
        best.map(|(cm, _)| cm.clone()).unwrap_or_default()
    }

    /// CSV with one column per load, then `delta_p_tr`, `stable_flag` and
    /// `error` (empty unless the row failed).
    pub fn to_csv(&self) -> Result<String, TscpError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self.load_ids.iter().map(|id| format!("load_{id}")).collect();
        header.extend(["delta_p_tr".into(), "stable_flag".into(), "error".into()]);
        w.write_record(&header).map_err(|e| TscpError::Csv(e.to_string()))?;
        for k in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(k).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[k].to_string());
            let (flag, err) = match &self.status[k] {
                RowStatus::Stable => ("1", String::new()),
                RowStatus::Unstable => ("0", String::new()),
                RowStatus::Failed(e) => ("0", e.clone()),
            };
            rec.push(flag.into());
            rec.push(err);
            w.write_record(&rec).map_err(|e| TscpError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| TscpError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, TscpError> {
        let err = |e: &dyn std::fmt::Display| TscpError::Csv(e.to_string());
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| err(&e))?.clone();
        let nl = header.len().checked_sub(3).ok_or_else(|| err(&"too few columns"))?;
        let load_ids = header
            .iter()
            .take(nl)
            .map(|h| h.strip_prefix("load_").and_then(|s| s.parse().ok()).ok_or_else(|| err(&format!("bad column {h}"))))
            .collect::<Result<Vec<LoadId>, _>>()?;
        let mut xs = Vec::new();
        let mut y = Vec::new();
        let mut status = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| err(&e))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("row {}: bad number {s:?}", line + 1)));
            for j in 0..nl {
                xs.push(num(&rec[j])?);
            }
            y.push(num(&rec[nl])?);
            status.push(match (&rec[nl + 1], &rec[nl + 2]) {
                ("1", _) => RowStatus::Stable,
                (_, "") => RowStatus::Unstable,
                (_, e) => RowStatus::Failed(e.to_string()),
            });
        }
        let n = y.len();
        Ok(Dataset {
            load_ids,
            x: DMatrix::from_row_slice(n, nl, &xs),
            critical_machines: vec![Vec::new(); n],
            y,
            status,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TscpModel {
    pub schema_version: u32,
    /// MW per MW of each load.
    pub theta: Vec<f64>,
    pub theta0: f64,
    pub contingency_id: String,
    pub n: usize,
    pub seed: Option<u64>,
    pub load_ids: Vec<LoadId>,
    /// Machines the predicted correction is taken from.
    pub critical_machines: Vec<GenId>,
    /// Ridge penalty applied when the normal equations were singular.
    pub ridge_lambda: Option<f64>,
    /// Training mean squared error.
    pub loss_history: Vec<f64>,
    /// SIME `tau` the training targets were computed with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sime_tau: Option<f64>,
}

impl TscpModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TscpError> {
        serde_json::from_str(text).map_err(|e| TscpError::Json(e.to_string()))
    }

    /// Affine evaluation without the clamp.
    pub fn predict_raw(&self, loads: &[f64]) -> Result<f64, TscpError> {
        if loads.len() != self.theta.len() {
            return Err(TscpError::Dimension { expected: self.theta.len(), got: loads.len() });
        }
        Ok(self.theta.iter().zip(loads).map(|(t, l)| t * l).sum::<f64>() + self.theta0)
    }

    /// Predicted correction factor, MW, never negative.
    pub fn predict(&self, loads: &[f64]) -> Result<f64, TscpError> {
        Ok(self.predict_raw(loads)?.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub ridge_fallback: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { ridge_fallback: true }
    }
}

pub fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> Result<TscpModel, TscpError> {
    fit_linear_with(x, y, FitOptions::default())
}

/// Least squares on centered data through the normal equations. A singular
/// or numerically rank-deficient system is retried with a ridge penalty of
/// `1e-8 * trace(XtX) / p`.
pub fn fit_linear_with(x: &DMatrix<f64>, y: &[f64], opts: FitOptions) -> Result<TscpModel, TscpError> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(TscpError::Dimension { expected: n, got: y.len() });
    }
    if n == 0 {
        return Err(TscpError::NoTrainingRows);
    }
    let x_mean: DVector<f64> = DVector::from_fn(p, |j, _| x.column(j).mean());
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let a = xc.transpose() * &xc;
    let b = xc.transpose() * &yc;

    let well_posed = |chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let l = chol.l_dirty();
        let dmax = (0..p).map(|j| a[(j, j)]).fold(0.0, f64::max);
        (0..p).all(|j| l[(j, j)] * l[(j, j)] > 1e-12 * dmax)
    };
    let mut ridge = None;
    let theta = match a.clone().cholesky().filter(well_posed) {
        Some(c) if n > p => c.solve(&b),
        _ if p == 0 => DVector::zeros(0),
        _ => {
            if !opts.ridge_fallback {
                return Err(TscpError::RankDeficient);
            }
            let lambda = match 1e-8 * a.trace() / p as f64 {
                l if l > 0.0 => l,
                _ => 1.0,
            };
            ridge = Some(lambda);
            let reg = &a + DMatrix::identity(p, p) * lambda;
            reg.cholesky().ok_or(TscpError::RankDeficient)?.solve(&b)
        }
    };
    let theta0 = y_mean - theta.dot(&x_mean);
    let mse = (0..n)
        .map(|i| {
            let r = y[i] - (x.row(i) * &theta)[0] - theta0;
            r * r
        })
        .sum::<f64>()
        / n as f64;
    Ok(TscpModel {
        schema_version: MODEL_SCHEMA_VERSION,
        theta: theta.iter().copied().collect(),
        theta0,
        contingency_id: String::new(),
        n,
        seed: None,
        load_ids: Vec::new(),
        critical_machines: Vec::new(),
        ridge_lambda: ridge,
        loss_history: vec![mse],
        sime_tau: None,
    })
}

/// Fits the predictor for one contingency. Stable rows enter as `y = 0`
/// unless `include_stable` is false; the critical machines are the set seen
/// most often among unstable rows.
pub fn train_model(
    dataset: &Dataset,
    contingency_id: &str,
    seed: Option<u64>,
    include_stable: bool,
) -> Result<TscpModel, TscpError> {
    let (x, y) = dataset.training_rows(include_stable);
    let mut model = fit_linear(&x, &y)?;
    model.contingency_id = contingency_id.to_string();
    model.seed = seed;
    model.load_ids = dataset.load_ids.clone();
    model.critical_machines = dataset.dominant_critical_machines();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TscpMetrics {
    pub rmse: f64,
    pub r2: f64,
    /// `R2(clean) - R2(noisy inputs)`.
    pub r2_robustness: f64,
    /// Mean of `y - y_hat`; negative means over-estimation.
    pub mbd: f64,
}

/// `1 - SS_res / SS_tot`; a constant target gives 1 when fitted exactly and
/// 0 otherwise.
fn r_squared(y: &[f64], yhat: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Accuracy metrics on a test set. Robustness perturbs each input by a
/// uniform relative error in `[-noise_level, noise_level]` drawn from `seed`.
pub fn evaluate(
    model: &TscpModel,
    x: &DMatrix<f64>,
    y: &[f64],
    noise_level: f64,
    seed: u64,
) -> Result<TscpMetrics, TscpError> {
    if y.is_empty() {
        return Err(TscpError::NoSamples);
    }
    if x.nrows() != y.len() {
        return Err(TscpError::Dimension { expected: x.nrows(), got: y.len() });
    }
    if !(0.0..=MAX_NOISE_LEVEL).contains(&noise_level) {
        return Err(TscpError::NoiseLevel(noise_level));
    }
    let k = y.len();
    let mut yhat = Vec::with_capacity(k);
    let mut noisy = Vec::with_capacity(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        yhat.push(model.predict(&row)?);
        let pert: Vec<f64> = row.iter().map(|v| v * (1.0 + rng.random_range(-1.0..=1.0) * noise_level)).collect();
        noisy.push(model.predict(&pert)?);
    }
    let rmse = (y.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / k as f64).sqrt();
    let r2 = r_squared(y, &yhat);
    let mbd = y.iter().zip(&yhat).map(|(a, b)| a - b).sum::<f64>() / k as f64;
    Ok(TscpMetrics { rmse, r2, r2_robustness: r2 - r_squared(y, &noisy), mbd })
}
