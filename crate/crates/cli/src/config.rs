//! Run configuration: one JSON file, overridden field by field by flags.

use std::fs;
use std::path::{Path, PathBuf};

use cscopf_core::cscopf::{Mode, RunOptions};
use cscopf_core::dynamics::{SimeConfig, TdsOptions};
use cscopf_core::tscp::SamplingSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub truncation: Option<f64>,
    pub common_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimeOverrides {
    pub epsilon: Option<f64>,
    pub epsilon_relative: Option<f64>,
    pub tau: Option<f64>,
    /// Re-estimate `tau` from a shift of this many MW off the critical machines.
    pub estimate_tau_mw: Option<f64>,
    pub instability_angle_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdsOverrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub frequency_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub dynamics: Option<PathBuf>,
    pub contingency: Option<PathBuf>,
    pub tscp_model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub sampling: SamplingConfig,
    pub sime: SimeOverrides,
    pub tds: TdsOverrides,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub modes: Vec<String>,
    pub utilization_threshold: Option<f64>,
    /// Keep stable samples as zero-target rows when training.
    pub include_stable: Option<bool>,
    /// Share of the samples held out for evaluation.
    pub test_fraction: Option<f64>,
    pub noise_level: Option<f64>,
    pub eval_seed: Option<u64>,
    pub allow_load_increase: Option<bool>,
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if $src.is_some() {
            $dst = $src;
        }
    };
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.case, &mut cfg.dynamics, &mut cfg.contingency, &mut cfg.tscp_model, &mut cfg.dataset, &mut cfg.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `other` wins wherever it sets a value.
    pub fn merge(mut self, other: RunConfig) -> Self {
        take!(self.case, other.case);
        take!(self.dynamics, other.dynamics);
        take!(self.contingency, other.contingency);
        take!(self.tscp_model, other.tscp_model);
        take!(self.dataset, other.dataset);
        take!(self.output_dir, other.output_dir);
        take!(self.sampling.n, other.sampling.n);
        take!(self.sampling.seed, other.sampling.seed);
        take!(self.sampling.sigma, other.sampling.sigma);
        take!(self.sampling.truncation, other.sampling.truncation);
        take!(self.sampling.common_sigma, other.sampling.common_sigma);
        take!(self.sime.epsilon, other.sime.epsilon);
        take!(self.sime.epsilon_relative, other.sime.epsilon_relative);
        take!(self.sime.tau, other.sime.tau);
        take!(self.sime.estimate_tau_mw, other.sime.estimate_tau_mw);
        take!(self.sime.instability_angle_deg, other.sime.instability_angle_deg);
        take!(self.tds.dt, other.tds.dt);
        take!(self.tds.t_end, other.tds.t_end);
        take!(self.tds.frequency_hz, other.tds.frequency_hz);
        take!(self.tol, other.tol);
        take!(self.max_iter, other.max_iter);
        if !other.modes.is_empty() {
            self.modes = other.modes;
        }
        take!(self.utilization_threshold, other.utilization_threshold);
        take!(self.include_stable, other.include_stable);
        take!(self.test_fraction, other.test_fraction);
        take!(self.noise_level, other.noise_level);
        take!(self.eval_seed, other.eval_seed);
        take!(self.allow_load_increase, other.allow_load_increase);
        self
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
        field.as_deref().ok_or_else(|| CliError::Usage(format!("missing {flag}")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn sampling_spec(&self) -> SamplingSpec {
        let d = SamplingSpec::default();
        SamplingSpec {
            sigma: self.sampling.sigma.unwrap_or(d.sigma),
            truncation: self.sampling.truncation.unwrap_or(d.truncation),
            common_sigma: self.sampling.common_sigma.unwrap_or(d.common_sigma),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.sampling.n.unwrap_or(200)
    }

    pub fn sample_seed(&self) -> u64 {
        self.sampling.seed.unwrap_or(1)
    }

    pub fn sime_config(&self) -> SimeConfig {
        let d = SimeConfig::default();
        SimeConfig {
            epsilon: self.sime.epsilon.unwrap_or(d.epsilon),
            epsilon_relative: self.sime.epsilon_relative.unwrap_or(d.epsilon_relative),
            tau: self.sime.tau.unwrap_or(d.tau),
            instability_angle_deg: self.sime.instability_angle_deg.unwrap_or(d.instability_angle_deg),
        }
    }

    pub fn tds_options(&self) -> TdsOptions {
        let d = TdsOptions::default();
        TdsOptions {
            dt: self.tds.dt.unwrap_or(d.dt),
            t_end: self.tds.t_end.unwrap_or(d.t_end),
            frequency_hz: self.tds.frequency_hz.unwrap_or(d.frequency_hz),
            ..d
        }
    }

    pub fn run_options(&self) -> RunOptions {
        let mut o = RunOptions { tds: self.tds_options(), sime: self.sime_config(), ..RunOptions::default() };
        if let Some(t) = self.tol {
            o.solver.tol = t;
            o.solver.eps_rel = t;
        }
        if let Some(k) = self.max_iter {
            o.max_iter = k;
        }
        if let Some(u) = self.utilization_threshold {
            o.ft.utilization_threshold = u;
        }
        if let Some(a) = self.allow_load_increase {
            o.qp.allow_load_increase = a;
        }
        o
    }

    pub fn modes(&self) -> CliResult<Vec<Mode>> {
        if self.modes.is_empty() {
            return Ok(vec![Mode::Cscopf]);
        }
        let mut out: Vec<Mode> = Vec::new();
        for s in &self.modes {
            let m: Mode = s.parse().map_err(CliError::Usage)?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    /// Range checks on the numeric settings. `origin` names the config file
    /// or the flags in error messages.
    pub fn check(&self, origin: &Path) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::input(origin, msg));
        if self.sampling.n == Some(0) {
            return bad("sampling.n must be at least 1".into());
        }
        if let Some(t) = self.tol.filter(|t| !(*t > 0.0)) {
            return bad(format!("tol must be positive, got {t}"));
        }
        if let Some(t) = self.sime.tau.filter(|t| !(*t > 0.0)) {
            return bad(format!("sime.tau must be positive, got {t}"));
        }
        if let Some(f) = self.test_fraction.filter(|f| !(0.0..1.0).contains(f)) {
            return bad(format!("test_fraction must lie in [0, 1), got {f}"));
        }
        if let Some(dt) = self.tds.dt.filter(|d| !(*d > 0.0)) {
            return bad(format!("tds.dt must be positive, got {dt}"));
        }
        if self.max_iter == Some(0) {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }
}
