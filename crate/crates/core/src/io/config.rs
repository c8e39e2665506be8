//! Strict JSON configuration with defaults for the reference deployment, and
//! the flat `key=value` constants file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convergence::{BoundOptions, ConvergenceConstants, EstimateOptions};
use crate::delay::ComputeParams;
use crate::engine::{profile_for_widths, DataConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::{dbm_to_watts, EnvParams, Point3, SensingParams};
use crate::optimizer::{BcdOptions, DecisionVars, Deployment, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentConfig {
    /// Number of UAVs when `targets` is not given (targets on a ring).
    pub n_uavs: usize,
    pub ring_radius: f64,
    pub server: Point3,
    /// Flight altitude in metres.
    pub altitude: f64,
    /// Explicit ground targets; overrides the ring.
    pub targets: Option<Vec<Point3>>,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            n_uavs: 5,
            ring_radius: 120.0,
            server: Point3 { x: 10.0, y: -20.0, z: 0.0 },
            altitude: 10.0,
            targets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub eps: f64,
    pub sigma: f64,
    pub gamma_los: f64,
    pub gamma_nlos: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub p_c_dbm: f64,
    /// Sensing transmit power. Recorded for completeness; no delay or rate
    /// expression depends on it.
    pub p_s_dbm: f64,
    pub n0_dbm_per_hz: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            eps: 12.08,
            sigma: 0.1139,
            gamma_los: 1.0,
            gamma_nlos: 20.0,
            carrier_hz: 2.4e9,
            bandwidth_hz: 1.2e6,
            p_c_dbm: 20.0,
            p_s_dbm: 30.0,
            n0_dbm_per_hz: -174.0,
        }
    }
}

impl EnvironmentConfig {
    pub fn params(&self) -> EnvParams {
        EnvParams {
            eps: self.eps,
            sigma: self.sigma,
            gamma_los: self.gamma_los,
            gamma_nlos: self.gamma_nlos,
            f_c: self.carrier_hz,
            bandwidth: self.bandwidth_hz,
            p_c: dbm_to_watts(self.p_c_dbm),
            n0: dbm_to_watts(self.n0_dbm_per_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    pub t_chirp_s: f64,
    pub n_chirps: u32,
    pub theta0_deg: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        let d = SensingParams::default();
        Self { t_chirp_s: d.t_chirp, n_chirps: d.n_chirps, theta0_deg: d.theta0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub bits_per_value: f64,
    pub label_bits: f64,
    /// Multiplier on the client-model upload size.
    pub shape_const: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { bits_per_value: 32.0, label_bits: 32.0, shape_const: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComputeConfig {
    pub f_m_hz: f64,
    pub flops_per_cycle: f64,
    pub epochs: u32,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        let d = ComputeParams::default();
        Self { f_m_hz: d.f_m, flops_per_cycle: d.varpi, epochs: d.epochs }
    }
}

/// A scalar applied to every entry or an explicit per-entry list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerItem {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerItem {
    fn resolve(&self, n: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            PerItem::Uniform(v) => Ok(vec![*v; n]),
            PerItem::Each(v) if v.len() == n => Ok(v.clone()),
            PerItem::Each(v) => Err(Error::config(key, format!("expected {n} entries, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    /// Constants file written by `estimate-constants`; replaces the inline values.
    pub file: Option<PathBuf>,
    pub beta: f64,
    pub eta: f64,
    /// Per layer.
    pub sigma_sq: PerItem,
    /// Per layer.
    pub g_sq: PerItem,
    /// Per UAV.
    pub lambda_sq: PerItem,
    pub vartheta: f64,
    pub eps_target: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            file: None,
            beta: 1.0,
            eta: 1e-4,
            sigma_sq: PerItem::Uniform(1.0),
            g_sq: PerItem::Uniform(1.0),
            lambda_sq: PerItem::Uniform(1e-4),
            vartheta: 2.0,
            eps_target: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Run BCD first and train with its decision instead of `decision`.
    pub use_optimized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Full-participation rounds in the probe run.
    pub rounds: usize,
    pub safety_factor: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { rounds: 40, safety_factor: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    I,
    #[serde(rename = "L_c")]
    Lc,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "theta_s")]
    ThetaS,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::I => "I",
            SweepVar::Lc => "L_c",
            SweepVar::B => "b",
            SweepVar::ThetaS => "theta_s",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(SweepVar::I),
            "L_c" => Ok(SweepVar::Lc),
            "b" => Ok(SweepVar::B),
            "theta_s" => Ok(SweepVar::ThetaS),
            other => Err(Error::config("sweep.variable", format!("unknown variable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub values: Vec<f64>,
    pub seeds: u32,
    /// Re-optimise the other blocks at each value instead of pinning them.
    pub reoptimize: bool,
    /// Fraction of the baseline's best accuracy used as the target.
    pub target_fraction: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { variable: SweepVar::I, values: vec![1.0, 5.0, 20.0], seeds: 5, reoptimize: false, target_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub deployment: DeploymentConfig,
    pub environment: EnvironmentConfig,
    pub sensing: SensingConfig,
    pub model: ModelConfig,
    pub compute: ComputeConfig,
    pub constants: ConstantsConfig,
    pub bound: BoundOptions,
    /// Starting point for `optimize`, pinned decision for `simulate` and the
    /// fixed remainder of a sweep.
    pub decision: DecisionVars,
    pub bcd: BcdOptions,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub simulate: SimulateConfig,
    pub estimate: EstimateConfig,
    pub sweep: SweepSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            deployment: DeploymentConfig::default(),
            environment: EnvironmentConfig::default(),
            sensing: SensingConfig::default(),
            model: ModelConfig::default(),
            compute: ComputeConfig::default(),
            constants: ConstantsConfig::default(),
            bound: BoundOptions::default(),
            decision: DecisionVars::default(),
            bcd: BcdOptions::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            simulate: SimulateConfig::default(),
            estimate: EstimateConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_layers(&self) -> usize {
        self.train.widths.len().saturating_sub(1)
    }

    pub fn deployment(&self) -> Deployment {
        let d = &self.deployment;
        match &d.targets {
            Some(targets) => Deployment { targets: targets.clone(), server: d.server, altitude: d.altitude },
            None => Deployment::ring(d.n_uavs, d.ring_radius, d.server, d.altitude),
        }
    }

    pub fn constants(&self, n_layers: usize, n_uavs: usize) -> Result<ConvergenceConstants> {
        let c = &self.constants;
        if let Some(path) = &c.file {
            return read_constants(path);
        }
        Ok(ConvergenceConstants {
            beta: c.beta,
            eta: c.eta,
            sigma_sq: c.sigma_sq.resolve(n_layers, "constants.sigma_sq")?,
            g_sq: c.g_sq.resolve(n_layers, "constants.g_sq")?,
            lambda_sq: c.lambda_sq.resolve(n_uavs, "constants.lambda_sq")?,
            vartheta: c.vartheta,
            eps_target: c.eps_target,
        })
    }

    /// Builds and validates the scenario the configuration describes.
    pub fn scenario(&self) -> Result<Scenario> {
        let deployment = self.deployment();
        let n_uavs = deployment.targets.len();
        let sc = Scenario {
            constants: self.constants(self.n_layers(), n_uavs)?,
            deployment,
            env: self.environment.params(),
            sensing: SensingParams {
                t_chirp: self.sensing.t_chirp_s,
                n_chirps: self.sensing.n_chirps,
                theta0: self.sensing.theta0_deg,
            },
            profile: profile_for_widths(
                &self.train.widths,
                self.model.bits_per_value,
                self.model.label_bits,
                self.model.shape_const,
            ),
            compute: ComputeParams {
                f_m: self.compute.f_m_hz,
                varpi: self.compute.flops_per_cycle,
                epochs: self.compute.epochs,
            },
            bound: self.bound,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            safety_factor: self.estimate.safety_factor,
            eta: self.constants.eta,
            eps_target: self.constants.eps_target,
        }
    }

    /// Checks every key that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let w = &self.train.widths;
        if w.len() < 2 || w.contains(&0) {
            return Err(Error::config("train.widths", "need at least two positive widths"));
        }
        if w[0] != self.data.n_features {
            return Err(Error::config("train.widths", "first width must equal data.n_features"));
        }
        if w[w.len() - 1] != self.data.n_classes {
            return Err(Error::config("train.widths", "last width must equal data.n_classes"));
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate >= 0.0) {
            return Err(Error::config("train.learning_rate", "must be finite and non-negative"));
        }
        if !self.environment.p_s_dbm.is_finite() {
            return Err(Error::config("environment.p_s_dbm", "must be finite"));
        }
        if self.deployment.targets.is_none() && self.deployment.n_uavs == 0 {
            return Err(Error::config("deployment.n_uavs", "need at least one UAV"));
        }
        self.data.validate()?;
        let dv = &self.decision;
        if dv.period < 1 {
            return Err(Error::config("decision.I", "aggregation period must be a positive integer"));
        }
        if dv.batch < 1 {
            return Err(Error::config("decision.b", "batch size must be a positive integer"));
        }
        if dv.split < 1 || dv.split > self.n_layers() {
            return Err(Error::config("decision.L_c", format!("split layer must lie in 1..={}", self.n_layers())));
        }
        if !(0.0..=1.0).contains(&dv.q_s) {
            return Err(Error::config("decision.q_s", "must lie in [0, 1]"));
        }
        if self.bcd.period_max < 1 || self.bcd.batch_max < 1 {
            return Err(Error::config("bcd", "period_max and batch_max must be positive"));
        }
        if self.estimate.rounds < 2 {
            return Err(Error::config("estimate.rounds", "need at least two probe rounds"));
        }
        if !(self.estimate.safety_factor >= 1.0) {
            return Err(Error::config("estimate.safety_factor", "must be at least 1"));
        }
        if !(self.sweep.target_fraction > 0.0 && self.sweep.target_fraction <= 1.0) {
            return Err(Error::config("sweep.target_fraction", "must lie in (0, 1]"));
        }
        if self.sweep.seeds < 1 {
            return Err(Error::config("sweep.seeds", "need at least one seed"));
        }
        self.scenario().map(|_| ())
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Flat `key=value` rendering; per-layer and per-UAV entries use 1-based
/// suffixes (`g_sq.1`, `lambda_sq.3`). Floats round-trip exactly.
pub fn format_constants(c: &ConvergenceConstants) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "beta={:?}", c.beta);
    let _ = writeln!(out, "eta={:?}", c.eta);
    let _ = writeln!(out, "vartheta={:?}", c.vartheta);
    let _ = writeln!(out, "eps_target={:?}", c.eps_target);
    for (key, values) in [("sigma_sq", &c.sigma_sq), ("g_sq", &c.g_sq), ("lambda_sq", &c.lambda_sq)] {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(out, "{key}.{}={v:?}", i + 1);
        }
    }
    out
}

pub fn parse_constants(text: &str) -> Result<ConvergenceConstants> {
    let mut c = ConvergenceConstants {
        beta: f64::NAN,
        eta: f64::NAN,
        sigma_sq: Vec::new(),
        g_sq: Vec::new(),
        lambda_sq: Vec::new(),
        vartheta: f64::NAN,
        eps_target: f64::NAN,
    };
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: &str| Error::config(format!("constants line {}", n + 1), detail.to_string());
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value"))?;
        let value: f64 = value.trim().parse().map_err(|_| err("value is not a number"))?;
        let key = key.trim();
        let (name, index) = match key.split_once('.') {
            Some((name, idx)) => (name, Some(idx.parse::<usize>().map_err(|_| err("bad index"))?)),
            None => (key, None),
        };
        let list = match (name, index) {
            ("beta", None) => {
                c.beta = value;
                continue;
            }
            ("eta", None) => {
                c.eta = value;
                continue;
            }
            ("vartheta", None) => {
                c.vartheta = value;
                continue;
            }
            ("eps_target", None) => {
                c.eps_target = value;
                continue;
            }
            ("sigma_sq", Some(_)) => &mut c.sigma_sq,
            ("g_sq", Some(_)) => &mut c.g_sq,
            ("lambda_sq", Some(_)) => &mut c.lambda_sq,
            _ => return Err(err(&format!("unknown key `{key}`"))),
        };
        let i = index.expect("indexed keys only");
        if i != list.len() + 1 {
            return Err(err("indices must be consecutive from 1"));
        }
        list.push(value);
    }
    for (key, v) in [("beta", c.beta), ("eta", c.eta), ("vartheta", c.vartheta), ("eps_target", c.eps_target)] {
        if v.is_nan() {
            return Err(Error::config(key, "missing from constants file"));
        }
    }
    Ok(c)
}

pub fn write_constants(c: &ConvergenceConstants, path: &Path) -> Result<()> {
    fs::write(path, format_constants(c))?;
    Ok(())
}

pub fn read_constants(path: &Path) -> Result<ConvergenceConstants> {
    parse_constants(&fs::read_to_string(path)?)
}
