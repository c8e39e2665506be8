//! Delay accounting for one UAV: sensing, client-side training, smashed-data
//! upload, client-model upload, and the expected delay of an aggregation cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SensingParams;

/// Per-layer cost profile of the L-layer network.
///
/// Layer indices are 1-based in the public API (`split` ranges over `1..=L`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub param_bits: Vec<f64>,
    /// Bits uploaded per sample when the network is split after this layer
    /// (activations plus the label).
    pub activation_bits: Vec<f64>,
    pub fwd_flops: Vec<f64>,
    pub bwd_flops: Vec<f64>,
    /// Constant `A` in the client-model size `A (L_c / L)^2 m_w`.
    pub shape_const: f64,
}

impl ModelProfile {
    pub fn n_layers(&self) -> usize {
        self.param_bits.len()
    }

    /// Total parameter bits `m_w`.
    pub fn total_param_bits(&self) -> f64 {
        self.param_bits.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.n_layers();
        if l == 0 {
            return Err(Error::config("profile.param_bits", "at least one layer required"));
        }
        for (key, v) in [
            ("profile.param_bits", &self.param_bits),
            ("profile.activation_bits", &self.activation_bits),
            ("profile.fwd_flops", &self.fwd_flops),
            ("profile.bwd_flops", &self.bwd_flops),
        ] {
            if v.len() != l {
                return Err(Error::config(key, format!("expected {l} entries, found {}", v.len())));
            }
            if let Some(i) = v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::config(format!("{key}[{i}]"), "must be positive and finite"));
            }
        }
        if !(self.shape_const > 0.0) {
            return Err(Error::config("profile.shape_const", "must be positive"));
        }
        Ok(())
    }

    fn check_split(&self, split: usize) -> Result<()> {
        if split == 0 || split > self.n_layers() {
            return Err(Error::infeasible(
                "split layer",
                format!("L_c = {split} outside 1..={}", self.n_layers()),
            ));
        }
        Ok(())
    }

    /// Forward plus backward FLOPs per sample through layers `1..=split`.
    pub fn client_flops_per_sample(&self, split: usize) -> f64 {
        self.fwd_flops[..split].iter().sum::<f64>() + self.bwd_flops[..split].iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeParams {
    /// UAV CPU frequency in cycles/s.
    pub f_m: f64,
    /// FLOPs per cycle.
    pub varpi: f64,
    /// Epochs per round.
    pub epochs: u32,
}

impl Default for ComputeParams {
    fn default() -> Self {
        Self { f_m: 1.0e9, varpi: 4.0, epochs: 1 }
    }
}

impl ComputeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_m > 0.0) {
            return Err(Error::config("compute.f_m", "must be positive"));
        }
        if !(self.varpi > 0.0) {
            return Err(Error::config("compute.varpi", "must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::config("compute.epochs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn flops_per_second(&self) -> f64 {
        self.f_m * self.varpi
    }
}

/// Time to sense `b` samples: `b * lambda * T_d`.
pub fn sensing_delay(b: u32, sp: &SensingParams) -> f64 {
    b as f64 * sp.n_chirps as f64 * sp.t_chirp
}

pub fn training_delay(b: u32, split: usize, mp: &ModelProfile, cp: &ComputeParams) -> Result<f64> {
    mp.check_split(split)?;
    Ok(b as f64 * mp.client_flops_per_sample(split) / cp.flops_per_second())
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("uplink rate must be positive, got {rate}")));
    }
    Ok(())
}

pub fn smashed_upload_delay(b: u32, split: usize, mp: &ModelProfile, rate: f64) -> Result<f64> {
    mp.check_split(split)?;
    check_rate(rate)?;
    Ok(b as f64 * mp.activation_bits[split - 1] / rate)
}

/// Client-model upload time `A (L_c/L)^2 m_w / R`.
pub fn param_upload_delay(split: usize, mp: &ModelProfile, rate: f64) -> Result<f64> {
    mp.check_split(split)?;
    check_rate(rate)?;
    let frac = split as f64 / mp.n_layers() as f64;
    Ok(mp.shape_const * frac * frac * mp.total_param_bits() / rate)
}

/// Component delays of one UAV for one round (before participation weighting).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub t_sense: f64,
    pub t_train: f64,
    pub t_smashed: f64,
    pub t_param: f64,
}

impl DelayBreakdown {
    pub fn compute(
        b: u32,
        split: usize,
        rate: f64,
        sp: &SensingParams,
        mp: &ModelProfile,
        cp: &ComputeParams,
    ) -> Result<Self> {
        Ok(Self {
            t_sense: sensing_delay(b, sp),
            t_train: training_delay(b, split, mp, cp)?,
            t_smashed: smashed_upload_delay(b, split, mp, rate)?,
            t_param: param_upload_delay(split, mp, rate)?,
        })
    }

    /// Time spent in one epoch by a UAV that sensed successfully.
    pub fn per_epoch(&self) -> f64 {
        self.t_sense + self.t_train + self.t_smashed
    }

    /// Expected delay over one aggregation cycle of `period` rounds when sensing
    /// succeeds with probability `q_s` independently each round.
    pub fn expected_cycle(&self, period: f64, epochs: u32, q_s: f64) -> f64 {
        period * epochs as f64 * q_s * self.per_epoch() + self.t_param
    }
}

/// Per-UAV expected cycle delays and their sum.
pub fn expected_cycle_delay(
    period: u32,
    epochs: u32,
    q_s: f64,
    per_uav: &[DelayBreakdown],
) -> (Vec<f64>, f64) {
    let each: Vec<f64> =
        per_uav.iter().map(|d| d.expected_cycle(period as f64, epochs, q_s)).collect();
    let total = each.iter().sum();
    (each, total)
}
