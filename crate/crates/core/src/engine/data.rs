//! Synthetic Gaussian-mixture data with per-UAV label skew.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::Matrix;
use crate::error::{Error, Result};

/// Named random sub-streams. Each draw site derives its own generator from
/// `(seed, stream, a, b)` so components are reproducible in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset = 1,
    Init = 2,
    Participation = 3,
    Batch = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for v in [stream as u64, a, b] {
        h = splitmix(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_classes: usize,
    pub n_features: usize,
    /// 0 gives every UAV the uniform label mix, 1 gives UAV `m` only label `m mod n_classes`.
    pub skew: f64,
    /// Pool size generated per UAV before the evaluation holdout.
    pub samples_per_uav: usize,
    /// Standard deviation of the class means around the origin.
    pub class_sep: f64,
    pub noise_std: f64,
    /// Every UAV draws from one common pool (homogeneous data).
    pub shared_pool: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_features: 16,
            skew: 0.8,
            samples_per_uav: 500,
            class_sep: 0.6,
            noise_std: 1.0,
            shared_pool: false,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config("data.n_classes", "need at least 2 classes"));
        }
        if self.n_features < 2 {
            return Err(Error::config("data.n_features", "need at least 2 features"));
        }
        if !(0.0..=1.0).contains(&self.skew) {
            return Err(Error::config("data.skew", "must lie in [0, 1]"));
        }
        if self.samples_per_uav < 10 {
            return Err(Error::config("data.samples_per_uav", "need at least 10 samples"));
        }
        if !(self.class_sep.is_finite() && self.class_sep >= 0.0) {
            return Err(Error::config("data.class_sep", "must be finite and non-negative"));
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::config("data.noise_std", "must be finite and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// A sensed mini-batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[&Sample]) -> Self {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        Self { x: Matrix::from_rows(&rows), labels: samples.iter().map(|s| s.label).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: DataConfig,
    pub n_uavs: usize,
    pub seed: u64,
    pub class_means: Vec<Vec<f64>>,
    /// Training pools; a single pool when `shared_pool` is set.
    pub pools: Vec<Vec<Sample>>,
    /// Held-out evaluation set (10% of everything generated).
    pub eval: Vec<Sample>,
}

/// Label distribution of UAV `m`.
pub fn label_probs(cfg: &DataConfig, m: usize) -> Vec<f64> {
    let k = cfg.n_classes;
    (0..k)
        .map(|c| (1.0 - cfg.skew) / k as f64 + if c == m % k { cfg.skew } else { 0.0 })
        .collect()
}

pub fn generate_dataset(cfg: &DataConfig, n_uavs: usize, seed: u64) -> Result<SynthDataset> {
    cfg.validate()?;
    if n_uavs == 0 {
        return Err(Error::config("deployment.targets", "need at least one UAV"));
    }
    let mut rng = substream(seed, Stream::Dataset, 0, 0);
    let class_means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| {
            (0..cfg.n_features)
                .map(|_| cfg.class_sep * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");

    let n_pools = if cfg.shared_pool { 1 } else { n_uavs };
    let pool_size = if cfg.shared_pool { cfg.samples_per_uav * n_uavs } else { cfg.samples_per_uav };
    let holdout = pool_size / 10;
    let mut pools = Vec::with_capacity(n_pools);
    let mut eval = Vec::new();
    for m in 0..n_pools {
        let mut rng = substream(seed, Stream::Dataset, 1, m as u64);
        let probs = if cfg.shared_pool {
            vec![1.0 / cfg.n_classes as f64; cfg.n_classes]
        } else {
            label_probs(cfg, m)
        };
        let labels = WeightedIndex::new(&probs).expect("non-negative weights with positive sum");
        let mut pool: Vec<Sample> = (0..pool_size)
            .map(|_| {
                let label = labels.sample(&mut rng);
                let x = class_means[label].iter().map(|mu| mu + noise.sample(&mut rng)).collect();
                Sample { x, label }
            })
            .collect();
        eval.extend(pool.drain(..holdout));
        pools.push(pool);
    }
    Ok(SynthDataset { config: cfg.clone(), n_uavs, seed, class_means, pools, eval })
}

impl SynthDataset {
    pub fn pool(&self, uav: usize) -> &[Sample] {
        if self.config.shared_pool {
            &self.pools[0]
        } else {
            &self.pools[uav]
        }
    }

    /// The `b` samples UAV `uav` senses in `round`, drawn with replacement.
    /// With a shared pool every UAV senses the same batch.
    pub fn sense(&self, uav: usize, round: usize, b: usize, seed: u64) -> Batch {
        let pool = self.pool(uav);
        let key = if self.config.shared_pool { 0 } else { uav as u64 };
        let mut rng = substream(seed, Stream::Batch, round as u64, key);
        let picks: Vec<&Sample> = (0..b).map(|_| &pool[rng.random_range(0..pool.len())]).collect();
        Batch::from_samples(&picks)
    }

    pub fn eval_batch(&self) -> Batch {
        Batch::from_samples(&self.eval.iter().collect::<Vec<_>>())
    }

    pub fn label_histogram(&self, uav: usize) -> Vec<usize> {
        let mut h = vec![0; self.config.n_classes];
        for s in self.pool(uav) {
            h[s.label] += 1;
        }
        h
    }
}
