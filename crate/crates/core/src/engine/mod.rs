//! Executable split federated learning on a small dense network over
//! synthetic data.

pub mod data;
pub mod mlp;
pub mod protocol;

pub use data::{generate_dataset, Batch, DataConfig, Sample, SynthDataset};
pub use mlp::{profile_for_widths, Dense, ForwardCache, Matrix, Mlp};
pub use protocol::{
    aggregate, client_backward, client_forward, evaluate, lemma1_monitor, run_training,
    server_step, DriftReport, Recording, RoundRecord, ServerOutput, SmashedBatch, TrainConfig,
    TrainTrace,
};

use crate::convergence::{BoundOptions, ConvergenceConstants};
use crate::delay::ComputeParams;
use crate::geometry::{EnvParams, Point3, SensingParams};
use crate::optimizer::{Deployment, Scenario};

/// Five UAVs on a 120 m ring training the default six-layer network, with a
/// constant set that keeps the bound feasible over the whole `q_s` range.
pub fn toy_scenario() -> Scenario {
    let train = TrainConfig::default();
    let n_layers = train.widths.len() - 1;
    Scenario {
        deployment: Deployment::ring(5, 120.0, Point3 { x: 10.0, y: -20.0, z: 0.0 }, 10.0),
        env: EnvParams::default(),
        sensing: SensingParams::default(),
        profile: profile_for_widths(&train.widths, 32.0, 32.0, 1.0),
        compute: ComputeParams::default(),
        constants: ConvergenceConstants::uniform(n_layers, 5, 1.0, 1e-4, 1.0, 1.0, 1e-4, 2.0, 1.0),
        bound: BoundOptions::default(),
    }
}
