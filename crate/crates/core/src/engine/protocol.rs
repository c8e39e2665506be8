//! Round loop of split federated learning: Bernoulli sensing, split
//! forward/backward, per-round server aggregation and periodic client
//! aggregation, with delay-model timestamps.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{substream, Batch, Stream, SynthDataset};
use super::mlp::{argmax, softmax_cross_entropy, ForwardCache, Matrix, Mlp};
use crate::convergence::{ConvergenceConstants, ProbeRound, ProbeTrace};
use crate::delay::DelayBreakdown;
use crate::error::{Error, Result};
use crate::optimizer::{DecisionVars, Scenario};

/// Split-layer activations and labels sent from a UAV to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedBatch {
    pub activations: Matrix,
    pub labels: Vec<usize>,
    pub uav: usize,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerOutput {
    /// Gradient of the loss with respect to the smashed activations.
    pub activation_grad: Matrix,
    /// `None` when sensing failed and nothing was computed.
    pub loss: Option<f64>,
    pub grad: Mlp,
}

pub fn client_forward(client: &Mlp, batch: &Batch, uav: usize, round: usize) -> Result<(SmashedBatch, ForwardCache)> {
    if batch.is_empty() {
        return Err(Error::config("batch", "empty batch"));
    }
    let n_in = client.layers.first().map(|l| l.n_in).ok_or_else(|| Error::config("split", "client slice has no layers"))?;
    if batch.x.cols != n_in {
        return Err(Error::config("data.n_features", format!("batch has {} features, model expects {n_in}", batch.x.cols)));
    }
    let (activations, cache) = client.forward(&batch.x);
    Ok((SmashedBatch { activations, labels: batch.labels.clone(), uav, round }, cache))
}

/// Completes the forward pass on the server slice, back-propagates the
/// cross-entropy loss and applies one SGD step. A failed sensing attempt
/// (`sensed == false`) leaves the model untouched and returns zero gradients.
pub fn server_step(server: &mut Mlp, smashed: &SmashedBatch, eta: f64, sensed: bool) -> Result<ServerOutput> {
    let numeric = |detail: String| Error::Numeric { round: smashed.round, detail };
    if !sensed {
        return Ok(ServerOutput {
            activation_grad: Matrix::zeros(smashed.activations.rows, smashed.activations.cols),
            loss: None,
            grad: server.zeros_like(),
        });
    }
    if !smashed.activations.is_finite() {
        return Err(numeric(format!("non-finite activations from UAV {}", smashed.uav)));
    }
    let n_in = server.layers.first().map(|l| l.n_in).ok_or_else(|| Error::config("split", "server slice has no layers"))?;
    if smashed.activations.cols != n_in || smashed.activations.rows != smashed.labels.len() {
        return Err(Error::config("split", "smashed batch does not match the server slice"));
    }
    let n_out = server.layers.last().map_or(0, |l| l.n_out);
    if let Some(&bad) = smashed.labels.iter().find(|&&y| y >= n_out) {
        return Err(Error::config("data.n_classes", format!("label {bad} outside {n_out} outputs")));
    }
    let (logits, cache) = server.forward(&smashed.activations);
    let (loss, dlogits) = softmax_cross_entropy(&logits, &smashed.labels);
    if !loss.is_finite() {
        return Err(numeric(format!("non-finite loss on UAV {}", smashed.uav)));
    }
    let (grad, activation_grad) = server.backward(&cache, &dlogits);
    server.axpy(-eta, &grad);
    Ok(ServerOutput { activation_grad, loss: Some(loss), grad })
}

/// Back-propagates the server's activation gradient through the client slice
/// and applies one SGD step. Returns the client gradient.
pub fn client_backward(client: &mut Mlp, cache: &ForwardCache, activation_grad: &Matrix, eta: f64, round: usize) -> Result<Mlp> {
    if cache.inputs.len() != client.n_layers() {
        return Err(Error::config("split", "forward cache does not match the client slice"));
    }
    if !activation_grad.is_finite() {
        return Err(Error::Numeric { round, detail: "non-finite activation gradient".into() });
    }
    let (grad, _) = client.backward(cache, activation_grad);
    client.axpy(-eta, &grad);
    if !client.is_finite() {
        return Err(Error::Numeric { round, detail: "client parameters diverged".into() });
    }
    Ok(grad)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Unweighted parameter mean. Inputs are put in a canonical order first so the
/// floating-point reduction does not depend on the order they were passed in.
pub fn aggregate(models: &[Mlp]) -> Result<Mlp> {
    let first = models.first().ok_or_else(|| Error::config("aggregate", "no models to aggregate"))?;
    if models.iter().any(|m| !m.same_shape(first)) {
        return Err(Error::config("aggregate", "model shapes differ"));
    }
    let flat: Vec<Vec<f64>> = models.iter().map(Mlp::flatten).collect();
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(&flat[i], &flat[j]));
    // Accumulating offsets from the canonical first model keeps the mean of
    // identical models exact.
    let base = &flat[order[0]];
    let mut offset = vec![0.0; base.len()];
    for &i in &order[1..] {
        for ((o, v), b) in offset.iter_mut().zip(&flat[i]).zip(base) {
            *o += v - b;
        }
    }
    let n = models.len() as f64;
    let mut out = first.clone();
    for ((p, o), b) in out.params_mut().zip(offset).zip(base) {
        *p = b + o / n;
    }
    Ok(out)
}

/// Loss and accuracy of `model` on `batch`.
pub fn evaluate(model: &Mlp, batch: &Batch) -> (f64, f64) {
    let (logits, _) = model.forward(&batch.x);
    let (loss, _) = softmax_cross_entropy(&logits, &batch.labels);
    let correct = (0..logits.rows).filter(|&r| argmax(logits.row(r)) == batch.labels[r]).count();
    (loss, correct as f64 / batch.len().max(1) as f64)
}

/// Loss gradient of `model` on `batch`.
fn batch_grad(model: &Mlp, batch: &Batch) -> Mlp {
    let (logits, cache) = model.forward(&batch.x);
    let (_, g) = softmax_cross_entropy(&logits, &batch.labels);
    model.backward(&cache, &g).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Layer widths, input first; `widths.len() - 1` layers.
    pub widths: Vec<usize>,
    /// SGD step size used by the simulator (independent of the bound's `eta`).
    pub learning_rate: f64,
    pub rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 32, 32, 32, 32, 5], learning_rate: 0.2, rounds: 300 }
    }
}

/// Optional extra recording; all off by default because each costs compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Recording {
    /// Flattened averaged model after every round.
    pub params: bool,
    /// Client-model drift before and after aggregation.
    pub drift: bool,
    /// Per-sample gradient statistics for constant estimation.
    pub probe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mask: Vec<bool>,
    pub participants: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Cumulative simulated time at the end of the round.
    pub wall_clock: f64,
    pub aggregated: bool,
    /// Largest squared gradient norm per layer among participating UAVs.
    pub layer_grad_sq: Vec<f64>,
    /// `max_m ||mean_c - w_{c,m}||^2` just before client aggregation.
    pub drift_pre: Option<f64>,
    /// The same quantity after aggregation (zero on aggregation rounds).
    pub drift_post: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub split: usize,
    pub period: u32,
    pub epochs: u32,
    pub learning_rate: f64,
    pub initial_loss: f64,
    pub initial_accuracy: f64,
    pub rounds: Vec<RoundRecord>,
    /// Averaged client slice joined with the server slice.
    pub final_model: Mlp,
    pub param_history: Vec<Vec<f64>>,
    pub probe: Option<ProbeTrace>,
}

impl TrainTrace {
    pub fn best_accuracy(&self) -> f64 {
        self.rounds.iter().map(|r| r.accuracy).fold(self.initial_accuracy, f64::max)
    }

    /// First round whose accuracy reaches `target`.
    pub fn rounds_to_target(&self, target: f64) -> Option<usize> {
        self.rounds.iter().find(|r| r.accuracy >= target).map(|r| r.round)
    }

    pub fn time_to_target(&self, target: f64) -> Option<f64> {
        self.rounds.iter().find(|r| r.accuracy >= target).map(|r| r.wall_clock)
    }

    /// Per-layer maximum of the recorded squared gradient norms.
    pub fn max_layer_grad_sq(&self) -> Vec<f64> {
        let n = self.rounds.first().map_or(0, |r| r.layer_grad_sq.len());
        let mut out = vec![0.0f64; n];
        for r in &self.rounds {
            for (o, v) in out.iter_mut().zip(&r.layer_grad_sq) {
                *o = (*o).max(*v);
            }
        }
        out
    }
}

fn sq_norm(m: &Mlp) -> Vec<f64> {
    m.layer_sq_norms()
}

fn max_drift(clients: &[Mlp]) -> Result<f64> {
    let mean = aggregate(clients)?;
    Ok(clients.iter().map(|c| mean.sq_distance(c)).fold(0.0, f64::max))
}

/// Gradient statistics at the averaged model for the batches the UAVs sense this round.
fn probe_round(model: &Mlp, batches: &[Batch], eval: &Batch) -> ProbeRound {
    let n_layers = model.n_layers();
    let mut layer_grad_sq = Vec::with_capacity(batches.len());
    let mut layer_var = Vec::with_capacity(batches.len());
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(batches.len());
    for batch in batches {
        let b = batch.len();
        let per_sample: Vec<Mlp> = (0..b)
            .map(|i| {
                let one = Batch { x: Matrix::from_rows(&[batch.x.row(i).to_vec()]), labels: vec![batch.labels[i]] };
                batch_grad(model, &one)
            })
            .collect();
        let mean = aggregate(&per_sample).expect("same-shaped gradients");
        let mut var = vec![0.0; n_layers];
        if b > 1 {
            for g in &per_sample {
                let mut diff = g.clone();
                diff.axpy(-1.0, &mean);
                for (v, d) in var.iter_mut().zip(sq_norm(&diff)) {
                    *v += d;
                }
            }
            for v in &mut var {
                *v /= ((b - 1) * b) as f64;
            }
        }
        layer_grad_sq.push(sq_norm(&mean));
        layer_var.push(var);
        means.push(mean.flatten());
    }
    let dim = means.first().map_or(0, Vec::len);
    let mut avg = vec![0.0; dim];
    for g in &means {
        for (a, v) in avg.iter_mut().zip(g) {
            *a += v / means.len() as f64;
        }
    }
    let heterogeneity =
        means.iter().map(|g| g.iter().zip(&avg).map(|(x, y)| (x - y) * (x - y)).sum()).collect();
    let (loss, _) = evaluate(model, eval);
    ProbeRound {
        params: model.flatten(),
        full_grad: batch_grad(model, eval).flatten(),
        loss,
        layer_grad_sq,
        layer_minibatch_var: layer_var,
        heterogeneity,
    }
}

/// Runs `rounds` rounds of split federated learning under `dv`.
///
/// Participation of UAV `m` in round `t` is an independent Bernoulli(`q_s`)
/// draw. The delay model is evaluated at the UAV placement for `q_s`; values
/// of `q_s` outside the geometrically achievable range (for example 0 in
/// ablations) use the nearest achievable placement for timing only.
pub fn run_training(
    sc: &Scenario,
    data: &SynthDataset,
    cfg: &TrainConfig,
    dv: &DecisionVars,
    rounds: usize,
    seed: u64,
    rec: Recording,
) -> Result<TrainTrace> {
    let m_uavs = sc.n_uavs();
    let n_layers = cfg.widths.len().saturating_sub(1);
    if n_layers != sc.n_layers() {
        return Err(Error::config("train.widths", format!("{n_layers} layers but the profile has {}", sc.n_layers())));
    }
    if cfg.widths.first() != Some(&data.config.n_features) || cfg.widths.last() != Some(&data.config.n_classes) {
        return Err(Error::config("train.widths", "first/last width must equal n_features/n_classes"));
    }
    if data.n_uavs != m_uavs {
        return Err(Error::config("data", "dataset was generated for a different number of UAVs"));
    }
    if !(0.0..=1.0).contains(&dv.q_s) {
        return Err(Error::infeasible("sensing probability", "q_s must lie in [0, 1]"));
    }
    if dv.period < 1 || dv.batch < 1 || dv.split < 1 || dv.split > n_layers {
        return Err(Error::infeasible("decision variables", format!("{dv:?}")));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(Error::config("train.learning_rate", "must be finite and non-negative"));
    }

    let (q_lo, q_hi) = sc.q_range();
    let timing = DecisionVars { q_s: dv.q_s.clamp(q_lo, q_hi), ..*dv };
    let delays: Vec<DelayBreakdown> = sc.delays(&timing)?;
    let epochs = sc.compute.epochs;
    let eta = cfg.learning_rate;
    let b = dv.batch as usize;

    let mut init_rng = substream(seed, Stream::Init, 0, 0);
    let model = Mlp::new(&cfg.widths, &mut init_rng)?;
    let (client0, mut server) = model.split_at(dv.split);
    let mut clients = vec![client0; m_uavs];
    let eval = data.eval_batch();
    let (initial_loss, initial_accuracy) = evaluate(&model, &eval);

    let mut wall = 0.0;
    let mut records = Vec::with_capacity(rounds);
    let mut param_history = Vec::new();
    let mut probe = rec.probe.then(|| ProbeTrace { batch: dv.batch, rounds: Vec::new() });

    for t in 1..=rounds {
        let mut part = substream(seed, Stream::Participation, t as u64, 0);
        let mask: Vec<bool> = (0..m_uavs).map(|_| part.random_bool(dv.q_s)).collect();
        let batches: Vec<Batch> = (0..m_uavs).map(|m| data.sense(m, t, b, seed)).collect();

        let mut probe_stats = match &probe {
            Some(_) => {
                let avg = Mlp::joined(&aggregate(&clients)?, &server);
                Some(probe_round(&avg, &batches, &eval))
            }
            None => None,
        };

        let mut replicas = Vec::with_capacity(m_uavs);
        let mut layer_grad_sq = vec![0.0f64; n_layers];
        let mut uav_grad_sq = vec![vec![0.0f64; n_layers]; m_uavs];
        for m in 0..m_uavs {
            if !mask[m] {
                continue;
            }
            let mut replica = server.clone();
            for _ in 0..epochs {
                let (smashed, cache) = client_forward(&clients[m], &batches[m], m, t)?;
                let out = server_step(&mut replica, &smashed, eta, true)?;
                let cg = client_backward(&mut clients[m], &cache, &out.activation_grad, eta, t)?;
                let norms: Vec<f64> = sq_norm(&cg).into_iter().chain(sq_norm(&out.grad)).collect();
                for (u, v) in uav_grad_sq[m].iter_mut().zip(&norms) {
                    *u = (*u).max(*v);
                }
            }
            for (l, v) in layer_grad_sq.iter_mut().zip(&uav_grad_sq[m]) {
                *l = (*l).max(*v);
            }
            wall += epochs as f64 * delays[m].per_epoch();
            replicas.push(replica);
        }
        if !replicas.is_empty() {
            server = aggregate(&replicas)?;
        }

        let aggregated = t % dv.period as usize == 0;
        let drift_pre = if rec.drift { Some(max_drift(&clients)?) } else { None };
        if aggregated {
            let mean = aggregate(&clients)?;
            clients = vec![mean; m_uavs];
            wall += delays.iter().map(|d| d.t_param).sum::<f64>();
        }
        let drift_post = if rec.drift { Some(max_drift(&clients)?) } else { None };

        let avg = Mlp::joined(&aggregate(&clients)?, &server);
        if !avg.is_finite() {
            return Err(Error::Numeric { round: t, detail: "parameters became non-finite".into() });
        }
        let (loss, accuracy) = evaluate(&avg, &eval);
        if rec.params {
            param_history.push(avg.flatten());
        }
        if let (Some(trace), Some(mut stats)) = (probe.as_mut(), probe_stats.take()) {
            // Bound the gradients actually used in training, not only those at the average.
            for (s, u) in stats.layer_grad_sq.iter_mut().zip(&uav_grad_sq) {
                for (a, v) in s.iter_mut().zip(u) {
                    *a = (*a).max(*v);
                }
            }
            trace.rounds.push(stats);
        }
        records.push(RoundRecord {
            round: t,
            participants: mask.iter().filter(|&&a| a).count(),
            mask,
            loss,
            accuracy,
            wall_clock: wall,
            aggregated,
            layer_grad_sq,
            drift_pre,
            drift_post,
        });
    }

    let final_model = Mlp::joined(&aggregate(&clients)?, &server);
    Ok(TrainTrace {
        split: dv.split,
        period: dv.period,
        epochs,
        learning_rate: eta,
        initial_loss,
        initial_accuracy,
        rounds: records,
        final_model,
        param_history,
        probe,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Largest drift observed just before client aggregation.
    pub observed: f64,
    /// Largest drift observed after aggregation rounds (zero in exact arithmetic).
    pub post_aggregation: f64,
    /// `4 eta^2 (I e)^2 sum_{l <= L_c} G_l^2`.
    pub bound: f64,
}

/// Compares the recorded client drift with its bound under `constants`.
/// `e` local epochs per round give `I e` local steps between aggregations.
pub fn lemma1_monitor(trace: &TrainTrace, constants: &ConvergenceConstants) -> Result<DriftReport> {
    let mut observed = 0.0f64;
    let mut post = 0.0f64;
    for r in &trace.rounds {
        let (Some(pre), Some(after)) = (r.drift_pre, r.drift_post) else {
            return Err(Error::config("recording.drift", "trace was recorded without drift tracking"));
        };
        observed = observed.max(pre);
        if r.aggregated {
            post = post.max(after);
        }
    }
    let steps = trace.period as f64 * trace.epochs as f64;
    let eta = trace.learning_rate;
    let bound = 4.0 * eta * eta * steps * steps * constants.client_g_sq(trace.split);
    Ok(DriftReport { observed, post_aggregation: post, bound })
}
