//! Reverse-mode gradients on a per-sample tape, the MSE loss, SGD/Adam and
//! the minibatch training loop.
//!
//! A [`GradientTape`] is a [`Contractor`]: running a model schedule on it
//! records every contraction, and [`GradientTape::backward`] replays them in
//! reverse. Batches are split into fixed chunks of samples; chunk gradients
//! are computed independently (in parallel when enabled) and summed in chunk
//! order, so results do not depend on the thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::degree;
use crate::exec::Execution;
use crate::model::{Contractor, DegreeSet, ModelError, Pass, TensorNetwork};
use crate::tensor::{self, DenseTensor, TensorError};

/// Samples per gradient chunk; fixed so reductions are reproducible.
pub const CHUNK: usize = 8;
/// Loss magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Error, Debug)]
pub enum GradError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("incomplete tape: {0}")]
    IncompleteTape(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset has {actual} features, model expects {expected}")]
    FeatureCount { expected: usize, actual: usize },
}

impl From<TensorError> for GradError {
    fn from(e: TensorError) -> Self {
        GradError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, GradError>;

/// Handle to a value recorded on a [`GradientTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Stored {
    Param(usize),
    Owned(DenseTensor),
}

enum Op {
    Leaf,
    Contract {
        a: usize,
        b: usize,
        pairs: Vec<(usize, usize)>,
    },
    Lift {
        a: usize,
    },
    DegreeContract {
        a: usize,
        b: usize,
        pairs: Vec<(usize, usize)>,
        j_max: Option<usize>,
    },
    Mse {
        pred: usize,
        target: Vec<f64>,
    },
}

struct Node {
    value: Stored,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation against borrowed parameters.
pub struct GradientTape<'p> {
    params: Vec<&'p DenseTensor>,
    nodes: Vec<Node>,
    constants: Vec<NodeId>,
    track_constants: bool,
}

/// Adjoints produced by [`GradientTape::backward`].
pub struct Adjoints {
    params: Vec<DenseTensor>,
    nodes: Vec<Option<DenseTensor>>,
}

impl Adjoints {
    /// One gradient per registered parameter (zero if unused).
    pub fn params(&self) -> &[DenseTensor] {
        &self.params
    }

    pub fn into_params(self) -> Vec<DenseTensor> {
        self.params
    }

    /// Adjoint of an arbitrary node, if it was reached.
    pub fn node(&self, id: NodeId) -> Option<&DenseTensor> {
        self.nodes.get(id.0).and_then(|n| n.as_ref())
    }
}

impl<'p> GradientTape<'p> {
    pub fn new(params: Vec<&'p DenseTensor>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            constants: Vec::new(),
            track_constants: false,
        }
    }

    /// Also propagates adjoints into constants (input features).
    pub fn tracking_constants(mut self) -> Self {
        self.track_constants = true;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant nodes in recording order.
    pub fn constants(&self) -> &[NodeId] {
        &self.constants
    }

    pub fn value(&self, id: NodeId) -> &DenseTensor {
        self.get(id.0)
    }

    fn get(&self, i: usize) -> &DenseTensor {
        match &self.nodes[i].value {
            Stored::Param(p) => self.params[*p],
            Stored::Owned(t) => t,
        }
    }

    fn check(&self, id: NodeId) -> std::result::Result<usize, ModelError> {
        if id.0 < self.nodes.len() {
            Ok(id.0)
        } else {
            Err(ModelError::InvalidDimensions(format!(
                "node {} is not on this tape",
                id.0
            )))
        }
    }

    fn push(&mut self, value: Stored, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Mean squared error over all elements of `pred` against `target`.
    pub fn mse(&mut self, pred: NodeId, target: &[f64]) -> std::result::Result<NodeId, ModelError> {
        let p = self.check(pred)?;
        let value = self.get(p);
        if value.len() != target.len() || target.is_empty() {
            return Err(ModelError::InvalidDimensions(format!(
                "prediction has {} elements, target {}",
                value.len(),
                target.len()
            )));
        }
        let loss = mse_value(value.data(), target);
        let rg = self.nodes[p].requires_grad;
        Ok(self.push(
            Stored::Owned(DenseTensor::scalar(loss)),
            Op::Mse {
                pred: p,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Adjoints> {
        if loss.0 >= self.nodes.len() {
            return Err(GradError::IncompleteTape(format!(
                "loss node {} was never recorded",
                loss.0
            )));
        }
        let root = self.get(loss.0);
        if root.order() != 0 {
            return Err(GradError::IncompleteTape(format!(
                "backward needs a scalar root, got shape {:?}",
                root.shape()
            )));
        }
        let mut adj: Vec<Option<DenseTensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(DenseTensor::scalar(1.0));
        let mut params: Vec<Option<DenseTensor>> = (0..self.params.len()).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    if let Stored::Param(p) = node.value {
                        accumulate(&mut params[p], g.clone())?;
                    }
                    adj[i] = Some(g);
                    continue;
                }
                Op::Contract { a, b, pairs } => {
                    let (ga, gb) = tensor::contract_backward(self.get(*a), self.get(*b), pairs, &g)?;
                    self.send(&mut adj, *a, ga)?;
                    self.send(&mut adj, *b, gb)?;
                }
                Op::Lift { a } => {
                    let shape = self.get(*a).shape().to_vec();
                    self.send(&mut adj, *a, g.clone().into_reshaped(shape)?)?;
                }
                Op::DegreeContract { a, b, pairs, j_max } => {
                    let (ga, gb) = degree::degree_contract_backward_dense(
                        self.get(*a),
                        self.get(*b),
                        pairs,
                        *j_max,
                        &g,
                    )?;
                    self.send(&mut adj, *a, ga)?;
                    self.send(&mut adj, *b, gb)?;
                }
                Op::Mse { pred, target } => {
                    let p = self.get(*pred);
                    let scale = 2.0 * g.data()[0] / target.len() as f64;
                    let d = p
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(a, b)| scale * (a - b))
                        .collect();
                    self.send(&mut adj, *pred, DenseTensor::from_vec(p.shape().to_vec(), d)?)?;
                }
            }
            adj[i] = Some(g);
        }

        let params = params
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| match g {
                Some(g) => Ok(g),
                None => DenseTensor::zeros(p.shape().to_vec()),
            })
            .collect::<std::result::Result<Vec<_>, TensorError>>()?;
        Ok(Adjoints { params, nodes: adj })
    }

    fn send(&self, adj: &mut [Option<DenseTensor>], to: usize, g: DenseTensor) -> Result<()> {
        if self.nodes[to].requires_grad {
            accumulate(&mut adj[to], g)?;
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<DenseTensor>, g: DenseTensor) -> Result<()> {
    match slot {
        Some(acc) => acc.axpy(1.0, &g)?,
        None => *slot = Some(g),
    }
    Ok(())
}

impl Contractor for GradientTape<'_> {
    type Value = NodeId;

    fn param(&mut self, index: usize) -> std::result::Result<NodeId, ModelError> {
        if index >= self.params.len() {
            return Err(ModelError::UnregisteredParameter(index));
        }
        Ok(self.push(Stored::Param(index), Op::Leaf, true))
    }

    fn constant(&mut self, t: DenseTensor) -> std::result::Result<NodeId, ModelError> {
        let id = self.push(Stored::Owned(t), Op::Leaf, self.track_constants);
        self.constants.push(id);
        Ok(id)
    }

    fn contract(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        pairs: &[(usize, usize)],
    ) -> std::result::Result<NodeId, ModelError> {
        let (a, b) = (self.check(*a)?, self.check(*b)?);
        let v = tensor::contract(self.get(a), self.get(b), pairs)?;
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        Ok(self.push(
            Stored::Owned(v),
            Op::Contract {
                a,
                b,
                pairs: pairs.to_vec(),
            },
            rg,
        ))
    }

    fn lift(&mut self, a: &NodeId) -> std::result::Result<NodeId, ModelError> {
        let a = self.check(*a)?;
        let v = degree::lift(self.get(a)).into_inner();
        let rg = self.nodes[a].requires_grad;
        Ok(self.push(Stored::Owned(v), Op::Lift { a }, rg))
    }

    fn degree_contract(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        pairs: &[(usize, usize)],
        j_max: Option<usize>,
    ) -> std::result::Result<NodeId, ModelError> {
        let (a, b) = (self.check(*a)?, self.check(*b)?);
        let v = degree::degree_contract_dense(self.get(a), self.get(b), pairs, j_max)?;
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        Ok(self.push(
            Stored::Owned(v),
            Op::DegreeContract {
                a,
                b,
                pairs: pairs.to_vec(),
                j_max,
            },
            rg,
        ))
    }
}

/// Mean of squared differences.
pub fn mse_value(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / target.len() as f64
}

/// One-hot regression target for `label` among `classes`.
pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; classes];
    t[label] = 1.0;
    t
}

/// Which forward pass a training step uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardPath {
    /// Standard pass for the full degree set, degree-resolved otherwise.
    #[default]
    Auto,
    Standard,
    Degrees,
}

/// Records the model output restricted to `dset` on `c`.
///
/// The standard pass is only valid for the full degree set. The degree
/// pass truncates at `max(dset)` and sums the selected rows.
pub fn restricted_output<C: Contractor>(
    model: &TensorNetwork,
    c: &mut C,
    x: &[f64],
    dset: &DegreeSet,
    path: ForwardPath,
) -> std::result::Result<C::Value, ModelError> {
    let standard = match path {
        ForwardPath::Auto => dset.is_full(),
        ForwardPath::Standard => {
            if !dset.is_full() {
                return Err(ModelError::DegreeSet(format!(
                    "the standard pass cannot restrict to {}",
                    dset.spec()
                )));
            }
            true
        }
        ForwardPath::Degrees => false,
    };
    if standard {
        return model.schedule(c, x, Pass::Standard);
    }
    let m = model.features();
    if dset.max() > m {
        return Err(ModelError::DegreeCapTooLarge { cap: dset.max(), m });
    }
    let cap = dset.max();
    let rows = model.schedule(c, x, Pass::Degrees { j_max: Some(cap) })?;
    let mask: Vec<f64> = (0..=cap).map(|j| if dset.contains(j) { 1.0 } else { 0.0 }).collect();
    let mask = c.constant(DenseTensor::vector(mask)?)?;
    c.contract(&mask, &rows, &[(0, 0)])
}

/// Loss and parameter gradients for a single sample.
pub fn sample_gradient(
    model: &TensorNetwork,
    x: &[f64],
    target: &[f64],
    dset: &DegreeSet,
    path: ForwardPath,
) -> Result<(f64, Vec<DenseTensor>)> {
    let mut tape = GradientTape::new(model.parameters());
    let out = restricted_output(model, &mut tape, x, dset, path)?;
    let loss = tape.mse(out, target)?;
    let value = tape.value(loss).data()[0];
    Ok((value, tape.backward(loss)?.into_params()))
}

/// Gradient of the squared-error loss with respect to the input features.
pub fn input_gradient(
    model: &TensorNetwork,
    x: &[f64],
    target: &[f64],
    dset: &DegreeSet,
    path: ForwardPath,
) -> Result<Vec<f64>> {
    let mut tape = GradientTape::new(model.parameters()).tracking_constants();
    let out = restricted_output(model, &mut tape, x, dset, path)?;
    let loss = tape.mse(out, target)?;
    let adj = tape.backward(loss)?;
    // The first m constants are the per-feature inputs, in feature order:
    // `[1, x]` vectors (x at index 1) or `[[1,0],[0,x]]` matrices (x at 3).
    tape.constants()[..x.len()]
        .iter()
        .map(|&id| {
            let g = adj.node(id).ok_or_else(|| {
                GradError::IncompleteTape("feature node received no adjoint".into())
            })?;
            Ok(if g.len() == 2 { g.data()[1] } else { g.data()[3] })
        })
        .collect()
}

/// Mean loss and mean gradient over `indices`, reduced in fixed chunks.
pub fn batch_gradient(
    model: &TensorNetwork,
    data: &Dataset,
    indices: &[usize],
    dset: &DegreeSet,
    path: ForwardPath,
    exec: Execution,
) -> Result<(f64, Vec<DenseTensor>)> {
    if indices.is_empty() {
        return Err(GradError::Config("empty batch".into()));
    }
    let n = model.classes();
    let chunks: Vec<&[usize]> = indices.chunks(CHUNK).collect();
    let partial = exec.try_map(chunks.len(), |c| -> Result<(f64, Vec<DenseTensor>)> {
        let mut loss = 0.0;
        let mut acc: Option<Vec<DenseTensor>> = None;
        for &i in chunks[c] {
            let (l, g) = sample_gradient(model, data.sample(i), &one_hot(data.label(i), n), dset, path)?;
            loss += l;
            match &mut acc {
                None => acc = Some(g),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&g) {
                        a.axpy(1.0, g)?;
                    }
                }
            }
        }
        Ok((loss, acc.expect("chunks are non-empty")))
    })?;
    let mut parts = partial.into_iter();
    let (mut loss, mut grads) = parts.next().expect("at least one chunk");
    for (l, g) in parts {
        loss += l;
        for (a, g) in grads.iter_mut().zip(&g) {
            a.axpy(1.0, g)?;
        }
    }
    let inv = 1.0 / indices.len() as f64;
    for g in &mut grads {
        g.scale(inv);
    }
    Ok((loss * inv, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter optimizer moments.
pub struct OptimizerState {
    optimizer: Optimizer,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, model: &TensorNetwork) -> Self {
        let zeros = |p: &&DenseTensor| vec![0.0; p.len()];
        let params = model.parameters();
        let (first, second) = match optimizer {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (
                params.iter().map(zeros).collect(),
                params.iter().map(zeros).collect(),
            ),
        };
        Self {
            optimizer,
            first,
            second,
            step: 0,
        }
    }

    pub fn apply(&mut self, model: &mut TensorNetwork, grads: &[DenseTensor], lr: f64) {
        self.step += 1;
        let mut params = model.parameters_mut();
        match self.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m1, m2) = (&mut self.first[k], &mut self.second[k]);
                    for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * d;
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * d * d;
                        let mhat = m1[i] / c1;
                        let vhat = m2[i] / c2;
                        *w -= lr * mhat / (vhat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

/// Learning-rate schedule over the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero over all steps.
    Cosine,
}

impl LrSchedule {
    /// Rate for step `t` (0-based) of `total`.
    pub fn rate(self, base: f64, t: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = t as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = GradError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => Err(GradError::Config(format!("unknown learning-rate schedule {s:?}"))),
        }
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        })
    }
}

/// Minibatch training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    #[serde(default)]
    pub path: ForwardPath,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            learning_rate: 1e-3,
            schedule: LrSchedule::Constant,
            batch_size: 128,
            epochs: 30,
            seed: 0,
            path: ForwardPath::Auto,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(GradError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(GradError::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub wall_time_s: f64,
}

/// Class with the largest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Restricted outputs for every sample of `data`, row-major `[N, n]`.
pub fn predict_scores(
    model: &TensorNetwork,
    data: &Dataset,
    dset: &DegreeSet,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    check_dataset(model, data)?;
    Ok(exec.try_map(data.len(), |i| {
        if dset.is_full() {
            model.forward(data.sample(i))
        } else {
            model.d_degree_forward(data.sample(i), dset)
        }
    })?)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &TensorNetwork, data: &Dataset, dset: &DegreeSet, exec: Execution) -> Result<f64> {
    let scores = predict_scores(model, data, dset, exec)?;
    let hits = scores
        .iter()
        .enumerate()
        .filter(|(i, s)| argmax(s) == data.label(*i))
        .count();
    Ok(hits as f64 / data.len() as f64)
}

fn check_dataset(model: &TensorNetwork, data: &Dataset) -> Result<()> {
    if data.n_features() != model.features() {
        return Err(GradError::FeatureCount {
            expected: model.features(),
            actual: data.n_features(),
        });
    }
    if data.classes() > model.classes() {
        return Err(GradError::Config(format!(
            "dataset has {} classes, model outputs {}",
            data.classes(),
            model.classes()
        )));
    }
    Ok(())
}

/// Trains `model` in place on `train` with targets restricted to `dset`,
/// reporting each epoch to `on_epoch`. Test accuracy is measured on `test`
/// (restricted to `dset`) when given.
pub fn train(
    model: &mut TensorNetwork,
    train: &Dataset,
    test: Option<&Dataset>,
    dset: &DegreeSet,
    cfg: &LossConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    check_dataset(model, train)?;
    if let Some(t) = test {
        check_dataset(model, t)?;
    }
    if dset.max() > model.features() {
        return Err(ModelError::DegreeCapTooLarge {
            cap: dset.max(),
            m: model.features(),
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(cfg.optimizer, model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    let start = Instant::now();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_gradient(model, train, batch, dset, cfg.path, exec)?;
            if !loss.is_finite() || loss.abs() > DIVERGENCE_LIMIT || !grads.iter().all(|g| g.is_finite()) {
                return Err(GradError::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            total += loss * batch.len() as f64;
            let lr = cfg.schedule.rate(cfg.learning_rate, step, total_steps);
            state.apply(model, &grads, lr);
            step += 1;
        }
        let test_accuracy = match test {
            Some(t) => Some(accuracy(model, t, dset, exec)?),
            None => None,
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: total / train.len() as f64,
            test_accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(history)
}
