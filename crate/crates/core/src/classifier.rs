//! Variational quantum classifier with a single readout ancilla.
//!
//! The data register occupies qubits `0..n`; the ancilla is qubit `n` and
//! starts in `|0>`. After the layered circuit, `Pr(y = k)` is the ancilla's
//! computational-basis probability and the prediction is 0 whenever
//! `Pr(0) >= Pr(1)`.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{CircuitDescriptor, ParamCircuit};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::statevec::{Observable, StateVector};

/// Floor applied to probabilities inside the KL loss.
pub const KL_FLOOR: f64 = 1e-12;
/// `|p0 - p1|` below which a prediction counts as a tie (resolved to 0).
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy of the ancilla distribution against the one-hot label.
    Kl,
    /// `1 - p_y²`.
    NormalizedSquare,
}

/// `-Σ p_k ln max(q_k, 1e-12)`.
pub fn kl_loss(q: [f64; 2], p: [f64; 2]) -> f64 {
    -(p[0] * q[0].max(KL_FLOOR).ln() + p[1] * q[1].max(KL_FLOOR).ln())
}

/// `1 - p_y²` where `p_y` is the probability of the true label.
pub fn ns_loss(probs: [f64; 2], label: u8) -> f64 {
    1.0 - probs[label as usize].powi(2)
}

impl LossKind {
    pub fn value(self, probs: [f64; 2], label: u8) -> f64 {
        match self {
            LossKind::Kl => {
                let mut onehot = [0.0; 2];
                onehot[label as usize] = 1.0;
                kl_loss(probs, onehot)
            }
            LossKind::NormalizedSquare => ns_loss(probs, label),
        }
    }

    /// `dL/dp_y` as a function of the true-label probability.
    pub fn slope(self, p_y: f64) -> f64 {
        match self {
            LossKind::Kl if p_y > KL_FLOOR => -1.0 / p_y,
            LossKind::Kl => 0.0,
            LossKind::NormalizedSquare => -2.0 * p_y,
        }
    }
}

pub fn predict_from_probs(probs: [f64; 2]) -> u8 {
    u8::from(probs[1] - probs[0] > TIE_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub loss: LossKind,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    n_data: usize,
    circuit: ParamCircuit,
    params: Vec<f64>,
    pub metadata: Option<TrainingMetadata>,
}

impl ClassifierModel {
    pub fn new(n_data: usize, layers: usize, params: Vec<f64>) -> Result<Self> {
        let circuit = ParamCircuit::classifier(n_data, 1, layers)?;
        if params.len() != circuit.param_count() {
            return Err(Error::ParamLength { expected: circuit.param_count(), found: params.len() });
        }
        Ok(Self { n_data, circuit, params, metadata: None })
    }

    /// Angles uniform on `[-π, π]`.
    pub fn random<R: Rng + ?Sized>(n_data: usize, layers: usize, rng: &mut R) -> Result<Self> {
        let count = ParamCircuit::classifier(n_data, 1, layers)?.param_count();
        let params = (0..count).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        Self::new(n_data, layers, params)
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn ancilla(&self) -> usize {
        self.n_data
    }

    pub fn layers(&self) -> usize {
        self.circuit.layers()
    }

    pub fn circuit(&self) -> &ParamCircuit {
        &self.circuit
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ParamLength { expected: self.params.len(), found: params.len() });
        }
        self.params = params;
        Ok(())
    }

    /// `V(Θ)(|ψ> ⊗ |0>_anc)`.
    pub fn output_state(&self, input: &StateVector) -> Result<StateVector> {
        if input.n_qubits() != self.n_data {
            return Err(Error::DimensionMismatch { expected: self.n_data, found: input.n_qubits() });
        }
        let mut s = input.with_zero_ancillas(1);
        self.circuit.apply(&mut s, &self.params)?;
        Ok(s)
    }

    /// `[Pr(y=0), Pr(y=1)]`.
    pub fn probabilities(&self, input: &StateVector) -> Result<[f64; 2]> {
        let (p0, p1) = self.output_state(input)?.ancilla_probs(self.ancilla())?;
        Ok([p0, p1])
    }

    pub fn predict(&self, input: &StateVector) -> Result<u8> {
        Ok(predict_from_probs(self.probabilities(input)?))
    }

    /// Projector onto ancilla value `label`, on the data+ancilla register.
    pub fn label_projector(&self, label: u8) -> Observable {
        Observable::projector(self.n_data + 1, self.ancilla(), label == 1)
    }

    /// Loss and its gradient with respect to Θ for one sample.
    pub fn loss_and_gradient(&self, input: &StateVector, label: u8, loss: LossKind) -> Result<(f64, Vec<f64>)> {
        let s = input.with_zero_ancillas(1);
        let (p_y, mut grad) = self.circuit.circuit().adjoint_gradient(&s, &self.params, &self.label_projector(label))?;
        let p_y = p_y.clamp(0.0, 1.0);
        let probs = if label == 0 { [p_y, 1.0 - p_y] } else { [1.0 - p_y, p_y] };
        let slope = loss.slope(p_y);
        grad.iter_mut().for_each(|g| *g *= slope);
        Ok((loss.value(probs, label), grad))
    }

    /// Mean loss and accuracy over a dataset.
    pub fn evaluate(&self, data: &Dataset, loss: LossKind) -> Result<Evaluation> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
        }
        let per: Vec<Result<(f64, bool)>> = data
            .samples
            .par_iter()
            .map(|s| {
                let probs = self.probabilities(&s.state)?;
                Ok((loss.value(probs, s.label), predict_from_probs(probs) == s.label))
            })
            .collect();
        let mut total = 0.0;
        let mut correct = 0usize;
        for r in per {
            let (l, ok) = r?;
            total += l;
            correct += usize::from(ok);
        }
        Ok(Evaluation { loss: total / data.len() as f64, accuracy: correct as f64 / data.len() as f64 })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: Checkpoint::FORMAT_VERSION,
            circuit: self.circuit.descriptor(),
            n_data: self.n_data,
            ancilla: self.ancilla(),
            params: self.params.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format_version != Checkpoint::FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let circuit = ParamCircuit::from_descriptor(&c.circuit)?;
        if circuit.kind() != crate::circuits::CircuitKind::Classifier
            || c.n_data == 0
            || circuit.n_qubits() != c.n_data + 1
            || c.ancilla != c.n_data
        {
            return Err(Error::Format("checkpoint circuit does not match a one-ancilla classifier".into()));
        }
        if c.params.len() != circuit.param_count() || c.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format(format!(
                "checkpoint needs {} finite parameters, found {}",
                circuit.param_count(),
                c.params.len()
            )));
        }
        Ok(Self { n_data: c.n_data, circuit, params: c.params.clone(), metadata: c.metadata.clone() })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// On-disk model checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub circuit: CircuitDescriptor,
    pub n_data: usize,
    pub ancilla: usize,
    pub params: Vec<f64>,
    #[serde(default)]
    pub metadata: Option<TrainingMetadata>,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub layers: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    /// `None` trains on the full batch every iteration.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Kl,
            layers: 10,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            iterations_per_epoch: 10,
            batch_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epochs >= 1
            && self.iterations_per_epoch >= 1
            && self.layers >= 1
            && self.batch_size != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Descent step on `params` given the gradient.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

/// Batch-averaged loss and gradient; the reduction runs in sample order so
/// the result is independent of the thread count.
pub fn batch_loss_and_gradient(model: &ClassifierModel, data: &Dataset, idx: &[usize], loss: LossKind) -> Result<(f64, Vec<f64>)> {
    let per: Vec<Result<(f64, Vec<f64>)>> = idx
        .par_iter()
        .map(|&i| model.loss_and_gradient(&data.samples[i].state, data.samples[i].label, loss))
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; model.params.len()];
    for r in per {
        let (l, g) = r?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let k = idx.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((total / k, grad))
}

/// Trains a fresh model; `validation` may be empty.
pub fn train(train_set: &Dataset, validation: &Dataset, cfg: &TrainConfig) -> Result<(ClassifierModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if let Some(s) = train_set.samples.iter().chain(&validation.samples).find(|s| s.label > 1) {
        return Err(Error::InvalidArgument(format!("label {} is not binary", s.label)));
    }
    let mut model = ClassifierModel::random(train_set.n, cfg.layers, &mut rng::stream(cfg.seed, domain::INIT, 0))?;
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let all: Vec<usize> = (0..train_set.len()).collect();
    let mut batch_rng = rng::stream(cfg.seed, domain::CLASSIFIER, 0);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut params = model.params.clone();
    for epoch in 1..=cfg.epochs {
        for it in 0..cfg.iterations_per_epoch {
            let idx: Vec<usize> = match cfg.batch_size {
                Some(b) if b < all.len() => all.choose_multiple(&mut batch_rng, b).copied().collect(),
                _ => all.clone(),
            };
            let (l, grad) = batch_loss_and_gradient(&model, train_set, &idx, cfg.loss)?;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss {l} at epoch {epoch}, iteration {it}; max |param| = {:.3e}",
                    params.iter().fold(0.0f64, |a, p| a.max(p.abs()))
                )));
            }
            adam.step(&mut params, &grad);
            model.params.copy_from_slice(&params);
        }
        let tr = model.evaluate(train_set, cfg.loss)?;
        let va = if validation.is_empty() { Evaluation { loss: f64::NAN, accuracy: f64::NAN } } else { model.evaluate(validation, cfg.loss)? };
        trace.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_accuracy: tr.accuracy,
            validation_loss: va.loss,
            validation_accuracy: va.accuracy,
        });
    }
    model.metadata = Some(TrainingMetadata { loss: cfg.loss, seed: cfg.seed, epochs: cfg.epochs });
    Ok((model, trace))
}
