//! One-hidden-layer feed-forward regressor: `W2 · elu(W1 · v + b1) + b2`,
//! trained on the Huber loss with Adam and validation early stopping.

use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::rng::SeededRng;

pub const HIDDEN_UNITS: usize = 500;

/// Minimum validation-loss decrease that resets the patience counter.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("validation set is empty; early stopping needs one")]
    EmptyValidation,
    #[error("loss became non-finite at epoch {epoch}{}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    Diverged { epoch: usize, batch: Option<usize> },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// α = 1 exponential linear unit.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
fn huber_term(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[inline]
fn huber_grad(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// Mean Huber loss over all coordinates.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<f64, TrainError> {
    if pred.len() != target.len() {
        return Err(TrainError::Shape(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(TrainError::InvalidConfig(format!("huber delta {delta} must be > 0")));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| huber_term(p - t, delta))
        .sum();
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    w1: DenseMatrix,
    b1: Vec<f64>,
    w2: DenseMatrix,
    b2: Vec<f64>,
}

impl FeedForwardNet {
    pub fn new(w1: DenseMatrix, b1: Vec<f64>, w2: DenseMatrix, b2: Vec<f64>) -> Result<Self, TrainError> {
        let hidden = w1.rows();
        if b1.len() != hidden || w2.cols() != hidden || b2.len() != w2.rows() {
            return Err(TrainError::Shape(format!(
                "inconsistent layer shapes: W1 {:?}, b1 {}, W2 {:?}, b2 {}",
                w1.shape(),
                b1.len(),
                w2.shape(),
                b2.len()
            )));
        }
        if !b1.iter().chain(&b2).all(|x| x.is_finite()) {
            return Err(TrainError::Shape("non-finite bias".into()));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(input: usize, hidden: usize, output: usize, rng: &mut SeededRng) -> Self {
        let mut uniform = |fan_in: usize, fan_out: usize, rows: usize, cols: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DenseMatrix::from_fn(rows, cols, |_, _| limit * (2.0 * rng.next_f64() - 1.0))
        };
        let w1 = uniform(input, hidden, hidden, input);
        let w2 = uniform(hidden, output, output, hidden);
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>, TrainError> {
        let hidden: Vec<f64> = self
            .w1
            .matvec(v)?
            .into_iter()
            .zip(&self.b1)
            .map(|(a, b)| elu(a + b))
            .collect();
        let out = self.w2.matvec(&hidden)?;
        Ok(out.into_iter().zip(&self.b2).map(|(o, b)| o + b).collect())
    }

    /// Forward pass over every row of `inputs`.
    pub fn forward_batch(&self, inputs: &DenseMatrix) -> Result<DenseMatrix, TrainError> {
        let (_, hidden) = self.hidden_layer(inputs)?;
        Ok(self.output_layer(&hidden)?)
    }

    /// Pre-activations and activations of the hidden layer.
    fn hidden_layer(&self, inputs: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
        let mut pre = inputs.matmul_t(&self.w1)?;
        add_row_bias(&mut pre, &self.b1);
        let mut act = pre.clone();
        act.as_mut_slice().iter_mut().for_each(|x| *x = elu(*x));
        Ok((pre, act))
    }

    fn output_layer(&self, hidden: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut out = hidden.matmul_t(&self.w2)?;
        add_row_bias(&mut out, &self.b2);
        Ok(out)
    }

    /// Mean Huber loss over a batch plus the gradient of every parameter.
    pub fn loss_and_gradients(
        &self,
        inputs: &DenseMatrix,
        targets: &DenseMatrix,
        delta: f64,
    ) -> Result<(f64, Gradients), TrainError> {
        if inputs.rows() != targets.rows() || targets.cols() != self.output_dim() {
            return Err(TrainError::Shape(format!(
                "inputs {:?} vs targets {:?}",
                inputs.shape(),
                targets.shape()
            )));
        }
        let (pre, hidden) = self.hidden_layer(inputs)?;
        let pred = self.output_layer(&hidden)?;
        let count = pred.as_slice().len() as f64;

        let mut loss = 0.0;
        let mut d_out = pred;
        for (p, t) in d_out.as_mut_slice().iter_mut().zip(targets.as_slice()) {
            let r = *p - t;
            loss += huber_term(r, delta);
            *p = huber_grad(r, delta) / count;
        }
        loss /= count;

        let w2 = d_out.t_matmul(&hidden)?;
        let b2 = column_sums(&d_out);
        let mut d_hidden = d_out.matmul(&self.w2)?;
        for (g, a) in d_hidden.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            *g *= elu_grad(*a);
        }
        let w1 = d_hidden.t_matmul(inputs)?;
        let b1 = column_sums(&d_hidden);
        Ok((loss, Gradients { w1, b1, w2, b2 }))
    }

    pub fn loss(&self, inputs: &DenseMatrix, targets: &DenseMatrix, delta: f64) -> Result<f64, TrainError> {
        let pred = self.forward_batch(inputs)?;
        huber_loss(pred.as_slice(), targets.as_slice(), delta)
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|x| x.is_finite())
    }
}

/// Parameter gradients, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }
}

fn add_row_bias(m: &mut DenseMatrix, bias: &[f64]) {
    for i in 0..m.rows() {
        for (x, b) in m.row_mut(i).iter_mut().zip(bias) {
            *x += b;
        }
    }
}

fn column_sums(m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in m.row_iter() {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    pub hidden_units: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            max_epochs: 250,
            patience: 10,
            batch_size: 32,
            huber_delta: 1.0,
            hidden_units: HIDDEN_UNITS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.huber_delta > 0.0) {
            return bad("huber_delta must be positive");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        Ok(())
    }
}

/// Input/target rows for supervised training.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: &'a DenseMatrix,
    pub targets: &'a DenseMatrix,
}

impl<'a> Samples<'a> {
    pub fn new(inputs: &'a DenseMatrix, targets: &'a DenseMatrix) -> Result<Self, TrainError> {
        if inputs.rows() != targets.rows() {
            return Err(TrainError::Shape(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: FeedForwardNet,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }
}

/// Mini-batch Adam on the mean Huber loss. Batches are drawn from a per-epoch
/// shuffle seeded by `cfg.seed`.
pub fn train(
    mut net: FeedForwardNet,
    train_set: Samples<'_>,
    val_set: Samples<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    for s in [&train_set, &val_set] {
        if s.inputs.cols() != net.input_dim() || s.targets.cols() != net.output_dim() {
            return Err(TrainError::Shape(format!(
                "net maps {} -> {}, samples are {} -> {}",
                net.input_dim(),
                net.output_dim(),
                s.inputs.cols(),
                s.targets.cols()
            )));
        }
    }

    let mut rng = SeededRng::new(cfg.seed);
    let mut first = vec![0.0; net.w1.as_slice().len() + net.b1.len() + net.w2.as_slice().len() + net.b2.len()];
    let mut second = first.clone();
    let mut step = 0i32;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut reference = f64::INFINITY;
    let mut stale = 0usize;
    let mut train_hist = Vec::new();
    let mut val_hist = Vec::new();

    for epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let xb = train_set.inputs.select_rows(batch);
            let yb = train_set.targets.select_rows(batch);
            let (loss, grads) = net.loss_and_gradients(&xb, &yb, cfg.huber_delta)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: Some(batch_idx),
                });
            }
            epoch_loss += loss * batch.len() as f64;

            step += 1;
            let lr_t = cfg.learning_rate * (1.0 - ADAM_BETA2.powi(step)).sqrt() / (1.0 - ADAM_BETA1.powi(step));
            let mut offset = 0;
            for (param, grad) in net.params_mut().into_iter().zip(grads.slices()) {
                let m = &mut first[offset..offset + param.len()];
                let v = &mut second[offset..offset + param.len()];
                for (((p, g), m), v) in param.iter_mut().zip(grad).zip(m).zip(v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + ADAM_EPS);
                }
                offset += param.len();
            }
        }
        if !net.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: None });
        }
        train_hist.push(epoch_loss / train_set.len() as f64);

        let val = net.loss(val_set.inputs, val_set.targets, cfg.huber_delta)?;
        if !val.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: None });
        }
        val_hist.push(val);
        log::debug!("epoch {epoch}: train {:.6} val {val:.6}", train_hist[epoch]);

        if val < best.0 {
            best = (val, net.clone(), epoch);
        }
        if val < reference - MIN_IMPROVEMENT {
            reference = val;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        net: best.1,
        train_loss: train_hist,
        val_loss: val_hist,
        best_epoch: best.2,
    })
}
