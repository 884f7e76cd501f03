//! Mini-batch training: truncated-BPTT chunks, Adam, validation early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{check_len, Matrix, ShapeError};
use crate::rnn::{
    network_backward_into, network_forward, predict_classes, NetworkParams, SequenceInput,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {what} = {value}")]
    Config { what: &'static str, value: String },
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training diverged: non-finite validation loss after epoch {epoch}")]
    ValidationDivergence { epoch: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub chunk_length: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Rescale the batch gradient to this global L2 norm when it is larger.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            chunk_length: 100,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what, value: String| Err(TrainError::Config { what, value });
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", self.learning_rate.to_string());
        }
        for (what, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(what, b.to_string());
            }
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon.to_string());
        }
        for (what, n) in [
            ("chunk_length", self.chunk_length),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if n == 0 {
                return bad(what, n.to_string());
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm", c.to_string());
            }
        }
        Ok(())
    }
}

/// Adam moments for a list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new<'a>(tensors: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = tensors.into_iter().map(Matrix::zeros_like).collect();
        OptimizerState { v: m.clone(), m, step: 0 }
    }

    pub fn for_network(params: &NetworkParams) -> Self {
        Self::new(params.tensors().into_iter().map(|(_, m)| m))
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over matching tensor lists.
pub fn adam_update(
    params: Vec<&mut Matrix>,
    grads: Vec<&Matrix>,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<(), ShapeError> {
    check_len("gradient tensor count", params.len(), grads.len())?;
    check_len("optimizer tensor count", params.len(), state.m.len())?;
    for ((p, g), m) in params.iter().zip(&grads).zip(&state.m) {
        check_len("gradient tensor size", p.len(), g.len())?;
        check_len("optimizer tensor size", p.len(), m.len())?;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (p, m, v) = (p.as_mut_slice(), m.as_mut_slice(), v.as_mut_slice());
        for (i, &gi) in g.as_slice().iter().enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<(), ShapeError> {
    let g: Vec<&Matrix> = grads.tensors().into_iter().map(|(_, m)| m).collect();
    adam_update(params.tensors_mut(), g, state, cfg)
}

/// Global L2 clipping; returns the norm before clipping.
pub fn clip_gradients(grads: &mut NetworkParams, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, m)| m.as_slice())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for m in grads.tensors_mut() {
            m.scale(s);
        }
    }
    norm
}

/// A feature sequence with one class index per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub input: SequenceInput,
    pub targets: Vec<usize>,
}

impl LabeledSequence {
    pub fn new(input: SequenceInput, targets: Vec<usize>) -> Result<Self, ShapeError> {
        check_len("labels per step", input.len(), targets.len())?;
        Ok(LabeledSequence { input, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Rows `start..end` of sequence `sequence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub sequence: usize,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Consecutive chunks of every sequence plus a seeded per-epoch batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPlan {
    chunks: Vec<Chunk>,
    batch_size: usize,
    seed: u64,
}

impl ChunkPlan {
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// Batches for a 1-based `epoch`; same seed and epoch, same order.
    pub fn batches(&self, epoch: usize) -> Vec<Vec<Chunk>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut order = self.chunks.clone();
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[Chunk]>::to_vec).collect()
    }
}

pub fn chunk_sequences(lengths: &[usize], chunk_length: usize, batch_size: usize, seed: u64) -> Result<ChunkPlan, TrainError> {
    if chunk_length == 0 {
        return Err(TrainError::Config { what: "chunk_length", value: "0".into() });
    }
    if batch_size == 0 {
        return Err(TrainError::Config { what: "batch_size", value: "0".into() });
    }
    let chunks: Vec<Chunk> = split_chunks(lengths, chunk_length).collect();
    if chunks.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    Ok(ChunkPlan { chunks, batch_size, seed })
}

fn split_chunks(lengths: &[usize], chunk_length: usize) -> impl Iterator<Item = Chunk> + '_ {
    lengths.iter().enumerate().flat_map(move |(sequence, &n)| {
        (0..n).step_by(chunk_length).map(move |start| Chunk {
            sequence,
            start,
            end: (start + chunk_length).min(n),
        })
    })
}

/// Log-probabilities for a whole sequence, run chunk by chunk with the
/// state reset at each chunk boundary, as in training.
pub fn infer(params: &NetworkParams, input: &SequenceInput, chunk_length: usize) -> Result<Matrix, ShapeError> {
    let n = input.len();
    let mut out = Matrix::zeros(n, params.classes());
    for c in split_chunks(&[n], chunk_length.max(1)) {
        let pass = network_forward(params, &input.slice(c.start, c.end))?;
        for r in 0..c.len() {
            out.row_mut(c.start + r).copy_from_slice(pass.log_probs.row(r));
        }
    }
    Ok(out)
}

/// Mean cross-entropy (nats per point) and point accuracy over a set.
pub fn evaluate_set(params: &NetworkParams, data: &[LabeledSequence], chunk_length: usize) -> Result<(f64, f64), ShapeError> {
    let (mut nll, mut correct, mut total) = (0.0, 0usize, 0usize);
    for seq in data {
        let lp = infer(params, &seq.input, chunk_length)?;
        let pred = predict_classes(&lp);
        for (t, &y) in seq.targets.iter().enumerate() {
            nll -= lp.get(t, y);
            correct += usize::from(pred[t] == y);
        }
        total += seq.len();
    }
    let total = total.max(1) as f64;
    Ok((nll / total, correct as f64 / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: None, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_eh: f64,
    pub val_eh: f64,
    pub val_apoint: f64,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch,train_EH,val_EH,val_Apoint";

    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.train_eh, self.val_eh, self.val_apoint)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation cross-entropy.
    pub params: NetworkParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Gradient of the length-weighted mean loss over a batch of chunks.
/// Returns the summed per-point loss.
fn batch_gradient(
    params: &NetworkParams,
    data: &[LabeledSequence],
    batch: &[Chunk],
    grads: &mut NetworkParams,
) -> Result<f64, ShapeError> {
    for m in grads.tensors_mut() {
        m.fill(0.0);
    }
    let total: usize = batch.iter().map(Chunk::len).sum();
    let mut loss = 0.0;
    for c in batch {
        let seq = &data[c.sequence];
        let input = seq.input.slice(c.start, c.end);
        let targets = &seq.targets[c.start..c.end];
        let pass = network_forward(params, &input)?;
        loss -= targets.iter().enumerate().map(|(t, &y)| pass.log_probs.get(t, y)).sum::<f64>();
        network_backward_into(params, &pass, &input, targets, c.len() as f64 / total as f64, grads)?;
    }
    Ok(loss)
}

pub fn train(
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    params: NetworkParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_set, val_set, params, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    mut params: NetworkParams,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.iter().all(LabeledSequence::is_empty) {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.iter().all(LabeledSequence::is_empty) {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let lengths: Vec<usize> = train_set.iter().map(LabeledSequence::len).collect();
    let plan = chunk_sequences(&lengths, cfg.chunk_length, cfg.batch_size, cfg.seed)?;
    let n_points: usize = lengths.iter().sum();
    let mut state = OptimizerState::for_network(&params);
    let mut grads = params.zeros_like();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for (b, batch) in plan.batches(epoch).iter().enumerate() {
            let loss = batch_gradient(&params, train_set, batch, &mut grads)?;
            if !loss.is_finite() || grads.tensors().iter().any(|(_, m)| !m.max_abs().is_finite()) {
                return Err(TrainError::Divergence { epoch, batch: b + 1 });
            }
            if let Some(c) = cfg.clip_norm {
                clip_gradients(&mut grads, c);
            }
            adam_step(&mut params, &grads, &mut state, cfg)?;
            epoch_loss += loss;
        }
        let (val_eh, val_apoint) = evaluate_set(&params, val_set, cfg.chunk_length)?;
        if !val_eh.is_finite() {
            return Err(TrainError::ValidationDivergence { epoch });
        }
        let record = EpochRecord { epoch, train_eh: epoch_loss / n_points as f64, val_eh, val_apoint };
        on_epoch(&record);
        log.push(record);
        match stopper.observe(epoch, val_eh) {
            Verdict::Improved => best.clone_from(&params),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let best_epoch = stopper.best().map_or(0, |(e, _)| e);
    Ok(TrainOutcome { params: best, log, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{Candidate, InputSpec, NetworkSpec};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn chunk_lengths() {
        let plan = chunk_sequences(&[250], 100, 2, 0).unwrap();
        let lens: Vec<usize> = plan.chunks().iter().map(Chunk::len).collect();
        assert_eq!(lens, vec![100, 100, 50]);
        let plan = chunk_sequences(&[30, 70, 5], 100, 2, 0).unwrap();
        assert_eq!(plan.chunks().len(), 3);
        assert!(chunk_sequences(&[], 100, 2, 0).is_err());
        assert!(chunk_sequences(&[0, 0], 100, 2, 0).is_err());
        assert!(chunk_sequences(&[4], 0, 2, 0).is_err());
    }

    #[test]
    fn batch_order_is_seeded() {
        let a = chunk_sequences(&[1000, 400], 10, 8, 3).unwrap();
        let b = chunk_sequences(&[1000, 400], 10, 8, 3).unwrap();
        assert_eq!(a.batches(1), b.batches(1));
        assert_ne!(a.batches(1), a.batches(2));
        let c = chunk_sequences(&[1000, 400], 10, 8, 4).unwrap();
        assert_ne!(a.batches(1), c.batches(1));
        let mut flat: Vec<Chunk> = a.batches(7).concat();
        flat.sort_by_key(|c| (c.sequence, c.start));
        assert_eq!(flat, a.chunks());
        assert!(a.batches(1).iter().all(|b| b.len() <= 8));
    }

    // Per-scalar Adam written from the update rule.
    fn adam_oracle(theta: &mut [f64], grads: &[Vec<f64>], lr: f64, b1: f64, b2: f64, eps: f64) {
        let mut m = vec![0.0; theta.len()];
        let mut v = vec![0.0; theta.len()];
        for (step, g) in grads.iter().enumerate() {
            let t = (step + 1) as f64;
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powf(t));
                let vh = v[i] / (1.0 - b2.powf(t));
                theta[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }

    #[test]
    fn adam_matches_oracle_over_five_steps() {
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Matrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let mut b = Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let mut flat: Vec<f64> = a.as_slice().iter().chain(b.as_slice()).copied().collect();
        let steps: Vec<Vec<f64>> = (0..5).map(|_| (0..14).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut state = OptimizerState::new([&a, &b]);
        for g in &steps {
            let ga = Matrix::from_vec(3, 4, g[..12].to_vec()).unwrap();
            let gb = Matrix::from_vec(2, 1, g[12..].to_vec()).unwrap();
            adam_update(vec![&mut a, &mut b], vec![&ga, &gb], &mut state, &cfg).unwrap();
        }
        adam_oracle(&mut flat, &steps, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
        let got: Vec<f64> = a.as_slice().iter().chain(b.as_slice()).copied().collect();
        for (g, w) in got.iter().zip(&flat) {
            assert!((g - w).abs() < 1e-10);
        }
        assert_eq!(state.step(), 5);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let cfg = TrainConfig { epsilon: 1e-300, ..TrainConfig::default() };
        let mut p = Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let g = Matrix::from_vec(1, 3, vec![0.3, -20.0, 1e-4]).unwrap();
        let mut s = OptimizerState::new([&p]);
        adam_update(vec![&mut p], vec![&g], &mut s, &cfg).unwrap();
        for (v, want) in p.as_slice().iter().zip([0.99, 1.01, 0.99]) {
            assert!((v - want).abs() < 1e-12);
        }
        assert!(adam_update(vec![&mut p], vec![], &mut s, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn zero_gradients_are_a_fixed_point(vals in proptest::collection::vec(-5.0f64..5.0, 6), steps in 1usize..6) {
            let cfg = TrainConfig::default();
            let mut p = Matrix::from_vec(2, 3, vals.clone()).unwrap();
            let g = Matrix::zeros(2, 3);
            let mut s = OptimizerState::new([&p]);
            for _ in 0..steps {
                adam_update(vec![&mut p], vec![&g], &mut s, &cfg).unwrap();
            }
            prop_assert_eq!(p.as_slice(), vals.as_slice());
        }

        #[test]
        fn early_stopping_keeps_the_minimum(losses in proptest::collection::vec(0.0f64..10.0, 1..30), patience in 1usize..6) {
            let mut es = EarlyStopping::new(patience);
            let mut seen = Vec::new();
            for (i, &l) in losses.iter().enumerate() {
                seen.push(l);
                if es.observe(i + 1, l) == Verdict::Stop {
                    break;
                }
            }
            let (epoch, best) = es.best().unwrap();
            prop_assert!(seen.iter().all(|&l| best <= l));
            prop_assert_eq!(seen[epoch - 1], best);
        }
    }

    #[test]
    fn patience_three_stops_at_epoch_five() {
        let mut es = EarlyStopping::new(3);
        let verdicts: Vec<Verdict> = [1.0, 0.8, 0.9, 0.85, 0.95].iter().enumerate().map(|(i, &l)| es.observe(i + 1, l)).collect();
        assert_eq!(verdicts.last(), Some(&Verdict::Stop));
        assert_eq!(es.best(), Some((2, 0.8)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { chunk_length: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: Some(0.0), ..Default::default() }.validate().is_err());
    }

    fn toy_net(classes: usize, seed: u64) -> NetworkParams {
        let bins = [4usize];
        NetworkParams::new(
            &NetworkSpec {
                input: InputSpec::Embedded { bin_counts: bins.to_vec(), dim: 6 },
                hidden: 5,
                layers: 2,
                candidate: Candidate::Maxout,
                pieces: 2,
                classes,
                bias: false,
                init_range: 0.1,
            },
            seed,
        )
        .unwrap()
    }

    fn toy_sequence(n: usize, label: impl Fn(usize) -> usize, bin: impl Fn(usize) -> usize) -> LabeledSequence {
        let ind = Matrix::from_fn(n, 4, |r, c| if c == bin(r) { 1.0 } else { 0.0 });
        LabeledSequence::new(SequenceInput::Indicators(vec![ind]), (0..n).map(label).collect()).unwrap()
    }

    #[test]
    fn constant_labels_are_learned_quickly() {
        let data: Vec<LabeledSequence> = (0..20).map(|s| toy_sequence(100, |_| 2, move |r| (r + s) % 4)).collect();
        let cfg = TrainConfig { chunk_length: 10, batch_size: 1, max_epochs: 5, ..Default::default() };
        let out = train(&data, &data, toy_net(3, 1), &cfg).unwrap();
        assert!(out.log.len() <= 5);
        assert!(out.log.last().unwrap().train_eh <= 0.01, "{:?}", out.log);
    }

    #[test]
    fn training_is_reproducible_and_logs_each_epoch() {
        let data: Vec<LabeledSequence> = (0..3).map(|s| toy_sequence(50, move |r| ((r / 10) + s) % 2, move |r| ((r / 10) + s) % 2 * 2)).collect();
        let cfg = TrainConfig { chunk_length: 16, batch_size: 2, max_epochs: 4, seed: 9, ..Default::default() };
        let a = train(&data, &data[..1], toy_net(2, 4), &cfg).unwrap();
        let b = train(&data, &data[..1], toy_net(2, 4), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 4);
        let best = a.log.iter().map(|r| r.val_eh).fold(f64::INFINITY, f64::min);
        assert_eq!(a.log[a.best_epoch - 1].val_eh, best);
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let data = vec![toy_sequence(10, |_| 0, |r| r % 4)];
        let mut net = toy_net(2, 0);
        net.output_bias.set(0, 0, f64::NAN);
        match train(&data, &data, net, &TrainConfig::default()) {
            Err(TrainError::Divergence { epoch: 1, batch: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let data = vec![toy_sequence(10, |_| 0, |r| r % 4)];
        assert!(matches!(train(&[], &data, toy_net(2, 0), &TrainConfig::default()), Err(TrainError::EmptyDataset(_))));
        assert!(matches!(train(&data, &[], toy_net(2, 0), &TrainConfig::default()), Err(TrainError::EmptyDataset(_))));
    }

    #[test]
    fn inference_resets_state_per_chunk() {
        let net = toy_net(2, 3);
        let seq = toy_sequence(25, |_| 0, |r| r % 4);
        let whole = infer(&net, &seq.input, 10).unwrap();
        let second = network_forward(&net, &seq.input.slice(10, 20)).unwrap();
        assert_eq!(whole.row(12), second.log_probs.row(2));
    }
}
