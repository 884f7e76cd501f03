//! Stacked bidirectional recurrent classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cell::{Candidate, CellParams, SequenceCache};
use crate::embed::{embed_sequence, embed_sequence_backward, init_embedding, EmbeddingTable};
use crate::linalg::{check_len, gemm, Matrix, Op, ShapeError};

#[derive(Debug, Clone, PartialEq)]
pub enum InputLayer {
    /// Separate embeddings feed the gates and the candidate of the first layer.
    Embedded { gate: EmbeddingTable, cand: EmbeddingTable },
    /// Continuous features go straight into the first layer.
    Raw { features: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer {
    pub forward: CellParams,
    pub backward: CellParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    Embedded { bin_counts: Vec<usize>, dim: usize },
    Raw { features: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input: InputSpec,
    pub hidden: usize,
    pub layers: usize,
    pub candidate: Candidate,
    pub pieces: usize,
    pub classes: usize,
    pub bias: bool,
    /// Recurrent and output weights are drawn from `U[-init_range, init_range]`.
    pub init_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub input: InputLayer,
    pub layers: Vec<BiLayer>,
    /// `C × 2H`.
    pub output: Matrix,
    /// `C × 1`.
    pub output_bias: Matrix,
}

impl NetworkParams {
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self, ShapeError> {
        if spec.layers == 0 || spec.classes < 2 {
            return Err(ShapeError::mismatch(
                "network size",
                "at least 1 layer and 2 classes",
                format!("{} layers, {} classes", spec.layers, spec.classes),
            ));
        }
        let (input, in_dim) = match spec.input {
            InputSpec::Embedded { ref bin_counts, dim } => {
                let gate = init_embedding(bin_counts, dim, seed)?;
                let cand = init_embedding(bin_counts, dim, seed ^ 0x9e37_79b9_7f4a_7c15)?;
                (InputLayer::Embedded { gate, cand }, dim)
            }
            InputSpec::Raw { features } => (InputLayer::Raw { features }, features),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let a = spec.init_range;
        let mut layers = Vec::with_capacity(spec.layers);
        for l in 0..spec.layers {
            let d = if l == 0 { in_dim } else { 2 * spec.hidden };
            let mut make = || -> Result<CellParams, ShapeError> {
                let mut c = CellParams::zeros(spec.candidate, spec.pieces, spec.hidden, d, d, spec.bias)?;
                c.fill_uniform(&mut rng, -a, a);
                Ok(c)
            };
            let forward = make()?;
            let backward = make()?;
            layers.push(BiLayer { forward, backward });
        }
        let output = Matrix::from_fn(spec.classes, 2 * spec.hidden, |_, _| {
            rand::Rng::random_range(&mut rng, -a..=a)
        });
        Ok(NetworkParams {
            input,
            layers,
            output,
            output_bias: Matrix::zeros(spec.classes, 1),
        })
    }

    pub fn classes(&self) -> usize {
        self.output.rows()
    }

    pub fn hidden(&self) -> usize {
        self.output.cols() / 2
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            input: match &self.input {
                InputLayer::Embedded { gate, cand } => InputLayer::Embedded {
                    gate: gate.zeros_like(),
                    cand: cand.zeros_like(),
                },
                InputLayer::Raw { features } => InputLayer::Raw { features: *features },
            },
            layers: self
                .layers
                .iter()
                .map(|l| BiLayer {
                    forward: l.forward.zeros_like(),
                    backward: l.backward.zeros_like(),
                })
                .collect(),
            output: self.output.zeros_like(),
            output_bias: self.output_bias.zeros_like(),
        }
    }

    /// Every trainable tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v = Vec::new();
        if let InputLayer::Embedded { gate, cand } = &self.input {
            for (f, m) in gate.matrices().iter().enumerate() {
                v.push((format!("embed.gate.{f}"), m));
            }
            for (f, m) in cand.matrices().iter().enumerate() {
                v.push((format!("embed.cand.{f}"), m));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, cell) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                for (name, m) in cell.tensors() {
                    v.push((format!("layer{l}.{dir}.{name}"), m));
                }
            }
        }
        v.push(("output.weight".into(), &self.output));
        v.push(("output.bias".into(), &self.output_bias));
        v
    }

    /// Same order as [`NetworkParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = Vec::new();
        if let InputLayer::Embedded { gate, cand } = &mut self.input {
            v.extend(gate.matrices_mut().iter_mut());
            v.extend(cand.matrices_mut().iter_mut());
        }
        for layer in &mut self.layers {
            v.extend(layer.forward.tensors_mut());
            v.extend(layer.backward.tensors_mut());
        }
        v.push(&mut self.output);
        v.push(&mut self.output_bias);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }
}

/// One sequence of network input, `T` rows.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceInput {
    /// Per-feature indicator matrices, each `T × n_intervals_f`.
    Indicators(Vec<Matrix>),
    /// `T × features`.
    Raw(Matrix),
}

impl SequenceInput {
    pub fn len(&self) -> usize {
        match self {
            SequenceInput::Indicators(m) => m.first().map_or(0, Matrix::rows),
            SequenceInput::Raw(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> SequenceInput {
        match self {
            SequenceInput::Indicators(m) => {
                SequenceInput::Indicators(m.iter().map(|x| x.slice_rows(start, end)).collect())
            }
            SequenceInput::Raw(m) => SequenceInput::Raw(m.slice_rows(start, end)),
        }
    }
}

/// Row-wise log-softmax, shifted by the row maximum.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

struct LayerPass {
    gate_x: Matrix,
    cand_x: Option<Matrix>,
    forward: SequenceCache,
    backward: SequenceCache,
}

impl LayerPass {
    fn cand_x(&self) -> &Matrix {
        self.cand_x.as_ref().unwrap_or(&self.gate_x)
    }
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardPass {
    /// `T × C` log-probabilities.
    pub log_probs: Matrix,
    layers: Vec<LayerPass>,
    top: Matrix,
}

fn concat_states(f: &Matrix, b: &Matrix) -> Matrix {
    let h = f.cols();
    Matrix::from_fn(f.rows(), 2 * h, |r, c| if c < h { f.get(r, c) } else { b.get(r, c - h) })
}

fn split_states(m: &Matrix) -> (Matrix, Matrix) {
    let h = m.cols() / 2;
    (
        Matrix::from_fn(m.rows(), h, |r, c| m.get(r, c)),
        Matrix::from_fn(m.rows(), h, |r, c| m.get(r, c + h)),
    )
}

pub fn network_forward(params: &NetworkParams, input: &SequenceInput) -> Result<ForwardPass, ShapeError> {
    let (mut gate_x, mut cand_x) = match (&params.input, input) {
        (InputLayer::Embedded { gate, cand }, SequenceInput::Indicators(ind)) => {
            (embed_sequence(ind, gate)?, Some(embed_sequence(ind, cand)?))
        }
        (InputLayer::Raw { features }, SequenceInput::Raw(x)) => {
            check_len("raw feature count", *features, x.cols())?;
            (x.clone(), None)
        }
        _ => return Err(ShapeError::mismatch("network input", "input matching the model's input layer", "other kind")),
    };
    let mut passes = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let cx = cand_x.as_ref().unwrap_or(&gate_x);
        let forward = layer.forward.forward_sequence(&gate_x, cx, false)?;
        let backward = layer.backward.forward_sequence(&gate_x, cx, true)?;
        let next = concat_states(&forward.states, &backward.states);
        passes.push(LayerPass {
            gate_x: std::mem::replace(&mut gate_x, next),
            cand_x: cand_x.take(),
            forward,
            backward,
        });
    }
    let top = gate_x;
    let mut logits = Matrix::zeros(top.rows(), params.classes());
    for r in 0..logits.rows() {
        logits.row_mut(r).copy_from_slice(params.output_bias.as_slice());
    }
    gemm(1.0, &top, Op::N, &params.output, Op::T, 1.0, &mut logits);
    Ok(ForwardPass {
        log_probs: log_softmax_rows(&logits),
        layers: passes,
        top,
    })
}

/// Mean per-step cross-entropy of `targets` under `pass`.
pub fn sequence_loss(pass: &ForwardPass, targets: &[usize]) -> Result<f64, ShapeError> {
    check_targets(pass, targets)?;
    let total: f64 = targets.iter().enumerate().map(|(t, &y)| -pass.log_probs.get(t, y)).sum();
    Ok(total / targets.len() as f64)
}

fn check_targets(pass: &ForwardPass, targets: &[usize]) -> Result<(), ShapeError> {
    check_len("target count", pass.log_probs.rows(), targets.len())?;
    if targets.is_empty() {
        return Err(ShapeError::mismatch("target count", "at least 1", 0));
    }
    let c = pass.log_probs.cols();
    match targets.iter().find(|&&y| y >= c) {
        Some(&y) => Err(ShapeError::OutOfBounds { context: "target class", index: y, len: c }),
        None => Ok(()),
    }
}

/// Gradient of [`sequence_loss`] with respect to every parameter.
pub fn network_backward(
    params: &NetworkParams,
    pass: &ForwardPass,
    input: &SequenceInput,
    targets: &[usize],
) -> Result<NetworkParams, ShapeError> {
    let mut grads = params.zeros_like();
    network_backward_into(params, pass, input, targets, 1.0, &mut grads)?;
    Ok(grads)
}

/// Accumulates `weight · ∂loss/∂θ` into `grads`.
pub fn network_backward_into(
    params: &NetworkParams,
    pass: &ForwardPass,
    input: &SequenceInput,
    targets: &[usize],
    weight: f64,
    grads: &mut NetworkParams,
) -> Result<(), ShapeError> {
    check_targets(pass, targets)?;
    let t_len = targets.len();
    let scale = weight / t_len as f64;
    let mut d_logits = pass.log_probs.clone();
    for (t, &y) in targets.iter().enumerate() {
        let row = d_logits.row_mut(t);
        row.iter_mut().for_each(|v| *v = v.exp() * scale);
        row[y] -= scale;
    }
    gemm(1.0, &d_logits, Op::T, &pass.top, Op::N, 1.0, &mut grads.output);
    {
        let b = grads.output_bias.as_mut_slice();
        for t in 0..t_len {
            b.iter_mut().zip(d_logits.row(t)).for_each(|(g, d)| *g += d);
        }
    }
    let mut d_top = Matrix::zeros(t_len, 2 * params.hidden());
    gemm(1.0, &d_logits, Op::N, &params.output, Op::N, 0.0, &mut d_top);

    for (l, (layer, lp)) in params.layers.iter().zip(&pass.layers).enumerate().rev() {
        let (d_f, d_b) = split_states(&d_top);
        let g = &mut grads.layers[l];
        let cx = lp.cand_x();
        let (mut dg, mut dc) = layer.forward.backward_sequence(&lp.forward, &lp.gate_x, cx, &d_f, &mut g.forward)?;
        let (dg_b, dc_b) = layer.backward.backward_sequence(&lp.backward, &lp.gate_x, cx, &d_b, &mut g.backward)?;
        dg.add_assign(&dg_b);
        dc.add_assign(&dc_b);
        if l > 0 {
            dg.add_assign(&dc);
            d_top = dg;
            continue;
        }
        match (&mut grads.input, input) {
            (InputLayer::Embedded { gate, cand }, SequenceInput::Indicators(ind)) => {
                embed_sequence_backward(&dg, ind, gate)?;
                embed_sequence_backward(&dc, ind, cand)?;
            }
            (InputLayer::Raw { .. }, SequenceInput::Raw(_)) => {}
            _ => return Err(ShapeError::mismatch("network input", "input matching the model's input layer", "other kind")),
        }
        break;
    }
    Ok(())
}

/// Most probable class per step.
pub fn predict_classes(log_probs: &Matrix) -> Vec<usize> {
    (0..log_probs.rows())
        .map(|r| {
            let row = log_probs.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(candidate: Candidate, pieces: usize, raw: bool, bias: bool) -> (NetworkParams, SequenceInput) {
        let bins = [3usize, 4];
        let input = if raw {
            InputSpec::Raw { features: 3 }
        } else {
            InputSpec::Embedded { bin_counts: bins.to_vec(), dim: 4 }
        };
        let spec = NetworkSpec {
            input,
            hidden: 3,
            layers: 2,
            candidate,
            pieces,
            classes: 3,
            bias,
            init_range: 0.5,
        };
        let mut p = NetworkParams::new(&spec, 17).unwrap();
        // larger embeddings so the check is not dominated by rounding
        if let InputLayer::Embedded { gate, cand } = &mut p.input {
            for m in gate.matrices_mut().iter_mut().chain(cand.matrices_mut()) {
                let (r, c) = m.shape();
                *m = Matrix::from_fn(r, c, |i, j| ((i * 7 + j * 3 + r) as f64 * 0.61).sin());
            }
        }
        let t = 4;
        let x = if raw {
            SequenceInput::Raw(Matrix::from_fn(t, 3, |r, c| ((r * 3 + c) as f64 * 0.7).cos()))
        } else {
            let a = Matrix::from_fn(t, 3, |r, c| if (r + c) % 3 == 0 { 1.0 } else { 0.0 });
            let b = Matrix::from_fn(t, 4, |r, c| if c == (r * 3) % 4 { 0.8 } else if c == (r * 3 + 1) % 4 { 0.2 } else { 0.0 });
            SequenceInput::Indicators(vec![a, b])
        };
        (p, x)
    }

    fn check_gradients(p: &NetworkParams, x: &SequenceInput, y: &[usize]) {
        let pass = network_forward(p, x).unwrap();
        let g = network_backward(p, &pass, x, y).unwrap();
        let analytic: Vec<f64> = g.tensors().iter().flat_map(|(_, m)| m.as_slice().to_vec()).collect();
        let mut q = p.clone();
        let mut idx = 0;
        let h = 1e-6;
        let n_tensors = q.tensors().len();
        for ti in 0..n_tensors {
            let len = q.tensors()[ti].1.len();
            for e in 0..len {
                let orig = q.tensors_mut()[ti].as_slice()[e];
                q.tensors_mut()[ti].as_mut_slice()[e] = orig + h;
                let lp = sequence_loss(&network_forward(&q, x).unwrap(), y).unwrap();
                q.tensors_mut()[ti].as_mut_slice()[e] = orig - h;
                let lm = sequence_loss(&network_forward(&q, x).unwrap(), y).unwrap();
                q.tensors_mut()[ti].as_mut_slice()[e] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let a = analytic[idx];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (a - numeric).abs() / denom < 1e-5 || (a - numeric).abs() < 1e-9,
                    "{} [{e}]: analytic {a} numeric {numeric}",
                    p.tensors()[ti].0
                );
                idx += 1;
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let y = [0, 2, 1, 2];
        for (cand, k) in [(Candidate::Tanh, 1), (Candidate::Maxout, 2)] {
            for raw in [false, true] {
                let (p, x) = small(cand, k, raw, raw);
                check_gradients(&p, &x, &y);
            }
        }
    }

    #[test]
    fn log_probs_normalize() {
        let (p, x) = small(Candidate::Maxout, 3, false, true);
        let pass = network_forward(&p, &x).unwrap();
        for r in 0..pass.log_probs.rows() {
            let s: f64 = pass.log_probs.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_is_stable_for_large_logits() {
        let l = Matrix::from_rows(&[vec![1000.0, 1000.0], vec![-1e4, 0.0]]).unwrap();
        let out = log_softmax_rows(&l);
        assert!((out.get(0, 0) - (0.5f64).ln()).abs() < 1e-12);
        assert!(out.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(out.get(1, 1), 0.0);
    }

    #[test]
    fn mismatched_input_and_targets_are_errors() {
        let (p, x) = small(Candidate::Tanh, 1, false, false);
        let raw = SequenceInput::Raw(Matrix::zeros(4, 3));
        assert!(network_forward(&p, &raw).is_err());
        let pass = network_forward(&p, &x).unwrap();
        assert!(sequence_loss(&pass, &[0, 1]).is_err());
        assert!(sequence_loss(&pass, &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn tensor_names_are_unique_and_ordered() {
        let (p, _) = small(Candidate::Maxout, 2, false, true);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names.first().unwrap(), "embed.gate.0");
        assert_eq!(names.last().unwrap(), "output.bias");
        let mut q = p.clone();
        assert_eq!(q.tensors_mut().len(), names.len());
    }

    #[test]
    fn slicing_keeps_rows() {
        let (_, x) = small(Candidate::Tanh, 1, false, false);
        let s = x.slice(1, 3);
        assert_eq!(s.len(), 2);
        if let (SequenceInput::Indicators(a), SequenceInput::Indicators(b)) = (&x, &s) {
            assert_eq!(a[1].row(1), b[1].row(0));
        }
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let l = Matrix::from_rows(&[vec![0.1, 0.3, 0.3], vec![2.0, 1.0, 2.0]]).unwrap();
        assert_eq!(predict_classes(&l), vec![1, 0]);
    }

    fn swap_halves(m: &Matrix) -> Matrix {
        let h = m.cols() / 2;
        Matrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, (c + h) % (2 * h)))
    }

    fn reverse_rows(m: &Matrix) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |r, c| m.get(m.rows() - 1 - r, c))
    }

    #[test]
    fn reversed_input_with_swapped_directions_reverses_output() {
        for raw in [false, true] {
            let (p, x) = small(Candidate::Maxout, 2, raw, true);
            let mut q = p.clone();
            for (l, layer) in q.layers.iter_mut().enumerate() {
                std::mem::swap(&mut layer.forward, &mut layer.backward);
                if l > 0 {
                    for cell in [&mut layer.forward, &mut layer.backward] {
                        cell.gates_in = swap_halves(&cell.gates_in);
                        cell.cand_in = swap_halves(&cell.cand_in);
                    }
                }
            }
            q.output = swap_halves(&q.output);
            let rx = match &x {
                SequenceInput::Indicators(m) => SequenceInput::Indicators(m.iter().map(reverse_rows).collect()),
                SequenceInput::Raw(m) => SequenceInput::Raw(reverse_rows(m)),
            };
            let a = network_forward(&p, &x).unwrap().log_probs;
            let b = network_forward(&q, &rx).unwrap().log_probs;
            let rb = reverse_rows(&b);
            for (u, v) in a.as_slice().iter().zip(rb.as_slice()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_one_sequence() {
        let (p, x) = small(Candidate::Tanh, 1, false, false);
        let pass = network_forward(&p, &x.slice(2, 3)).unwrap();
        assert_eq!(pass.log_probs.shape(), (1, 3));
    }

    #[test]
    fn saturated_correct_predictions_give_zero_gradient() {
        let (mut p, x) = small(Candidate::Maxout, 2, false, true);
        p.output.fill(0.0);
        p.output_bias = Matrix::from_vec(3, 1, vec![2000.0, 0.0, 0.0]).unwrap();
        let pass = network_forward(&p, &x).unwrap();
        let g = network_backward(&p, &pass, &x, &[0, 0, 0, 0]).unwrap();
        assert!(g.tensors().iter().all(|(_, m)| m.max_abs() < 1e-12));
    }

    #[test]
    fn unselected_embedding_rows_get_no_gradient() {
        let (p, _) = small(Candidate::Maxout, 2, false, false);
        let a = Matrix::from_fn(4, 3, |_, c| if c == 1 { 1.0 } else { 0.0 });
        let b = Matrix::from_fn(4, 4, |r, c| if c == r % 2 { 1.0 } else { 0.0 });
        let x = SequenceInput::Indicators(vec![a, b]);
        let pass = network_forward(&p, &x).unwrap();
        let g = network_backward(&p, &pass, &x, &[0, 1, 2, 0]).unwrap();
        let InputLayer::Embedded { gate, cand } = &g.input else { panic!() };
        for t in [gate, cand] {
            assert!(t.matrices()[0].row(0).iter().chain(t.matrices()[0].row(2)).all(|&v| v == 0.0));
            assert!(t.matrices()[1].row(2).iter().chain(t.matrices()[1].row(3)).all(|&v| v == 0.0));
            assert!(t.matrices()[0].row(1).iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let (p, x) = small(Candidate::Maxout, 2, false, true);
        let y = [1, 0, 2, 2];
        let g1 = network_backward(&p, &network_forward(&p, &x).unwrap(), &x, &y).unwrap();
        let g2 = network_backward(&p, &network_forward(&p, &x).unwrap(), &x, &y).unwrap();
        assert_eq!(g1, g2);
    }
}
