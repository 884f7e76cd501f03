//! GRU and Maxout GRU cells with exact backward passes.
//!
//! ```text
//! (r, z) = σ(U_g x_g + W_g h + b_g)
//! p_j    = U_j x_c + W_cj (r ⊙ h) + b_j          j = 1..k
//! h̃      = tanh(p_1)            (GRU, k = 1)
//!        = max_j p_j            (Maxout GRU)
//! h'     = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Gates and candidate may read different inputs (`x_g`, `x_c`); the first
//! network layer feeds them separate embeddings.

use rand::Rng;

use crate::linalg::{check_len, gemm, Matrix, Op, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Tanh,
    Maxout,
}

/// Weights of one recurrent cell. Candidate pieces are stacked row-wise:
/// piece `j` occupies rows `j·H .. (j+1)·H` of `cand_in` and `cand_rec`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    candidate: Candidate,
    pieces: usize,
    hidden: usize,
    /// `U_g`, `2H × D_g`; reset gate rows first, then update gate rows.
    pub gates_in: Matrix,
    /// `W_g`, `2H × H`.
    pub gates_rec: Matrix,
    /// `U_j` stacked, `kH × D_c`.
    pub cand_in: Matrix,
    /// `W_cj` stacked, `kH × H`.
    pub cand_rec: Matrix,
    pub gates_bias: Option<Matrix>,
    pub cand_bias: Option<Matrix>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl CellParams {
    pub fn zeros(
        candidate: Candidate,
        pieces: usize,
        hidden: usize,
        gate_input: usize,
        cand_input: usize,
        bias: bool,
    ) -> Result<Self, ShapeError> {
        if pieces == 0 || hidden == 0 {
            return Err(ShapeError::mismatch("cell size", "k >= 1 and H >= 1", format!("k={pieces}, H={hidden}")));
        }
        if candidate == Candidate::Tanh && pieces != 1 {
            return Err(ShapeError::mismatch("tanh GRU pieces", 1, pieces));
        }
        Ok(CellParams {
            candidate,
            pieces,
            hidden,
            gates_in: Matrix::zeros(2 * hidden, gate_input),
            gates_rec: Matrix::zeros(2 * hidden, hidden),
            cand_in: Matrix::zeros(pieces * hidden, cand_input),
            cand_rec: Matrix::zeros(pieces * hidden, hidden),
            gates_bias: bias.then(|| Matrix::zeros(2 * hidden, 1)),
            cand_bias: bias.then(|| Matrix::zeros(pieces * hidden, 1)),
        })
    }

    /// Standard GRU from `U_g (2H×D)`, `W_g (2H×H)`, `U (H×D)`, `W_c (H×H)`.
    pub fn gru(gates_in: Matrix, gates_rec: Matrix, cand_in: Matrix, cand_rec: Matrix) -> Result<Self, ShapeError> {
        Self::assemble(Candidate::Tanh, gates_in, gates_rec, vec![cand_in], vec![cand_rec])
    }

    /// Maxout GRU from per-piece `U_j (H×D)` and `W_cj (H×H)`.
    pub fn maxout(
        gates_in: Matrix,
        gates_rec: Matrix,
        cand_in: Vec<Matrix>,
        cand_rec: Vec<Matrix>,
    ) -> Result<Self, ShapeError> {
        Self::assemble(Candidate::Maxout, gates_in, gates_rec, cand_in, cand_rec)
    }

    fn assemble(
        candidate: Candidate,
        gates_in: Matrix,
        gates_rec: Matrix,
        cand_in: Vec<Matrix>,
        cand_rec: Vec<Matrix>,
    ) -> Result<Self, ShapeError> {
        let hidden = gates_rec.cols();
        let pieces = cand_in.len();
        check_len("candidate piece count", pieces, cand_rec.len())?;
        let mut cell = Self::zeros(candidate, pieces, hidden, gates_in.cols(), cand_in.first().map_or(0, Matrix::cols), false)?;
        check_len("U_g rows", 2 * hidden, gates_in.rows())?;
        check_len("W_g rows", 2 * hidden, gates_rec.rows())?;
        cell.gates_in = gates_in;
        cell.gates_rec = gates_rec;
        for (j, (u, w)) in cand_in.iter().zip(&cand_rec).enumerate() {
            check_len("U_j shape", hidden * cell.cand_in.cols(), u.rows() * u.cols())?;
            check_len("U_j rows", hidden, u.rows())?;
            check_len("W_cj rows", hidden, w.rows())?;
            check_len("W_cj cols", hidden, w.cols())?;
            for r in 0..hidden {
                cell.cand_in.row_mut(j * hidden + r).copy_from_slice(u.row(r));
                cell.cand_rec.row_mut(j * hidden + r).copy_from_slice(w.row(r));
            }
        }
        Ok(cell)
    }

    pub fn candidate(&self) -> Candidate {
        self.candidate
    }

    pub fn pieces(&self) -> usize {
        self.pieces
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn gate_input(&self) -> usize {
        self.gates_in.cols()
    }

    pub fn cand_input(&self) -> usize {
        self.cand_in.cols()
    }

    pub fn zeros_like(&self) -> Self {
        CellParams {
            candidate: self.candidate,
            pieces: self.pieces,
            hidden: self.hidden,
            gates_in: self.gates_in.zeros_like(),
            gates_rec: self.gates_rec.zeros_like(),
            cand_in: self.cand_in.zeros_like(),
            cand_rec: self.cand_rec.zeros_like(),
            gates_bias: self.gates_bias.as_ref().map(Matrix::zeros_like),
            cand_bias: self.cand_bias.as_ref().map(Matrix::zeros_like),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = vec![
            ("gates_in", &self.gates_in),
            ("gates_rec", &self.gates_rec),
            ("cand_in", &self.cand_in),
            ("cand_rec", &self.cand_rec),
        ];
        if let Some(b) = &self.gates_bias {
            v.push(("gates_bias", b));
        }
        if let Some(b) = &self.cand_bias {
            v.push(("cand_bias", b));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![
            &mut self.gates_in,
            &mut self.gates_rec,
            &mut self.cand_in,
            &mut self.cand_rec,
        ];
        if let Some(b) = &mut self.gates_bias {
            v.push(b);
        }
        if let Some(b) = &mut self.cand_bias {
            v.push(b);
        }
        v
    }

    /// Fills every weight (biases stay zero) from `U[low, high]`.
    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, low: f64, high: f64) {
        for m in [&mut self.gates_in, &mut self.gates_rec, &mut self.cand_in, &mut self.cand_rec] {
            for v in m.as_mut_slice() {
                *v = rng.random_range(low..=high);
            }
        }
    }

    /// `U_g x + b_g` and `U x + b` for one step.
    fn input_projections(&self, x_gate: &[f64], x_cand: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gp = match &self.gates_bias {
            Some(b) => b.as_slice().to_vec(),
            None => vec![0.0; 2 * self.hidden],
        };
        self.gates_in.matvec_add(x_gate, &mut gp);
        let mut cp = match &self.cand_bias {
            Some(b) => b.as_slice().to_vec(),
            None => vec![0.0; self.pieces * self.hidden],
        };
        self.cand_in.matvec_add(x_cand, &mut cp);
        (gp, cp)
    }

    fn check_step(&self, x_gate: &[f64], x_cand: &[f64], h_prev: &[f64]) -> Result<(), ShapeError> {
        check_len("gate input", self.gate_input(), x_gate.len())?;
        check_len("candidate input", self.cand_input(), x_cand.len())?;
        check_len("hidden state", self.hidden, h_prev.len())
    }

    /// One step given precomputed input projections.
    fn step_core(&self, gate_proj: &[f64], cand_proj: &[f64], h_prev: &[f64], out: &mut StepCache) {
        let h = self.hidden;
        let mut a = gate_proj.to_vec();
        self.gates_rec.matvec_add(h_prev, &mut a);
        for i in 0..h {
            out.r[i] = sigmoid(a[i]);
            out.z[i] = sigmoid(a[h + i]);
            out.rh[i] = out.r[i] * h_prev[i];
        }
        let mut p = cand_proj.to_vec();
        self.cand_rec.matvec_add(&out.rh, &mut p);
        for i in 0..h {
            let (c, j) = match self.candidate {
                Candidate::Tanh => (p[i].tanh(), 0),
                Candidate::Maxout => {
                    let mut best = (p[i], 0);
                    for j in 1..self.pieces {
                        // strict comparison keeps the lowest index on ties
                        if p[j * h + i] > best.0 {
                            best = (p[j * h + i], j);
                        }
                    }
                    best
                }
            };
            out.cand[i] = c;
            out.argmax[i] = j;
            out.h[i] = (1.0 - out.z[i]) * h_prev[i] + out.z[i] * c;
        }
    }

    /// Forward step keeping every intermediate needed for backprop.
    pub fn step(&self, x_gate: &[f64], x_cand: &[f64], h_prev: &[f64]) -> Result<StepCache, ShapeError> {
        self.check_step(x_gate, x_cand, h_prev)?;
        let (gp, cp) = self.input_projections(x_gate, x_cand);
        let mut cache = StepCache::new(self.hidden);
        self.step_core(&gp, &cp, h_prev, &mut cache);
        Ok(cache)
    }

    /// Gradients with respect to the gate pre-activation `a`, the candidate
    /// pieces `p` and `h_prev`, given `dL/dh'`.
    fn step_backward_core(&self, c: &StepCache, h_prev: &[f64], dh: &[f64], da: &mut [f64], dp: &mut [f64]) -> Vec<f64> {
        let h = self.hidden;
        let mut dh_prev = vec![0.0; h];
        let mut dz = vec![0.0; h];
        dp.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..h {
            dz[i] = dh[i] * (c.cand[i] - h_prev[i]);
            let dcand = dh[i] * c.z[i];
            dh_prev[i] = dh[i] * (1.0 - c.z[i]);
            match self.candidate {
                Candidate::Tanh => dp[i] = dcand * (1.0 - c.cand[i] * c.cand[i]),
                Candidate::Maxout => dp[c.argmax[i] * h + i] = dcand,
            }
        }
        let mut d_rh = vec![0.0; h];
        self.cand_rec.matvec_t_add(dp, &mut d_rh);
        for i in 0..h {
            let dr = d_rh[i] * h_prev[i];
            dh_prev[i] += d_rh[i] * c.r[i];
            da[i] = dr * c.r[i] * (1.0 - c.r[i]);
            da[h + i] = dz[i] * c.z[i] * (1.0 - c.z[i]);
        }
        self.gates_rec.matvec_t_add(da, &mut dh_prev);
        dh_prev
    }

    /// Backward through one step, accumulating weight gradients into `grads`.
    pub fn step_backward(
        &self,
        cache: &StepCache,
        x_gate: &[f64],
        x_cand: &[f64],
        h_prev: &[f64],
        dh: &[f64],
        grads: &mut CellParams,
    ) -> Result<StepGrads, ShapeError> {
        self.check_step(x_gate, x_cand, h_prev)?;
        check_len("upstream gradient", self.hidden, dh.len())?;
        let mut da = vec![0.0; 2 * self.hidden];
        let mut dp = vec![0.0; self.pieces * self.hidden];
        let dh_prev = self.step_backward_core(cache, h_prev, dh, &mut da, &mut dp);

        grads.gates_in.add_outer(&da, x_gate);
        grads.gates_rec.add_outer(&da, h_prev);
        grads.cand_in.add_outer(&dp, x_cand);
        grads.cand_rec.add_outer(&dp, &cache.rh);
        if let Some(b) = &mut grads.gates_bias {
            b.as_mut_slice().iter_mut().zip(&da).for_each(|(g, d)| *g += d);
        }
        if let Some(b) = &mut grads.cand_bias {
            b.as_mut_slice().iter_mut().zip(&dp).for_each(|(g, d)| *g += d);
        }
        let mut dx_gate = vec![0.0; self.gate_input()];
        self.gates_in.matvec_t_add(&da, &mut dx_gate);
        let mut dx_cand = vec![0.0; self.cand_input()];
        self.cand_in.matvec_t_add(&dp, &mut dx_cand);
        Ok(StepGrads { dx_gate, dx_cand, dh_prev })
    }

    /// Runs the cell over `T` steps. With `reverse`, time runs from the last
    /// row to the first; states stay aligned with input rows either way.
    pub fn forward_sequence(&self, x_gate: &Matrix, x_cand: &Matrix, reverse: bool) -> Result<SequenceCache, ShapeError> {
        let t_len = x_gate.rows();
        check_len("candidate input steps", t_len, x_cand.rows())?;
        check_len("gate input", self.gate_input(), x_gate.cols())?;
        check_len("candidate input", self.cand_input(), x_cand.cols())?;
        let h = self.hidden;

        let mut gate_proj = Matrix::zeros(t_len, 2 * h);
        gemm(1.0, x_gate, Op::N, &self.gates_in, Op::T, 0.0, &mut gate_proj);
        let mut cand_proj = Matrix::zeros(t_len, self.pieces * h);
        gemm(1.0, x_cand, Op::N, &self.cand_in, Op::T, 0.0, &mut cand_proj);
        add_row_bias(&mut gate_proj, self.gates_bias.as_ref());
        add_row_bias(&mut cand_proj, self.cand_bias.as_ref());

        let mut steps = Vec::with_capacity(t_len);
        let mut states = Matrix::zeros(t_len, h);
        let mut prev = Matrix::zeros(t_len, h);
        let mut h_prev = vec![0.0; h];
        for t in order(t_len, reverse) {
            let mut c = StepCache::new(h);
            self.step_core(gate_proj.row(t), cand_proj.row(t), &h_prev, &mut c);
            prev.row_mut(t).copy_from_slice(&h_prev);
            states.row_mut(t).copy_from_slice(&c.h);
            h_prev.copy_from_slice(&c.h);
            steps.push((t, c));
        }
        steps.sort_by_key(|(t, _)| *t);
        Ok(SequenceCache {
            reverse,
            states,
            prev,
            steps: steps.into_iter().map(|(_, c)| c).collect(),
        })
    }

    /// Backward over a sequence given `dL/dh_t` for every step (`d_states`,
    /// aligned with input rows). Returns `(dL/dx_gate, dL/dx_cand)`.
    pub fn backward_sequence(
        &self,
        cache: &SequenceCache,
        x_gate: &Matrix,
        x_cand: &Matrix,
        d_states: &Matrix,
        grads: &mut CellParams,
    ) -> Result<(Matrix, Matrix), ShapeError> {
        let t_len = cache.steps.len();
        check_len("state gradient steps", t_len, d_states.rows())?;
        check_len("state gradient width", self.hidden, d_states.cols())?;
        let h = self.hidden;
        let mut da_all = Matrix::zeros(t_len, 2 * h);
        let mut dp_all = Matrix::zeros(t_len, self.pieces * h);
        let mut rh_all = Matrix::zeros(t_len, h);
        let mut carry = vec![0.0; h];
        let mut dh = vec![0.0; h];
        let mut fwd: Vec<usize> = order(t_len, cache.reverse).collect();
        fwd.reverse();
        for t in fwd {
            for i in 0..h {
                dh[i] = d_states.get(t, i) + carry[i];
            }
            let c = &cache.steps[t];
            rh_all.row_mut(t).copy_from_slice(&c.rh);
            carry = self.step_backward_core(c, cache.prev.row(t), &dh, da_all.row_mut(t), dp_all.row_mut(t));
        }

        gemm(1.0, &da_all, Op::T, x_gate, Op::N, 1.0, &mut grads.gates_in);
        gemm(1.0, &da_all, Op::T, &cache.prev, Op::N, 1.0, &mut grads.gates_rec);
        gemm(1.0, &dp_all, Op::T, x_cand, Op::N, 1.0, &mut grads.cand_in);
        gemm(1.0, &dp_all, Op::T, &rh_all, Op::N, 1.0, &mut grads.cand_rec);
        if let Some(b) = &mut grads.gates_bias {
            add_column_sums(b, &da_all);
        }
        if let Some(b) = &mut grads.cand_bias {
            add_column_sums(b, &dp_all);
        }
        let mut dx_gate = Matrix::zeros(t_len, self.gate_input());
        gemm(1.0, &da_all, Op::N, &self.gates_in, Op::N, 0.0, &mut dx_gate);
        let mut dx_cand = Matrix::zeros(t_len, self.cand_input());
        gemm(1.0, &dp_all, Op::N, &self.cand_in, Op::N, 0.0, &mut dx_cand);
        Ok((dx_gate, dx_cand))
    }
}

fn order(t_len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    }
}

fn add_row_bias(m: &mut Matrix, bias: Option<&Matrix>) {
    if let Some(b) = bias {
        for r in 0..m.rows() {
            m.row_mut(r).iter_mut().zip(b.as_slice()).for_each(|(v, b)| *v += b);
        }
    }
}

fn add_column_sums(target: &mut Matrix, m: &Matrix) {
    let out = target.as_mut_slice();
    for r in 0..m.rows() {
        out.iter_mut().zip(m.row(r)).for_each(|(o, v)| *o += v);
    }
}

/// Intermediates of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub rh: Vec<f64>,
    /// Candidate state `h̃`.
    pub cand: Vec<f64>,
    /// Winning piece per unit (always 0 for the tanh GRU).
    pub argmax: Vec<usize>,
    pub h: Vec<f64>,
}

impl StepCache {
    fn new(hidden: usize) -> Self {
        StepCache {
            r: vec![0.0; hidden],
            z: vec![0.0; hidden],
            rh: vec![0.0; hidden],
            cand: vec![0.0; hidden],
            argmax: vec![0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub dx_gate: Vec<f64>,
    pub dx_cand: Vec<f64>,
    pub dh_prev: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SequenceCache {
    reverse: bool,
    /// `h_t`, aligned with input rows.
    pub states: Matrix,
    /// The state each step started from.
    prev: Matrix,
    steps: Vec<StepCache>,
}

impl SequenceCache {
    pub fn step(&self, t: usize) -> &StepCache {
        &self.steps[t]
    }
}

/// One tanh-GRU step.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &CellParams) -> Result<Vec<f64>, ShapeError> {
    if params.candidate != Candidate::Tanh {
        return Err(ShapeError::mismatch("cell kind", "tanh GRU", "maxout GRU"));
    }
    Ok(params.step(x, x, h_prev)?.h)
}

/// One Maxout-GRU step.
pub fn maxout_gru_cell(x: &[f64], h_prev: &[f64], params: &CellParams) -> Result<StepCache, ShapeError> {
    if params.candidate != Candidate::Maxout {
        return Err(ShapeError::mismatch("cell kind", "maxout GRU", "tanh GRU"));
    }
    params.step(x, x, h_prev)
}
