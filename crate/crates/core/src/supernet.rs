//! Cell-based supernet over feature vectors.
//!
//! A cell is a DAG over `nodes_per_cell` nodes; every pair `i < j` carries an
//! edge whose output is the softmax(α)-weighted mixture of the candidate
//! operations applied to node `i`. Node `j` is the sum of its incoming edges,
//! node 0 is the cell input, and the last node is the cell output. Cells are
//! chained and followed by an affine classifier head and a softmax.
//!
//! Forward and backward are written out by hand. The per-edge operation
//! weights are kept general (a "mixing" matrix) so the same code runs the
//! relaxed supernet (`softmax(α)`) and a discrete genotype (one-hot rows).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BdpError, Result};
use crate::numcore::{argmax, axpy, dot, l2_distance, softmax, Mat64, RngStream, Vec64};

/// Candidate operation on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Zero,
    Identity,
    Linear,
    LinearAct,
    MeanPool,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [
        OpKind::Zero,
        OpKind::Identity,
        OpKind::Linear,
        OpKind::LinearAct,
        OpKind::MeanPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::Identity => "identity",
            OpKind::Linear => "linear",
            OpKind::LinearAct => "linearact",
            OpKind::MeanPool => "meanpool",
        }
    }

    /// Whether the op owns a weight matrix and bias.
    pub fn is_parametric(self) -> bool {
        matches!(self, OpKind::Linear | OpKind::LinearAct)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = BdpError;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| BdpError::InvalidGenotype(format!("unknown op `{s}`")))
    }
}

/// Shape of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub nodes_per_cell: usize,
    pub candidate_ops: Vec<OpKind>,
    pub feature_dim: usize,
    pub num_cells: usize,
    pub num_classes: usize,
}

impl SpaceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BdpError::InvalidConfig(m.to_string()));
        if self.nodes_per_cell < 2 {
            return bad("nodes_per_cell must be >= 2");
        }
        if self.candidate_ops.is_empty() {
            return bad("candidate op set is empty");
        }
        for (i, op) in self.candidate_ops.iter().enumerate() {
            if self.candidate_ops[..i].contains(op) {
                return bad(&format!("duplicate candidate op `{op}`"));
            }
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1");
        }
        if self.num_cells == 0 {
            return bad("num_cells must be >= 1");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        Ok(())
    }

    pub fn edges_per_cell(&self) -> usize {
        self.nodes_per_cell * (self.nodes_per_cell - 1) / 2
    }

    pub fn total_edges(&self) -> usize {
        self.edges_per_cell() * self.num_cells
    }

    pub fn num_ops(&self) -> usize {
        self.candidate_ops.len()
    }

    /// Edges in canonical order: by cell, then destination, then source.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.total_edges());
        for cell in 0..self.num_cells {
            for dst in 1..self.nodes_per_cell {
                for src in 0..dst {
                    out.push(Edge { cell, src, dst });
                }
            }
        }
        out
    }

    /// Closed-form number of supernet weights.
    pub fn param_count(&self) -> usize {
        let d = self.feature_dim;
        let parametric = self.candidate_ops.iter().filter(|o| o.is_parametric()).count();
        self.total_edges() * parametric * (d * d + d) + self.num_classes * (d + 1)
    }
}

/// One DAG edge `src -> dst` inside `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub cell: usize,
    pub src: usize,
    pub dst: usize,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell{}.edge{}->{}", self.cell, self.src, self.dst)
    }
}

/// Architecture logits α, one row per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub alpha: Mat64,
}

impl ArchParams {
    pub fn zeros(space: &SpaceConfig) -> Self {
        Self {
            alpha: Mat64::zeros(space.total_edges(), space.num_ops()),
        }
    }

    /// β = row-wise softmax of α.
    pub fn betas(&self) -> Result<Mat64> {
        let mut out = Mat64::zeros(self.alpha.rows(), self.alpha.cols());
        for r in 0..self.alpha.rows() {
            out.row_mut(r).copy_from_slice(&softmax(self.alpha.row(r))?);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.alpha.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discrete architecture: chosen op index per edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genotype {
    pub chosen_op: Vec<usize>,
}

impl Genotype {
    pub fn validate(&self, space: &SpaceConfig) -> Result<()> {
        if self.chosen_op.len() != space.total_edges() {
            return Err(BdpError::InvalidGenotype(format!(
                "expected {} edges, got {}",
                space.total_edges(),
                self.chosen_op.len()
            )));
        }
        if let Some((e, &k)) = self
            .chosen_op
            .iter()
            .enumerate()
            .find(|(_, &k)| k >= space.num_ops())
        {
            return Err(BdpError::InvalidGenotype(format!(
                "edge {e} selects op index {k} outside the candidate set"
            )));
        }
        Ok(())
    }

    /// Same op on every edge. Errors if the op is not a candidate.
    pub fn uniform(space: &SpaceConfig, op: OpKind) -> Result<Self> {
        let k = space
            .candidate_ops
            .iter()
            .position(|&o| o == op)
            .ok_or_else(|| BdpError::InvalidGenotype(format!("`{op}` is not a candidate op")))?;
        Ok(Self {
            chosen_op: vec![k; space.total_edges()],
        })
    }

    pub fn ops<'a>(&'a self, space: &'a SpaceConfig) -> impl Iterator<Item = OpKind> + 'a {
        self.chosen_op.iter().map(move |&k| space.candidate_ops[k])
    }

    /// One-hot mixing rows.
    pub fn one_hot(&self, space: &SpaceConfig) -> Result<Mat64> {
        self.validate(space)?;
        let mut m = Mat64::zeros(space.total_edges(), space.num_ops());
        for (e, &k) in self.chosen_op.iter().enumerate() {
            m.set(e, k, 1.0);
        }
        Ok(m)
    }

    /// `cell<i>.edge<src>-><dst>: <op>` lines, LF terminated.
    pub fn to_text(&self, space: &SpaceConfig) -> String {
        let mut s = String::new();
        for (edge, op) in space.edges().iter().zip(self.ops(space)) {
            s.push_str(&format!("{edge}: {op}\n"));
        }
        s
    }

    pub fn parse(text: &str, space: &SpaceConfig) -> Result<Self> {
        let edges = space.edges();
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.len() != edges.len() {
            return Err(BdpError::InvalidGenotype(format!(
                "expected {} edge lines, found {}",
                edges.len(),
                lines.len()
            )));
        }
        let mut chosen_op = Vec::with_capacity(edges.len());
        for (lineno, (line, edge)) in lines.iter().zip(&edges).enumerate() {
            let (label, op) = line.split_once(':').ok_or_else(|| {
                BdpError::InvalidGenotype(format!("line {}: missing `:`", lineno + 1))
            })?;
            if label.trim() != edge.to_string() {
                return Err(BdpError::InvalidGenotype(format!(
                    "line {}: expected `{edge}`, found `{}`",
                    lineno + 1,
                    label.trim()
                )));
            }
            let op: OpKind = op.trim().parse()?;
            let k = space.candidate_ops.iter().position(|&o| o == op).ok_or_else(|| {
                BdpError::InvalidGenotype(format!(
                    "line {}: `{op}` is not in the candidate set",
                    lineno + 1
                ))
            })?;
            chosen_op.push(k);
        }
        Ok(Self { chosen_op })
    }
}

/// Per-edge argmax of α; ties go to the lowest op index.
pub fn discretize(alpha: &ArchParams) -> Genotype {
    Genotype {
        chosen_op: (0..alpha.alpha.rows())
            .map(|r| argmax(alpha.alpha.row(r)))
            .collect(),
    }
}

/// Supernet weights `w`: every parametric (edge, op) bank plus the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Supernet {
    space: SpaceConfig,
    edges: Vec<Edge>,
    /// `slots[e][k]` is the offset of `W` for op `k` on edge `e`; `b` follows.
    slots: Vec<Vec<Option<usize>>>,
    head_offset: usize,
    params: Vec<f64>,
}

/// Activations retained by [`Supernet::forward_mixed`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `nodes[cell][node]`
    nodes: Vec<Vec<Vec64>>,
    /// `op_out[edge][op]`; empty for ops skipped because their weight was 0.
    op_out: Vec<Vec<Vec64>>,
    pub logits: Vec64,
    pub probs: Vec64,
}

/// Probability vector and L2 prediction error of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub probs: Vec64,
    pub error: f64,
}

/// Mean softmax cross-entropy and its exact gradients over a batch.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub grad_w: Vec64,
    pub grad_alpha: Mat64,
    pub per_sample: Vec<SampleEval>,
}

/// Fresh supernet with uniform `[-1/sqrt(d), 1/sqrt(d)]` weights and zero α.
pub fn build_supernet(space: &SpaceConfig, rng: &mut RngStream) -> Result<(Supernet, ArchParams)> {
    let net = Supernet::new(space, rng)?;
    Ok((net, ArchParams::zeros(space)))
}

impl Supernet {
    pub fn new(space: &SpaceConfig, rng: &mut RngStream) -> Result<Self> {
        space.validate()?;
        let d = space.feature_dim;
        let edges = space.edges();
        let mut offset = 0;
        let slots: Vec<Vec<Option<usize>>> = edges
            .iter()
            .map(|_| {
                space
                    .candidate_ops
                    .iter()
                    .map(|op| {
                        op.is_parametric().then(|| {
                            let at = offset;
                            offset += d * d + d;
                            at
                        })
                    })
                    .collect()
            })
            .collect();
        let head_offset = offset;
        let total = offset + space.num_classes * (d + 1);
        debug_assert_eq!(total, space.param_count());
        let s = 1.0 / (d as f64).sqrt();
        let params = (0..total).map(|_| rng.uniform_range(-s, s)).collect();
        Ok(Self {
            space: space.clone(),
            edges,
            slots,
            head_offset,
            params,
        })
    }

    pub fn space(&self) -> &SpaceConfig {
        &self.space
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn head_w(&self) -> &[f64] {
        let d = self.space.feature_dim;
        &self.params[self.head_offset..self.head_offset + self.space.num_classes * d]
    }

    fn head_b(&self) -> &[f64] {
        let d = self.space.feature_dim;
        &self.params[self.head_offset + self.space.num_classes * d..]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.space.feature_dim {
            return Err(BdpError::LengthMismatch {
                expected: self.space.feature_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_mixing(&self, mixing: &Mat64) -> Result<()> {
        let want = (self.space.total_edges(), self.space.num_ops());
        if mixing.shape() != want {
            return Err(BdpError::ShapeMismatch {
                expected: want,
                actual: mixing.shape(),
            });
        }
        Ok(())
    }

    fn apply_op(&self, op: OpKind, slot: Option<usize>, x: &[f64]) -> Vec64 {
        let d = self.space.feature_dim;
        match op {
            OpKind::Zero => vec![0.0; d],
            OpKind::Identity => x.to_vec(),
            OpKind::MeanPool => vec![x.iter().sum::<f64>() / d as f64; d],
            OpKind::Linear | OpKind::LinearAct => {
                let at = slot.expect("parametric op has a weight slot");
                let w = &self.params[at..at + d * d];
                let b = &self.params[at + d * d..at + d * d + d];
                let mut y: Vec64 = (0..d).map(|r| dot(&w[r * d..(r + 1) * d], x) + b[r]).collect();
                if op == OpKind::LinearAct {
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                y
            }
        }
    }

    /// Σ_k mixing_k · O_k(x) on edge `edge`.
    pub fn mixed_edge_forward(&self, edge: usize, mixing_row: &[f64], x: &[f64]) -> Result<Vec64> {
        self.check_input(x)?;
        if mixing_row.len() != self.space.num_ops() {
            return Err(BdpError::LengthMismatch {
                expected: self.space.num_ops(),
                actual: mixing_row.len(),
            });
        }
        let mut out = vec![0.0; self.space.feature_dim];
        for (k, &op) in self.space.candidate_ops.iter().enumerate() {
            if mixing_row[k] != 0.0 {
                axpy(mixing_row[k], &self.apply_op(op, self.slots[edge][k], x), &mut out);
            }
        }
        Ok(out)
    }

    /// Forward pass under arbitrary per-edge op weights.
    pub fn forward_mixed(&self, mixing: &Mat64, x: &[f64]) -> Result<Tape> {
        self.check_input(x)?;
        self.check_mixing(mixing)?;
        let n = self.space.nodes_per_cell;
        let d = self.space.feature_dim;
        let mut nodes: Vec<Vec<Vec64>> = Vec::with_capacity(self.space.num_cells);
        let mut op_out: Vec<Vec<Vec64>> = Vec::with_capacity(self.edges.len());
        let mut input = x.to_vec();
        let mut e = 0;
        for cell in 0..self.space.num_cells {
            let mut cell_nodes = vec![input];
            for dst in 1..n {
                let mut acc = vec![0.0; d];
                for src in 0..dst {
                    let row = mixing.row(e);
                    let mut outs = Vec::with_capacity(row.len());
                    for (k, &op) in self.space.candidate_ops.iter().enumerate() {
                        if row[k] == 0.0 {
                            outs.push(Vec::new());
                            continue;
                        }
                        let y = self.apply_op(op, self.slots[e][k], &cell_nodes[src]);
                        axpy(row[k], &y, &mut acc);
                        outs.push(y);
                    }
                    op_out.push(outs);
                    e += 1;
                }
                if acc.iter().any(|v| !v.is_finite()) {
                    return Err(BdpError::NonFiniteActivation { cell, node: dst });
                }
                cell_nodes.push(acc);
            }
            input = cell_nodes[n - 1].clone();
            nodes.push(cell_nodes);
        }
        let hw = self.head_w();
        let hb = self.head_b();
        let logits: Vec64 = (0..self.space.num_classes)
            .map(|c| dot(&hw[c * d..(c + 1) * d], &input) + hb[c])
            .collect();
        let probs = softmax(&logits)?;
        Ok(Tape {
            nodes,
            op_out,
            logits,
            probs,
        })
    }

    /// Forward pass of the relaxed supernet, β = softmax(α).
    pub fn forward(&self, alpha: &ArchParams, x: &[f64]) -> Result<(Vec64, Tape)> {
        let tape = self.forward_mixed(&alpha.betas()?, x)?;
        Ok((tape.probs.clone(), tape))
    }

    /// Forward pass of a discrete genotype: one op per edge with weight 1.
    pub fn genotype_forward(&self, g: &Genotype, x: &[f64]) -> Result<Vec64> {
        Ok(self.forward_mixed(&g.one_hot(&self.space)?, x)?.probs)
    }

    /// Backward of one sample's cross-entropy, scaled by `scale`, accumulated
    /// into `grad_w` and `grad_mix` (gradient w.r.t. the mixing weights).
    fn backward_sample(
        &self,
        mixing: &Mat64,
        tape: &Tape,
        label: usize,
        scale: f64,
        grad_w: &mut [f64],
        grad_mix: &mut Mat64,
    ) {
        let d = self.space.feature_dim;
        let n = self.space.nodes_per_cell;
        let m = self.space.num_classes;

        let mut dlogits = tape.probs.clone();
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= scale);

        let last_cell = &tape.nodes[self.space.num_cells - 1];
        let h = &last_cell[n - 1];
        let mut g_out = vec![0.0; d];
        for c in 0..m {
            let wrow = self.head_offset + c * d;
            for j in 0..d {
                grad_w[wrow + j] += dlogits[c] * h[j];
                g_out[j] += self.params[wrow + j] * dlogits[c];
            }
            grad_w[self.head_offset + m * d + c] += dlogits[c];
        }

        let epc = self.space.edges_per_cell();
        for cell in (0..self.space.num_cells).rev() {
            let cell_nodes = &tape.nodes[cell];
            let mut g_nodes = vec![vec![0.0; d]; n];
            g_nodes[n - 1] = g_out;
            for dst in (1..n).rev() {
                let g = std::mem::take(&mut g_nodes[dst]);
                for src in (0..dst).rev() {
                    let e = cell * epc + dst * (dst - 1) / 2 + src;
                    let x = &cell_nodes[src];
                    let row = mixing.row(e);
                    for (k, &op) in self.space.candidate_ops.iter().enumerate() {
                        let y = &tape.op_out[e][k];
                        if y.is_empty() {
                            continue;
                        }
                        let gm = grad_mix.get(e, k) + dot(&g, y);
                        grad_mix.set(e, k, gm);
                        let beta = row[k];
                        let gx = &mut g_nodes[src];
                        match op {
                            OpKind::Zero => {}
                            OpKind::Identity => axpy(beta, &g, gx),
                            OpKind::MeanPool => {
                                let s = beta * g.iter().sum::<f64>() / d as f64;
                                gx.iter_mut().for_each(|v| *v += s);
                            }
                            OpKind::Linear | OpKind::LinearAct => {
                                let at = self.slots[e][k].expect("parametric slot");
                                for r in 0..d {
                                    let mut gr = beta * g[r];
                                    if op == OpKind::LinearAct && y[r] <= 0.0 {
                                        gr = 0.0;
                                    }
                                    if gr == 0.0 {
                                        continue;
                                    }
                                    let wr = at + r * d;
                                    for c in 0..d {
                                        grad_w[wr + c] += gr * x[c];
                                        gx[c] += self.params[wr + c] * gr;
                                    }
                                    grad_w[at + d * d + r] += gr;
                                }
                            }
                        }
                    }
                }
            }
            g_out = std::mem::take(&mut g_nodes[0]);
        }
    }

    /// Mean cross-entropy over `tapes` with gradients w.r.t. the weights and
    /// the mixing matrix. Samples are reduced in the given order.
    pub fn backward_mixed(
        &self,
        mixing: &Mat64,
        tapes: &[Tape],
        labels: &[usize],
    ) -> Result<(f64, Vec64, Mat64, Vec<SampleEval>)> {
        if tapes.is_empty() || tapes.len() != labels.len() {
            return Err(BdpError::LengthMismatch {
                expected: tapes.len(),
                actual: labels.len(),
            });
        }
        self.check_mixing(mixing)?;
        let scale = 1.0 / tapes.len() as f64;
        let mut grad_w = vec![0.0; self.params.len()];
        let mut grad_mix = Mat64::zeros(mixing.rows(), mixing.cols());
        let mut loss = 0.0;
        let mut per_sample = Vec::with_capacity(tapes.len());
        for (tape, &y) in tapes.iter().zip(labels) {
            if y >= self.space.num_classes {
                return Err(BdpError::Dataset(format!("label {y} out of range")));
            }
            loss += scale * cross_entropy(&tape.logits, y);
            let error = prediction_error(&tape.probs, y);
            per_sample.push(SampleEval {
                probs: tape.probs.clone(),
                error,
            });
            self.backward_sample(mixing, tape, y, scale, &mut grad_w, &mut grad_mix);
        }
        Ok((loss, grad_w, grad_mix, per_sample))
    }

    /// Exact gradients of the batch loss w.r.t. `w` and `α`, given the tapes
    /// from [`forward`](Self::forward) under the same `alpha`.
    pub fn backward(&self, alpha: &ArchParams, tapes: &[Tape], labels: &[usize]) -> Result<BatchGrad> {
        let betas = alpha.betas()?;
        let (loss, grad_w, grad_beta, per_sample) = self.backward_mixed(&betas, tapes, labels)?;
        let grad_alpha = softmax_backward(&betas, &grad_beta);
        Ok(BatchGrad {
            loss,
            grad_w,
            grad_alpha,
            per_sample,
        })
    }

    /// Forward + backward over a batch of `(x, label)` pairs.
    pub fn batch_gradients(&self, alpha: &ArchParams, xs: &[&[f64]], labels: &[usize]) -> Result<BatchGrad> {
        let betas = alpha.betas()?;
        let tapes = xs
            .iter()
            .map(|x| self.forward_mixed(&betas, x))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grad_w, grad_beta, per_sample) = self.backward_mixed(&betas, &tapes, labels)?;
        Ok(BatchGrad {
            loss,
            grad_w,
            grad_alpha: softmax_backward(&betas, &grad_beta),
            per_sample,
        })
    }

    /// Mean cross-entropy only.
    pub fn batch_loss(&self, mixing: &Mat64, xs: &[&[f64]], labels: &[usize]) -> Result<f64> {
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            loss += cross_entropy(&self.forward_mixed(mixing, x)?.logits, y);
        }
        Ok(loss / xs.len() as f64)
    }
}

/// Row-wise softmax Jacobian-transpose: dL/dα from dL/dβ.
fn softmax_backward(betas: &Mat64, grad_beta: &Mat64) -> Mat64 {
    let mut out = Mat64::zeros(betas.rows(), betas.cols());
    for r in 0..betas.rows() {
        let b = betas.row(r);
        let g = grad_beta.row(r);
        let inner = dot(b, g);
        for (k, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = b[k] * (g[k] - inner);
        }
    }
    out
}

/// `logsumexp(z) - z[label]`
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// ‖p − onehot(label)‖₂, the per-sample error fed to the pruning scores.
pub fn prediction_error(probs: &[f64], label: usize) -> f64 {
    let mut y = vec![0.0; probs.len()];
    y[label] = 1.0;
    l2_distance(probs, &y).expect("equal lengths")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::seeded_rng;

    fn space(nodes: usize, ops: Vec<OpKind>, d: usize, cells: usize) -> SpaceConfig {
        SpaceConfig {
            nodes_per_cell: nodes,
            candidate_ops: ops,
            feature_dim: d,
            num_cells: cells,
            num_classes: 3,
        }
    }

    #[test]
    fn alpha_shape_and_uniform_beta() {
        let s = space(4, OpKind::ALL.to_vec(), 3, 2);
        let (_, a) = build_supernet(&s, &mut seeded_rng(0)).unwrap();
        assert_eq!(a.alpha.shape(), (12, 5));
        let b = a.betas().unwrap();
        assert!(b.as_slice().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn weights_deterministic_and_in_range() {
        let s = space(3, OpKind::ALL.to_vec(), 4, 1);
        let (n1, _) = build_supernet(&s, &mut seeded_rng(5)).unwrap();
        let (n2, _) = build_supernet(&s, &mut seeded_rng(5)).unwrap();
        assert_eq!(n1, n2);
        assert!(n1.params().iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn build_rejects_bad_space() {
        let mut s = space(3, vec![], 2, 1);
        assert!(build_supernet(&s, &mut seeded_rng(0)).is_err());
        s.candidate_ops = vec![OpKind::Zero];
        s.feature_dim = 0;
        assert!(build_supernet(&s, &mut seeded_rng(0)).is_err());
        s.feature_dim = 2;
        s.candidate_ops = vec![OpKind::Zero, OpKind::Zero];
        assert!(build_supernet(&s, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn param_count_hand_count_two_nodes() {
        // One edge, ops {linear, identity}: W 3x3 + b 3 = 12, head 3x3 + 3 = 12.
        let s = space(2, vec![OpKind::Linear, OpKind::Identity], 3, 1);
        assert_eq!(s.param_count(), 24);
        let (n, _) = build_supernet(&s, &mut seeded_rng(0)).unwrap();
        assert_eq!(n.param_count(), 24);
    }

    #[test]
    fn mixed_edge_limits() {
        let s = space(2, vec![OpKind::Zero, OpKind::Identity, OpKind::LinearAct], 3, 1);
        let (n, _) = build_supernet(&s, &mut seeded_rng(1)).unwrap();
        let x = [0.3, -1.2, 2.0];
        let id = softmax(&[-40.0, 40.0, -40.0]).unwrap();
        let y = n.mixed_edge_forward(0, &id, &x).unwrap();
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
        let y = n.mixed_edge_forward(0, &[1.0, 0.0, 0.0], &x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(n.mixed_edge_forward(0, &id, &x[..2]).is_err());
    }

    #[test]
    fn uniform_zero_identity_halves_input() {
        let s = space(2, vec![OpKind::Zero, OpKind::Identity], 2, 1);
        let (n, _) = build_supernet(&s, &mut seeded_rng(1)).unwrap();
        let b = softmax(&[0.0, 0.0]).unwrap();
        let y = n.mixed_edge_forward(0, &b, &[1.0, -4.0]).unwrap();
        assert_eq!(y, vec![0.5, -2.0]);
    }

    #[test]
    fn meanpool_op() {
        let s = space(2, vec![OpKind::MeanPool], 3, 1);
        let (n, _) = build_supernet(&s, &mut seeded_rng(1)).unwrap();
        let y = n.mixed_edge_forward(0, &[1.0], &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(y, vec![3.0; 3]);
    }

    #[test]
    fn zero_path_gives_softmax_of_bias() {
        let s = space(3, vec![OpKind::Zero], 2, 2);
        let (n, a) = build_supernet(&s, &mut seeded_rng(2)).unwrap();
        let (p, _) = n.forward(&a, &[5.0, -3.0]).unwrap();
        let bias = softmax(n.head_b()).unwrap();
        assert!(p.iter().zip(&bias).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn single_edge_identity_is_head_of_input() {
        let s = space(2, vec![OpKind::Identity], 2, 1);
        let (n, a) = build_supernet(&s, &mut seeded_rng(3)).unwrap();
        let x = [0.7, -0.2];
        let (p, _) = n.forward(&a, &x).unwrap();
        let hw = n.head_w();
        let hb = n.head_b();
        let logits: Vec<f64> = (0..3).map(|c| hw[2 * c] * x[0] + hw[2 * c + 1] * x[1] + hb[c]).collect();
        let want = softmax(&logits).unwrap();
        assert!(p.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-15));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discretize_rules() {
        let a = ArchParams {
            alpha: Mat64::from_vec(2, 5, vec![0.1, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        };
        assert_eq!(discretize(&a).chosen_op, vec![1, 0]);
        let mut shifted = a.clone();
        shifted.alpha.row_mut(0).iter_mut().for_each(|v| *v += 7.5);
        assert_eq!(discretize(&shifted), discretize(&a));
    }

    #[test]
    fn genotype_forward_matches_one_hot_limit() {
        let s = space(3, OpKind::ALL.to_vec(), 3, 1);
        let (n, mut a) = build_supernet(&s, &mut seeded_rng(4)).unwrap();
        let picks = [3usize, 1, 2];
        for (e, &k) in picks.iter().enumerate() {
            a.alpha.set(e, k, 60.0);
        }
        let g = discretize(&a);
        assert_eq!(g.chosen_op, picks);
        let x = [0.4, -0.9, 1.3];
        let (p, _) = n.forward(&a, &x).unwrap();
        let q = n.genotype_forward(&g, &x).unwrap();
        assert!(p.iter().zip(&q).all(|(u, v)| (u - v).abs() < 1e-9));
    }

    #[test]
    fn genotype_rejects_bad_index() {
        let s = space(2, vec![OpKind::Zero, OpKind::Identity], 2, 1);
        let (n, _) = build_supernet(&s, &mut seeded_rng(0)).unwrap();
        let g = Genotype { chosen_op: vec![2] };
        assert!(n.genotype_forward(&g, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn genotype_text_roundtrip_and_errors() {
        let s = space(3, OpKind::ALL.to_vec(), 2, 2);
        let g = Genotype { chosen_op: vec![0, 1, 2, 3, 4, 3] };
        let text = g.to_text(&s);
        assert!(text.starts_with("cell0.edge0->1: zero\ncell0.edge0->2: identity\n"));
        assert!(text.contains("cell1.edge1->2: linearact\n"));
        assert_eq!(Genotype::parse(&text, &s).unwrap(), g);
        assert!(Genotype::parse("cell0.edge0->1: zero\n", &s).is_err());
        let bad_op = text.replace("meanpool", "conv3x3");
        assert!(Genotype::parse(&bad_op, &s).is_err());
        let narrow = space(3, vec![OpKind::Zero, OpKind::Identity], 2, 2);
        assert!(Genotype::parse(&text, &narrow).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        assert_eq!(prediction_error(&[0.0, 1.0, 0.0], 1), 0.0);
        assert!(cross_entropy(&[-50.0, 50.0, -50.0], 1) < 1e-40);
    }

    #[test]
    fn alpha_shift_leaves_probs_and_weight_grad_unchanged() {
        let s = space(3, OpKind::ALL.to_vec(), 2, 1);
        let mut rng = seeded_rng(8);
        let (n, mut a) = build_supernet(&s, &mut rng).unwrap();
        for v in a.alpha.as_mut_slice() {
            *v = rng.normal();
        }
        let xs: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let labels = [0, 1, 2, 1];
        let g1 = n.batch_gradients(&a, &refs, &labels).unwrap();
        let mut shifted = a.clone();
        for r in 0..shifted.alpha.rows() {
            shifted.alpha.row_mut(r).iter_mut().for_each(|v| *v += 3.0);
        }
        let g2 = n.batch_gradients(&shifted, &refs, &labels).unwrap();
        for (s1, s2) in g1.per_sample.iter().zip(&g2.per_sample) {
            assert!(s1.probs.iter().zip(&s2.probs).all(|(p, q)| (p - q).abs() < 1e-12));
        }
        assert!(g1.grad_w.iter().zip(&g2.grad_w).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}
