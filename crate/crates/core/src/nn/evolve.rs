//! Adaptive graph convolution whose weight matrix is a recurrent state.
//!
//! At every time step the node embeddings are summarized into `d` rows by a
//! learned top-k scoring, a GRU evolves the square weight from that summary,
//! and the evolved weight convolves the current graph.

use super::gru::{GruCell, GruVars};
use super::param::{Module, ParamCursor, Parameter};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveGcnhLayer {
    pub w0: Parameter,
    pub gru: GruCell,
    pub q: Parameter,
}

#[derive(Clone, Debug)]
pub struct EvolveVars {
    pub w0: Var,
    gru: GruVars,
    q: Var,
}

/// Indices of the `k` largest scores, best first; equal scores keep the lower
/// index first.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Top-k summary of `x` (n×d) under scoring vector `q` (1×d): the `k` rows with
/// the highest `x·qᵀ/‖q‖`, each scaled by `tanh` of its score.
pub fn summarize(tape: &mut Tape, x: Var, k: usize, q: Var) -> Result<Var> {
    let (n, d) = tape.shape(x);
    if tape.shape(q) != (1, d) {
        return Err(Error::dim("summarize", (n, d), tape.shape(q)));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("summarize k = {k} with {n} nodes")));
    }
    let qt = tape.transpose(q);
    let raw = tape.matmul(x, qt)?;
    let norm = tape.norm(q);
    if tape.value(norm).data()[0] == 0.0 {
        return Err(Error::invalid("summarize scoring vector has zero norm"));
    }
    let scores = tape.div_scalar(raw, norm)?;
    let idx = top_k_indices(tape.value(scores).data(), k);
    let rows = tape.gather_rows(x, &idx)?;
    let picked = tape.gather_rows(scores, &idx)?;
    let scale = tape.tanh(picked);
    tape.scale_rows(rows, scale)
}

impl EvolveGcnhLayer {
    /// Square layer of width `dim`.
    pub fn new(prefix: &str, dim: usize, rng: &mut Rng) -> Self {
        let w0 = Parameter::glorot(format!("{prefix}.W0"), dim, dim, rng);
        let gru = GruCell::new(&format!("{prefix}.gru"), dim, rng);
        let q = Parameter::glorot(format!("{prefix}.q"), 1, dim, rng);
        Self { w0, gru, q }
    }

    pub fn dim(&self) -> usize {
        self.w0.shape().0
    }

    pub fn vars(&self, tape: &Tape, cur: &mut ParamCursor<'_>) -> Result<EvolveVars> {
        Ok(EvolveVars {
            w0: cur.take(tape, &self.w0)?,
            gru: self.gru.vars(tape, cur)?,
            q: cur.take(tape, &self.q)?,
        })
    }

    /// One step: returns `(hardswish(Â·X·W_t), W_t)`.
    pub fn step(
        tape: &mut Tape,
        v: &EvolveVars,
        prop: Var,
        x: Var,
        w_prev: Var,
    ) -> Result<(Var, Var)> {
        let (n, d) = tape.shape(x);
        if tape.shape(w_prev) != (d, d) {
            return Err(Error::dim(
                "evolve_gcnh_step",
                tape.shape(x),
                tape.shape(w_prev),
            ));
        }
        if n < d {
            return Err(Error::invalid(format!(
                "evolve step needs at least {d} nodes to summarize, got {n}"
            )));
        }
        let summary = summarize(tape, x, d, v.q)?;
        let w = GruCell::step(tape, &v.gru, summary, w_prev)?;
        let ax = tape.matmul(prop, x)?;
        let axw = tape.matmul(ax, w)?;
        Ok((tape.hardswish(axw), w))
    }
}

impl Module for EvolveGcnhLayer {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut p = vec![&self.w0];
        p.extend(self.gru.parameters());
        p.push(&self.q);
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = vec![&mut self.w0];
        p.extend(self.gru.parameters_mut());
        p.push(&mut self.q);
        p
    }
}
