//! Peephole LSTM whose input and recurrent transforms are graph convolutions.
//!
//! ```text
//! i   = σ(G(x)W_xi + G(h)W_hi + w_ci⊙c + b_i)
//! f   = σ(G(x)W_xf + G(h)W_hf + w_cf⊙c + b_f)
//! c'  = f⊙c + i⊙tanh(G(x)W_xc + G(h)W_hc + b_c)
//! o   = σ(G(x)W_xo + G(h)W_ho + w_co⊙c' + b_o)
//! h'  = o⊙tanh(c')
//! ```
//!
//! `G` is either the graph propagation (one weight per Chebyshev order) or the
//! identity, which turns the cell into a plain per-node LSTM.

use super::param::{Module, ParamCursor, Parameter};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

const GATES: [&str; 4] = ["i", "f", "c", "o"];
const FORGET: usize = 1;
const CELL: usize = 2;

/// How node features are mixed before each gate transform.
#[derive(Clone, Debug)]
pub enum Propagation {
    /// Chebyshev basis `T_1..T_K` of the propagation matrix, already on the tape.
    Graph(Vec<Var>),
    /// No spatial mixing.
    Identity,
}

impl Propagation {
    pub fn order(&self) -> usize {
        match self {
            Propagation::Graph(b) => b.len(),
            Propagation::Identity => 1,
        }
    }

    /// Puts the basis matrices on the tape as constants.
    pub fn from_basis(tape: &mut Tape, basis: &[Tensor]) -> Self {
        Propagation::Graph(basis.iter().map(|t| tape.constant(t.clone())).collect())
    }

    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>> {
        match self {
            Propagation::Identity => Ok(vec![x]),
            Propagation::Graph(basis) => basis.iter().map(|&t| tape.matmul(t, x)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GConvLstmCell {
    /// `[gate][order]`, in×hidden.
    pub w_x: Vec<Vec<Parameter>>,
    /// `[gate][order]`, hidden×hidden.
    pub w_h: Vec<Vec<Parameter>>,
    /// Peepholes for i, f, o; 1×hidden.
    pub w_c: Vec<Parameter>,
    /// `[gate]`, 1×hidden.
    pub b: Vec<Parameter>,
}

#[derive(Clone, Debug)]
pub struct GConvLstmVars {
    w_x: Vec<Vec<Var>>,
    w_h: Vec<Vec<Var>>,
    w_c: Vec<Var>,
    b: Vec<Var>,
}

impl GConvLstmCell {
    /// `order` is the number of Chebyshev terms per transform (1 = single hop).
    pub fn new(prefix: &str, input: usize, hidden: usize, order: usize, rng: &mut Rng) -> Self {
        assert!(order >= 1, "chebyshev order must be at least 1");
        let name = |kind: &str, gate: &str, k: usize| {
            if order == 1 {
                format!("{prefix}.W_{kind}{gate}")
            } else {
                format!("{prefix}.W_{kind}{gate}.k{}", k + 1)
            }
        };
        let w_x = GATES
            .iter()
            .map(|g| {
                (0..order)
                    .map(|k| Parameter::glorot(name("x", g, k), input, hidden, rng))
                    .collect()
            })
            .collect();
        let w_h = GATES
            .iter()
            .map(|g| {
                (0..order)
                    .map(|k| Parameter::glorot(name("h", g, k), hidden, hidden, rng))
                    .collect()
            })
            .collect();
        let w_c = ["i", "f", "o"]
            .iter()
            .map(|g| Parameter::glorot(format!("{prefix}.w_c{g}"), 1, hidden, rng))
            .collect();
        let b = GATES
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let v = if gi == FORGET { 1.0 } else { 0.0 };
                Parameter::filled(format!("{prefix}.b_{g}"), 1, hidden, v)
            })
            .collect();
        Self { w_x, w_h, w_c, b }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x[0][0].shape().0
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h[0][0].shape().0
    }

    pub fn order(&self) -> usize {
        self.w_x[0].len()
    }

    pub fn vars(&self, tape: &Tape, cur: &mut ParamCursor<'_>) -> Result<GConvLstmVars> {
        let w_x = self
            .w_x
            .iter()
            .map(|ps| cur.take_all(tape, ps))
            .collect::<Result<_>>()?;
        let w_h = self
            .w_h
            .iter()
            .map(|ps| cur.take_all(tape, ps))
            .collect::<Result<_>>()?;
        Ok(GConvLstmVars {
            w_x,
            w_h,
            w_c: cur.take_all(tape, &self.w_c)?,
            b: cur.take_all(tape, &self.b)?,
        })
    }

    /// One recurrence step; returns `(h_t, c_t)`.
    pub fn step(
        tape: &mut Tape,
        v: &GConvLstmVars,
        prop: &Propagation,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let hidden = tape.shape(v.b[0]).1;
        let n = tape.shape(x).0;
        if tape.shape(h_prev) != (n, hidden) || tape.shape(c_prev) != (n, hidden) {
            return Err(Error::dim(
                "gconv_lstm_step",
                tape.shape(h_prev),
                (n, hidden),
            ));
        }
        if tape.shape(x).1 != tape.shape(v.w_x[0][0]).0 {
            return Err(Error::dim(
                "gconv_lstm_step",
                tape.shape(x),
                tape.shape(v.w_x[0][0]),
            ));
        }
        if prop.order() != v.w_x[0].len() {
            return Err(Error::Contract(format!(
                "propagation order {} but cell has {} weights per gate",
                prop.order(),
                v.w_x[0].len()
            )));
        }
        let px = prop.apply(tape, x)?;
        let ph = prop.apply(tape, h_prev)?;

        let pre = |tape: &mut Tape, g: usize| -> Result<Var> {
            let mut acc = tape.matmul(px[0], v.w_x[g][0])?;
            for k in 1..px.len() {
                let t = tape.matmul(px[k], v.w_x[g][k])?;
                acc = tape.add(acc, t)?;
            }
            for k in 0..ph.len() {
                let t = tape.matmul(ph[k], v.w_h[g][k])?;
                acc = tape.add(acc, t)?;
            }
            tape.add(acc, v.b[g])
        };

        let i_pre = pre(tape, 0)?;
        let peep_i = tape.mul(c_prev, v.w_c[0])?;
        let i_pre = tape.add(i_pre, peep_i)?;
        let i = tape.sigmoid(i_pre);

        let f_pre = pre(tape, FORGET)?;
        let peep_f = tape.mul(c_prev, v.w_c[1])?;
        let f_pre = tape.add(f_pre, peep_f)?;
        let f = tape.sigmoid(f_pre);

        let c_pre = pre(tape, CELL)?;
        let cand = tape.tanh(c_pre);
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, cand)?;
        let c = tape.add(keep, write)?;

        let o_pre = pre(tape, 3)?;
        let peep_o = tape.mul(c, v.w_c[2])?;
        let o_pre = tape.add(o_pre, peep_o)?;
        let o = tape.sigmoid(o_pre);

        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

impl Module for GConvLstmCell {
    fn parameters(&self) -> Vec<&Parameter> {
        self.w_x
            .iter()
            .flatten()
            .chain(self.w_h.iter().flatten())
            .chain(&self.w_c)
            .chain(&self.b)
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.w_x
            .iter_mut()
            .flatten()
            .chain(self.w_h.iter_mut().flatten())
            .chain(self.w_c.iter_mut())
            .chain(self.b.iter_mut())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, sigmoid};
    use crate::rng::seeded;

    fn step_values(
        cell: &GConvLstmCell,
        prop: Option<&Tensor>,
        x: &Tensor,
        h: &Tensor,
        c: &Tensor,
    ) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let vars = cell.bind(&mut tape);
        let mut cur = ParamCursor::new(&vars);
        let v = cell.vars(&tape, &mut cur).unwrap();
        cur.finish().unwrap();
        let p = match prop {
            Some(p) => Propagation::from_basis(&mut tape, std::slice::from_ref(p)),
            None => Propagation::Identity,
        };
        let (xv, hv, cv) = (
            tape.constant(x.clone()),
            tape.constant(h.clone()),
            tape.constant(c.clone()),
        );
        let (h2, c2) = GConvLstmCell::step(&mut tape, &v, &p, xv, hv, cv).unwrap();
        (tape.value(h2).clone(), tape.value(c2).clone())
    }

    fn zero_all(cell: &mut GConvLstmCell) {
        for p in cell.parameters_mut() {
            let n = p.tensor().len();
            p.assign(&vec![0.0; n]).unwrap();
        }
    }

    #[test]
    fn zero_weights_closed_form() {
        let mut cell = GConvLstmCell::new("g", 3, 4, 1, &mut seeded(0));
        zero_all(&mut cell);
        let prop = Tensor::from_fn(5, 5, |r, c| if r == c { 0.6 } else { 0.1 });
        let x = Tensor::from_fn(5, 3, |r, c| r as f64 - c as f64);
        let h = Tensor::from_fn(5, 4, |r, c| 0.1 * (r + c) as f64);
        let cprev = Tensor::from_fn(5, 4, |r, c| (r as f64 - 2.0) * (c as f64 + 0.5));
        let (h2, c2) = step_values(&cell, Some(&prop), &x, &h, &cprev);
        assert!(c2.max_abs_diff(&cprev.scale(0.5)) < 1e-12);
        assert!(h2.max_abs_diff(&cprev.map(|v| 0.5 * (0.5 * v).tanh())) < 1e-12);
    }

    #[test]
    fn zero_state_reduction() {
        let mut cell = GConvLstmCell::new("g", 2, 3, 1, &mut seeded(5));
        for b in &mut cell.b {
            b.assign(&[0.0; 3]).unwrap();
        }
        let prop = Tensor::from_fn(4, 4, |r, c| if r == c { 0.4 } else { 0.2 });
        let x = Tensor::from_fn(4, 2, |r, c| (r as f64 * 0.3 - c as f64 * 0.7).sin());
        let zero = Tensor::zeros(4, 3);
        let (_, c2) = step_values(&cell, Some(&prop), &x, &zero, &zero);
        let ax = prop.matmul(&x).unwrap();
        let i = ax.matmul(cell.w_x[0][0].tensor()).unwrap().map(sigmoid);
        let g = ax.matmul(cell.w_x[2][0].tensor()).unwrap().map(f64::tanh);
        let expect = i.zip_with(&g, |a, b| a * b).unwrap();
        assert!(c2.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn registry_names_and_forget_bias() {
        let cell = GConvLstmCell::new("gconvlstm", 3, 4, 1, &mut seeded(0));
        let names: Vec<&str> = cell.parameters().iter().map(|p| p.name()).collect();
        assert_eq!(names[0], "gconvlstm.W_xi");
        assert_eq!(names.len(), 4 + 4 + 3 + 4);
        assert!(cell.b[FORGET].tensor().data().iter().all(|&v| v == 1.0));
        let cheb = GConvLstmCell::new("g", 3, 4, 2, &mut seeded(0));
        assert_eq!(cheb.parameters().len(), 8 + 8 + 3 + 4);
        assert_eq!(cheb.w_x[0][1].name(), "g.W_xi.k2");
    }

    #[test]
    fn gradients_match_finite_differences_four_nodes() {
        for order in [1, 2] {
            let cell = GConvLstmCell::new("g", 2, 3, order, &mut seeded(11));
            let prop = Tensor::from_fn(4, 4, |r, c| {
                if r == c {
                    0.45
                } else {
                    0.15 + 0.02 * (r + c) as f64
                }
            });
            let basis = crate::graph::chebyshev_basis(&prop, order).unwrap();
            let x = Tensor::from_fn(4, 2, |r, c| ((r * 2 + c) as f64 * 0.9).sin());
            let h = Tensor::from_fn(4, 3, |r, c| ((r + c) as f64 * 0.4).cos() * 0.5);
            let c = Tensor::from_fn(4, 3, |r, c| ((r * 3 + c) as f64 * 0.2).sin());
            let mut inputs = vec![x, h, c];
            inputs.extend(cell.parameters().iter().map(|p| p.tensor().clone()));
            let rep = gradient_check(
                |t, v| {
                    let p = Propagation::from_basis(t, &basis);
                    let mut cur = ParamCursor::new(&v[3..]);
                    let cv = cell.vars(t, &mut cur)?;
                    let (h2, c2) = GConvLstmCell::step(t, &cv, &p, v[0], v[1], v[2])?;
                    let s = t.add(h2, c2)?;
                    let sq = t.mul(s, s)?;
                    Ok(t.sum(sq))
                },
                &inputs,
                1e-6,
            )
            .unwrap();
            assert!(rep.max_rel_error < 1e-5, "order {order}: {rep:?}");
        }
    }

    #[test]
    fn identity_propagation_is_per_node() {
        let cell = GConvLstmCell::new("lstm", 3, 4, 1, &mut seeded(2));
        let x = Tensor::from_fn(3, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        let zero = Tensor::zeros(3, 4);
        let (h_all, _) = step_values(&cell, None, &x, &zero, &zero);
        let x1 = Tensor::from_fn(1, 3, |_, c| x.get(1, c));
        let (h1, _) = step_values(&cell, None, &x1, &Tensor::zeros(1, 4), &Tensor::zeros(1, 4));
        for c in 0..4 {
            assert!((h_all.get(1, c) - h1.get(0, c)).abs() < 1e-14);
        }
    }
}
