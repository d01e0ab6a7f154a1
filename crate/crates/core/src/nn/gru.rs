use super::param::{Module, ParamCursor, Parameter};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Gated recurrent unit operating on k×d matrices row by row.
///
/// ```text
/// z  = σ(x·U_z + h·W_z + b_z)
/// r  = σ(x·U_r + h·W_r + b_r)
/// h̃  = tanh(x·U_h + (r⊙h)·W_h + b_h)
/// h' = (1 − z)⊙h + z⊙h̃
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub u_z: Parameter,
    pub w_z: Parameter,
    pub b_z: Parameter,
    pub u_r: Parameter,
    pub w_r: Parameter,
    pub b_r: Parameter,
    pub u_h: Parameter,
    pub w_h: Parameter,
    pub b_h: Parameter,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    u_z: Var,
    w_z: Var,
    b_z: Var,
    u_r: Var,
    w_r: Var,
    b_r: Var,
    u_h: Var,
    w_h: Var,
    b_h: Var,
}

impl GruCell {
    pub fn new(prefix: &str, dim: usize, rng: &mut Rng) -> Self {
        let mut g = |name: &str| Parameter::glorot(format!("{prefix}.{name}"), dim, dim, rng);
        let (u_z, w_z) = (g("U_z"), g("W_z"));
        let (u_r, w_r) = (g("U_r"), g("W_r"));
        let (u_h, w_h) = (g("U_h"), g("W_h"));
        Self {
            u_z,
            w_z,
            b_z: Parameter::zeros(format!("{prefix}.b_z"), 1, dim),
            u_r,
            w_r,
            b_r: Parameter::zeros(format!("{prefix}.b_r"), 1, dim),
            u_h,
            w_h,
            b_h: Parameter::zeros(format!("{prefix}.b_h"), 1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.u_z.shape().0
    }

    pub fn vars(&self, tape: &Tape, cur: &mut ParamCursor<'_>) -> Result<GruVars> {
        Ok(GruVars {
            u_z: cur.take(tape, &self.u_z)?,
            w_z: cur.take(tape, &self.w_z)?,
            b_z: cur.take(tape, &self.b_z)?,
            u_r: cur.take(tape, &self.u_r)?,
            w_r: cur.take(tape, &self.w_r)?,
            b_r: cur.take(tape, &self.b_r)?,
            u_h: cur.take(tape, &self.u_h)?,
            w_h: cur.take(tape, &self.w_h)?,
            b_h: cur.take(tape, &self.b_h)?,
        })
    }

    pub fn step(tape: &mut Tape, v: &GruVars, input: Var, hidden: Var) -> Result<Var> {
        let (si, sh) = (tape.shape(input), tape.shape(hidden));
        if si != sh || si.1 != tape.shape(v.u_z).0 {
            return Err(Error::dim("gru_step", si, sh));
        }
        let z = gate(tape, input, v.u_z, hidden, v.w_z, v.b_z)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, input, v.u_r, hidden, v.w_r, v.b_r)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, hidden)?;
        let cand = gate(tape, input, v.u_h, rh, v.w_h, v.b_h)?;
        let cand = tape.tanh(cand);
        // (1 − z)⊙h + z⊙h̃ = h + z⊙(h̃ − h)
        let delta = tape.sub(cand, hidden)?;
        let zd = tape.mul(z, delta)?;
        tape.add(hidden, zd)
    }
}

fn gate(tape: &mut Tape, x: Var, u: Var, h: Var, w: Var, b: Var) -> Result<Var> {
    let xu = tape.matmul(x, u)?;
    let hw = tape.matmul(h, w)?;
    let s = tape.add(xu, hw)?;
    tape.add(s, b)
}

impl Module for GruCell {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![
            &self.u_z, &self.w_z, &self.b_z, &self.u_r, &self.w_r, &self.b_r, &self.u_h, &self.w_h,
            &self.b_h,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.u_z,
            &mut self.w_z,
            &mut self.b_z,
            &mut self.u_r,
            &mut self.w_r,
            &mut self.b_r,
            &mut self.u_h,
            &mut self.w_h,
            &mut self.b_h,
        ]
    }
}
