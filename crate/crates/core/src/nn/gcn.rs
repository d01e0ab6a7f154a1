use super::dense::AffineVars;
use super::param::{Module, ParamCursor, Parameter};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Single-hop graph convolution `Â·X·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub w: Parameter,
    pub b: Parameter,
}

impl GcnLayer {
    pub fn new(prefix: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            w: Parameter::glorot(format!("{prefix}.W"), input, output, rng),
            b: Parameter::zeros(format!("{prefix}.b"), 1, output),
        }
    }

    pub fn vars(&self, tape: &Tape, cur: &mut ParamCursor<'_>) -> Result<AffineVars> {
        Ok(AffineVars {
            w: cur.take(tape, &self.w)?,
            b: cur.take(tape, &self.b)?,
        })
    }

    /// `prop` is the n×n propagation matrix, `x` the n×in features.
    pub fn forward(
        tape: &mut Tape,
        vars: AffineVars,
        prop: Var,
        x: Var,
        activate: bool,
    ) -> Result<Var> {
        let (sp, sx) = (tape.shape(prop), tape.shape(x));
        if sp.0 != sp.1 || sp.1 != sx.0 {
            return Err(Error::dim("gcn_forward", sp, sx));
        }
        let ax = tape.matmul(prop, x)?;
        let axw = tape.matmul(ax, vars.w)?;
        let out = tape.add(axw, vars.b)?;
        Ok(if activate { tape.hardswish(out) } else { out })
    }
}

impl Module for GcnLayer {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w, &self.b]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}
