use rand::Rng as _;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Self {
            name: name.into(),
            tensor: tensor.with_requires_grad(),
        }
    }

    pub fn glorot(name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit));
        Self::new(name, t)
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Tensor::zeros(rows, cols))
    }

    pub fn filled(name: impl Into<String>, rows: usize, cols: usize, v: f64) -> Self {
        Self::new(name, Tensor::filled(rows, cols, v))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.tensor
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tensor.shape()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.tensor.grad()
    }

    /// Replaces the values, keeping the shape.
    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.tensor.len() {
            return Err(Error::invalid(format!(
                "{}: {} values for shape {:?}",
                self.name,
                values.len(),
                self.shape()
            )));
        }
        self.tensor.data_mut().copy_from_slice(values);
        Ok(())
    }
}

/// Anything owning parameters, listed in a fixed registry order.
pub trait Module {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.tensor().len()).sum()
    }

    /// Puts every parameter on the tape in registry order.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|p| tape.param(p.tensor()))
            .collect()
    }

    /// Copies gradients of `vars` (from [`Module::bind`]) into the
    /// parameters' gradient slots.
    fn collect_grads(&mut self, tape: &Tape, vars: &[Var]) -> Result<()> {
        let params = self.parameters_mut();
        if params.len() != vars.len() {
            return Err(Error::invalid(format!(
                "{} parameters but {} bound vars",
                params.len(),
                vars.len()
            )));
        }
        for (p, &v) in params.into_iter().zip(vars) {
            let g = match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.tensor().len()],
            };
            p.tensor_mut().set_grad(g)?;
        }
        Ok(())
    }

    fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.tensor_mut().clear_grad();
        }
    }
}

/// Hands out bound parameter vars in registry order.
pub struct ParamCursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        Self { vars, pos: 0 }
    }

    pub fn take(&mut self, tape: &Tape, param: &Parameter) -> Result<Var> {
        let v = *self.vars.get(self.pos).ok_or_else(|| {
            Error::Contract(format!("no bound var left for parameter {}", param.name()))
        })?;
        if tape.shape(v) != param.shape() {
            return Err(Error::Contract(format!(
                "bound var for {} has shape {:?}, parameter is {:?}",
                param.name(),
                tape.shape(v),
                param.shape()
            )));
        }
        self.pos += 1;
        Ok(v)
    }

    pub fn take_all(&mut self, tape: &Tape, params: &[Parameter]) -> Result<Vec<Var>> {
        params.iter().map(|p| self.take(tape, p)).collect()
    }

    /// Errors if any bound var was left unused.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.vars.len() {
            return Err(Error::Contract(format!(
                "{} of {} bound vars unused",
                self.vars.len() - self.pos,
                self.vars.len()
            )));
        }
        Ok(())
    }
}

/// Fails on duplicate names.
pub fn check_unique_names<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for p in params {
        if !seen.insert(p.name()) {
            return Err(Error::Contract(format!(
                "duplicate parameter name {}",
                p.name()
            )));
        }
    }
    Ok(())
}
