use super::param::{Module, ParamCursor, Parameter};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer `x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub w: Parameter,
    pub b: Parameter,
}

#[derive(Clone, Copy, Debug)]
pub struct AffineVars {
    pub w: Var,
    pub b: Var,
}

impl DenseLayer {
    pub fn new(prefix: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            w: Parameter::glorot(format!("{prefix}.W"), input, output, rng),
            b: Parameter::zeros(format!("{prefix}.b"), 1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape().0
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape().1
    }

    pub fn vars(&self, tape: &Tape, cur: &mut ParamCursor<'_>) -> Result<AffineVars> {
        Ok(AffineVars {
            w: cur.take(tape, &self.w)?,
            b: cur.take(tape, &self.b)?,
        })
    }

    pub fn forward(tape: &mut Tape, vars: AffineVars, x: Var) -> Result<Var> {
        if tape.shape(x).1 != tape.shape(vars.w).0 {
            return Err(Error::dim(
                "dense_forward",
                tape.shape(x),
                tape.shape(vars.w),
            ));
        }
        let xw = tape.matmul(x, vars.w)?;
        tape.add(xw, vars.b)
    }
}

impl Module for DenseLayer {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w, &self.b]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, Tensor, DEFAULT_EPS};
    use crate::rng::seeded;

    fn run(layer: &DenseLayer, x: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape);
        let mut cur = ParamCursor::new(&vars);
        let v = layer.vars(&tape, &mut cur).unwrap();
        cur.finish().unwrap();
        let xv = tape.constant(x.clone());
        let out = DenseLayer::forward(&mut tape, v, xv).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn identity_and_hand_computed() {
        let mut rng = seeded(0);
        let mut layer = DenseLayer::new("fc", 3, 3, &mut rng);
        layer.w.assign(Tensor::identity(3).data()).unwrap();
        let x = Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64 - 2.0);
        assert_eq!(run(&layer, &x), x);

        let mut layer = DenseLayer::new("fc", 2, 1, &mut rng);
        layer.w.assign(&[1.0, 1.0]).unwrap();
        layer.b.assign(&[3.0]).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(run(&layer, &x).data(), &[6.0]);
    }

    #[test]
    fn shape_mismatch() {
        let layer = DenseLayer::new("fc", 2, 1, &mut seeded(0));
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape);
        let v = layer.vars(&tape, &mut ParamCursor::new(&vars)).unwrap();
        let x = tape.constant(Tensor::zeros(3, 4));
        assert!(DenseLayer::forward(&mut tape, v, x).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(3);
        let layer = DenseLayer::new("fc", 4, 3, &mut rng);
        let x = Tensor::from_fn(5, 4, |r, c| ((r * 7 + c * 3) % 11) as f64 / 5.0 - 1.0);
        let b = Tensor::from_fn(1, 3, |_, c| 0.1 * c as f64);
        let inputs = vec![x, layer.w.tensor().clone(), b];
        let rep = gradient_check(
            |t, v| {
                let out = DenseLayer::forward(t, AffineVars { w: v[1], b: v[2] }, v[0])?;
                let sq = t.mul(out, out)?;
                Ok(t.sum(sq))
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }
}
