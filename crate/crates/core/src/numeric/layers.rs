//! Affine layers and the two-layer rectifier network used for both the
//! encoder and the decoder.
//!
//! Each `forward` records the activations it needs; the matching `backward`
//! consumes them, accumulates parameter gradients, and returns the gradient
//! with respect to the layer input.

use super::matrix::Matrix;
use super::param::Parameter;
use super::rng::RngState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
    tape: Option<Matrix>,
}

impl Linear {
    pub fn new(weight: Parameter, bias: Parameter) -> Result<Self> {
        if bias.shape() != (1, weight.shape().1) {
            return Err(Error::Dimension(format!(
                "bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            tape: None,
        })
    }

    /// Uniform init in `±1/sqrt(fan_in)`, zero bias.
    pub fn init(name: &str, fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| (2.0 * rng.uniform() - 1.0) * bound)
            .collect();
        let weight = Matrix::from_vec(fan_in, fan_out, data).expect("shape by construction");
        Self {
            weight: Parameter::new(format!("{name}.weight"), weight),
            bias: Parameter::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
            tape: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape().0
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape().1
    }

    /// Pure evaluation: `input · weight + bias`.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "{}: input has {} columns, expected {}",
                self.weight.name(),
                input.cols(),
                self.in_dim()
            )));
        }
        input.ensure_finite(self.weight.name())?;
        let mut out = input.matmul(&self.weight.value)?;
        let bias = self.bias.value.row(0);
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = self.apply(input)?;
        self.tape = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        let input = self
            .tape
            .take()
            .ok_or_else(|| Error::State(format!("{}: backward without forward", self.weight.name())))?;
        if grad_output.shape() != (input.rows(), self.out_dim()) {
            return Err(Error::Dimension(format!(
                "{}: output gradient {:?}, expected {:?}",
                self.weight.name(),
                grad_output.shape(),
                (input.rows(), self.out_dim())
            )));
        }
        self.weight.gradient.add_assign(&input.t_matmul(grad_output)?)?;
        self.bias.gradient.add_assign(&grad_output.col_sums())?;
        grad_output.matmul_t(&self.weight.value)
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    pub fn parameters(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// `input -> Linear -> ReLU -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
    mask: Option<Vec<bool>>,
}

impl Mlp {
    pub fn new(first: Linear, second: Linear) -> Result<Self> {
        if first.out_dim() != second.in_dim() {
            return Err(Error::Dimension(format!(
                "hidden width mismatch: {} vs {}",
                first.out_dim(),
                second.in_dim()
            )));
        }
        Ok(Self {
            first,
            second,
            mask: None,
        })
    }

    pub fn init(name: &str, dims: [usize; 3], rng: &mut RngState) -> Self {
        Self {
            first: Linear::init(&format!("{name}.0"), dims[0], dims[1], rng),
            second: Linear::init(&format!("{name}.1"), dims[1], dims[2], rng),
            mask: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.second.out_dim()
    }

    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut hidden = self.first.apply(input)?;
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.second.apply(&hidden)
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let mut hidden = self.first.forward(input)?;
        let mask: Vec<bool> = hidden.data().iter().map(|&v| v > 0.0).collect();
        for (v, &keep) in hidden.data_mut().iter_mut().zip(&mask) {
            if !keep {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        self.second.forward(&hidden)
    }

    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::State("mlp: backward without forward".into()))?;
        let mut grad_hidden = self.second.backward(grad_output)?;
        for (g, keep) in grad_hidden.data_mut().iter_mut().zip(mask) {
            if !keep {
                *g = 0.0;
            }
        }
        self.first.backward(&grad_hidden)
    }

    pub fn clear_tape(&mut self) {
        self.mask = None;
        self.first.clear_tape();
        self.second.clear_tape();
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter> {
        self.first.parameters().into_iter().chain(self.second.parameters())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.first
            .parameters_mut()
            .into_iter()
            .chain(self.second.parameters_mut())
    }
}
