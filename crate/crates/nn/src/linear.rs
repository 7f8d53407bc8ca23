use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};

use crate::param::{Module, Param, ParamInit};

/// Affine map `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(init: &mut ParamInit, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: init.weight(format!("{name}.weight"), &[fan_in, fan_out]),
            bias: init.bias(format!("{name}.bias"), &[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.mat());
        y += &self.bias.vec();
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        if self.weight.wants_grad() {
            general_mat_mul(1.0, &x.t(), dy, 1.0, &mut self.weight.grad_mat_mut());
        }
        if self.bias.wants_grad() {
            let db = dy.sum_axis(Axis(0));
            self.bias.grad_vec_mut().scaled_add(1.0, &db);
        }
        dy.dot(&self.weight.mat().t())
    }
}

impl Module for Linear {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
