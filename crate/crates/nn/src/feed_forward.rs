use ndarray::{Array2, Zip};

use crate::linear::Linear;
use crate::param::{Module, Param, ParamInit};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Position-wise `Linear -> GELU -> Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, hidden: usize) -> Self {
        Self {
            up: Linear::new(init, &format!("{name}.up"), dim, hidden),
            down: Linear::new(init, &format!("{name}.down"), hidden, dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.up.forward(x);
        let act = pre.mapv(gelu);
        let y = self.down.forward(&act);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut dact = self.down.backward(&cache.act, dy);
        Zip::from(&mut dact)
            .and(&cache.pre)
            .for_each(|d, &p| *d *= gelu_grad(p));
        self.up.backward(&cache.x, &dact)
    }
}

impl Module for FeedForward {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.up.visit(f);
        self.down.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.up.visit_mut(f);
        self.down.visit_mut(f);
    }
}
