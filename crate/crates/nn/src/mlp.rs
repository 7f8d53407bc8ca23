use ndarray::{Array2, Zip};

use crate::linear::Linear;
use crate::param::{Module, Param, ParamInit};

/// Two-layer perceptron with a ReLU between the layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

pub struct MlpCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl Mlp {
    pub fn new(init: &mut ParamInit, name: &str, input: usize, hidden: usize, output: usize) -> Self {
        Self {
            hidden: Linear::new(init, &format!("{name}.hidden"), input, hidden),
            output: Linear::new(init, &format!("{name}.output"), hidden, output),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let pre = self.hidden.forward(x);
        let act = pre.mapv(|v| v.max(0.0));
        let y = self.output.forward(&act);
        (
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut dact = self.output.backward(&cache.act, dy);
        Zip::from(&mut dact).and(&cache.pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        self.hidden.backward(&cache.x, &dact)
    }
}

impl Module for Mlp {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.hidden.visit(f);
        self.output.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.hidden.visit_mut(f);
        self.output.visit_mut(f);
    }
}
