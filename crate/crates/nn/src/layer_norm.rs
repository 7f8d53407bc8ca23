use ndarray::{Array1, Array2, Axis, Zip};

use crate::param::{Module, Param};

const EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[dim], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let n = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            *r = 1.0 / (var + EPS).sqrt();
            let s = *r;
            row.mapv_inplace(|v| v * s);
        }
        let mut y = &xhat * &self.gamma.vec();
        y += &self.beta.vec();
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let LayerNormCache { xhat, rstd } = cache;
        if self.gamma.wants_grad() {
            let dg = (dy * xhat).sum_axis(Axis(0));
            self.gamma.grad_vec_mut().scaled_add(1.0, &dg);
        }
        if self.beta.wants_grad() {
            self.beta.grad_vec_mut().scaled_add(1.0, &dy.sum_axis(Axis(0)));
        }
        let dxhat = dy * &self.gamma.vec();
        let n = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.dim());
        Zip::from(dx.rows_mut())
            .and(dxhat.rows())
            .and(xhat.rows())
            .and(rstd)
            .for_each(|mut out, dxh, xh, &r| {
                let s1 = dxh.sum();
                let s2 = dxh.dot(&xh);
                Zip::from(&mut out).and(&dxh).and(&xh).for_each(|o, &a, &b| {
                    *o = r * (a - s1 / n - b * s2 / n);
                });
            });
        dx
    }
}

impl Module for LayerNorm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}
