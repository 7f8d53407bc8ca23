//! Single-layer unidirectional LSTM over a short sequence of batched inputs.

use ndarray::{s, Array2, Axis, Zip};

use crate::param::{Module, Param, ParamInit};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate layout along the `4H` axis is input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_input: Param,
    pub w_hidden: Param,
    pub bias: Param,
    hidden: usize,
}

struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

pub struct LstmCache {
    steps: Vec<StepCache>,
}

impl Lstm {
    pub fn new(init: &mut ParamInit, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_input: init.weight(format!("{name}.w_input"), &[input, 4 * hidden]),
            w_hidden: init.weight(format!("{name}.w_hidden"), &[hidden, 4 * hidden]),
            bias: init.bias(format!("{name}.bias"), &[4 * hidden]),
            hidden,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// `xs[t]` is `[batch x input]`; returns the hidden state at every step.
    pub fn forward(&self, xs: &[Array2<f64>]) -> (Vec<Array2<f64>>, LstmCache) {
        let h = self.hidden;
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev = Array2::<f64>::zeros((batch, h));
        let mut outs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let mut gates = x.dot(&self.w_input.mat()) + h_prev.dot(&self.w_hidden.mat());
            gates += &self.bias.vec();
            let i = gates.slice(s![.., 0..h]).mapv(sigmoid);
            let f = gates.slice(s![.., h..2 * h]).mapv(sigmoid);
            let g = gates.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
            let o = gates.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
            let c = &f * &c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h_new = &o * &tanh_c;
            steps.push(StepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                i,
                f,
                g,
                o,
                tanh_c,
            });
            outs.push(h_new.clone());
            h_prev = h_new;
            c_prev = c;
        }
        (outs, LstmCache { steps })
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient w.r.t. the
    /// step-`t` output; returns gradients w.r.t. each input.
    pub fn backward(&mut self, cache: &LstmCache, dhs: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let h = self.hidden;
        let mut dxs = vec![Array2::zeros((0, 0)); cache.steps.len()];
        let Some(first) = cache.steps.first() else {
            return dxs;
        };
        let batch = first.x.nrows();
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        for (t, st) in cache.steps.iter().enumerate().rev() {
            let dh = &dhs[t] + &dh_next;
            let mut dgates = Array2::zeros((batch, 4 * h));
            let mut dc = dc_next.clone();
            Zip::from(&mut dc)
                .and(&dh)
                .and(&st.o)
                .and(&st.tanh_c)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
            Zip::from(dgates.slice_mut(s![.., 0..h]))
                .and(&dc)
                .and(&st.g)
                .and(&st.i)
                .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
            Zip::from(dgates.slice_mut(s![.., h..2 * h]))
                .and(&dc)
                .and(&st.c_prev)
                .and(&st.f)
                .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
            Zip::from(dgates.slice_mut(s![.., 2 * h..3 * h]))
                .and(&dc)
                .and(&st.i)
                .and(&st.g)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
            Zip::from(dgates.slice_mut(s![.., 3 * h..4 * h]))
                .and(&dh)
                .and(&st.tanh_c)
                .and(&st.o)
                .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (1.0 - o));
            dc_next = dc * &st.f;
            if self.w_input.wants_grad() {
                ndarray::linalg::general_mat_mul(
                    1.0,
                    &st.x.t(),
                    &dgates,
                    1.0,
                    &mut self.w_input.grad_mat_mut(),
                );
            }
            if self.w_hidden.wants_grad() {
                ndarray::linalg::general_mat_mul(
                    1.0,
                    &st.h_prev.t(),
                    &dgates,
                    1.0,
                    &mut self.w_hidden.grad_mat_mut(),
                );
            }
            if self.bias.wants_grad() {
                self.bias
                    .grad_vec_mut()
                    .scaled_add(1.0, &dgates.sum_axis(Axis(0)));
            }
            dxs[t] = dgates.dot(&self.w_input.mat().t());
            dh_next = dgates.dot(&self.w_hidden.mat().t());
        }
        dxs
    }
}

impl Module for Lstm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.w_input);
        f(&self.w_hidden);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w_input);
        f(&mut self.w_hidden);
        f(&mut self.bias);
    }
}
