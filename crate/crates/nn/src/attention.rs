use ndarray::{s, Array2, Axis};

use crate::linear::Linear;
use crate::param::{Module, Param, ParamInit};

/// A contiguous run of rows in a packed activation matrix that belong to
/// one sequence. Attention never crosses segment boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn pack(lengths: impl IntoIterator<Item = usize>) -> Vec<Segment> {
        let mut start = 0;
        lengths
            .into_iter()
            .map(|len| {
                let s = Segment { start, len };
                start += len;
                s
            })
            .collect()
    }
}

/// Multi-head scaled dot-product self-attention with fused QKV projection.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub qkv: Linear,
    pub out: Linear,
    heads: usize,
    causal: bool,
}

pub struct AttentionCache {
    x: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl SelfAttention {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, heads: usize, causal: bool) -> Self {
        Self {
            qkv: Linear::new(init, &format!("{name}.qkv"), dim, 3 * dim),
            out: Linear::new(init, &format!("{name}.out"), dim, dim),
            heads,
            causal,
        }
    }

    fn dim(&self) -> usize {
        self.out.fan_out()
    }

    pub fn forward(&self, x: &Array2<f64>, segments: &[Segment]) -> (Array2<f64>, AttentionCache) {
        let e = self.dim();
        let d = e / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let qkv = self.qkv.forward(x);
        let mut concat = Array2::zeros((x.nrows(), e));
        let mut probs = Vec::with_capacity(segments.len() * self.heads);
        for seg in segments {
            let rows = seg.start..seg.start + seg.len;
            for h in 0..self.heads {
                let q = qkv.slice(s![rows.clone(), h * d..(h + 1) * d]);
                let k = qkv.slice(s![rows.clone(), e + h * d..e + (h + 1) * d]);
                let v = qkv.slice(s![rows.clone(), 2 * e + h * d..2 * e + (h + 1) * d]);
                let mut scores = q.dot(&k.t());
                for (i, mut row) in scores.axis_iter_mut(Axis(0)).enumerate() {
                    let limit = if self.causal { i + 1 } else { row.len() };
                    let max = row
                        .iter()
                        .take(limit)
                        .fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
                    let mut sum = 0.0;
                    for (j, v) in row.iter_mut().enumerate() {
                        if j < limit {
                            *v = (*v * scale - max).exp();
                            sum += *v;
                        } else {
                            *v = 0.0;
                        }
                    }
                    row.mapv_inplace(|v| v / sum);
                }
                let o = scores.dot(&v);
                concat
                    .slice_mut(s![rows.clone(), h * d..(h + 1) * d])
                    .assign(&o);
                probs.push(scores);
            }
        }
        let y = self.out.forward(&concat);
        (
            y,
            AttentionCache {
                x: x.clone(),
                qkv,
                probs,
                concat,
            },
        )
    }

    pub fn backward(
        &mut self,
        cache: &AttentionCache,
        segments: &[Segment],
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        let e = self.dim();
        let d = e / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let dconcat = self.out.backward(&cache.concat, dy);
        let mut dqkv = Array2::zeros(cache.qkv.dim());
        let mut idx = 0;
        for seg in segments {
            let rows = seg.start..seg.start + seg.len;
            for h in 0..self.heads {
                let p = &cache.probs[idx];
                idx += 1;
                let q = cache.qkv.slice(s![rows.clone(), h * d..(h + 1) * d]);
                let k = cache.qkv.slice(s![rows.clone(), e + h * d..e + (h + 1) * d]);
                let v = cache
                    .qkv
                    .slice(s![rows.clone(), 2 * e + h * d..2 * e + (h + 1) * d]);
                let dout = dconcat.slice(s![rows.clone(), h * d..(h + 1) * d]);
                let dp = dout.dot(&v.t());
                let dv = p.t().dot(&dout);
                let mut ds = p * &dp;
                let row_dot = ds.sum_axis(Axis(1));
                for ((mut r, pr), rd) in ds.rows_mut().into_iter().zip(p.rows()).zip(row_dot.iter()) {
                    r.scaled_add(-rd, &pr);
                }
                ds *= scale;
                let dq = ds.dot(&k);
                let dk = ds.t().dot(&q);
                dqkv.slice_mut(s![rows.clone(), h * d..(h + 1) * d]).assign(&dq);
                dqkv.slice_mut(s![rows.clone(), e + h * d..e + (h + 1) * d])
                    .assign(&dk);
                dqkv.slice_mut(s![rows.clone(), 2 * e + h * d..2 * e + (h + 1) * d])
                    .assign(&dv);
            }
        }
        self.qkv.backward(&cache.x, &dqkv)
    }
}

impl Module for SelfAttention {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.qkv.visit(f);
        self.out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.qkv.visit_mut(f);
        self.out.visit_mut(f);
    }
}
