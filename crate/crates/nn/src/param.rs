use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

/// A named, flat parameter array with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    name: String,
    shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
            trainable: true,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], fill: f64) -> Self {
        let mut p = Self::zeros(name, shape);
        p.value.iter_mut().for_each(|v| *v = fill);
        p
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn mat(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.value).expect("2-d param")
    }

    pub fn vec(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.value[..])
    }

    pub fn grad_mat_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grad)
            .expect("2-d param")
    }

    pub fn grad_vec_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.grad[..])
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Whether backward passes should bother accumulating into `grad`.
    pub fn wants_grad(&self) -> bool {
        self.trainable
    }
}

/// Seeded initializer: normal(0, std) for weights, zeros for biases.
pub struct ParamInit {
    rng: ChaCha8Rng,
    std: f64,
}

impl ParamInit {
    pub const DEFAULT_STD: f64 = 0.02;

    pub fn new(seed: u64) -> Self {
        Self::with_std(seed, Self::DEFAULT_STD)
    }

    pub fn with_std(seed: u64, std: f64) -> Self {
        use rand::SeedableRng;
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std,
        }
    }

    pub fn weight(&mut self, name: impl Into<String>, shape: &[usize]) -> Param {
        let mut p = Param::zeros(name, shape);
        self.fill_normal(&mut p.value);
        p
    }

    pub fn bias(&mut self, name: impl Into<String>, shape: &[usize]) -> Param {
        Param::zeros(name, shape)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let dist = Normal::new(0.0, self.std).expect("valid std");
        for v in out {
            *v = dist.sample(&mut self.rng);
        }
    }

    pub fn rng(&mut self) -> &mut impl Rng {
        &mut self.rng
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn set_trainable(&mut self, trainable: bool) {
        self.visit_mut(&mut |p| p.trainable = trainable);
    }

    /// SHA-256 over names, shapes and the little-endian bytes of every value.
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |p| {
            h.update(p.name().as_bytes());
            for d in p.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &p.value {
                h.update(v.to_le_bytes());
            }
        });
        hex::encode(h.finalize())
    }
}

impl Module for Param {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(self)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(self)
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        for m in self {
            m.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for m in self {
            m.visit_mut(f);
        }
    }
}
