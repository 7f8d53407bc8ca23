use ndarray::Array2;
use rand::Rng;

/// How a forward pass treats stochastic layers.
pub enum ForwardMode<'r> {
    Eval,
    Train(&'r mut dyn rand::RngCore),
}

impl ForwardMode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, ForwardMode::Train(_))
    }
}

/// Inverted dropout mask (already scaled by 1/(1-p)); `None` when inactive.
pub type DropMask = Option<Array2<f64>>;

pub fn dropout_forward(x: &mut Array2<f64>, rate: f64, mode: &mut ForwardMode<'_>) -> DropMask {
    match mode {
        ForwardMode::Train(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let scale = 1.0 / keep;
            let mask = Array2::from_shape_fn(x.dim(), |_| {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            });
            *x *= &mask;
            Some(mask)
        }
        _ => None,
    }
}

pub fn dropout_backward(dy: &mut Array2<f64>, mask: &DropMask) {
    if let Some(m) = mask {
        *dy *= m;
    }
}
