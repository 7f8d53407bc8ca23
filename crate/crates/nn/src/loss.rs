use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{NnError, Result};

/// Mean negative log-likelihood over the unmasked rows and its gradient.
#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f64,
    /// `dloss/dlogits`, already divided by `count`.
    pub dlogits: Array2<f64>,
    pub count: usize,
    /// Whether the argmax of each kept row hit its target (in row order of
    /// the kept rows).
    pub correct: usize,
}

pub fn softmax(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = row.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize], mask: &[bool]) -> Result<CrossEntropy> {
    if targets.len() != logits.nrows() || mask.len() != logits.nrows() {
        return Err(NnError::DimensionMismatch {
            expected: logits.nrows(),
            got: targets.len().min(mask.len()),
            context: "cross-entropy targets/mask",
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(NnError::AllMasked);
    }
    let scale = 1.0 / count as f64;
    let mut dlogits = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for (r, (&t, &keep)) in targets.iter().zip(mask).enumerate() {
        if !keep {
            continue;
        }
        let row = logits.row(r);
        if t >= row.len() {
            return Err(NnError::TokenOutOfRange {
                id: t,
                vocab: row.len(),
            });
        }
        let p = softmax(row);
        loss -= p[t].max(f64::MIN_POSITIVE).ln();
        if argmax(row) == t {
            correct += 1;
        }
        let mut d = dlogits.row_mut(r);
        d.assign(&p);
        d[t] -= 1.0;
        d *= scale;
    }
    Ok(CrossEntropy {
        loss: loss * scale,
        dlogits,
        count,
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let v = 7;
        let logits = Array2::zeros((3, v));
        let ce = cross_entropy(&logits, &[0, 3, 6], &[true; 3]).unwrap();
        assert!((ce.loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_drives_loss_to_zero() {
        let logits = array![[1e3, 0.0, 0.0]];
        let ce = cross_entropy(&logits, &[0], &[true]).unwrap();
        assert!(ce.loss < 1e-12);
        assert_eq!(ce.correct, 1);
    }

    #[test]
    fn masking_half_equals_mean_over_kept_half() {
        // Per-row NLLs worked out by hand for these 3-class rows.
        let logits = array![
            [2.0, 0.0, -1.0],
            [0.0, 1.0, 0.0],
            [0.5, 0.5, 3.0],
            [-2.0, 1.0, 1.0]
        ];
        let targets = [0, 2, 2, 1];
        let nll = |row: [f64; 3], t: usize| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            -(row[t].exp() / z).ln()
        };
        let expected = (nll([2.0, 0.0, -1.0], 0) + nll([0.5, 0.5, 3.0], 2)) / 2.0;
        let ce = cross_entropy(&logits, &targets, &[true, false, true, false]).unwrap();
        assert!((ce.loss - expected).abs() < 1e-12);
        assert!(ce.dlogits.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_masked_is_an_error() {
        let logits = Array2::zeros((2, 3));
        assert!(matches!(
            cross_entropy(&logits, &[0, 1], &[false, false]),
            Err(NnError::AllMasked)
        ));
    }
}
