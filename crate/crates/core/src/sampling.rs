//! Mixed top-k / nucleus filtering and autoregressive sampling.

use initiative_nn::loss::softmax;
use initiative_nn::{Decoder, DecoderInput, ForwardMode};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::END;
use crate::corpus::DialogueMode;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeParams {
    pub top_k: usize,
    pub top_p: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl DecodeParams {
    pub const DEFAULT_MAX_NEW_TOKENS: usize = 48;

    pub fn chitchat() -> Self {
        Self {
            top_k: 5,
            top_p: 0.9,
            max_new_tokens: Self::DEFAULT_MAX_NEW_TOKENS,
            seed: 0,
        }
    }

    pub fn taskoriented() -> Self {
        Self {
            top_k: 10,
            top_p: 0.5,
            max_new_tokens: Self::DEFAULT_MAX_NEW_TOKENS,
            seed: 0,
        }
    }

    pub fn for_mode(mode: DialogueMode) -> Self {
        match mode {
            DialogueMode::Chitchat => Self::chitchat(),
            DialogueMode::Taskoriented => Self::taskoriented(),
        }
    }

    pub fn greedy() -> Self {
        Self {
            top_k: 1,
            top_p: 1.0,
            max_new_tokens: Self::DEFAULT_MAX_NEW_TOKENS,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decode params need top_k >= 1 and 0 < top_p <= 1, got k={} p={}",
                self.top_k, self.top_p
            )));
        }
        Ok(())
    }
}

/// Per-mode decoding settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeTable {
    pub chitchat: DecodeParams,
    pub taskoriented: DecodeParams,
}

impl Default for DecodeTable {
    fn default() -> Self {
        Self {
            chitchat: DecodeParams::chitchat(),
            taskoriented: DecodeParams::taskoriented(),
        }
    }
}

impl DecodeTable {
    pub fn get(&self, mode: DialogueMode) -> DecodeParams {
        match mode {
            DialogueMode::Chitchat => self.chitchat,
            DialogueMode::Taskoriented => self.taskoriented,
        }
    }
}

/// Keeps the `k` most probable entries (lower id first on ties), then the
/// shortest prefix of those whose cumulative probability reaches `p`, and
/// renormalizes.
pub fn filter_logits(dist: &[f64], k: usize, p: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    let mut cum = 0.0;
    let mut keep = order.len();
    for (i, &t) in order.iter().enumerate() {
        cum += dist[t];
        if cum >= p {
            keep = i + 1;
            break;
        }
    }
    let kept = &order[..keep];
    let mass: f64 = kept.iter().map(|&t| dist[t]).sum();
    let mut out = vec![0.0; dist.len()];
    for &t in kept {
        out[t] = if mass > 0.0 {
            dist[t] / mass
        } else {
            1.0 / keep as f64
        };
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sampled {
    /// Generated ids without the terminal `[END]`.
    pub tokens: Vec<usize>,
    /// Stopped by a length limit before `[END]`.
    pub truncated: bool,
}

/// Samples until `[END]`, `max_new_tokens` or the decoder's length limit.
pub fn sample_response(
    decoder: &Decoder,
    context: &[usize],
    prompts: Option<[&[f64]; 2]>,
    params: &DecodeParams,
) -> Result<Sampled> {
    params.validate()?;
    let max_len = decoder.config().max_seq_len;
    if context.is_empty() || context.len() > max_len - 1 {
        return Err(Error::Overlength {
            len: context.len(),
            max: max_len - 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut seq = context.to_vec();
    let mut out = Vec::new();
    while out.len() < params.max_new_tokens {
        if seq.len() > max_len {
            return Ok(Sampled {
                tokens: out,
                truncated: true,
            });
        }
        let input = DecoderInput {
            tokens: &seq,
            prompts,
        };
        let (logits, _) = decoder.forward(&[input], &mut ForwardMode::Eval)?;
        let dist = softmax(logits.row(logits.nrows() - 1));
        let filtered = filter_logits(dist.as_slice().expect("contiguous"), params.top_k, params.top_p);
        let next = WeightedIndex::new(&filtered)
            .map_err(|e| Error::InvalidArgument(format!("degenerate distribution: {e}")))?
            .sample(&mut rng);
        if next == END {
            return Ok(Sampled {
                tokens: out,
                truncated: false,
            });
        }
        out.push(next);
        seq.push(next);
    }
    Ok(Sampled {
        tokens: out,
        truncated: params.max_new_tokens > 0,
    })
}
