//! Prompted autoregressive decoder over spliced prompt, acoustic and caption
//! embeddings.

mod search;
mod splice;
mod vocab;

pub use search::{argmax_lowest, beam_search, greedy, Hypothesis};
pub use splice::{assemble_sequence, Slot, SpliceSequence, PROMPT_PREFIX, PROMPT_SUFFIX};
pub use vocab::{normalize_tokens, Vocabulary, BOS, EOS, PAD, UNK};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::layers::{Forward, Specs};
use crate::nn::{Graph, Mask, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub d_dec: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_seq_len: usize,
    pub max_caption_len: usize,
    /// Beam score is `sum log p / len^length_exponent`.
    pub length_exponent: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            d_dec: 128,
            layers: 4,
            heads: 4,
            ffn_mult: 4,
            max_seq_len: 512,
            max_caption_len: 50,
            length_exponent: 0.75,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_dec == 0 || self.layers == 0 || self.heads == 0 || self.ffn_mult == 0 || self.max_seq_len == 0 {
            return Err(ModelError::InvalidConfig("decoder counts must be >= 1".into()));
        }
        if self.d_dec % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_dec {} not divisible by {} heads",
                self.d_dec, self.heads
            )));
        }
        Ok(())
    }

    pub fn adapted_projections(&self) -> Vec<String> {
        (0..self.layers)
            .flat_map(|i| ["q", "v"].map(|p| format!("decoder.layers.{i}.attn.{p}")))
            .collect()
    }
}

pub(crate) fn decoder_specs(s: &mut Specs, cfg: &DecoderConfig, vocab_size: usize) {
    let d = cfg.d_dec;
    s.normal("decoder.embed", &[vocab_size, d]);
    s.normal("decoder.pos", &[cfg.max_seq_len, d]);
    for i in 0..cfg.layers {
        s.block(&format!("decoder.layers.{i}"), d, cfg.ffn_mult);
    }
    s.norm("decoder.norm_out", d);
    s.linear("decoder.lm_head", vocab_size, d, false);
}

pub fn init_decoder<S: Scalar, R: Rng>(p: &mut ParamStore<S>, rng: &mut R, cfg: &DecoderConfig, vocab_size: usize) {
    let mut s = Specs::default();
    decoder_specs(&mut s, cfg, vocab_size);
    s.materialize(p, rng);
}

/// Input embeddings for every slot (text rows from the embedding table,
/// acoustic rows passed through) plus learned absolute positions. With
/// `teacher_forcing` the final slot is dropped.
pub fn embed_sequence<S: Scalar>(
    f: &mut Forward<'_, S>,
    cfg: &DecoderConfig,
    seq: &SpliceSequence,
    acoustic: Var,
    teacher_forcing: bool,
) -> Result<Var, ModelError> {
    if f.g.value(acoustic).rows() != seq.acoustic_len {
        return Err(ModelError::InvalidConfig(format!(
            "acoustic block has {} rows, sequence expects {}",
            f.g.value(acoustic).rows(),
            seq.acoustic_len
        )));
    }
    let mut slots = seq.slots();
    if teacher_forcing {
        slots.pop();
    }
    let n = slots.len();
    if n > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: n,
            max: cfg.max_seq_len,
        });
    }
    let embed = f.param("decoder.embed")?;
    let mut parts = Vec::new();
    let mut i = 0;
    while i < n {
        let run = slots[i..]
            .iter()
            .take_while(|s| matches!(s, Slot::Text(_)) == matches!(slots[i], Slot::Text(_)))
            .count();
        match slots[i] {
            Slot::Text(_) => {
                let ids: Vec<usize> = slots[i..i + run]
                    .iter()
                    .map(|s| match s {
                        Slot::Text(t) => *t,
                        Slot::Acoustic(_) => unreachable!(),
                    })
                    .collect();
                parts.push(f.g.gather_rows(embed, &ids)?);
            }
            Slot::Acoustic(r) if r == 0 && run == seq.acoustic_len => parts.push(acoustic),
            Slot::Acoustic(r) => parts.push(f.g.slice_rows(acoustic, r, run)?),
        }
        i += run;
    }
    let x = if parts.len() == 1 { parts[0] } else { f.g.concat_rows(&parts)? };
    let pos = f.param("decoder.pos")?;
    let pos = f.g.gather_rows(pos, &(0..n).collect::<Vec<_>>())?;
    Ok(f.g.add(x, pos)?)
}

/// Logits for every input slot; with `teacher_forcing` row `i` predicts
/// slot `i + 1`.
pub fn decoder_logits<S: Scalar>(
    f: &mut Forward<'_, S>,
    cfg: &DecoderConfig,
    seq: &SpliceSequence,
    acoustic: Var,
    teacher_forcing: bool,
) -> Result<Var, ModelError> {
    let mut x = embed_sequence(f, cfg, seq, acoustic, teacher_forcing)?;
    let mask = Mask::causal(f.g.value(x).rows());
    for i in 0..cfg.layers {
        x = f.block(&format!("decoder.layers.{i}"), x, cfg.heads, Some(&mask))?;
    }
    let x = f.norm("decoder.norm_out", x)?;
    Ok(f.linear("decoder.lm_head", x)?)
}

/// Token-weighted mean cross-entropy over the caption positions of a batch;
/// returns the loss node and the number of target tokens.
pub fn batch_loss<S: Scalar>(
    f: &mut Forward<'_, S>,
    cfg: &DecoderConfig,
    batch: &[(SpliceSequence, Var)],
) -> Result<(Var, usize), ModelError> {
    let targets: Vec<Vec<Option<usize>>> = batch.iter().map(|(s, _)| s.targets()).collect();
    let total: usize = targets.iter().map(|t| t.iter().flatten().count()).sum();
    if total == 0 {
        return Err(crate::nn::NnError::EmptyTargetSet.into());
    }
    let mut loss: Option<Var> = None;
    for ((seq, acoustic), t) in batch.iter().zip(&targets) {
        let n = t.iter().flatten().count();
        if n == 0 {
            continue;
        }
        let logits = decoder_logits(f, cfg, seq, *acoustic, true)?;
        let ce = f.g.cross_entropy(logits, t)?;
        let ce = f.g.scale(ce, S::from_f64(n as f64 / total as f64));
        loss = Some(match loss {
            Some(l) => f.g.add(l, ce)?,
            None => ce,
        });
    }
    Ok((loss.expect("at least one sequence has targets"), total))
}

/// Log-softmax of the last position's logits for `seq` (no `<eos>` appended).
pub fn next_log_probs<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &DecoderConfig,
    seq: &SpliceSequence,
    acoustic: &Tensor<S>,
    lora_scaling: Option<f64>,
) -> Result<Vec<f64>, ModelError> {
    let mut g = Graph::new();
    let mut f = Forward::new(&mut g, params, lora_scaling);
    f.track_grads = false;
    let a = f.g.constant(acoustic.clone());
    let logits = decoder_logits(&mut f, cfg, seq, a, false)?;
    let t = g.value(logits);
    let row: Vec<f64> = t.row(t.rows() - 1).iter().map(|v| v.as_f64()).collect();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(row.into_iter().map(|v| v - lse).collect())
}

/// Longest caption the sequence budget allows.
pub fn caption_budget(cfg: &DecoderConfig, prompt: &SpliceSequence) -> usize {
    cfg.max_caption_len.min(cfg.max_seq_len.saturating_sub(prompt.len()))
}

pub fn greedy_decode<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &DecoderConfig,
    vocab: &Vocabulary,
    acoustic: &Tensor<S>,
    lora_scaling: Option<f64>,
) -> Result<Vec<usize>, ModelError> {
    let prompt = assemble_sequence(acoustic.rows(), None, vocab, cfg.max_seq_len)?;
    greedy(caption_budget(cfg, &prompt), |ids| {
        next_log_probs(params, cfg, &prompt.with_partial_caption(ids), acoustic, lora_scaling)
    })
}

pub fn beam_decode<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &DecoderConfig,
    vocab: &Vocabulary,
    acoustic: &Tensor<S>,
    beam: usize,
    lora_scaling: Option<f64>,
) -> Result<Hypothesis, ModelError> {
    let prompt = assemble_sequence(acoustic.rows(), None, vocab, cfg.max_seq_len)?;
    beam_search(beam, caption_budget(cfg, &prompt), cfg.length_exponent, |ids| {
        next_log_probs(params, cfg, &prompt.with_partial_caption(ids), acoustic, lora_scaling)
    })
}
