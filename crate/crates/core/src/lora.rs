//! Low-rank adapters on linear projections and the per-component training
//! strategy (frozen / full fine-tune / LoRA).
//!
//! Inside a model the adapter of projection `p` lives in the parameter store
//! as `p.lora_a` (`r × d_in`) and `p.lora_b` (`d_out × r`) next to `p.weight`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{init_normal, NnError, ParamStore, Scalar, Tensor};

pub const LORA_A: &str = "lora_a";
pub const LORA_B: &str = "lora_b";
/// Standard deviation of the Gaussian used for `A`.
pub const LORA_INIT_STD: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum LoraError {
    #[error("rank {rank} exceeds min(d_in, d_out) = {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown training mode `{0}` (expected frozen, full or lora)")]
    UnknownMode(String),
    #[error("component `{0}` is in lora mode but has no adapters attached")]
    MissingAdapters(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Plain projection `y = W x + b` with `W` stored `d_out × d_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Option<Tensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(weight: Tensor<S>, bias: Option<Tensor<S>>) -> Self {
        Self { weight, bias }
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[S]) -> Result<Vec<S>, LoraError> {
        if x.len() != self.d_in() {
            return Err(LoraError::DimensionMismatch(format!(
                "input {} for d_in {}",
                x.len(),
                self.d_in()
            )));
        }
        let mut y = matvec(&self.weight, x);
        if let Some(b) = &self.bias {
            for (v, &bb) in y.iter_mut().zip(b.data()) {
                *v = *v + bb;
            }
        }
        Ok(y)
    }
}

fn matvec<S: Scalar>(m: &Tensor<S>, x: &[S]) -> Vec<S> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// A frozen base projection with a trainable residual `(alpha / r) · B A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraLinear<S> {
    pub base: Linear<S>,
    pub base_frozen: bool,
    pub a: Tensor<S>,
    pub b: Tensor<S>,
    pub rank: usize,
    pub alpha: f64,
    pub enabled: bool,
}

impl<S: Scalar> LoraLinear<S> {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

fn check_rank(rank: usize, d_in: usize, d_out: usize) -> Result<(), LoraError> {
    if rank == 0 {
        return Err(LoraError::ZeroRank);
    }
    let max = d_in.min(d_out);
    if rank > max {
        return Err(LoraError::RankTooLarge { rank, max });
    }
    Ok(())
}

/// Wraps `layer`: `A ~ N(0, 0.02²)` from `seed`, `B = 0`, base frozen.
pub fn wrap_linear<S: Scalar>(
    layer: Linear<S>,
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<LoraLinear<S>, LoraError> {
    let (d_in, d_out) = (layer.d_in(), layer.d_out());
    check_rank(rank, d_in, d_out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(LoraLinear {
        a: init_normal(&mut rng, &[rank, d_in], LORA_INIT_STD),
        b: Tensor::zeros(&[d_out, rank]),
        base: layer,
        base_frozen: true,
        rank,
        alpha,
        enabled: true,
    })
}

pub fn lora_forward<S: Scalar>(l: &LoraLinear<S>, x: &[S]) -> Result<Vec<S>, LoraError> {
    let mut y = l.base.forward(x)?;
    if l.enabled {
        let ax = matvec(&l.a, x);
        let bax = matvec(&l.b, &ax);
        let s = S::from_f64(l.scaling());
        for (v, d) in y.iter_mut().zip(bax) {
            *v = *v + s * d;
        }
    }
    Ok(y)
}

/// `W' = W + (alpha / r) · B A`; the source layer is left untouched.
pub fn merge<S: Scalar>(l: &LoraLinear<S>) -> Linear<S> {
    Linear {
        weight: merged_weight(&l.base.weight, &l.a, &l.b, l.scaling()),
        bias: l.base.bias.clone(),
    }
}

fn merged_weight<S: Scalar>(w: &Tensor<S>, a: &Tensor<S>, b: &Tensor<S>, scaling: f64) -> Tensor<S> {
    let ba = b.matmul(a).expect("adapter shapes validated at wrap time");
    let s = S::from_f64(scaling);
    let mut out = w.clone();
    for (o, &d) in out.data_mut().iter_mut().zip(ba.data()) {
        let delta = s * d;
        if delta != S::zero() {
            *o = *o + delta;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Frozen,
    #[serde(rename = "full")]
    FullFinetune,
    Lora,
}

impl FromStr for TrainMode {
    type Err = LoraError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frozen" => Ok(Self::Frozen),
            "full" | "full_finetune" | "fine-tuning" => Ok(Self::FullFinetune),
            "lora" => Ok(Self::Lora),
            other => Err(LoraError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Frozen => "frozen",
            Self::FullFinetune => "full",
            Self::Lora => "lora",
        })
    }
}

/// Training mode for the encoder and decoder. The bridge (including the
/// projection to decoder width) is trained under every strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainStrategy {
    pub encoder: TrainMode,
    pub decoder: TrainMode,
}

impl Default for TrainStrategy {
    fn default() -> Self {
        Self::uniform(TrainMode::FullFinetune)
    }
}

pub const ENCODER: &str = "encoder";
pub const BRIDGE: &str = "bridge";
pub const DECODER: &str = "decoder";

impl TrainStrategy {
    pub fn uniform(mode: TrainMode) -> Self {
        Self {
            encoder: mode,
            decoder: mode,
        }
    }

    /// Builds a strategy from `component=mode` assignments over a default.
    pub fn with_assignments<'a>(
        mut self,
        assignments: impl IntoIterator<Item = (&'a str, TrainMode)>,
    ) -> Result<Self, LoraError> {
        for (component, mode) in assignments {
            match component {
                ENCODER => self.encoder = mode,
                DECODER => self.decoder = mode,
                other => return Err(LoraError::UnknownComponent(other.to_string())),
            }
        }
        Ok(self)
    }

    pub fn mode_of(&self, component: &str) -> Result<Option<TrainMode>, LoraError> {
        match component {
            ENCODER => Ok(Some(self.encoder)),
            DECODER => Ok(Some(self.decoder)),
            BRIDGE => Ok(None),
            other => Err(LoraError::UnknownComponent(other.to_string())),
        }
    }

    pub fn uses_lora(&self) -> bool {
        self.encoder == TrainMode::Lora || self.decoder == TrainMode::Lora
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainableSet {
    pub names: Vec<String>,
    pub count: usize,
}

fn component_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

fn is_adapter(name: &str) -> bool {
    name.ends_with(LORA_A) || name.ends_with(LORA_B)
}

/// Parameters updated under `strategy`.
///
/// frozen → nothing from that component; full → every base parameter;
/// lora → only the adapters of that component. Bridge parameters are
/// always included.
pub fn trainable_parameters<S: Scalar>(
    params: &ParamStore<S>,
    strategy: &TrainStrategy,
) -> Result<TrainableSet, LoraError> {
    let mut names = Vec::new();
    let mut count = 0;
    let mut adapters_seen = [false, false];
    for (name, t) in params.iter() {
        let component = component_of(name);
        let adapter = is_adapter(name);
        let take = match strategy.mode_of(component)? {
            None => !adapter,
            Some(TrainMode::Frozen) => false,
            Some(TrainMode::FullFinetune) => !adapter,
            Some(TrainMode::Lora) => {
                if adapter {
                    adapters_seen[usize::from(component == DECODER)] = true;
                }
                adapter
            }
        };
        if take {
            names.push(name.to_string());
            count += t.len();
        }
    }
    for (i, component) in [ENCODER, DECODER].into_iter().enumerate() {
        if strategy.mode_of(component)? == Some(TrainMode::Lora) && !adapters_seen[i] {
            return Err(LoraError::MissingAdapters(component.to_string()));
        }
    }
    Ok(TrainableSet { names, count })
}

/// Sets every parameter's trainable flag according to `strategy`.
pub fn apply_strategy<S: Scalar>(
    params: &mut ParamStore<S>,
    strategy: &TrainStrategy,
) -> Result<TrainableSet, LoraError> {
    let set = trainable_parameters(params, strategy)?;
    params.set_all_trainable(false);
    for n in &set.names {
        params.set_trainable(n, true)?;
    }
    Ok(set)
}

/// Attaches a fresh adapter to each projection prefix that lacks one. Seeds
/// are derived from `seed` and the projection's position in `prefixes`.
pub fn attach_adapters<S: Scalar>(
    params: &mut ParamStore<S>,
    prefixes: &[String],
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<usize, LoraError> {
    let mut attached = 0;
    for (i, prefix) in prefixes.iter().enumerate() {
        let a_name = format!("{prefix}.{LORA_A}");
        if params.contains(&a_name) {
            continue;
        }
        let weight = params.get(&format!("{prefix}.weight"))?.clone();
        let wrapped = wrap_linear(
            Linear::new(weight, None),
            rank,
            alpha,
            seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )?;
        params.insert(a_name, wrapped.a);
        params.insert(format!("{prefix}.{LORA_B}"), wrapped.b);
        attached += 1;
    }
    Ok(attached)
}

/// Folds every attached adapter into its base weight and removes it.
pub fn merge_adapters<S: Scalar>(params: &mut ParamStore<S>, scaling: f64) -> Result<usize, LoraError> {
    let prefixes: Vec<String> = params
        .names()
        .filter_map(|n| n.strip_suffix(&format!(".{LORA_A}")).map(str::to_string))
        .collect();
    for prefix in &prefixes {
        let a = params
            .remove(&format!("{prefix}.{LORA_A}"))
            .ok_or_else(|| NnError::UnknownParameter(format!("{prefix}.{LORA_A}")))?;
        let b = params
            .remove(&format!("{prefix}.{LORA_B}"))
            .ok_or_else(|| NnError::UnknownParameter(format!("{prefix}.{LORA_B}")))?;
        let w = params.get_mut(&format!("{prefix}.weight"))?;
        *w = merged_weight(w, &a, &b, scaling);
    }
    Ok(prefixes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layer() -> LoraLinear<f64> {
        LoraLinear {
            base: Linear::new(Tensor::scalar(3.0), None),
            base_frozen: true,
            a: Tensor::scalar(1.0),
            b: Tensor::scalar(0.5),
            rank: 1,
            alpha: 2.0,
            enabled: true,
        }
    }

    #[test]
    fn one_dimensional_example() {
        let l = scalar_layer();
        assert_eq!(lora_forward(&l, &[2.0]).unwrap(), vec![8.0]);
        let m = merge(&l);
        assert_eq!(m.weight.data(), &[4.0]);
        assert_eq!(m.forward(&[2.0]).unwrap(), vec![8.0]);
    }

    #[test]
    fn disabled_or_zero_b_is_base() {
        let mut l = scalar_layer();
        l.enabled = false;
        assert_eq!(lora_forward(&l, &[2.0]).unwrap(), vec![6.0]);
        let mut l = scalar_layer();
        l.b = Tensor::scalar(0.0);
        l.a = Tensor::scalar(123.0);
        assert_eq!(lora_forward(&l, &[2.0]).unwrap(), vec![6.0]);
        assert_eq!(merge(&l).weight, l.base.weight);
    }

    fn base(d_out: usize, d_in: usize) -> Linear<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Linear::new(init_normal(&mut rng, &[d_out, d_in], 0.5), None)
    }

    #[test]
    fn wrap_is_identity_and_deterministic() {
        let l = wrap_linear(base(6, 4), 3, 16.0, 9).unwrap();
        assert!(l.b.data().iter().all(|&v| v == 0.0));
        let x = [0.1f32, -0.4, 2.0, 0.7];
        assert_eq!(lora_forward(&l, &x).unwrap(), l.base.forward(&x).unwrap());
        let l2 = wrap_linear(base(6, 4), 3, 16.0, 9).unwrap();
        assert_eq!(l.a, l2.a);
    }

    #[test]
    fn rank_limits() {
        assert!(matches!(
            wrap_linear(base(6, 4), 5, 16.0, 0),
            Err(LoraError::RankTooLarge { rank: 5, max: 4 })
        ));
        assert!(matches!(wrap_linear(base(6, 4), 0, 16.0, 0), Err(LoraError::ZeroRank)));
        assert!(wrap_linear(base(6, 4), 4, 16.0, 0).is_ok());
    }

    #[test]
    fn dimension_checked() {
        let l = wrap_linear(base(6, 4), 2, 16.0, 0).unwrap();
        assert!(matches!(lora_forward(&l, &[1.0; 3]), Err(LoraError::DimensionMismatch(_))));
    }

    fn attention_store(d: usize) -> ParamStore<f32> {
        let mut p = ParamStore::new();
        for proj in ["q", "k", "v", "o"] {
            p.insert(format!("encoder.layers.0.attn.{proj}.weight"), Tensor::zeros(&[d, d]));
        }
        p.insert("bridge.query", Tensor::zeros(&[1, d]));
        p
    }

    #[test]
    fn strategy_parameter_counts() {
        let mut p = attention_store(8);
        let qv: Vec<String> = ["q", "v"]
            .iter()
            .map(|x| format!("encoder.layers.0.attn.{x}"))
            .collect();
        attach_adapters(&mut p, &qv, 2, 16.0, 0).unwrap();
        let lora = TrainStrategy {
            encoder: TrainMode::Lora,
            decoder: TrainMode::Frozen,
        };
        let set = trainable_parameters(&p, &lora).unwrap();
        assert_eq!(set.count, 64 + 8);
        assert!(set.names.iter().all(|n| n.contains("lora") || n.starts_with("bridge")));

        let frozen = TrainStrategy::uniform(TrainMode::Frozen);
        let set = trainable_parameters(&p, &frozen).unwrap();
        assert_eq!(set.names, vec!["bridge.query".to_string()]);

        let full = TrainStrategy::uniform(TrainMode::FullFinetune);
        let set = trainable_parameters(&p, &full).unwrap();
        assert_eq!(set.count, 4 * 64 + 8);
    }

    #[test]
    fn unknown_component_and_missing_adapters() {
        let mut p = attention_store(4);
        p.insert("projector.weight", Tensor::zeros(&[2, 2]));
        assert!(matches!(
            trainable_parameters(&p, &TrainStrategy::default()),
            Err(LoraError::UnknownComponent(c)) if c == "projector"
        ));
        assert!(matches!(
            TrainStrategy::default().with_assignments([("bridge", TrainMode::Lora)]),
            Err(LoraError::UnknownComponent(_))
        ));
        let p = attention_store(4);
        assert!(matches!(
            trainable_parameters(&p, &TrainStrategy::uniform(TrainMode::Lora)),
            Err(LoraError::MissingAdapters(_))
        ));
    }

    #[test]
    fn store_merge_matches_layer_merge() {
        let mut p = ParamStore::<f64>::new();
        p.insert("decoder.x.weight", Tensor::from_f64_slice(&[1, 1], &[3.0]).unwrap());
        p.insert("decoder.x.lora_a", Tensor::from_f64_slice(&[1, 1], &[1.0]).unwrap());
        p.insert("decoder.x.lora_b", Tensor::from_f64_slice(&[1, 1], &[0.5]).unwrap());
        assert_eq!(merge_adapters(&mut p, 2.0).unwrap(), 1);
        assert_eq!(p.get("decoder.x.weight").unwrap().data(), &[4.0]);
        assert_eq!(p.len(), 1);
    }
}
