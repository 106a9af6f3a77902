//! Fixed-rate querying transformer. Every `window` acoustic tokens are
//! summarized by one learned query, then window queries exchange context and
//! are projected to decoder width.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::layers::{Forward, Specs};
use crate::nn::{Graph, Mask, ParamStore, Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub window: usize,
    pub d_q: usize,
    pub cross_layers: usize,
    pub self_layers: usize,
    pub d_dec: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_windows: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            window: 17,
            d_q: 64,
            cross_layers: 1,
            self_layers: 1,
            d_dec: 128,
            heads: 4,
            ffn_mult: 4,
            max_windows: 128,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.window == 0 || self.cross_layers == 0 || self.heads == 0 || self.max_windows == 0 {
            return Err(ModelError::InvalidConfig("bridge counts must be >= 1".into()));
        }
        if self.d_q % self.heads != 0 || self.d_dec % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "bridge widths {}/{} not divisible by {} heads",
                self.d_q, self.d_dec, self.heads
            )));
        }
        Ok(())
    }
}

/// Number of bridge tokens for `t` acoustic tokens.
pub fn output_count(t: usize, window: usize) -> usize {
    t.div_ceil(window)
}

/// Mask letting query `i` see only keys in window `i`.
pub fn window_mask(t: usize, window: usize) -> Mask {
    let l = output_count(t, window);
    let allowed = (0..l)
        .flat_map(|i| (0..t).map(move |j| j / window == i))
        .collect();
    Mask::new(l, t, allowed).expect("window mask shape")
}

/// `L × d_dec` bridge output.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryTokenSequence<S> {
    pub tokens: Tensor<S>,
}

impl<S: Scalar> QueryTokenSequence<S> {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub struct BridgeNodes {
    pub out: Var,
    /// Window queries after the cross-attention stage.
    pub queries: Var,
    /// Per-head cross-attention weights of the last cross layer.
    pub cross_weights: Vec<Var>,
}

pub(crate) fn bridge_specs(s: &mut Specs, cfg: &BridgeConfig, d_enc: usize) {
    let d = cfg.d_q;
    s.normal("bridge.query", &[1, d]);
    s.normal("bridge.window_pos", &[cfg.max_windows, d]);
    s.normal("bridge.in_window_pos", &[cfg.window, d_enc]);
    for i in 0..cfg.cross_layers {
        let pre = format!("bridge.cross.{i}");
        s.norm(&format!("{pre}.norm_q"), d);
        s.norm(&format!("{pre}.norm_kv"), d_enc);
        s.attention(&format!("{pre}.attn"), d, d_enc);
        s.norm(&format!("{pre}.norm2"), d);
        s.ffn(&format!("{pre}.ffn"), d, cfg.ffn_mult);
    }
    for i in 0..cfg.self_layers {
        s.block(&format!("bridge.self.{i}"), d, cfg.ffn_mult);
    }
    s.norm("bridge.norm_out", d);
    s.linear("bridge.proj", cfg.d_dec, d, true);
}

pub fn init_bridge<S: Scalar, R: Rng>(p: &mut ParamStore<S>, rng: &mut R, cfg: &BridgeConfig, d_enc: usize) {
    let mut s = Specs::default();
    bridge_specs(&mut s, cfg, d_enc);
    s.materialize(p, rng);
}

pub fn bridge_graph<S: Scalar>(f: &mut Forward<'_, S>, acoustic: Var, cfg: &BridgeConfig) -> Result<BridgeNodes, ModelError> {
    let t = f.g.value(acoustic).rows();
    if t == 0 || f.g.value(acoustic).is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let l = output_count(t, cfg.window);
    if l > cfg.max_windows {
        return Err(ModelError::TooLong {
            len: l,
            max: cfg.max_windows,
        });
    }
    let query = f.param("bridge.query")?;
    let wpos = f.param("bridge.window_pos")?;
    let ipos = f.param("bridge.in_window_pos")?;
    let q = f.g.gather_rows(query, &vec![0; l])?;
    let wp = f.g.gather_rows(wpos, &(0..l).collect::<Vec<_>>())?;
    let mut q = f.g.add(q, wp)?;
    let ip = f.g.gather_rows(ipos, &(0..t).map(|j| j % cfg.window).collect::<Vec<_>>())?;
    let ctx = f.g.add(acoustic, ip)?;
    let mask = window_mask(t, cfg.window);
    let mut cross_weights = Vec::new();
    for i in 0..cfg.cross_layers {
        let pre = format!("bridge.cross.{i}");
        let qn = f.norm(&format!("{pre}.norm_q"), q)?;
        let kv = f.norm(&format!("{pre}.norm_kv"), ctx)?;
        let (a, w) = f.attention(&format!("{pre}.attn"), qn, kv, cfg.heads, Some(&mask))?;
        q = f.g.add(q, a)?;
        let h = f.norm(&format!("{pre}.norm2"), q)?;
        let h = f.ffn(&format!("{pre}.ffn"), h)?;
        q = f.g.add(q, h)?;
        cross_weights = w;
    }
    let queries = q;
    for i in 0..cfg.self_layers {
        q = f.block(&format!("bridge.self.{i}"), q, cfg.heads, None)?;
    }
    let q = f.norm("bridge.norm_out", q)?;
    let out = f.linear("bridge.proj", q)?;
    Ok(BridgeNodes {
        out,
        queries,
        cross_weights,
    })
}

/// Runs the bridge on encoder output without recording gradients.
pub fn bridge<S: Scalar>(
    params: &ParamStore<S>,
    cfg: &BridgeConfig,
    acoustic: &Tensor<S>,
) -> Result<QueryTokenSequence<S>, ModelError> {
    let mut g = Graph::new();
    let mut f = Forward::new(&mut g, params, None);
    f.track_grads = false;
    let a = f.g.constant(acoustic.clone());
    let nodes = bridge_graph(&mut f, a, cfg)?;
    Ok(QueryTokenSequence {
        tokens: g.value(nodes.out).clone(),
    })
}
