//! Parameter-store-backed building blocks shared by the encoder, bridge and
//! decoder.

use rand::Rng;

use crate::lora::{LORA_A, LORA_B};
use crate::nn::{init_normal, multi_head_attention, Graph, Mask, NnError, ParamStore, Scalar, Tensor, Var};

pub(crate) const INIT_STD: f64 = 0.02;

/// One forward pass over a parameter store.
pub struct Forward<'a, S> {
    pub g: &'a mut Graph<S>,
    pub params: &'a ParamStore<S>,
    /// `alpha / r`, or `None` when adapters are disabled.
    pub lora_scaling: Option<f64>,
    /// When false no parameter is marked as requiring a gradient.
    pub track_grads: bool,
}

impl<'a, S: Scalar> Forward<'a, S> {
    pub fn new(g: &'a mut Graph<S>, params: &'a ParamStore<S>, lora_scaling: Option<f64>) -> Self {
        Self {
            g,
            params,
            lora_scaling,
            track_grads: true,
        }
    }

    pub fn param(&mut self, name: &str) -> Result<Var, NnError> {
        let t = self.params.get(name)?;
        let trainable = self.track_grads && self.params.is_trainable(name);
        Ok(self.g.param(name, t, trainable))
    }

    /// `x W^T (+ b)` plus the low-rank residual when an adapter is attached.
    pub fn linear(&mut self, prefix: &str, x: Var) -> Result<Var, NnError> {
        let w = self.param(&format!("{prefix}.weight"))?;
        let mut y = self.g.matmul_nt(x, w)?;
        let a_name = format!("{prefix}.{LORA_A}");
        if let (Some(scale), true) = (self.lora_scaling, self.params.contains(&a_name)) {
            let a = self.param(&a_name)?;
            let b = self.param(&format!("{prefix}.{LORA_B}"))?;
            let ax = self.g.matmul_nt(x, a)?;
            let bax = self.g.matmul_nt(ax, b)?;
            let r = self.g.scale(bax, S::from_f64(scale));
            y = self.g.add(y, r)?;
        }
        let b_name = format!("{prefix}.bias");
        if self.params.contains(&b_name) {
            let b = self.param(&b_name)?;
            y = self.g.add_row(y, b)?;
        }
        Ok(y)
    }

    pub fn norm(&mut self, name: &str, x: Var) -> Result<Var, NnError> {
        let gain = self.param(name)?;
        self.g.rms_norm(x, gain)
    }

    /// Attention with q from `x`, k/v from `ctx`, then the output projection.
    pub fn attention(
        &mut self,
        prefix: &str,
        x: Var,
        ctx: Var,
        heads: usize,
        mask: Option<&Mask>,
    ) -> Result<(Var, Vec<Var>), NnError> {
        let q = self.linear(&format!("{prefix}.q"), x)?;
        let k = self.linear(&format!("{prefix}.k"), ctx)?;
        let v = self.linear(&format!("{prefix}.v"), ctx)?;
        let att = multi_head_attention(self.g, q, k, v, heads, mask)?;
        let out = self.linear(&format!("{prefix}.o"), att.out)?;
        Ok((out, att.weights))
    }

    pub fn ffn(&mut self, prefix: &str, x: Var) -> Result<Var, NnError> {
        let h = self.linear(&format!("{prefix}.up"), x)?;
        let h = self.g.gelu(h);
        self.linear(&format!("{prefix}.down"), h)
    }

    /// Pre-norm residual block: self-attention then feed-forward.
    pub fn block(&mut self, prefix: &str, x: Var, heads: usize, mask: Option<&Mask>) -> Result<Var, NnError> {
        let h = self.norm(&format!("{prefix}.norm1"), x)?;
        let (a, _) = self.attention(&format!("{prefix}.attn"), h, h, heads, mask)?;
        let x = self.g.add(x, a)?;
        let h = self.norm(&format!("{prefix}.norm2"), x)?;
        let f = self.ffn(&format!("{prefix}.ffn"), h)?;
        self.g.add(x, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered parameter declarations. Shapes are known before anything is
/// allocated; `materialize` draws initial values in declaration order.
#[derive(Clone, Debug, Default)]
pub(crate) struct Specs(pub Vec<ParamSpec>);

impl Specs {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], init: Init) {
        self.0.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
    }

    pub fn normal(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.push(name, shape, Init::Normal(INIT_STD));
    }

    pub fn linear(&mut self, prefix: &str, d_out: usize, d_in: usize, bias: bool) {
        self.normal(format!("{prefix}.weight"), &[d_out, d_in]);
        if bias {
            self.push(format!("{prefix}.bias"), &[1, d_out], Init::Zeros);
        }
    }

    pub fn norm(&mut self, name: &str, d: usize) {
        self.push(name, &[1, d], Init::Ones);
    }

    /// q/k/v/o projections; `d_kv` is the width of the attended context.
    pub fn attention(&mut self, prefix: &str, d: usize, d_kv: usize) {
        self.linear(&format!("{prefix}.q"), d, d, false);
        self.linear(&format!("{prefix}.k"), d, d_kv, false);
        self.linear(&format!("{prefix}.v"), d, d_kv, false);
        self.linear(&format!("{prefix}.o"), d, d, false);
    }

    pub fn ffn(&mut self, prefix: &str, d: usize, mult: usize) {
        self.linear(&format!("{prefix}.up"), d * mult, d, true);
        self.linear(&format!("{prefix}.down"), d, d * mult, true);
    }

    pub fn block(&mut self, prefix: &str, d: usize, mult: usize) {
        self.norm(&format!("{prefix}.norm1"), d);
        self.attention(&format!("{prefix}.attn"), d, d);
        self.norm(&format!("{prefix}.norm2"), d);
        self.ffn(&format!("{prefix}.ffn"), d, mult);
    }

    pub fn materialize<S: Scalar, R: Rng>(&self, p: &mut ParamStore<S>, rng: &mut R) {
        for spec in &self.0 {
            let t = match spec.init {
                Init::Normal(std) => init_normal(rng, &spec.shape, std),
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, S::one()),
            };
            p.insert(spec.name.clone(), t);
        }
    }
}
