use std::sync::Arc;

use rand::Rng;

use crate::autograd::{AttnMask, Graph, NodeId, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add_trunc_normal(format!("{name}.weight"), d_in, d_out, INIT_STD, rng),
            b: store.add(format!("{name}.bias"), Matrix::zeros(1, d_out)),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(x, w);
        g.add_bias(h, b)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerNorm {
    gain: ParamId,
    bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, d, T::one())),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, d)),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> NodeId {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            out: Linear::new(store, &format!("{name}.out"), d, d, rng),
            heads,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        queries: NodeId,
        memory: NodeId,
        mask: Option<&Arc<AttnMask>>,
    ) -> NodeId {
        let q = self.q.forward(g, queries);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let a = g.attention(q, k, v, mask, self.heads);
        self.out.forward(g, a)
    }
}

/// Pre-norm transformer decoder block: self-attention over the token
/// sequence, masked cross-attention into the audio memory, then a GELU MLP.
#[derive(Clone, Debug)]
pub(crate) struct DecoderBlock {
    norm_self: LayerNorm,
    self_attn: MultiHeadAttention,
    norm_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

impl DecoderBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ff: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), d),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d, heads, rng),
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), d),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), d, heads, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), d),
            ff_in: Linear::new(store, &format!("{name}.ff_in"), d, ff, rng),
            ff_out: Linear::new(store, &format!("{name}.ff_out"), ff, d, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: NodeId,
        memory: NodeId,
        cross_mask: &Arc<AttnMask>,
    ) -> NodeId {
        let h = self.norm_self.forward(g, x);
        let a = self.self_attn.forward(g, h, h, None);
        let x = g.add(x, a);

        let h = self.norm_cross.forward(g, x);
        let a = self.cross_attn.forward(g, h, memory, Some(cross_mask));
        let x = g.add(x, a);

        let h = self.norm_ff.forward(g, x);
        let h = self.ff_in.forward(g, h);
        let h = g.gelu(h);
        let h = self.ff_out.forward(g, h);
        g.add(x, h)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderStack {
    blocks: Vec<DecoderBlock>,
    final_norm: LayerNorm,
}

impl DecoderStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        depth: usize,
        d: usize,
        heads: usize,
        ff: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            blocks: (0..depth)
                .map(|i| DecoderBlock::new(store, &format!("{name}.block{i}"), d, heads, ff, rng))
                .collect(),
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), d),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        mut x: NodeId,
        memory: NodeId,
        cross_mask: &Arc<AttnMask>,
    ) -> NodeId {
        for b in &self.blocks {
            x = b.forward(g, x, memory, cross_mask);
        }
        self.final_norm.forward(g, x)
    }
}
