//! Single-head self-attention with a residual connection, used inside the
//! lightweight encoders.

use ndarray::Array2;
use rand::Rng;

use crate::ops::{init_uniform, softmax_rows, softmax_rows_backward};
use crate::params::ParamTree;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionLayer {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
}

pub(crate) struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    context: Array2<f64>,
}

impl SelfAttentionLayer {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, width: usize) -> Self {
        SelfAttentionLayer {
            w_q: init_uniform(rng, width, width, width),
            w_k: init_uniform(rng, width, width, width),
            w_v: init_uniform(rng, width, width, width),
            w_o: init_uniform(rng, width, width, width),
        }
    }

    fn scale(&self) -> f64 {
        1.0 / (self.w_q.ncols() as f64).sqrt()
    }

    /// `Y = X + softmax(Q Kᵀ / √d) V W_o`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub(crate) fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let q = x.dot(&self.w_q);
        let k = x.dot(&self.w_k);
        let v = x.dot(&self.w_v);
        let scores = q.dot(&k.t()) * self.scale();
        let attn = softmax_rows(scores.view());
        let context = attn.dot(&v);
        let y = x + &context.dot(&self.w_o);
        let cache = AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            attn,
            context,
        };
        (y, cache)
    }

    /// Accumulates parameter gradients into `grads`, returns d(loss)/dX.
    pub(crate) fn backward(
        &self,
        cache: &AttentionCache,
        dy: &Array2<f64>,
        grads: &mut SelfAttentionLayer,
    ) -> Array2<f64> {
        let scale = self.scale();
        grads.w_o += &cache.context.t().dot(dy);
        let dcontext = dy.dot(&self.w_o.t());
        let dattn = dcontext.dot(&cache.v.t());
        let dv = cache.attn.t().dot(&dcontext);
        let dscores = softmax_rows_backward(&cache.attn, &dattn) * scale;
        let dq = dscores.dot(&cache.k);
        let dk = dscores.t().dot(&cache.q);
        grads.w_q += &cache.x.t().dot(&dq);
        grads.w_k += &cache.x.t().dot(&dk);
        grads.w_v += &cache.x.t().dot(&dv);
        dy + &dq.dot(&self.w_q.t()) + dk.dot(&self.w_k.t()) + dv.dot(&self.w_v.t())
    }
}

impl ParamTree for SelfAttentionLayer {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            ("w_q".into(), &self.w_q),
            ("w_k".into(), &self.w_k),
            ("w_v".into(), &self.w_v),
            ("w_o".into(), &self.w_o),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        vec![
            ("w_q".into(), &mut self.w_q),
            ("w_k".into(), &mut self.w_k),
            ("w_v".into(), &mut self.w_v),
            ("w_o".into(), &mut self.w_o),
        ]
    }
}
