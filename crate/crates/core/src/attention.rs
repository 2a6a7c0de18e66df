//! Post-level attention pooling.
//!
//! The post matrix `Hp` (n×d) is projected to `Hap = Hp·Wap + b`, posts attend
//! to the projected profile through `A = softmax(Hp·Hapᵀ)` (row-wise, no
//! temperature), and the attended profile `A·Hap` is averaged over its rows
//! into a single author vector. Column means of `A` give one weight per post.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    Attention,
    /// Plain mean over posts; the attention ablation.
    Mean,
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(PoolingMode::Attention),
            "mean" => Ok(PoolingMode::Mean),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttentionHead {
    dim: usize,
    pub wap: ParamId,
    pub bias: ParamId,
}

/// Graph handles produced by [`AttentionHead::forward`].
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub author_vector: Var,
    /// n×n attention matrix; absent in mean mode.
    pub attention: Option<Var>,
}

/// Evaluated attention pooling for one author.
#[derive(Clone, Debug, PartialEq)]
pub struct AttendedProfile {
    pub author_vector: Tensor,
    pub attention: Option<Tensor>,
    pub post_weights: Option<Tensor>,
}

impl AttentionHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        // the logits are unscaled, so shrink the projection by 1/√d to start
        // with unit-variance scores instead of a saturated softmax
        let mut wap = Tensor::xavier(dim, dim, rng);
        let shrink = 1.0 / (dim as f64).sqrt();
        wap.data_mut().iter_mut().for_each(|w| *w *= shrink);
        let wap = store.add("head.wap", wap);
        let bias = store.add("head.bias", Tensor::zeros(&[dim]));
        AttentionHead { dim, wap, bias }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.wap, self.bias]
    }

    /// `Hap = Hp·Wap + b`.
    pub fn project(&self, g: &mut Graph, store: &ParamStore, hp: Var) -> Result<Var> {
        let width = g.value(hp).dims2().1;
        if width != self.dim {
            return Err(Error::dim("project", g.value(hp).shape(), &[self.dim, self.dim]));
        }
        let w = g.param(store, self.wap);
        let b = g.param(store, self.bias);
        let hap = g.matmul(hp, w)?;
        g.add_bias(hap, b)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, hp: Var, mode: PoolingMode) -> Result<HeadOutput> {
        match mode {
            PoolingMode::Mean => Ok(HeadOutput {
                author_vector: mean_pool_profile(g, hp)?,
                attention: None,
            }),
            PoolingMode::Attention => {
                let hap = self.project(g, store, hp)?;
                let (attended, a) = attend(g, hp, hap)?;
                Ok(HeadOutput {
                    author_vector: reduce(g, attended)?,
                    attention: Some(a),
                })
            }
        }
    }

    /// Eval-mode pooling of a fixed post matrix.
    pub fn attend_profile(&self, store: &ParamStore, hp: &Tensor, mode: PoolingMode) -> Result<AttendedProfile> {
        let mut g = Graph::new();
        let hp = g.constant(hp.clone());
        let out = self.forward(&mut g, store, hp, mode)?;
        let attention = out.attention.map(|a| g.value(a).clone());
        Ok(AttendedProfile {
            author_vector: g.value(out.author_vector).clone(),
            post_weights: attention.as_ref().map(post_weights),
            attention,
        })
    }
}

/// Returns `(A·Hap, A)` with `A = softmax(Hp·Hapᵀ)`.
pub fn attend(g: &mut Graph, hp: Var, hap: Var) -> Result<(Var, Var)> {
    if g.value(hp).shape() != g.value(hap).shape() {
        return Err(Error::dim("attend", g.value(hp).shape(), g.value(hap).shape()));
    }
    let hap_t = g.transpose(hap)?;
    let scores = g.matmul(hp, hap_t)?;
    let a = g.masked_row_softmax(scores, None)?;
    let attended = g.matmul(a, hap)?;
    Ok((attended, a))
}

/// Row mean of the attended profile.
pub fn reduce(g: &mut Graph, attended: Var) -> Result<Var> {
    g.mean_rows(attended)
}

pub fn mean_pool_profile(g: &mut Graph, hp: Var) -> Result<Var> {
    g.mean_rows(hp)
}

/// Attention received by each post: `w[j] = (1/n) Σᵢ A[i][j]`.
pub fn post_weights(a: &Tensor) -> Tensor {
    let (n, cols) = a.dims2();
    let mut w = vec![0.0; cols];
    for row in a.rows() {
        for (acc, v) in w.iter_mut().zip(row) {
            *acc += v;
        }
    }
    w.iter_mut().for_each(|v| *v /= n as f64);
    Tensor::vector(w)
}
