//! Finite-difference checks of every differentiable graph operation and of
//! the composed model, repeated over many seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{grad_check, ForwardMode, GradCheckReport, Graph, ParamId, ParamStore, Var};
use crate::corpus::{EncodedPost, Vocabulary, PAD_ID, RESERVED};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::model::{AuthorInput, Model, ModelConfig};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type CheckFn = fn(u64) -> Result<GradCheckReport>;

/// Name and check of every registered operation, composed model last.
pub fn registry() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("matmul", check_matmul),
        ("transpose", check_transpose),
        ("add_bias", check_add_bias),
        ("add", check_add),
        ("scale", check_scale),
        ("masked_row_softmax", check_masked_softmax),
        ("mean_rows", check_mean_rows),
        ("masked_mean", check_masked_mean),
        ("tanh", check_tanh),
        ("gelu", check_gelu),
        ("gather_rows", check_gather_rows),
        ("softmax_cross_entropy", check_cross_entropy),
        ("layer_norm", check_layer_norm),
        ("slice_cols", check_slice_cols),
        ("concat_cols", check_concat_cols),
        ("stack_rows", check_stack_rows),
        ("reshape", check_reshape),
        ("sum", check_sum),
        ("dropout", check_dropout),
        ("composed_model", check_composed_model),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct OpResult {
    pub name: String,
    pub seeds: usize,
    pub max_rel_error: f64,
    /// Seed with the largest error.
    pub worst_seed: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub ops: Vec<OpResult>,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    pub fn to_table(&self) -> String {
        let width = self.ops.iter().map(|o| o.name.len()).max().unwrap_or(2).max(2);
        let mut out = format!("{:<width$}  {:>5}  {:>12}  result\n", "op", "seeds", "max rel err");
        for o in &self.ops {
            out.push_str(&format!(
                "{:<width$}  {:>5}  {:>12.3e}  {}\n",
                o.name,
                o.seeds,
                o.max_rel_error,
                if o.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Runs every registered check for seeds `first_seed..first_seed + seeds`.
pub fn run_suite(first_seed: u64, seeds: usize) -> Result<SuiteReport> {
    let mut ops = Vec::new();
    for (name, check) in registry() {
        let mut worst = (0.0f64, first_seed);
        for s in first_seed..first_seed + seeds as u64 {
            let r = check(s)?;
            if r.max_rel_error > worst.0 || r.max_rel_error.is_nan() {
                worst = (r.max_rel_error, s);
            }
        }
        ops.push(OpResult {
            name: name.to_string(),
            seeds,
            max_rel_error: worst.0,
            worst_seed: worst.1,
            passed: worst.0 < TOLERANCE,
        });
    }
    let passed = ops.iter().all(|o| o.passed);
    Ok(SuiteReport {
        ops,
        tolerance: TOLERANCE,
        passed,
    })
}

struct Setup {
    rng: ChaCha8Rng,
    store: ParamStore,
    ids: Vec<ParamId>,
}

impl Setup {
    fn new(seed: u64) -> Self {
        Setup {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::new(),
            ids: Vec::new(),
        }
    }

    fn leaf(&mut self, shape: &[usize]) -> ParamId {
        let t = Tensor::uniform(shape, 1.0, &mut self.rng);
        let id = self.store.add(format!("x{}", self.ids.len()), t);
        self.ids.push(id);
        id
    }

    fn probe(&mut self, numel: usize) -> Tensor {
        Tensor::uniform(&[numel, 1], 1.0, &mut self.rng)
    }

    /// Checks `op` after projecting its output onto a random direction, so
    /// every output entry contributes with a distinct weight.
    fn run<F>(mut self, out_numel: usize, mut op: F) -> Result<GradCheckReport>
    where
        F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
    {
        let probe = self.probe(out_numel);
        let ids = self.ids.clone();
        grad_check(
            |g, s| {
                let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
                let y = op(g, &vars)?;
                let row = g.reshape(y, &[1, out_numel])?;
                let w = g.constant(probe.clone());
                g.matmul(row, w)
            },
            &mut self.store,
            &ids,
            STEP,
            TOLERANCE,
        )
    }
}

fn dims(seed: u64) -> (usize, usize, usize) {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32);
    (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5))
}

fn check_matmul(seed: u64) -> Result<GradCheckReport> {
    let (m, k, n) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, k]);
    s.leaf(&[k, n]);
    s.run(m * n, |g, v| g.matmul(v[0], v[1]))
}

fn check_transpose(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(m * n, |g, v| g.transpose(v[0]))
}

fn check_add_bias(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.leaf(&[n]);
    s.run(m * n, |g, v| g.add_bias(v[0], v[1]))
}

fn check_add(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.leaf(&[m, n]);
    s.run(m * n, |g, v| g.add(v[0], v[1]))
}

fn check_scale(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    let factor = s.rng.gen_range(-2.0..2.0);
    s.run(m * n, move |g, v| Ok(g.scale(v[0], factor)))
}

fn check_masked_softmax(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let n = n + 1;
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    // Every row keeps its first column and drops others at random.
    let mask: Vec<bool> = (0..m * n).map(|i| i % n == 0 || s.rng.gen_bool(0.7)).collect();
    s.run(m * n, move |g, v| g.masked_row_softmax(v[0], Some(&mask)))
}

fn check_mean_rows(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(n, |g, v| g.mean_rows(v[0]))
}

fn check_masked_mean(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    let mask: Vec<bool> = (0..m).map(|i| i == 0 || s.rng.gen_bool(0.5)).collect();
    s.run(n, move |g, v| g.masked_mean(v[0], &mask))
}

fn check_tanh(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(m * n, |g, v| Ok(g.tanh(v[0])))
}

fn check_gelu(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(m * n, |g, v| Ok(g.gelu(v[0])))
}

fn check_gather_rows(seed: u64) -> Result<GradCheckReport> {
    let (rows, d, len) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[rows, d]);
    let ids: Vec<usize> = (0..len + 1).map(|_| s.rng.gen_range(0..rows)).collect();
    let out = ids.len() * d;
    s.run(out, move |g, v| g.gather_rows(v[0], &ids))
}

fn check_cross_entropy(seed: u64) -> Result<GradCheckReport> {
    let (n, _, _) = dims(seed);
    let n = n + 1;
    let mut s = Setup::new(seed);
    s.leaf(&[n]);
    let label = s.rng.gen_range(0..n);
    s.run(1, move |g, v| g.softmax_cross_entropy(v[0], label))
}

fn check_layer_norm(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let n = n + 1;
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.leaf(&[n]);
    s.leaf(&[n]);
    s.run(m * n, |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5))
}

fn check_slice_cols(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let n = n + 1;
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    let start = s.rng.gen_range(0..n);
    let len = s.rng.gen_range(1..=n - start);
    s.run(m * len, move |g, v| g.slice_cols(v[0], start, len))
}

fn check_concat_cols(seed: u64) -> Result<GradCheckReport> {
    let (m, a, b) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, a]);
    s.leaf(&[m, b]);
    s.run(m * (a + b), |g, v| g.concat_cols(v))
}

fn check_stack_rows(seed: u64) -> Result<GradCheckReport> {
    let (n, _, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[n]);
    s.leaf(&[n]);
    s.leaf(&[n]);
    s.run(3 * n, |g, v| g.stack_rows(v))
}

fn check_reshape(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(m * n, move |g, v| {
        let flat = g.reshape(v[0], &[m * n])?;
        g.reshape(flat, &[n, m])
    })
}

fn check_sum(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    s.run(1, |g, v| {
        let t = g.tanh(v[0]);
        Ok(g.sum(t))
    })
}

fn check_dropout(seed: u64) -> Result<GradCheckReport> {
    let (m, n, _) = dims(seed);
    let mut s = Setup::new(seed);
    s.leaf(&[m, n]);
    // A fresh RNG with the same seed on every evaluation fixes the mask.
    s.run(m * n, move |g, v| g.dropout(v[0], 0.3, &mut ForwardMode::Train(ChaCha8Rng::seed_from_u64(seed))))
}

/// Toy encoder (width 8, posts of 4 tokens, one layer) → attention head →
/// classifier on an author with three posts.
fn check_composed_model(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::from_tokens((0..6).map(|i| format!("t{i}")));
    let config = ModelConfig {
        encoder: EncoderConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_post_len: 4,
            vocab_size: 0,
            dropout_p: 0.0,
        },
        dropout_p: 0.0,
        ..ModelConfig::default()
    };
    let model = Model::new(config, Some(vocab.clone()), &mut rng)?;
    let posts = (0..3)
        .map(|_| {
            let real = rng.gen_range(1..=4);
            let token_ids = (0..4)
                .map(|i| if i < real { rng.gen_range(RESERVED..vocab.len()) } else { PAD_ID })
                .collect();
            EncodedPost {
                token_ids,
                attention_mask: (0..4).map(|i| u8::from(i < real)).collect(),
            }
        })
        .collect();
    let input = AuthorInput::Posts(posts);
    let label = rng.gen_range(0..2);
    let ids = model.trainable_ids(false);
    let mut store = model.store.clone();
    grad_check(
        |g, s| {
            let out = model.forward_with(s, g, &input, &mut ForwardMode::Eval)?;
            g.softmax_cross_entropy(out.logits, label)
        },
        &mut store,
        &ids,
        STEP,
        TOLERANCE,
    )
}
