//! Two-layer classification head: dropout on the author vector, a tanh
//! hidden layer, and two output logits.

use rand::Rng;

use crate::autograd::{softmax, ForwardMode, Graph, ParamId, ParamStore, Var};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug)]
pub struct Classifier {
    dim: usize,
    hidden: usize,
    dropout_p: f64,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        hidden: usize,
        dropout_p: f64,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::Config("classifier widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Config(format!("dropout {dropout_p} outside [0, 1)")));
        }
        Ok(Classifier {
            dim,
            hidden,
            dropout_p,
            w1: store.add("classifier.w1", Tensor::xavier(dim, hidden, rng)),
            b1: store.add("classifier.b1", Tensor::zeros(&[hidden])),
            w2: store.add("classifier.w2", Tensor::xavier(hidden, NUM_CLASSES, rng)),
            b2: store.add("classifier.b2", Tensor::zeros(&[NUM_CLASSES])),
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    /// Logits (length 2) for an author vector of length d.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, v: Var, mode: &mut ForwardMode) -> Result<Var> {
        if g.value(v).numel() != self.dim {
            return Err(Error::dim("classify", g.value(v).shape(), &[self.dim]));
        }
        let v = g.dropout(v, self.dropout_p, mode)?;
        let row = g.reshape(v, &[1, self.dim])?;
        let w1 = g.param(store, self.w1);
        let b1 = g.param(store, self.b1);
        let h = g.matmul(row, w1)?;
        let h = g.add_bias(h, b1)?;
        let h = g.tanh(h);
        let w2 = g.param(store, self.w2);
        let b2 = g.param(store, self.b2);
        let out = g.matmul(h, w2)?;
        let out = g.add_bias(out, b2)?;
        g.reshape(out, &[NUM_CLASSES])
    }

    /// Eval-mode logits and probabilities.
    pub fn classify(&self, store: &ParamStore, v: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.constant(v.clone());
        let logits = self.forward(&mut g, store, x, &mut ForwardMode::Eval)?;
        let logits = g.value(logits).clone();
        let probs = Tensor::vector(softmax(logits.data()));
        Ok((logits, probs))
    }
}

/// Cross-entropy `-log softmax(logits)[label]`, computed without a graph.
pub fn loss(logits: &[f64], label: Label) -> Result<f64> {
    if logits.len() != NUM_CLASSES {
        return Err(Error::dim("loss", &[logits.len()], &[NUM_CLASSES]));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label.index()])
}

/// Arg-max label; an exact tie goes to [`Label::Normal`].
pub fn predict(probs: &[f64]) -> Label {
    if probs[1] > probs[0] {
        Label::Spreader
    } else {
        Label::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classifier(dim: usize, hidden: usize) -> (Classifier, ParamStore) {
        let mut store = ParamStore::new();
        let c = Classifier::new(dim, hidden, 0.1, &mut store, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        (c, store)
    }

    #[test]
    fn zero_weights_give_even_odds() {
        let (c, mut store) = classifier(3, 3);
        for id in c.param_ids() {
            store.get_mut(id).value.fill_zero();
        }
        let (_, probs) = c.classify(&store, &Tensor::vector(vec![1.0, -2.0, 0.5])).unwrap();
        assert_eq!(probs.data(), &[0.5, 0.5]);
    }

    #[test]
    fn hand_computed_forward() {
        let (c, mut store) = classifier(2, 2);
        store.get_mut(c.w1).value = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        store.get_mut(c.b1).value = Tensor::vector(vec![0.0, 0.5]);
        store.get_mut(c.w2).value = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        store.get_mut(c.b2).value = Tensor::vector(vec![0.0, -0.25]);
        let (logits, probs) = c.classify(&store, &Tensor::vector(vec![1.0, 0.0])).unwrap();
        // h = tanh([1, -1] + [0, 0.5]) = [tanh 1, tanh -0.5]
        let h0 = 1f64.tanh();
        let h1 = (-0.5f64).tanh();
        let z = [2.0 * h0, h1 - 0.25];
        assert!((logits.data()[0] - z[0]).abs() < 1e-15);
        assert!((logits.data()[1] - z[1]).abs() < 1e-15);
        let p0 = z[0].exp() / (z[0].exp() + z[1].exp());
        assert!((probs.data()[0] - p0).abs() < 1e-15);
        assert!((probs.data()[1] - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn eval_is_deterministic() {
        let (c, store) = classifier(4, 4);
        let v = Tensor::vector(vec![0.1, 0.2, -0.3, 0.9]);
        assert_eq!(c.classify(&store, &v).unwrap(), c.classify(&store, &v).unwrap());
    }

    #[test]
    fn width_mismatch() {
        let (c, store) = classifier(4, 4);
        assert!(matches!(
            c.classify(&store, &Tensor::vector(vec![1.0; 3])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        assert!((loss(&[0.0, 0.0], Label::Spreader).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(loss(&[20.0, -20.0], Label::Normal).unwrap() < 1e-15);
        assert!(loss(&[20.0, -20.0], Label::Normal).unwrap() >= 0.0);
        assert!(Label::from_index(2).is_err());
    }

    #[test]
    fn loss_matches_graph_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let logits = vec![rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)];
            for label in [Label::Normal, Label::Spreader] {
                let mut g = Graph::new();
                let l = g.constant(Tensor::vector(logits.clone()));
                let ce = g.softmax_cross_entropy(l, label.index()).unwrap();
                assert_eq!(g.value(ce).data()[0], loss(&logits, label).unwrap());
            }
        }
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.9, 0.1]), Label::Normal);
        assert_eq!(predict(&[0.1, 0.9]), Label::Spreader);
        assert_eq!(predict(&[0.5, 0.5]), Label::Normal);
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = Classifier::new(4, 4, 0.0, &mut store, &mut rng).unwrap();
        let v = store.add("v", Tensor::uniform(&[4], 1.0, &mut rng));
        let mut ids = c.param_ids();
        ids.push(v);
        let report = grad_check(
            |g, s| {
                let x = g.param(s, v);
                let logits = c.forward(g, s, x, &mut ForwardMode::Eval)?;
                g.softmax_cross_entropy(logits, 1)
            },
            &mut store,
            &ids,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:#?}");
    }

    proptest! {
        #[test]
        fn probabilities_are_normalized(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let p = softmax(&[a, b]);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn predict_invariant_under_monotone_maps(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let base = predict(&softmax(&[a, b]));
            let cubed = predict(&softmax(&[a.powi(3) / 1000.0, b.powi(3) / 1000.0]));
            let shifted = predict(&softmax(&[2.0 * a + 7.0, 2.0 * b + 7.0]));
            prop_assert_eq!(base, cubed);
            prop_assert_eq!(base, shifted);
        }
    }
}
