//! Classification losses and class-balancing weights.
//!
//! The ordinal variant scales plain cross-entropy by `(1 + w)` where `w` is
//! the ordinal distance between the predicted and true class argmaxes, so a
//! sample misclassified far from its true class costs proportionally more.
//! When the argmaxes agree the two losses coincide.

use crate::data_model::{CollabLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable softmax (max-shifted exponentials).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the maximum element; ties break to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Plain categorical cross-entropy `-ln p[true]` for a one-hot target.
pub fn categorical_cross_entropy(probs: &[f64], true_class: usize) -> f64 {
    -probs[true_class].max(PROB_CLAMP).ln()
}

/// Ordinal distance between the prediction argmax and the true class.
pub fn ordinal_distance(probs: &[f64], true_class: usize) -> usize {
    argmax(probs).abs_diff(true_class)
}

/// Ordinal cross-entropy: `(1 + w) * CE` with `w = |argmax(y) - argmax(p)|`.
pub fn ordinal_cross_entropy(probs: &[f64], true_class: usize) -> f64 {
    let w = ordinal_distance(probs, true_class) as f64;
    (1.0 + w) * categorical_cross_entropy(probs, true_class)
}

/// Which loss a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Oce,
}

impl LossKind {
    pub fn evaluate(self, probs: &[f64], true_class: usize) -> f64 {
        match self {
            LossKind::Ce => categorical_cross_entropy(probs, true_class),
            LossKind::Oce => ordinal_cross_entropy(probs, true_class),
        }
    }

    /// Loss gradient with respect to the logits feeding the softmax.
    ///
    /// For the ordinal loss the weighting `(1 + w)` is treated as a constant
    /// of the current prediction: the argmax is piecewise constant, so its
    /// gradient contribution is zero almost everywhere.
    pub fn logit_gradient(self, logits: &[f64], true_class: usize, sample_weight: f64) -> Vec<f64> {
        let probs = softmax(logits);
        let scale = match self {
            LossKind::Ce => sample_weight,
            LossKind::Oce => sample_weight * (1.0 + ordinal_distance(&probs, true_class) as f64),
        };
        let mut grad = probs;
        grad[true_class] -= 1.0;
        for g in &mut grad {
            *g *= scale;
        }
        grad
    }
}

/// Gradient of the ordinal loss with respect to logits:
/// `sample_weight * (1 + w) * (softmax(logits) - y)`.
pub fn oce_logit_gradient(logits: &[f64], true_class: usize, sample_weight: f64) -> Vec<f64> {
    LossKind::Oce.logit_gradient(logits, true_class, sample_weight)
}

/// Per-class sample weights inversely proportional to class counts:
/// `w_c = N / (C_present * n_c)`, zero for classes absent from `labels`.
///
/// The normalization keeps the weighted loss on the same scale as the
/// unweighted one: weights average to 1 over the samples.
pub fn class_balance_weights(labels: &[CollabLabel]) -> Result<[f64; NUM_CLASSES]> {
    if labels.is_empty() {
        return Err(Error::Config("class balancing needs a non-empty label set".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    let n = labels.len() as f64;
    let mut weights = [0.0; NUM_CLASSES];
    for (w, &c) in weights.iter_mut().zip(counts.iter()) {
        if c > 0 {
            *w = n / (present as f64 * c as f64);
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_uniform_and_stability() {
        let p = softmax(&[0.3; 5]);
        for v in &p {
            assert!((v - 0.2).abs() < 1e-12);
        }
        let huge = softmax(&[1000.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(huge.iter().all(|v| v.is_finite()));
        assert!((huge[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_log_ratios() {
        let logits = [
            1.0f64.ln(),
            2.0f64.ln(),
            3.0f64.ln(),
            4.0f64.ln(),
            10.0f64.ln(),
        ];
        let p = softmax(&logits);
        let expect = [0.05, 0.10, 0.15, 0.20, 0.50];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_worked_values() {
        let onehot = [0.0, 1.0, 0.0, 0.0, 0.0];
        assert!(categorical_cross_entropy(&onehot, 1).abs() < 1e-12);
        let uniform = [0.2; 5];
        assert!((categorical_cross_entropy(&uniform, 3) - 5.0f64.ln()).abs() < 1e-12);
        let p = [0.1, 0.5, 0.2, 0.1, 0.1];
        assert!((categorical_cross_entropy(&p, 0) - 2.302585092994046).abs() < 1e-9);
    }

    #[test]
    fn oce_worked_values() {
        let p = [0.1, 0.2, 0.4, 0.2, 0.1];
        // True class 0, predicted argmax 2: w = 2, loss = 3 * (-ln 0.1).
        assert!((ordinal_cross_entropy(&p, 0) - 6.907755278982137).abs() < 1e-9);
        // True class 2 matches the argmax: w = 0, loss = -ln 0.4.
        assert!((ordinal_cross_entropy(&p, 2) - 0.916290731874155).abs() < 1e-9);
        assert!((ordinal_cross_entropy(&p, 2) - categorical_cross_entropy(&p, 2)).abs() < 1e-12);
    }

    #[test]
    fn oce_dominates_ce_with_integer_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let logits: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
            let p = softmax(&logits);
            let y = rng.random_range(0..5);
            let ce = categorical_cross_entropy(&p, y);
            let oce = ordinal_cross_entropy(&p, y);
            assert!(oce >= ce - 1e-15);
            let ratio = oce / ce;
            let w = ordinal_distance(&p, y) as f64;
            assert!((ratio - (1.0 + w)).abs() < 1e-9);
            assert!((1.0..=5.0).contains(&(ratio.round())));
            if argmax(&p) == y {
                assert!((oce - ce).abs() < 1e-15);
            } else {
                assert!(oce > ce);
            }
        }
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(&[0.3, 0.3, 0.2, 0.1, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.05, 0.05]), 1);
    }

    #[test]
    fn gradient_reduces_to_ce_when_correct() {
        let logits = [2.0, 0.1, -0.3, 0.0, 0.4];
        let g = oce_logit_gradient(&logits, 0, 1.0);
        let p = softmax(&logits);
        for (i, gi) in g.iter().enumerate() {
            let expect = p[i] - if i == 0 { 1.0 } else { 0.0 };
            assert!((gi - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_scales_with_ordinal_distance() {
        let logits = [0.1, 0.0, 2.0, 0.0, 0.1];
        // argmax = 2, true class 0: w = 2, so exactly 3x the CE gradient.
        let oce = oce_logit_gradient(&logits, 0, 1.0);
        let ce = LossKind::Ce.logit_gradient(&logits, 0, 1.0);
        for (a, b) in oce.iter().zip(&ce) {
            assert!((a - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_in_constant_w_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 20 {
            let mut logits: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = softmax(&logits);
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted[0] - sorted[1] < 0.1 {
                continue; // stay away from the argmax boundary
            }
            let y = rng.random_range(0..5);
            let analytic = oce_logit_gradient(&logits, y, 1.0);
            for i in 0..5 {
                let orig = logits[i];
                logits[i] = orig + h;
                let up = ordinal_cross_entropy(&softmax(&logits), y);
                logits[i] = orig - h;
                let down = ordinal_cross_entropy(&softmax(&logits), y);
                logits[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic[i] - numeric) / denom).abs() < 1e-6,
                    "logit {i}: analytic {} vs numeric {}",
                    analytic[i],
                    numeric
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn balance_weights_examples() {
        use CollabLabel::*;
        let balanced: Vec<CollabLabel> = CollabLabel::ALL
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, 10))
            .collect();
        let w = class_balance_weights(&balanced).unwrap();
        for v in w {
            assert!((v - 1.0).abs() < 1e-12);
        }

        // Counts [30, 10, 5, 3, 2] over N = 50 with all five classes present.
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat_n(Effective, 30));
        labels.extend(std::iter::repeat_n(Satisfactory, 10));
        labels.extend(std::iter::repeat_n(Progressing, 5));
        labels.extend(std::iter::repeat_n(NeedsImprovement, 3));
        labels.extend(std::iter::repeat_n(WorkingIndependently, 2));
        let w = class_balance_weights(&labels).unwrap();
        let expect = [1.0 / 3.0, 1.0, 2.0, 10.0 / 3.0, 5.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = labels.iter().map(|l| w[l.index()]).sum();
        assert!((total - 50.0).abs() < 1e-6);
    }

    #[test]
    fn balance_weights_absent_class() {
        use CollabLabel::*;
        let labels = vec![Satisfactory, Satisfactory, Progressing, Progressing];
        let w = class_balance_weights(&labels).unwrap();
        assert_eq!(w[Effective.index()], 0.0);
        assert!((w[Satisfactory.index()] - 1.0).abs() < 1e-12);
        let mean: f64 = labels.iter().map(|l| w[l.index()]).sum::<f64>() / labels.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(class_balance_weights(&[]).is_err());
    }
}
