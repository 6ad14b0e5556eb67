//! Symmetric in-batch InfoNCE alignment between trigger and target items.

use crate::error::{Error, Result};
use crate::numeric::{cosine_with_grad, Matrix};

/// Row indices of paired trigger and target items inside a concatenated
/// batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub triggers: Vec<usize>,
    pub targets: Vec<usize>,
}

impl PairBatch {
    pub fn new(triggers: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        if triggers.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} triggers vs {} targets",
                triggers.len(),
                targets.len()
            )));
        }
        Ok(Self { triggers, targets })
    }

    pub fn len(&self) -> usize {
        self.triggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct InfoNceLoss {
    pub value: f64,
    pub grad_triggers: Matrix,
    pub grad_targets: Matrix,
}

fn log_softmax_grad(logits: &[f64], positive: usize, out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - lse).exp();
    }
    out[positive] -= 1.0;
    lse - logits[positive]
}

/// Mean of the trigger->target and target->trigger cross-entropies over
/// cosine logits divided by `temperature`; row `b` of each side is the other
/// side's positive.
pub fn infonce_loss(triggers: &Matrix, targets: &Matrix, temperature: f64) -> Result<InfoNceLoss> {
    triggers.check_same_shape(targets, "infonce")?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let b = triggers.rows();
    let d = triggers.cols();
    let mut grad_triggers = Matrix::zeros(b, d);
    let mut grad_targets = Matrix::zeros(b, d);
    if b == 0 {
        return Err(Error::Data("infonce over an empty batch".into()));
    }

    // cos[i][j] = cos(trigger_i, target_j) with its two partial gradients
    let mut cos = Matrix::zeros(b, b);
    let mut dcos_tr = vec![Vec::new(); b * b];
    let mut dcos_ta = vec![Vec::new(); b * b];
    for i in 0..b {
        for j in 0..b {
            let (c, gi, gj) = cosine_with_grad(triggers.row(i), targets.row(j))
                .ok_or_else(|| Error::Numeric(format!("zero-norm embedding in pair ({i}, {j})")))?;
            cos[(i, j)] = c;
            dcos_tr[i * b + j] = gi;
            dcos_ta[i * b + j] = gj;
        }
    }

    let inv_t = 1.0 / temperature;
    let mut dlogits = Matrix::zeros(b, b);
    let mut total = 0.0;
    let mut scratch = vec![0.0; b];
    let mut logits = vec![0.0; b];
    let w = 0.5 / b as f64;
    for i in 0..b {
        for j in 0..b {
            logits[j] = cos[(i, j)] * inv_t;
        }
        total += log_softmax_grad(&logits, i, &mut scratch);
        for j in 0..b {
            dlogits[(i, j)] += w * scratch[j];
        }
    }
    for j in 0..b {
        for i in 0..b {
            logits[i] = cos[(i, j)] * inv_t;
        }
        total += log_softmax_grad(&logits, j, &mut scratch);
        for i in 0..b {
            dlogits[(i, j)] += w * scratch[i];
        }
    }

    for i in 0..b {
        for j in 0..b {
            let g = dlogits[(i, j)] * inv_t;
            if g == 0.0 {
                continue;
            }
            for (o, v) in grad_triggers.row_mut(i).iter_mut().zip(&dcos_tr[i * b + j]) {
                *o += g * v;
            }
            for (o, v) in grad_targets.row_mut(j).iter_mut().zip(&dcos_ta[i * b + j]) {
                *o += g * v;
            }
        }
    }

    Ok(InfoNceLoss {
        value: total * w,
        grad_triggers,
        grad_targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_is_zero() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![-3.0, 0.5]]).unwrap();
        let loss = infonce_loss(&a, &b, 0.07).unwrap();
        assert_eq!(loss.value, 0.0);
        assert!(loss.grad_triggers.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_logits_give_ln_b() {
        let rows = vec![vec![1.0, 1.0]; 5];
        let a = Matrix::from_rows(&rows).unwrap();
        let loss = infonce_loss(&a, &a, 0.3).unwrap();
        assert!((loss.value - (5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn two_orthonormal_aligned_pairs() {
        let a = Matrix::identity(2);
        let loss = infonce_loss(&a, &a, 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((loss.value - expected).abs() < 1e-12);
        assert!((expected - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        let a = Matrix::identity(2);
        assert!(infonce_loss(&a, &Matrix::zeros(2, 2), 1.0).is_err());
        assert!(infonce_loss(&a, &a, 0.0).is_err());
        assert!(infonce_loss(&a, &Matrix::zeros(3, 2), 1.0).is_err());
        assert!(PairBatch::new(vec![0, 1], vec![2]).is_err());
    }
}
