use serde::{Deserialize, Serialize};

use super::param::Parameter;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Applies one bias-corrected Adam update to every parameter and resets the
/// gradients. `step` is 1-based.
///
/// All gradients are checked before anything is mutated, so a non-finite
/// gradient leaves the parameters untouched.
pub fn adam_step<'a, I>(params: I, config: &AdamConfig, step: u64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Parameter>,
{
    if step == 0 {
        return Err(Error::State("adam step counter must start at 1".into()));
    }
    let params: Vec<&mut Parameter> = params.into_iter().collect();
    for p in &params {
        if !p.gradient.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in parameter {}", p.name())));
        }
    }
    let bc1 = 1.0 - config.beta1.powi(step as i32);
    let bc2 = 1.0 - config.beta2.powi(step as i32);
    for p in params {
        let Parameter {
            value,
            gradient,
            moment1,
            moment2,
            ..
        } = p;
        let it = value
            .data_mut()
            .iter_mut()
            .zip(gradient.data_mut())
            .zip(moment1.data_mut().iter_mut().zip(moment2.data_mut()));
        for ((v, g), (m, s)) in it {
            *m = config.beta1 * *m + (1.0 - config.beta1) * *g;
            *s = config.beta2 * *s + (1.0 - config.beta2) * *g * *g;
            let m_hat = *m / bc1;
            let s_hat = *s / bc2;
            *v -= config.lr * m_hat / (s_hat.sqrt() + config.eps);
            *g = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Matrix;

    fn scalar(v: f64) -> Parameter {
        Parameter::new("p", Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_is_identity_on_values() {
        let mut p = Parameter::new("w", Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let before = p.value.clone();
        for step in 1..=5 {
            adam_step([&mut p], &AdamConfig::default(), step).unwrap();
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.02] {
            let mut p = scalar(1.0);
            p.gradient.data_mut()[0] = g;
            adam_step([&mut p], &cfg, 1).unwrap();
            let delta = p.value.data()[0] - 1.0;
            assert!((delta + cfg.lr * f64::signum(g)).abs() < 1e-8, "g={g} delta={delta}");
            assert_eq!(p.gradient.data()[0], 0.0);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(1.0);
        p.gradient.data_mut()[0] = f64::NAN;
        let err = adam_step([&mut p], &AdamConfig::default(), 1).unwrap_err();
        assert!(err.to_string().contains("parameter p"));
        assert_eq!(p.value.data()[0], 1.0);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut p = scalar(0.3);
            for step in 1..=50 {
                let v = p.value.data()[0];
                p.gradient.data_mut()[0] = 2.0 * (v - 1.5) + (step as f64).sin() * 0.1;
                adam_step([&mut p], &AdamConfig::default(), step).unwrap();
            }
            p.value.data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
