//! Adam with bias correction.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
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
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "adam needs lr >= 0, 0 <= beta1, beta2 < 1, eps > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new<'a, T: Scalar>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (alloc::vec![0.0; p.numel()], alloc::vec![0.0; p.numel()]))
            .unzip();
        Self {
            first_moment: m,
            second_moment: v,
            step_count: 0,
        }
    }
}

/// One Adam update. `grads[i]` pairs with the `i`-th parameter; `names`
/// are used only to identify a parameter with a non-finite gradient.
///
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Tensor<T>>,
    grads: &[&[T]],
    names: &[&str],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    cfg.validate()?;
    let mut params: Vec<&mut Tensor<T>> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape {
            op: "adam_step",
            detail: format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || state.first_moment[i].len() != g.len() {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!(
                    "parameter {} has {} values but gradient has {}",
                    name_of(names, i),
                    p.numel(),
                    g.len()
                ),
            });
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} at index {j}",
                name_of(names, i)
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - Float::powi(cfg.beta1, t);
    let bc2 = 1.0 - Float::powi(cfg.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first_moment[i], &mut state.second_moment[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j].widen();
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w = T::of(w.widen() - cfg.lr * m_hat / (Float::sqrt(v_hat) + cfg.eps));
        }
    }
    Ok(())
}

fn name_of(names: &[&str], i: usize) -> alloc::string::String {
    names
        .get(i)
        .map_or_else(|| format!("#{i}"), |n| alloc::string::String::from(*n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(&[1], alloc::vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_moments() {
        let mut p = scalar(0.3);
        let mut st = AdamState::new([&p]);
        adam_step([&mut p], &[&[0.0]], &["w"], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[0.3]);
        assert_eq!(st.first_moment[0], [0.0]);
        assert_eq!(st.second_moment[0], [0.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        adam_step([&mut p], &[&[1.0]], &["w"], &mut st, &AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr·1/(1 + eps)
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-15, "{}", p.data()[0]);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new([&p]);
        let mut prev = 1.0;
        for _ in 0..2 {
            adam_step(
                [&mut p],
                &[&[-0.5]],
                &["w"],
                &mut st,
                &AdamConfig::default(),
            )
            .unwrap();
            assert!(p.data()[0] > prev);
            prev = p.data()[0];
        }
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = scalar(0.0);
        let mut b = scalar(0.0);
        let mut st = AdamState::new([&a, &b]);
        let err = adam_step(
            [&mut a, &mut b],
            &[&[0.0], &[f64::NAN]],
            &["enc.w", "dec.w"],
            &mut st,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(&err, Error::NonFinite(m) if m.contains("dec.w")));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AdamConfig {
            eps: 0.0,
            ..AdamConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
