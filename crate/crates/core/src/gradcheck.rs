//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs in `f64`. A coordinate whose `±step` evaluations take a different
//! piecewise branch (ReLU sign or clamp region) than the base point is
//! reported as skipped: central differences are meaningless across a kink.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::{forward_loss, BoundParams, ModelConfig, OutputActivation, VaeParams};
use crate::rng;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    /// Denominator floor for the relative error, so two gradients that are
    /// both numerically zero compare equal.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            rel_tol: 1e-3,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.failures == 0 && p.checked > 0)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `build`'s scalar output with central
/// differences, coordinate by coordinate, for every named input.
pub fn check<F>(
    inputs: &[(String, Tensor<f64>)],
    cfg: GradCheckConfig,
    build: F,
) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok((g.value(out).item()?, g.kink_signature()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss)?;
    let base_sig = g.kink_signature();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradReport::default();
    for (i, (name, _)) in inputs.iter().enumerate() {
        let mut pr = ParamReport {
            name: name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            failures: 0,
        };
        for j in 0..values[i].numel() {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + cfg.step;
            let (plus, sig_p) = eval(&values)?;
            values[i].data_mut()[j] = orig - cfg.step;
            let (minus, sig_m) = eval(&values)?;
            values[i].data_mut()[j] = orig;
            if sig_p != base_sig || sig_m != base_sig {
                pr.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(analytic[i][j], numeric, cfg.abs_floor);
            pr.checked += 1;
            if err > cfg.rel_tol {
                pr.failures += 1;
            }
            if err > pr.max_rel_err {
                pr.max_rel_err = err;
                pr.worst_index = j;
            }
        }
        report.params.push(pr);
    }
    Ok(report)
}

/// Toy configuration for checking the full model: 8³ input, 8 channels, k = 4.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        input_extent: [8, 8, 8],
        conv_channels: 8,
        bottleneck_width: 16,
        latent_dim: 4,
        decoder_channels: 8,
        padding: 1,
        output_activation: OutputActivation::Softplus,
    }
}

/// Checks every parameter of the full loss (`rec + β·KL`, with fixed
/// reparameterization noise) on random inputs in `[0, 1)`.
pub fn check_vae(
    model: &ModelConfig,
    batch: usize,
    beta: f64,
    seed: u64,
    cfg: GradCheckConfig,
) -> Result<GradReport> {
    let mut r = rng::seeded(seed, rng::stream::INIT);
    let params = VaeParams::<f64>::init(model, &mut r)?;
    let [t, h, w] = model.input_extent;
    let x = Tensor::from_fn(&[batch, 1, t, h, w], |_| r.random::<f64>());
    let noise = Tensor::from_fn(&[batch, model.latent_dim], |_| {
        r.sample::<f64, _>(StandardNormal)
    });
    let inputs: Vec<(String, Tensor<f64>)> = params.named().map(|(n, t)| (n, t.clone())).collect();
    check(&inputs, cfg, |g, vars| {
        let p = BoundParams::from_vars(vars);
        let xv = g.constant(x.clone());
        Ok(forward_loss(g, &p, model, xv, &noise, beta)?.total)
    })
}
