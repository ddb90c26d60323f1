//! Spread of importance scores: relative variance, closed-form moment
//! predictions for Gaussian filters, and per-layer magnitude profiles.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::similarity::ScoreTable;
use crate::stats::{mean, sample_variance};
use crate::tensor_store::NetworkDump;

/// `Γ((d+1)/2) / Γ(d/2)`, the mean of a chi variable with `d` degrees of
/// freedom divided by √2.
pub fn gamma_ratio(d: f64) -> f64 {
    (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Sample variance over sample mean.
pub fn var_r(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: scores.len(),
        });
    }
    let m = mean(scores);
    if !(m > 0.0) {
        return Err(Error::NonPositiveMean { mean: m });
    }
    Ok(sample_variance(scores) / m)
}

/// `(1 - 2/π) / √(2/π)`: Var_r of ℓ1 scores per unit σ.
pub fn l1_var_r_constant() -> f64 {
    let two_over_pi = 2.0 / std::f64::consts::PI;
    (1.0 - two_over_pi) / two_over_pi.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub criterion: Criterion,
    pub mean: f64,
    pub variance: f64,
    pub sigma: f64,
    pub dim: usize,
}

fn check_sigma_dim(sigma: f64, d: usize) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "moment prediction needs sigma > 0 and d >= 1, got sigma={sigma}, d={d}"
        )));
    }
    Ok(())
}

/// Mean and variance of the score of a filter with i.i.d. N(0, σ²) entries.
pub fn predict_moments(criterion: Criterion, sigma: f64, d: usize) -> Result<MomentPrediction> {
    check_sigma_dim(sigma, d)?;
    let df = d as f64;
    let two_over_pi = 2.0 / std::f64::consts::PI;
    let (mean, variance) = match criterion {
        Criterion::L1 => (two_over_pi.sqrt() * sigma * df, (1.0 - two_over_pi) * sigma * sigma * df),
        Criterion::L2 | Criterion::Fermat => (
            std::f64::consts::SQRT_2 * sigma * gamma_ratio(df),
            sigma * sigma / 2.0,
        ),
        other => {
            return Err(Error::InvalidParameter(format!(
                "no moment prediction for criterion {other}"
            )))
        }
    };
    Ok(MomentPrediction {
        criterion,
        mean,
        variance,
        sigma,
        dim: d,
    })
}

/// Predicted Var_r (variance over mean) of the scores.
pub fn predict_var_r(criterion: Criterion, sigma: f64, d: usize) -> Result<f64> {
    check_sigma_dim(sigma, d)?;
    match criterion {
        Criterion::L1 => Ok(sigma * l1_var_r_constant()),
        Criterion::L2 | Criterion::Fermat => {
            Ok(sigma / (2.0 * std::f64::consts::SQRT_2 * gamma_ratio(d as f64)))
        }
        other => Err(Error::InvalidParameter(format!(
            "no Var_r prediction for criterion {other}"
        ))),
    }
}

/// Second-order estimates of `(E[ℓ1/ℓ2], E[ℓ2/ℓ1])` for a Gaussian filter of
/// dimension `d`; σ cancels.
pub fn predicted_slopes(d: usize) -> Result<(f64, f64)> {
    let p1 = predict_moments(Criterion::L1, 1.0, d)?;
    let p2 = predict_moments(Criterion::L2, 1.0, d)?;
    let (m1, v1, m2, v2) = (p1.mean, p1.variance, p2.mean, p2.variance);
    Ok((m1 / m2 + v2 * m1 / m2.powi(3), m2 / m1 + v1 * m2 / m1.powi(3)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeEntry {
    pub criterion: Criterion,
    pub mean: f64,
    pub var_r: f64,
    pub predicted_mean: Option<f64>,
    pub predicted_var_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMagnitude {
    pub layer: String,
    pub dim: usize,
    pub sigma: f64,
    pub entries: Vec<MagnitudeEntry>,
}

/// Standard deviation of all weights of a layer pooled together.
pub fn pooled_sigma(weights: &[f32]) -> f64 {
    let v: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
    sample_variance(&v).sqrt()
}

pub fn magnitude_profile(dump: &NetworkDump, table: Option<&ScoreTable>) -> Result<Vec<LayerMagnitude>> {
    dump.layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let dim = layer.dim();
            let sigma = pooled_sigma(layer.filters.data());
            let mut entries = Vec::new();
            if let Some(t) = table {
                for (c, &criterion) in t.criteria.iter().enumerate() {
                    let scores = t.layer_scores(c, l);
                    let var = var_r(scores).map_err(|e| e.in_layer(&layer.name))?;
                    let predictable = matches!(criterion, Criterion::L1 | Criterion::L2 | Criterion::Fermat)
                        && sigma > 0.0;
                    let (predicted_mean, predicted_var_r) = if predictable {
                        (
                            Some(predict_moments(criterion, sigma, dim)?.mean),
                            Some(predict_var_r(criterion, sigma, dim)?),
                        )
                    } else {
                        (None, None)
                    };
                    entries.push(MagnitudeEntry {
                        criterion,
                        mean: mean(scores),
                        var_r: var,
                        predicted_mean,
                        predicted_var_r,
                    });
                }
            }
            Ok(LayerMagnitude {
                layer: layer.name.clone(),
                dim,
                sigma,
                entries,
            })
        })
        .collect()
}
