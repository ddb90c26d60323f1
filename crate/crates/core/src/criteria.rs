//! Per-filter importance scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometric_median::{geometric_median, GmOptions};
use crate::matrix::{distance_rows, l1_norm, l2_norm, FilterMatrix};
use crate::par;
use crate::tensor_store::{flatten_filters, LayerRecord, NetworkDump, TensorRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    L1,
    L2,
    GM,
    Fermat,
    BNGamma,
    BNBeta,
    TaylorL1,
    TaylorL2,
    Entropy,
    APoZ,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Criterion::L1,
        Criterion::L2,
        Criterion::GM,
        Criterion::Fermat,
        Criterion::BNGamma,
        Criterion::BNBeta,
        Criterion::TaylorL1,
        Criterion::TaylorL2,
        Criterion::Entropy,
        Criterion::APoZ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::L1 => "L1",
            Criterion::L2 => "L2",
            Criterion::GM => "GM",
            Criterion::Fermat => "Fermat",
            Criterion::BNGamma => "BNGamma",
            Criterion::BNBeta => "BNBeta",
            Criterion::TaylorL1 => "TaylorL1",
            Criterion::TaylorL2 => "TaylorL2",
            Criterion::Entropy => "Entropy",
            Criterion::APoZ => "APoZ",
        }
    }

    /// Criteria computed from the filter weights alone.
    pub fn weight_only(self) -> bool {
        matches!(self, Criterion::L1 | Criterion::L2 | Criterion::GM | Criterion::Fermat)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCriterion(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionParams {
    pub entropy_bins: usize,
    pub apoz_sigma: f64,
    pub gm_rel_tol: f64,
    pub gm_max_iter: usize,
}

impl Default for CriterionParams {
    fn default() -> Self {
        CriterionParams {
            entropy_bins: 100,
            apoz_sigma: 1e-4,
            gm_rel_tol: 1e-9,
            gm_max_iter: 10_000,
        }
    }
}

impl CriterionParams {
    pub fn gm_options(&self) -> GmOptions {
        GmOptions {
            rel_tol: self.gm_rel_tol,
            max_iter: self.gm_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub layer: String,
    pub criterion: Criterion,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    fn new(layer: &LayerRecord, criterion: Criterion, scores: Vec<f64>) -> Self {
        ScoreVector {
            layer: layer.name.clone(),
            criterion,
            scores,
        }
    }
}

pub fn norm_score(layer: &LayerRecord, p: u8) -> Result<ScoreVector> {
    let (criterion, norm): (_, fn(&[f32]) -> f64) = match p {
        1 => (Criterion::L1, l1_norm::<f32>),
        2 => (Criterion::L2, l2_norm::<f32>),
        _ => return Err(Error::InvalidParameter(format!("norm order must be 1 or 2, got {p}"))),
    };
    let scores = (0..layer.n_out()).map(|j| norm(layer.filter(j))).collect();
    Ok(ScoreVector::new(layer, criterion, scores))
}

/// Distance of every filter to the geometric median of the layer.
pub fn fermat_score(layer: &LayerRecord, opts: GmOptions) -> Result<ScoreVector> {
    require_two(layer)?;
    let f = flatten_filters(layer);
    let median = geometric_median(&f, opts)?;
    let scores = (0..f.rows())
        .map(|j| crate::matrix::distance(f.row(j), &median))
        .collect();
    Ok(ScoreVector::new(layer, Criterion::Fermat, scores))
}

/// Sum of distances from every filter to all filters of the layer.
pub fn gm_score(layer: &LayerRecord) -> Result<ScoreVector> {
    require_two(layer)?;
    let f = flatten_filters(layer);
    Ok(ScoreVector::new(layer, Criterion::GM, pairwise_distance_sums(&f)))
}

pub fn pairwise_distance_sums(f: &FilterMatrix) -> Vec<f64> {
    let n = f.rows();
    let upper = par::map_range(n, |i| {
        (i + 1..n)
            .map(|j| distance_rows(f.row(i), f.row(j)))
            .collect::<Vec<_>>()
    });
    let mut sums = vec![0.0; n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &dist) in row.iter().enumerate() {
            sums[i] += dist;
            sums[i + 1 + off] += dist;
        }
    }
    sums
}

fn require_two(layer: &LayerRecord) -> Result<()> {
    if layer.n_out() < 2 {
        return Err(Error::InvalidParameter(format!(
            "layer `{}` needs at least 2 filters for a distance criterion",
            layer.name
        )));
    }
    Ok(())
}

pub fn bn_score(layer: &LayerRecord, role: TensorRole) -> Result<ScoreVector> {
    let criterion = match role {
        TensorRole::BnGamma => Criterion::BNGamma,
        TensorRole::BnBeta => Criterion::BNBeta,
        other => {
            return Err(Error::InvalidParameter(format!(
                "bn_score takes bn_gamma or bn_beta, got {other}"
            )))
        }
    };
    let t = layer.require(role)?;
    let scores = t.data().iter().map(|&v| (v as f64).abs()).collect();
    Ok(ScoreVector::new(layer, criterion, scores))
}

/// Norm of the elementwise product gradient * filter.
pub fn taylor_score(layer: &LayerRecord, p: u8) -> Result<ScoreVector> {
    let criterion = match p {
        1 => Criterion::TaylorL1,
        2 => Criterion::TaylorL2,
        _ => return Err(Error::InvalidParameter(format!("norm order must be 1 or 2, got {p}"))),
    };
    let grads = layer.require(TensorRole::Grads)?;
    if grads.shape() != layer.filters.shape() {
        return Err(Error::ShapeMismatch {
            tensor: format!("{}.grads", layer.name),
            detail: format!("{:?} vs filters {:?}", grads.shape(), layer.filters.shape()),
        });
    }
    let d = layer.dim();
    let scores = (0..layer.n_out())
        .map(|j| {
            let prod = layer
                .filter(j)
                .iter()
                .zip(&grads.data()[j * d..(j + 1) * d])
                .map(|(&w, &g)| w as f64 * g as f64);
            if p == 1 {
                prod.map(f64::abs).sum()
            } else {
                prod.map(|v| v * v).sum::<f64>().sqrt()
            }
        })
        .collect();
    Ok(ScoreVector::new(layer, criterion, scores))
}

/// Histogram entropy of each column of the GAP matrix.
pub fn entropy_score(layer: &LayerRecord, bins: usize) -> Result<ScoreVector> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("entropy needs at least 2 bins, got {bins}")));
    }
    let gap = layer.require(TensorRole::GapMatrix)?;
    let (rows, cols) = (gap.shape()[0], gap.shape()[1]);
    let scores = (0..cols)
        .map(|j| {
            let column: Vec<f64> = (0..rows).map(|i| gap.data()[i * cols + j] as f64).collect();
            histogram_entropy(&column, bins)
        })
        .collect();
    Ok(ScoreVector::new(layer, Criterion::Entropy, scores))
}

/// Entropy (natural log) of `values` binned into `bins` equal-width bins over
/// their range; 0 for a constant sample.
pub fn histogram_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || hi <= lo {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Fraction of activations above the threshold, as exported per filter.
pub fn apoz_score(layer: &LayerRecord) -> Result<ScoreVector> {
    let t = layer.require(TensorRole::NonzeroFraction)?;
    let scores = t.data().iter().map(|&v| v as f64).collect();
    Ok(ScoreVector::new(layer, Criterion::APoZ, scores))
}

/// Per-filter fraction of entries with `|a| > sigma` in an activation matrix
/// laid out `[samples, n_out]`.
pub fn nonzero_fraction(activations: &[f64], n_out: usize, sigma: f64) -> Result<Vec<f64>> {
    if n_out == 0 || activations.is_empty() || activations.len() % n_out != 0 {
        return Err(Error::ShapeMismatch {
            tensor: "activations".into(),
            detail: format!("{} values do not form rows of {n_out}", activations.len()),
        });
    }
    let rows = activations.len() / n_out;
    Ok((0..n_out)
        .map(|j| {
            let hits = (0..rows)
                .filter(|&i| activations[i * n_out + j].abs() > sigma)
                .count();
            hits as f64 / rows as f64
        })
        .collect())
}

/// Rejects a sigma that disagrees with the threshold recorded by the exporter.
pub fn check_apoz_sigma(dump: &NetworkDump, sigma: f64) -> Result<()> {
    let Some(recorded) = dump.meta.get("apoz_sigma") else {
        return Ok(());
    };
    let value: f64 = recorded
        .parse()
        .map_err(|_| Error::InvalidDump(format!("meta apoz_sigma `{recorded}` is not a number")))?;
    if (value - sigma).abs() > 1e-12 * value.abs().max(sigma.abs()) {
        return Err(Error::InvalidParameter(format!(
            "APoZ sigma {sigma} differs from the dump's recorded threshold {value}"
        )));
    }
    Ok(())
}

pub fn score_layer(layer: &LayerRecord, criterion: Criterion, params: &CriterionParams) -> Result<ScoreVector> {
    match criterion {
        Criterion::L1 => norm_score(layer, 1),
        Criterion::L2 => norm_score(layer, 2),
        Criterion::GM => gm_score(layer),
        Criterion::Fermat => fermat_score(layer, params.gm_options()),
        Criterion::BNGamma => bn_score(layer, TensorRole::BnGamma),
        Criterion::BNBeta => bn_score(layer, TensorRole::BnBeta),
        Criterion::TaylorL1 => taylor_score(layer, 1),
        Criterion::TaylorL2 => taylor_score(layer, 2),
        Criterion::Entropy => entropy_score(layer, params.entropy_bins),
        Criterion::APoZ => apoz_score(layer),
    }
}

/// Dispatch by identifier string.
pub fn score_layer_named(layer: &LayerRecord, criterion: &str, params: &CriterionParams) -> Result<ScoreVector> {
    score_layer(layer, criterion.parse()?, params)
}

/// Scores of every layer for one criterion, in layer order.
pub fn score_dump(dump: &NetworkDump, criterion: Criterion, params: &CriterionParams) -> Result<Vec<ScoreVector>> {
    if criterion == Criterion::APoZ {
        check_apoz_sigma(dump, params.apoz_sigma)?;
    }
    par::try_map_slice(&dump.layers, |layer| {
        score_layer(layer, criterion, params).map_err(|e| e.in_layer(&layer.name))
    })
}

/// Indices of the `k` smallest scores, ascending by score then index.
pub fn bottom_k_indices(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::KTooLarge { k, n: scores.len() });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::DenseTensor;

    fn layer_1d(values: &[f32]) -> LayerRecord {
        let t = DenseTensor::new(vec![values.len(), 1, 1, 1], values.to_vec()).unwrap();
        LayerRecord::new("c", t).unwrap()
    }

    fn layer_rows(rows: &[&[f32]]) -> LayerRecord {
        let d = rows[0].len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LayerRecord::new("c", DenseTensor::new(vec![rows.len(), d, 1, 1], data).unwrap()).unwrap()
    }

    #[test]
    fn norms() {
        let l = layer_rows(&[&[0.0, 0.0], &[3.0, 4.0]]);
        assert_eq!(norm_score(&l, 1).unwrap().scores, vec![0.0, 7.0]);
        assert_eq!(norm_score(&l, 2).unwrap().scores, vec![0.0, 5.0]);
    }

    #[test]
    fn fermat_collinear() {
        let s = fermat_score(&layer_1d(&[0.0, 1.0, 10.0]), GmOptions::default()).unwrap();
        for (a, b) in s.scores.iter().zip([1.0, 0.0, 9.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn fermat_identical_filters() {
        let s = fermat_score(&layer_rows(&[&[1.0, 2.0], &[1.0, 2.0]]), GmOptions::default()).unwrap();
        assert_eq!(s.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn gm_examples() {
        assert_eq!(gm_score(&layer_1d(&[0.0, 1.0, 10.0])).unwrap().scores, vec![11.0, 10.0, 19.0]);
        assert_eq!(gm_score(&layer_1d(&[0.0, 2.0])).unwrap().scores, vec![2.0, 2.0]);
        assert_eq!(gm_score(&layer_1d(&[4.0, 4.0])).unwrap().scores, vec![0.0, 0.0]);
    }

    #[test]
    fn bn_scores() {
        let l = layer_1d(&[1.0, 1.0]);
        assert!(matches!(bn_score(&l, TensorRole::BnGamma), Err(Error::MissingAuxTensor { .. })));
        let g = DenseTensor::new(vec![2], vec![-0.5, 0.25]).unwrap();
        let l = l.with_tensor(TensorRole::BnGamma, g).unwrap();
        assert_eq!(bn_score(&l, TensorRole::BnGamma).unwrap().scores, vec![0.5, 0.25]);
    }

    #[test]
    fn taylor_scores() {
        let l = layer_rows(&[&[1.0, 2.0]]);
        let g = DenseTensor::new(vec![1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        let l = l.with_tensor(TensorRole::Grads, g).unwrap();
        assert_eq!(taylor_score(&l, 1).unwrap().scores, vec![5.0]);
        let l2 = layer_rows(&[&[1.0, 1.0]])
            .with_tensor(TensorRole::Grads, DenseTensor::new(vec![1, 2, 1, 1], vec![3.0, 4.0]).unwrap())
            .unwrap();
        assert_eq!(taylor_score(&l2, 2).unwrap().scores, vec![5.0]);
        let z = layer_rows(&[&[1.0, 1.0]])
            .with_tensor(TensorRole::Grads, DenseTensor::zeros(vec![1, 2, 1, 1]))
            .unwrap();
        assert_eq!(taylor_score(&z, 1).unwrap().scores, vec![0.0]);
    }

    #[test]
    fn entropy_extremes() {
        assert_eq!(histogram_entropy(&[2.0; 50], 100), 0.0);
        let uniform: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert!((histogram_entropy(&uniform, 10) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nonzero_fraction_counts() {
        assert_eq!(nonzero_fraction(&[0.0; 4], 2, 1e-4).unwrap(), vec![0.0, 0.0]);
        assert_eq!(nonzero_fraction(&[1.0; 4], 2, 1e-4).unwrap(), vec![1.0, 1.0]);
        assert_eq!(nonzero_fraction(&[0.0, 1.0, 1.0, 0.0], 1, 1e-4).unwrap(), vec![0.5]);
    }

    #[test]
    fn apoz_sigma_must_match_meta() {
        let dump = NetworkDump::default().with_meta("apoz_sigma", "0.0001");
        assert!(check_apoz_sigma(&dump, 1e-4).is_ok());
        assert!(check_apoz_sigma(&dump, 1e-3).is_err());
    }

    #[test]
    fn dispatch() {
        let l = layer_1d(&[3.0, 1.0, 2.0]);
        let p = CriterionParams::default();
        assert_eq!(score_layer_named(&l, "L1", &p).unwrap(), norm_score(&l, 1).unwrap());
        assert!(matches!(score_layer_named(&l, "L3", &p), Err(Error::UnknownCriterion(_))));
    }

    #[test]
    fn bottom_k() {
        assert_eq!(bottom_k_indices(&[3.0, 1.0, 2.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(bottom_k_indices(&[7.0; 5], 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(bottom_k_indices(&[1.0], 2), Err(Error::KTooLarge { k: 2, n: 1 })));
    }
}
