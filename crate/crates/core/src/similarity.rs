//! Rank agreement between criteria.

use serde::{Deserialize, Serialize};

use crate::criteria::{score_dump, Criterion, CriterionParams, ScoreVector};
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{mean, sample_variance};
use crate::tensor_store::NetworkDump;

/// Ranks 1..n, ties receiving the mean of the positions they span.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of the tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let (rx, ry) = (rank_with_ties(x), rank_with_ties(y));
    let mx = mean(&rx);
    let my = mean(&ry);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("constant score vector has no ranking".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric matrix of pairwise Spearman values with an exact unit diagonal.
pub fn sp_matrix(vectors: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let c = vectors.len();
    let mut m = vec![vec![1.0; c]; c];
    for a in 0..c {
        for b in a + 1..c {
            let v = spearman(vectors[a], vectors[b])?;
            m[a][b] = v;
            m[b][a] = v;
        }
    }
    Ok(m)
}

/// Scores of every criterion on every layer: `table[criterion][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub criteria: Vec<Criterion>,
    pub layers: Vec<String>,
    pub scores: Vec<Vec<ScoreVector>>,
}

impl ScoreTable {
    pub fn compute(dump: &NetworkDump, criteria: &[Criterion], params: &CriterionParams) -> Result<Self> {
        if criteria.is_empty() {
            return Err(Error::InvalidParameter("at least one criterion is required".into()));
        }
        let scores = criteria
            .iter()
            .map(|&c| score_dump(dump, c, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreTable {
            criteria: criteria.to_vec(),
            layers: dump.layers.iter().map(|l| l.name.clone()).collect(),
            scores,
        })
    }

    pub fn layer_scores(&self, criterion: usize, layer: usize) -> &[f64] {
        &self.scores[criterion][layer].scores
    }

    /// Scores of one criterion concatenated over layers in layer order.
    pub fn concatenated(&self, criterion: usize) -> Vec<f64> {
        self.scores[criterion]
            .iter()
            .flat_map(|s| s.scores.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSp {
    pub layer: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpReport {
    pub criteria: Vec<Criterion>,
    pub layers: Vec<LayerSp>,
    pub global: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.7, 0.9];

pub fn sp_layerwise_from_table(table: &ScoreTable) -> Result<Vec<LayerSp>> {
    par::try_map_range(table.layers.len(), |l| {
        let vecs: Vec<&[f64]> = (0..table.criteria.len())
            .map(|c| table.layer_scores(c, l))
            .collect();
        let name = &table.layers[l];
        sp_matrix(&vecs)
            .map(|matrix| LayerSp {
                layer: name.clone(),
                matrix,
            })
            .map_err(|e| e.in_layer(name))
    })
}

pub fn sp_global_from_table(table: &ScoreTable) -> Result<Vec<Vec<f64>>> {
    let cat: Vec<Vec<f64>> = (0..table.criteria.len()).map(|c| table.concatenated(c)).collect();
    let refs: Vec<&[f64]> = cat.iter().map(Vec::as_slice).collect();
    sp_matrix(&refs)
}

pub fn sp_matrix_layerwise(dump: &NetworkDump, criteria: &[Criterion], params: &CriterionParams) -> Result<Vec<LayerSp>> {
    sp_layerwise_from_table(&ScoreTable::compute(dump, criteria, params)?)
}

pub fn sp_global(dump: &NetworkDump, criteria: &[Criterion], params: &CriterionParams) -> Result<Vec<Vec<f64>>> {
    sp_global_from_table(&ScoreTable::compute(dump, criteria, params)?)
}

pub fn sp_report(dump: &NetworkDump, criteria: &[Criterion], params: &CriterionParams) -> Result<SpReport> {
    let table = ScoreTable::compute(dump, criteria, params)?;
    sp_report_from_table(&table)
}

pub fn sp_report_from_table(table: &ScoreTable) -> Result<SpReport> {
    Ok(SpReport {
        criteria: table.criteria.clone(),
        layers: sp_layerwise_from_table(table)?,
        global: sp_global_from_table(table)?,
        thresholds: DEFAULT_THRESHOLDS.to_vec(),
    })
}

/// `(Var(x̂/ŷ), Var(ŷ/x̂))` with each input divided by its mean; sample
/// variance with the n-1 denominator.
pub fn normalized_ratio_variance(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    if let Some(index) = x.iter().chain(y).position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveEntry {
            index: index % x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a / mx) / (b / my)).collect();
    let yx: Vec<f64> = xy.iter().map(|r| 1.0 / r).collect();
    Ok((sample_variance(&xy), sample_variance(&yx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(rank_with_ties(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_with_ties(&[5.0, 5.0]), vec![1.5, 1.5]);
        assert_eq!(rank_with_ties(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateInput(_))));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn single_criterion_matrix() {
        assert_eq!(sp_matrix(&[&[1.0, 2.0, 3.0]]).unwrap(), vec![vec![1.0]]);
    }

    #[test]
    fn ratio_variance_examples() {
        let (a, b) = normalized_ratio_variance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!(a.abs() < 1e-30 && b.abs() < 1e-30);
        assert!(matches!(
            normalized_ratio_variance(&[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::NonPositiveEntry { index: 1 })
        ));
    }
}
