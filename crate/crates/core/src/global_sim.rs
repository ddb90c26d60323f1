//! Global pruning across layers: two-layer ℓ1/ℓ2 agreement surfaces, the
//! overlap lines where the two rankings disagree, start-layer sweeps and
//! prune masks.

use serde::{Deserialize, Serialize};

use crate::criteria::{bottom_k_indices, score_dump, Criterion, CriterionParams, ScoreVector};
use crate::error::{Error, Result};
use crate::matrix::{l1_norm, l2_norm};
use crate::par;
use crate::rng::{fill_normal, stream_rng};
use crate::similarity::spearman;
use crate::tensor_store::NetworkDump;

pub const DEFAULT_BAND: f64 = 0.15;

/// `n` values from `lo` to `hi` evenly spaced in log scale.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub d_a: usize,
    pub d_b: usize,
    pub sigma_a_values: Vec<f64>,
    pub sigma_b_values: Vec<f64>,
    pub n_filters: usize,
    pub seed: u64,
}

impl GridConfig {
    /// 50x50 log-spaced σ in [1e-3, 1e-1] on both axes, 256 filters per layer.
    pub fn standard(d_a: usize, d_b: usize, seed: u64) -> Self {
        GridConfig {
            d_a,
            d_b,
            sigma_a_values: log_space(1e-3, 1e-1, 50),
            sigma_b_values: log_space(1e-3, 1e-1, 50),
            n_filters: 256,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub config: GridConfig,
    /// `sp_surface[i_a][i_b]`.
    pub sp_surface: Vec<Vec<f64>>,
}

/// Sp of ℓ1 against ℓ2 over the filters of two Gaussian layers.
pub fn two_layer_sp(d_a: usize, sigma_a: f64, d_b: usize, sigma_b: f64, n: usize, seed: u64, stream: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, stream);
    let mut l1 = Vec::with_capacity(2 * n);
    let mut l2 = Vec::with_capacity(2 * n);
    for (d, sigma) in [(d_a, sigma_a), (d_b, sigma_b)] {
        let mut buf = vec![0.0; d];
        for _ in 0..n {
            fill_normal(&mut rng, sigma, &mut buf);
            l1.push(l1_norm(&buf));
            l2.push(l2_norm(&buf));
        }
    }
    spearman(&l1, &l2)
}

pub fn simulate_two_layer_grid(config: &GridConfig) -> Result<SimGrid> {
    if config.n_filters < 32 {
        return Err(Error::InvalidParameter(format!(
            "need at least 32 filters per layer, got {}",
            config.n_filters
        )));
    }
    if config.d_a == 0 || config.d_b == 0 {
        return Err(Error::InvalidParameter("layer dimensions must be positive".into()));
    }
    if let Some(s) = config
        .sigma_a_values
        .iter()
        .chain(&config.sigma_b_values)
        .find(|s| !(**s > 0.0 && s.is_finite()))
    {
        return Err(Error::InvalidParameter(format!("grid sigma must be positive, got {s}")));
    }
    let (na, nb) = (config.sigma_a_values.len(), config.sigma_b_values.len());
    let cells = par::try_map_range(na * nb, |cell| {
        let (ia, ib) = (cell / nb, cell % nb);
        two_layer_sp(
            config.d_a,
            config.sigma_a_values[ia],
            config.d_b,
            config.sigma_b_values[ib],
            config.n_filters,
            config.seed,
            cell as u64,
        )
    })?;
    let sp_surface = cells.chunks(nb.max(1)).map(<[f64]>::to_vec).collect();
    Ok(SimGrid {
        config: config.clone(),
        sp_surface: if nb == 0 { vec![vec![]; na] } else { sp_surface },
    })
}

/// σ_A values where the layers' ℓ1 magnitudes coincide (`σ_A d_A = σ_B d_B`)
/// and where their ℓ2 magnitudes coincide (`σ_A √d_A = σ_B √d_B`).
pub fn overlap_lines(d_a: usize, d_b: usize, sigma_b: f64) -> (f64, f64) {
    let ratio = d_b as f64 / d_a as f64;
    (sigma_b * ratio, sigma_b * ratio.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Similar,
    Dissimilar,
}

/// Whether ℓ1 and ℓ2 rank the filters of two layers alike under global
/// pruning. Unequal dimensions with σ_A/σ_B within `band` of either overlap
/// ratio are dissimilar.
pub fn classify_pair(d_a: usize, d_b: usize, sigma_a: f64, sigma_b: f64, band: f64) -> Result<PairClass> {
    if !(band > 0.0 && band < 0.5) {
        return Err(Error::InvalidParameter(format!("band must lie in (0, 0.5), got {band}")));
    }
    if d_a == d_b {
        return Ok(PairClass::Similar);
    }
    let r = sigma_a / sigma_b;
    let dr = d_b as f64 / d_a as f64;
    let near = |target: f64| (r / target - 1.0).abs() <= band;
    Ok(if near(dr) || near(dr.sqrt()) {
        PairClass::Dissimilar
    } else {
        PairClass::Similar
    })
}

fn log_cell_distance(values: &[f64], index: usize, target: f64) -> f64 {
    let step = (values[values.len() - 1] / values[0]).ln() / (values.len() - 1) as f64;
    (values[index] / target).ln().abs() / step.abs()
}

/// Location of the Sp valley relative to the overlap lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub min_sp: f64,
    pub min_sigma_a: f64,
    pub min_sigma_b: f64,
    /// Distance in grid cells (along σ_A) from the surface minimum to the
    /// nearer overlap line.
    pub min_cells_to_line: f64,
    /// Columns whose own minimum lies within one cell of a line.
    pub columns_near_line: f64,
    /// Columns whose own minimum lies between the lines, one cell of slack.
    pub columns_bracketed: f64,
    pub columns: usize,
}

/// Valley analysis over the σ_B columns in which both lines fall inside the
/// σ_A range. Needs at least two σ_A values and `d_a != d_b`.
pub fn valley_report(grid: &SimGrid) -> Result<ValleyReport> {
    let cfg = &grid.config;
    let sa = &cfg.sigma_a_values;
    if sa.len() < 2 || cfg.d_a == cfg.d_b {
        return Err(Error::InvalidParameter(
            "valley analysis needs unequal dimensions and at least two sigma_A values".into(),
        ));
    }
    let (lo, hi) = (sa[0].min(sa[sa.len() - 1]), sa[0].max(sa[sa.len() - 1]));
    let mut best: Option<(f64, usize, usize)> = None;
    let (mut near, mut bracket, mut cols) = (0usize, 0usize, 0usize);
    for (ib, &sb) in cfg.sigma_b_values.iter().enumerate() {
        let (l1, l2) = overlap_lines(cfg.d_a, cfg.d_b, sb);
        if l1.min(l2) < lo || l1.max(l2) > hi {
            continue;
        }
        cols += 1;
        let ia = (0..sa.len())
            .min_by(|&x, &y| grid.sp_surface[x][ib].total_cmp(&grid.sp_surface[y][ib]).then(x.cmp(&y)))
            .expect("non-empty axis");
        let dist = log_cell_distance(sa, ia, l1).min(log_cell_distance(sa, ia, l2));
        if dist <= 1.0 {
            near += 1;
        }
        let step = (sa[sa.len() - 1] / sa[0]).ln().abs() / (sa.len() - 1) as f64;
        let (a, b) = (l1.min(l2).ln() - step, l1.max(l2).ln() + step);
        if (a..=b).contains(&sa[ia].ln()) {
            bracket += 1;
        }
        let v = grid.sp_surface[ia][ib];
        if best.is_none_or(|(bv, _, _)| v < bv) {
            best = Some((v, ia, ib));
        }
    }
    let (min_sp, ia, ib) = best.ok_or_else(|| {
        Error::InvalidParameter("no sigma_B column has both overlap lines inside the grid".into())
    })?;
    let sb = cfg.sigma_b_values[ib];
    let (l1, l2) = overlap_lines(cfg.d_a, cfg.d_b, sb);
    Ok(ValleyReport {
        min_sp,
        min_sigma_a: sa[ia],
        min_sigma_b: sb,
        min_cells_to_line: log_cell_distance(sa, ia, l1).min(log_cell_distance(sa, ia, l2)),
        columns_near_line: near as f64 / cols as f64,
        columns_bracketed: bracket as f64 / cols as f64,
        columns: cols,
    })
}

/// Mean Sp over cells where σ_A/σ_B is more than `band` away from 1.
pub fn mean_sp_off_diagonal(grid: &SimGrid, band: f64) -> f64 {
    let cfg = &grid.config;
    let mut vals = Vec::new();
    for (ia, &sa) in cfg.sigma_a_values.iter().enumerate() {
        for (ib, &sb) in cfg.sigma_b_values.iter().enumerate() {
            if (sa / sb - 1.0).abs() > band {
                vals.push(grid.sp_surface[ia][ib]);
            }
        }
    }
    crate::stats::mean(&vals)
}

// ---------------------------------------------------------------------------
// Start-layer sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// 1-based index of the first layer included.
    pub start_layer: usize,
    pub layer: String,
    pub sp: f64,
}

/// Sp between two criteria over the filters of layers `L..end`, for every
/// start layer `L`.
pub fn start_layer_sweep_from_scores(a: &[ScoreVector], b: &[ScoreVector]) -> Result<Vec<SweepPoint>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    (0..a.len())
        .map(|start| {
            let x: Vec<f64> = a[start..].iter().flat_map(|s| s.scores.iter().copied()).collect();
            let y: Vec<f64> = b[start..].iter().flat_map(|s| s.scores.iter().copied()).collect();
            Ok(SweepPoint {
                start_layer: start + 1,
                layer: a[start].layer.clone(),
                sp: spearman(&x, &y).map_err(|e| e.in_layer(&a[start].layer))?,
            })
        })
        .collect()
}

pub fn start_layer_sweep(
    dump: &NetworkDump,
    pair: (Criterion, Criterion),
    params: &CriterionParams,
) -> Result<Vec<SweepPoint>> {
    let a = score_dump(dump, pair.0, params)?;
    let b = score_dump(dump, pair.1, params)?;
    start_layer_sweep_from_scores(&a, &b)
}

// ---------------------------------------------------------------------------
// Prune masks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    Layerwise,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMask {
    pub layer: String,
    pub n_out: usize,
    /// Ascending filter indices.
    pub pruned: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub criterion: Criterion,
    pub mode: PruneMode,
    pub ratio: f64,
    pub min_keep: usize,
    pub layers: Vec<LayerMask>,
}

impl PruneMask {
    pub fn total_pruned(&self) -> usize {
        self.layers.iter().map(|l| l.pruned.len()).sum()
    }
}

pub fn prune_mask_from_scores(scores: &[ScoreVector], mode: PruneMode, ratio: f64, min_keep: usize) -> Result<PruneMask> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("prune ratio must lie in (0, 1), got {ratio}")));
    }
    if min_keep == 0 {
        return Err(Error::InvalidParameter("min_keep must be at least 1".into()));
    }
    let criterion = scores.first().map_or(Criterion::L1, |s| s.criterion);
    let mut pruned: Vec<Vec<usize>> = match mode {
        PruneMode::Layerwise => scores
            .iter()
            .map(|s| {
                let n = s.scores.len();
                let k = ((ratio * n as f64).floor() as usize).min(n.saturating_sub(min_keep));
                bottom_k_indices(&s.scores, k)
            })
            .collect::<Result<_>>()?,
        PruneMode::Global => {
            let mut all: Vec<(f64, usize, usize)> = scores
                .iter()
                .enumerate()
                .flat_map(|(l, s)| s.scores.iter().enumerate().map(move |(j, &v)| (v, l, j)))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let k = (ratio * all.len() as f64).floor() as usize;
            let mut per_layer = vec![Vec::new(); scores.len()];
            for &(_, l, j) in &all[..k] {
                per_layer[l].push(j);
            }
            // Restore the highest-scoring pruned filters of layers left below min_keep.
            for (l, p) in per_layer.iter_mut().enumerate() {
                let n = scores[l].scores.len();
                let keep_target = min_keep.min(n);
                let s = &scores[l].scores;
                while n - p.len() < keep_target {
                    let (pos, _) = p
                        .iter()
                        .enumerate()
                        .max_by(|(_, &a), (_, &b)| s[a].total_cmp(&s[b]).then(a.cmp(&b)))
                        .expect("pruned set non-empty while below min_keep");
                    p.remove(pos);
                }
            }
            per_layer
        }
    };
    pruned.iter_mut().for_each(|p| p.sort_unstable());
    Ok(PruneMask {
        criterion,
        mode,
        ratio,
        min_keep,
        layers: scores
            .iter()
            .zip(pruned)
            .map(|(s, p)| LayerMask {
                layer: s.layer.clone(),
                n_out: s.scores.len(),
                pruned: p,
            })
            .collect(),
    })
}

pub fn build_prune_mask(
    dump: &NetworkDump,
    criterion: Criterion,
    params: &CriterionParams,
    mode: PruneMode,
    ratio: f64,
    min_keep: usize,
) -> Result<PruneMask> {
    let scores = score_dump(dump, criterion, params)?;
    let mut mask = prune_mask_from_scores(&scores, mode, ratio, min_keep)?;
    mask.criterion = criterion;
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(layer: &str, scores: &[f64]) -> ScoreVector {
        ScoreVector {
            layer: layer.into(),
            criterion: Criterion::L1,
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn lines() {
        assert_eq!(overlap_lines(4, 1, 1.0), (0.25, 0.5));
        assert_eq!(overlap_lines(7, 7, 0.3), (0.3, 0.3));
    }

    #[test]
    fn classification_rows() {
        assert_eq!(classify_pair(9, 9, 1.0, 0.01, 0.15).unwrap(), PairClass::Similar);
        assert_eq!(classify_pair(4, 1, 0.25, 1.0, 0.15).unwrap(), PairClass::Dissimilar);
        assert_eq!(classify_pair(4, 1, 0.5, 1.0, 0.15).unwrap(), PairClass::Dissimilar);
        assert_eq!(classify_pair(4, 1, 5.0, 1.0, 0.15).unwrap(), PairClass::Similar);
        assert!(classify_pair(4, 1, 5.0, 1.0, 0.7).is_err());
    }

    #[test]
    fn layerwise_mask() {
        let m = prune_mask_from_scores(&[sv("a", &[4.0, 1.0, 3.0, 2.0])], PruneMode::Layerwise, 0.5, 1).unwrap();
        assert_eq!(m.layers[0].pruned, vec![1, 3]);
    }

    #[test]
    fn global_mask_protects_layer() {
        let a = sv("a", &[0.1, 0.2, 0.3, 0.4]);
        let b = sv("b", &[5.0, 6.0, 7.0, 8.0]);
        let m = prune_mask_from_scores(&[a, b], PruneMode::Global, 0.5, 1).unwrap();
        assert_eq!(m.layers[0].pruned, vec![0, 1, 2]);
        assert!(m.layers[1].pruned.is_empty());
    }

    #[test]
    fn tiny_ratio_gives_empty_mask() {
        let m = prune_mask_from_scores(&[sv("a", &[1.0, 2.0, 3.0])], PruneMode::Global, 0.1, 1).unwrap();
        assert_eq!(m.total_pruned(), 0);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-3, 1e-1, 3);
        assert!((v[1] - 1e-2).abs() < 1e-15);
    }
}
