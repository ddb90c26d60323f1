//! Brute-force reference implementations used to check the library.

/// Average ranks by counting, 1-based.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of the ranks from raw sums. Doubled ranks are
/// integers, so every sum is exact.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let rx: Vec<f64> = ranks(x).iter().map(|r| 2.0 * r).collect();
    let ry: Vec<f64> = ranks(y).iter().map(|r| 2.0 * r).collect();
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|b| b * b).sum();
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    num / den
}

/// Indices of the `k` smallest scores from a full stable sort.
pub fn bottom_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn distance_sum(points: &[[f64; 3]], y: [f64; 3]) -> f64 {
    points
        .iter()
        .map(|p| ((p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2) + (p[2] - y[2]).powi(2)).sqrt())
        .sum()
}

/// Geometric median in R³ by repeated grid search on a shrinking box.
pub fn geometric_median_3d(points: &[[f64; 3]]) -> [f64; 3] {
    const STEPS: usize = 20;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut best = [0.0; 3];
    loop {
        let h: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / STEPS as f64).collect();
        let mut best_val = f64::INFINITY;
        for i in 0..=STEPS {
            for j in 0..=STEPS {
                for k in 0..=STEPS {
                    let y = [lo[0] + i as f64 * h[0], lo[1] + j as f64 * h[1], lo[2] + k as f64 * h[2]];
                    let v = distance_sum(points, y);
                    if v < best_val {
                        best_val = v;
                        best = y;
                    }
                }
            }
        }
        if h.iter().all(|&w| w < 1e-9) {
            return best;
        }
        for a in 0..3 {
            lo[a] = best[a] - 2.0 * h[a];
            hi[a] = best[a] + 2.0 * h[a];
        }
    }
}

/// `Γ((d+1)/2)/Γ(d/2)` from the recurrence Γ(x+1) = xΓ(x), starting at
/// Γ(1) = 1 and Γ(1/2) = √π. Overflows beyond d of about 340.
pub fn gamma_ratio(d: usize) -> f64 {
    let gamma_half = |m: usize| -> f64 {
        let (mut x, mut g) = if m % 2 == 0 { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
        while x < m as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    };
    gamma_half(d + 1) / gamma_half(d)
}
