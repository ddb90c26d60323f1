//! Geometric median (Fermat point) by Weiszfeld iteration.
//!
//! The iteration starts at the centroid. When an iterate lands on a data
//! point the subgradient optimality test decides whether that point is the
//! median; if not, a Vardi–Zhang step moves off it along the descent
//! direction. Accumulation runs over fixed-size row chunks reduced in chunk
//! order, so the result does not depend on the thread count.

use crate::error::{Error, Result};
use crate::matrix::{distance, Matrix, Scalar};
use crate::par;

const CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmOptions {
    /// Stop when a step moves less than `rel_tol` times the cloud radius.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GmOptions {
    fn default() -> Self {
        GmOptions {
            rel_tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianResult {
    pub point: Vec<f64>,
    pub iterations: usize,
}

struct Partial {
    num: Vec<f64>,
    den: f64,
    nearest: (f64, usize),
}

pub fn geometric_median<T: Scalar>(points: &Matrix<T>, opts: GmOptions) -> Result<Vec<f64>> {
    weiszfeld(points, opts).map(|r| r.point)
}

pub fn weiszfeld<T: Scalar>(points: &Matrix<T>, opts: GmOptions) -> Result<MedianResult> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("geometric median of an empty point set".into()));
    }
    if !(opts.rel_tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(format!(
            "geometric median needs rel_tol > 0 and max_iter >= 1, got {} and {}",
            opts.rel_tol, opts.max_iter
        )));
    }
    let centroid = centroid(points);
    let radius = (0..n)
        .map(|i| distance(points.row(i), &centroid))
        .fold(0.0, f64::max);
    if n == 1 || radius == 0.0 {
        return Ok(MedianResult {
            point: centroid,
            iterations: 0,
        });
    }
    let tol = opts.rel_tol * radius;

    let mut y = centroid;
    for iter in 1..=opts.max_iter {
        let acc = accumulate(points, &y, 0.0);
        let next = if acc.nearest.0 <= tol {
            let k = acc.nearest.1;
            let xk: Vec<f64> = points.row(k).iter().map(|v| v.to_f64()).collect();
            match escape_step(points, &xk, tol) {
                None => {
                    return Ok(MedianResult {
                        point: xk,
                        iterations: iter,
                    })
                }
                Some(step) => step,
            }
        } else {
            acc.num.iter().map(|v| v / acc.den).collect()
        };
        let moved = distance(&next, &y);
        y = next;
        if moved < tol {
            // Weiszfeld approaches an optimal data point only sublinearly, so
            // the nearest data point replaces the iterate when it is no worse.
            let xk: Vec<f64> = points.row(acc.nearest.1).iter().map(|v| v.to_f64()).collect();
            if objective(points, &xk) <= objective(points, &y) {
                y = xk;
            }
            return Ok(MedianResult {
                point: y,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConverged {
        iterations: opts.max_iter,
        last: y,
    })
}

fn centroid<T: Scalar>(points: &Matrix<T>) -> Vec<f64> {
    let (n, d) = (points.rows(), points.cols());
    let parts = par::map_chunks(n, CHUNK_ROWS, |_, start, len| {
        let mut s = vec![0.0; d];
        for i in start..start + len {
            for (a, v) in s.iter_mut().zip(points.row(i)) {
                *a += v.to_f64();
            }
        }
        s
    });
    let mut c = vec![0.0; d];
    for p in parts {
        for (a, v) in c.iter_mut().zip(p) {
            *a += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= n as f64);
    c
}

/// Weighted sums over points farther than `skip` from `y`.
fn accumulate<T: Scalar>(points: &Matrix<T>, y: &[f64], skip: f64) -> Partial {
    let (n, d) = (points.rows(), points.cols());
    let parts = par::map_chunks(n, CHUNK_ROWS, |_, start, len| {
        let mut p = Partial {
            num: vec![0.0; d],
            den: 0.0,
            nearest: (f64::INFINITY, usize::MAX),
        };
        for i in start..start + len {
            let row = points.row(i);
            let dist = distance(row, y);
            if dist < p.nearest.0 {
                p.nearest = (dist, i);
            }
            if dist <= skip || dist == 0.0 {
                continue;
            }
            let w = 1.0 / dist;
            p.den += w;
            for (a, v) in p.num.iter_mut().zip(row) {
                *a += w * v.to_f64();
            }
        }
        p
    });
    let mut total = Partial {
        num: vec![0.0; d],
        den: 0.0,
        nearest: (f64::INFINITY, usize::MAX),
    };
    for p in parts {
        total.den += p.den;
        for (a, v) in total.num.iter_mut().zip(p.num) {
            *a += v;
        }
        if p.nearest.0 < total.nearest.0 {
            total.nearest = p.nearest;
        }
    }
    total
}

/// `None` when data point `xk` satisfies the optimality condition, otherwise
/// the Vardi–Zhang step away from it.
fn escape_step<T: Scalar>(points: &Matrix<T>, xk: &[f64], tol: f64) -> Option<Vec<f64>> {
    let multiplicity = (0..points.rows())
        .filter(|&i| distance(points.row(i), xk) <= tol)
        .count() as f64;
    let acc = accumulate(points, xk, tol);
    if acc.den == 0.0 {
        return None;
    }
    // R = sum over other points of the unit vector from xk towards them.
    let r: Vec<f64> = acc
        .num
        .iter()
        .zip(xk)
        .map(|(s, x)| s - acc.den * x)
        .collect();
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r_norm <= multiplicity {
        return None;
    }
    let step = (r_norm - multiplicity) / (acc.den * r_norm);
    Some(xk.iter().zip(&r).map(|(x, g)| x + step * g).collect())
}

/// Sum of distances from `y` to every point.
pub fn objective<T: Scalar>(points: &Matrix<T>, y: &[f64]) -> f64 {
    (0..points.rows()).map(|i| distance(points.row(i), y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn square_vertices_give_center() {
        let p = m(&[&[1.0, 1.0], &[-1.0, 1.0], &[-1.0, -1.0], &[1.0, -1.0]]);
        let g = geometric_median(&p, GmOptions::default()).unwrap();
        assert!(g[0].abs() < 1e-9 && g[1].abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_median() {
        let p = m(&[&[0.0], &[1.0], &[10.0]]);
        let g = geometric_median(&p, GmOptions::default()).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8, "{g:?}");
    }

    #[test]
    fn dominant_vertex_is_returned_exactly() {
        // Three copies of the origin outweigh two distant points.
        let p = m(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[5.0, 0.0], &[0.0, 5.0]]);
        let g = geometric_median(&p, GmOptions::default()).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn escapes_non_optimal_vertex() {
        // The centroid is the data point at the origin, which is not optimal.
        let p = m(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[-3.0, 0.0]]);
        let g = geometric_median(&p, GmOptions::default()).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
    }

    #[test]
    fn identical_points() {
        let p = m(&[&[2.0, 3.0], &[2.0, 3.0]]);
        assert_eq!(geometric_median(&p, GmOptions::default()).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn non_converged_carries_last_iterate() {
        let p = m(&[&[0.0, 0.0], &[4.0, 0.0], &[0.0, 3.0], &[7.0, 9.0]]);
        let opts = GmOptions {
            rel_tol: 1e-15,
            max_iter: 2,
        };
        match weiszfeld(&p, opts) {
            Err(Error::NonConverged { iterations, last }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn f32_storage_matches_f64() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos(), i as f64 * 0.01])
            .collect();
        let a = Matrix::from_rows(&rows);
        let b: Matrix<f32> = a.map(|v| v);
        let ga = geometric_median(&a, GmOptions::default()).unwrap();
        let gb = geometric_median(&b, GmOptions::default()).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}
