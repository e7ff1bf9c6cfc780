//! Exact k-nearest-neighbour search under squared Euclidean distance.
//!
//! A single-precision GEMM pass yields an approximate distance for every
//! (query, reference) pair together with a rigorous error bound. Only the
//! references whose lower bound does not exceed the k-th smallest upper bound
//! are re-scored in f64, so the answer is identical to fully sorting exact
//! distances with ties broken by the smaller reference index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::matrix::Matrix;

const QUERY_BLOCK: usize = 256;

/// Max-heap key over distance bounds.
struct Key(f64);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Returns, per query row, up to `k` `(reference index, exact distance)`
/// pairs sorted ascending by distance then index.
///
/// `excluded(q, r)` removes a pair from consideration. `exact(q, r)` is the
/// authoritative distance; it must agree with the f32 reference rows up to
/// single-precision rounding.
pub(crate) fn k_nearest<X, E>(
    queries: &Matrix<f32>,
    refs: &Matrix<f32>,
    k: usize,
    excluded: X,
    exact: E,
) -> Vec<Vec<(usize, f64)>>
where
    X: Fn(usize, usize) -> bool + Sync,
    E: Fn(usize, usize) -> f64 + Sync,
{
    assert_eq!(queries.cols(), refs.cols(), "dimension mismatch");
    let n = queries.rows();
    let m = refs.rows();
    let d = queries.cols();
    if n == 0 {
        return Vec::new();
    }
    if m == 0 || k == 0 {
        return vec![Vec::new(); n];
    }

    let norm2 = |r: &[f32]| r.iter().map(|&x| x as f64 * x as f64).sum::<f64>();
    let ref_norm2: Vec<f64> = refs.iter_rows().map(norm2).collect();
    let ref_norm: Vec<f64> = ref_norm2.iter().map(|v| v.sqrt()).collect();
    // Dot-product rounding in f32 is below d*u*|a||b|; the factor covers
    // f32 casts of the operands and the norm terms as well.
    let slack_coef = 4.0 * (d as f64 + 4.0) * f32::EPSILON as f64;

    let starts: Vec<usize> = (0..n).step_by(QUERY_BLOCK).collect();
    let blocks: Vec<Vec<Vec<(usize, f64)>>> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + QUERY_BLOCK).min(n);
            let qb = end - start;
            let mut dots = vec![0f32; qb * m];
            let a = &queries.as_slice()[start * d..end * d];
            // SAFETY: `a` is qb x d row-major, `refs` is read as its d x m
            // transpose (row stride 1, column stride d), and `dots` holds
            // qb x m elements. All strides stay inside the slices.
            unsafe {
                matrixmultiply::sgemm(
                    qb,
                    d,
                    m,
                    1.0,
                    a.as_ptr(),
                    d as isize,
                    1,
                    refs.as_slice().as_ptr(),
                    1,
                    d as isize,
                    0.0,
                    dots.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }

            let mut lower = vec![0f64; m];
            let mut upper = vec![0f64; m];
            let mut uppers: BinaryHeap<Key> = BinaryHeap::with_capacity(k + 1);
            let mut out = Vec::with_capacity(qb);
            for local in 0..qb {
                let q = start + local;
                let qn2 = norm2(queries.row(q));
                let qn = qn2.sqrt();
                let row_dots = &dots[local * m..(local + 1) * m];
                for ((((lo, up), &dot), &rn2), &rn) in lower
                    .iter_mut()
                    .zip(upper.iter_mut())
                    .zip(row_dots)
                    .zip(&ref_norm2)
                    .zip(&ref_norm)
                {
                    let approx = qn2 + rn2 - 2.0 * dot as f64;
                    let s = qn + rn;
                    let slack = slack_coef * s * s + f64::MIN_POSITIVE;
                    *lo = approx - slack;
                    *up = approx + slack;
                }
                uppers.clear();
                for (j, &u) in upper.iter().enumerate() {
                    if uppers.len() < k {
                        if !excluded(q, j) {
                            uppers.push(Key(u));
                        }
                    } else if u < uppers.peek().map_or(f64::INFINITY, |t| t.0) && !excluded(q, j) {
                        uppers.pop();
                        uppers.push(Key(u));
                    }
                }
                let Some(bound) = uppers.peek().map(|t| t.0) else {
                    out.push(Vec::new());
                    continue;
                };
                let kk = uppers.len();

                let mut cands: Vec<(usize, f64)> = (0..m)
                    .filter(|&j| lower[j] <= bound && !excluded(q, j))
                    .map(|j| (j, exact(q, j)))
                    .collect();
                cands.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
                cands.truncate(kk);
                out.push(cands);
            }
            out
        })
        .collect();

    blocks.into_iter().flatten().collect()
}
