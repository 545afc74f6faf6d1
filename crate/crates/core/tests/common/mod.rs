//! Helpers shared by the integration tests. Oracles here avoid the library's
//! own linear algebra where that is the thing under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use structrobust::structure::check_general_position;
use structrobust::StructureMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn general_position(n: usize, r: usize, rng: &mut ChaCha8Rng) -> StructureMatrix {
    loop {
        let a = StructureMatrix::new(gaussian_matrix(n, r, rng)).unwrap();
        if check_general_position(&a).unwrap() {
            return a;
        }
    }
}

/// Rank by Gaussian elimination with partial pivoting.
pub fn elimination_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut m = m.clone();
    let (rows, cols) = m.shape();
    let scale = m.amax().max(1e-300);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (p, best) = (rank..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol * scale {
            continue;
        }
        m.swap_rows(rank, p);
        for i in rank + 1..rows {
            let f = m[(i, c)] / m[(rank, c)];
            for k in c..cols {
                let v = m[(rank, k)];
                m[(i, k)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn complement(n: usize, del: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !del.contains(i)).collect()
}

pub fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}
