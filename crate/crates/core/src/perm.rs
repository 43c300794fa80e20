//! Node permutations. A permutation `pi` acts on matrices as `P M P^T` with
//! `P[pi(i), i] = 1`, i.e. entry `(i, j)` moves to `(pi(i), pi(j))`.

use rand::seq::SliceRandom;

use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Returns `None` unless `map` is a bijection on `0..map.len()`.
    pub fn new(map: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; map.len()];
        for &v in &map {
            if v >= map.len() || std::mem::replace(&mut seen[v], true) {
                return None;
            }
        }
        Some(Permutation(map))
    }

    /// Uniform draw from `S_n` (Fisher-Yates).
    pub fn random(n: usize, seed: u64) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(&mut seed::rng(seed));
        Permutation(map)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// `P M P^T` for a square `n x n` matrix.
    pub fn conjugate(&self, m: &Matrix) -> Matrix {
        let n = self.len();
        assert_eq!(m.shape(), (n, n), "conjugate shape");
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.0[i], self.0[j])] = m[(i, j)];
            }
        }
        out
    }

    /// `P h (I_K ⊗ P^T)` for `h` made of `K` consecutive `n x n` blocks: rows
    /// are relabeled, and columns are relabeled inside each block.
    pub fn conjugate_blocks(&self, h: &Matrix) -> Matrix {
        let n = self.len();
        assert_eq!(h.rows(), n, "conjugate_blocks rows");
        assert_eq!(h.cols() % n, 0, "conjugate_blocks cols");
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for i in 0..n {
            for c in 0..h.cols() {
                let (blk, j) = (c / n, c % n);
                out[(self.0[i], blk * n + self.0[j])] = h[(i, c)];
            }
        }
        out
    }
}

/// All `n!` permutations in lexicographic order.
pub fn all(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation(cur.clone()));
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// `count` independent uniform permutations from the stream rooted at `seed`.
pub fn sample(n: usize, count: usize, seed: u64) -> Vec<Permutation> {
    (0..count)
        .map(|k| Permutation::random(n, seed::derive(seed, k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_factorial_many() {
        let ps = all(4);
        assert_eq!(ps.len(), 24);
        assert!(ps[0].is_identity());
        let mut sorted = ps.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
    }

    #[test]
    fn conjugation_matches_matrix_form() {
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        let pm = Matrix::from_fn(3, 3, |r, c| if p.apply(c) == r { 1.0 } else { 0.0 });
        let m = Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let expected = pm.matmul(&m).matmul(&pm.transpose());
        assert_eq!(p.conjugate(&m), expected);

        let h = Matrix::from_fn(3, 6, |r, c| (r * 6 + c) as f64);
        let ik = Matrix::identity(2).kron(&pm.transpose());
        assert_eq!(p.conjugate_blocks(&h), pm.matmul(&h).matmul(&ik));
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0]).is_none());
        assert!(Permutation::new(vec![0, 2]).is_none());
        let p = Permutation::random(9, 3);
        assert!(Permutation::new(p.as_slice().to_vec()).is_some());
        assert_eq!(p.inverse().inverse(), p);
    }
}
