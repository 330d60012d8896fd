//! Sparse symmetric matrices stored as upper-triangle triplets.
//!
//! Entries keep `i <= j`; the lower triangle is implicit. Inner products
//! therefore double off-diagonal contributions. Normalization folds mirrored
//! and duplicate keys together (summing values) and drops exact zeros, so two
//! structurally equal matrices compare equal entry-for-entry.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    /// Sorted by (i, j), i <= j, no duplicates, no stored zeros.
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    /// Builds from arbitrary triplets. Mirrored keys (j, i) are folded onto
    /// (i, j); duplicates sum; exact zeros are dropped.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    context: "SparseSymmetric::from_triplets entry index",
                    expected: n,
                    got: i.max(j),
                });
            }
            let key = if i <= j { (i, j) } else { (j, i) };
            *map.entry(key).or_insert(0.0) += v;
        }
        Ok(Self::from_map(n, map))
    }

    fn from_map(n: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        let entries = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        SparseSymmetric { n, entries }
    }

    pub fn zeros(n: usize) -> Self {
        SparseSymmetric {
            n,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseSymmetric {
            n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    /// Stored entry count (upper triangle).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        match self
            .entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zeros(self.n);
        }
        SparseSymmetric {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * s))
                .collect(),
        }
    }

    /// Linear combination sum_t coeffs[t] * mats[t]; mats must share a side.
    pub fn combine<'a, I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a SparseSymmetric)>,
    {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (c, m) in terms {
            if m.n != n {
                return Err(Error::DimensionMismatch {
                    context: "SparseSymmetric::combine side",
                    expected: n,
                    got: m.n,
                });
            }
            if c == 0.0 {
                continue;
            }
            for &(i, j, v) in &m.entries {
                *map.entry((i, j)).or_insert(0.0) += c * v;
            }
        }
        Ok(Self::from_map(n, map))
    }

    /// <A, X> for dense symmetric X; off-diagonal entries count twice.
    pub fn inner_dense(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            let mult = if i == j { 1.0 } else { 2.0 };
            acc += mult * v * x[(i, j)];
        }
        acc
    }

    /// <A, B> for two sparse symmetric matrices (merge over sorted entries).
    pub fn inner_sparse(&self, other: &SparseSymmetric) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < a.len() && q < b.len() {
            let ka = (a[p].0, a[p].1);
            let kb = (b[q].0, b[q].1);
            match ka.cmp(&kb) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let mult = if ka.0 == ka.1 { 1.0 } else { 2.0 };
                    acc += mult * a[p].2 * b[q].2;
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    /// <A, U U^T> accumulated through row dot products; never forms U U^T.
    pub fn inner_factored(&self, u: &DMatrix<f64>) -> f64 {
        let k = u.ncols();
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            let mut dot = 0.0;
            for c in 0..k {
                dot += u[(i, c)] * u[(j, c)];
            }
            acc += if i == j { v * dot } else { 2.0 * v * dot };
        }
        acc
    }

    /// <A, U V^T + V U^T>, the directional derivative of U |-> <A, U U^T>.
    pub fn inner_pair_factored(&self, u: &DMatrix<f64>, v_mat: &DMatrix<f64>) -> f64 {
        let k = u.ncols();
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            let mut dot = 0.0;
            for c in 0..k {
                dot += u[(i, c)] * v_mat[(j, c)] + v_mat[(i, c)] * u[(j, c)];
            }
            acc += if i == j { v * dot } else { 2.0 * v * dot };
        }
        acc
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// Y = A U for dense U (n x k); O(nnz * k).
    pub fn mul_mat(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let k = u.ncols();
        let mut y = DMatrix::zeros(self.n, k);
        self.mul_mat_acc(1.0, u, &mut y);
        y
    }

    /// Y += c * A U, the accumulation kernel behind gradients and
    /// Hessian-vector products.
    pub fn mul_mat_acc(&self, c: f64, u: &DMatrix<f64>, y: &mut DMatrix<f64>) {
        let k = u.ncols();
        for &(i, j, v) in &self.entries {
            let cv = c * v;
            for col in 0..k {
                y[(i, col)] += cv * u[(j, col)];
            }
            if i != j {
                for col in 0..k {
                    y[(j, col)] += cv * u[(i, col)];
                }
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
        x
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}
