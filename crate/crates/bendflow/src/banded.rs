//! Symmetric banded matrices and their Cholesky factors.
//!
//! Only the lower band is stored: `data[i * (bw + 1) + k]` holds `M[i][i - k]`.
//! Principal submatrices of a banded matrix (rows and columns picked by a
//! sorted index list) keep the same bandwidth, which is what the active-set
//! solvers rely on.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    /// Adds `v` to `M[i][j]` (and implicitly `M[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[i * (self.bw + 1) + (i - j)] = v;
    }

    /// `self += alpha * other`; the bandwidths must agree.
    pub fn add_scaled(&mut self, alpha: f64, other: &SymBanded) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bw, other.bw);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        y
    }

    /// `|M|·|x|`, the scale of the rounding error in `M·x`.
    pub fn abs_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0].abs() * x[i].abs();
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                y[i] += row[k].abs() * x[j].abs();
                y[j] += row[k].abs() * x[i].abs();
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Principal submatrix on the sorted index list `idx`.
    pub fn principal(&self, idx: &[usize]) -> SymBanded {
        let m = idx.len();
        let mut out = SymBanded::zeros(m, self.bw);
        for a in 0..m {
            for k in 0..=self.bw.min(a) {
                out.data[a * (self.bw + 1) + k] = self.get(idx[a], idx[a - k]);
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for k in lo..=i {
                let mut s = self.get(i, k);
                for j in lo.max(k.saturating_sub(bw))..k {
                    s -= l[i * w + (i - j)] * l[k * w + (k - j)];
                }
                if k == i {
                    let diag = self.get(i, i).abs();
                    if !(s > 1e-13 * diag) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - k)] = s / l[k * w];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

/// Lower-triangular banded factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = x[i];
            for k in 1..=self.bw.min(i) {
                s -= self.l[i * w + k] * x[i - k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in 1..=self.bw.min(self.n - 1 - i) {
                s -= self.l[(i + k) * w + k] * x[i + k];
            }
            x[i] = s / self.l[i * w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &SymBanded) -> Vec<Vec<f64>> {
        (0..m.dim())
            .map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect())
            .collect()
    }

    fn sample(n: usize) -> SymBanded {
        let mut m = SymBanded::zeros(n, 2);
        for i in 0..n {
            m.set(i, i, 6.0 + i as f64 * 0.1);
            if i >= 1 {
                m.set(i, i - 1, -4.0);
            }
            if i >= 2 {
                m.set(i, i - 2, 1.0);
            }
        }
        m
    }

    #[test]
    fn solve_inverts_mul() {
        let m = sample(12);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = m.mul_vec(&x);
        let y = m.cholesky().unwrap().solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn principal_matches_dense_selection() {
        let m = sample(10);
        let idx = [0, 2, 3, 7, 8, 9];
        let p = m.principal(&idx);
        let d = dense(&m);
        for a in 0..idx.len() {
            for b in 0..idx.len() {
                assert_eq!(p.get(a, b), d[idx[a]][idx[b]]);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut m = sample(6);
        m.set(3, 3, -1.0);
        assert!(matches!(
            m.cholesky(),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
