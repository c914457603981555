//! Uniform grids on [0, 1], grid functions with zero end values, and the
//! discrete second-derivative inner product.
//!
//! A grid function stores all `n + 1` nodal values, but only the `n - 1`
//! interior values are unknowns. The inner product
//! `(u, v)_H = h Σ D²u_i D²v_i` equals `uᵀ A v` on the interior values,
//! where `A = h D2ᵀ D2` is pentadiagonal and SPD.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::banded::{BandedCholesky, SymBanded};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    n: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    n: usize,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        Grid::new(raw.n)
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::GridTooSmall { n });
        }
        if (1.0 / n as f64) * n as f64 != 1.0 {
            return Err(Error::SpacingNotExact { n });
        }
        Ok(Self { n })
    }

    /// Number of cells; nodes are `0..=n`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.node(i))
    }

    pub fn interior_len(&self) -> usize {
        self.n - 1
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// Nodal values `u_0..u_n` with `u_0 = u_n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridFunction")]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl TryFrom<RawGridFunction> for GridFunction {
    type Error = Error;

    fn try_from(raw: RawGridFunction) -> Result<Self> {
        GridFunction::new(raw.grid, raw.values)
    }
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n + 1 {
            return Err(Error::LengthMismatch {
                expected: grid.n + 1,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if values[0] != 0.0 || values[grid.n] != 0.0 {
            return Err(Error::BoundaryNonzero {
                left: values[0],
                right: values[grid.n],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n + 1],
        }
    }

    /// Samples `f` at the interior nodes; the end values are set to zero.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.n + 1];
        for (i, v) in values.iter_mut().enumerate().take(grid.n).skip(1) {
            *v = f(grid.node(i));
        }
        Self::new(grid, values)
    }

    pub fn from_interior(grid: Grid, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.n - 1 {
            return Err(Error::LengthMismatch {
                expected: grid.n - 1,
                found: interior.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.n + 1);
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.grid.n]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        GridFunction::new(self.grid, values)
    }

    pub fn scale(&self, alpha: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}

pub fn h_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    let h = u.grid.h();
    let du = second_diff(u);
    let dv = second_diff(v);
    Ok(h * du.iter().zip(&dv).map(|(a, b)| a * b).sum::<f64>())
}

pub fn h_norm(u: &GridFunction) -> f64 {
    h_inner(u, u).expect("same grid").max(0.0).sqrt()
}

/// `D²u_i` for `i = 1..n-1`.
pub fn second_diff(u: &GridFunction) -> Vec<f64> {
    let h2 = u.grid.h() * u.grid.h();
    u.values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / h2)
        .collect()
}

/// Centered first differences `(u_{i+1} - u_{i-1}) / 2h` for `i = 1..n-1`.
pub fn centered_diff(u: &GridFunction) -> Vec<f64> {
    let h = u.grid.h();
    u.values
        .windows(3)
        .map(|w| (w[2] - w[0]) / (2.0 * h))
        .collect()
}

/// `max_i |u_{i+1} - u_i| / h` over all cells.
pub fn first_diff_sup(u: &GridFunction) -> f64 {
    let h = u.grid.h();
    u.values
        .windows(2)
        .fold(0.0, |m, w| m.max(((w[1] - w[0]) / h).abs()))
}

pub fn reflect(u: &GridFunction) -> GridFunction {
    let mut values = u.values.clone();
    values.reverse();
    GridFunction {
        grid: u.grid,
        values,
    }
}

/// The Gram operator `A` of the H inner product with its Cholesky factor.
#[derive(Debug)]
pub struct HMetric {
    grid: Grid,
    gram: SymBanded,
    chol: BandedCholesky,
    c_p: OnceLock<f64>,
}

impl HMetric {
    pub fn new(grid: Grid) -> Self {
        let m = grid.interior_len();
        let h = grid.h();
        let s = 1.0 / (h * h * h);
        // A = h D2ᵀD2 with D2 = tridiag(1, -2, 1) / h².
        let mut gram = SymBanded::zeros(m, 2);
        for i in 0..m {
            let diag = if i == 0 || i == m - 1 { 5.0 } else { 6.0 };
            gram.set(i, i, diag * s);
            if i >= 1 {
                gram.set(i, i - 1, -4.0 * s);
            }
            if i >= 2 {
                gram.set(i, i - 2, s);
            }
        }
        let chol = gram
            .cholesky()
            .expect("the H Gram matrix is SPD for every valid grid");
        Self {
            grid,
            gram,
            chol,
            c_p: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn gram(&self) -> &SymBanded {
        &self.gram
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.gram.mul_vec(x)
    }

    /// Solves `A x = b` on interior unknowns.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    /// `sqrt(bᵀ A⁻¹ b)`: the dual norm of a nodal load vector.
    pub fn dual_norm(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        x.iter().zip(b).map(|(a, c)| a * c).sum::<f64>().max(0.0).sqrt()
    }

    /// Riesz representative of the nodal load vector `b`.
    pub fn riesz(&self, b: &[f64]) -> GridFunction {
        GridFunction::from_interior(self.grid, &self.solve(b)).expect("finite solve")
    }

    /// Operator norm of `u ↦ first_diff_sup(u)` with respect to the H norm.
    pub fn embedding_constant(&self) -> f64 {
        *self.c_p.get_or_init(|| embedding_constant(self))
    }
}

/// Each forward difference `ℓ_i(u) = (u_{i+1} - u_i)/h` is a linear functional
/// whose norm on the unit H ball is `sqrt(ℓᵀ A⁻¹ ℓ)`.
fn embedding_constant(metric: &HMetric) -> f64 {
    let grid = metric.grid;
    let m = grid.interior_len();
    let h = grid.h();
    let mut best: f64 = 0.0;
    for i in 0..grid.n {
        let mut ell = vec![0.0; m];
        // interior index of node j is j - 1
        if i < m {
            ell[i] += 1.0 / h;
        }
        if i >= 1 {
            ell[i - 1] -= 1.0 / h;
        }
        best = best.max(metric.dual_norm(&ell));
    }
    best
}
