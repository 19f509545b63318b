//! Dense kernels shared by training and evaluation.
//!
//! Everything here works on small `f × f` systems or on tall `n × f` factor
//! matrices. The Gram matrix of a factor matrix is the shared left-hand side
//! of every per-row normal equation, and it also lets the all-pairs loss be
//! evaluated without touching the `C · I` dense product.

use rayon::prelude::*;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

/// Rows per partial Gram block. The reduction adds block partials in index
/// order, so the result depends on this constant but not on thread count.
pub const GRAM_BLOCK_ROWS: usize = 256;

/// Row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Squared Frobenius norm.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry-wise difference; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `FᵀF`, exactly symmetric (upper triangle accumulated, then mirrored).
pub fn gram(factors: &DenseMatrix) -> Result<DenseMatrix> {
    if !factors.is_finite() {
        return Err(Error::NonFinite("gram input".into()));
    }
    let f = factors.cols;
    let mut acc = vec![0.0; f * f];
    if f == 0 {
        return DenseMatrix::from_vec(0, 0, acc);
    }

    let block_len = GRAM_BLOCK_ROWS * f;
    // bounded number of live partials; does not affect summation order
    let wave_len = block_len * rayon::current_num_threads().max(1);
    for wave in factors.values.chunks(wave_len) {
        let partials: Vec<Vec<f64>> = wave
            .par_chunks(block_len)
            .map(|block| upper_gram_block(block, f))
            .collect();
        for partial in &partials {
            for (a, p) in acc.iter_mut().zip(partial) {
                *a += p;
            }
        }
    }

    for j in 0..f {
        for k in 0..j {
            acc[j * f + k] = acc[k * f + j];
        }
    }
    DenseMatrix::from_vec(f, f, acc)
}

fn upper_gram_block(block: &[f64], f: usize) -> Vec<f64> {
    let mut g = vec![0.0; f * f];
    for row in block.chunks_exact(f) {
        for j in 0..f {
            let a = row[j];
            if a == 0.0 {
                continue;
            }
            let out = &mut g[j * f + j..(j + 1) * f];
            for (o, b) in out.iter_mut().zip(&row[j..]) {
                *o += a * b;
            }
        }
    }
    g
}

/// The system `(A + shift·I) x = b` for a symmetric positive semi-definite `A`.
#[derive(Debug, Clone, Copy)]
pub struct SpdSystem<'a> {
    matrix: &'a DenseMatrix,
    shift: f64,
}

impl<'a> SpdSystem<'a> {
    pub fn new(matrix: &'a DenseMatrix, shift: f64) -> Result<Self> {
        if matrix.rows != matrix.cols {
            return Err(Error::Shape(format!(
                "system matrix is {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "diagonal shift must be finite and non-negative, got {shift}"
            )));
        }
        Ok(Self { matrix, shift })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn matrix(&self) -> &DenseMatrix {
        self.matrix
    }

    /// `out = (A + shift·I) x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.matrix.row(r), x) + self.shift * x[r];
        }
    }

    /// `½ xᵀ(A + shift·I)x − bᵀx`, the function CG minimizes.
    pub fn objective(&self, b: &[f64], x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        0.5 * dot(x, &ax) - dot(b, x)
    }
}

/// Scratch vectors for [`cg_solve_in_place`], reusable across calls of the
/// same dimension.
#[derive(Debug, Clone)]
pub struct CgWorkspace {
    residual: Vec<f64>,
    direction: Vec<f64>,
    product: Vec<f64>,
}

impl CgWorkspace {
    pub fn new(dim: usize) -> Self {
        Self {
            residual: vec![0.0; dim],
            direction: vec![0.0; dim],
            product: vec![0.0; dim],
        }
    }
}

/// Relative residual threshold for the early exit.
pub const CG_RESIDUAL_TOL: f64 = 1e-12;

/// Conjugate gradient from the warm start `x0`, at most `max_steps` steps.
pub fn cg_solve(sys: &SpdSystem<'_>, b: &[f64], x0: &[f64], max_steps: usize) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut ws = CgWorkspace::new(sys.dim());
    cg_solve_in_place(sys, b, &mut x, max_steps, &mut ws)?;
    Ok(x)
}

/// Runs CG on `x` in place and returns the number of steps taken.
///
/// Stops early once `‖r‖ < 1e-12·max(1, ‖b‖)`, or when the search direction
/// has no curvature (possible only for a singular system with zero shift);
/// in that case `x` is left at the last iterate.
pub fn cg_solve_in_place(
    sys: &SpdSystem<'_>,
    b: &[f64],
    x: &mut [f64],
    max_steps: usize,
    ws: &mut CgWorkspace,
) -> Result<usize> {
    let n = sys.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::Shape(format!(
            "system is {n}-dimensional, b has {} entries, x has {}",
            b.len(),
            x.len()
        )));
    }
    if max_steps == 0 {
        return Err(Error::InvalidConfig("cg max_steps must be >= 1".into()));
    }
    if ws.residual.len() != n {
        *ws = CgWorkspace::new(n);
    }
    let CgWorkspace {
        residual: r,
        direction: p,
        product: ap,
    } = ws;

    sys.apply(x, ap);
    for k in 0..n {
        r[k] = b[k] - ap[k];
    }
    let mut rr = dot(r, r);
    let tol = CG_RESIDUAL_TOL * dot(b, b).sqrt().max(1.0);

    let mut prev_rr = rr;
    let mut steps = 0;
    for step in 1..=max_steps {
        if rr.sqrt() < tol {
            break;
        }
        if step == 1 {
            p.copy_from_slice(r);
        } else {
            let beta = rr / prev_rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        sys.apply(p, ap);
        let curvature = dot(p, ap);
        if !curvature.is_finite() {
            return Err(Error::CgBreakdown {
                step,
                detail: format!("non-finite curvature pᵀAp = {curvature}"),
            });
        }
        if curvature <= 0.0 {
            break;
        }
        let alpha = rr / curvature;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        prev_rr = rr;
        rr = dot(r, r);
        if !rr.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::CgBreakdown {
                step,
                detail: "non-finite iterate".into(),
            });
        }
        steps = step;
    }
    Ok(steps)
}

/// The all-pairs regularized squared error
///
/// `Σ_{c,i} (m_ci − x_cᵀy_i)² + λ(‖X‖² + ‖Y‖²)`
///
/// where the sum runs over every company/investor pair, observed or not.
/// Uses `Σ_{c,i} (x_cᵀy_i)² = tr(XᵀX · YᵀY)` plus a correction over the
/// observed pairs, so the cost is `O((C + I)f² + nnz·f)`.
pub fn loss(
    data: &InteractionDataset,
    companies: &DenseMatrix,
    investors: &DenseMatrix,
    lambda: f64,
) -> Result<f64> {
    check_factor_shapes(data, companies, investors)?;
    let gx = gram(companies)?;
    let gy = gram(investors)?;
    loss_with_grams(data, companies, investors, &gx, &gy, lambda)
}

/// [`loss`] with precomputed Gram matrices of both factor matrices.
pub fn loss_with_grams(
    data: &InteractionDataset,
    companies: &DenseMatrix,
    investors: &DenseMatrix,
    company_gram: &DenseMatrix,
    investor_gram: &DenseMatrix,
    lambda: f64,
) -> Result<f64> {
    check_factor_shapes(data, companies, investors)?;
    let f = companies.cols;
    if company_gram.rows != f
        || company_gram.cols != f
        || investor_gram.rows != f
        || investor_gram.cols != f
    {
        return Err(Error::Shape(format!("gram matrices must be {f}x{f}")));
    }
    // both Grams are symmetric, so tr(Gx·Gy) is the entry-wise inner product
    let trace = dot(company_gram.as_slice(), investor_gram.as_slice());

    let mut observed = 0.0;
    for i in 0..data.num_investors() {
        let y = investors.row(i);
        for &c in data.companies_of(i) {
            observed += 1.0 - 2.0 * dot(companies.row(c as usize), y);
        }
    }

    let penalty = lambda * (companies.squared_norm() + investors.squared_norm());
    Ok(trace + observed + penalty)
}

fn check_factor_shapes(
    data: &InteractionDataset,
    companies: &DenseMatrix,
    investors: &DenseMatrix,
) -> Result<()> {
    if companies.rows != data.num_companies() {
        return Err(Error::Shape(format!(
            "company factors have {} rows, dataset has {} companies",
            companies.rows,
            data.num_companies()
        )));
    }
    if investors.rows != data.num_investors() {
        return Err(Error::Shape(format!(
            "investor factors have {} rows, dataset has {} investors",
            investors.rows,
            data.num_investors()
        )));
    }
    if companies.cols != investors.cols {
        return Err(Error::Shape(format!(
            "factor widths differ: {} vs {}",
            companies.cols, investors.cols
        )));
    }
    Ok(())
}
