//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use alsrec::dataset::{Adjacency, InteractionDataset, InteractionRecord};
use alsrec::linalg::DenseMatrix;
use alsrec::synth::PlantedBlocks;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    let values = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, values).unwrap()
}

/// `BᵀB + 0.1·I` for a random `(n + 2) × n` matrix `B`; well conditioned SPD.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let b = random_matrix(rng, n + 2, n, -1.0, 1.0);
    let a = to_na(&b).transpose() * to_na(&b) + DMatrix::identity(n, n) * 0.1;
    let mut out = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            // symmetrize exactly
            out.set(r, c, 0.5 * (a[(r, c)] + a[(c, r)]));
        }
    }
    out
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Direct dense solve of `(A + shift·I) x = b` by LU.
pub fn direct_solve(a: &DenseMatrix, shift: f64, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let m = to_na(a) + DMatrix::identity(n, n) * shift;
    let x = m.lu().solve(&DVector::from_column_slice(b)).expect("singular");
    x.iter().copied().collect()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

/// `½xᵀ(A + sI)x − bᵀx` via nalgebra.
pub fn quadratic(a: &DenseMatrix, shift: f64, b: &[f64], x: &[f64]) -> f64 {
    let n = a.rows();
    let m = to_na(a) + DMatrix::identity(n, n) * shift;
    let xv = DVector::from_column_slice(x);
    0.5 * xv.dot(&(&m * &xv)) - DVector::from_column_slice(b).dot(&xv)
}

/// Textbook CG written out separately, recording every iterate.
pub fn cg_iterates(a: &DenseMatrix, shift: f64, b: &[f64], x0: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let n = a.rows();
    let m = to_na(a) + DMatrix::identity(n, n) * shift;
    let bv = DVector::from_column_slice(b);
    let mut x = DVector::from_column_slice(x0);
    let mut r = &bv - &m * &x;
    let mut p = r.clone();
    let mut out = vec![x.iter().copied().collect()];
    for _ in 0..steps {
        let rr = r.dot(&r);
        if rr.sqrt() < 1e-12 * bv.norm().max(1.0) {
            break;
        }
        let ap = &m * &p;
        let alpha = rr / p.dot(&ap);
        x += &p * alpha;
        r -= &ap * alpha;
        let beta = r.dot(&r) / rr;
        p = &r + &p * beta;
        out.push(x.iter().copied().collect());
    }
    out
}

/// Dense `C × I` binary matrix of a dataset.
pub fn dense_m(d: &InteractionDataset) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; d.num_investors()]; d.num_companies()];
    for &(c, i) in d.pairs() {
        m[c as usize][i as usize] = 1.0;
    }
    m
}

/// Double loop over every pair.
pub fn brute_force_loss(d: &InteractionDataset, x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> f64 {
    let m = dense_m(d);
    let mut total = 0.0;
    for c in 0..d.num_companies() {
        for i in 0..d.num_investors() {
            let pred: f64 = (0..x.cols()).map(|k| x.get(c, k) * y.get(i, k)).sum();
            total += (m[c][i] - pred).powi(2);
        }
    }
    let reg: f64 = x.as_slice().iter().chain(y.as_slice()).map(|v| v * v).sum();
    total + lambda * reg
}

/// Exact per-row normal-equation solve, building each right-hand side from
/// the dense binary row.
pub fn exact_half_update(
    target: &DenseMatrix,
    fixed: &DenseMatrix,
    partners: &Adjacency,
    lambda: f64,
) -> DenseMatrix {
    let f = fixed.cols();
    let fx = to_na(fixed);
    let lhs = fx.transpose() * &fx + DMatrix::identity(f, f) * lambda;
    let lu = lhs.lu();
    let mut out = DenseMatrix::zeros(target.rows(), f);
    for r in 0..target.rows() {
        let mut m_r = DVector::zeros(fixed.rows());
        for &p in partners.row(r) {
            m_r[p as usize] = 1.0;
        }
        let rhs = fx.transpose() * m_r;
        let sol = lu.solve(&rhs).expect("singular normal equations");
        out.row_mut(r).copy_from_slice(sol.as_slice());
    }
    out
}

/// Full sort of every unseen company: descending score, ascending index.
pub fn full_sort_top_k(
    x: &DenseMatrix,
    y: &DenseMatrix,
    mask: &InteractionDataset,
    investor: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..x.rows())
        .filter(|&c| !mask.contains(c, investor))
        .map(|c| {
            let s: f64 = (0..x.cols()).map(|j| x.get(c, j) * y.get(investor, j)).sum();
            (c, s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Random dataset over `companies × investors` where every entity appears.
pub fn random_dataset(rng: &mut ChaCha8Rng, companies: usize, investors: usize, density: f64) -> InteractionDataset {
    let mut recs = Vec::new();
    // a diagonal sweep guarantees every index is used, in order
    for k in 0..companies.max(investors) {
        recs.push(InteractionRecord::new(
            format!("i{}", k % investors),
            format!("c{}", k % companies),
        ));
    }
    for i in 0..investors {
        for c in 0..companies {
            if rng.random::<f64>() < density {
                recs.push(InteractionRecord::new(format!("i{i}"), format!("c{c}")));
            }
        }
    }
    InteractionDataset::ingest(recs).unwrap()
}

/// The two-block benchmark: 40 investors × 40 companies, within-block
/// density 0.8, no cross-block pairs.
pub fn planted_two_block(seed: u64) -> InteractionDataset {
    let g = PlantedBlocks {
        investors: 40,
        companies: 40,
        blocks: 2,
        density: 0.8,
        noise: 0.0,
        seed,
    };
    InteractionDataset::ingest(g.generate().unwrap()).unwrap()
}

/// Sparse noisy block data on which large-`f`, unregularized training
/// overfits after a couple of iterations.
pub fn sparse_noisy_blocks() -> InteractionDataset {
    let g = PlantedBlocks {
        investors: 200,
        companies: 200,
        blocks: 4,
        density: 0.15,
        noise: 0.02,
        seed: 7,
    };
    InteractionDataset::ingest(g.generate().unwrap()).unwrap()
}
