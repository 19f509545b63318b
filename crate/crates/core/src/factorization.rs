//! Alternating least squares over the dense binary objective.
//!
//! Each iteration holds the company factors fixed and updates every investor
//! row, then holds the investor factors fixed and updates every company row.
//! A row update approximately solves `(FᵀF + λI) r = Fᵀm_r` with a few warm
//! started conjugate-gradient steps, where `F` is the fixed factor matrix and
//! `m_r` the row's binary column of the interaction matrix. `FᵀF` is shared by
//! all rows of a half-update and `Fᵀm_r` is just the sum of the fixed rows of
//! the entity's observed partners.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Adjacency, IdTable, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, cg_solve_in_place, gram, CgWorkspace, DenseMatrix, SpdSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Latent dimension `f`.
    pub factors: usize,
    pub iterations: usize,
    /// CG steps per row per half-update.
    pub cg_steps: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Worker threads for row updates; 0 uses the ambient rayon pool.
    pub threads: usize,
    /// Stop once no factor entry moves by this much in an iteration.
    pub convergence_delta: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            factors: 10,
            iterations: 2,
            cg_steps: 3,
            lambda: 0.0,
            seed: 0,
            threads: 0,
            convergence_delta: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::InvalidConfig("factors must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.cg_steps == 0 {
            return Err(Error::InvalidConfig("cg_steps must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if let Some(delta) = self.convergence_delta {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "convergence delta must be finite and non-negative, got {delta}"
                )));
            }
        }
        Ok(())
    }
}

/// Trained company factors `X` (C×f) and investor factors `Y` (I×f).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub companies: DenseMatrix,
    pub investors: DenseMatrix,
    pub company_ids: IdTable,
    pub investor_ids: IdTable,
    pub config: TrainConfig,
    /// Loss after initialization, then after each completed iteration.
    /// Empty for models read back from disk.
    pub loss_trace: Vec<f64>,
}

impl FactorModel {
    pub fn num_companies(&self) -> usize {
        self.companies.rows()
    }

    pub fn num_investors(&self) -> usize {
        self.investors.rows()
    }

    pub fn factors(&self) -> usize {
        self.companies.cols()
    }

    pub fn completed_iterations(&self) -> usize {
        self.loss_trace.len().saturating_sub(1)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Seeded uniform `[0, 1/√f)` draws, row-major `X` first, then `Y`.
pub fn init_factors(
    num_companies: usize,
    num_investors: usize,
    cfg: &TrainConfig,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if num_companies == 0 || num_investors == 0 {
        return Err(Error::InvalidConfig(
            "need at least one company and one investor".into(),
        ));
    }
    if cfg.factors == 0 {
        return Err(Error::InvalidConfig("factors must be >= 1".into()));
    }
    let f = cfg.factors;
    let scale = 1.0 / (f as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * scale).collect()
    };
    let x = draw(num_companies * f);
    let y = draw(num_investors * f);
    Ok((
        DenseMatrix::from_vec(num_companies, f, x)?,
        DenseMatrix::from_vec(num_investors, f, y)?,
    ))
}

/// Updates every row of `target` against the fixed factor matrix.
/// `partners.row(r)` lists the rows of `fixed` observed with target row `r`.
pub fn half_update(
    target: &mut DenseMatrix,
    fixed: &DenseMatrix,
    partners: &Adjacency,
    lambda: f64,
    cg_steps: usize,
) -> Result<()> {
    let fixed_gram = gram(fixed)?;
    half_update_with_gram(target, fixed, &fixed_gram, partners, lambda, cg_steps)
}

/// [`half_update`] with `fixed_gram = fixedᵀ·fixed` already computed.
pub fn half_update_with_gram(
    target: &mut DenseMatrix,
    fixed: &DenseMatrix,
    fixed_gram: &DenseMatrix,
    partners: &Adjacency,
    lambda: f64,
    cg_steps: usize,
) -> Result<()> {
    let f = fixed.cols();
    if target.cols() != f || fixed_gram.rows() != f {
        return Err(Error::Shape(format!(
            "target width {}, fixed width {f}, gram {}x{}",
            target.cols(),
            fixed_gram.rows(),
            fixed_gram.cols()
        )));
    }
    if partners.rows() != target.rows() {
        return Err(Error::Shape(format!(
            "{} adjacency rows for {} target rows",
            partners.rows(),
            target.rows()
        )));
    }
    let sys = SpdSystem::new(fixed_gram, lambda)?;

    target
        .as_mut_slice()
        .par_chunks_mut(f)
        .enumerate()
        .try_for_each_init(
            || (CgWorkspace::new(f), vec![0.0; f]),
            |(ws, rhs), (r, row)| {
                rhs.fill(0.0);
                for &p in partners.row(r) {
                    for (acc, v) in rhs.iter_mut().zip(fixed.row(p as usize)) {
                        *acc += v;
                    }
                }
                cg_solve_in_place(&sys, rhs, row, cg_steps, ws)
                    .map_err(|e| Error::NonFinite(format!("row {r} update: {e}")))?;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("row {r} update")));
                }
                Ok(())
            },
        )
}

/// Runs `cfg.iterations` rounds of (investor half-update, company
/// half-update) from a seeded initialization.
pub fn train(data: &InteractionDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    if cfg.threads == 0 {
        return train_in_pool(data, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| train_in_pool(data, cfg))
}

fn train_in_pool(data: &InteractionDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    let (mut x, mut y) = init_factors(data.num_companies(), data.num_investors(), cfg)?;
    let lambda = cfg.lambda;

    let mut gx = gram(&x)?;
    let gy = gram(&y)?;
    let mut loss_trace = Vec::with_capacity(cfg.iterations + 1);
    loss_trace.push(linalg::loss_with_grams(data, &x, &y, &gx, &gy, lambda)?);

    for iteration in 1..=cfg.iterations {
        let wrap = |e: Error| Error::Training {
            iteration,
            source: Box::new(e),
        };
        let previous = cfg.convergence_delta.map(|_| (x.clone(), y.clone()));

        half_update_with_gram(&mut y, &x, &gx, data.by_investor(), lambda, cfg.cg_steps)
            .map_err(wrap)?;
        let gy = gram(&y).map_err(wrap)?;
        half_update_with_gram(&mut x, &y, &gy, data.by_company(), lambda, cfg.cg_steps)
            .map_err(wrap)?;
        gx = gram(&x).map_err(wrap)?;

        let loss = linalg::loss_with_grams(data, &x, &y, &gx, &gy, lambda).map_err(wrap)?;
        log::debug!("iteration {iteration}: loss {loss}");
        loss_trace.push(loss);

        if let (Some(delta), Some((px, py))) = (cfg.convergence_delta, previous) {
            let change = x.max_abs_diff(&px).max(y.max_abs_diff(&py));
            if change < delta {
                log::debug!("converged after {iteration} iterations (max change {change})");
                break;
            }
        }
    }

    Ok(FactorModel {
        companies: x,
        investors: y,
        company_ids: data.companies().clone(),
        investor_ids: data.investors().clone(),
        config: cfg.clone(),
        loss_trace,
    })
}

pub const MODEL_MAGIC: &[u8; 8] = b"ALSREC1\n";

impl FactorModel {
    /// Little-endian binary layout:
    /// magic, `C`, `I`, `f` (u64), `λ` (f64), seed (u64), `X` row-major,
    /// `Y` row-major, then company and investor IDs as u64-length-prefixed
    /// UTF-8 in index order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        for n in [self.num_companies(), self.num_investors(), self.factors()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&self.config.lambda.to_le_bytes())?;
        w.write_all(&self.config.seed.to_le_bytes())?;
        for v in self.companies.as_slice().iter().chain(self.investors.as_slice()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in self.company_ids.ids().iter().chain(self.investor_ids.ids()) {
            w.write_all(&(id.len() as u64).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic bytes".into()));
        }
        let num_companies = read_len(&mut r, "company count")?;
        let num_investors = read_len(&mut r, "investor count")?;
        let factors = read_len(&mut r, "factor count")?;
        let lambda = f64::from_le_bytes(read_word(&mut r, "lambda")?);
        let seed = u64::from_le_bytes(read_word(&mut r, "seed")?);
        if factors == 0 {
            return Err(Error::ModelFormat("zero factors".into()));
        }

        let companies = read_matrix(&mut r, num_companies, factors, "company factors")?;
        let investors = read_matrix(&mut r, num_investors, factors, "investor factors")?;
        let company_ids = read_ids(&mut r, num_companies, "company ids")?;
        let investor_ids = read_ids(&mut r, num_investors, "investor ids")?;

        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::ModelFormat("trailing bytes after id tables".into()));
        }

        Ok(Self {
            companies,
            investors,
            company_ids,
            investor_ids,
            config: TrainConfig {
                factors,
                lambda,
                seed,
                ..TrainConfig::default()
            },
            loss_trace: Vec::new(),
        })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelFormat(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_word<R: Read>(r: &mut R, what: &str) -> Result<[u8; 8]> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let n = u64::from_le_bytes(read_word(r, what)?);
    usize::try_from(n).map_err(|_| Error::ModelFormat(format!("{what} {n} too large")))
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::ModelFormat(format!("{what} size overflows")))?;
    let mut values = Vec::new();
    let mut word = [0u8; 8];
    for _ in 0..len {
        read_exact(r, &mut word, what)?;
        values.push(f64::from_le_bytes(word));
    }
    DenseMatrix::from_vec(rows, cols, values)
        .map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}

fn read_ids<R: Read>(r: &mut R, count: usize, what: &str) -> Result<IdTable> {
    let mut ids = Vec::new();
    for _ in 0..count {
        let len = read_len(r, what)?;
        let mut bytes = Vec::new();
        r.by_ref().take(len as u64).read_to_end(&mut bytes)?;
        if bytes.len() != len {
            return Err(Error::ModelFormat(format!("truncated {what}")));
        }
        let id = String::from_utf8(bytes)
            .map_err(|_| Error::ModelFormat(format!("{what}: invalid UTF-8")))?;
        ids.push(id);
    }
    IdTable::from_ids(ids).map_err(|e| Error::ModelFormat(format!("{what}: {e}")))
}
