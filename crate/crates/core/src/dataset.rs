//! Binary investor/company interaction data.
//!
//! Raw records are deduplicated and both sides are interned to dense indices
//! in first-appearance order. Pairs are kept in two CSR-style adjacency
//! structures (companies per investor, investors per company) so that either
//! side of the alternating solve can gather its partners in `O(degree)`.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One raw row of the input: an investor invested in a company.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InteractionRecord {
    pub investor_id: String,
    pub company_id: String,
}

impl InteractionRecord {
    pub fn new(investor_id: impl Into<String>, company_id: impl Into<String>) -> Self {
        Self {
            investor_id: investor_id.into(),
            company_id: company_id.into(),
        }
    }
}

/// Bijection between string IDs and `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdTable {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdTable {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (idx, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), idx as u32).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate id {id:?} in id table")));
            }
        }
        Ok(Self { ids, lookup })
    }

    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len() as u32;
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).map(|&i| i as usize)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Row-indexed sparse binary matrix: `targets[offsets[r]..offsets[r + 1]]`
/// holds the strictly increasing column indices of row `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    fn build(rows: usize, edges: impl Iterator<Item = (u32, u32)> + Clone) -> Self {
        let mut offsets = vec![0usize; rows + 1];
        for (r, _) in edges.clone() {
            offsets[r as usize + 1] += 1;
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; offsets[rows]];
        for (r, t) in edges {
            targets[cursor[r as usize]] = t;
            cursor[r as usize] += 1;
        }
        for r in 0..rows {
            targets[offsets[r]..offsets[r + 1]].sort_unstable();
        }
        Self { offsets, targets }
    }

    /// Builds from explicit per-row lists, which must be strictly increasing.
    pub fn from_lists(lists: &[Vec<u32>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (r, list) in lists.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "adjacency row {r} is not strictly increasing"
                )));
            }
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self { offsets, targets })
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn degree(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }
}

/// Deduplicated binary interaction matrix `M` with `m[c][i] = 1` iff
/// investor `i` invested in company `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    companies: IdTable,
    investors: IdTable,
    /// Distinct `(company, investor)` pairs in first-appearance order.
    pairs: Vec<(u32, u32)>,
    by_investor: Adjacency,
    by_company: Adjacency,
}

#[derive(Default)]
struct Builder {
    companies: IdTable,
    investors: IdTable,
    seen: HashSet<(u32, u32)>,
    pairs: Vec<(u32, u32)>,
}

impl Builder {
    fn push(&mut self, investor: &str, company: &str, line: u64) -> Result<()> {
        if investor.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty investor_id".into(),
            });
        }
        if company.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty company_id".into(),
            });
        }
        let i = self.investors.intern(investor);
        let c = self.companies.intern(company);
        if self.seen.insert((c, i)) {
            self.pairs.push((c, i));
        }
        Ok(())
    }

    fn finish(self) -> Result<InteractionDataset> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(InteractionDataset::from_parts(
            self.companies,
            self.investors,
            self.pairs,
        ))
    }
}

impl InteractionDataset {
    /// Builds a dataset from raw records. Errors name the 1-based record
    /// position of a malformed record.
    pub fn ingest<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = InteractionRecord>,
    {
        let mut builder = Builder::default();
        for (pos, rec) in records.into_iter().enumerate() {
            builder.push(&rec.investor_id, &rec.company_id, pos as u64 + 1)?;
        }
        builder.finish()
    }

    /// Reads `investor_id,company_id[,count]` CSV. The optional count column
    /// is validated as an integer and otherwise ignored.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let has_count = match names.as_slice() {
            ["investor_id", "company_id"] => false,
            ["investor_id", "company_id", "count"] => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!(
                        "expected header investor_id,company_id[,count], found {}",
                        names.join(",")
                    ),
                })
            }
        };

        let mut builder = Builder::default();
        let mut record = csv::StringRecord::new();
        loop {
            let more = rdr.read_record(&mut record).map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            if !more {
                break;
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if has_count {
                let raw = &record[2];
                if raw.parse::<u64>().is_err() {
                    return Err(Error::Parse {
                        line,
                        message: format!("count {raw:?} is not a non-negative integer"),
                    });
                }
            }
            builder.push(&record[0], &record[1], line)?;
        }
        builder.finish()
    }

    /// Writes the dataset in the same CSV format `read_csv` accepts, in
    /// first-appearance order, so re-reading reproduces the same indices.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["investor_id", "company_id"])?;
        for &(c, i) in &self.pairs {
            wtr.write_record([
                self.investors.ids[i as usize].as_str(),
                self.companies.ids[c as usize].as_str(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    fn from_parts(companies: IdTable, investors: IdTable, pairs: Vec<(u32, u32)>) -> Self {
        let by_investor = Adjacency::build(investors.len(), pairs.iter().map(|&(c, i)| (i, c)));
        let by_company = Adjacency::build(companies.len(), pairs.iter().copied());
        Self {
            companies,
            investors,
            pairs,
            by_investor,
            by_company,
        }
    }

    pub fn num_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn num_investors(&self) -> usize {
        self.investors.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn companies(&self) -> &IdTable {
        &self.companies
    }

    pub fn investors(&self) -> &IdTable {
        &self.investors
    }

    /// `(company, investor)` pairs in first-appearance order.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Sorted companies investor `i` invested in.
    pub fn companies_of(&self, investor: usize) -> &[u32] {
        self.by_investor.row(investor)
    }

    /// Sorted investors of company `c`.
    pub fn investors_of(&self, company: usize) -> &[u32] {
        self.by_company.row(company)
    }

    pub fn by_investor(&self) -> &Adjacency {
        &self.by_investor
    }

    pub fn by_company(&self) -> &Adjacency {
        &self.by_company
    }

    pub fn investor_degree(&self, investor: usize) -> usize {
        self.by_investor.degree(investor)
    }

    pub fn company_degree(&self, company: usize) -> usize {
        self.by_company.degree(company)
    }

    /// `m_ci` as a boolean.
    pub fn contains(&self, company: usize, investor: usize) -> bool {
        investor < self.num_investors()
            && self
                .companies_of(investor)
                .binary_search(&(company as u32))
                .is_ok()
    }

    /// Swaps the roles of companies and investors (`M` becomes `Mᵀ`).
    pub fn transpose(&self) -> Self {
        Self {
            companies: self.investors.clone(),
            investors: self.companies.clone(),
            pairs: self.pairs.iter().map(|&(c, i)| (i, c)).collect(),
            by_investor: self.by_company.clone(),
            by_company: self.by_investor.clone(),
        }
    }

    /// Investors with at least two distinct companies, ascending.
    pub fn eligible_investors(&self) -> Vec<usize> {
        (0..self.num_investors())
            .filter(|&i| self.investor_degree(i) >= 2)
            .collect()
    }

    /// Hides one pair from each of a random `fraction` of the eligible
    /// investors. The sampled count is `round_half_up(fraction * eligible)`,
    /// raised to 1 when that rounds to zero.
    pub fn holdout_split(&self, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "holdout fraction must be in (0, 1], got {fraction}"
            )));
        }
        let eligible = self.eligible_investors();
        if eligible.is_empty() {
            return Err(Error::NoEligibleInvestors);
        }
        let count = holdout_count(fraction, eligible.len());

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, eligible.len(), count).into_vec();
        picked.sort_unstable();

        let mut hidden = Vec::with_capacity(count);
        for pos in picked {
            let investor = eligible[pos];
            let row = self.companies_of(investor);
            let company = row[rng.random_range(0..row.len())] as usize;
            hidden.push((investor, company));
        }

        let removed: HashSet<(u32, u32)> = hidden
            .iter()
            .map(|&(i, c)| (c as u32, i as u32))
            .collect();
        let pairs = self
            .pairs
            .iter()
            .copied()
            .filter(|p| !removed.contains(p))
            .collect();
        let train = Self::from_parts(self.companies.clone(), self.investors.clone(), pairs);
        Ok(HoldoutSplit { train, hidden })
    }
}

/// `round_half_up(fraction * eligible)`, at least 1.
pub fn holdout_count(fraction: f64, eligible: usize) -> usize {
    if eligible == 0 {
        return 0;
    }
    ((fraction * eligible as f64 + 0.5).floor() as usize).clamp(1, eligible)
}

/// A training dataset plus the `(investor, company)` pairs removed from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub train: InteractionDataset,
    /// Sorted by investor; at most one entry per investor.
    pub hidden: Vec<(usize, usize)>,
}
