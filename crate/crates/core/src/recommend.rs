//! Masked top-k ranking of unobserved pairs.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::factorization::FactorModel;
use crate::linalg::dot;

pub const DEFAULT_TOP_K: usize = 10;

/// Which way a list recommends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Entity is an investor, items are companies.
    CompaniesForInvestor,
    /// Entity is a company, items are investors (model trained on `Mᵀ`).
    InvestorsForCompany,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendedItem {
    pub index: usize,
    pub id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub direction: Direction,
    pub entity: usize,
    pub entity_id: String,
    pub items: Vec<RecommendedItem>,
}

/// Predicted strength `x_cᵀy_i`.
pub fn score(model: &FactorModel, company: usize, investor: usize) -> Result<f64> {
    check_index("company", company, model.num_companies())?;
    check_index("investor", investor, model.num_investors())?;
    Ok(dot(model.companies.row(company), model.investors.row(investor)))
}

fn check_index(kind: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfRange { kind, index, len });
    }
    Ok(())
}

/// Descending score, then ascending index.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices and scores of the `k` best companies for `investor` among those
/// not observed in `mask`. Partial selection, then a sort of the survivors.
pub fn top_k_indices(
    model: &FactorModel,
    mask: &InteractionDataset,
    investor: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    check_index("investor", investor, model.num_investors())?;
    if k == 0 {
        return Err(Error::InvalidConfig("top-k must be >= 1".into()));
    }
    if mask.num_companies() != model.num_companies() || mask.num_investors() != model.num_investors()
    {
        return Err(Error::Shape(format!(
            "mask is {}x{}, model is {}x{}",
            mask.num_companies(),
            mask.num_investors(),
            model.num_companies(),
            model.num_investors()
        )));
    }

    let y = model.investors.row(investor);
    let seen = mask.companies_of(investor);
    let mut seen_iter = seen.iter().copied().peekable();
    let mut candidates = Vec::with_capacity(model.num_companies() - seen.len());
    for c in 0..model.num_companies() {
        if seen_iter.peek() == Some(&(c as u32)) {
            seen_iter.next();
            continue;
        }
        candidates.push((c, dot(model.companies.row(c), y)));
    }

    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    Ok(candidates)
}

/// Top-k unseen companies for an investor.
pub fn top_k(
    model: &FactorModel,
    mask: &InteractionDataset,
    investor: usize,
    k: usize,
) -> Result<RecommendationList> {
    build_list(model, mask, investor, k, Direction::CompaniesForInvestor)
}

/// Top-k unseen investors for a company, given a model trained on the
/// transposed dataset and that transposed dataset as the mask. In such a
/// model the "investor" rows are the original companies.
pub fn top_k_transposed(
    transposed_model: &FactorModel,
    transposed_mask: &InteractionDataset,
    company: usize,
    k: usize,
) -> Result<RecommendationList> {
    build_list(
        transposed_model,
        transposed_mask,
        company,
        k,
        Direction::InvestorsForCompany,
    )
}

fn build_list(
    model: &FactorModel,
    mask: &InteractionDataset,
    entity: usize,
    k: usize,
    direction: Direction,
) -> Result<RecommendationList> {
    let ranked = top_k_indices(model, mask, entity, k)?;
    let items = ranked
        .into_iter()
        .enumerate()
        .map(|(pos, (index, score))| RecommendedItem {
            index,
            id: model.company_ids.id(index).unwrap_or_default().to_owned(),
            score,
            rank: pos + 1,
        })
        .collect();
    Ok(RecommendationList {
        direction,
        entity,
        entity_id: model.investor_ids.id(entity).unwrap_or_default().to_owned(),
        items,
    })
}

/// Lists for every entity (every model "investor" row), in index order.
pub fn recommend_all(
    model: &FactorModel,
    mask: &InteractionDataset,
    k: usize,
    direction: Direction,
) -> Result<Vec<RecommendationList>> {
    (0..model.num_investors())
        .into_par_iter()
        .map(|e| build_list(model, mask, e, k, direction))
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct JsonItem {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

/// One JSON Lines record.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct JsonList {
    pub entity: String,
    pub items: Vec<JsonItem>,
}

impl From<&RecommendationList> for JsonList {
    fn from(list: &RecommendationList) -> Self {
        Self {
            entity: list.entity_id.clone(),
            items: list
                .items
                .iter()
                .map(|it| JsonItem {
                    id: it.id.clone(),
                    score: it.score,
                    rank: it.rank,
                })
                .collect(),
        }
    }
}

pub fn write_jsonl<W: Write>(lists: &[RecommendationList], mut w: W) -> Result<()> {
    for list in lists {
        serde_json::to_writer(&mut w, &JsonList::from(list))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `entity_id,item_id,score,rank`, one row per recommended item.
pub fn write_csv<W: Write>(lists: &[RecommendationList], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["entity_id", "item_id", "score", "rank"])?;
    for list in lists {
        for it in &list.items {
            wtr.write_record([
                list.entity_id.as_str(),
                it.id.as_str(),
                &it.score.to_string(),
                &it.rank.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
