//! Planted block-model interaction generator.
//!
//! Investors and companies are split into `blocks` contiguous groups. A pair
//! in the same block is present with probability `density`, any other pair
//! with probability `noise`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBlocks {
    pub investors: usize,
    pub companies: usize,
    pub blocks: usize,
    pub density: f64,
    pub noise: f64,
    pub seed: u64,
}

impl PlantedBlocks {
    pub fn validate(&self) -> Result<()> {
        if self.investors == 0 || self.companies == 0 {
            return Err(Error::InvalidConfig(
                "investor and company counts must be >= 1".into(),
            ));
        }
        if self.blocks == 0 || self.blocks > self.investors.min(self.companies) {
            return Err(Error::InvalidConfig(format!(
                "blocks must be in 1..={}, got {}",
                self.investors.min(self.companies),
                self.blocks
            )));
        }
        for (name, p) in [("density", self.density), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a probability, got {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn investor_block(&self, investor: usize) -> usize {
        investor * self.blocks / self.investors
    }

    pub fn company_block(&self, company: usize) -> usize {
        company * self.blocks / self.companies
    }

    pub fn investor_id(investor: usize) -> String {
        format!("inv{investor}")
    }

    pub fn company_id(company: usize) -> String {
        format!("co{company}")
    }

    fn block_sizes(n: usize, blocks: usize) -> Vec<usize> {
        let mut sizes = vec![0; blocks];
        for j in 0..n {
            sizes[j * blocks / n] += 1;
        }
        sizes
    }

    /// Number of within-block pairs.
    pub fn within_block_pairs(&self) -> usize {
        let inv = Self::block_sizes(self.investors, self.blocks);
        let com = Self::block_sizes(self.companies, self.blocks);
        inv.iter().zip(&com).map(|(a, b)| a * b).sum()
    }

    /// Mean and variance of the generated pair count (a sum of independent
    /// Bernoulli draws).
    pub fn pair_count_moments(&self) -> (f64, f64) {
        let within = self.within_block_pairs() as f64;
        let cross = (self.investors * self.companies) as f64 - within;
        let mean = within * self.density + cross * self.noise;
        let var = within * self.density * (1.0 - self.density)
            + cross * self.noise * (1.0 - self.noise);
        (mean, var)
    }

    /// Investor-major, company-minor; one uniform draw per pair.
    pub fn generate(&self) -> Result<Vec<InteractionRecord>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for i in 0..self.investors {
            let bi = self.investor_block(i);
            for c in 0..self.companies {
                let p = if self.company_block(c) == bi {
                    self.density
                } else {
                    self.noise
                };
                if rng.random::<f64>() < p {
                    out.push(InteractionRecord::new(
                        Self::investor_id(i),
                        Self::company_id(c),
                    ));
                }
            }
        }
        Ok(out)
    }
}

/// `investor_id,company_id` CSV, the same format the dataset reader takes.
pub fn write_records<W: Write>(records: &[InteractionRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["investor_id", "company_id"])?;
    for r in records {
        wtr.write_record([&r.investor_id, &r.company_id])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PlantedBlocks {
        PlantedBlocks {
            investors: 12,
            companies: 9,
            blocks: 3,
            density: 1.0,
            noise: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn degenerate_probabilities_give_exact_blocks() {
        let g = base();
        let recs = g.generate().unwrap();
        assert_eq!(recs.len(), 4 * 3 * 3);
        for r in &recs {
            let i: usize = r.investor_id[3..].parse().unwrap();
            let c: usize = r.company_id[2..].parse().unwrap();
            assert_eq!(g.investor_block(i), g.company_block(c));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let g = PlantedBlocks { density: 0.5, noise: 0.1, ..base() };
        assert_eq!(g.generate().unwrap(), g.generate().unwrap());
        let other = PlantedBlocks { seed: 6, ..g.clone() };
        assert_ne!(g.generate().unwrap(), other.generate().unwrap());
    }

    #[test]
    fn too_many_blocks() {
        let g = PlantedBlocks { blocks: 10, ..base() };
        assert!(matches!(g.generate(), Err(Error::InvalidConfig(_))));
        let g = PlantedBlocks { noise: 1.5, ..base() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn uneven_blocks_are_counted() {
        let g = PlantedBlocks { investors: 5, companies: 4, blocks: 2, ..base() };
        // investor blocks {0,1,2},{3,4}; company blocks {0,1},{2,3}
        assert_eq!(g.within_block_pairs(), 3 * 2 + 2 * 2);
        assert_eq!(g.generate().unwrap().len(), 10);
    }
}
