use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::domain::{ArtistId, GenreId};
use crate::error::{Error, Result};
use crate::registry::Registry;

/// An (artist, genre) prompt pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub artist: ArtistId,
    pub genre: GenreId,
}

/// Draws candidate prompt pairs from a distribution over the catalog.
pub trait CandidateSampler: Send + Sync {
    fn name(&self) -> &str;
    fn sample(&self, catalog: &Catalog, m: usize, rng: &mut dyn RngCore) -> Result<Vec<Candidate>>;
}

/// Artist and genre drawn independently and uniformly; duplicates allowed.
#[derive(Debug, Default, Clone, Copy)]
pub struct UniformPairSampler;

impl CandidateSampler for UniformPairSampler {
    fn name(&self) -> &str {
        "uniform"
    }

    fn sample(&self, catalog: &Catalog, m: usize, rng: &mut dyn RngCore) -> Result<Vec<Candidate>> {
        let (na, ng) = (catalog.artists.len(), catalog.genres.len());
        if na == 0 || ng == 0 {
            return Err(Error::Validation("catalog has no artists or genres".into()));
        }
        Ok((0..m)
            .map(|_| {
                let a = rng.random_range(0..na);
                let g = rng.random_range(0..ng);
                Candidate {
                    artist: catalog.artist_at(a).artist_id.clone(),
                    genre: catalog.genre_at(g).genre_id.clone(),
                }
            })
            .collect())
    }
}

pub fn sample_candidates(catalog: &Catalog, m: usize, rng: &mut dyn RngCore) -> Result<Vec<Candidate>> {
    UniformPairSampler.sample(catalog, m, rng)
}

pub fn sampler_registry() -> Registry<dyn CandidateSampler> {
    let mut reg: Registry<dyn CandidateSampler> = Registry::new("candidate sampler");
    reg.register("uniform", |_| Ok(Box::new(UniformPairSampler)));
    reg
}
