//! Personalized next-song selection.
//!
//! When song `x` ends, the listener's quality score
//! `Q = P_difference + sum_i R_i(x) * P_i` sets the exponent of a distance
//! kernel: the next song `z` is drawn with probability proportional to
//! `d(z, x)^(Q/B)` over the songs not yet played. Positive `Q` favours distant
//! songs, negative `Q` similar ones, and `Q = 0` is uniform.

use std::collections::BTreeMap;

use indexmap::IndexSet;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Standardization;
use crate::domain::{FeatureVector, ListenerId, PreferenceProfile, PreferenceWeights, Rating, RatingQuestion, Song, SongId};
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    #[serde(rename = "B")]
    pub b: f64,
    pub exponent_clamp: f64,
    pub distance_floor: f64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            b: 1.0,
            exponent_clamp: 8.0,
            distance_floor: 1e-9,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("recommender.B", self.b),
            ("recommender.exponent_clamp", self.exponent_clamp),
            ("recommender.distance_floor", self.distance_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `Q / B`, saturated at `±exponent_clamp`.
    pub fn exponent(&self, q: f64) -> f64 {
        (q / self.b).clamp(-self.exponent_clamp, self.exponent_clamp)
    }
}

/// A listener's position in their personal stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub listener_id: ListenerId,
    pub current_song_id: Option<SongId>,
    pub played_song_ids: IndexSet<SongId>,
    pub preference: PreferenceProfile,
    pub rng_seed: u64,
    /// Number of selections drawn so far; indexes the session's RNG stream.
    pub draws: u64,
}

impl SessionState {
    pub fn new(listener_id: ListenerId, rng_seed: u64) -> Self {
        Self {
            preference: PreferenceProfile::defaults(listener_id.clone()),
            listener_id,
            current_song_id: None,
            played_song_ids: IndexSet::new(),
            rng_seed,
            draws: 0,
        }
    }

    /// RNG for the next selection. Each draw uses its own ChaCha stream so a
    /// recorded session replays identically.
    pub fn next_rng(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(self.draws);
        self.draws += 1;
        rng
    }
}

/// Store-wide mean centered answer per question for one song.
pub type QuestionMeans = BTreeMap<RatingQuestion, f64>;

/// `Q_x` for the song that just finished. The difference weight enters as an
/// additive bias; each rateable aspect uses the listener's own answer, then
/// the store-wide mean, then 0.
pub fn quality_score(own: Option<&Rating>, store_means: &QuestionMeans, prefs: &PreferenceWeights) -> f64 {
    let mut q = prefs.difference;
    for (question, weight) in prefs.rated_terms() {
        let r = own
            .and_then(|r| r.centered(question))
            .or_else(|| store_means.get(&question).copied())
            .unwrap_or(0.0);
        q += r * weight;
    }
    q
}

/// A song as seen by the selection rule: id plus z-scored features.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSong {
    pub song_id: SongId,
    pub features: FeatureVector,
}

/// Turns distances from the current song into selection probabilities.
pub trait SelectionRule: Send + Sync {
    fn name(&self) -> &str;
    fn probabilities(&self, distances: &[f64], q: f64, cfg: &RecommenderConfig) -> Vec<f64>;
}

/// `p(z) ∝ max(d, floor)^clamp(Q/B)`, evaluated in log space.
#[derive(Debug, Default, Clone, Copy)]
pub struct DistancePowerRule;

impl SelectionRule for DistancePowerRule {
    fn name(&self) -> &str {
        "distance_power"
    }

    fn probabilities(&self, distances: &[f64], q: f64, cfg: &RecommenderConfig) -> Vec<f64> {
        let n = distances.len();
        if n == 0 {
            return Vec::new();
        }
        let e = cfg.exponent(q);
        if e == 0.0 {
            return vec![1.0 / n as f64; n];
        }
        let logw: Vec<f64> = distances
            .iter()
            .map(|d| e * d.max(cfg.distance_floor).ln())
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Ignores distances and preferences.
#[derive(Debug, Default, Clone, Copy)]
pub struct UniformRule;

impl SelectionRule for UniformRule {
    fn name(&self) -> &str {
        "uniform"
    }

    fn probabilities(&self, distances: &[f64], _q: f64, _cfg: &RecommenderConfig) -> Vec<f64> {
        vec![1.0 / distances.len() as f64; distances.len()]
    }
}

pub fn selection_rule_registry() -> Registry<dyn SelectionRule> {
    let mut reg: Registry<dyn SelectionRule> = Registry::new("selection rule");
    reg.register("distance_power", |_| Ok(Box::new(DistancePowerRule)));
    reg.register("uniform", |_| Ok(Box::new(UniformRule)));
    reg
}

/// Exact selection probabilities over `candidates` given the current song's
/// z-scored features. With no current song the draw is uniform.
pub fn next_song_distribution(
    current: Option<&FeatureVector>,
    candidates: &[ScoredSong],
    q: f64,
    cfg: &RecommenderConfig,
) -> Vec<f64> {
    let n = candidates.len();
    match current {
        None => vec![1.0 / n as f64; n],
        Some(x) => {
            let d: Vec<f64> = candidates.iter().map(|c| c.features.distance(x)).collect();
            DistancePowerRule.probabilities(&d, q, cfg)
        }
    }
}

/// Draw an index from a probability vector. Exactly uniform inputs use a
/// direct uniform index draw.
pub fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let n = probs.len();
    if probs.iter().all(|&p| p == probs[0]) {
        return rng.random_range(0..n);
    }
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(n - 1)
}

/// Draw the next song. `candidates` are the unplayed songs with features
/// already standardized; `current` is the finished song's standardized
/// features, `None` at session start.
pub fn next_song(
    current: Option<&FeatureVector>,
    candidates: &[ScoredSong],
    q: f64,
    cfg: &RecommenderConfig,
    rng: &mut dyn RngCore,
) -> Result<SongId> {
    if candidates.is_empty() {
        return Err(Error::PoolExhausted);
    }
    if current.is_none() || cfg.exponent(q) == 0.0 {
        return Ok(candidates[rng.random_range(0..candidates.len())].song_id.clone());
    }
    let probs = next_song_distribution(current, candidates, q, cfg);
    Ok(candidates[sample_index(&probs, rng)].song_id.clone())
}

/// Record `chosen` as playing. Once every stored song has been played the
/// played set shrinks back to the current song so the stream never stalls.
pub fn advance_session<'a, I>(mut session: SessionState, chosen: SongId, all_songs: I) -> SessionState
where
    I: IntoIterator<Item = &'a SongId>,
{
    session.played_song_ids.insert(chosen.clone());
    session.current_song_id = Some(chosen.clone());
    if all_songs.into_iter().all(|s| session.played_song_ids.contains(s)) {
        session.played_song_ids.clear();
        session.played_song_ids.insert(chosen);
    }
    session
}

/// Songs the session has not played yet, standardized for distance.
pub fn unplayed<'a, I>(session: &SessionState, songs: I, standardization: &Standardization) -> Vec<ScoredSong>
where
    I: IntoIterator<Item = &'a Song>,
{
    songs
        .into_iter()
        .filter(|s| !session.played_song_ids.contains(&s.song_id))
        .map(|s| ScoredSong {
            song_id: s.song_id.clone(),
            features: standardization.apply(&s.song_features),
        })
        .collect()
}
