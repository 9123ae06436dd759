use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Rating, RatingQuestion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// Mean centered `like` answer.
    #[default]
    MeanLike,
    /// Population variance of centered `like` answers: how divisive a song is.
    VarianceLike,
    /// Weighted sum of per-question mean centered answers.
    WeightedMix,
}

/// What the scheduler optimizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub mode: OutcomeMode,
    #[serde(default)]
    pub mix_weights: BTreeMap<RatingQuestion, f64>,
}

impl OutcomeSpec {
    pub fn mean_like() -> Self {
        Self::default()
    }

    pub fn variance_like() -> Self {
        Self {
            mode: OutcomeMode::VarianceLike,
            mix_weights: BTreeMap::new(),
        }
    }

    pub fn weighted_mix(weights: BTreeMap<RatingQuestion, f64>) -> Self {
        Self {
            mode: OutcomeMode::WeightedMix,
            mix_weights: weights,
        }
    }
}

fn centered_answers<'a, I>(ratings: I, q: RatingQuestion) -> Vec<f64>
where
    I: IntoIterator<Item = &'a Rating>,
{
    ratings.into_iter().filter_map(|r| r.centered(q)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Outcome of one song from all of its ratings. `None` means the song has no
/// usable answers and is left out of training.
pub fn compute_outcome<'a, I>(ratings: I, spec: &OutcomeSpec) -> Option<f64>
where
    I: IntoIterator<Item = &'a Rating>,
    I::IntoIter: Clone,
{
    let ratings = ratings.into_iter();
    match spec.mode {
        OutcomeMode::MeanLike => {
            let likes = centered_answers(ratings, RatingQuestion::Like);
            (!likes.is_empty()).then(|| mean(&likes))
        }
        OutcomeMode::VarianceLike => {
            let likes = centered_answers(ratings, RatingQuestion::Like);
            if likes.is_empty() {
                return None;
            }
            let m = mean(&likes);
            Some(likes.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / likes.len() as f64)
        }
        OutcomeMode::WeightedMix => {
            let mut total = 0.0;
            let mut used = false;
            for (&q, &w) in &spec.mix_weights {
                let answers = centered_answers(ratings.clone(), q);
                if !answers.is_empty() {
                    total += w * mean(&answers);
                    used = true;
                }
            }
            used.then_some(total)
        }
    }
}
