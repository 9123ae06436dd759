//! Synthetic listeners with planted preference functions.
//!
//! A listener's true score for a prompt is a function of its z-scored prompt
//! features: linear (`w·z + b`), or linear plus a per-feature quadratic term
//! for the misspecified population. Scores land roughly in `[-2, 2]`, the
//! centered star range.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use radio_core::catalog::Catalog;
use radio_core::domain::{
    concat_prompt, ArtistId, FeatureVector, GenreId, ListenerId, Prime, PromptFeatures, RatingQuestion, FEATURE_DIM,
    PROMPT_DIM,
};
use radio_core::error::Result;
use radio_core::registry::{param, Registry};
use serde::{Deserialize, Serialize};

/// Target standard deviation of the population-mean score across the
/// catalog's (artist, genre) pairs.
pub const PAIR_SCORE_SD: f64 = 0.9;

/// Per-column centering used by the planted functions; derived from the
/// catalog so that loudness (in dB) does not dominate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl PromptScaling {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        let stats = |vs: Vec<&FeatureVector>| {
            let n = vs.len() as f64;
            let mut c = [0.0; FEATURE_DIM];
            let mut s = [0.0; FEATURE_DIM];
            for j in 0..FEATURE_DIM {
                c[j] = vs.iter().map(|v| v.get(j)).sum::<f64>() / n;
                let var = vs.iter().map(|v| (v.get(j) - c[j]).powi(2)).sum::<f64>() / n;
                s[j] = var.sqrt().max(1e-6);
            }
            (c, s)
        };
        let (ac, as_) = stats(catalog.artists.values().map(|a| &a.features).collect());
        let (gc, gs) = stats(catalog.genres.values().map(|g| &g.features).collect());
        // primes are artist recordings, so the prime block shares artist stats
        Self {
            center: [ac, ac, gc].concat(),
            scale: [as_, as_, gs].concat(),
        }
    }

    pub fn apply(&self, x: &PromptFeatures) -> Vec<f64> {
        x.as_slice()
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }
}

/// A planted scoring function over prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFunction {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on `z² − 1`; empty for linear listeners.
    pub curvature: Vec<f64>,
}

impl LatentFunction {
    pub fn score_z(&self, z: &[f64]) -> f64 {
        let lin: f64 = self.weights.iter().zip(z).map(|(w, v)| w * v).sum();
        let quad: f64 = self.curvature.iter().zip(z).map(|(c, v)| c * (v * v - 1.0)).sum();
        self.intercept + lin + quad
    }

    fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.curvature.iter_mut().for_each(|c| *c *= k);
        self.intercept *= k;
    }

    /// Parameter-wise mean; exact for the mean score because scores are
    /// linear in the parameters.
    pub fn average<'a>(fs: impl IntoIterator<Item = &'a LatentFunction>) -> Self {
        let fs: Vec<&LatentFunction> = fs.into_iter().collect();
        let n = fs.len() as f64;
        let avg = |get: &dyn Fn(&LatentFunction) -> &Vec<f64>| -> Vec<f64> {
            let len = get(fs[0]).len();
            (0..len).map(|j| fs.iter().map(|f| get(f)[j]).sum::<f64>() / n).collect()
        };
        Self {
            weights: avg(&|f| &f.weights),
            intercept: fs.iter().map(|f| f.intercept).sum::<f64>() / n,
            curvature: avg(&|f| &f.curvature),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticListener {
    pub listener_id: ListenerId,
    pub latent: LatentFunction,
    pub noise_sd: f64,
    /// Offsets added to the feature-driven answers for the six non-`like`
    /// questions, one per question in canonical order.
    pub answer_bias: [f64; 7],
}

/// Star answer for a centered score: clamped rounding into 1..=5.
pub fn stars_for(score: f64) -> i64 {
    score.round().clamp(-2.0, 2.0) as i64 + 3
}

impl SyntheticListener {
    /// Answers to all seven questions for one song.
    pub fn answers(
        &self,
        z: &[f64],
        song: &FeatureVector,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(RatingQuestion, i64)> {
        let mut noise = || {
            if self.noise_sd > 0.0 {
                Normal::new(0.0, self.noise_sd).expect("finite sd").sample(rng)
            } else {
                0.0
            }
        };
        RatingQuestion::ALL
            .iter()
            .map(|&q| {
                let centered = match q {
                    RatingQuestion::Like => self.latent.score_z(z),
                    // the rest read off audible properties of the song
                    RatingQuestion::Happy => 4.0 * song.valence() - 2.0,
                    RatingQuestion::Danceable => 4.0 * song.danceability() - 2.0,
                    RatingQuestion::Artificial => 2.0 - 4.0 * song.get(5),
                    RatingQuestion::ClearLyrics => 8.0 * song.get(4) - 1.5,
                    RatingQuestion::Instrumental => 4.0 * song.get(6) - 1.5,
                    RatingQuestion::Upbeat => 4.0 * song.energy() - 2.0,
                };
                (q, stars_for(centered + self.answer_bias[q.index()] + noise()))
            })
            .collect()
    }
}

/// Builds a listener population for one run.
pub trait PopulationModel: Send + Sync {
    fn name(&self) -> &str;
    fn build(&self, catalog: &Catalog, size: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Vec<SyntheticListener>;
}

/// Shared taste plus individual deviations, all linear.
#[derive(Debug, Clone)]
pub struct LinearPopulation {
    /// Spread of individual weights around the shared ones.
    pub individuality: f64,
}

/// Linear taste plus a quadratic term the ridge model cannot represent.
#[derive(Debug, Clone)]
pub struct QuadraticPopulation {
    pub individuality: f64,
    pub curvature: f64,
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn draw_population(
    catalog: &Catalog,
    size: usize,
    noise_sd: f64,
    individuality: f64,
    curvature: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<SyntheticListener> {
    // prime block weighs less: the prime is given, not chosen
    let block_sd = |j: usize| if j < FEATURE_DIM { 0.3 } else { 1.0 };
    let shared: Vec<f64> = (0..PROMPT_DIM).map(|j| normal(rng, block_sd(j))).collect();
    let shared_curv: Vec<f64> = match curvature {
        Some(c) => (0..PROMPT_DIM).map(|j| if j < FEATURE_DIM { 0.0 } else { normal(rng, c) }).collect(),
        None => Vec::new(),
    };
    let mut listeners: Vec<SyntheticListener> = (0..size)
        .map(|i| SyntheticListener {
            listener_id: ListenerId(format!("sim-listener-{i:03}")),
            latent: LatentFunction {
                weights: shared.iter().map(|w| w + normal(rng, individuality)).collect(),
                intercept: normal(rng, 0.2),
                curvature: shared_curv.iter().map(|c| c + normal(rng, individuality * 0.5)).collect(),
            },
            noise_sd,
            answer_bias: std::array::from_fn(|_| normal(rng, 0.3)),
        })
        .collect();

    // rescale so the mean score varies by about PAIR_SCORE_SD across pairs
    let scaling = PromptScaling::from_catalog(catalog);
    let mean = LatentFunction::average(listeners.iter().map(|l| &l.latent));
    let reference = reference_prime(catalog);
    let scores: Vec<f64> = all_pairs(catalog)
        .map(|(a, g)| mean.score_z(&scaling.apply(&pair_features(catalog, &reference, &a, &g))))
        .collect();
    let m = scores.iter().sum::<f64>() / scores.len() as f64;
    let sd = (scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / scores.len() as f64).sqrt();
    if sd > 1e-12 {
        let k = PAIR_SCORE_SD / sd;
        listeners.iter_mut().for_each(|l| l.latent.scale(k));
    }
    listeners
}

impl PopulationModel for LinearPopulation {
    fn name(&self) -> &str {
        "linear"
    }

    fn build(&self, catalog: &Catalog, size: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Vec<SyntheticListener> {
        draw_population(catalog, size, noise_sd, self.individuality, None, rng)
    }
}

impl PopulationModel for QuadraticPopulation {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn build(&self, catalog: &Catalog, size: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Vec<SyntheticListener> {
        draw_population(catalog, size, noise_sd, self.individuality, Some(self.curvature), rng)
    }
}

pub fn population_registry() -> Registry<dyn PopulationModel> {
    let mut reg: Registry<dyn PopulationModel> = Registry::new("population");
    reg.register("linear", |p| {
        Ok(Box::new(LinearPopulation {
            individuality: param(p, "individuality")?.unwrap_or(0.5),
        }))
    });
    reg.register("quadratic", |p| {
        Ok(Box::new(QuadraticPopulation {
            individuality: param(p, "individuality")?.unwrap_or(0.5),
            curvature: param(p, "curvature")?.unwrap_or(0.6),
        }))
    });
    reg
}

/// The catalog's mean artist, used as a neutral prime.
pub fn reference_prime(catalog: &Catalog) -> Prime {
    let n = catalog.artists.len() as f64;
    let mut v = [0.0; FEATURE_DIM];
    for a in catalog.artists.values() {
        for (j, x) in v.iter_mut().enumerate() {
            *x += a.features.get(j) / n;
        }
    }
    Prime {
        prime_id: "reference".into(),
        contributor_name: String::new(),
        prime_artist_features: FeatureVector::new(v).expect("mean of finite values"),
        audio_ref: String::new(),
        submitted_at: 0,
    }
}

pub fn all_pairs(catalog: &Catalog) -> impl Iterator<Item = (ArtistId, GenreId)> + '_ {
    catalog
        .artists
        .keys()
        .flat_map(move |a| catalog.genres.keys().map(move |g| (a.clone(), g.clone())))
}

pub fn pair_features(catalog: &Catalog, prime: &Prime, a: &ArtistId, g: &GenreId) -> PromptFeatures {
    concat_prompt(
        &prime.prime_artist_features,
        &catalog.artists[a].features,
        &catalog.genres[g].features,
    )
}

/// A prime recorded by a random catalog artist, slightly perturbed.
pub fn random_prime(catalog: &Catalog, rng: &mut ChaCha8Rng) -> Result<FeatureVector> {
    let base = catalog.artist_at(rng.random_range(0..catalog.artists.len())).features;
    let mut v = *base.as_array();
    for (j, x) in v.iter_mut().enumerate() {
        let (lo, hi) = radio_core::domain::feature_domain(j);
        *x = (*x + rng.random_range(-0.05..0.05) * (hi - lo)).clamp(lo, hi);
    }
    FeatureVector::new(v)
}

/// Every catalog pair with its score under `f`, in catalog order.
pub fn oracle_pairs<'a>(
    catalog: &'a Catalog,
    prime: &'a Prime,
    f: &'a LatentFunction,
    scaling: &'a PromptScaling,
) -> impl Iterator<Item = (ArtistId, GenreId, f64)> + 'a {
    all_pairs(catalog).map(move |(a, g)| {
        let s = f.score_z(&scaling.apply(&pair_features(catalog, prime, &a, &g)));
        (a, g, s)
    })
}
