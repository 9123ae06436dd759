//! Shared domain types.
//!
//! Every downstream formula works on centered Likert answers (`stars - 3`, in
//! `[-2, 2]`) and on 9-dimensional acoustic descriptors. The JSON shapes here
//! are the canonical ones used by fixtures, the event log and the HTTP API.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// UTC milliseconds since the Unix epoch.
pub type Millis = i64;

pub fn now_millis() -> Millis {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as Millis)
        .unwrap_or(0)
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(ArtistId);
id_type!(GenreId);
id_type!(PrimeId);
id_type!(SongId);
id_type!(ListenerId);
id_type!(JobId);
id_type!(RatingId);

pub const FEATURE_DIM: usize = 9;
pub const PROMPT_DIM: usize = 3 * FEATURE_DIM;

/// Names of the acoustic descriptors, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "danceability",
    "energy",
    "key",
    "loudness",
    "speechiness",
    "acousticness",
    "instrumentalness",
    "liveness",
    "valence",
];

pub const LOUDNESS: usize = 3;

/// Valid range of each descriptor. Loudness is in dBFS, the key is a pitch
/// class scaled to `[0, 1]`, everything else is unitless in `[0, 1]`.
pub fn feature_domain(index: usize) -> (f64, f64) {
    if index == LOUDNESS {
        (-60.0, 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// Map a raw 0-11 pitch-class index onto `[0, 1]`.
pub fn normalize_key(pitch_class: u8) -> f64 {
    f64::from(pitch_class.min(11)) / 11.0
}

/// The 9-dimensional acoustic descriptor attached to artists, genres, primes
/// and songs. Serialized as a plain 9-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_DIM]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature `{}` is not finite",
                FEATURE_NAMES[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self([0.0; FEATURE_DIM])
    }

    pub fn splat(v: f64) -> Self {
        Self([v; FEATURE_DIM])
    }

    pub fn as_array(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn danceability(&self) -> f64 {
        self.0[0]
    }

    pub fn energy(&self) -> f64 {
        self.0[1]
    }

    pub fn key(&self) -> f64 {
        self.0[2]
    }

    pub fn loudness(&self) -> f64 {
        self.0[3]
    }

    pub fn valence(&self) -> f64 {
        self.0[8]
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; FEATURE_DIM] = v.try_into().map_err(|v: Vec<f64>| {
            Error::Validation(format!(
                "feature vector must have {FEATURE_DIM} components, got {}",
                v.len()
            ))
        })?;
        Self::new(arr)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0.to_vec()
    }
}

/// Concatenation of prime-artist, artist-prompt and genre-prompt descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PromptFeatures([f64; PROMPT_DIM]);

impl PromptFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn prime_block(&self) -> &[f64] {
        &self.0[..FEATURE_DIM]
    }

    pub fn artist_block(&self) -> &[f64] {
        &self.0[FEATURE_DIM..2 * FEATURE_DIM]
    }

    pub fn genre_block(&self) -> &[f64] {
        &self.0[2 * FEATURE_DIM..]
    }
}

impl TryFrom<Vec<f64>> for PromptFeatures {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; PROMPT_DIM] = v.try_into().map_err(|v: Vec<f64>| {
            Error::Validation(format!(
                "prompt features must have {PROMPT_DIM} components, got {}",
                v.len()
            ))
        })?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("prompt features must be finite".into()));
        }
        Ok(Self(arr))
    }
}

impl From<PromptFeatures> for Vec<f64> {
    fn from(v: PromptFeatures) -> Self {
        v.0.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistProfile {
    pub artist_id: ArtistId,
    pub display_name: String,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreProfile {
    pub genre_id: GenreId,
    pub display_name: String,
    pub features: FeatureVector,
}

/// A seed clip submitted by a musician.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prime {
    pub prime_id: PrimeId,
    pub contributor_name: String,
    pub prime_artist_features: FeatureVector,
    pub audio_ref: String,
    pub submitted_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Song {
    pub song_id: SongId,
    pub prime_id: PrimeId,
    pub artist_prompt: ArtistId,
    pub genre_prompt: GenreId,
    pub prompt_features: PromptFeatures,
    pub song_features: FeatureVector,
    pub audio_ref: String,
    pub created_at: Millis,
}

/// The seven rating questions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingQuestion {
    Happy,
    Danceable,
    Artificial,
    ClearLyrics,
    Instrumental,
    Upbeat,
    Like,
}

impl RatingQuestion {
    pub const ALL: [RatingQuestion; 7] = [
        RatingQuestion::Happy,
        RatingQuestion::Danceable,
        RatingQuestion::Artificial,
        RatingQuestion::ClearLyrics,
        RatingQuestion::Instrumental,
        RatingQuestion::Upbeat,
        RatingQuestion::Like,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatingQuestion::Happy => "happy",
            RatingQuestion::Danceable => "danceable",
            RatingQuestion::Artificial => "artificial",
            RatingQuestion::ClearLyrics => "clear_lyrics",
            RatingQuestion::Instrumental => "instrumental",
            RatingQuestion::Upbeat => "upbeat",
            RatingQuestion::Like => "like",
        }
    }

    /// The wording shown to listeners.
    pub fn prompt(self) -> &'static str {
        match self {
            RatingQuestion::Happy => "How happy is this song?",
            RatingQuestion::Danceable => "How danceable is this song?",
            RatingQuestion::Artificial => "How artificial is this song?",
            RatingQuestion::ClearLyrics => "How clear are the lyrics?",
            RatingQuestion::Instrumental => "How instrumental is this song?",
            RatingQuestion::Upbeat => "How upbeat is this song?",
            RatingQuestion::Like => "How much do you like this song?",
        }
    }
}

impl fmt::Display for RatingQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RatingQuestion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RatingQuestion::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown rating question `{s}`")))
    }
}

/// A 1-5 star answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Stars(u8);

impl Stars {
    pub fn new(raw: i64) -> Result<Self> {
        if (1..=5).contains(&raw) {
            Ok(Stars(raw as u8))
        } else {
            Err(Error::Validation(format!("stars must be in 1..=5, got {raw}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn centered(self) -> f64 {
        f64::from(self.0) - 3.0
    }
}

impl TryFrom<i64> for Stars {
    type Error = Error;

    fn try_from(raw: i64) -> Result<Self> {
        Stars::new(raw)
    }
}

impl From<Stars> for i64 {
    fn from(s: Stars) -> Self {
        i64::from(s.0)
    }
}

/// Map a 1-5 Likert answer onto `[-2, 2]`.
pub fn center_likert(raw: i64) -> Result<f64> {
    Stars::new(raw).map(Stars::centered)
}

/// One listener's answers for one song. Answers are partial: listeners may
/// skip questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub rating_id: RatingId,
    pub listener_id: ListenerId,
    pub song_id: SongId,
    pub answers: BTreeMap<RatingQuestion, Stars>,
    pub submitted_at: Millis,
}

impl Rating {
    pub fn id_for(listener: &ListenerId, song: &SongId) -> RatingId {
        RatingId(format!("{listener}/{song}"))
    }

    pub fn centered(&self, q: RatingQuestion) -> Option<f64> {
        self.answers.get(&q).map(|s| s.centered())
    }
}

/// Listener-stated weights in `[-2, 2]` steering the recommender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    pub difference: f64,
    pub happy: f64,
    pub danceable: f64,
    pub artificial: f64,
    pub upbeat: f64,
}

impl Default for PreferenceWeights {
    fn default() -> Self {
        Self {
            difference: 2.0,
            happy: 0.0,
            danceable: 0.0,
            artificial: 0.0,
            upbeat: 0.0,
        }
    }
}

impl PreferenceWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in self.named() {
            if !w.is_finite() || !(-2.0..=2.0).contains(&w) {
                return Err(Error::Validation(format!(
                    "preference weight `{name}` must be in [-2, 2], got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("difference", self.difference),
            ("happy", self.happy),
            ("danceable", self.danceable),
            ("artificial", self.artificial),
            ("upbeat", self.upbeat),
        ]
    }

    /// Weights of the rateable aspects paired with their question.
    pub fn rated_terms(&self) -> [(RatingQuestion, f64); 4] {
        [
            (RatingQuestion::Happy, self.happy),
            (RatingQuestion::Danceable, self.danceable),
            (RatingQuestion::Artificial, self.artificial),
            (RatingQuestion::Upbeat, self.upbeat),
        ]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            difference: self.difference * alpha,
            happy: self.happy * alpha,
            danceable: self.danceable * alpha,
            artificial: self.artificial * alpha,
            upbeat: self.upbeat * alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub listener_id: ListenerId,
    pub weights: PreferenceWeights,
}

impl PreferenceProfile {
    pub fn new(listener_id: ListenerId, weights: PreferenceWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            listener_id,
            weights,
        })
    }

    pub fn defaults(listener_id: ListenerId) -> Self {
        Self {
            listener_id,
            weights: PreferenceWeights::default(),
        }
    }
}

/// Concatenate prime, artist and genre descriptors in that block order.
pub fn prompt_features(
    prime: &Prime,
    artist: &ArtistProfile,
    genre: &GenreProfile,
) -> PromptFeatures {
    concat_prompt(
        &prime.prime_artist_features,
        &artist.features,
        &genre.features,
    )
}

pub fn concat_prompt(
    prime: &FeatureVector,
    artist: &FeatureVector,
    genre: &FeatureVector,
) -> PromptFeatures {
    let mut out = [0.0; PROMPT_DIM];
    for (block, src) in [prime, artist, genre].into_iter().enumerate() {
        out[block * FEATURE_DIM..(block + 1) * FEATURE_DIM].copy_from_slice(src.as_array());
    }
    PromptFeatures(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prime(v: f64) -> Prime {
        Prime {
            prime_id: "p".into(),
            contributor_name: "someone".into(),
            prime_artist_features: FeatureVector::splat(v),
            audio_ref: "primes/p.wav".into(),
            submitted_at: 0,
        }
    }

    fn artist(v: f64) -> ArtistProfile {
        ArtistProfile {
            artist_id: "a".into(),
            display_name: "A".into(),
            features: FeatureVector::splat(v),
        }
    }

    fn genre(v: f64) -> GenreProfile {
        GenreProfile {
            genre_id: "g".into(),
            display_name: "G".into(),
            features: FeatureVector::splat(v),
        }
    }

    #[test]
    fn likert_centering_endpoints() {
        assert_eq!(center_likert(3).unwrap(), 0.0);
        assert_eq!(center_likert(5).unwrap(), 2.0);
        assert_eq!(center_likert(1).unwrap(), -2.0);
        assert!(center_likert(0).is_err());
        assert!(center_likert(6).is_err());
    }

    #[test]
    fn likert_centering_is_monotone_bijection() {
        let mapped: Vec<f64> = (1..=5).map(|r| center_likert(r).unwrap()).collect();
        assert_eq!(mapped, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(mapped.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn prompt_features_zero_case() {
        let pf = prompt_features(&prime(0.0), &artist(0.0), &genre(0.0));
        assert_eq!(pf.as_slice(), &[0.0; PROMPT_DIM][..]);
    }

    #[test]
    fn prompt_features_block_order() {
        let pf = prompt_features(&prime(0.1), &artist(0.2), &genre(0.3));
        assert_eq!(pf.as_slice().len(), 27);
        assert!(pf.prime_block().iter().all(|&x| x == 0.1));
        assert!(pf.artist_block().iter().all(|&x| x == 0.2));
        assert!(pf.genre_block().iter().all(|&x| x == 0.3));
    }

    #[test]
    fn feature_vector_rejects_wrong_arity_and_nan() {
        assert!(serde_json::from_str::<FeatureVector>("[1,2,3]").is_err());
        assert!(FeatureVector::new([f64::NAN; 9]).is_err());
        let v: FeatureVector = serde_json::from_str("[0,0,0,-5,0,0,0,0,1]").unwrap();
        assert_eq!(v.loudness(), -5.0);
        assert_eq!(v.valence(), 1.0);
    }

    #[test]
    fn key_normalization() {
        assert_eq!(normalize_key(0), 0.0);
        assert_eq!(normalize_key(11), 1.0);
    }

    #[test]
    fn preference_defaults_and_bounds() {
        let p = PreferenceWeights::default();
        assert_eq!(p.difference, 2.0);
        assert_eq!(p.happy + p.danceable + p.artificial + p.upbeat, 0.0);
        let bad = PreferenceWeights {
            happy: 2.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn question_wire_names() {
        let json = serde_json::to_string(&RatingQuestion::ClearLyrics).unwrap();
        assert_eq!(json, "\"clear_lyrics\"");
        assert_eq!("like".parse::<RatingQuestion>().unwrap(), RatingQuestion::Like);
        assert!(serde_json::from_str::<Stars>("6").is_err());
    }

    fn feature_strategy() -> impl Strategy<Value = FeatureVector> {
        prop::array::uniform9(-60.0f64..1.0).prop_map(|a| FeatureVector::new(a).unwrap())
    }

    proptest! {
        #[test]
        fn domain_types_round_trip(
            pf in feature_strategy(),
            af in feature_strategy(),
            gf in feature_strategy(),
            stars in prop::collection::btree_map(0usize..7, 1i64..=5, 0..7),
            ts in 0i64..4_000_000_000_000,
        ) {
            let prompt = concat_prompt(&pf, &af, &gf);
            let song = Song {
                song_id: "s".into(),
                prime_id: "p".into(),
                artist_prompt: "a".into(),
                genre_prompt: "g".into(),
                prompt_features: prompt,
                song_features: af,
                audio_ref: "tone:x".into(),
                created_at: ts,
            };
            let back: Song = serde_json::from_str(&serde_json::to_string(&song).unwrap()).unwrap();
            prop_assert_eq!(&back, &song);
            prop_assert_eq!(back.prompt_features.prime_block(), pf.as_array().as_slice());

            let rating = Rating {
                rating_id: "r".into(),
                listener_id: "l".into(),
                song_id: "s".into(),
                answers: stars
                    .into_iter()
                    .map(|(q, s)| (RatingQuestion::ALL[q], Stars::new(s).unwrap()))
                    .collect(),
                submitted_at: ts,
            };
            let back: Rating = serde_json::from_str(&serde_json::to_string(&rating).unwrap()).unwrap();
            prop_assert_eq!(back, rating);
        }
    }
}
