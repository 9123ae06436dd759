//! Artist and genre descriptors, loaded from JSON fixtures through a
//! [`FeatureProvider`], plus the z-score statistics used for song distances.

use std::io::Read;
use std::path::PathBuf;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{ArtistId, ArtistProfile, FeatureVector, GenreId, GenreProfile, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::registry::{param, Registry};

/// Smallest standard deviation used when z-scoring; degenerate dimensions are
/// clamped to it.
pub const STDDEV_FLOOR: f64 = 1e-9;

/// Per-dimension mean and population standard deviation over stored songs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; FEATURE_DIM],
    pub stddev: [f64; FEATURE_DIM],
    pub sample_count: usize,
}

impl Default for Standardization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Standardization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; FEATURE_DIM],
            stddev: [1.0; FEATURE_DIM],
            sample_count: 0,
        }
    }

    /// Statistics over `samples`. Fewer than two samples yields the identity.
    pub fn from_samples<'a, I>(samples: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let samples: Vec<&FeatureVector> = samples.into_iter().collect();
        let n = samples.len();
        if n < 2 {
            return Self {
                sample_count: n,
                ..Self::identity()
            };
        }
        let mut mean = [0.0; FEATURE_DIM];
        for v in &samples {
            for (m, x) in mean.iter_mut().zip(v.as_array()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; FEATURE_DIM];
        for v in &samples {
            for i in 0..FEATURE_DIM {
                let d = v.get(i) - mean[i];
                var[i] += d * d;
            }
        }
        let stddev = var.map(|s| (s / n as f64).sqrt().max(STDDEV_FLOOR));
        Self {
            mean,
            stddev,
            sample_count: n,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.sample_count < 2
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        if self.is_identity() {
            return *v;
        }
        let mut out = [0.0; FEATURE_DIM];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (v.get(i) - self.mean[i]) / self.stddev[i];
        }
        // (finite - finite) / (>= floor) stays finite
        FeatureVector::new(out).expect("standardized features are finite")
    }
}

/// The artist and genre roster available as prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub artists: IndexMap<ArtistId, ArtistProfile>,
    pub genres: IndexMap<GenreId, GenreProfile>,
    #[serde(default)]
    pub standardization: Standardization,
}

impl Catalog {
    pub fn new(artists: Vec<ArtistProfile>, genres: Vec<GenreProfile>) -> Result<Self> {
        if artists.is_empty() {
            return Err(Error::CatalogLoad {
                record: "artists".into(),
                reason: "no artists".into(),
            });
        }
        if genres.is_empty() {
            return Err(Error::CatalogLoad {
                record: "genres".into(),
                reason: "no genres".into(),
            });
        }
        let mut a = IndexMap::with_capacity(artists.len());
        for artist in artists {
            let id = artist.artist_id.clone();
            if a.insert(id.clone(), artist).is_some() {
                return Err(Error::CatalogLoad {
                    record: format!("artist `{id}`"),
                    reason: "duplicate artist_id".into(),
                });
            }
        }
        let mut g = IndexMap::with_capacity(genres.len());
        for genre in genres {
            let id = genre.genre_id.clone();
            if g.insert(id.clone(), genre).is_some() {
                return Err(Error::CatalogLoad {
                    record: format!("genre `{id}`"),
                    reason: "duplicate genre_id".into(),
                });
            }
        }
        Ok(Self {
            artists: a,
            genres: g,
            standardization: Standardization::identity(),
        })
    }

    pub fn artist(&self, id: &ArtistId) -> Result<&ArtistProfile> {
        self.artists.get(id).ok_or_else(|| Error::UnknownId {
            kind: "artist",
            id: id.to_string(),
        })
    }

    pub fn genre(&self, id: &GenreId) -> Result<&GenreProfile> {
        self.genres.get(id).ok_or_else(|| Error::UnknownId {
            kind: "genre",
            id: id.to_string(),
        })
    }

    pub fn artist_at(&self, index: usize) -> &ArtistProfile {
        &self.artists[index]
    }

    pub fn genre_at(&self, index: usize) -> &GenreProfile {
        &self.genres[index]
    }

    /// Recompute z-score statistics from the current song features.
    pub fn refresh_standardization<'a, I>(&mut self, song_features: I)
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        self.standardization = Standardization::from_samples(song_features);
    }

    pub fn standardize(&self, v: &FeatureVector) -> FeatureVector {
        self.standardization.apply(v)
    }
}

/// Free-function form of [`Catalog::standardize`].
pub fn standardize(v: &FeatureVector, catalog: &Catalog) -> FeatureVector {
    catalog.standardize(v)
}

#[derive(Deserialize)]
struct Document {
    artists: Vec<Value>,
    genres: Vec<Value>,
}

#[derive(Deserialize)]
struct RawArtist {
    artist_id: String,
    display_name: String,
    features: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGenre {
    genre_id: String,
    display_name: String,
    features: Vec<f64>,
}

fn record_label(kind: &str, index: usize, v: &Value, id_key: &str) -> String {
    match v.get(id_key).and_then(Value::as_str) {
        Some(id) => format!("{kind} `{id}`"),
        None => format!("{kind}[{index}]"),
    }
}

fn parse_features(label: &str, raw: Vec<f64>) -> Result<FeatureVector> {
    FeatureVector::try_from(raw).map_err(|e| Error::CatalogLoad {
        record: label.to_owned(),
        reason: e.to_string(),
    })
}

/// Parse a catalog document:
/// `{"artists": [{"artist_id", "display_name", "features": [9]}], "genres": [...]}`.
pub fn load_catalog<R: Read>(reader: R) -> Result<Catalog> {
    let doc: Document = serde_json::from_reader(reader).map_err(|e| Error::CatalogLoad {
        record: "document".into(),
        reason: e.to_string(),
    })?;

    let mut artists = Vec::with_capacity(doc.artists.len());
    for (i, v) in doc.artists.into_iter().enumerate() {
        let label = record_label("artist", i, &v, "artist_id");
        let raw: RawArtist = serde_json::from_value(v).map_err(|e| Error::CatalogLoad {
            record: label.clone(),
            reason: e.to_string(),
        })?;
        artists.push(ArtistProfile {
            artist_id: ArtistId(raw.artist_id),
            display_name: raw.display_name,
            features: parse_features(&label, raw.features)?,
        });
    }

    let mut genres = Vec::with_capacity(doc.genres.len());
    for (i, v) in doc.genres.into_iter().enumerate() {
        let label = record_label("genre", i, &v, "genre_id");
        let raw: RawGenre = serde_json::from_value(v).map_err(|e| Error::CatalogLoad {
            record: label.clone(),
            reason: e.to_string(),
        })?;
        genres.push(GenreProfile {
            genre_id: GenreId(raw.genre_id),
            display_name: raw.display_name,
            features: parse_features(&label, raw.features)?,
        });
    }

    Catalog::new(artists, genres)
}

pub fn load_catalog_str(s: &str) -> Result<Catalog> {
    load_catalog(s.as_bytes())
}

/// Component-wise mean of a list of descriptors (an artist's top tracks, a
/// genre's playlist songs).
pub fn aggregate_artist_features(songs: &[FeatureVector]) -> Result<FeatureVector> {
    if songs.is_empty() {
        return Err(Error::Validation(
            "cannot aggregate an empty feature list".into(),
        ));
    }
    let mut acc = [0.0; FEATURE_DIM];
    for v in songs {
        for (a, x) in acc.iter_mut().zip(v.as_array()) {
            *a += x;
        }
    }
    let n = songs.len() as f64;
    FeatureVector::new(acc.map(|a| a / n))
}

/// Source of artist and genre descriptors.
pub trait FeatureProvider: Send + Sync {
    fn name(&self) -> &str;
    fn load(&self) -> Result<Catalog>;
}

/// Reads a versioned catalog JSON fixture from disk.
pub struct JsonFileProvider {
    path: PathBuf,
}

impl JsonFileProvider {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl FeatureProvider for JsonFileProvider {
    fn name(&self) -> &str {
        "json_file"
    }

    fn load(&self) -> Result<Catalog> {
        let file = std::fs::File::open(&self.path).map_err(|e| Error::CatalogLoad {
            record: self.path.display().to_string(),
            reason: e.to_string(),
        })?;
        load_catalog(std::io::BufReader::new(file))
    }
}

/// Serves an in-memory document; handy for embedding fixtures.
pub struct InlineProvider {
    document: String,
}

impl InlineProvider {
    pub fn new(document: impl Into<String>) -> Self {
        Self {
            document: document.into(),
        }
    }
}

impl FeatureProvider for InlineProvider {
    fn name(&self) -> &str {
        "inline"
    }

    fn load(&self) -> Result<Catalog> {
        load_catalog_str(&self.document)
    }
}

pub fn provider_registry() -> Registry<dyn FeatureProvider> {
    let mut reg: Registry<dyn FeatureProvider> = Registry::new("feature provider");
    reg.register("json_file", |p| {
        let path: String = param(p, "path")?
            .ok_or_else(|| Error::Validation("json_file provider needs `path`".into()))?;
        Ok(Box::new(JsonFileProvider::new(path)))
    });
    reg.register("inline", |p| {
        let doc: String = param(p, "document")?
            .ok_or_else(|| Error::Validation("inline provider needs `document`".into()))?;
        Ok(Box::new(InlineProvider::new(doc)))
    });
    reg
}
