//! Generator backends.
//!
//! A backend turns a (prime, artist prompt, genre prompt, seed) request into
//! song descriptors and an audio locator. The shipped [`MockGenerator`] blends
//! the three input descriptors and adds seeded jitter; real neural generation
//! takes on the order of 20 hours per 20 seconds of audio, which the queue
//! models with a configurable delay instead.

use std::io::Write;
use std::process::{Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    feature_domain, ArtistProfile, FeatureVector, GenreProfile, Prime, FEATURE_DIM, LOUDNESS,
};
use crate::error::{Error, Result};
use crate::registry::{param, Registry};

pub const PRIME_WEIGHT: f64 = 0.25;
pub const ARTIST_WEIGHT: f64 = 0.375;
pub const GENRE_WEIGHT: f64 = 0.375;
pub const JITTER: f64 = 0.05;
pub const LOUDNESS_JITTER_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prime: &'a Prime,
    pub artist: &'a ArtistProfile,
    pub genre: &'a GenreProfile,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAudio {
    pub song_features: FeatureVector,
    pub audio_ref: String,
}

pub trait GeneratorBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GeneratedAudio>;
}

/// Weighted mean of the three descriptors before jitter and clamping.
pub fn blend_center(prime: &Prime, artist: &ArtistProfile, genre: &GenreProfile) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    for (i, o) in out.iter_mut().enumerate() {
        *o = PRIME_WEIGHT * prime.prime_artist_features.get(i)
            + ARTIST_WEIGHT * artist.features.get(i)
            + GENRE_WEIGHT * genre.features.get(i);
    }
    out
}

/// Deterministic audio locator for a request.
pub fn audio_locator(prime: &Prime, artist: &ArtistProfile, genre: &GenreProfile, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(prime.prime_id.as_str().as_bytes());
    h.update([0]);
    h.update(artist.artist_id.as_str().as_bytes());
    h.update([0]);
    h.update(genre.genre_id.as_str().as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    format!("tone://{}", hex::encode(&digest[..12]))
}

/// Blend, jitter and clamp. Pure in its arguments.
pub fn mock_generate(
    prime: &Prime,
    artist: &ArtistProfile,
    genre: &GenreProfile,
    seed: u64,
) -> GeneratedAudio {
    let center = blend_center(prime, artist, genre);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [0.0; FEATURE_DIM];
    for (i, o) in out.iter_mut().enumerate() {
        let scale = if i == LOUDNESS { LOUDNESS_JITTER_SCALE } else { 1.0 };
        let jitter = rng.random_range(-JITTER..=JITTER) * scale;
        let (lo, hi) = feature_domain(i);
        *o = (center[i] + jitter).clamp(lo, hi);
    }
    GeneratedAudio {
        song_features: FeatureVector::new(out).expect("clamped blend is finite"),
        audio_ref: audio_locator(prime, artist, genre, seed),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MockGenerator;

impl GeneratorBackend for MockGenerator {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<GeneratedAudio> {
        Ok(mock_generate(r.prime, r.artist, r.genre, r.seed))
    }
}

/// Always fails; exercises the queue's failure path.
#[derive(Debug, Clone)]
pub struct FailingGenerator {
    pub reason: String,
}

impl GeneratorBackend for FailingGenerator {
    fn name(&self) -> &str {
        "failing"
    }

    fn generate(&self, _: &GenerationRequest<'_>) -> Result<GeneratedAudio> {
        Err(Error::Generator(self.reason.clone()))
    }
}

/// Delegates to an external program: the request is written to its stdin as
/// JSON and a `{"song_features": [...], "audio_ref": "..."}` object is read
/// back from stdout.
#[derive(Debug, Clone)]
pub struct ExternalCommandGenerator {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    prime: &'a Prime,
    artist: &'a ArtistProfile,
    genre: &'a GenreProfile,
    seed: u64,
}

impl GeneratorBackend for ExternalCommandGenerator {
    fn name(&self) -> &str {
        "external"
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<GeneratedAudio> {
        let payload = serde_json::to_vec(&ExternalRequest {
            prime: r.prime,
            artist: r.artist,
            genre: r.genre,
            seed: r.seed,
        })
        .map_err(|e| Error::Generator(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Generator(format!("spawn {}: {e}", self.program)))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(&payload)
                .map_err(|e| Error::Generator(e.to_string()))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Generator(e.to_string()))?;
        if !out.status.success() {
            return Err(Error::Generator(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        serde_json::from_slice(&out.stdout)
            .map_err(|e| Error::Generator(format!("bad generator output: {e}")))
    }
}

pub fn generator_registry() -> Registry<dyn GeneratorBackend> {
    let mut reg: Registry<dyn GeneratorBackend> = Registry::new("generator");
    reg.register("mock", |_| Ok(Box::new(MockGenerator)));
    reg.register("external", |p| {
        let program: String = param(p, "command")?
            .ok_or_else(|| Error::Validation("external generator needs `command`".into()))?;
        let args: Vec<String> = param(p, "args")?.unwrap_or_default();
        Ok(Box::new(ExternalCommandGenerator { program, args }))
    });
    reg.register("failing", |p| {
        let reason: String = param(p, "reason")?.unwrap_or_else(|| "backend unavailable".into());
        Ok(Box::new(FailingGenerator { reason }))
    });
    reg
}
