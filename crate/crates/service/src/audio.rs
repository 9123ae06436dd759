//! Placeholder tones standing in for generated audio.

use std::io::Cursor;

use radio_core::domain::Song;

pub const SAMPLE_RATE: u32 = 22_050;
pub const SECONDS: u32 = 4;

/// A short 16-bit mono WAV whose pitch follows the song's key, level its
/// loudness and tremolo rate its danceability.
pub fn render_wav(song: &Song) -> Vec<u8> {
    let f = &song.song_features;
    let semitones = (f.key() * 11.0).round();
    let freq = 220.0 * 2f64.powf(semitones / 12.0);
    let gain = 10f64.powf(f.loudness() / 20.0).clamp(0.05, 1.0) * 0.8;
    let tremolo = 1.0 + 7.0 * f.danceability();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut out, spec).expect("in-memory writer");
        let n = SAMPLE_RATE * SECONDS;
        for i in 0..n {
            let t = f64::from(i) / f64::from(SAMPLE_RATE);
            let env = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * tremolo * t).cos());
            let fade = (t.min(f64::from(SECONDS) - t) * 20.0).min(1.0);
            let s = gain * env * fade * (2.0 * std::f64::consts::PI * freq * t).sin();
            w.write_sample((s * f64::from(i16::MAX)) as i16).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use radio_core::domain::{FeatureVector, PromptFeatures};

    #[test]
    fn renders_a_readable_wav() {
        let song = Song {
            song_id: "song-000001".into(),
            prime_id: "prime-000001".into(),
            artist_prompt: "a".into(),
            genre_prompt: "g".into(),
            prompt_features: PromptFeatures::try_from(vec![0.0; 27]).unwrap(),
            song_features: FeatureVector::new([0.7, 0.5, 0.3, -6.0, 0.1, 0.1, 0.0, 0.1, 0.5]).unwrap(),
            audio_ref: "tone://x".into(),
            created_at: 0,
        };
        let bytes = render_wav(&song);
        let reader = hound::WavReader::new(Cursor::new(&bytes)).unwrap();
        assert_eq!(reader.spec().sample_rate, SAMPLE_RATE);
        assert_eq!(reader.len(), SAMPLE_RATE * SECONDS);
        assert_eq!(render_wav(&song), bytes);
    }
}
