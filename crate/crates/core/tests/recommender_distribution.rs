mod common;

use proptest::prelude::*;
use radio_core::catalog::Standardization;
use radio_core::domain::{FeatureVector, ListenerId, PrimeId, Song, SongId};
use radio_core::recommender::{
    advance_session, next_song, next_song_distribution, unplayed, RecommenderConfig, ScoredSong, SessionState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pool(rng: &mut ChaCha8Rng, n: usize) -> (FeatureVector, Vec<ScoredSong>) {
    let current = common::random_features(rng);
    let songs = (0..n)
        .map(|i| ScoredSong {
            song_id: SongId(format!("s{i}")),
            features: common::random_features(rng),
        })
        .collect();
    (current, songs)
}

/// Closed form `d^e / Σ d^e`, computed directly without log-space tricks.
fn closed_form(current: &FeatureVector, songs: &[ScoredSong], e: f64) -> Vec<f64> {
    let w: Vec<f64> = songs.iter().map(|s| s.features.distance(current).powf(e)).collect();
    let t: f64 = w.iter().sum();
    w.iter().map(|x| x / t).collect()
}

#[test]
fn empirical_frequencies_match_closed_form() {
    const DRAWS: usize = 20_000;
    let cfg = RecommenderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut stat, mut df) = (0.0, 0);
    for n in 2..=9 {
        for q in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let (cur, songs) = pool(&mut rng, n);
            let probs = closed_form(&cur, &songs, q);
            let mut counts = vec![0u64; n];
            for _ in 0..DRAWS {
                let id = next_song(Some(&cur), &songs, q, &cfg, &mut rng).unwrap();
                counts[songs.iter().position(|s| s.song_id == id).unwrap()] += 1;
            }
            stat += common::chi_square(&counts, &probs);
            df += n - 1;
        }
    }
    let crit = common::chi_square_critical(df, 0.01);
    assert!(stat < crit, "pooled chi2 {stat:.1} >= {crit:.1} on {df} df");
}

#[test]
fn two_candidate_sign_law() {
    let cfg = RecommenderConfig::default();
    let grid: Vec<f64> = (1..=12).map(|k| k as f64 * 0.25).collect();
    for &dn in &grid {
        for &df in grid.iter().filter(|&&d| d > dn) {
            let cur = FeatureVector::zeros();
            let at = |d: f64, id: &str| {
                let mut v = [0.0; 9];
                v[0] = d;
                ScoredSong { song_id: id.into(), features: FeatureVector::new(v).unwrap() }
            };
            let songs = [at(dn, "near"), at(df, "far")];
            for qi in -16..=16 {
                let q = f64::from(qi) * 0.25;
                let p = next_song_distribution(Some(&cur), &songs, q, &cfg)[0];
                if qi < 0 {
                    assert!(p > 0.5 + 1e-12, "q={q} dn={dn} df={df} p={p}");
                } else if qi > 0 {
                    assert!(p < 0.5 - 1e-12, "q={q} dn={dn} df={df} p={p}");
                } else {
                    assert_eq!(p, 0.5);
                }
            }
        }
    }
}

#[test]
fn session_plays_every_song_before_repeating() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let songs: Vec<Song> = (0..7)
        .map(|i| Song {
            song_id: SongId(format!("song-{i}")),
            prime_id: PrimeId::from("p"),
            artist_prompt: "a".into(),
            genre_prompt: "g".into(),
            prompt_features: vec![0.0; 27].try_into().unwrap(),
            song_features: common::random_features(&mut rng),
            audio_ref: String::new(),
            created_at: 0,
        })
        .collect();
    let std = Standardization::from_samples(songs.iter().map(|s| &s.song_features));
    let ids: Vec<SongId> = songs.iter().map(|s| s.song_id.clone()).collect();
    let mut session = SessionState::new(ListenerId::from("l"), 42);
    let mut history = Vec::new();
    for _ in 0..40 {
        let cands = unplayed(&session, &songs, &std);
        let cur = session
            .current_song_id
            .as_ref()
            .map(|id| std.apply(&songs.iter().find(|s| &s.song_id == id).unwrap().song_features));
        let mut r = session.next_rng();
        let pick = next_song(cur.as_ref(), &cands, 2.0, &RecommenderConfig::default(), &mut r).unwrap();
        history.push(pick.clone());
        session = advance_session(session, pick, &ids);
    }
    // the first 7 picks are a permutation; afterwards each block of 6 avoids
    // the song that closed the previous block
    let mut first: Vec<_> = history[..7].to_vec();
    first.sort();
    first.dedup();
    assert_eq!(first.len(), 7);
    for w in history.windows(2) {
        assert_ne!(w[0], w[1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distribution_is_normalized_and_ordered(seed in any::<u64>(), n in 1usize..10, q in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cur, songs) = pool(&mut rng, n);
        let p = next_song_distribution(Some(&cur), &songs, q, &RecommenderConfig::default());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| songs[a].features.distance(&cur).total_cmp(&songs[b].features.distance(&cur)));
        for w in idx.windows(2) {
            let (near, far) = (p[w[0]], p[w[1]]);
            if q > 0.0 {
                prop_assert!(far >= near - 1e-15);
            } else if q < 0.0 {
                prop_assert!(near >= far - 1e-15);
            }
        }
    }
}
