//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use radio_core::catalog::Catalog;
use radio_core::domain::{
    ArtistProfile, FeatureVector, GenreProfile, Rating, RatingQuestion, Stars, FEATURE_DIM,
};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Solve `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for k in 0..n {
            a[col][k] /= d;
        }
        b[col] /= d;
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    b
}

/// Ridge fit with an unpenalized intercept, written out as the full
/// `(p+1)`-dimensional normal equations on z-scored columns. Returns
/// `(intercept, weights on z-scores, column means, column sds)`.
pub fn ridge_oracle(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let p = xs[0].len();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        mean[j] = xs.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        sd[j] = (xs.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    // design with a leading column of ones
    let design: Vec<Vec<f64>> = xs
        .iter()
        .map(|r| {
            let mut row = vec![1.0];
            row.extend((0..p).map(|j| (r[j] - mean[j]) / sd[j]));
            row
        })
        .collect();
    let mut ata = vec![vec![0.0; p + 1]; p + 1];
    let mut atb = vec![0.0; p + 1];
    for (row, y) in design.iter().zip(ys) {
        for i in 0..=p {
            atb[i] += row[i] * y;
            for k in 0..=p {
                ata[i][k] += row[i] * row[k];
            }
        }
    }
    for (i, r) in ata.iter_mut().enumerate().skip(1) {
        r[i] += lambda;
    }
    let sol = gauss_jordan(ata, atb);
    (sol[0], sol[1..].to_vec(), mean, sd)
}

/// Pearson chi-square statistic of `counts` against probabilities `probs`.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

pub fn random_features<R: Rng>(rng: &mut R) -> FeatureVector {
    let mut v = [0.0; FEATURE_DIM];
    for (i, x) in v.iter_mut().enumerate() {
        *x = if i == radio_core::domain::LOUDNESS {
            rng.random_range(-20.0..-2.0)
        } else {
            rng.random_range(0.0..1.0)
        };
    }
    FeatureVector::new(v).unwrap()
}

pub fn random_catalog<R: Rng>(rng: &mut R, artists: usize, genres: usize) -> Catalog {
    let a = (0..artists)
        .map(|i| ArtistProfile {
            artist_id: format!("artist-{i}").into(),
            display_name: format!("Artist {i}"),
            features: random_features(rng),
        })
        .collect();
    let g = (0..genres)
        .map(|i| GenreProfile {
            genre_id: format!("genre-{i}").into(),
            display_name: format!("Genre {i}"),
            features: random_features(rng),
        })
        .collect();
    Catalog::new(a, g).unwrap()
}

pub fn rating(listener: &str, song: &str, answers: &[(RatingQuestion, i64)]) -> Rating {
    let answers: BTreeMap<RatingQuestion, Stars> = answers
        .iter()
        .map(|&(q, s)| (q, Stars::new(s).unwrap()))
        .collect();
    Rating {
        rating_id: format!("{listener}/{song}").into(),
        listener_id: listener.into(),
        song_id: song.into(),
        answers,
        submitted_at: 0,
    }
}

/// Two series whose sample correlation is exactly `r` (up to rounding).
pub fn planted_pair<R: Rng>(rng: &mut R, n: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let standardize = |v: &mut Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x = (*x - m) / s);
    };
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut e: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    standardize(&mut x);
    standardize(&mut e);
    // remove the component of e along x
    let proj = x.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    e.iter_mut().zip(&x).for_each(|(ei, xi)| *ei -= proj * xi);
    standardize(&mut e);
    let y = x
        .iter()
        .zip(&e)
        .map(|(xi, ei)| r * xi + (1.0 - r * r).sqrt() * ei)
        .collect();
    (x, y)
}

/// Split a target mean star value into `k` integer answers in 1..=5 whose
/// average is as close to the target as `k` allows.
pub fn stars_with_mean(target: f64, k: usize) -> Vec<i64> {
    let total = (target.clamp(1.0, 5.0) * k as f64).round() as i64;
    let base = total / k as i64;
    let extra = (total % k as i64) as usize;
    (0..k).map(|i| base + i64::from(i < extra)).collect()
}

pub mod scheduler_checks {
    use radio_core::catalog::{load_catalog_str, Catalog};
    use radio_core::domain::{concat_prompt, Prime, PromptFeatures, PROMPT_DIM};
    use radio_core::scheduler::{
        fit_rating_model, sample_candidates, Candidate, OutcomeSpec, RatingModel, Scheduler, SchedulerConfig,
        StoreCounts,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const ROSTER: &str = include_str!("../../../../fixtures/catalog.json");

    pub struct Fixture {
        pub catalog: Catalog,
        pub prime: Prime,
        pub model: RatingModel,
    }

    pub fn fixture() -> Fixture {
        let catalog = load_catalog_str(ROSTER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let prime = Prime {
            prime_id: "prime-000001".into(),
            contributor_name: "local band".into(),
            prime_artist_features: super::random_features(&mut rng),
            audio_ref: "prime.wav".into(),
            submitted_at: 0,
        };
        let rows: Vec<(PromptFeatures, f64)> = (0..60)
            .map(|_| {
                let x: Vec<f64> = (0..PROMPT_DIM)
                    .map(|j| if j % 9 == 3 { rng.random_range(-20.0..-2.0) } else { rng.random_range(0.0..1.0) })
                    .collect();
                (PromptFeatures::try_from(x).unwrap(), rng.random_range(-2.0..2.0))
            })
            .collect();
        let model = fit_rating_model(&rows, 1.0, OutcomeSpec::mean_like()).unwrap();
        Fixture { catalog, prime, model }
    }

    /// Prediction written out from the raw-scale coefficients.
    pub fn oracle_score(f: &Fixture, c: &Candidate) -> f64 {
        let (coef, b) = f.model.raw_coefficients();
        let x = concat_prompt(
            &f.prime.prime_artist_features,
            &f.catalog.artist(&c.artist).unwrap().features,
            &f.catalog.genre(&c.genre).unwrap().features,
        );
        b + coef.iter().zip(x.as_slice()).map(|(c, v)| c * v).sum::<f64>()
    }

    fn scheduler(gamma: usize, m: usize) -> Scheduler {
        Scheduler::new(SchedulerConfig { gamma, m, ..Default::default() }).unwrap()
    }

    const WARM: StoreCounts = StoreCounts { ratings: 1000, songs: 100 };

    /// Trials (out of `trials`) where gamma = 1 returned a best-scoring
    /// candidate of the replayed pool.
    pub fn gamma_one_argmax_hits(trials: u64, m: usize) -> u64 {
        let f = fixture();
        let s = scheduler(1, m);
        let mut hits = 0;
        for t in 0..trials {
            let d = s
                .select_prompt(&f.prime, &f.catalog, Some(&f.model), WARM, &mut ChaCha8Rng::seed_from_u64(t))
                .unwrap();
            let pool = sample_candidates(&f.catalog, m, &mut ChaCha8Rng::seed_from_u64(t)).unwrap();
            let best = pool.iter().map(|c| oracle_score(&f, c)).fold(f64::NEG_INFINITY, f64::max);
            let chosen = Candidate { artist: d.artist_prompt, genre: d.genre_prompt };
            let in_pool = pool.contains(&chosen);
            if in_pool && (oracle_score(&f, &chosen) - best).abs() <= 1e-12 {
                hits += 1;
            }
        }
        hits
    }

    /// Chi-square statistic and critical value (alpha) for the rank
    /// positions chosen with gamma = M. Copies of the chosen pair are
    /// disambiguated uniformly, which keeps positions uniform under the null.
    pub fn gamma_m_rank_uniformity(trials: u64, m: usize, alpha: f64) -> (f64, f64) {
        let f = fixture();
        let s = scheduler(m, m);
        let mut tie_rng = ChaCha8Rng::seed_from_u64(u64::MAX);
        let mut counts = vec![0u64; m];
        for t in 0..trials {
            let seed = 1_000_000 + t;
            let d = s
                .select_prompt(&f.prime, &f.catalog, Some(&f.model), WARM, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let mut pool: Vec<(Candidate, f64)> = sample_candidates(&f.catalog, m, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
                .into_iter()
                .map(|c| {
                    let y = oracle_score(&f, &c);
                    (c, y)
                })
                .collect();
            pool.sort_by(|a, b| b.1.total_cmp(&a.1));
            let chosen = Candidate { artist: d.artist_prompt, genre: d.genre_prompt };
            let slots: Vec<usize> = (0..m).filter(|&i| pool[i].0 == chosen).collect();
            assert!(!slots.is_empty(), "chosen pair not in replayed pool");
            counts[slots[tie_rng.random_range(0..slots.len())]] += 1;
        }
        let probs = vec![1.0 / m as f64; m];
        (super::chi_square(&counts, &probs), super::chi_square_critical(m - 1, alpha))
    }
}

pub mod analytics_checks {
    use std::collections::BTreeMap;

    use radio_core::analytics::{correlation_matrix, stats_report, AnalysisUnit, CellStatus};
    use radio_core::domain::{Rating, RatingQuestion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::statistics::Statistics;

    /// `(r, t, two-sided p)` from statrs sample statistics.
    pub fn reference_pearson(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
        let r = xs.covariance(ys) / (xs.std_dev() * ys.std_dev());
        let df = xs.len() as f64 - 2.0;
        let t = r * (df / (1.0 - r * r)).sqrt();
        let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
        (r, t, p)
    }

    /// Random ratings where `like` loosely tracks `danceable` and the rest
    /// are noise; some answers are skipped.
    pub fn random_ratings(rng: &mut ChaCha8Rng) -> Vec<Rating> {
        let songs = rng.random_range(8..80);
        let coupling = rng.random_range(-1.0..1.0);
        let mut out = Vec::new();
        for s in 0..songs {
            for l in 0..rng.random_range(1..9) {
                let base: f64 = rng.random_range(-2.0..2.0);
                let mut answers = Vec::new();
                for q in RatingQuestion::ALL {
                    if rng.random_bool(0.15) {
                        continue;
                    }
                    let v = match q {
                        RatingQuestion::Danceable => base,
                        RatingQuestion::Like => coupling * base + rng.random_range(-1.0..1.0),
                        _ => rng.random_range(-2.0..2.0),
                    };
                    answers.push((q, (3.0 + v).round().clamp(1.0, 5.0) as i64));
                }
                out.push(super::rating(&format!("l{l}"), &format!("song-{s}"), &answers));
            }
        }
        out
    }

    /// Per-song mean stars, built independently of the library.
    fn per_song_pairs(ratings: &[Rating], a: RatingQuestion, b: RatingQuestion) -> (Vec<f64>, Vec<f64>) {
        let mut acc: BTreeMap<&str, [(f64, f64); 2]> = BTreeMap::new();
        for r in ratings {
            let e = acc.entry(r.song_id.as_str()).or_insert([(0.0, 0.0); 2]);
            for (k, q) in [a, b].iter().enumerate() {
                if let Some(s) = r.answers.get(q) {
                    e[k].0 += f64::from(s.get());
                    e[k].1 += 1.0;
                }
            }
        }
        acc.values()
            .filter(|[x, y]| x.1 > 0.0 && y.1 > 0.0)
            .map(|[x, y]| (x.0 / x.1, y.0 / y.1))
            .unzip()
    }

    /// Largest absolute gap in r, t or p between the correlation matrix and
    /// the reference, over every computable off-diagonal cell. Also returns
    /// the number of cells compared.
    pub fn max_pearson_gap(fixtures: u64, seed: u64) -> (f64, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst, mut compared) = (0.0f64, 0);
        for _ in 0..fixtures {
            let ratings = random_ratings(&mut rng);
            let m = correlation_matrix(&ratings, AnalysisUnit::PerSongMean);
            for (i, &a) in RatingQuestion::ALL.iter().enumerate() {
                for (j, &b) in RatingQuestion::ALL.iter().enumerate().skip(i + 1) {
                    let cell = &m[i][j];
                    if cell.status != CellStatus::Ok {
                        continue;
                    }
                    let (xs, ys) = per_song_pairs(&ratings, a, b);
                    assert_eq!(cell.n as usize, xs.len());
                    let (r, t, p) = reference_pearson(&xs, &ys);
                    worst = worst
                        .max((cell.r.unwrap() - r).abs())
                        .max((cell.t.unwrap() - t).abs())
                        .max((cell.p_value.unwrap() - p).abs());
                    compared += 1;
                }
            }
        }
        (worst, compared)
    }

    /// 71 songs, 7 listeners each, with per-song like/danceable means planted
    /// at correlation 0.75. Returns the recovered `(r, p)`.
    pub fn planted_like_danceable(seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = super::planted_pair(&mut rng, 71, 0.75);
        let mut ratings = Vec::new();
        for s in 0..71 {
            let like = super::stars_with_mean(3.0 + 0.8 * x[s], 7);
            let dance = super::stars_with_mean(3.0 + 0.8 * y[s], 7);
            for l in 0..7 {
                let mut answers = vec![(RatingQuestion::Like, like[l]), (RatingQuestion::Danceable, dance[l])];
                answers.push((RatingQuestion::Happy, rng.random_range(1..=5)));
                ratings.push(super::rating(&format!("l{l}"), &format!("song-{s}"), &answers));
            }
        }
        let report = stats_report(&ratings, AnalysisUnit::PerSongMean);
        let cell = &report.correlations[RatingQuestion::Like.index()][RatingQuestion::Danceable.index()];
        (cell.r.unwrap(), cell.p_value.unwrap())
    }
}

pub mod queue_checks {
    use std::collections::BTreeMap;
    use std::time::Duration;

    use radio_core::catalog::load_catalog_str;
    use radio_core::domain::{FeatureVector, Millis, SongId};
    use radio_core::error::{Error, Result};
    use radio_core::generator::{mock_generate, GeneratedAudio, GenerationRequest, GeneratorBackend};
    use radio_core::queue::JobState;
    use radio_core::store::{run_worker_step, Event, EventSink, LogRecord, RadioStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Succeeds for most jobs, fails deterministically for some.
    struct FlakyBackend;

    impl GeneratorBackend for FlakyBackend {
        fn name(&self) -> &str {
            "flaky"
        }

        fn generate(&self, req: &GenerationRequest<'_>) -> Result<GeneratedAudio> {
            if req.seed % 5 == 0 {
                return Err(Error::Generator("model diverged".into()));
            }
            Ok(mock_generate(req.prime, req.artist, req.genre, req.seed))
        }
    }

    /// Durable log plus the live store; commits stop after `budget` events to
    /// simulate the process dying mid-step.
    struct CrashSink<'a> {
        store: RadioStore,
        log: &'a mut Vec<LogRecord>,
        budget: Option<usize>,
    }

    impl EventSink for CrashSink<'_> {
        fn store(&self) -> &RadioStore {
            &self.store
        }

        fn commit(&mut self, event: Event) -> Result<()> {
            if let Some(b) = self.budget.as_mut() {
                if *b == 0 {
                    return Err(Error::Generator("crash".into()));
                }
                *b -= 1;
            }
            self.store.apply(&event)?;
            let seq = self.log.len() as u64 + 1;
            self.log.push(LogRecord { sequence_number: seq, timestamp: 0, event });
            Ok(())
        }
    }

    #[derive(Debug, Default)]
    pub struct RunStats {
        pub steps: usize,
        pub crashes: usize,
        pub completed: usize,
        pub failed: usize,
        pub rejected_full: usize,
    }

    fn check_store(store: &RadioStore) -> std::result::Result<(), String> {
        let mut owners: BTreeMap<&SongId, usize> = BTreeMap::new();
        for job in store.queue().jobs() {
            job.check_invariants()?;
            if job.state == JobState::Complete {
                let id = job.result_song_id.as_ref().ok_or("complete job without song")?;
                let song = store.song(id).ok_or_else(|| format!("{} points at missing {id}", job.job_id))?;
                if song.prime_id != job.prime_id
                    || song.artist_prompt != job.artist_prompt
                    || song.genre_prompt != job.genre_prompt
                {
                    return Err(format!("{id} does not match the prompt of {}", job.job_id));
                }
                *owners.entry(id).or_default() += 1;
            }
        }
        if owners.values().any(|&n| n != 1) {
            return Err("a song is claimed by several jobs".into());
        }
        for song in store.songs() {
            let job_id = song.song_id.as_str().replace("song-", "job-");
            let job = store.job(&job_id.as_str().into()).ok_or_else(|| format!("orphan {}", song.song_id))?;
            // a song without a completed job is only allowed mid-step
            if job.state != JobState::Complete && job.state != JobState::Running {
                return Err(format!("{} exists but {} is {}", song.song_id, job.job_id, job.state));
            }
        }
        Ok(())
    }

    /// Random enqueue / step / crash sequence of `steps` operations.
    pub fn run(seed: u64, steps: usize, capacity: usize) -> std::result::Result<RunStats, String> {
        const ROSTER: &str = include_str!("../../../../fixtures/catalog.json");
        let catalog = load_catalog_str(ROSTER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log: Vec<LogRecord> = Vec::new();
        let store = RadioStore::new(catalog.clone(), capacity);
        let mut clock: Millis = 0;
        let mut stats = RunStats::default();

        let ev = store.prime_event("band", FeatureVector::splat(0.5), "prime.wav", 0);
        let mut sink = CrashSink { store, log: &mut log, budget: None };
        sink.commit(ev).map_err(|e| e.to_string())?;
        let mut store = sink.store;

        for _ in 0..steps {
            stats.steps += 1;
            let mut crashed = false;
            match rng.random_range(0..10) {
                0..=3 => {
                    let a = catalog.artist_at(rng.random_range(0..catalog.artists.len())).artist_id.clone();
                    let g = catalog.genre_at(rng.random_range(0..catalog.genres.len())).genre_id.clone();
                    clock += 1;
                    match store.enqueue_event(&"prime-000001".into(), &a, &g, clock) {
                        Ok(ev) => {
                            let mut sink = CrashSink { store, log: &mut log, budget: None };
                            sink.commit(ev).map_err(|e| e.to_string())?;
                            store = sink.store;
                        }
                        Err(Error::QueueFull { .. }) => stats.rejected_full += 1,
                        Err(e) => return Err(e.to_string()),
                    }
                }
                4..=8 => {
                    let crash_after = rng.random_bool(0.3).then(|| rng.random_range(0..3));
                    let mut sink = CrashSink { store, log: &mut log, budget: crash_after };
                    let mut tick = || {
                        clock += 1;
                        clock
                    };
                    match run_worker_step(&mut sink, &FlakyBackend, &mut tick, Duration::ZERO) {
                        Ok(Some(job)) => match job.state {
                            JobState::Complete => stats.completed += 1,
                            JobState::Failed => stats.failed += 1,
                            s => return Err(format!("step left {} in {s}", job.job_id)),
                        },
                        Ok(None) => {}
                        Err(Error::Generator(m)) if m == "crash" => {
                            stats.crashes += 1;
                            crashed = true;
                        }
                        Err(e) => return Err(format!("worker step: {e}")),
                    }
                    store = sink.store;
                }
                _ => {
                    stats.crashes += 1;
                    crashed = true;
                }
            }
            // the durable log alone must always rebuild a legal store
            let replayed = RadioStore::replay(catalog.clone(), capacity, &log).map_err(|e| e.to_string())?;
            check_store(&replayed)?;
            if crashed {
                store = replayed;
            } else if replayed.snapshot() != store.snapshot() {
                return Err("live store diverged from its log".into());
            }
        }
        Ok(stats)
    }
}
