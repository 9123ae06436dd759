//! Rating analytics: per-question distributions, the pairwise Pearson matrix
//! with significance stars, and one-sided Welch tests of each question
//! against the pooled answers to the other six.

mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use special::{betainc, ln_beta, ln_gamma, student_t_cdf, student_t_sf};

use crate::domain::{Rating, RatingQuestion, SongId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisUnit {
    /// Average each question's answers within a song first.
    #[default]
    PerSongMean,
    /// Every rating is one observation.
    PerRating,
}

impl std::str::FromStr for AnalysisUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per_song_mean" => Ok(Self::PerSongMean),
            "per_rating" => Ok(Self::PerRating),
            other => Err(format!("unknown unit `{other}` (per_song_mean | per_rating)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub question: RatingQuestion,
    pub count: u64,
    /// Answer counts for 1..=5 stars.
    pub histogram: [u64; 5],
    /// Mean stars; absent when there are no answers.
    pub mean: Option<f64>,
    /// Population standard deviation of stars; absent when there are no answers.
    pub stddev: Option<f64>,
}

pub fn summarize_questions(ratings: &[Rating]) -> Vec<QuestionSummary> {
    RatingQuestion::ALL
        .iter()
        .map(|&q| {
            let mut histogram = [0u64; 5];
            let answers: Vec<f64> = ratings
                .iter()
                .filter_map(|r| r.answers.get(&q))
                .map(|s| {
                    histogram[usize::from(s.get()) - 1] += 1;
                    f64::from(s.get())
                })
                .collect();
            let count = answers.len() as u64;
            let (mean, stddev) = if answers.is_empty() {
                (None, None)
            } else {
                let m = mean(&answers);
                let var = answers.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / answers.len() as f64;
                (Some(m), Some(var.sqrt()))
            };
            QuestionSummary {
                question: q,
                count,
                histogram,
                mean,
                stddev,
            }
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Significance marker using the thresholds p ≤ .1 / .05 / .01 / .001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "")]
    None,
    #[serde(rename = "·")]
    Marginal,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p <= 0.001 {
            Self::Three
        } else if p <= 0.01 {
            Self::Two
        } else if p <= 0.05 {
            Self::One
        } else if p <= 0.1 {
            Self::Marginal
        } else {
            Self::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "",
            Self::Marginal => "·",
            Self::One => "*",
            Self::Two => "**",
            Self::Three => "***",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Diagonal,
    /// Fewer than three paired observations.
    InsufficientData,
    ZeroVariance,
    /// |r| = 1: the t statistic is unbounded, no p-value.
    ExactFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub question_a: RatingQuestion,
    pub question_b: RatingQuestion,
    pub r: Option<f64>,
    pub n: u64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: Significance,
    pub status: CellStatus,
}

/// Pearson correlation with its two-sided t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonTest {
    pub r: Option<f64>,
    pub n: usize,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    pub status: CellStatus,
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> PearsonTest {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let empty = |status| PearsonTest {
        r: None,
        n,
        t: None,
        p_value: None,
        status,
    };
    if n < 3 {
        return empty(CellStatus::InsufficientData);
    }
    if is_constant(xs) || is_constant(ys) {
        return empty(CellStatus::ZeroVariance);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    if 1.0 - r.abs() <= 1e-12 {
        return PearsonTest {
            r: Some(r.signum()),
            n,
            t: None,
            p_value: None,
            status: CellStatus::ExactFit,
        };
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let p = (2.0 * student_t_sf(t.abs(), df)).min(1.0);
    PearsonTest {
        r: Some(r),
        n,
        t: Some(t),
        p_value: Some(p),
        status: CellStatus::Ok,
    }
}

/// One row per observation unit, one column per question (canonical order),
/// `None` where the question has no answer.
pub fn observations(ratings: &[Rating], unit: AnalysisUnit) -> Vec<[Option<f64>; 7]> {
    match unit {
        AnalysisUnit::PerRating => ratings
            .iter()
            .map(|r| RatingQuestion::ALL.map(|q| r.answers.get(&q).map(|s| f64::from(s.get()))))
            .collect(),
        AnalysisUnit::PerSongMean => {
            let mut by_song: BTreeMap<&SongId, [(f64, u32); 7]> = BTreeMap::new();
            for r in ratings {
                let acc = by_song.entry(&r.song_id).or_insert([(0.0, 0); 7]);
                for (q, s) in &r.answers {
                    let cell = &mut acc[q.index()];
                    cell.0 += f64::from(s.get());
                    cell.1 += 1;
                }
            }
            by_song
                .into_values()
                .map(|acc| acc.map(|(sum, n)| (n > 0).then(|| sum / f64::from(n))))
                .collect()
        }
    }
}

/// Paired observations for two questions.
pub fn paired(rows: &[[Option<f64>; 7]], a: RatingQuestion, b: RatingQuestion) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .filter_map(|row| Some((row[a.index()]?, row[b.index()]?)))
        .unzip()
}

/// 7×7 matrix in canonical question order. Symmetric, unit diagonal.
pub fn correlation_matrix(ratings: &[Rating], unit: AnalysisUnit) -> Vec<Vec<CorrelationCell>> {
    let rows = observations(ratings, unit);
    let mut cells: Vec<Vec<Option<CorrelationCell>>> = vec![vec![None; 7]; 7];
    for (i, &a) in RatingQuestion::ALL.iter().enumerate() {
        for (j, &b) in RatingQuestion::ALL.iter().enumerate() {
            if j < i {
                let mirror = cells[j][i].clone().expect("upper triangle filled first");
                cells[i][j] = Some(CorrelationCell {
                    question_a: a,
                    question_b: b,
                    ..mirror
                });
                continue;
            }
            let (xs, ys) = paired(&rows, a, b);
            let cell = if i == j {
                CorrelationCell {
                    question_a: a,
                    question_b: b,
                    r: Some(1.0),
                    n: xs.len() as u64,
                    t: None,
                    p_value: None,
                    stars: Significance::None,
                    status: CellStatus::Diagonal,
                }
            } else {
                let test = pearson(&xs, &ys);
                CorrelationCell {
                    question_a: a,
                    question_b: b,
                    r: test.r,
                    n: test.n as u64,
                    t: test.t,
                    p_value: test.p_value,
                    stars: test.p_value.map_or(Significance::None, Significance::from_p),
                    status: test.status,
                }
            };
            cells[i][j] = Some(cell);
        }
    }
    cells
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.expect("every cell filled")).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Ok,
    InsufficientData,
}

/// Welch two-sample test of one question's answers against the pooled
/// answers to the other six. `p_greater` tests "this question rates higher",
/// `p_less` the complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTest {
    pub question: RatingQuestion,
    pub n_question: u64,
    pub n_others: u64,
    pub mean_question: Option<f64>,
    pub mean_others: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_greater: Option<f64>,
    pub p_less: Option<f64>,
    pub status: TestStatus,
}

/// Welch's t statistic, degrees of freedom and one-sided p-values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_greater: f64,
    pub p_less: f64,
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Welch test for `mean(a) > mean(b)`; requires two observations per group.
pub fn welch_test(a: &[f64], b: &[f64]) -> Option<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma) / na, sample_var(b, mb) / nb);
    let se2 = va + vb;
    let diff = ma - mb;
    if se2 == 0.0 {
        // both groups constant: the sign of the difference is certain
        let df = na + nb - 2.0;
        return Some(if diff == 0.0 {
            WelchResult { t: 0.0, df, p_greater: 0.5, p_less: 0.5 }
        } else if diff > 0.0 {
            WelchResult { t: f64::INFINITY, df, p_greater: 0.0, p_less: 1.0 }
        } else {
            WelchResult { t: f64::NEG_INFINITY, df, p_greater: 1.0, p_less: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Some(WelchResult {
        t,
        df,
        p_greater: student_t_sf(t, df),
        p_less: student_t_cdf(t, df),
    })
}

pub fn one_sided_question_test(ratings: &[Rating], question: RatingQuestion) -> QuestionTest {
    let mut own = Vec::new();
    let mut others = Vec::new();
    for r in ratings {
        for (q, s) in &r.answers {
            let v = f64::from(s.get());
            if *q == question {
                own.push(v);
            } else {
                others.push(v);
            }
        }
    }
    let m = |xs: &[f64]| (!xs.is_empty()).then(|| mean(xs));
    let base = QuestionTest {
        question,
        n_question: own.len() as u64,
        n_others: others.len() as u64,
        mean_question: m(&own),
        mean_others: m(&others),
        t: None,
        df: None,
        p_greater: None,
        p_less: None,
        status: TestStatus::InsufficientData,
    };
    match welch_test(&own, &others) {
        None => base,
        Some(w) => QuestionTest {
            t: w.t.is_finite().then_some(w.t),
            df: Some(w.df),
            p_greater: Some(w.p_greater),
            p_less: Some(w.p_less),
            status: TestStatus::Ok,
            ..base
        },
    }
}

/// Everything `GET /api/stats` and the `stats` command emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub unit: AnalysisUnit,
    pub rating_count: u64,
    pub song_count: u64,
    pub summaries: Vec<QuestionSummary>,
    pub correlations: Vec<Vec<CorrelationCell>>,
    pub tests: Vec<QuestionTest>,
}

pub fn stats_report(ratings: &[Rating], unit: AnalysisUnit) -> StatsReport {
    let songs: std::collections::BTreeSet<&SongId> = ratings.iter().map(|r| &r.song_id).collect();
    StatsReport {
        unit,
        rating_count: ratings.len() as u64,
        song_count: songs.len() as u64,
        summaries: summarize_questions(ratings),
        correlations: correlation_matrix(ratings, unit),
        tests: RatingQuestion::ALL
            .iter()
            .map(|&q| one_sided_question_test(ratings, q))
            .collect(),
    }
}

/// Canonical JSON rendering shared by the HTTP endpoint and the CLI.
pub fn render_report(report: &StatsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Stars;

    fn rating(song: &str, listener: &str, answers: &[(RatingQuestion, i64)]) -> Rating {
        Rating {
            rating_id: format!("{listener}/{song}").as_str().into(),
            listener_id: listener.into(),
            song_id: song.into(),
            answers: answers.iter().map(|&(q, s)| (q, Stars::new(s).unwrap())).collect(),
            submitted_at: 0,
        }
    }

    #[test]
    fn constant_answers_summary() {
        let rs: Vec<Rating> = (0..3)
            .map(|i| rating("s", &format!("l{i}"), &[(RatingQuestion::Like, 3)]))
            .collect();
        let s = &summarize_questions(&rs)[RatingQuestion::Like.index()];
        assert_eq!(s.count, 3);
        assert_eq!(s.histogram, [0, 0, 3, 0, 0]);
        assert_eq!(s.mean, Some(3.0));
        assert_eq!(s.stddev, Some(0.0));
    }

    #[test]
    fn empty_store_summary() {
        let s = summarize_questions(&[]);
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|q| q.count == 0 && q.mean.is_none() && q.histogram == [0; 5]));
    }

    #[test]
    fn perfect_correlation_flagged() {
        let t = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert_eq!(t.r, Some(1.0));
        assert_eq!(t.status, CellStatus::ExactFit);
        assert_eq!(t.p_value, None);
    }

    #[test]
    fn constant_series_zero_variance() {
        let t = pearson(&[2.0, 2.0, 2.0, 2.0], &[4.0, 4.0, 4.0, 4.0]);
        assert_eq!(t.status, CellStatus::ZeroVariance);
        assert_eq!(pearson(&[1.0, 2.0], &[1.0, 3.0]).status, CellStatus::InsufficientData);
    }

    #[test]
    fn significance_thresholds() {
        assert_eq!(Significance::from_p(0.001), Significance::Three);
        assert_eq!(Significance::from_p(0.004), Significance::Two);
        assert_eq!(Significance::from_p(0.037), Significance::One);
        assert_eq!(Significance::from_p(0.088), Significance::Marginal);
        assert_eq!(Significance::from_p(0.2), Significance::None);
        assert_eq!(serde_json::to_string(&Significance::Three).unwrap(), "\"***\"");
    }

    #[test]
    fn single_rating_matrix_not_computable() {
        let rs = vec![rating("s", "l", &RatingQuestion::ALL.map(|q| (q, 4)))];
        let m = correlation_matrix(&rs, AnalysisUnit::PerSongMean);
        for (i, row) in m.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i == j {
                    assert_eq!(c.r, Some(1.0));
                } else {
                    assert_eq!(c.status, CellStatus::InsufficientData);
                    assert!(c.p_value.is_none());
                }
            }
        }
    }

    #[test]
    fn maximal_separation_test() {
        let mut rs = Vec::new();
        for i in 0..12 {
            let mut answers = vec![(RatingQuestion::Artificial, 5)];
            answers.extend(
                RatingQuestion::ALL
                    .iter()
                    .filter(|&&q| q != RatingQuestion::Artificial)
                    .map(|&q| (q, 1)),
            );
            rs.push(rating(&format!("s{i}"), "l", &answers));
        }
        let t = one_sided_question_test(&rs, RatingQuestion::Artificial);
        assert!(t.p_greater.unwrap() < 1e-6);
        assert_eq!(t.p_less, Some(1.0));
    }

    #[test]
    fn identical_groups_null_case() {
        // every question answered with the same spread of values
        let mut rs = Vec::new();
        for (i, s) in [1, 2, 3, 4, 5].iter().enumerate() {
            rs.push(rating(&format!("s{i}"), "l", &RatingQuestion::ALL.map(|q| (q, *s))));
        }
        let t = one_sided_question_test(&rs, RatingQuestion::Like);
        assert_eq!(t.t, Some(0.0));
        assert_eq!(t.p_greater, Some(0.5));
    }

    #[test]
    fn unit_parsing() {
        assert_eq!("per_rating".parse::<AnalysisUnit>().unwrap(), AnalysisUnit::PerRating);
        assert!("per_listener".parse::<AnalysisUnit>().is_err());
    }
}
