//! HTTP routes. Handlers parse and validate input, then call into the
//! [`Engine`] on a blocking thread.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use radio_core::analytics::AnalysisUnit;
use radio_core::domain::{JobId, PreferenceWeights, RatingQuestion, SongId};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::engine::{Engine, PrimeSubmission};
use crate::error::ApiError;

type Shared = State<Arc<Engine>>;
type ApiResult = Result<Response, ApiError>;

const PLACEHOLDER_PAGE: &str = "<!doctype html><title>radio</title>\
<p>The web UI is not built. The JSON API is under <code>/api</code>.</p>";

pub fn router(engine: Arc<Engine>) -> Router {
    let ui_dir = engine.config().ui_dir.clone();
    let api = Router::new()
        .route("/api/next", get(next))
        .route("/api/rate", axum::routing::post(rate))
        .route("/api/preferences", get(get_preferences).put(put_preferences))
        .route("/api/admin/prime", axum::routing::post(admin_prime))
        .route("/api/stats", get(stats))
        .route("/api/songs/{id}", get(song))
        .route("/api/jobs/{id}", get(job))
        .route("/audio/{file}", get(audio));
    let api = if ui_dir.join("index.html").is_file() {
        api.fallback_service(ServeDir::new(ui_dir))
    } else {
        api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) }))
    };
    api.with_state(engine)
}

/// Run blocking engine work off the async executor.
async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn next(State(engine): Shared, Query(q): Query<SessionQuery>) -> ApiResult {
    let token = Engine::resolve_token(q.session.as_deref())?;
    let out = blocking(engine, move |e| e.next_song(&token)).await?;
    Ok(Json(out).into_response())
}

#[derive(Debug, Deserialize)]
struct RateBody {
    session: Option<String>,
    song_id: SongId,
    question: String,
    stars: Value,
}

async fn rate(State(engine): Shared, Query(q): Query<SessionQuery>, body: Bytes) -> ApiResult {
    let body: RateBody = parse_body(&body)?;
    let token = Engine::resolve_token(body.session.as_deref().or(q.session.as_deref()))?;
    let question: RatingQuestion = body.question.parse().map_err(ApiError::from)?;
    let stars = body
        .stars
        .as_i64()
        .ok_or_else(|| ApiError::validation(format!("stars must be an integer 1-5, got {}", body.stars)))?;
    let song = body.song_id;
    let ack = blocking(engine, move |e| e.rate(&token, &song, question, stars)).await?;
    Ok(Json(ack).into_response())
}

async fn get_preferences(State(engine): Shared, Query(q): Query<SessionQuery>) -> ApiResult {
    let token = Engine::resolve_token(q.session.as_deref())?;
    let t = token.clone();
    let weights = blocking(engine, move |e| e.preferences(&t)).await?;
    Ok(Json(json!({ "session": token, "weights": weights })).into_response())
}

#[derive(Debug, Deserialize)]
struct PreferencesBody {
    session: Option<String>,
    weights: PreferenceWeights,
}

async fn put_preferences(State(engine): Shared, Query(q): Query<SessionQuery>, body: Bytes) -> ApiResult {
    let body: PreferencesBody = parse_body(&body)?;
    let token = Engine::resolve_token(body.session.as_deref().or(q.session.as_deref()))?;
    let t = token.clone();
    let weights = blocking(engine, move |e| e.set_preferences(&t, body.weights)).await?;
    Ok(Json(json!({ "session": token, "weights": weights })).into_response())
}

async fn admin_prime(State(engine): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let auth = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    engine.check_admin(auth)?;
    let sub: PrimeSubmission = parse_body(&body)?;
    let accepted = blocking(engine, move |e| e.submit_prime(sub)).await?;
    Ok((StatusCode::CREATED, Json(accepted)).into_response())
}

#[derive(Debug, Deserialize)]
struct StatsQuery {
    unit: Option<String>,
}

async fn stats(State(engine): Shared, Query(q): Query<StatsQuery>) -> ApiResult {
    let unit = q
        .unit
        .as_deref()
        .map(str::parse::<AnalysisUnit>)
        .transpose()
        .map_err(ApiError::validation)?;
    let body = blocking(engine, move |e| Ok(e.stats(unit))).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn song(State(engine): Shared, Path(id): Path<String>) -> ApiResult {
    let view = blocking(engine, move |e| e.song(&SongId(id))).await?;
    Ok(Json(view).into_response())
}

async fn job(State(engine): Shared, Path(id): Path<String>) -> ApiResult {
    let job = blocking(engine, move |e| e.job(&JobId(id))).await?;
    Ok(Json(job).into_response())
}

async fn audio(State(engine): Shared, Path(file): Path<String>) -> ApiResult {
    let Some(id) = file.strip_suffix(".wav") else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "audio is served as .wav"));
    };
    let id = SongId(id.to_owned());
    let bytes = blocking(engine, move |e| e.audio(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}
