//! HTTP service for the radio: listener sessions, ratings, preferences,
//! admin prime submission, stats, and a background generation worker, all
//! persisted through one append-only event log.

pub mod audio;
pub mod config;
pub mod engine;
pub mod error;
pub mod log;
pub mod routes;
pub mod sessions;

use std::sync::Arc;
use std::time::Duration;

pub use config::ServiceConfig;
pub use engine::Engine;
pub use error::{ApiError, ServiceError};
pub use routes::router;

/// Drain the generation queue every `worker_tick_ms`.
pub async fn run_worker(engine: Arc<Engine>) {
    let mut tick = tokio::time::interval(Duration::from_millis(engine.config().worker_tick_ms.max(1)));
    loop {
        tick.tick().await;
        let e = engine.clone();
        match tokio::task::spawn_blocking(move || e.drain_queue()).await {
            Ok(Ok(0)) => {}
            Ok(Ok(n)) => tracing::debug!(jobs = n, "worker drained queue"),
            Ok(Err(err)) => tracing::error!(error = %err, "worker step failed"),
            Err(err) => tracing::error!(error = %err, "worker task panicked"),
        }
    }
}

/// Bind, start the worker, and serve until ctrl-c.
pub async fn serve(engine: Arc<Engine>) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(&engine.config().bind_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let worker = tokio::spawn(run_worker(engine.clone()));
    let app = router(engine);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    worker.abort();
    Ok(())
}
