//! Service configuration: defaults, then a TOML or JSON file, then
//! `RADIO_*` environment variables.
//!
//! Environment keys map onto the config tree with `__` between levels, so
//! `RADIO_SCHEDULER__GAMMA=4` sets `scheduler.gamma`. Values are parsed as
//! JSON when possible and taken as strings otherwise.

use std::path::{Path, PathBuf};

use radio_core::analytics::AnalysisUnit;
use radio_core::queue::DEFAULT_QUEUE_CAPACITY;
use radio_core::recommender::RecommenderConfig;
use radio_core::scheduler::SchedulerConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ServiceError;

pub const ENV_PREFIX: &str = "RADIO_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Name in the generator registry: `mock`, `external` or `failing`.
    pub backend: String,
    pub params: Value,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            params: Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub catalog_path: PathBuf,
    /// Feature provider used to load the catalog.
    pub catalog_provider: String,
    /// Bearer token for `/api/admin/*`; admin calls are refused while unset.
    pub admin_token: Option<String>,
    pub bind_addr: String,
    /// Directory with the built web UI; a placeholder page is served if absent.
    pub ui_dir: PathBuf,
    pub scheduler: SchedulerConfig,
    pub recommender: RecommenderConfig,
    /// Name in the selection-rule registry.
    pub selection_rule: String,
    pub queue_capacity: usize,
    pub generator: GeneratorConfig,
    /// Simulated generation time per job.
    pub generation_latency_ms: u64,
    pub worker_tick_ms: u64,
    /// Requests per second per session; 0 disables the limit.
    pub rate_limit_per_sec: u32,
    /// fsync every appended event.
    pub fsync: bool,
    pub stats_unit: AnalysisUnit,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            catalog_path: "fixtures/catalog.json".into(),
            catalog_provider: "json_file".into(),
            admin_token: None,
            bind_addr: "127.0.0.1:8080".into(),
            ui_dir: "web-ui/dist".into(),
            scheduler: SchedulerConfig::default(),
            recommender: RecommenderConfig::default(),
            selection_rule: "distance_power".into(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            generator: GeneratorConfig::default(),
            generation_latency_ms: 0,
            worker_tick_ms: 500,
            rate_limit_per_sec: 10,
            fsync: true,
            stats_unit: AnalysisUnit::PerSongMean,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.scheduler.validate()?;
        self.recommender.validate()?;
        if self.queue_capacity == 0 {
            return Err(ServiceError::Config("queue_capacity must be positive".into()));
        }
        Ok(())
    }

    /// Load from an optional file, then apply overrides from `vars`.
    pub fn load<I>(path: Option<&Path>, vars: I) -> Result<Self, ServiceError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut tree = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
            let file: Value = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
            } else {
                toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
            };
            merge(&mut tree, file);
        }
        for (key, raw) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let parts: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            set_path(&mut tree, &parts, value)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ServiceError> {
        Self::load(path, std::env::vars())
    }

    pub fn log_path(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }

    pub fn audio_dir(&self) -> PathBuf {
        self.data_dir.join("audio")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Keys are matched case-insensitively so `RADIO_SCHEDULER__M` reaches `M`.
fn set_path(tree: &mut Value, parts: &[String], value: Value) -> Result<(), ServiceError> {
    let Value::Object(map) = tree else {
        return Err(ServiceError::Config(format!("cannot set `{}` inside a scalar", parts.join("."))));
    };
    let key = resolve_key(map, &parts[0]);
    if parts.len() == 1 {
        map.insert(key, value);
        return Ok(());
    }
    let child = map.entry(key).or_insert_with(|| Value::Object(Map::new()));
    if child.is_null() {
        *child = Value::Object(Map::new());
    }
    set_path(child, &parts[1..], value)
}

fn resolve_key(map: &Map<String, Value>, wanted: &str) -> String {
    map.keys()
        .find(|k| k.eq_ignore_ascii_case(wanted))
        .cloned()
        .unwrap_or_else(|| wanted.to_owned())
}
