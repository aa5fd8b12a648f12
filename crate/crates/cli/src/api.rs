//! Request handling shared by the HTTP service and `ncc predict --json`.
//!
//! Everything here is synchronous and transport-free: a request body goes
//! in, a status code and a JSON body come out. Both fronts serialize
//! responses through [`to_body`], so their output is byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ncc_core::registry::Registry;
use ncc_core::tasks::{Predictor, TaskError};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_K: usize = 5;

/// The three inference endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Complete,
    Summarize,
    Search,
}

impl Endpoint {
    /// Accepts the endpoint verb or the task name.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complete" | "completion" => Some(Endpoint::Complete),
            "summarize" | "summarization" => Some(Endpoint::Summarize),
            "search" | "retrieval" => Some(Endpoint::Search),
            _ => None,
        }
    }

    /// Registry name of the task this endpoint serves.
    pub fn task(self) -> &'static str {
        match self {
            Endpoint::Complete => "completion",
            Endpoint::Summarize => "summarization",
            Endpoint::Search => "retrieval",
        }
    }

    pub fn verb(self) -> &'static str {
        match self {
            Endpoint::Complete => "complete",
            Endpoint::Summarize => "summarize",
            Endpoint::Search => "search",
        }
    }
}

/// Body of the POST endpoints. Which payload field is read depends on the
/// endpoint: `tokens` or `text` for completion, `code` for summarization,
/// `query` for search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub model_id: Option<String>,
    /// Optional; when present it must name the endpoint being called.
    pub task: Option<String>,
    pub tokens: Option<Vec<String>>,
    pub text: Option<String>,
    pub code: Option<String>,
    pub query: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: String,
}

impl ApiResponse {
    fn ok(body: String) -> Self {
        Self { status: 200, body }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self {
            status,
            body: to_body(&json!({ "error": message.into() })),
        }
    }
}

/// The one serializer behind every JSON response.
pub fn to_body<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("response types serialize")
}

/// Runs one prediction against a loaded model. Status 422 marks input the
/// model cannot use (empty or untokenizable); 400 marks an invalid request.
pub fn predict(predictor: &Predictor, endpoint: Endpoint, req: &PredictRequest) -> ApiResponse {
    let k = req.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return ApiResponse::error(400, "k must be at least 1");
    }
    if let Some(task) = req.task.as_deref() {
        if Endpoint::parse(task) != Some(endpoint) {
            return ApiResponse::error(400, format!("`task` is `{task}` but the endpoint is `{}`", endpoint.verb()));
        }
    }
    if predictor.task() != endpoint.task() {
        return ApiResponse::error(
            400,
            format!("model serves `{}`, not `{}`", predictor.task(), endpoint.task()),
        );
    }
    let result = match endpoint {
        Endpoint::Complete => {
            let tokens: Vec<String> = match (&req.tokens, &req.text) {
                (Some(t), _) => t.iter().flat_map(|s| s.split_whitespace()).map(str::to_string).collect(),
                (None, Some(text)) => text.split_whitespace().map(str::to_string).collect(),
                (None, None) => Vec::new(),
            };
            if tokens.is_empty() {
                return ApiResponse::error(422, "empty payload: `tokens` or `text` required");
            }
            predictor.complete(&tokens, k).map(|r| to_body(&r))
        }
        Endpoint::Summarize => {
            let code = req.code.as_deref().or(req.text.as_deref()).unwrap_or("");
            if code.trim().is_empty() {
                return ApiResponse::error(422, "empty payload: `code` required");
            }
            predictor.summarize(code).map(|r| to_body(&r))
        }
        Endpoint::Search => {
            let query = req.query.as_deref().or(req.text.as_deref()).unwrap_or("");
            if query.trim().is_empty() {
                return ApiResponse::error(422, "empty payload: `query` required");
            }
            predictor.search(query, k).map(|r| to_body(&r))
        }
    };
    match result {
        Ok(body) => ApiResponse::ok(body),
        Err(TaskError::BadInput(msg)) => ApiResponse::error(422, msg),
        Err(e) => ApiResponse::error(500, e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub task: String,
    #[serde(default)]
    pub description: String,
    /// Model directory (relative paths resolve against the catalog file).
    pub checkpoint: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CatalogFile {
    Wrapped { models: Vec<CatalogEntry> },
    Bare(Vec<CatalogEntry>),
}

/// Models available to the service, all loaded at startup.
pub struct Catalog {
    entries: Vec<CatalogEntry>,
    predictors: BTreeMap<String, Predictor>,
}

impl Catalog {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            predictors: BTreeMap::new(),
        }
    }

    /// Reads a `models.json` file and loads every listed model.
    pub fn load(path: &Path, registry: &Registry) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: CatalogFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let entries = match file {
            CatalogFile::Wrapped { models } => models,
            CatalogFile::Bare(models) => models,
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let mut catalog = Self::new();
        for mut entry in entries {
            if entry.checkpoint.is_relative() {
                entry.checkpoint = base.join(&entry.checkpoint);
            }
            let predictor = Predictor::load(&entry.checkpoint, registry)
                .with_context(|| format!("loading model `{}` from {}", entry.id, entry.checkpoint.display()))?;
            catalog.insert(entry, predictor)?;
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, mut entry: CatalogEntry, predictor: Predictor) -> anyhow::Result<()> {
        if self.predictors.contains_key(&entry.id) {
            bail!("duplicate model id `{}`", entry.id);
        }
        let Some(endpoint) = Endpoint::parse(&entry.task) else {
            bail!("model `{}`: unknown task `{}`", entry.id, entry.task);
        };
        if endpoint.task() != predictor.task() {
            bail!(
                "model `{}` is listed as `{}` but was trained for `{}`",
                entry.id,
                entry.task,
                predictor.task()
            );
        }
        entry.task = endpoint.task().to_string();
        self.predictors.insert(entry.id.clone(), predictor);
        self.entries.push(entry);
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Predictor> {
        self.predictors.get(id)
    }

    /// Body of `GET /api/models`.
    pub fn models_body(&self) -> String {
        let models: Vec<_> = self
            .entries
            .iter()
            .map(|e| json!({ "id": e.id, "task": e.task, "description": e.description }))
            .collect();
        to_body(&json!({ "models": models }))
    }

    /// Handles a POST to `endpoint` with raw body bytes.
    pub fn handle(&self, endpoint: Endpoint, body: &[u8]) -> ApiResponse {
        let req: PredictRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return ApiResponse::error(400, format!("malformed request body: {e}")),
        };
        let Some(model_id) = req.model_id.as_deref() else {
            return ApiResponse::error(400, "missing `model_id`");
        };
        if req.k == Some(0) {
            return ApiResponse::error(400, "k must be at least 1");
        }
        let Some(predictor) = self.get(model_id) else {
            return ApiResponse {
                status: 404,
                body: to_body(&json!({
                    "error": format!("unknown model `{model_id}`"),
                    "known_models": self.ids(),
                })),
            };
        };
        predict(predictor, endpoint, &req)
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Self::new()
    }
}
