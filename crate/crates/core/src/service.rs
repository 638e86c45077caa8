// SPDX-License-Identifier: MIT OR Apache-2.0

//! HTTP/JSON service: serves session plans to the experiment client and
//! stores its responses in per-session JSONL append logs.
//!
//! | method | path | result |
//! |---|---|---|
//! | GET | `/api/health` | `{"v":1,"status":"ok"}` |
//! | GET | `/api/sessions/{id}` | session payload (trials in presentation order, timing) |
//! | POST | `/api/sessions/{id}/responses` | 201 stored, 200 identical duplicate, 400 invalid, 404 unknown session, 409 conflict |
//! | GET | `/api/sessions/{id}/responses` | stored records in arrival order |

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::error::{Error, Result};
use crate::responses::{FieldError, ResponseRecord, RESPONSE_VERSION};
use crate::stimuli::{SessionPlan, Trial};

/// Payload schema version.
pub const PAYLOAD_VERSION: u32 = 1;

/// Presentation timing for the client, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    pub fixation_ms: u32,
    pub word_ms: u32,
    pub blank_ms: u32,
    pub post_sentence_ms: u32,
    pub panel_max_ms: u32,
    pub feedback_ms: u32,
    pub feedback_correct: String,
    pub feedback_incorrect: String,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            fixation_ms: 600,
            word_ms: 250,
            blank_ms: 250,
            post_sentence_ms: 1500,
            panel_max_ms: 1500,
            feedback_ms: 500,
            feedback_correct: "Bravo!".into(),
            feedback_incorrect: "Peccato…".into(),
        }
    }
}

impl Timing {
    /// Scheduled time from fixation onset to panel onset for `n` tokens.
    pub fn pre_panel_ms(&self, n: usize) -> u64 {
        u64::from(self.fixation_ms) + n as u64 * u64::from(self.word_ms + self.blank_ms) + u64::from(self.post_sentence_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadTrial {
    pub block: String,
    pub trial: Trial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionPayload {
    pub v: u32,
    pub session_id: String,
    pub timing: Timing,
    pub trials: Vec<PayloadTrial>,
}

/// Session payloads keyed by id (`"1"`, `"2"`, ...); training block first.
pub fn session_payloads(plan: &SessionPlan, timing: &Timing) -> Result<BTreeMap<String, SessionPayload>> {
    let mut out = BTreeMap::new();
    for s in &plan.sessions {
        let mut trials = Vec::with_capacity(s.training.len() + s.main.len());
        for (block, ids) in [("training", &s.training), ("main", &s.main)] {
            for id in ids {
                let t = plan
                    .trial(id)
                    .ok_or_else(|| Error::Integrity(format!("session {} lists unknown trial {id}", s.index)))?;
                trials.push(PayloadTrial {
                    block: block.to_string(),
                    trial: t.clone(),
                });
            }
        }
        let id = s.index.to_string();
        out.insert(
            id.clone(),
            SessionPayload {
                v: PAYLOAD_VERSION,
                session_id: id,
                timing: timing.clone(),
                trials,
            },
        );
    }
    Ok(out)
}

struct SessionEntry {
    payload: Value,
    trial_ids: Vec<String>,
    log: PathBuf,
    /// Serializes writes; holds the records in arrival order.
    records: Mutex<Vec<ResponseRecord>>,
}

/// Shared service state. Stimuli are immutable after construction.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<HashMap<String, SessionEntry>>,
}

pub fn response_log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("responses-{session_id}.jsonl"))
}

/// Reads one response log; missing files are empty.
pub fn read_response_log(path: &Path) -> Result<Vec<ResponseRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

impl AppState {
    /// Loads existing logs from `responses_dir` (created if missing).
    pub fn new(plan: &SessionPlan, timing: &Timing, responses_dir: &Path) -> Result<Self> {
        fs::create_dir_all(responses_dir).map_err(|e| Error::io(responses_dir, e))?;
        let mut sessions = HashMap::new();
        for (id, payload) in session_payloads(plan, timing)? {
            let log = response_log_path(responses_dir, &id);
            let records = read_response_log(&log)?;
            sessions.insert(
                id,
                SessionEntry {
                    trial_ids: payload.trials.iter().map(|t| t.trial.id.clone()).collect(),
                    payload: serde_json::to_value(&payload)?,
                    log,
                    records: Mutex::new(records),
                },
            );
        }
        Ok(Self {
            sessions: Arc::new(sessions),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/responses", get(get_responses).post(post_response))
        .with_state(state)
}

fn error_body(status: StatusCode, message: &str, fields: &[FieldError]) -> Response {
    (
        status,
        Json(json!({ "v": PAYLOAD_VERSION, "error": message, "fields": fields })),
    )
        .into_response()
}

fn unknown_session(id: &str) -> Response {
    error_body(StatusCode::NOT_FOUND, &format!("unknown session {id}"), &[])
}

async fn health() -> Json<Value> {
    Json(json!({ "v": PAYLOAD_VERSION, "status": "ok" }))
}

async fn get_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match st.sessions.get(&id) {
        Some(s) => Json(s.payload.clone()).into_response(),
        None => unknown_session(&id),
    }
}

async fn get_responses(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(s) = st.sessions.get(&id) else {
        return unknown_session(&id);
    };
    let records = s.records.lock().await.clone();
    Json(json!({ "v": RESPONSE_VERSION, "session_id": id, "responses": records })).into_response()
}

async fn post_response(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let Some(s) = st.sessions.get(&id) else {
        return unknown_session(&id);
    };
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return error_body(
                StatusCode::BAD_REQUEST,
                "invalid response",
                &[FieldError {
                    field: String::new(),
                    message: format!("malformed JSON: {e}"),
                }],
            )
        }
    };
    let record = match ResponseRecord::from_json(&value) {
        Ok(r) => r,
        Err(fields) => return error_body(StatusCode::BAD_REQUEST, "invalid response", &fields),
    };
    let mut fields = Vec::new();
    if record.session_id != id {
        fields.push(FieldError {
            field: "session_id".into(),
            message: format!("does not match session {id}"),
        });
    }
    if !s.trial_ids.contains(&record.trial_id) {
        fields.push(FieldError {
            field: "trial_id".into(),
            message: format!("not a trial of session {id}"),
        });
    }
    if !fields.is_empty() {
        return error_body(StatusCode::BAD_REQUEST, "invalid response", &fields);
    }

    let mut records = s.records.lock().await;
    if let Some(existing) = records.iter().find(|r| r.key() == record.key()) {
        return if *existing == record {
            (StatusCode::OK, Json(json!({ "v": RESPONSE_VERSION, "status": "duplicate" }))).into_response()
        } else {
            error_body(
                StatusCode::CONFLICT,
                "a different response for this participant and trial is already stored",
                &[],
            )
        };
    }
    if let Err(e) = append_line(&s.log, &record) {
        return error_body(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), &[]);
    }
    records.push(record);
    (StatusCode::CREATED, Json(json!({ "v": RESPONSE_VERSION, "status": "stored" }))).into_response()
}

fn append_line(path: &Path, record: &ResponseRecord) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Binds and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_token_schedule() {
        let t = Timing::default();
        assert_eq!(t.pre_panel_ms(9), 6600);
        for n in 0..20 {
            assert_eq!(t.pre_panel_ms(n), 600 + 500 * n as u64 + 1500);
        }
    }

    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    use crate::stimuli::{assemble_sessions, build_lexicon};

    fn plan() -> SessionPlan {
        assemble_sessions(&build_lexicon(), 2).unwrap()
    }

    async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    fn record(trial: &str) -> Value {
        json!({
            "v": 1, "participant_id": "p01", "session_id": "1", "trial_id": trial,
            "detection_pressed": true, "detection_latency_ms": 412.0, "extra_presses": 0,
            "panel_choice": "correct", "panel_latency_ms": 803.5, "correct_side": "left",
            "timestamp": "2026-01-01T10:00:00Z"
        })
    }

    #[tokio::test]
    async fn endpoints_and_status_codes() {
        let dir = tempfile::tempdir().unwrap();
        let plan = plan();
        let app = router(AppState::new(&plan, &Timing::default(), dir.path()).unwrap());

        let (st, v) = call(&app, "GET", "/api/health", None).await;
        assert_eq!((st, v["v"].as_u64()), (StatusCode::OK, Some(1)));

        let (st, v) = call(&app, "GET", "/api/sessions/1", None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["v"], 1);
        let payload: SessionPayload = serde_json::from_value(v).unwrap();
        assert_eq!(payload.trials.len(), plan.sessions[0].training.len() + plan.sessions[0].main.len());
        assert_eq!(payload.trials[0].block, "training");
        let trial = payload.trials.last().unwrap().trial.id.clone();

        assert_eq!(call(&app, "GET", "/api/sessions/9", None).await.0, StatusCode::NOT_FOUND);
        assert_eq!(
            call(&app, "POST", "/api/sessions/9/responses", Some(record(&trial))).await.0,
            StatusCode::NOT_FOUND
        );

        let (st, _) = call(&app, "POST", "/api/sessions/1/responses", Some(record(&trial))).await;
        assert_eq!(st, StatusCode::CREATED);
        let (st, _) = call(&app, "POST", "/api/sessions/1/responses", Some(record(&trial))).await;
        assert_eq!(st, StatusCode::OK);
        let mut changed = record(&trial);
        changed["panel_choice"] = json!("incorrect");
        let (st, _) = call(&app, "POST", "/api/sessions/1/responses", Some(changed)).await;
        assert_eq!(st, StatusCode::CONFLICT);

        let mut bad = record(&trial);
        bad["panel_choice"] = json!("maybe");
        bad.as_object_mut().unwrap().remove("timestamp");
        let (st, v) = call(&app, "POST", "/api/sessions/1/responses", Some(bad)).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
        let fields: Vec<&str> = v["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
        assert!(fields.contains(&"panel_choice") && fields.contains(&"timestamp"), "{fields:?}");

        let mut wrong = record(&trial);
        wrong["session_id"] = json!("2");
        let (st, v) = call(&app, "POST", "/api/sessions/1/responses", Some(wrong)).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
        assert_eq!(v["fields"][0]["field"], "session_id");
        let (st, v) = call(&app, "POST", "/api/sessions/1/responses", Some(record("nope"))).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
        assert_eq!(v["fields"][0]["field"], "trial_id");

        let (st, v) = call(&app, "GET", "/api/sessions/1/responses", None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["responses"].as_array().unwrap().len(), 1);
        assert_eq!(v["responses"][0], record(&trial));

        // restart reloads the log
        let logged = read_response_log(&response_log_path(dir.path(), "1")).unwrap();
        assert_eq!(logged.len(), 1);
        let app2 = router(AppState::new(&plan, &Timing::default(), dir.path()).unwrap());
        let (st, _) = call(&app2, "POST", "/api/sessions/1/responses", Some(record(&trial))).await;
        assert_eq!(st, StatusCode::OK);
    }

    #[tokio::test]
    async fn concurrent_posts_serialize() {
        let dir = tempfile::tempdir().unwrap();
        let plan = plan();
        let app = router(AppState::new(&plan, &Timing::default(), dir.path()).unwrap());
        let ids: Vec<String> = plan.sessions[0].main.iter().take(40).cloned().collect();
        let mut handles = Vec::new();
        for id in ids.iter().chain(ids.iter()) {
            let app = app.clone();
            let body = record(id);
            handles.push(tokio::spawn(async move { call(&app, "POST", "/api/sessions/1/responses", Some(body)).await.0 }));
        }
        let mut created = 0;
        for h in handles {
            let st = h.await.unwrap();
            assert!(st == StatusCode::CREATED || st == StatusCode::OK);
            created += usize::from(st == StatusCode::CREATED);
        }
        assert_eq!(created, ids.len());
        assert_eq!(read_response_log(&response_log_path(dir.path(), "1")).unwrap().len(), ids.len());
    }
}

