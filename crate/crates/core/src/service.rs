//! HTTP API for the exercise workflow.
//!
//! Sessions carry a seed; every instance a student sees is derived from
//! `(session seed, exercise id, attempt number)` and kept server-side so the
//! answer is graded against exactly what was shown. State is journaled to an
//! append-only JSON-lines file with a periodic snapshot next to it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::hash::{BuildHasher, Hasher};
use std::io::{self, BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dissect::{dissect_packet, hex_dump, verify_checksums, ChecksumVerdict};
use crate::exercises::{render_tree_fields, Bank, ExerciseError, Instance, Submission, Verdict};
use crate::rng::derive_seed;

pub const TEACHER_SECRET_ENV: &str = "NETEDU_TEACHER_SECRET";
pub const TEACHER_SECRET_HEADER: &str = "x-teacher-secret";
/// Journal entries between snapshots.
const SNAPSHOT_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "ser_status")]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

fn ser_status<S: serde::Serializer>(s: &StatusCode, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_u16(s.as_u16())
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<ExerciseError> for ApiError {
    fn from(e: ExerciseError) -> Self {
        match e {
            ExerciseError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "exercise_not_found", e.to_string()),
            ExerciseError::Input(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_submission", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "exercise_config", e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn entropy() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_nanos());
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    pub instance: Instance,
    pub submission: Submission,
    pub verdict: Verdict,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub created_at: u64,
    pub answered: BTreeMap<String, Vec<Attempt>>,
    /// Instances rendered but not yet answered.
    pub pending: BTreeMap<String, Instance>,
}

impl Session {
    fn attempt_no(&self, exercise: &str) -> u32 {
        self.answered.get(exercise).map_or(0, |a| a.len() as u32)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Entry {
    Create {
        id: String,
        seed: u64,
        created_at: u64,
    },
    Render {
        session: String,
        exercise: String,
        instance: Instance,
    },
    Answer {
        session: String,
        exercise: String,
        attempt: Attempt,
    },
}

fn apply(sessions: &mut BTreeMap<String, Session>, e: &Entry) {
    match e {
        Entry::Create { id, seed, created_at } => {
            sessions.insert(
                id.clone(),
                Session {
                    id: id.clone(),
                    seed: *seed,
                    created_at: *created_at,
                    answered: BTreeMap::new(),
                    pending: BTreeMap::new(),
                },
            );
        }
        Entry::Render {
            session,
            exercise,
            instance,
        } => {
            if let Some(s) = sessions.get_mut(session) {
                s.pending.insert(exercise.clone(), instance.clone());
            }
        }
        Entry::Answer {
            session,
            exercise,
            attempt,
        } => {
            if let Some(s) = sessions.get_mut(session) {
                s.pending.remove(exercise);
                s.answered.entry(exercise.clone()).or_default().push(attempt.clone());
            }
        }
    }
}

/// Append-only journal with a mirror of the state it describes.
struct Journal {
    path: Option<PathBuf>,
    file: Option<File>,
    mirror: BTreeMap<String, Session>,
    since_snapshot: usize,
}

fn snapshot_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".snapshot");
    PathBuf::from(s)
}

impl Journal {
    fn open(path: Option<&Path>) -> io::Result<Self> {
        let mut mirror = BTreeMap::new();
        let Some(path) = path else {
            return Ok(Journal {
                path: None,
                file: None,
                mirror,
                since_snapshot: 0,
            });
        };
        let snap = snapshot_path(path);
        if snap.exists() {
            let sessions: Vec<Session> = serde_json::from_str(&fs::read_to_string(&snap)?)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            mirror = sessions.into_iter().map(|s| (s.id.clone(), s)).collect();
        }
        let mut replayed = 0;
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        apply(&mut mirror, &e);
                        replayed += 1;
                    }
                    // a torn final line from a crash is dropped
                    Err(e) => log::warn!("{}:{}: skipping journal line: {e}", path.display(), n + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Journal {
            path: Some(path.to_path_buf()),
            file: Some(file),
            mirror,
            since_snapshot: replayed,
        })
    }

    fn append(&mut self, e: Entry) -> io::Result<()> {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_string(&e).map_err(io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        apply(&mut self.mirror, &e);
        self.since_snapshot += 1;
        if self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes the mirror atomically, then starts a fresh journal.
    fn snapshot(&mut self) -> io::Result<()> {
        let Some(path) = self.path.clone() else {
            self.since_snapshot = 0;
            return Ok(());
        };
        let snap = snapshot_path(&path);
        let tmp = snap.with_extension("tmp");
        let all: Vec<&Session> = self.mirror.values().collect();
        fs::write(&tmp, serde_json::to_vec(&all).map_err(io::Error::other)?)?;
        fs::rename(&tmp, &snap)?;
        self.file = Some(File::create(&path)?);
        self.since_snapshot = 0;
        Ok(())
    }
}

struct Inner {
    bank: Bank,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    journal: Mutex<Journal>,
    teacher_secret: Option<String>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// `state` is the journal path; `None` keeps everything in memory.
    pub fn new(bank: Bank, state: Option<&Path>, teacher_secret: Option<String>) -> io::Result<Self> {
        let journal = Journal::open(state)?;
        let sessions = journal
            .mirror
            .iter()
            .map(|(id, s)| (id.clone(), Arc::new(Mutex::new(s.clone()))))
            .collect();
        Ok(AppState(Arc::new(Inner {
            bank,
            sessions: Mutex::new(sessions),
            journal: Mutex::new(journal),
            teacher_secret: teacher_secret.filter(|s| !s.is_empty()),
        })))
    }

    fn record(&self, e: Entry) -> ApiResult<()> {
        self.0
            .journal
            .lock()
            .unwrap()
            .append(e)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "state_write_failed", e.to_string()))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.0
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("unknown session `{id}`")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/report", get(session_report))
        .route("/api/exercises", get(list_exercises))
        .route("/api/exercises/{id}", get(render_exercise))
        .route("/api/exercises/{id}/answer", post(answer_exercise))
        .route("/api/traces/{id}", get(trace_view))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    seed: Option<u64>,
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?
    };
    let seed = req.seed.unwrap_or_else(entropy);
    let id = format!("{:016x}{:016x}", entropy(), entropy().rotate_left(17) ^ seed);
    let created_at = now_ms();
    st.record(Entry::Create {
        id: id.clone(),
        seed,
        created_at,
    })?;
    st.0.sessions.lock().unwrap().insert(
        id.clone(),
        Arc::new(Mutex::new(Session {
            id: id.clone(),
            seed,
            created_at,
            answered: BTreeMap::new(),
            pending: BTreeMap::new(),
        })),
    );
    Ok(Json(json!({ "session": id, "seed": seed })))
}

async fn list_exercises(State(st): State<AppState>) -> Json<Value> {
    let list: Vec<Value> = st
        .0
        .bank
        .iter()
        .map(|e| json!({ "id": e.def.id(), "type": e.def.kind(), "prompt": e.def.prompt() }))
        .collect();
    Json(json!({ "exercises": list }))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn render_exercise(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SessionQuery>,
) -> ApiResult<Json<Value>> {
    let ex = st.0.bank.get(&id)?;
    let Some(sid) = q.session else {
        if ex.def.is_randomized() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "session_required",
                format!("`{id}` is randomized per session; pass ?session="),
            ));
        }
        return Ok(Json(ex.render(&ex.instantiate(0)?)?));
    };
    let session = st.session(&sid)?;
    let mut s = session.lock().unwrap();
    let attempt = s.attempt_no(&id);
    let instance = match s.pending.get(&id) {
        Some(i) => i.clone(),
        None => {
            let inst = ex.instantiate(derive_seed(s.seed, &id, u64::from(attempt)))?;
            st.record(Entry::Render {
                session: sid.clone(),
                exercise: id.clone(),
                instance: inst.clone(),
            })?;
            s.pending.insert(id.clone(), inst.clone());
            inst
        }
    };
    let mut body = ex.render(&instance)?;
    body["attempt"] = json!(attempt + 1);
    Ok(Json(body))
}

async fn answer_exercise(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SessionQuery>,
    body: Bytes,
) -> ApiResult<Json<Verdict>> {
    let ex = st.0.bank.get(&id)?;
    let sid = q.session.ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "session_required", "answers need ?session=")
    })?;
    let submission: Submission = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_submission", e.to_string()))?;
    let session = st.session(&sid)?;
    let mut s = session.lock().unwrap();
    let instance = s.pending.get(&id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no_instance",
            format!("`{id}` has not been rendered for this session"),
        )
    })?;
    let verdict = ex.grade(&instance, &submission)?;
    let attempt = Attempt {
        attempt: s.attempt_no(&id) + 1,
        instance,
        submission,
        verdict: verdict.clone(),
        timestamp: now_ms(),
    };
    st.record(Entry::Answer {
        session: sid,
        exercise: id.clone(),
        attempt: attempt.clone(),
    })?;
    s.pending.remove(&id);
    s.answered.entry(id).or_default().push(attempt);
    Ok(Json(verdict))
}

async fn session_report(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let session = st.session(&id)?;
    let s = session.lock().unwrap();
    Ok(Json(json!({
        "session": s.id,
        "seed": s.seed,
        "created_at": s.created_at,
        "exercises": s.answered,
    })))
}

async fn trace_view(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    let Some(secret) = &st.0.teacher_secret else {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "teacher_view_disabled",
            format!("teacher endpoints are disabled; set {TEACHER_SECRET_ENV}"),
        ));
    };
    let given = headers.get(TEACHER_SECRET_HEADER).and_then(|v| v.to_str().ok());
    if given != Some(secret.as_str()) {
        return Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            format!("missing or wrong {TEACHER_SECRET_HEADER} header"),
        ));
    }
    let ex = st.0.bank.get(&id)?;
    let cap = ex.capture.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "trace_not_found", format!("`{id}` has no capture"))
    })?;
    let packets: Vec<Value> = cap
        .packets
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let tree = dissect_packet(&p.data, cap.link_type);
            let checksums: BTreeMap<String, String> = verify_checksums(&tree, &p.data)
                .into_iter()
                .map(|(k, v)| {
                    let v = match v {
                        ChecksumVerdict::Valid => "valid".to_string(),
                        ChecksumVerdict::Invalid { stored, computed } => {
                            format!("invalid (stored 0x{stored:04x}, computed 0x{computed:04x})")
                        }
                        ChecksumVerdict::Disabled => "disabled".to_string(),
                        ChecksumVerdict::Unverifiable => "unverifiable".to_string(),
                    };
                    (k, v)
                })
                .collect();
            json!({
                "index": i,
                "ts_micros": p.ts_micros,
                "orig_len": p.orig_len,
                "tree": tree.render(),
                "fields": render_tree_fields(&tree),
                "hex": hex_dump(&p.data, None),
                "checksums": checksums,
            })
        })
        .collect();
    Ok(Json(json!({ "id": id, "packets": packets })))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bank: PathBuf,
    pub listen: SocketAddr,
    pub state: Option<PathBuf>,
    pub teacher_secret: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Bank(#[from] ExerciseError),
    #[error("state file: {0}")]
    State(io::Error),
    #[error("bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub async fn serve(cfg: ServeConfig) -> Result<(), ServeError> {
    let bank = Bank::load(&cfg.bank)?;
    log::info!("loaded {} exercises from {}", bank.len(), cfg.bank.display());
    let state = AppState::new(bank, cfg.state.as_deref(), cfg.teacher_secret).map_err(ServeError::State)?;
    let listener = tokio::net::TcpListener::bind(cfg.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: cfg.listen,
            source,
        })?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
