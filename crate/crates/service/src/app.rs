use std::sync::Arc;

use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use uuid::Uuid;

use signalgame_core::gridworld::{Condition, DistanceField, Scene};
use signalgame_core::pragmatics::valid_actions;
use signalgame_core::sim_lab::cleaning::ParticipantRecord;
use signalgame_core::trial_factory::{generate_with, GenerationLayout, TrialSuite, DEFAULT_MAX_ATTEMPTS};
use signalgame_protocol::{
    ActionSubmission, AnalyzeRequest, AnalyzeResponse, CreateSession, GenerateRequest, InstructionsView, OutcomeView,
    QuizResult, QuizSubmission, QuizView, SessionView, SimulateRequest, SimulateResponse, SurveySubmission,
    SweepRequest, SweepResponse, TrialView, ValidateResponse,
};

use crate::config::ServiceConfig;
use crate::content;
use crate::error::ServiceError;
use crate::lab;
use crate::receiver::ReceiverBehavior;
use crate::session::{Catalog, Event, EventRecord, SessionError, SessionState};
use crate::store::Store;

/// Quiz failures beyond this many mark the participant for exclusion.
pub const QUIZ_FLAG_AFTER: u32 = 2;

const PRACTICE_CONDITIONS: [Condition; 5] =
    [Condition::Control, Condition::Simple, Condition::Control, Condition::Difficult, Condition::Control];

#[derive(Debug)]
pub struct AppState {
    pub config: ServiceConfig,
    pub catalog: Catalog,
    pub receiver: ReceiverBehavior,
    pub store: Store,
}

/// Practice scenes: five generated pairs, mostly control, under their own seed.
pub fn practice_suite(seed: u64) -> Result<TrialSuite, ServiceError> {
    let layout = GenerationLayout::default();
    let pairs = PRACTICE_CONDITIONS
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let id = format!("practice-{:02}", i + 1);
            generate_with(*c, seed.wrapping_mul(7_919).wrapping_add(i as u64), DEFAULT_MAX_ATTEMPTS, &layout, &id)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok(TrialSuite { pairs })
}

impl AppState {
    /// Loads or generates the suite, builds the practice pool and replays
    /// the event log if one is configured.
    pub async fn build(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.check().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let (suite_path, suite_seed, practice_seed) = (config.suite_path.clone(), config.suite_seed, config.practice_seed);
        let (suite, practice) = tokio::task::spawn_blocking(move || -> Result<_, ServiceError> {
            let suite = match &suite_path {
                Some(p) => TrialSuite::load(p).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
                None => lab::generate(&GenerateRequest { condition: None, seed: suite_seed })?,
            };
            Ok((suite, practice_suite(practice_seed)?))
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
        Self::with_catalog(config, Catalog { suite, practice }).await
    }

    /// Like [`AppState::build`] with the scenes supplied by the caller.
    pub async fn with_catalog(config: ServiceConfig, catalog: Catalog) -> Result<Self, ServiceError> {
        config.check().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let receiver = ReceiverBehavior::new(config.receiver_delay_mean)
            .ok_or_else(|| ServiceError::BadRequest("receiver delay mean must be positive".into()))?;
        let store = match &config.event_log {
            Some(p) => Store::open(p, config.bonus_cap).await?,
            None => Store::in_memory(config.bonus_cap),
        };
        Ok(Self { config, catalog, receiver, store })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/instructions", get(instructions))
        .route("/quiz", get(quiz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_view))
        .route("/sessions/{id}/instructions/done", post(instructions_done))
        .route("/sessions/{id}/quiz", post(submit_quiz))
        .route("/sessions/{id}/trials/{n}", get(trial))
        .route("/sessions/{id}/actions", post(submit_action))
        .route("/sessions/{id}/survey", post(submit_survey))
        .route("/admin/export", get(export))
        .route("/admin/suite", get(suite))
        .route("/admin/sessions", get(session_ids))
        .route("/admin/sessions/{id}/events", get(events))
        .route("/admin/sessions/{id}/state", get(state_dump))
        .route("/lab/generate", post(lab_generate))
        .route("/lab/simulate", post(lab_simulate))
        .route("/lab/sweep", post(lab_sweep))
        .route("/lab/analyze", post(lab_analyze))
        .route("/lab/validate", post(lab_validate))
        .with_state(state)
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

fn view(s: &SessionState) -> SessionView {
    SessionView {
        session_id: s.session_id.clone(),
        participant_code: s.participant_code.clone(),
        phase: s.phase,
        index: s.index,
        trials_in_phase: s.trials_in(s.phase),
        quiz_failures: s.quiz_failures,
        bonus: s.bonus,
    }
}

async fn instructions(State(app): Shared) -> Json<InstructionsView> {
    let c = &app.config;
    let experiment = 2 * app.catalog.suite.pairs.len() as u32;
    let practice = c.practice_trials.min(2 * app.catalog.practice.pairs.len() as u32);
    Json(content::instructions(&c.params, c.bonus_cap, practice, experiment))
}

async fn quiz() -> Json<QuizView> {
    Json(content::quiz())
}

async fn create_session(State(app): Shared, Json(req): Json<CreateSession>) -> ApiResult<SessionView> {
    let code = req.participant_code.trim();
    let seed = req.seed.unwrap_or_else(rand::random);
    let created = SessionState::create(code, seed, &app.catalog, app.config.practice_trials)?;
    let id = Uuid::new_v4().to_string();
    let state = app.store.create(id, code, created).await?;
    tracing::info!(session = %state.session_id, code, "session created");
    Ok(Json(view(&state)))
}

async fn session_view(State(app): Shared, Path(id): Path<String>) -> ApiResult<SessionView> {
    let session = app.store.get(&id).await?;
    let s = session.lock().await;
    Ok(Json(view(&s.state)))
}

async fn instructions_done(State(app): Shared, Path(id): Path<String>) -> ApiResult<SessionView> {
    let session = app.store.get(&id).await?;
    let mut s = session.lock().await;
    let events = s.state.finish_instructions()?;
    app.store.commit(&mut s, events).await?;
    Ok(Json(view(&s.state)))
}

async fn submit_quiz(State(app): Shared, Path(id): Path<String>, Json(req): Json<QuizSubmission>) -> ApiResult<QuizResult> {
    let session = app.store.get(&id).await?;
    let mut s = session.lock().await;
    let events = s.state.answer_quiz(&req)?;
    let passed = matches!(events.first(), Some(Event::QuizAnswer { correct: true, .. }));
    app.store.commit(&mut s, events).await?;
    let failures = s.state.quiz_failures;
    Ok(Json(QuizResult { passed, failures, flagged: failures > QUIZ_FLAG_AFTER, phase: s.state.phase }))
}

fn current_scene<'a>(app: &'a AppState, state: &SessionState) -> Result<&'a Scene, ServiceError> {
    let r = state.current_ref().ok_or_else(|| SessionError::CorruptLog("no current trial".into()))?;
    app.catalog
        .scene(state.phase, r)
        .ok_or_else(|| SessionError::CorruptLog(format!("unknown scene {}", r.pair_id)).into())
}

async fn trial(State(app): Shared, Path((id, n)): Path<(String, u32)>) -> ApiResult<TrialView> {
    let session = app.store.get(&id).await?;
    let mut s = session.lock().await;
    let events = s.state.show_trial(n)?;
    let scene = current_scene(&app, &s.state)?.clone();
    app.store.commit(&mut s, events).await?;
    Ok(Json(TrialView {
        phase: s.state.phase,
        index: n,
        total: s.state.trials_in(s.state.phase),
        allowed_actions: valid_actions(&scene),
        scene,
        bonus: s.state.bonus,
    }))
}

async fn submit_action(
    State(app): Shared,
    Path(id): Path<String>,
    Json(req): Json<ActionSubmission>,
) -> ApiResult<OutcomeView> {
    let session = app.store.get(&id).await?;
    let mut s = session.lock().await;
    let phase = s.state.phase;
    let events =
        s.state.submit_action(req.index, req.action, req.reaction_time, &app.catalog, &app.receiver, &app.config.params)?;
    let scene = current_scene(&app, &s.state)?.clone();
    let outcome = events
        .iter()
        .find_map(|e| match e {
            Event::PracticeResult { outcome, .. } | Event::OutcomeShown { outcome, .. } => Some(outcome.clone()),
            _ => None,
        })
        .ok_or_else(|| ServiceError::Internal("action produced no outcome".into()))?;
    app.store.commit(&mut s, events).await?;

    let item = scene.item(outcome.reached_item).map_err(|e| ServiceError::Internal(e.to_string()))?;
    let path = DistanceField::new(&scene, scene.agent_pos(outcome.mover))
        .and_then(|d| d.path_to(item.pos))
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let params = &app.config.params;
    let reward = params.utility(outcome.reached_item == scene.target_id, 0);
    Ok(Json(OutcomeView {
        phase,
        index: req.index,
        action: req.action,
        mover: outcome.mover,
        reached_item: outcome.reached_item,
        path,
        receiver_delay: outcome.receiver_delay,
        steps: outcome.steps,
        reward,
        cost: reward - outcome.utility,
        utility: outcome.utility,
        bonus: s.state.bonus,
        feedback: outcome.feedback,
        next_phase: s.state.phase,
        next_index: s.state.index,
    }))
}

async fn submit_survey(
    State(app): Shared,
    Path(id): Path<String>,
    Json(req): Json<SurveySubmission>,
) -> ApiResult<SessionView> {
    let session = app.store.get(&id).await?;
    let mut s = session.lock().await;
    let events = s.state.submit_survey(&req)?;
    app.store.commit(&mut s, events).await?;
    Ok(Json(view(&s.state)))
}

async fn export(State(app): Shared) -> ApiResult<Vec<ParticipantRecord>> {
    let mut out = Vec::new();
    for id in app.store.ids().await {
        let session = app.store.get(&id).await?;
        let s = session.lock().await;
        out.push(s.state.export(&app.catalog)?);
    }
    out.sort_by(|a, b| a.participant.cmp(&b.participant));
    Ok(Json(out))
}

async fn suite(State(app): Shared) -> Json<TrialSuite> {
    Json(app.catalog.suite.clone())
}

async fn session_ids(State(app): Shared) -> Json<Vec<String>> {
    Json(app.store.ids().await)
}

async fn events(State(app): Shared, Path(id): Path<String>) -> ApiResult<Vec<EventRecord>> {
    let session = app.store.get(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.records.clone()))
}

async fn state_dump(State(app): Shared, Path(id): Path<String>) -> ApiResult<SessionState> {
    let session = app.store.get(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.state.clone()))
}

// ---------------------------------------------------------------------------
// Lab
// ---------------------------------------------------------------------------

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map(Json)
}

async fn lab_generate(Json(req): Json<GenerateRequest>) -> ApiResult<TrialSuite> {
    blocking(move || lab::generate(&req)).await
}

async fn lab_simulate(Json(req): Json<SimulateRequest>) -> ApiResult<SimulateResponse> {
    blocking(move || lab::simulate(&req)).await
}

async fn lab_sweep(Json(req): Json<SweepRequest>) -> ApiResult<SweepResponse> {
    blocking(move || lab::sweep(&req)).await
}

async fn lab_analyze(Json(req): Json<AnalyzeRequest>) -> ApiResult<AnalyzeResponse> {
    blocking(move || lab::analyze(&req)).await
}

async fn lab_validate(Json(req): Json<TrialSuite>) -> ApiResult<ValidateResponse> {
    blocking(move || lab::validate(&req)).await
}

/// Binds `config.bind` and serves until ctrl-c.
pub async fn serve(app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(app.config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Serves on an already-bound listener in the background; used by tests and
/// the CLI's in-process mode.
pub fn spawn(app: Arc<AppState>, listener: tokio::net::TcpListener) -> tokio::task::JoinHandle<std::io::Result<()>> {
    tokio::spawn(async move { axum::serve(listener, router(app)).await })
}
