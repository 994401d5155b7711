mod common;

use std::collections::BTreeSet;

use reqwest::StatusCode;
use serde_json::{json, Value};

use signalgame_core::gridworld::{Agent, Cents, Feature};
use signalgame_core::pragmatics::{action_utilities, SpeakerAction, SpeakerConfig};
use signalgame_core::sim_lab::cleaning::ParticipantRecord;
use signalgame_core::sim_lab::{clean_human_data, CleaningConfig};
use signalgame_protocol::{
    ActionSubmission, CreateSession, InstructionsView, OutcomeView, Phase, QuizResult, QuizSubmission, QuizView,
    SceneRef, SessionView, SurveySubmission, TrialView,
};
use signalgame_service::content::correct_answers;
use signalgame_service::session::{replay, EventRecord, SessionState};
use signalgame_service::ServiceConfig;

use common::{catalog, start, Harness};

fn wrong_answers() -> QuizSubmission {
    let mut q = correct_answers();
    q.answers.insert("signals".into(), "Two".into());
    q
}

fn survey() -> SurveySubmission {
    SurveySubmission {
        receiver_rating: Some("Good".into()),
        serious: Some(true),
        motivation: Some("bonus".into()),
        comments: None,
    }
}

async fn create(h: &Harness, code: &str, seed: u64) -> SessionView {
    let (status, v) = h.post("/sessions", &CreateSession { participant_code: code.into(), seed: Some(seed) }).await;
    assert_eq!(status, StatusCode::OK);
    v
}

async fn through_quiz(h: &Harness, id: &str) {
    let (s, _): (_, SessionView) = h.post(&format!("/sessions/{id}/instructions/done"), &json!({})).await;
    assert_eq!(s, StatusCode::OK);
    let (_, r): (_, QuizResult) = h.post(&format!("/sessions/{id}/quiz"), &correct_answers()).await;
    assert!(r.passed);
}

fn pick_action(view: &TrialView) -> SpeakerAction {
    view.allowed_actions[view.index as usize % view.allowed_actions.len()]
}

/// Plays every remaining trial of the current phase; returns the outcomes.
async fn play_phase(h: &Harness, id: &str, phase: Phase) -> Vec<(TrialView, ActionSubmission, OutcomeView)> {
    let mut out = Vec::new();
    loop {
        let (_, sv): (_, SessionView) = h.get(&format!("/sessions/{id}")).await;
        if sv.phase != phase {
            return out;
        }
        let (status, view): (_, TrialView) = h.get(&format!("/sessions/{id}/trials/{}", sv.index)).await;
        assert_eq!(status, StatusCode::OK);
        let submission =
            ActionSubmission { index: view.index, action: pick_action(&view), reaction_time: 1.0 + 0.125 * view.index as f64 };
        let (status, outcome): (_, OutcomeView) = h.post(&format!("/sessions/{id}/actions"), &submission).await;
        assert_eq!(status, StatusCode::OK);
        out.push((view, submission, outcome));
    }
}

#[tokio::test]
async fn scripted_session_end_to_end() {
    let h = start(ServiceConfig::default()).await;
    let (_, instructions): (_, InstructionsView) = h.get("/instructions").await;
    assert_eq!((instructions.practice_trials, instructions.experiment_trials), (10, 36));
    assert_eq!(instructions.bonus_cap, Cents(525));
    let (_, quiz): (_, QuizView) = h.get("/quiz").await;
    assert!(!quiz.questions.is_empty());

    let sv = create(&h, "P-001", 42).await;
    assert_eq!(sv.phase, Phase::Instructions);
    let id = sv.session_id.clone();
    h.post::<_, SessionView>(&format!("/sessions/{id}/instructions/done"), &json!({})).await;

    for expected in 1..=2 {
        let (_, r): (_, QuizResult) = h.post(&format!("/sessions/{id}/quiz"), &wrong_answers()).await;
        assert!(!r.passed);
        assert_eq!((r.failures, r.flagged, r.phase), (expected, false, Phase::Quiz));
    }
    let (_, r): (_, QuizResult) = h.post(&format!("/sessions/{id}/quiz"), &correct_answers()).await;
    assert_eq!((r.passed, r.failures, r.phase), (true, 2, Phase::Practice));

    // practice: feedback appears exactly when a strictly better action existed
    let practice = play_phase(&h, &id, Phase::Practice).await;
    assert_eq!(practice.len(), 10);
    let mut saw_feedback = false;
    for (view, sub, outcome) in &practice {
        let utilities = action_utilities(&view.scene, &SpeakerConfig::default(), &Default::default()).unwrap();
        let chosen = utilities.iter().find(|(a, _)| *a == sub.action).unwrap().1;
        let best = utilities.iter().map(|(_, u)| *u).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.feedback.is_some(), best > chosen + 1e-9, "{:?}", outcome.feedback);
        saw_feedback |= outcome.feedback.is_some();
        assert_eq!(outcome.bonus, Cents::ZERO, "practice does not pay");
    }
    assert!(saw_feedback);

    // experiment: each suite scene once, ledger is the clamped running sum
    let experiment = play_phase(&h, &id, Phase::Experiment).await;
    assert_eq!(experiment.len(), 36);
    let shown: BTreeSet<(String, String)> =
        experiment.iter().map(|(v, _, _)| (v.scene.pair_id.clone(), v.scene.barrier_side.short().to_string())).collect();
    assert_eq!(shown.len(), 36);
    let mut sum = Cents::ZERO;
    for (view, sub, outcome) in &experiment {
        sum += outcome.utility;
        assert_eq!(outcome.bonus, sum.clamp(Cents::ZERO, Cents(525)));
        assert_eq!(outcome.reward - outcome.cost, outcome.utility);
        assert_eq!(outcome.path.len() as u32, outcome.steps);
        let item = view.scene.items.iter().find(|i| i.id == outcome.reached_item).unwrap();
        assert_eq!(outcome.path.last().copied().unwrap_or(view.scene.agent_pos(outcome.mover)), item.pos);
        match sub.action {
            SpeakerAction::Do => {
                assert_eq!(outcome.mover, Agent::Signaler);
                assert!(outcome.receiver_delay.is_none());
            }
            SpeakerAction::Send(f) => {
                assert_eq!(outcome.mover, Agent::Receiver);
                assert!(item.has_feature(f));
                assert!(outcome.receiver_delay.unwrap() >= 0.0);
            }
        }
        assert!(outcome.feedback.is_none());
    }
    let (_, sv): (_, SessionView) = h.get(&format!("/sessions/{id}")).await;
    assert_eq!(sv.phase, Phase::Survey);
    assert!(sv.bonus <= Cents(525));

    // survey: missing field leaves the phase alone; second submission is refused
    let incomplete = SurveySubmission { serious: None, ..survey() };
    let (status, err) = h.post_err(&format!("/sessions/{id}/survey"), &incomplete).await;
    assert_eq!((status, err.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey"));
    let (_, sv): (_, SessionView) = h.get(&format!("/sessions/{id}")).await;
    assert_eq!(sv.phase, Phase::Survey);
    let (status, sv): (_, SessionView) = h.post(&format!("/sessions/{id}/survey"), &survey()).await;
    assert_eq!((status, sv.phase), (StatusCode::OK, Phase::Done));
    let (status, err) = h.post_err(&format!("/sessions/{id}/survey"), &survey()).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "wrong_phase"));

    // replaying the log rebuilds the live state exactly
    let (_, records): (_, Vec<EventRecord>) = h.get(&format!("/admin/sessions/{id}/events")).await;
    let (_, live): (_, SessionState) = h.get(&format!("/admin/sessions/{id}/state")).await;
    let rebuilt = replay(&records, Cents(525)).unwrap();
    assert_eq!(rebuilt[&id], live);
    assert_eq!(live.survey.as_ref().unwrap().receiver_rating.as_deref(), Some("Good"));
    assert!(records.windows(2).all(|w| w[0].timestamp < w[1].timestamp));

    // export carries client reaction times and feeds the cleaning pipeline
    let (_, exported): (_, Vec<ParticipantRecord>) = h.get("/admin/export").await;
    let p = exported.iter().find(|p| p.participant == "P-001").unwrap();
    assert!(p.finished);
    assert_eq!((p.quiz_failures, p.serious), (2, Some(true)));
    assert_eq!(p.trials.len(), 36);
    for (t, (_, sub, outcome)) in p.trials.iter().zip(&experiment) {
        assert_eq!(t.reaction_time, Some(sub.reaction_time));
        assert_eq!((t.action, t.utility, t.trial_index), (sub.action, outcome.utility, sub.index));
    }
    let (kept, log) = clean_human_data(&exported, &catalog().suite, &CleaningConfig::default()).unwrap();
    assert_eq!(kept.len() + log.participants.len(), exported.len());
}

#[tokio::test]
async fn order_is_seeded_and_covers_the_suite() {
    let h = start(ServiceConfig::default()).await;
    let a = create(&h, "a", 7).await;
    let b = create(&h, "b", 7).await;
    let state = |id: String| {
        let h = &h;
        async move { h.get::<SessionState>(&format!("/admin/sessions/{id}/state")).await.1 }
    };
    let (sa, sb) = (state(a.session_id).await, state(b.session_id).await);
    assert_eq!(sa.experiment.len(), 36);
    assert_eq!(sa.practice.len(), 10);
    assert!(sa.practice.iter().all(|r| r.pair_id.starts_with("practice-")));
    let unique: BTreeSet<&SceneRef> = sa.experiment.iter().collect();
    assert_eq!(unique.len(), 36);
    assert_ne!(sa.experiment, sb.experiment, "different codes shuffle differently");

    // the same code and seed reproduce the order on a fresh service
    let h2 = start(ServiceConfig::default()).await;
    let a2 = create(&h2, "a", 7).await;
    let sa2 = h2.get::<SessionState>(&format!("/admin/sessions/{}/state", a2.session_id)).await.1;
    assert_eq!(sa.experiment, sa2.experiment);
    assert_eq!(sa.practice, sa2.practice);
}

#[tokio::test]
async fn rejected_requests() {
    let h = start(ServiceConfig::default()).await;
    let (status, err) = h.post_err("/sessions", &CreateSession { participant_code: "  ".into(), seed: None }).await;
    assert_eq!((status, err.as_str()), (StatusCode::BAD_REQUEST, "empty_code"));
    let sv = create(&h, "dup", 1).await;
    let (status, err) = h.post_err("/sessions", &CreateSession { participant_code: "dup".into(), seed: Some(2) }).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "duplicate_code"));
    let (status, err) = h.post_err("/sessions/nope/quiz", &correct_answers()).await;
    assert_eq!((status, err.as_str()), (StatusCode::NOT_FOUND, "unknown_session"));

    let id = sv.session_id;
    // quiz before instructions are done
    let (status, err) = h.post_err(&format!("/sessions/{id}/quiz"), &correct_answers()).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "wrong_phase"));
    let act = ActionSubmission { index: 0, action: SpeakerAction::Do, reaction_time: 1.0 };
    let (status, _) = h.post_err(&format!("/sessions/{id}/actions"), &act).await;
    assert_eq!(status, StatusCode::CONFLICT);
    through_quiz(&h, &id).await;

    h.get::<TrialView>(&format!("/sessions/{id}/trials/0")).await;
    let (status, err) = h.post_err(&format!("/sessions/{id}/actions"), &ActionSubmission { index: 3, ..act.clone() }).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "stale_index"));
    let negative = ActionSubmission { reaction_time: -1.0, ..act.clone() };
    let (status, _) = h.post_err(&format!("/sessions/{id}/actions"), &negative).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _): (_, OutcomeView) = h.post(&format!("/sessions/{id}/actions"), &act).await;
    assert_eq!(status, StatusCode::OK);
    // a second submission for the same trial is stale
    let (status, err) = h.post_err(&format!("/sessions/{id}/actions"), &act).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "stale_index"));
    let (status, err) = h.post_err(&format!("/sessions/{id}/quiz"), &correct_answers()).await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "wrong_phase"));

    // signaling a feature no item has is refused; walk forward to a scene with one missing
    let mut tried = false;
    for index in 1..10 {
        let (_, view): (_, TrialView) = h.get(&format!("/sessions/{id}/trials/{index}")).await;
        let step = ActionSubmission { index, ..act.clone() };
        if let Some(absent) = Feature::ALL.into_iter().find(|f| !view.scene.items.iter().any(|i| i.has_feature(*f))) {
            let send_absent = ActionSubmission { action: SpeakerAction::Send(absent), ..step.clone() };
            let (status, err) = h.post_err(&format!("/sessions/{id}/actions"), &send_absent).await;
            assert_eq!((status, err.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "invalid_action"));
            tried = true;
        }
        let (status, _): (_, OutcomeView) = h.post(&format!("/sessions/{id}/actions"), &step).await;
        assert_eq!(status, StatusCode::OK);
    }
    assert!(tried, "no practice scene lacked a feature");

    // malformed action tokens never reach the session
    let r = h
        .http
        .post(format!("{}/sessions/{id}/actions", h.base))
        .json(&json!({"index": 0, "action": "wave", "reaction_time": 1.0}))
        .send()
        .await
        .unwrap();
    assert!(r.status().is_client_error());
    let (_, live): (_, Value) = h.get(&format!("/sessions/{id}")).await;
    assert_eq!((live["phase"].as_str(), live["index"].as_u64()), (Some("experiment"), Some(0)));
}

#[tokio::test]
async fn quiz_failures_flag_but_do_not_eject() {
    let h = start(ServiceConfig::default()).await;
    let id = create(&h, "q", 3).await.session_id;
    h.post::<_, SessionView>(&format!("/sessions/{id}/instructions/done"), &json!({})).await;
    for _ in 0..3 {
        h.post::<_, QuizResult>(&format!("/sessions/{id}/quiz"), &wrong_answers()).await;
    }
    let (_, r): (_, QuizResult) = h.post(&format!("/sessions/{id}/quiz"), &wrong_answers()).await;
    assert_eq!((r.failures, r.flagged, r.phase), (4, true, Phase::Quiz));
    let (_, r): (_, QuizResult) = h.post(&format!("/sessions/{id}/quiz"), &correct_answers()).await;
    assert_eq!((r.passed, r.flagged, r.phase), (true, true, Phase::Practice));
}

#[tokio::test]
async fn abandoned_session_exports_unfinished() {
    let h = start(ServiceConfig::default()).await;
    let id = create(&h, "quitter", 5).await.session_id;
    through_quiz(&h, &id).await;
    play_phase(&h, &id, Phase::Practice).await;
    for i in 0..4 {
        h.get::<TrialView>(&format!("/sessions/{id}/trials/{i}")).await;
        let a = ActionSubmission { index: i, action: SpeakerAction::Do, reaction_time: 2.5 };
        h.post::<_, OutcomeView>(&format!("/sessions/{id}/actions"), &a).await;
    }
    let (_, exported): (_, Vec<ParticipantRecord>) = h.get("/admin/export").await;
    let p = &exported[0];
    assert!(!p.finished);
    assert_eq!(p.trials.len(), 4);
    assert!(p.trials.iter().all(|t| t.reaction_time == Some(2.5)));
    let (kept, log) = clean_human_data(&exported, &catalog().suite, &CleaningConfig::default()).unwrap();
    assert!(kept.is_empty());
    assert_eq!(log.participants[0].reason.to_string(), "unfinished");
}

#[tokio::test]
async fn event_log_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let config = ServiceConfig { event_log: Some(log.clone()), ..ServiceConfig::default() };
    let h = start(config.clone()).await;
    let id = create(&h, "persist", 9).await.session_id;
    through_quiz(&h, &id).await;
    play_phase(&h, &id, Phase::Practice).await;
    let (_, before): (_, SessionState) = h.get(&format!("/admin/sessions/{id}/state")).await;

    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count() as u64, before.events);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "session_created");

    let restarted = start(config).await;
    let (_, after): (_, SessionState) = restarted.get(&format!("/admin/sessions/{id}/state")).await;
    assert_eq!(before, after);
    let (status, err) = restarted
        .post_err("/sessions", &CreateSession { participant_code: "persist".into(), seed: None })
        .await;
    assert_eq!((status, err.as_str()), (StatusCode::CONFLICT, "duplicate_code"));
    // the restarted service keeps appending to the same session
    let (status, _): (_, TrialView) = restarted.get(&format!("/sessions/{id}/trials/0")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn corrupt_log_is_rejected_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    std::fs::write(&log, "{\"session_id\":\"x\",\"seq\":0,\"timestamp\":\"2026-01-01T00:00:00Z\",\"kind\":\"instructions_done\"}\n")
        .unwrap();
    let config = ServiceConfig { event_log: Some(log), ..ServiceConfig::default() };
    let err = signalgame_service::AppState::with_catalog(config, catalog()).await.unwrap_err();
    assert!(err.to_string().contains("corrupt"), "{err}");
}
