//! Session state machine. Commands validate against the current state and
//! emit events; [`SessionState::apply`] is the only way state changes, so
//! replaying a session's events rebuilds it exactly.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use signalgame_core::gridworld::{Agent, BarrierSide, Cents, ItemId, Scene, SceneCosts, UtilityParams};
use signalgame_core::pragmatics::{
    action_utilities_with, check_action, literal_listener, SpeakerAction, SpeakerConfig,
};
use signalgame_core::sim_lab::cleaning::ParticipantRecord;
use signalgame_core::sim_lab::{classify, Actor, TrialRecord};
use signalgame_core::trial_factory::{ScenePair, TrialSuite};
use signalgame_protocol::{Phase, QuizSubmission, SceneRef, SurveySubmission};

use crate::receiver::ReceiverBehavior;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("participant code {0:?} already has a session")]
    DuplicateCode(String),
    #[error("participant code must not be empty")]
    EmptyCode,
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("expected phase {expected}, session is in {actual}")]
    WrongPhase { expected: String, actual: Phase },
    #[error("trial {got} is not the current trial ({expected})")]
    StaleIndex { expected: u32, got: u32 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid survey: {0}")]
    InvalidSurvey(String),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

// ---------------------------------------------------------------------------
// Scene catalog
// ---------------------------------------------------------------------------

/// Experimental suite plus the practice pairs, looked up by phase.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub suite: TrialSuite,
    pub practice: TrialSuite,
}

impl Catalog {
    fn pairs(&self, phase: Phase) -> &TrialSuite {
        if phase == Phase::Practice {
            &self.practice
        } else {
            &self.suite
        }
    }

    pub fn pair(&self, phase: Phase, r: &SceneRef) -> Option<&ScenePair> {
        self.pairs(phase).pair(&r.pair_id)
    }

    pub fn scene(&self, phase: Phase, r: &SceneRef) -> Option<&Scene> {
        self.pair(phase, r).map(|p| p.scene(r.barrier_side))
    }

    fn refs(suite: &TrialSuite) -> Vec<SceneRef> {
        suite
            .pairs
            .iter()
            .flat_map(|p| BarrierSide::BOTH.map(|s| SceneRef { pair_id: p.pair_id.clone(), barrier_side: s }))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub mover: Agent,
    pub reached_item: ItemId,
    pub steps: u32,
    pub utility: Cents,
    pub receiver_delay: Option<f64>,
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        participant_code: String,
        seed: u64,
        practice: Vec<SceneRef>,
        experiment: Vec<SceneRef>,
    },
    InstructionsDone,
    QuizAnswer {
        answers: BTreeMap<String, String>,
        correct: bool,
    },
    TrialShown {
        phase: Phase,
        index: u32,
    },
    ActionSubmitted {
        phase: Phase,
        index: u32,
        action: SpeakerAction,
        reaction_time: f64,
    },
    PracticeResult {
        index: u32,
        outcome: TrialOutcome,
    },
    OutcomeShown {
        index: u32,
        outcome: TrialOutcome,
    },
    SurveyAnswer {
        answers: SurveySubmission,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    /// Position in the session's own log, from 0.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingAction {
    pub phase: Phase,
    pub index: u32,
    pub action: SpeakerAction,
    pub reaction_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedTrial {
    pub index: u32,
    pub scene: SceneRef,
    pub action: SpeakerAction,
    pub reaction_time: f64,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub participant_code: String,
    pub seed: u64,
    pub phase: Phase,
    pub practice: Vec<SceneRef>,
    pub experiment: Vec<SceneRef>,
    pub index: u32,
    pub quiz_failures: u32,
    /// Sum of experiment outcome utilities, unclamped.
    pub earned: Cents,
    /// `earned` clamped to [0, cap].
    pub bonus: Cents,
    pub pending: Option<PendingAction>,
    pub practice_results: Vec<CompletedTrial>,
    pub results: Vec<CompletedTrial>,
    pub survey: Option<SurveySubmission>,
    /// Events applied so far (the session's log offset).
    pub events: u64,
    pub last_timestamp: Option<DateTime<Utc>>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn corrupt(msg: impl Into<String>) -> SessionError {
    SessionError::CorruptLog(msg.into())
}

impl SessionState {
    /// The creation event for a new session: a seeded shuffle of the suite
    /// and of the first `practice_trials` practice scenes.
    pub fn create(code: &str, seed: u64, catalog: &Catalog, practice_trials: u32) -> Result<Event, SessionError> {
        if code.trim().is_empty() {
            return Err(SessionError::EmptyCode);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(code));
        let mut experiment = Catalog::refs(&catalog.suite);
        experiment.shuffle(&mut rng);
        let mut practice = Catalog::refs(&catalog.practice);
        practice.shuffle(&mut rng);
        practice.truncate(practice_trials as usize);
        Ok(Event::SessionCreated { participant_code: code.to_string(), seed, practice, experiment })
    }

    pub fn trials_in(&self, phase: Phase) -> u32 {
        match phase {
            Phase::Practice => self.practice.len() as u32,
            Phase::Experiment => self.experiment.len() as u32,
            _ => 0,
        }
    }

    pub fn current_ref(&self) -> Option<&SceneRef> {
        match self.phase {
            Phase::Practice => self.practice.get(self.index as usize),
            Phase::Experiment => self.experiment.get(self.index as usize),
            _ => None,
        }
    }

    fn expect_phase(&self, expected: &[Phase]) -> Result<(), SessionError> {
        if expected.contains(&self.phase) {
            Ok(())
        } else {
            let names: Vec<String> = expected.iter().map(|p| p.to_string()).collect();
            Err(SessionError::WrongPhase { expected: names.join(" or "), actual: self.phase })
        }
    }

    fn after_trials(&self, phase: Phase) -> Phase {
        match phase {
            Phase::Practice if !self.experiment.is_empty() => Phase::Experiment,
            Phase::Practice | Phase::Experiment => Phase::Survey,
            other => other,
        }
    }

    /// Folds one event into the state. `state` is `None` before creation.
    pub fn apply(state: Option<SessionState>, record: &EventRecord, cap: Cents) -> Result<SessionState, SessionError> {
        let mut s = match (state, &record.event) {
            (None, Event::SessionCreated { participant_code, seed, practice, experiment }) => {
                let mut s = SessionState {
                    session_id: record.session_id.clone(),
                    participant_code: participant_code.clone(),
                    seed: *seed,
                    phase: Phase::Instructions,
                    practice: practice.clone(),
                    experiment: experiment.clone(),
                    index: 0,
                    quiz_failures: 0,
                    earned: Cents::ZERO,
                    bonus: Cents::ZERO,
                    pending: None,
                    practice_results: Vec::new(),
                    results: Vec::new(),
                    survey: None,
                    events: 0,
                    last_timestamp: None,
                };
                s.stamp(record)?;
                return Ok(s);
            }
            (None, _) => return Err(corrupt(format!("session {} does not start with its creation", record.session_id))),
            (Some(_), Event::SessionCreated { .. }) => {
                return Err(corrupt(format!("session {} created twice", record.session_id)))
            }
            (Some(s), _) => s,
        };
        s.stamp(record)?;
        let phase_is = |s: &SessionState, p: Phase| {
            if s.phase == p {
                Ok(())
            } else {
                Err(corrupt(format!("{:?} in phase {}", record.event, s.phase)))
            }
        };
        match &record.event {
            Event::SessionCreated { .. } => unreachable!(),
            Event::InstructionsDone => {
                phase_is(&s, Phase::Instructions)?;
                s.phase = Phase::Quiz;
            }
            Event::QuizAnswer { correct, .. } => {
                phase_is(&s, Phase::Quiz)?;
                if *correct {
                    s.phase = if s.practice.is_empty() { s.after_trials(Phase::Practice) } else { Phase::Practice };
                    s.index = 0;
                } else {
                    s.quiz_failures += 1;
                }
            }
            Event::TrialShown { phase, index } => {
                phase_is(&s, *phase)?;
                if *index != s.index {
                    return Err(corrupt("trial shown out of order"));
                }
            }
            Event::ActionSubmitted { phase, index, action, reaction_time } => {
                phase_is(&s, *phase)?;
                if *index != s.index || s.pending.is_some() {
                    return Err(corrupt("action for a trial that is not open"));
                }
                s.pending =
                    Some(PendingAction { phase: *phase, index: *index, action: *action, reaction_time: *reaction_time });
            }
            Event::PracticeResult { index, outcome } | Event::OutcomeShown { index, outcome } => {
                let phase = if matches!(record.event, Event::PracticeResult { .. }) {
                    Phase::Practice
                } else {
                    Phase::Experiment
                };
                phase_is(&s, phase)?;
                let pending = s.pending.take().ok_or_else(|| corrupt("outcome without an action"))?;
                if pending.index != *index || *index != s.index {
                    return Err(corrupt("outcome for the wrong trial"));
                }
                let scene = s.current_ref().cloned().ok_or_else(|| corrupt("trial index past the end"))?;
                let done = CompletedTrial {
                    index: *index,
                    scene,
                    action: pending.action,
                    reaction_time: pending.reaction_time,
                    outcome: outcome.clone(),
                };
                if phase == Phase::Experiment {
                    s.earned += outcome.utility;
                    s.bonus = s.earned.clamp(Cents::ZERO, cap);
                    s.results.push(done);
                } else {
                    s.practice_results.push(done);
                }
                s.index += 1;
                if s.index >= s.trials_in(phase) {
                    s.phase = s.after_trials(phase);
                    s.index = 0;
                }
            }
            Event::SurveyAnswer { answers } => {
                phase_is(&s, Phase::Survey)?;
                s.survey = Some(answers.clone());
                s.phase = Phase::Done;
            }
        }
        Ok(s)
    }

    fn stamp(&mut self, record: &EventRecord) -> Result<(), SessionError> {
        if record.session_id != self.session_id {
            return Err(corrupt("event filed under another session"));
        }
        if record.seq != self.events {
            return Err(corrupt(format!("session {} expected event {}, found {}", self.session_id, self.events, record.seq)));
        }
        if self.last_timestamp.is_some_and(|t| record.timestamp <= t) {
            return Err(corrupt(format!("session {} timestamps not increasing at event {}", self.session_id, record.seq)));
        }
        self.events += 1;
        self.last_timestamp = Some(record.timestamp);
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Commands
    // -----------------------------------------------------------------------

    pub fn finish_instructions(&self) -> Result<Vec<Event>, SessionError> {
        self.expect_phase(&[Phase::Instructions])?;
        Ok(vec![Event::InstructionsDone])
    }

    pub fn answer_quiz(&self, submission: &QuizSubmission) -> Result<Vec<Event>, SessionError> {
        self.expect_phase(&[Phase::Quiz])?;
        let correct = crate::content::quiz_correct(submission);
        Ok(vec![Event::QuizAnswer { answers: submission.answers.clone(), correct }])
    }

    pub fn show_trial(&self, index: u32) -> Result<Vec<Event>, SessionError> {
        self.expect_phase(&[Phase::Practice, Phase::Experiment])?;
        if index != self.index {
            return Err(SessionError::StaleIndex { expected: self.index, got: index });
        }
        Ok(vec![Event::TrialShown { phase: self.phase, index }])
    }

    /// Resolves the action: the signaler walks on `Do`; otherwise the
    /// receiver draws an item from the literal listener after an
    /// exponential think time. Randomness is keyed to the session seed and
    /// trial position.
    pub fn submit_action(
        &self,
        index: u32,
        action: SpeakerAction,
        reaction_time: f64,
        catalog: &Catalog,
        receiver: &ReceiverBehavior,
        params: &UtilityParams,
    ) -> Result<Vec<Event>, SessionError> {
        self.expect_phase(&[Phase::Practice, Phase::Experiment])?;
        if index != self.index {
            return Err(SessionError::StaleIndex { expected: self.index, got: index });
        }
        if !(reaction_time.is_finite() && reaction_time >= 0.0) {
            return Err(SessionError::InvalidAction("reaction time must be a non-negative number of seconds".into()));
        }
        let r = self.current_ref().ok_or_else(|| corrupt("no current trial"))?;
        let scene = catalog.scene(self.phase, r).ok_or_else(|| corrupt(format!("unknown scene {}", r.pair_id)))?;
        check_action(scene, action).map_err(|e| SessionError::InvalidAction(e.to_string()))?;

        let costs = SceneCosts::new(scene).map_err(|e| corrupt(e.to_string()))?;
        let phase_key = if self.phase == Phase::Practice { 1u64 } else { 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&self.participant_code) ^ (phase_key << 40 | index as u64));
        let (mover, item, delay) = match action {
            SpeakerAction::Do => (Agent::Signaler, scene.target_id, None),
            SpeakerAction::Send(f) => {
                let prior = SpeakerConfig::default().prior_for(&scene.items).map_err(|e| corrupt(e.to_string()))?;
                let listener = literal_listener(&scene.items, f, &prior).map_err(|e| SessionError::InvalidAction(e.to_string()))?;
                let item = *listener.sample(&mut rng);
                (Agent::Receiver, item, Some(receiver.sample_delay(&mut rng)))
            }
        };
        let steps = costs.steps(mover, item).map_err(|e| corrupt(e.to_string()))?;
        let utility = params.utility(item == scene.target_id, steps);
        let feedback = if self.phase == Phase::Practice {
            practice_feedback(scene, &costs, action, params)?
        } else {
            None
        };
        let outcome = TrialOutcome { mover, reached_item: item, steps, utility, receiver_delay: delay, feedback };
        let result = if self.phase == Phase::Practice {
            Event::PracticeResult { index, outcome }
        } else {
            Event::OutcomeShown { index, outcome }
        };
        Ok(vec![Event::ActionSubmitted { phase: self.phase, index, action, reaction_time }, result])
    }

    pub fn submit_survey(&self, answers: &SurveySubmission) -> Result<Vec<Event>, SessionError> {
        self.expect_phase(&[Phase::Survey])?;
        match &answers.receiver_rating {
            Some(r) if !r.trim().is_empty() => {}
            _ => return Err(SessionError::InvalidSurvey("receiver_rating is required".into())),
        }
        if answers.serious.is_none() {
            return Err(SessionError::InvalidSurvey("serious is required".into()));
        }
        Ok(vec![Event::SurveyAnswer { answers: answers.clone() }])
    }

    // -----------------------------------------------------------------------
    // Export
    // -----------------------------------------------------------------------

    /// The participant in the analysis input shape. Sessions that never
    /// reached `done` are exported with `finished = false`.
    pub fn export(&self, catalog: &Catalog) -> Result<ParticipantRecord, SessionError> {
        let mut trials = Vec::with_capacity(self.results.len());
        for t in &self.results {
            let pair = catalog
                .pair(Phase::Experiment, &t.scene)
                .ok_or_else(|| corrupt(format!("unknown scene {}", t.scene.pair_id)))?;
            let scene = pair.scene(t.scene.barrier_side);
            trials.push(TrialRecord {
                pair_id: pair.pair_id.clone(),
                barrier_side: scene.barrier_side,
                condition: scene.condition,
                actor: Actor::Human,
                participant: Some(self.participant_code.clone()),
                trial_index: t.index,
                action: t.action,
                receiver_item: (t.outcome.mover == Agent::Receiver).then_some(t.outcome.reached_item),
                mover: t.outcome.mover,
                reached_item: t.outcome.reached_item,
                steps: t.outcome.steps,
                utility: t.outcome.utility,
                reaction_time: Some(t.reaction_time),
                classification: classify(t.action, scene, pair.optimal_feature),
            });
        }
        Ok(ParticipantRecord {
            participant: self.participant_code.clone(),
            finished: self.phase == Phase::Done,
            quiz_failures: self.quiz_failures,
            serious: self.survey.as_ref().and_then(|s| s.serious),
            trials,
        })
    }
}

fn practice_feedback(
    scene: &Scene,
    costs: &SceneCosts,
    action: SpeakerAction,
    params: &UtilityParams,
) -> Result<Option<String>, SessionError> {
    let utilities =
        action_utilities_with(scene, costs, &SpeakerConfig::default(), params).map_err(|e| corrupt(e.to_string()))?;
    let chosen = utilities.iter().find(|(a, _)| *a == action).map(|(_, u)| *u).unwrap_or(f64::NEG_INFINITY);
    let (best, best_u) = utilities
        .iter()
        .fold((SpeakerAction::Do, f64::NEG_INFINITY), |acc, (a, u)| if *u > acc.1 { (*a, *u) } else { acc });
    if best_u > chosen + 1e-9 {
        let label = |a: SpeakerAction| match a {
            SpeakerAction::Do => "going yourself".to_string(),
            SpeakerAction::Send(f) => format!("signaling \"{f}\""),
        };
        Ok(Some(format!(
            "A better choice was available: {} earns ${:.2} on average, {} earns ${:.2}.",
            label(best),
            best_u / 100.0,
            label(action),
            chosen / 100.0
        )))
    } else {
        Ok(None)
    }
}

/// Rebuilds every session from a log. Records from different sessions may
/// interleave; each session's records must be in order.
pub fn replay(records: &[EventRecord], cap: Cents) -> Result<BTreeMap<String, SessionState>, SessionError> {
    let mut sessions: BTreeMap<String, SessionState> = BTreeMap::new();
    for r in records {
        let prev = sessions.remove(&r.session_id);
        let next = SessionState::apply(prev, r, cap)?;
        sessions.insert(r.session_id.clone(), next);
    }
    Ok(sessions)
}

/// Parses a log written one JSON record per line.
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, SessionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| corrupt(format!("line {}: {e}", n + 1))))
        .collect()
}
