//! JSON bodies exchanged with the experiment service.
//!
//! Scene payloads are the gridworld scene documents; actions are `"do"` or a
//! feature token such as `"circle"`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use signalgame_core::gridworld::{Agent, BarrierSide, Cents, Condition, ItemId, Position, Scene};
use signalgame_core::pragmatics::SpeakerAction;
use signalgame_core::sim_lab::cleaning::{CleaningConfig, DropLog, ParticipantRecord};
use signalgame_core::sim_lab::report::{SweepTable, TrendRow};
use signalgame_core::sim_lab::{BatchConfig, Summary, TrialRecord};
use signalgame_core::trial_factory::{SuiteViolation, TrialSuite};

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Instructions,
    Quiz,
    Practice,
    Experiment,
    Survey,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Instructions => "instructions",
            Phase::Quiz => "quiz",
            Phase::Practice => "practice",
            Phase::Experiment => "experiment",
            Phase::Survey => "survey",
            Phase::Done => "done",
        })
    }
}

/// A scene in a session's order: suite pairs for the experiment, practice
/// pairs for practice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneRef {
    pub pair_id: String,
    pub barrier_side: BarrierSide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    pub participant_code: String,
    /// Fixes trial order and receiver draws; random when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub participant_code: String,
    pub phase: Phase,
    /// Index of the next trial within the current phase.
    pub index: u32,
    /// Trials in the current phase (0 outside practice and experiment).
    pub trials_in_phase: u32,
    pub quiz_failures: u32,
    pub bonus: Cents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionsView {
    pub pages: Vec<String>,
    pub reward: Cents,
    pub step_cost: Cents,
    pub bonus_cap: Cents,
    pub practice_trials: u32,
    pub experiment_trials: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub id: String,
    pub prompt: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizView {
    pub questions: Vec<QuizQuestion>,
}

/// Question id → chosen option.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizSubmission {
    pub answers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizResult {
    pub passed: bool,
    pub failures: u32,
    /// More than two failures: the participant will be excluded from analysis.
    pub flagged: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub phase: Phase,
    pub index: u32,
    pub total: u32,
    pub scene: Scene,
    pub allowed_actions: Vec<SpeakerAction>,
    pub bonus: Cents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSubmission {
    pub index: u32,
    pub action: SpeakerAction,
    /// Seconds from trial display to click, measured by the client.
    pub reaction_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeView {
    pub phase: Phase,
    pub index: u32,
    pub action: SpeakerAction,
    pub mover: Agent,
    pub reached_item: ItemId,
    /// Cells walked, excluding the start cell.
    pub path: Vec<Position>,
    /// Seconds the receiver waits before moving; `None` when the signaler acted.
    pub receiver_delay: Option<f64>,
    pub steps: u32,
    pub reward: Cents,
    pub cost: Cents,
    pub utility: Cents,
    /// Running bonus after this trial.
    pub bonus: Cents,
    /// Practice only: set when a strictly better action existed.
    pub feedback: Option<String>,
    pub next_phase: Phase,
    pub next_index: u32,
}

/// Debrief answers. `receiver_rating` and `serious` are required.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySubmission {
    #[serde(default)]
    pub receiver_rating: Option<String>,
    #[serde(default)]
    pub serious: Option<bool>,
    #[serde(default)]
    pub motivation: Option<String>,
    #[serde(default)]
    pub comments: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

// ---------------------------------------------------------------------------
// Lab
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    /// One condition's pairs, or the full suite when absent.
    #[serde(default)]
    pub condition: Option<Condition>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub suite: TrialSuite,
    pub config: BatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub suite: TrialSuite,
    pub min: f64,
    pub max: f64,
    #[serde(default = "one")]
    pub step: f64,
    pub config: BatchConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub table: SweepTable,
    pub csv: String,
}

/// Either plain trial records, or participant exports plus the suite they
/// were run on (cleaned before analysis).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    #[serde(default)]
    pub records: Vec<TrialRecord>,
    #[serde(default)]
    pub participants: Option<Vec<ParticipantRecord>>,
    #[serde(default)]
    pub suite: Option<TrialSuite>,
    #[serde(default)]
    pub cleaning: Option<CleaningConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub summary: Summary,
    pub trend: Vec<TrendRow>,
    pub drop_log: Option<DropLog>,
    pub report: String,
    pub cells_csv: String,
    pub comparisons_csv: String,
    pub trend_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub violations: Vec<SuiteViolation>,
}
