//! Batch simulation of model signalers over a trial suite, outcome
//! classification, λ sweeps, statistics and human-data cleaning.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    Agent, BarrierSide, Cents, Condition, Feature, GridError, ItemId, Outcome, Scene, SceneCosts, UtilityParams,
};
use crate::joint_utility::{joint_utility_action, JointUtilityConfig, JointUtilityError};
use crate::pragmatics::{
    literal_listener, speaker_policy, Distribution, PragmaticsError, SpeakerAction, SpeakerConfig,
};
use crate::trial_factory::{ScenePair, TrialSuite};

pub mod cleaning;
pub mod report;
pub mod stats;

pub use cleaning::{clean_human_data, CleaningConfig, DropLog, DropReason, ParticipantRecord};
pub use report::{summarize, sweep_lambda, trend_by_trial_index, CellSummary, Summary, SweepTable};
pub use stats::{two_proportion_test, welch_t_test, TestResult};

pub const DEFAULT_EPISODES: u32 = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] PragmaticsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    JointUtility(#[from] JointUtilityError),
    #[error("degenerate cell: {0}")]
    DegenerateCell(String),
    #[error("malformed record: {0}")]
    MalformedRecord(String),
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    OptimalFeature,
    SuboptimalFeature,
    Do,
    Irrational,
}

impl Classification {
    pub const ALL: [Classification; 4] = [
        Classification::OptimalFeature,
        Classification::SuboptimalFeature,
        Classification::Do,
        Classification::Irrational,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Classification::OptimalFeature => "optimal_feature",
            Classification::SuboptimalFeature => "suboptimal_feature",
            Classification::Do => "do",
            Classification::Irrational => "irrational",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Figure-style classification. `optimal` is the pair's annotated optimal
/// feature; any signal that is not a target feature is irrational.
pub fn classify(action: SpeakerAction, scene: &Scene, optimal: Feature) -> Classification {
    match action {
        SpeakerAction::Do => Classification::Do,
        SpeakerAction::Send(f) if f == optimal => Classification::OptimalFeature,
        SpeakerAction::Send(f) => match scene.target() {
            Ok(t) if t.has_feature(f) => Classification::SuboptimalFeature,
            _ => Classification::Irrational,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Human,
    Rsa,
    JointUtility,
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Actor::Human),
            "rsa" => Ok(Actor::Rsa),
            "joint" | "joint_utility" => Ok(Actor::JointUtility),
            other => Err(format!("unknown actor {other:?}")),
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::Human => "human",
            Actor::Rsa => "rsa",
            Actor::JointUtility => "joint_utility",
        })
    }
}

/// One signaler decision and its consequence. Serialized one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub pair_id: String,
    pub barrier_side: BarrierSide,
    pub condition: Condition,
    pub actor: Actor,
    /// Participant code for humans, `None` for models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
    /// Position in the participant's trial order, or the episode number.
    pub trial_index: u32,
    pub action: SpeakerAction,
    /// Item the receiver walked to; `None` when the signaler acted.
    pub receiver_item: Option<ItemId>,
    pub mover: Agent,
    pub reached_item: ItemId,
    pub steps: u32,
    pub utility: Cents,
    /// Seconds from trial display to decision; humans only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_time: Option<f64>,
    pub classification: Classification,
}

impl TrialRecord {
    pub fn from_outcome(
        pair: &ScenePair,
        scene: &Scene,
        actor: Actor,
        trial_index: u32,
        action: SpeakerAction,
        outcome: &Outcome,
    ) -> Self {
        TrialRecord {
            pair_id: pair.pair_id.clone(),
            barrier_side: scene.barrier_side,
            condition: scene.condition,
            actor,
            participant: None,
            trial_index,
            action,
            receiver_item: (outcome.mover == Agent::Receiver).then_some(outcome.reached_item),
            mover: outcome.mover,
            reached_item: outcome.reached_item,
            steps: outcome.steps,
            utility: outcome.utility,
            reaction_time: None,
            classification: classify(action, scene, pair.optimal_feature),
        }
    }

    /// Checks the record against its scene: the action is legal, the mover
    /// matches the action, the step count is the path cost and the utility
    /// follows from both.
    pub fn check(&self, suite: &TrialSuite, params: &UtilityParams) -> Result<(), SimError> {
        let bad = |what: &str| SimError::MalformedRecord(format!("{} {}: {what}", self.pair_id, self.barrier_side));
        let pair = suite.pair(&self.pair_id).ok_or_else(|| bad("unknown pair"))?;
        let scene = pair.scene(self.barrier_side);
        if scene.condition != self.condition {
            return Err(bad("condition disagrees with the suite"));
        }
        if (self.actor == Actor::Human) != self.reaction_time.is_some() {
            return Err(bad("reaction time must be present exactly for human records"));
        }
        if matches!(self.reaction_time, Some(rt) if !(rt.is_finite() && rt >= 0.0)) {
            return Err(bad("reaction time is not a non-negative number"));
        }
        crate::pragmatics::check_action(scene, self.action).map_err(|_| bad("action not available in scene"))?;
        let expected_mover = match self.action {
            SpeakerAction::Do => Agent::Signaler,
            SpeakerAction::Send(_) => Agent::Receiver,
        };
        if self.mover != expected_mover || self.receiver_item.is_some() != (self.mover == Agent::Receiver) {
            return Err(bad("mover does not match the action"));
        }
        if self.mover == Agent::Signaler && self.reached_item != scene.target_id {
            return Err(bad("acting signaler must walk to the target"));
        }
        if let SpeakerAction::Send(f) = self.action {
            if !scene.item(self.reached_item)?.has_feature(f) {
                return Err(bad("receiver walked to an item the signal does not describe"));
            }
        }
        let costs = SceneCosts::new(scene)?;
        if costs.steps(self.mover, self.reached_item)? != self.steps {
            return Err(bad("step count is not the path cost"));
        }
        if params.utility(self.reached_item == scene.target_id, self.steps) != self.utility {
            return Err(bad("utility does not follow from the outcome"));
        }
        if classify(self.action, scene, pair.optimal_feature) != self.classification {
            return Err(bad("classification disagrees with the suite annotation"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    #[default]
    Sample,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub actor: Actor,
    #[serde(default)]
    pub speaker: SpeakerConfig,
    #[serde(default)]
    pub joint: JointUtilityConfig,
    #[serde(default)]
    pub policy: PolicyMode,
    #[serde(default = "default_episodes")]
    pub episodes_per_scene: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: UtilityParams,
}

fn default_episodes() -> u32 {
    DEFAULT_EPISODES
}

impl BatchConfig {
    pub fn rsa(lambda: f64, seed: u64) -> Self {
        BatchConfig {
            actor: Actor::Rsa,
            speaker: SpeakerConfig::with_lambda(lambda),
            joint: JointUtilityConfig::default(),
            policy: PolicyMode::Sample,
            episodes_per_scene: DEFAULT_EPISODES,
            seed,
            params: UtilityParams::default(),
        }
    }

    pub fn joint(seed: u64) -> Self {
        BatchConfig { actor: Actor::JointUtility, ..Self::rsa(4.0, seed) }
    }
}

/// The actor's action distribution on one scene.
pub fn actor_policy(scene: &Scene, config: &BatchConfig) -> Result<Distribution<SpeakerAction>, SimError> {
    match config.actor {
        Actor::Rsa => Ok(speaker_policy(scene, &config.speaker, &config.params)?),
        Actor::JointUtility => Ok(Distribution::point(joint_utility_action(scene, &config.joint, &config.params)?)),
        Actor::Human => Err(SimError::MalformedRecord("human records cannot be simulated".into())),
    }
}

/// Plays `action` once: the signaler walks to the target on `Do`, otherwise
/// the receiver draws an item from the literal listener and walks there.
pub fn play<R: Rng + ?Sized>(
    scene: &Scene,
    costs: &SceneCosts,
    action: SpeakerAction,
    config: &SpeakerConfig,
    params: &UtilityParams,
    rng: &mut R,
) -> Result<Outcome, SimError> {
    let (mover, item) = match action {
        SpeakerAction::Do => (Agent::Signaler, scene.target_id),
        SpeakerAction::Send(f) => {
            let prior = config.prior_for(&scene.items)?;
            let listener = literal_listener(&scene.items, f, &prior)?;
            (Agent::Receiver, *listener.sample(rng))
        }
    };
    let steps = costs.steps(mover, item)?;
    Ok(Outcome::new(scene, mover, item, steps, params))
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Simulates every scene of the suite `episodes_per_scene` times. Scenes are
/// evaluated in parallel, each with its own seeded stream, so the output is
/// identical for a given seed regardless of thread count.
pub fn run_batch(suite: &TrialSuite, config: &BatchConfig) -> Result<Vec<TrialRecord>, SimError> {
    use rayon::prelude::*;
    let scenes: Vec<(&ScenePair, &Scene)> = suite.scenes().collect();
    let per_scene = scenes
        .par_iter()
        .enumerate()
        .map(|(i, (pair, scene))| {
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(config.seed, i));
            let costs = SceneCosts::new(scene)?;
            let policy = actor_policy(scene, config)?;
            let mut out = Vec::with_capacity(config.episodes_per_scene as usize);
            for episode in 0..config.episodes_per_scene {
                let action = match config.policy {
                    PolicyMode::Sample => *policy.sample(&mut rng),
                    PolicyMode::Argmax => *policy.mode(),
                };
                let outcome = play(scene, &costs, action, &config.speaker, &config.params, &mut rng)?;
                out.push(TrialRecord::from_outcome(pair, scene, config.actor, episode, action, &outcome));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// Reads records written one JSON document per line; blank lines are skipped.
pub fn read_records(text: &str) -> Result<Vec<TrialRecord>, SimError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| SimError::MalformedRecord(format!("line {}: {e}", n + 1))))
        .collect()
}

pub fn write_records(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
