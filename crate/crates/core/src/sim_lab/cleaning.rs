//! Participant exclusion rules and the paired-trial reaction-time rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Actor, SimError, TrialRecord};
use crate::gridworld::{BarrierSide, Condition, SceneCosts, UtilityParams};
use crate::pragmatics::{action_utilities_with, literal_listener, Distribution, SpeakerAction, SpeakerConfig};
use crate::trial_factory::TrialSuite;

/// Everything the analysis needs about one participant, in the shape the
/// experiment service exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant: String,
    /// False when the session stopped before the survey was submitted.
    pub finished: bool,
    pub quiz_failures: u32,
    /// Self-reported seriousness from the survey; absent if never answered.
    #[serde(default)]
    pub serious: Option<bool>,
    /// Experimental trials in presentation order.
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unfinished,
    QuizFailed,
    SelfReportNotSerious,
    ControlFailure,
    RepetitiveResponses,
    WorseThanRandom,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Unfinished => "unfinished",
            DropReason::QuizFailed => "quiz_failed",
            DropReason::SelfReportNotSerious => "self_report_not_serious",
            DropReason::ControlFailure => "control_failure",
            DropReason::RepetitiveResponses => "repetitive_responses",
            DropReason::WorseThanRandom => "worse_than_random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantDrop {
    pub participant: String,
    pub reason: DropReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedTrial {
    pub barrier_side: BarrierSide,
    pub trial_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDrop {
    pub participant: String,
    pub pair_id: String,
    pub condition: Condition,
    /// The trial whose reaction time was out of range.
    pub outlier_side: BarrierSide,
    pub reaction_time: f64,
    pub cell_mean: f64,
    pub cell_sd: f64,
    /// Both trials of the pair that were removed.
    pub trials: Vec<DroppedTrial>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropLog {
    pub participants: Vec<ParticipantDrop>,
    pub pairs: Vec<PairDrop>,
}

impl DropLog {
    pub fn reason_for(&self, participant: &str) -> Option<DropReason> {
        self.participants.iter().find(|d| d.participant == participant).map(|d| d.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    /// More quiz failures than this drops the participant.
    pub max_quiz_failures: u32,
    /// Share of control trials without a utility-maximizing action.
    pub max_control_failure_rate: f64,
    /// Longest run of identical actions, as a share of all trials.
    pub max_run_share: f64,
    pub random_simulations: u32,
    pub seed: u64,
    /// Distance from the cell mean, in sample standard deviations.
    pub rt_sd_limit: f64,
    pub params: UtilityParams,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_quiz_failures: 2,
            max_control_failure_rate: 0.25,
            max_run_share: 0.25,
            random_simulations: 10_000,
            seed: 0,
            rt_sd_limit: 3.0,
            params: UtilityParams::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Per-scene tables
// ---------------------------------------------------------------------------

/// Expected utilities and outcome distributions for every action of a scene.
struct SceneTable {
    utilities: Vec<(SpeakerAction, f64)>,
    outcomes: Vec<Distribution<i64>>,
}

fn scene_tables(suite: &TrialSuite, params: &UtilityParams) -> Result<BTreeMap<(String, BarrierSide), SceneTable>, SimError> {
    let speaker = SpeakerConfig::default();
    let mut out = BTreeMap::new();
    for (pair, scene) in suite.scenes() {
        let costs = SceneCosts::new(scene)?;
        let utilities = action_utilities_with(scene, &costs, &speaker, params)?;
        let prior = speaker.prior_for(&scene.items)?;
        let mut outcomes = Vec::with_capacity(utilities.len());
        for (action, _) in &utilities {
            let dist = match action {
                SpeakerAction::Do => {
                    let steps = costs.steps(crate::gridworld::Agent::Signaler, scene.target_id)?;
                    Distribution::point(params.utility(true, steps).0)
                }
                SpeakerAction::Send(f) => {
                    let listener = literal_listener(&scene.items, *f, &prior)?;
                    // items with equal payoffs share one support point
                    let mut weighted: BTreeMap<i64, f64> = BTreeMap::new();
                    for (id, p) in listener.iter() {
                        let steps = costs.steps(crate::gridworld::Agent::Receiver, *id)?;
                        *weighted.entry(params.utility(*id == scene.target_id, steps).0).or_default() += p;
                    }
                    Distribution::from_weights(weighted.into_iter().collect())?
                }
            };
            outcomes.push(dist);
        }
        out.insert((pair.pair_id.clone(), scene.barrier_side), SceneTable { utilities, outcomes });
    }
    Ok(out)
}

fn table<'a>(
    tables: &'a BTreeMap<(String, BarrierSide), SceneTable>,
    r: &TrialRecord,
) -> Result<&'a SceneTable, SimError> {
    tables
        .get(&(r.pair_id.clone(), r.barrier_side))
        .ok_or_else(|| SimError::MalformedRecord(format!("unknown scene {} {}", r.pair_id, r.barrier_side)))
}

// ---------------------------------------------------------------------------
// Participant rules
// ---------------------------------------------------------------------------

const EU_TOLERANCE: f64 = 1e-9;

fn control_failures(
    p: &ParticipantRecord,
    tables: &BTreeMap<(String, BarrierSide), SceneTable>,
) -> Result<(usize, usize), SimError> {
    let mut failed = 0;
    let mut total = 0;
    for r in p.trials.iter().filter(|r| r.condition == Condition::Control) {
        let t = table(tables, r)?;
        let best = t.utilities.iter().map(|(_, u)| *u).fold(f64::NEG_INFINITY, f64::max);
        let chosen = t
            .utilities
            .iter()
            .find(|(a, _)| *a == r.action)
            .map(|(_, u)| *u)
            .ok_or_else(|| SimError::MalformedRecord(format!("action {} not valid in {}", r.action, r.pair_id)))?;
        total += 1;
        if chosen < best - EU_TOLERANCE {
            failed += 1;
        }
    }
    Ok((failed, total))
}

fn longest_run(p: &ParticipantRecord) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev = None;
    for r in &p.trials {
        run = if prev == Some(r.action) { run + 1 } else { 1 };
        prev = Some(r.action);
        best = best.max(run);
    }
    best
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Mean total utility (cents) of a uniformly random signaler on the
/// participant's trials, over `config.random_simulations` runs.
fn random_baseline(
    p: &ParticipantRecord,
    tables: &BTreeMap<(String, BarrierSide), SceneTable>,
    config: &CleaningConfig,
) -> Result<f64, SimError> {
    let trials: Vec<&SceneTable> = p.trials.iter().map(|r| table(tables, r)).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a(&p.participant));
    let runs = config.random_simulations.max(1);
    let mut grand = 0i64;
    for _ in 0..runs {
        for t in &trials {
            let a = rng.random_range(0..t.outcomes.len());
            grand += *t.outcomes[a].sample(&mut rng);
        }
    }
    Ok(grand as f64 / runs as f64)
}

fn participant_rule(
    p: &ParticipantRecord,
    tables: &BTreeMap<(String, BarrierSide), SceneTable>,
    config: &CleaningConfig,
) -> Result<Option<(DropReason, String)>, SimError> {
    if !p.finished {
        return Ok(Some((DropReason::Unfinished, "session not completed".into())));
    }
    if p.quiz_failures > config.max_quiz_failures {
        return Ok(Some((DropReason::QuizFailed, format!("{} failed quiz attempts", p.quiz_failures))));
    }
    if p.serious == Some(false) {
        return Ok(Some((DropReason::SelfReportNotSerious, "reported not taking the task seriously".into())));
    }
    let (failed, total) = control_failures(p, tables)?;
    if total > 0 && failed as f64 > config.max_control_failure_rate * total as f64 {
        return Ok(Some((DropReason::ControlFailure, format!("{failed} of {total} control trials not utility-maximizing"))));
    }
    let run = longest_run(p);
    if !p.trials.is_empty() && run as f64 > config.max_run_share * p.trials.len() as f64 {
        return Ok(Some((DropReason::RepetitiveResponses, format!("{run} identical responses in a row of {}", p.trials.len()))));
    }
    let earned: i64 = p.trials.iter().map(|r| r.utility.0).sum();
    let baseline = random_baseline(p, tables, config)?;
    if earned as f64 <= baseline {
        return Ok(Some((
            DropReason::WorseThanRandom,
            format!("earned {earned} cents against a random mean of {baseline:.1}"),
        )));
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Reaction-time rule
// ---------------------------------------------------------------------------

fn cell_moments(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Some((mean, sd))
}

fn rt_pass(kept: &mut [ParticipantRecord], config: &CleaningConfig) -> Vec<PairDrop> {
    let mut cells: BTreeMap<(Condition, BarrierSide), Vec<f64>> = BTreeMap::new();
    for p in kept.iter() {
        for r in &p.trials {
            if let Some(rt) = r.reaction_time {
                cells.entry((r.condition, r.barrier_side)).or_default().push(rt);
            }
        }
    }
    let moments: BTreeMap<_, _> = cells.iter().filter_map(|(k, v)| Some((*k, cell_moments(v)?))).collect();
    let mut drops = Vec::new();
    for p in kept.iter_mut() {
        // first outlier per pair decides; R is checked before S
        let mut flagged: BTreeMap<String, (BarrierSide, Condition, f64, f64, f64)> = BTreeMap::new();
        let mut ordered: Vec<&TrialRecord> = p.trials.iter().collect();
        ordered.sort_by_key(|r| (r.pair_id.clone(), r.barrier_side));
        for r in ordered {
            let (Some(rt), Some((mean, sd))) = (r.reaction_time, moments.get(&(r.condition, r.barrier_side))) else {
                continue;
            };
            if *sd > 0.0 && (rt - mean).abs() > config.rt_sd_limit * sd && !flagged.contains_key(&r.pair_id) {
                flagged.insert(r.pair_id.clone(), (r.barrier_side, r.condition, rt, *mean, *sd));
            }
        }
        for (pair_id, (outlier_side, condition, reaction_time, cell_mean, cell_sd)) in flagged {
            let trials = p
                .trials
                .iter()
                .filter(|r| r.pair_id == pair_id)
                .map(|r| DroppedTrial { barrier_side: r.barrier_side, trial_index: r.trial_index })
                .collect();
            p.trials.retain(|r| r.pair_id != pair_id);
            drops.push(PairDrop {
                participant: p.participant.clone(),
                pair_id,
                condition,
                outlier_side,
                reaction_time,
                cell_mean,
                cell_sd,
                trials,
            });
        }
    }
    drops
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

fn check_input(participants: &[ParticipantRecord], suite: &TrialSuite, params: &UtilityParams) -> Result<(), SimError> {
    let mut ids = BTreeSet::new();
    for p in participants {
        if p.participant.is_empty() || !ids.insert(p.participant.as_str()) {
            return Err(SimError::MalformedRecord(format!("participant id {:?} is empty or repeated", p.participant)));
        }
        let mut seen = BTreeSet::new();
        for r in &p.trials {
            if r.actor != Actor::Human {
                return Err(SimError::MalformedRecord(format!("{}: non-human record", p.participant)));
            }
            if r.participant.as_deref().is_some_and(|id| id != p.participant) {
                return Err(SimError::MalformedRecord(format!("{}: record filed under another participant", p.participant)));
            }
            if !seen.insert((r.pair_id.as_str(), r.barrier_side)) {
                return Err(SimError::MalformedRecord(format!("{}: scene {} {} repeated", p.participant, r.pair_id, r.barrier_side)));
            }
            r.check(suite, params)?;
        }
    }
    Ok(())
}

/// Applies the participant rules (first matching rule is the reason), then
/// drops both trials of any pair with a reaction-time outlier in its
/// (condition, barrier side) cell. Both steps repeat on the remaining data
/// until nothing changes, so cleaning the output again drops nothing.
pub fn clean_human_data(
    participants: &[ParticipantRecord],
    suite: &TrialSuite,
    config: &CleaningConfig,
) -> Result<(Vec<ParticipantRecord>, DropLog), SimError> {
    check_input(participants, suite, &config.params)?;
    let tables = scene_tables(suite, &config.params)?;
    let mut kept: Vec<ParticipantRecord> = participants.to_vec();
    for p in &mut kept {
        p.trials.sort_by_key(|r| r.trial_index);
    }
    let mut log = DropLog::default();
    loop {
        let mut changed = false;
        let mut next = Vec::with_capacity(kept.len());
        for p in kept {
            match participant_rule(&p, &tables, config)? {
                Some((reason, detail)) => {
                    changed = true;
                    log.participants.push(ParticipantDrop { participant: p.participant.clone(), reason, detail });
                }
                None => next.push(p),
            }
        }
        kept = next;
        let pairs = rt_pass(&mut kept, config);
        changed |= !pairs.is_empty();
        log.pairs.extend(pairs);
        if !changed {
            break;
        }
    }
    log.participants.sort_by(|a, b| a.participant.cmp(&b.participant));
    log.pairs.sort_by(|a, b| (&a.participant, &a.pair_id).cmp(&(&b.participant, &b.pair_id)));
    Ok((kept, log))
}

/// All trial records of the kept participants, tagged with their code.
pub fn flatten(participants: &[ParticipantRecord]) -> Vec<TrialRecord> {
    participants
        .iter()
        .flat_map(|p| {
            p.trials.iter().map(move |r| TrialRecord { participant: Some(p.participant.clone()), ..r.clone() })
        })
        .collect()
}
