//! Literal semantics, literal and recursive listeners, and the
//! utility-weighted softmax speaker.
//!
//! The speaker scores `Do` by the signaler's own walk to the target and each
//! signal by the receiver's walk averaged over the listener's interpretation,
//! then softmaxes the dollar utilities with rationality `lambda`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Agent, Feature, GridError, Item, ItemId, Scene, SceneCosts, UtilityParams};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PragmaticsError {
    #[error("no item is consistent with signal {0}")]
    EmptyMeaning(Feature),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("prior does not cover exactly the scene's items")]
    PriorMismatch,
    #[error("action {0} is not available in this scene")]
    InvalidAction(SpeakerAction),
    #[error(transparent)]
    Grid(#[from] GridError),
}

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

/// A finite probability distribution with unique support elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution<T> {
    support: Vec<(T, f64)>,
}

impl<T: PartialEq + Clone> Distribution<T> {
    /// Checks nonnegativity, uniqueness and unit mass (within 1e-9).
    pub fn new(support: Vec<(T, f64)>) -> Result<Self, PragmaticsError> {
        if support.is_empty() {
            return Err(PragmaticsError::InvalidDistribution("empty support".into()));
        }
        for (i, (e, p)) in support.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(PragmaticsError::InvalidDistribution(format!("bad probability {p}")));
            }
            if support[..i].iter().any(|(other, _)| other == e) {
                return Err(PragmaticsError::InvalidDistribution("duplicate element".into()));
            }
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PragmaticsError::InvalidDistribution(format!("mass {total}")));
        }
        Ok(Self { support })
    }

    /// Normalizes nonnegative weights. Fails if they sum to zero.
    pub fn from_weights(weighted: Vec<(T, f64)>) -> Result<Self, PragmaticsError> {
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(PragmaticsError::InvalidDistribution(format!("weight total {total}")));
        }
        Self::new(weighted.into_iter().map(|(e, w)| (e, w / total)).collect())
    }

    pub fn uniform(elements: impl IntoIterator<Item = T>) -> Result<Self, PragmaticsError> {
        Self::from_weights(elements.into_iter().map(|e| (e, 1.0)).collect())
    }

    pub fn point(element: T) -> Self {
        Self { support: vec![(element, 1.0)] }
    }

    pub fn prob(&self, element: &T) -> f64 {
        self.support
            .iter()
            .find(|(e, _)| e == element)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.support.iter().map(|(e, p)| (e, *p))
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// First element (in support order) with maximal probability.
    pub fn mode(&self) -> &T {
        let mut best = &self.support[0];
        for entry in &self.support[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        &best.0
    }

    /// The mode, if no other element ties it within `tol`.
    pub fn unique_mode(&self, tol: f64) -> Option<&T> {
        let top = self.support.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
        let mut winners = self.support.iter().filter(|(_, p)| top - p <= tol);
        let first = winners.next()?;
        winners.next().is_none().then_some(&first.0)
    }

    /// Inverse-CDF draw; the last positive-mass element absorbs rounding.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &T {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = &self.support[0].0;
        for (e, p) in &self.support {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = e;
            if u < acc {
                return e;
            }
        }
        last
    }
}

// ---------------------------------------------------------------------------
// Actions and configuration
// ---------------------------------------------------------------------------

/// The signaler's move: walk to the target, or send one feature token.
/// Serialized as `"do"` or the feature token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SpeakerAction {
    Do,
    Send(Feature),
}

impl SpeakerAction {
    pub fn signal(self) -> Option<Feature> {
        match self {
            SpeakerAction::Do => None,
            SpeakerAction::Send(f) => Some(f),
        }
    }
}

impl fmt::Display for SpeakerAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerAction::Do => f.write_str("do"),
            SpeakerAction::Send(feat) => f.write_str(feat.token()),
        }
    }
}

impl FromStr for SpeakerAction {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "do" {
            Ok(SpeakerAction::Do)
        } else {
            s.parse().map(SpeakerAction::Send)
        }
    }
}

impl TryFrom<String> for SpeakerAction {
    type Error = GridError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SpeakerAction> for String {
    fn from(a: SpeakerAction) -> Self {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerConfig {
    pub lambda: f64,
    /// 0 = literal receiver.
    #[serde(default)]
    pub recursion_depth: u32,
    /// Prior over item ids; uniform when absent.
    #[serde(default)]
    pub prior: Option<Distribution<ItemId>>,
}

impl Default for SpeakerConfig {
    fn default() -> Self {
        Self { lambda: 4.0, recursion_depth: 0, prior: None }
    }
}

impl SpeakerConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn prior_for(&self, items: &[Item]) -> Result<Distribution<ItemId>, PragmaticsError> {
        match &self.prior {
            None => Distribution::uniform(items.iter().map(|it| it.id)),
            Some(p) => {
                let covers = p.len() == items.len() && items.iter().all(|it| p.iter().any(|(id, _)| *id == it.id));
                if covers {
                    Ok(p.clone())
                } else {
                    Err(PragmaticsError::PriorMismatch)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Listeners
// ---------------------------------------------------------------------------

pub fn literal_consistent(signal: Feature, item: &Item) -> bool {
    item.has_feature(signal)
}

/// Prior restricted to the items consistent with `signal`, renormalized.
pub fn literal_listener(
    items: &[Item],
    signal: Feature,
    prior: &Distribution<ItemId>,
) -> Result<Distribution<ItemId>, PragmaticsError> {
    let weighted: Vec<_> = items
        .iter()
        .filter(|it| literal_consistent(signal, it))
        .map(|it| (it.id, prior.prob(&it.id)))
        .collect();
    if weighted.is_empty() {
        return Err(PragmaticsError::EmptyMeaning(signal));
    }
    Distribution::from_weights(weighted).map_err(|_| PragmaticsError::EmptyMeaning(signal))
}

fn present_features(items: &[Item]) -> Vec<Feature> {
    Feature::ALL
        .into_iter()
        .filter(|f| items.iter().any(|it| it.has_feature(*f)))
        .collect()
}

/// Listener after `depth` rounds of speaker/listener recursion over signals.
///
/// At depth k the speaker for item i softmaxes, with the configured lambda,
/// the log-probability that the depth k-1 listener recovers i from each true
/// signal; the depth-k listener is prior times that speaker, renormalized.
pub fn listener_at_depth(
    items: &[Item],
    signal: Feature,
    depth: u32,
    config: &SpeakerConfig,
) -> Result<Distribution<ItemId>, PragmaticsError> {
    let prior = config.prior_for(items)?;
    if depth == 0 {
        return literal_listener(items, signal, &prior);
    }
    if !items.iter().any(|it| literal_consistent(signal, it)) {
        return Err(PragmaticsError::EmptyMeaning(signal));
    }
    let signals = present_features(items);
    let mut level: Vec<Distribution<ItemId>> = signals
        .iter()
        .map(|s| literal_listener(items, *s, &prior))
        .collect::<Result<_, _>>()?;
    for _ in 0..depth {
        // speaker[i][s] for every item and signal
        let speaker: Vec<Vec<f64>> = items
            .iter()
            .map(|it| {
                let scores: Vec<f64> = level
                    .iter()
                    .map(|l| {
                        let p = l.prob(&it.id);
                        if p > 0.0 { config.lambda * p.ln() } else { f64::NEG_INFINITY }
                    })
                    .collect();
                softmax_scores(&scores)
            })
            .collect();
        level = signals
            .iter()
            .enumerate()
            .map(|(si, s)| {
                let weighted: Vec<_> = items
                    .iter()
                    .enumerate()
                    .filter(|(_, it)| literal_consistent(*s, it))
                    .map(|(ii, it)| (it.id, prior.prob(&it.id) * speaker[ii][si]))
                    .collect();
                Distribution::from_weights(weighted).map_err(|_| PragmaticsError::EmptyMeaning(*s))
            })
            .collect::<Result<_, _>>()?;
    }
    let idx = signals.iter().position(|s| *s == signal).expect("signal is present");
    Ok(level.swap_remove(idx))
}

// ---------------------------------------------------------------------------
// Speaker
// ---------------------------------------------------------------------------

/// Softmax over raw scores with max subtraction; `-inf` scores get zero mass.
/// Falls back to uniform if every score is `-inf`.
pub fn softmax_scores(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `P(a) ∝ exp(lambda * u(a))`.
pub fn softmax(utilities: &[f64], lambda: f64) -> Vec<f64> {
    let scores: Vec<f64> = utilities.iter().map(|u| lambda * u).collect();
    softmax_scores(&scores)
}

/// `Do` plus one `Send` per feature present in the scene.
pub fn valid_actions(scene: &Scene) -> Vec<SpeakerAction> {
    std::iter::once(SpeakerAction::Do)
        .chain(scene.present_features().into_iter().map(SpeakerAction::Send))
        .collect()
}

pub fn check_action(scene: &Scene, action: SpeakerAction) -> Result<(), PragmaticsError> {
    match action {
        SpeakerAction::Do => Ok(()),
        SpeakerAction::Send(f) if scene.items.iter().any(|it| it.has_feature(f)) => Ok(()),
        SpeakerAction::Send(_) => Err(PragmaticsError::InvalidAction(action)),
    }
}

/// Expected utility of `action` in cents.
pub fn expected_action_utility(
    scene: &Scene,
    action: SpeakerAction,
    config: &SpeakerConfig,
    params: &UtilityParams,
) -> Result<f64, PragmaticsError> {
    let costs = SceneCosts::new(scene)?;
    expected_action_utility_with(scene, &costs, action, config, params)
}

pub fn expected_action_utility_with(
    scene: &Scene,
    costs: &SceneCosts,
    action: SpeakerAction,
    config: &SpeakerConfig,
    params: &UtilityParams,
) -> Result<f64, PragmaticsError> {
    let utility = |mover, id: ItemId| -> Result<f64, PragmaticsError> {
        let steps = costs.steps(mover, id)?;
        Ok(params.utility(id == scene.target_id, steps).0 as f64)
    };
    match action {
        SpeakerAction::Do => utility(Agent::Signaler, scene.target_id),
        SpeakerAction::Send(signal) => {
            let listener = listener_at_depth(&scene.items, signal, config.recursion_depth, config)?;
            listener
                .iter()
                .map(|(id, p)| Ok(p * utility(Agent::Receiver, *id)?))
                .sum()
        }
    }
}

/// Every valid action with its expected utility in cents, `Do` first.
pub fn action_utilities(
    scene: &Scene,
    config: &SpeakerConfig,
    params: &UtilityParams,
) -> Result<Vec<(SpeakerAction, f64)>, PragmaticsError> {
    let costs = SceneCosts::new(scene)?;
    action_utilities_with(scene, &costs, config, params)
}

pub fn action_utilities_with(
    scene: &Scene,
    costs: &SceneCosts,
    config: &SpeakerConfig,
    params: &UtilityParams,
) -> Result<Vec<(SpeakerAction, f64)>, PragmaticsError> {
    valid_actions(scene)
        .into_iter()
        .map(|a| Ok((a, expected_action_utility_with(scene, costs, a, config, params)?)))
        .collect()
}

/// Softmax speaker over all valid actions; utilities enter in dollars.
pub fn speaker_policy(
    scene: &Scene,
    config: &SpeakerConfig,
    params: &UtilityParams,
) -> Result<Distribution<SpeakerAction>, PragmaticsError> {
    let utilities = action_utilities(scene, config, params)?;
    policy_from_utilities(&utilities, config.lambda)
}

pub fn policy_from_utilities(
    utilities: &[(SpeakerAction, f64)],
    lambda: f64,
) -> Result<Distribution<SpeakerAction>, PragmaticsError> {
    let dollars: Vec<f64> = utilities.iter().map(|(_, u)| u / 100.0).collect();
    let probs = softmax(&dollars, lambda);
    Distribution::new(utilities.iter().map(|(a, _)| *a).zip(probs).collect())
}

/// Reproducible draw from `policy`.
pub fn sample_action(policy: &Distribution<SpeakerAction>, seed: u64) -> SpeakerAction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    *policy.sample(&mut rng)
}
