//! Two-step joint-utility signaler: keep only the items the receiver is
//! responsible for, then name the target unambiguously within them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Agent, Feature, FeatureKind, GridError, ItemId, Scene, SceneCosts, UtilityParams};
use crate::pragmatics::{action_utilities_with, PragmaticsError, SpeakerAction, SpeakerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JointUtilityError {
    #[error("target is outside the receiver's responsibility and no fallback action could be scored")]
    NoTarget(#[source] PragmaticsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Argmax of the literal-receiver expected utilities.
    #[default]
    BestExpectedUtility,
    Do,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointUtilityConfig {
    pub fallback: Fallback,
}

/// Items assigned to the receiver by path-cost responsibility.
pub fn restricted_referents(scene: &Scene) -> Result<BTreeSet<ItemId>, GridError> {
    let costs = SceneCosts::new(scene)?;
    restricted_referents_with(scene, &costs)
}

pub fn restricted_referents_with(scene: &Scene, costs: &SceneCosts) -> Result<BTreeSet<ItemId>, GridError> {
    let mut out = BTreeSet::new();
    for it in &scene.items {
        if costs.responsible(it.id)? == Agent::Receiver {
            out.insert(it.id);
        }
    }
    Ok(out)
}

/// Target features that pick out only the target among `restricted`,
/// ordered by full-scene referent count, then color before shape.
pub fn unambiguous_features(scene: &Scene, restricted: &BTreeSet<ItemId>) -> Result<Vec<Feature>, GridError> {
    let target = scene.target()?;
    let mut qualifying: Vec<Feature> = target
        .features()
        .into_iter()
        .filter(|f| {
            let within: Vec<_> = scene.referents(*f).into_iter().filter(|id| restricted.contains(id)).collect();
            within == [scene.target_id]
        })
        .collect();
    qualifying.sort_by_key(|f| (scene.referents(*f).len(), matches!(f.kind(), FeatureKind::Shape)));
    Ok(qualifying)
}

pub fn joint_utility_action(
    scene: &Scene,
    config: &JointUtilityConfig,
    params: &UtilityParams,
) -> Result<SpeakerAction, JointUtilityError> {
    let costs = SceneCosts::new(scene)?;
    let restricted = restricted_referents_with(scene, &costs)?;
    if let Some(f) = unambiguous_features(scene, &restricted)?.first() {
        return Ok(SpeakerAction::Send(*f));
    }
    match config.fallback {
        Fallback::Do => Ok(SpeakerAction::Do),
        Fallback::BestExpectedUtility => {
            let utilities = action_utilities_with(scene, &costs, &SpeakerConfig::default(), params)
                .map_err(JointUtilityError::NoTarget)?;
            Ok(best_action(&utilities))
        }
    }
}

/// First action with maximal utility; `Do` comes first in the list so it wins ties.
pub fn best_action(utilities: &[(SpeakerAction, f64)]) -> SpeakerAction {
    let mut best = utilities[0];
    for entry in &utilities[1..] {
        if entry.1 > best.1 {
            best = *entry;
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{BarrierSide, Color, Condition, Item, Position, Shape};

    fn open_scene(items: Vec<Item>, signaler: Position, receiver: Position) -> Scene {
        Scene {
            width: 9,
            height: 5,
            items,
            barrier_cells: Default::default(),
            signaler_pos: signaler,
            receiver_pos: receiver,
            target_id: 0,
            barrier_side: BarrierSide::NearReceiver,
            condition: Condition::Control,
            pair_id: "j".into(),
        }
    }

    #[test]
    fn dominance_cases() {
        let items: Vec<Item> = (0..5)
            .map(|i| Item::new(i, Color::Red, Shape::Square, Position::new(i + 4, 2)))
            .collect();
        let s = open_scene(items.clone(), Position::new(0, 0), Position::new(8, 2));
        assert_eq!(restricted_referents(&s).unwrap().len(), 5);
        let s = open_scene(items, Position::new(8, 2), Position::new(0, 0));
        assert!(restricted_referents(&s).unwrap().is_empty());
    }

    #[test]
    fn unique_feature_is_sent_regardless_of_partition() {
        let items = vec![
            Item::new(0, Color::Green, Shape::Circle, Position::new(7, 2)),
            Item::new(1, Color::Red, Shape::Circle, Position::new(6, 2)),
            Item::new(2, Color::Red, Shape::Square, Position::new(1, 2)),
            Item::new(3, Color::Purple, Shape::Triangle, Position::new(2, 2)),
            Item::new(4, Color::Red, Shape::Triangle, Position::new(8, 4)),
        ];
        let s = open_scene(items, Position::new(0, 2), Position::new(8, 2));
        let a = joint_utility_action(&s, &JointUtilityConfig::default(), &UtilityParams::default()).unwrap();
        assert_eq!(a, SpeakerAction::Send(Color::Green.into()));
    }

    #[test]
    fn fallbacks() {
        // every item sits next to the signaler, so nothing is the receiver's
        let items: Vec<Item> = (0..5)
            .map(|i| Item::new(i, Color::Red, Shape::Square, Position::new(i, 0)))
            .collect();
        let s = open_scene(items, Position::new(0, 1), Position::new(8, 4));
        let p = UtilityParams::default();
        let do_cfg = JointUtilityConfig { fallback: Fallback::Do };
        assert_eq!(joint_utility_action(&s, &do_cfg, &p).unwrap(), SpeakerAction::Do);
        // signaler is one step from the target: Do earns 0.35, far better than any signal
        assert_eq!(
            joint_utility_action(&s, &JointUtilityConfig::default(), &p).unwrap(),
            SpeakerAction::Do
        );
    }

    #[test]
    fn tie_break_prefers_fewer_referents_then_color() {
        let items = vec![
            Item::new(0, Color::Red, Shape::Square, Position::new(8, 1)),
            Item::new(1, Color::Red, Shape::Circle, Position::new(0, 1)),
            Item::new(2, Color::Green, Shape::Circle, Position::new(0, 3)),
            Item::new(3, Color::Purple, Shape::Triangle, Position::new(8, 3)),
            Item::new(4, Color::Green, Shape::Triangle, Position::new(7, 4)),
        ];
        // square is globally unique, red has a second referent on the signaler side
        let s = open_scene(items, Position::new(0, 2), Position::new(8, 2));
        let restricted = restricted_referents(&s).unwrap();
        assert_eq!(
            unambiguous_features(&s, &restricted).unwrap(),
            vec![Feature::Shape(Shape::Square), Feature::Color(Color::Red)]
        );
        let mut s2 = s.clone();
        s2.items[1].color = Color::Purple;
        let restricted = restricted_referents(&s2).unwrap();
        assert_eq!(
            unambiguous_features(&s2, &restricted).unwrap(),
            vec![Feature::Color(Color::Red), Feature::Shape(Shape::Square)]
        );
    }
}
