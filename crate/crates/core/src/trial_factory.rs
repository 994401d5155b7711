//! Condition predicates for Simple, Difficult and Control trials, and a
//! seeded rejection sampler that produces barrier-R / barrier-S pairs.
//!
//! The validator only looks at scene content. Generation-side preferences
//! (layout template, minimum detour) live in [`GenerationLayout`] and are
//! never consulted by [`validate`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    Agent, BarrierSide, Cents, Color, Condition, Feature, GridError, Item, ItemId, Position, Scene, SceneCosts, Shape,
    UtilityParams,
};
use crate::joint_utility::{restricted_referents_with, unambiguous_features};
use crate::pragmatics::{
    action_utilities_with, listener_at_depth, PragmaticsError, SpeakerAction, SpeakerConfig,
};

/// Rationality used inside the depth-1 recursion when deciding whether a
/// feature is pragmatically resolvable.
pub const RESOLUTION_LAMBDA: f64 = 4.0;
pub const PAIRS_PER_CONDITION: usize = 6;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 100_000;

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("malformed scene: {0}")]
    MalformedScene(#[from] GridError),
    #[error("model evaluation failed: {0}")]
    Model(#[from] PragmaticsError),
    #[error("no valid {condition} pair after {attempts} attempts (most frequent failure: {most_failed})")]
    GenerationExhausted { condition: Condition, attempts: u32, most_failed: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("suite manifest: {0}")]
    Manifest(String),
}

// ---------------------------------------------------------------------------
// Clauses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// Experimental conditions: receiver strictly nearer the target.
    TargetNearerReceiver,
    /// The barrier is closer to the agent named by `barrier_side`.
    BarrierOnDeclaredSide,
    /// Simple (a): both target features have at least two referents.
    SimpleBothFeaturesAmbiguous,
    /// Simple (b): the depth-1 listener resolves neither target feature.
    SimpleNotPragmaticallySolvable,
    /// Simple (c), barrier near R: exactly one target feature is unique
    /// among the receiver's items.
    SimpleUniqueAfterRestriction,
    /// Difficult (a): the depth-1 listener's unique argmax is the target for
    /// both target features.
    DifficultPragmaticallySolvable,
    /// Difficult (b), barrier near R: target features differ in referent
    /// count among the receiver's items.
    DifficultCountsDiffer,
    /// Control (a): one target feature names only the target.
    ControlUniqueFeature,
    /// Control (b), barrier near R: walking beats every signal.
    ControlDoDominates,
    /// Control (c), barrier near S: the unique feature is the best action.
    ControlSignalBest,
    /// Pair: the two scenes differ only in barrier cells and side.
    PairSharesLayout,
    /// Pair: some item lies between the two barriers and flips owner with
    /// the barrier side.
    PairCriticalItem,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(name.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub violated: Vec<Clause>,
}

impl Validation {
    pub fn is_pass(&self) -> bool {
        self.violated.is_empty()
    }

    fn check(&mut self, ok: bool, clause: Clause) {
        if !ok {
            self.violated.push(clause);
        }
    }
}

// ---------------------------------------------------------------------------
// Validator
// ---------------------------------------------------------------------------

fn resolution_config() -> SpeakerConfig {
    SpeakerConfig::with_lambda(RESOLUTION_LAMBDA)
}

/// Whether the depth-1 listener's unique argmax for `feature` is the target.
pub fn pragmatically_resolves(scene: &Scene, feature: Feature) -> Result<bool, TrialError> {
    let l1 = listener_at_depth(&scene.items, feature, 1, &resolution_config())?;
    Ok(l1.unique_mode(TIE_TOLERANCE) == Some(&scene.target_id))
}

fn restricted_count(scene: &Scene, restricted: &BTreeSet<ItemId>, feature: Feature) -> usize {
    scene.referents(feature).into_iter().filter(|id| restricted.contains(id)).count()
}

fn min_distance(cells: &BTreeSet<Position>, p: Position) -> Option<u32> {
    cells.iter().map(|c| c.manhattan(p)).min()
}

/// Clauses that depend only on the items' features, not on geometry.
pub fn language_clauses(scene: &Scene) -> Result<Validation, TrialError> {
    let [color, shape] = scene.target()?.features();
    let mut v = Validation::default();
    match scene.condition {
        Condition::Simple => {
            v.check(
                scene.referents(color).len() >= 2 && scene.referents(shape).len() >= 2,
                Clause::SimpleBothFeaturesAmbiguous,
            );
            v.check(
                !pragmatically_resolves(scene, color)? && !pragmatically_resolves(scene, shape)?,
                Clause::SimpleNotPragmaticallySolvable,
            );
        }
        Condition::Difficult => {
            v.check(
                pragmatically_resolves(scene, color)? && pragmatically_resolves(scene, shape)?,
                Clause::DifficultPragmaticallySolvable,
            );
        }
        Condition::Control => {
            v.check(control_unique_feature(scene)?.is_some(), Clause::ControlUniqueFeature);
        }
    }
    Ok(v)
}

/// Checks one scene against its condition's clauses.
pub fn validate(scene: &Scene) -> Result<Validation, TrialError> {
    scene.check_structure()?;
    let costs = SceneCosts::new(scene)?;
    let target = scene.target()?;
    let [color, shape] = target.features();
    let restricted = restricted_referents_with(scene, &costs)?;
    let near_r = scene.barrier_side == BarrierSide::NearReceiver;
    let mut v = Validation::default();

    if scene.condition.is_experimental() {
        v.check(
            costs.steps(Agent::Receiver, scene.target_id)? < costs.steps(Agent::Signaler, scene.target_id)?,
            Clause::TargetNearerReceiver,
        );
    }
    let (declared, other) = match scene.barrier_side {
        BarrierSide::NearReceiver => (scene.receiver_pos, scene.signaler_pos),
        BarrierSide::NearSignaler => (scene.signaler_pos, scene.receiver_pos),
    };
    v.check(
        matches!(
            (min_distance(&scene.barrier_cells, declared), min_distance(&scene.barrier_cells, other)),
            (Some(d), Some(o)) if d < o
        ),
        Clause::BarrierOnDeclaredSide,
    );

    v.violated.extend(language_clauses(scene)?.violated);
    match scene.condition {
        Condition::Simple => {
            if near_r {
                v.check(
                    unambiguous_features(scene, &restricted)?.len() == 1,
                    Clause::SimpleUniqueAfterRestriction,
                );
            }
        }
        Condition::Difficult => {
            if near_r {
                v.check(
                    restricted_count(scene, &restricted, color) != restricted_count(scene, &restricted, shape),
                    Clause::DifficultCountsDiffer,
                );
            }
        }
        Condition::Control => {
            let unique = control_unique_feature(scene)?;
            let utilities = action_utilities_with(scene, &costs, &SpeakerConfig::default(), &UtilityParams::default())?;
            if near_r {
                let do_u = utilities[0].1;
                v.check(utilities[1..].iter().all(|(_, u)| do_u > *u), Clause::ControlDoDominates);
            } else {
                let best = unique.and_then(|f| {
                    let su = utilities.iter().find(|(a, _)| *a == SpeakerAction::Send(f))?.1;
                    Some(utilities.iter().all(|(a, u)| *a == SpeakerAction::Send(f) || su > *u))
                });
                v.check(best == Some(true), Clause::ControlSignalBest);
            }
        }
    }
    Ok(v)
}

/// The target feature with exactly one full-scene referent (color first).
pub fn control_unique_feature(scene: &Scene) -> Result<Option<Feature>, GridError> {
    let target = scene.target()?;
    Ok(target.features().into_iter().find(|f| scene.referents(*f).len() == 1))
}

fn centroid(cells: &BTreeSet<Position>) -> Option<(f64, f64)> {
    if cells.is_empty() {
        return None;
    }
    let n = cells.len() as f64;
    let (sc, sr) = cells.iter().fold((0.0, 0.0), |(c, r), p| (c + p.col as f64, r + p.row as f64));
    Some((sc / n, sr / n))
}

/// Whether `p` projects strictly inside the segment joining the two
/// barriers' centroids.
fn between(p: Position, a: &BTreeSet<Position>, b: &BTreeSet<Position>) -> bool {
    let (Some((ax, ay)), Some((bx, by))) = (centroid(a), centroid(b)) else {
        return false;
    };
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return false;
    }
    let t = ((p.col as f64 - ax) * dx + (p.row as f64 - ay) * dy) / len2;
    t > 0.0 && t < 1.0
}

/// Items that sit between the two barrier placements and belong to the
/// signaler with the barrier near R but to the receiver with it near S.
pub fn critical_items(scene_r: &Scene, scene_s: &Scene) -> Result<Vec<ItemId>, GridError> {
    let cr = SceneCosts::new(scene_r)?;
    let cs = SceneCosts::new(scene_s)?;
    let mut out = Vec::new();
    for it in &scene_r.items {
        if cr.responsible(it.id)? == Agent::Signaler
            && cs.responsible(it.id)? == Agent::Receiver
            && between(it.pos, &scene_s.barrier_cells, &scene_r.barrier_cells)
        {
            out.push(it.id);
        }
    }
    Ok(out)
}

/// Validates both scenes of a pair plus the pair-level clauses.
pub fn validate_pair(scene_r: &Scene, scene_s: &Scene) -> Result<Validation, TrialError> {
    let mut v = validate(scene_r)?;
    for c in validate(scene_s)?.violated {
        if !v.violated.contains(&c) {
            v.violated.push(c);
        }
    }
    let same_layout = scene_r.barrier_side == BarrierSide::NearReceiver
        && scene_s.barrier_side == BarrierSide::NearSignaler
        && scene_r.width == scene_s.width
        && scene_r.height == scene_s.height
        && scene_r.items == scene_s.items
        && scene_r.signaler_pos == scene_s.signaler_pos
        && scene_r.receiver_pos == scene_s.receiver_pos
        && scene_r.target_id == scene_s.target_id
        && scene_r.condition == scene_s.condition
        && scene_r.pair_id == scene_s.pair_id;
    v.check(same_layout, Clause::PairSharesLayout);
    let critical = critical_items(scene_r, scene_s)?;
    let ok = if scene_r.condition.is_experimental() {
        critical.iter().any(|id| *id != scene_r.target_id)
    } else {
        critical.contains(&scene_r.target_id)
    };
    v.check(ok, Clause::PairCriticalItem);
    Ok(v)
}

/// The feature that counts as optimal for a pair, read off the barrier-R
/// scene: the target feature with fewer referents among the receiver's items
/// (experimental), or the globally unique target feature (control).
pub fn optimal_feature(scene_r: &Scene) -> Result<Option<Feature>, GridError> {
    match scene_r.condition {
        Condition::Control => control_unique_feature(scene_r),
        _ => {
            let costs = SceneCosts::new(scene_r)?;
            let restricted = restricted_referents_with(scene_r, &costs)?;
            let [color, shape] = scene_r.target()?.features();
            let (nc, ns) = (
                restricted_count(scene_r, &restricted, color),
                restricted_count(scene_r, &restricted, shape),
            );
            Ok(match nc.cmp(&ns) {
                std::cmp::Ordering::Less => Some(color),
                std::cmp::Ordering::Greater => Some(shape),
                std::cmp::Ordering::Equal => None,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePair {
    pub pair_id: String,
    pub condition: Condition,
    pub optimal_feature: Feature,
    pub near_receiver: Scene,
    pub near_signaler: Scene,
}

impl ScenePair {
    pub fn scene(&self, side: BarrierSide) -> &Scene {
        match side {
            BarrierSide::NearReceiver => &self.near_receiver,
            BarrierSide::NearSignaler => &self.near_signaler,
        }
    }

    pub fn scenes(&self) -> [&Scene; 2] {
        [&self.near_receiver, &self.near_signaler]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSuite {
    pub pairs: Vec<ScenePair>,
}

impl TrialSuite {
    pub fn counts(&self) -> BTreeMap<Condition, usize> {
        let mut out = BTreeMap::new();
        for p in &self.pairs {
            *out.entry(p.condition).or_default() += 1;
        }
        out
    }

    pub fn scenes(&self) -> impl Iterator<Item = (&ScenePair, &Scene)> {
        self.pairs.iter().flat_map(|p| p.scenes().into_iter().map(move |s| (p, s)))
    }

    pub fn pair(&self, pair_id: &str) -> Option<&ScenePair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn scene(&self, pair_id: &str, side: BarrierSide) -> Option<&Scene> {
        self.pair(pair_id).map(|p| p.scene(side))
    }
}

/// One manifest row per pair; scenes live next to the manifest as
/// `<pair_id>_R.json` and `<pair_id>_S.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub condition: Condition,
    pub optimal_feature: Feature,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path, e: impl fmt::Display) -> TrialError {
    TrialError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn scene_file(pair_id: &str, side: BarrierSide) -> String {
    format!("{pair_id}_{}.json", side.short())
}

impl TrialSuite {
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.pairs
            .iter()
            .map(|p| ManifestEntry {
                pair_id: p.pair_id.clone(),
                condition: p.condition,
                optimal_feature: p.optimal_feature,
            })
            .collect()
    }

    /// Writes the manifest and one file per scene into `dir`, creating it.
    pub fn write_dir(&self, dir: &Path) -> Result<(), TrialError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for p in &self.pairs {
            for side in BarrierSide::BOTH {
                let path = dir.join(scene_file(&p.pair_id, side));
                fs::write(&path, p.scene(side).to_json()).map_err(|e| io_err(&path, e))?;
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest()).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self, TrialError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        let mut pairs = Vec::with_capacity(manifest.len());
        for entry in manifest {
            let load = |side: BarrierSide| -> Result<Scene, TrialError> {
                let path = dir.join(scene_file(&entry.pair_id, side));
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                let scene = Scene::from_json(&text)?;
                if scene.pair_id != entry.pair_id || scene.barrier_side != side || scene.condition != entry.condition {
                    return Err(TrialError::Manifest(format!("{} does not match its manifest row", path.display())));
                }
                Ok(scene)
            };
            let near_receiver = load(BarrierSide::NearReceiver)?;
            let near_signaler = load(BarrierSide::NearSignaler)?;
            pairs.push(ScenePair {
                pair_id: entry.pair_id,
                condition: entry.condition,
                optimal_feature: entry.optimal_feature,
                near_receiver,
                near_signaler,
            });
        }
        Ok(TrialSuite { pairs })
    }

    /// Accepts either a suite directory or a single JSON file holding the
    /// whole suite.
    pub fn load(path: &Path) -> Result<Self, TrialError> {
        if path.is_dir() {
            return Self::read_dir(path);
        }
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

/// A scene or pair that failed validation inside a suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteViolation {
    pub pair_id: String,
    /// `None` for pair-level clauses.
    pub side: Option<BarrierSide>,
    pub violated: Vec<Clause>,
}

/// Runs every scene and pair check, plus the manifest annotation check.
/// An empty result means the suite is usable.
pub fn validate_suite(suite: &TrialSuite) -> Result<Vec<SuiteViolation>, TrialError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for p in &suite.pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(TrialError::Manifest(format!("duplicate pair id {}", p.pair_id)));
        }
        for side in BarrierSide::BOTH {
            let scene = p.scene(side);
            if scene.condition != p.condition || scene.barrier_side != side {
                return Err(TrialError::Manifest(format!("{} {} is filed under the wrong cell", p.pair_id, side.short())));
            }
            let v = validate(scene)?;
            if !v.is_pass() {
                out.push(SuiteViolation { pair_id: p.pair_id.clone(), side: Some(side), violated: v.violated });
            }
        }
        let v = validate_pair(&p.near_receiver, &p.near_signaler)?;
        if !v.is_pass() {
            out.push(SuiteViolation { pair_id: p.pair_id.clone(), side: None, violated: v.violated });
        }
        if optimal_feature(&p.near_receiver)? != Some(p.optimal_feature) {
            return Err(TrialError::Manifest(format!("{}: annotated optimal feature disagrees with the scene", p.pair_id)));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Layout template for generated pairs: two straight vertical walls at fixed
/// columns, anchored to the top or bottom edge with a gap at the other end.
/// The signaler starts left of the signaler-side wall, the receiver right of
/// the receiver-side wall, and the critical item between the walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLayout {
    pub width: u32,
    pub height: u32,
    pub signaler_wall_col: u32,
    pub receiver_wall_col: u32,
    pub wall_len: u32,
    /// Experimental pairs: the target and the non-critical items lie within
    /// this Manhattan distance of the receiver.
    pub receiver_cluster_radius: u32,
    /// Experimental pairs: items placed between the walls (1 or 2).
    pub middle_items: u32,
    /// Experimental pairs: with the barrier near R, the optimal signal's
    /// expected utility trails the best other action by at least this much.
    pub min_optimal_gap: Cents,
    /// Experimental pairs: with the barrier near S, the optimal signal's
    /// expected utility trails the best action by at most this much.
    /// `None` disables the check.
    pub max_optimal_deficit_s: Option<Cents>,
}

impl Default for GenerationLayout {
    fn default() -> Self {
        Self {
            width: 17,
            height: 13,
            signaler_wall_col: 5,
            receiver_wall_col: 11,
            wall_len: 12,
            receiver_cluster_radius: 2,
            middle_items: 1,
            min_optimal_gap: Cents(70),
            max_optimal_deficit_s: Some(Cents(20)),
        }
    }
}

impl GenerationLayout {
    fn cols(&self, zone: Zone) -> std::ops::Range<u32> {
        match zone {
            Zone::Signaler => 0..self.signaler_wall_col,
            Zone::Middle => self.signaler_wall_col + 1..self.receiver_wall_col,
            Zone::Receiver | Zone::Cluster => self.receiver_wall_col + 1..self.width,
            Zone::Any => 0..self.width,
        }
    }

    fn wall(&self, col: u32, len: u32, from_top: bool) -> BTreeSet<Position> {
        let start = if from_top { 0 } else { self.height - len };
        (start..start + len).map(|r| Position::new(col, r)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Zone {
    Signaler,
    Middle,
    Receiver,
    Any,
    /// Receiver zone, near the receiver.
    Cluster,
}

fn random_cell<R: Rng>(rng: &mut R, layout: &GenerationLayout, zone: Zone) -> Position {
    let cols = layout.cols(zone);
    Position::new(rng.random_range(cols), rng.random_range(0..layout.height))
}

/// Cells of `zone` accepted by `open`.
fn zone_cells(
    layout: &GenerationLayout,
    zone: Zone,
    receiver: Position,
    open: impl Fn(&Position) -> bool,
) -> Vec<Position> {
    layout
        .cols(zone)
        .flat_map(|c| (0..layout.height).map(move |r| Position::new(c, r)))
        .filter(|p| !matches!(zone, Zone::Cluster) || p.manhattan(receiver) <= layout.receiver_cluster_radius)
        .filter(|p| open(p))
        .collect()
}

fn random_features<R: Rng>(rng: &mut R) -> (Color, Shape) {
    (*Color::ALL.choose(rng).unwrap(), *Shape::ALL.choose(rng).unwrap())
}

struct Candidate {
    near_receiver: Scene,
    near_signaler: Scene,
}

fn propose<R: Rng>(rng: &mut R, condition: Condition, layout: &GenerationLayout, pair_id: &str) -> Option<Candidate> {
    let len = layout.wall_len.min(layout.height);
    let from_top = rng.random_bool(0.5);
    let wall_r = layout.wall(layout.receiver_wall_col, len, from_top);
    let wall_s = layout.wall(layout.signaler_wall_col, len, from_top);
    let blocked = |p: &Position| wall_r.contains(p) || wall_s.contains(p);

    let signaler_pos = random_cell(rng, layout, Zone::Signaler);
    let receiver_pos = random_cell(rng, layout, Zone::Receiver);
    if blocked(&signaler_pos) || blocked(&receiver_pos) {
        return None;
    }
    let zones = match condition {
        Condition::Control => [Zone::Middle, Zone::Any, Zone::Any, Zone::Any, Zone::Any],
        _ if layout.middle_items >= 2 => [Zone::Cluster, Zone::Middle, Zone::Middle, Zone::Cluster, Zone::Cluster],
        _ => [Zone::Cluster, Zone::Middle, Zone::Cluster, Zone::Cluster, Zone::Cluster],
    };
    let open = |p: &Position| !blocked(p) && *p != signaler_pos && *p != receiver_pos;
    let mut cells: Vec<Position> = Vec::with_capacity(5);
    for zone in [Zone::Cluster, Zone::Middle, Zone::Any] {
        let wanted = zones.iter().filter(|z| std::mem::discriminant(*z) == std::mem::discriminant(&zone)).count();
        if wanted == 0 {
            continue;
        }
        let pool = zone_cells(layout, zone, receiver_pos, |p| open(p) && !cells.contains(p));
        if pool.len() < wanted {
            return None;
        }
        let mut picked: Vec<Position> = pool.choose_multiple(rng, wanted).copied().collect();
        picked.shuffle(rng);
        cells.extend(picked);
    }
    // zones are filled cluster, middle, any, so the first cell is in the
    // target's zone. Ids are shuffled so the
    // target's id and list position carry no information
    let mut ids: Vec<ItemId> = (0..5).collect();
    ids.shuffle(rng);
    let mut items: Vec<Item> = cells
        .iter()
        .zip(&ids)
        .map(|(p, id)| {
            let (c, s) = random_features(rng);
            Item::new(*id, c, s, *p)
        })
        .collect();
    let target_id = ids[0];
    items.sort_by_key(|it| it.id);

    let base = Scene {
        width: layout.width,
        height: layout.height,
        items,
        barrier_cells: wall_r,
        signaler_pos,
        receiver_pos,
        target_id,
        barrier_side: BarrierSide::NearReceiver,
        condition,
        pair_id: pair_id.to_string(),
    };
    let near_signaler = Scene { barrier_cells: wall_s, barrier_side: BarrierSide::NearSignaler, ..base.clone() };
    Some(Candidate { near_receiver: base, near_signaler })
}

/// Generation-only requirements, on top of validation.
fn design_targets(c: &Candidate, layout: &GenerationLayout) -> Result<Result<Feature, &'static str>, TrialError> {
    let r = &c.near_receiver;
    match r.condition {
        Condition::Control => Ok(control_unique_feature(r)?.ok_or("no unique feature")),
        _ => {
            // the optimal feature must be unique among the receiver's items,
            // so the two-step strategy always has a clean answer
            let costs = SceneCosts::new(r)?;
            let restricted = restricted_referents_with(r, &costs)?;
            let Some(&feature) = unambiguous_features(r, &restricted)?.first() else {
                return Ok(Err("optimal feature not unique after restriction"));
            };
            let other = r.target()?.other_feature(feature);
            for id in critical_items(r, &c.near_signaler)? {
                // the critical item competes for the optimal feature only
                let it = r.item(id)?;
                if id != r.target_id && (!it.has_feature(feature) || it.has_feature(other)) {
                    return Ok(Err("critical item does not isolate the optimal feature"));
                }
            }
            let utilities = action_utilities_with(r, &costs, &SpeakerConfig::default(), &UtilityParams::default())?;
            let optimal = SpeakerAction::Send(feature);
            let own = utilities.iter().find(|(a, _)| *a == optimal).map_or(f64::NEG_INFINITY, |(_, u)| *u);
            let best_other = utilities
                .iter()
                .filter(|(a, _)| *a != optimal)
                .map(|(_, u)| *u)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_other - own < layout.min_optimal_gap.0 as f64 {
                return Ok(Err("optimal signal not dominated with barrier near R"));
            }
            if let Some(cap) = layout.max_optimal_deficit_s {
                let s = &c.near_signaler;
                let costs = SceneCosts::new(s)?;
                let utilities = action_utilities_with(s, &costs, &SpeakerConfig::default(), &UtilityParams::default())?;
                let own = utilities.iter().find(|(a, _)| *a == optimal).map_or(f64::NEG_INFINITY, |(_, u)| *u);
                let best = utilities.iter().map(|(_, u)| *u).fold(f64::NEG_INFINITY, f64::max);
                if best - own > cap.0 as f64 {
                    return Ok(Err("optimal signal too far behind with barrier near S"));
                }
            }
            Ok(Ok(feature))
        }
    }
}

/// Rejection-samples one valid pair. Deterministic in `seed`.
pub fn generate(condition: Condition, seed: u64, max_attempts: u32) -> Result<ScenePair, TrialError> {
    generate_with(condition, seed, max_attempts, &GenerationLayout::default(), &format!("{condition}-{seed}"))
}

pub fn generate_with(
    condition: Condition,
    seed: u64,
    max_attempts: u32,
    layout: &GenerationLayout,
    pair_id: &str,
) -> Result<ScenePair, TrialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures: BTreeMap<String, u32> = BTreeMap::new();
    for _ in 0..max_attempts.max(1) {
        let Some(candidate) = propose(&mut rng, condition, layout, pair_id) else {
            *failures.entry("overlapping cells".into()).or_default() += 1;
            continue;
        };
        let language = language_clauses(&candidate.near_receiver)?;
        if let Some(c) = language.violated.first() {
            *failures.entry(c.to_string()).or_default() += 1;
            continue;
        }
        if candidate.near_receiver.check_structure().is_err() || candidate.near_signaler.check_structure().is_err() {
            *failures.entry("structure".into()).or_default() += 1;
            continue;
        }
        let v = validate_pair(&candidate.near_receiver, &candidate.near_signaler)?;
        if let Some(c) = v.violated.first() {
            *failures.entry(c.to_string()).or_default() += 1;
            continue;
        }
        match design_targets(&candidate, layout)? {
            Err(reason) => *failures.entry(reason.into()).or_default() += 1,
            Ok(optimal_feature) => {
                return Ok(ScenePair {
                    pair_id: pair_id.to_string(),
                    condition,
                    optimal_feature,
                    near_receiver: candidate.near_receiver,
                    near_signaler: candidate.near_signaler,
                })
            }
        }
    }
    let most_failed = failures
        .into_iter()
        .max_by_key(|(_, n)| *n)
        .map(|(c, _)| c)
        .unwrap_or_default();
    Err(TrialError::GenerationExhausted { condition, attempts: max_attempts, most_failed })
}

/// Six pairs per condition, 36 scenes in total.
pub fn build_suite(seed: u64) -> Result<TrialSuite, TrialError> {
    build_suite_with(seed, &GenerationLayout::default(), DEFAULT_MAX_ATTEMPTS)
}

pub fn build_suite_with(seed: u64, layout: &GenerationLayout, max_attempts: u32) -> Result<TrialSuite, TrialError> {
    build_pairs(seed, &Condition::ALL, layout, max_attempts)
}

/// The pairs of one condition exactly as they appear in `build_suite(seed)`.
pub fn build_condition(seed: u64, condition: Condition) -> Result<TrialSuite, TrialError> {
    build_pairs(seed, &[condition], &GenerationLayout::default(), DEFAULT_MAX_ATTEMPTS)
}

fn build_pairs(
    seed: u64,
    conditions: &[Condition],
    layout: &GenerationLayout,
    max_attempts: u32,
) -> Result<TrialSuite, TrialError> {
    use rayon::prelude::*;
    let jobs: Vec<(Condition, usize)> = conditions
        .iter()
        .flat_map(|c| (0..PAIRS_PER_CONDITION).map(move |i| (*c, i)))
        .collect();
    let pairs = jobs
        .into_par_iter()
        .map(|(condition, i)| {
            let stream = seed
                .wrapping_mul(1_000_003)
                .wrapping_add(condition as u64 * 101 + i as u64);
            let pair_id = format!("{}-{:02}", condition, i + 1);
            generate_with(condition, stream, max_attempts, layout, &pair_id)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrialSuite { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_items_is_malformed() {
        let mut pair = generate(Condition::Simple, 7, DEFAULT_MAX_ATTEMPTS).unwrap();
        pair.near_receiver.items.pop();
        assert!(matches!(validate(&pair.near_receiver), Err(TrialError::MalformedScene(_))));
    }

    #[test]
    fn generated_simple_pair_passes_independent_validation() {
        let pair = generate(Condition::Simple, 7, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert!(validate(&pair.near_receiver).unwrap().is_pass());
        assert!(validate(&pair.near_signaler).unwrap().is_pass());
        assert!(validate_pair(&pair.near_receiver, &pair.near_signaler).unwrap().is_pass());
        assert_eq!(pair.near_receiver.items, pair.near_signaler.items);
        assert_ne!(pair.near_receiver.barrier_cells, pair.near_signaler.barrier_cells);
    }

    #[test]
    fn generation_is_deterministic() {
        for c in Condition::ALL {
            assert_eq!(generate(c, 3, DEFAULT_MAX_ATTEMPTS).unwrap(), generate(c, 3, DEFAULT_MAX_ATTEMPTS).unwrap());
        }
    }

    #[test]
    fn exhaustion_names_a_clause() {
        match generate(Condition::Simple, 1, 1) {
            Err(TrialError::GenerationExhausted { attempts: 1, most_failed, .. }) => assert!(!most_failed.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn globally_unique_target_feature_fails_simple() {
        let pair = generate(Condition::Control, 5, DEFAULT_MAX_ATTEMPTS).unwrap();
        let mut s = pair.near_signaler.clone();
        s.condition = Condition::Simple;
        let v = validate(&s).unwrap();
        assert!(v.violated.contains(&Clause::SimpleBothFeaturesAmbiguous));
    }

    #[test]
    fn suite_directory_round_trip() {
        let suite = TrialSuite {
            pairs: vec![
                generate(Condition::Simple, 7, DEFAULT_MAX_ATTEMPTS).unwrap(),
                generate(Condition::Control, 7, DEFAULT_MAX_ATTEMPTS).unwrap(),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        suite.write_dir(dir.path()).unwrap();
        assert_eq!(TrialSuite::read_dir(dir.path()).unwrap(), suite);
        assert_eq!(TrialSuite::load(dir.path()).unwrap(), suite);
        assert!(validate_suite(&suite).unwrap().is_empty());
    }

    #[test]
    fn corrupted_restricted_item_fails_simple() {
        let pair = generate(Condition::Simple, 9, DEFAULT_MAX_ATTEMPTS).unwrap();
        let mut r = pair.near_receiver.clone();
        let costs = SceneCosts::new(&r).unwrap();
        let restricted = restricted_referents_with(&r, &costs).unwrap();
        let victim = *restricted.iter().find(|id| **id != r.target_id).unwrap();
        let it = r.items.iter_mut().find(|it| it.id == victim).unwrap();
        match pair.optimal_feature {
            Feature::Color(c) => it.color = c,
            Feature::Shape(s) => it.shape = s,
        }
        assert!(!validate(&r).unwrap().is_pass());
    }
}
