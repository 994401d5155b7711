//! Grid-world environment: scene geometry, barrier-aware path costs and
//! monetary utility accounting.
//!
//! Movement is 4-connected. Only barrier cells block movement; items are
//! passable and reaching an item means stepping onto its cell. Money is kept
//! in integer cents.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WIDTH: u32 = 13;
pub const DEFAULT_HEIGHT: u32 = 9;
pub const ITEMS_PER_SCENE: usize = 5;

pub type ItemId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("position {0} is outside the {1}x{2} grid")]
    OutOfBounds(Position, u32, u32),
    #[error("position {0} is a barrier cell")]
    BarrierCell(Position),
    #[error("no path from {from} to {to}")]
    Unreachable { from: Position, to: Position },
    #[error("unknown item id {0}")]
    UnknownItem(ItemId),
    #[error("malformed scene: {0}")]
    Malformed(String),
    #[error("scene document: {0}")]
    Format(String),
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// A grid cell, serialized as `[col, row]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Position {
    pub col: u32,
    pub row: u32,
}

impl Position {
    pub const fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }

    pub fn manhattan(self, other: Position) -> u32 {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row)
    }
}

impl From<[u32; 2]> for Position {
    fn from([col, row]: [u32; 2]) -> Self {
        Self { col, row }
    }
}

impl From<Position> for [u32; 2] {
    fn from(p: Position) -> Self {
        [p.col, p.row]
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.col, self.row)
    }
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Purple,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Triangle,
    Circle,
    Square,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Purple, Color::Green];
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Triangle, Shape::Circle, Shape::Square];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Color,
    Shape,
}

/// One of the six feature tokens. Colors order before shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Feature {
    Color(Color),
    Shape(Shape),
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Color(Color::Red),
        Feature::Color(Color::Purple),
        Feature::Color(Color::Green),
        Feature::Shape(Shape::Triangle),
        Feature::Shape(Shape::Circle),
        Feature::Shape(Shape::Square),
    ];

    pub fn kind(self) -> FeatureKind {
        match self {
            Feature::Color(_) => FeatureKind::Color,
            Feature::Shape(_) => FeatureKind::Shape,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Feature::Color(Color::Red) => "red",
            Feature::Color(Color::Purple) => "purple",
            Feature::Color(Color::Green) => "green",
            Feature::Shape(Shape::Triangle) => "triangle",
            Feature::Shape(Shape::Circle) => "circle",
            Feature::Shape(Shape::Square) => "square",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Feature {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| GridError::Format(format!("unknown feature token {s:?}")))
    }
}

impl TryFrom<String> for Feature {
    type Error = GridError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Feature> for String {
    fn from(f: Feature) -> Self {
        f.token().to_string()
    }
}

impl From<Color> for Feature {
    fn from(c: Color) -> Self {
        Feature::Color(c)
    }
}

impl From<Shape> for Feature {
    fn from(s: Shape) -> Self {
        Feature::Shape(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub color: Color,
    pub shape: Shape,
    pub pos: Position,
}

impl Item {
    pub fn new(id: ItemId, color: Color, shape: Shape, pos: Position) -> Self {
        Self { id, color, shape, pos }
    }

    pub fn features(&self) -> [Feature; 2] {
        [Feature::Color(self.color), Feature::Shape(self.shape)]
    }

    pub fn has_feature(&self, feature: Feature) -> bool {
        match feature {
            Feature::Color(c) => self.color == c,
            Feature::Shape(s) => self.shape == s,
        }
    }

    /// The item's feature of the other kind.
    pub fn other_feature(&self, feature: Feature) -> Feature {
        match feature.kind() {
            FeatureKind::Color => Feature::Shape(self.shape),
            FeatureKind::Shape => Feature::Color(self.color),
        }
    }
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Signaler,
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierSide {
    NearReceiver,
    NearSignaler,
}

impl BarrierSide {
    pub const BOTH: [BarrierSide; 2] = [BarrierSide::NearReceiver, BarrierSide::NearSignaler];

    pub fn short(self) -> &'static str {
        match self {
            BarrierSide::NearReceiver => "R",
            BarrierSide::NearSignaler => "S",
        }
    }
}

impl fmt::Display for BarrierSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Simple,
    Difficult,
    Control,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Simple, Condition::Difficult, Condition::Control];

    pub fn is_experimental(self) -> bool {
        !matches!(self, Condition::Control)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Simple => "simple",
            Condition::Difficult => "difficult",
            Condition::Control => "control",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| GridError::Format(format!("unknown condition {s:?}")))
    }
}

/// One trial layout. Field names are the on-disk document keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub items: Vec<Item>,
    pub barrier_cells: BTreeSet<Position>,
    pub signaler_pos: Position,
    pub receiver_pos: Position,
    pub target_id: ItemId,
    pub barrier_side: BarrierSide,
    pub condition: Condition,
    pub pair_id: String,
}

impl Scene {
    pub fn in_bounds(&self, p: Position) -> bool {
        p.col < self.width && p.row < self.height
    }

    pub fn is_barrier(&self, p: Position) -> bool {
        self.barrier_cells.contains(&p)
    }

    pub fn item(&self, id: ItemId) -> Result<&Item, GridError> {
        self.items
            .iter()
            .find(|it| it.id == id)
            .ok_or(GridError::UnknownItem(id))
    }

    pub fn target(&self) -> Result<&Item, GridError> {
        self.item(self.target_id)
    }

    pub fn agent_pos(&self, agent: Agent) -> Position {
        match agent {
            Agent::Signaler => self.signaler_pos,
            Agent::Receiver => self.receiver_pos,
        }
    }

    /// Features carried by at least one item, in canonical order.
    pub fn present_features(&self) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| self.items.iter().any(|it| it.has_feature(*f)))
            .collect()
    }

    /// Ids of items consistent with `feature`.
    pub fn referents(&self, feature: Feature) -> Vec<ItemId> {
        self.items
            .iter()
            .filter(|it| it.has_feature(feature))
            .map(|it| it.id)
            .collect()
    }

    /// Checks every structural invariant: item count, unique ids and cells,
    /// bounds, target presence, agents off barriers, and reachability of
    /// every item from both agents.
    pub fn check_structure(&self) -> Result<(), GridError> {
        if self.width == 0 || self.height == 0 {
            return Err(GridError::Malformed("empty grid".into()));
        }
        if self.items.len() != ITEMS_PER_SCENE {
            return Err(GridError::Malformed(format!(
                "expected {ITEMS_PER_SCENE} items, found {}",
                self.items.len()
            )));
        }
        let mut ids = BTreeSet::new();
        let mut cells = BTreeSet::new();
        for it in &self.items {
            if !ids.insert(it.id) {
                return Err(GridError::Malformed(format!("duplicate item id {}", it.id)));
            }
            if !cells.insert(it.pos) {
                return Err(GridError::Malformed(format!("two items share cell {}", it.pos)));
            }
            self.check_cell(it.pos)?;
        }
        self.target()?;
        for p in self.barrier_cells.iter().copied() {
            if !self.in_bounds(p) {
                return Err(GridError::OutOfBounds(p, self.width, self.height));
            }
        }
        self.check_cell(self.signaler_pos)?;
        self.check_cell(self.receiver_pos)?;
        if self.condition.is_experimental() && self.barrier_cells.is_empty() {
            return Err(GridError::Malformed("experimental scene without a barrier".into()));
        }
        SceneCosts::new(self)?;
        Ok(())
    }

    fn check_cell(&self, p: Position) -> Result<(), GridError> {
        if !self.in_bounds(p) {
            return Err(GridError::OutOfBounds(p, self.width, self.height));
        }
        if self.is_barrier(p) {
            return Err(GridError::BarrierCell(p));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let scene: Scene =
            serde_json::from_str(text).map_err(|e| GridError::Format(e.to_string()))?;
        scene.check_structure()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

// ---------------------------------------------------------------------------
// Path costs
// ---------------------------------------------------------------------------

/// Breadth-first distances from one origin to every passable cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    origin: Position,
    width: u32,
    height: u32,
    dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn new(scene: &Scene, origin: Position) -> Result<Self, GridError> {
        scene.check_cell(origin)?;
        let (w, h) = (scene.width, scene.height);
        let idx = |p: Position| (p.row * w + p.col) as usize;
        let mut dist = vec![None; (w * h) as usize];
        dist[idx(origin)] = Some(0);
        let mut queue = VecDeque::from([origin]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[idx(cur)].unwrap_or_default();
            for next in neighbors(cur, w, h) {
                if dist[idx(next)].is_none() && !scene.is_barrier(next) {
                    dist[idx(next)] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(Self { origin, width: w, height: h, dist })
    }

    pub fn origin(&self) -> Position {
        self.origin
    }

    pub fn get(&self, to: Position) -> Option<u32> {
        if to.col >= self.width || to.row >= self.height {
            return None;
        }
        self.dist[(to.row * self.width + to.col) as usize]
    }

    pub fn cost_to(&self, to: Position) -> Result<u32, GridError> {
        if to.col >= self.width || to.row >= self.height {
            return Err(GridError::OutOfBounds(to, self.width, self.height));
        }
        self.get(to).ok_or(GridError::Unreachable { from: self.origin, to })
    }

    /// One shortest path from the origin to `to`, excluding the origin and
    /// including `to`. Ties prefer the neighbor order right, left, down, up.
    pub fn path_to(&self, to: Position) -> Result<Vec<Position>, GridError> {
        let mut remaining = self.cost_to(to)?;
        let mut path = Vec::with_capacity(remaining as usize);
        let mut cur = to;
        while remaining > 0 {
            path.push(cur);
            cur = neighbors(cur, self.width, self.height)
                .find(|n| self.get(*n) == Some(remaining - 1))
                .expect("bfs predecessor exists");
            remaining -= 1;
        }
        path.reverse();
        Ok(path)
    }
}

fn neighbors(p: Position, w: u32, h: u32) -> impl Iterator<Item = Position> {
    let Position { col, row } = p;
    [
        (col + 1 < w).then(|| Position::new(col + 1, row)),
        (col > 0).then(|| Position::new(col - 1, row)),
        (row + 1 < h).then(|| Position::new(col, row + 1)),
        (row > 0).then(|| Position::new(col, row - 1)),
    ]
    .into_iter()
    .flatten()
}

/// Minimum number of 4-connected steps from `from` to `to` avoiding barriers.
pub fn path_cost(scene: &Scene, from: Position, to: Position) -> Result<u32, GridError> {
    if from == to {
        scene.check_cell(to)?;
        return Ok(0);
    }
    scene.check_cell(to)?;
    DistanceField::new(scene, from)?.cost_to(to)
}

/// Both agents' step costs to every item, computed once per scene.
#[derive(Debug, Clone)]
pub struct SceneCosts {
    receiver: BTreeMap<ItemId, u32>,
    signaler: BTreeMap<ItemId, u32>,
}

impl SceneCosts {
    pub fn new(scene: &Scene) -> Result<Self, GridError> {
        let r = DistanceField::new(scene, scene.receiver_pos)?;
        let s = DistanceField::new(scene, scene.signaler_pos)?;
        let mut receiver = BTreeMap::new();
        let mut signaler = BTreeMap::new();
        for it in &scene.items {
            receiver.insert(it.id, r.cost_to(it.pos)?);
            signaler.insert(it.id, s.cost_to(it.pos)?);
        }
        Ok(Self { receiver, signaler })
    }

    pub fn steps(&self, mover: Agent, item: ItemId) -> Result<u32, GridError> {
        let map = match mover {
            Agent::Signaler => &self.signaler,
            Agent::Receiver => &self.receiver,
        };
        map.get(&item).copied().ok_or(GridError::UnknownItem(item))
    }

    /// Receiver wins ties.
    pub fn responsible(&self, item: ItemId) -> Result<Agent, GridError> {
        let r = self.steps(Agent::Receiver, item)?;
        let s = self.steps(Agent::Signaler, item)?;
        Ok(if s < r { Agent::Signaler } else { Agent::Receiver })
    }
}

// ---------------------------------------------------------------------------
// Money and utility
// ---------------------------------------------------------------------------

/// Integer cents. Displayed as dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn clamp(self, lo: Cents, hi: Cents) -> Cents {
        Cents(self.0.clamp(lo.0, hi.0))
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl std::ops::AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}${}.{:02}", abs / 100, abs % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub reward: Cents,
    pub step_cost: Cents,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self { reward: Cents(40), step_cost: Cents(5) }
    }
}

impl UtilityParams {
    pub fn utility(&self, reached_target: bool, steps: u32) -> Cents {
        let reward = if reached_target { self.reward } else { Cents::ZERO };
        reward - Cents(self.step_cost.0 * i64::from(steps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub mover: Agent,
    pub reached_item: ItemId,
    pub steps: u32,
    pub utility: Cents,
}

impl Outcome {
    pub fn new(scene: &Scene, mover: Agent, reached_item: ItemId, steps: u32, params: &UtilityParams) -> Self {
        let utility = params.utility(reached_item == scene.target_id, steps);
        Self { mover, reached_item, steps, utility }
    }
}

/// Reward for reaching the target (if `item` is it) minus the mover's step cost.
pub fn action_utility(
    scene: &Scene,
    mover: Agent,
    item: ItemId,
    params: &UtilityParams,
) -> Result<Cents, GridError> {
    let it = scene.item(item)?;
    let steps = path_cost(scene, scene.agent_pos(mover), it.pos)?;
    Ok(params.utility(item == scene.target_id, steps))
}

/// Same as [`action_utility`] with precomputed costs.
pub fn action_utility_with(
    scene: &Scene,
    costs: &SceneCosts,
    mover: Agent,
    item: ItemId,
    params: &UtilityParams,
) -> Result<Cents, GridError> {
    let steps = costs.steps(mover, item)?;
    Ok(params.utility(item == scene.target_id, steps))
}

/// Assigns each item to the agent with strictly lower path cost; ties go to
/// the receiver.
pub fn responsibility_partition(scene: &Scene) -> Result<BTreeMap<ItemId, Agent>, GridError> {
    let costs = SceneCosts::new(scene)?;
    scene
        .items
        .iter()
        .map(|it| Ok((it.id, costs.responsible(it.id)?)))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn scene_with(width: u32, height: u32, barrier: &[(u32, u32)]) -> Scene {
        let items = (0..5)
            .map(|i| Item::new(i, Color::Red, Shape::Square, Position::new(i, height - 1)))
            .collect();
        Scene {
            width,
            height,
            items,
            barrier_cells: barrier.iter().map(|&(c, r)| Position::new(c, r)).collect(),
            signaler_pos: Position::new(0, 0),
            receiver_pos: Position::new(width - 1, 0),
            target_id: 0,
            barrier_side: BarrierSide::NearReceiver,
            condition: Condition::Control,
            pair_id: "t".into(),
        }
    }

    #[test]
    fn identity_and_open_grid() {
        let s = scene_with(5, 4, &[]);
        assert_eq!(path_cost(&s, Position::new(2, 2), Position::new(2, 2)).unwrap(), 0);
        assert_eq!(path_cost(&s, Position::new(0, 0), Position::new(3, 0)).unwrap(), 3);
    }

    #[test]
    fn vertical_barrier_detour() {
        // BFS by hand on the 5x4 grid: column 2 blocked on rows 0..=2, so the
        // only crossing is row 3: (0,1)->(0..1,3)->(3..4,3)->(4,1).
        // down 2, right 4, up 2 = 8.
        let s = scene_with(5, 4, &[(2, 0), (2, 1), (2, 2)]);
        assert_eq!(path_cost(&s, Position::new(0, 1), Position::new(4, 1)).unwrap(), 8);
    }

    #[test]
    fn unreachable_reported() {
        let s = scene_with(5, 4, &[(2, 0), (2, 1), (2, 2), (2, 3)]);
        assert!(matches!(
            path_cost(&s, Position::new(0, 0), Position::new(4, 0)),
            Err(GridError::Unreachable { .. })
        ));
        assert!(matches!(
            path_cost(&s, Position::new(0, 0), Position::new(2, 0)),
            Err(GridError::BarrierCell(_))
        ));
    }

    #[test]
    fn path_matches_cost_and_avoids_barrier() {
        let s = scene_with(5, 4, &[(2, 0), (2, 1), (2, 2)]);
        let field = DistanceField::new(&s, Position::new(0, 1)).unwrap();
        let path = field.path_to(Position::new(4, 1)).unwrap();
        assert_eq!(path.len(), 8);
        assert_eq!(*path.last().unwrap(), Position::new(4, 1));
        assert!(path.iter().all(|p| !s.is_barrier(*p)));
        let mut prev = Position::new(0, 1);
        for p in path {
            assert_eq!(prev.manhattan(p), 1);
            prev = p;
        }
        assert!(field.path_to(Position::new(0, 1)).unwrap().is_empty());
    }

    #[test]
    fn utility_arithmetic() {
        let p = UtilityParams::default();
        assert_eq!(p.utility(true, 3), Cents(25));
        assert_eq!(p.utility(false, 6), Cents(-30));
        assert_eq!(p.utility(true, 0), Cents(40));
    }

    #[test]
    fn action_utility_uses_mover_position() {
        let mut s = scene_with(5, 4, &[]);
        s.signaler_pos = s.items[0].pos;
        let p = UtilityParams::default();
        assert_eq!(action_utility(&s, Agent::Signaler, 0, &p).unwrap(), Cents(40));
        // receiver at (4,0), item 1 at (1,3): 3 + 3 = 6 steps, not the target
        assert_eq!(action_utility(&s, Agent::Receiver, 1, &p).unwrap(), Cents(-30));
        assert!(matches!(action_utility(&s, Agent::Receiver, 9, &p), Err(GridError::UnknownItem(9))));
    }

    #[test]
    fn responsibility_ties_go_to_receiver() {
        let mut s = scene_with(5, 4, &[]);
        s.signaler_pos = Position::new(0, 3);
        s.receiver_pos = Position::new(4, 3);
        let part = responsibility_partition(&s).unwrap();
        assert_eq!(part[&0], Agent::Signaler);
        assert_eq!(part[&2], Agent::Receiver); // (2,3) equidistant
        assert_eq!(part[&4], Agent::Receiver);
    }

    #[test]
    fn money_display() {
        assert_eq!(Cents(40).to_string(), "$0.40");
        assert_eq!(Cents(-30).to_string(), "-$0.30");
        assert_eq!(Cents(525).to_string(), "$5.25");
    }

    #[test]
    fn structure_checks() {
        let mut s = scene_with(5, 4, &[]);
        s.check_structure().unwrap();
        s.items.pop();
        assert!(matches!(s.check_structure(), Err(GridError::Malformed(_))));

        let mut s = scene_with(5, 4, &[]);
        s.target_id = 42;
        assert!(matches!(s.check_structure(), Err(GridError::UnknownItem(42))));

        let mut s = scene_with(5, 4, &[(3, 2), (4, 2), (4, 1)]);
        s.items[4].pos = Position::new(4, 0);
        s.receiver_pos = Position::new(3, 0);
        // (4,0) is walled in only from below and the left is open, still reachable
        s.check_structure().unwrap();
        s.barrier_cells.insert(Position::new(3, 1));
        s.barrier_cells.insert(Position::new(2, 0));
        assert!(matches!(s.check_structure(), Err(GridError::Unreachable { .. })));
    }

    #[test]
    fn scene_document_round_trip() {
        let s = scene_with(5, 4, &[(2, 1)]);
        let text = s.to_json();
        assert!(text.contains("\"barrier_cells\": [\n    [\n      2,\n      1\n    ]"));
        assert!(text.contains("\"color\": \"red\""));
        assert_eq!(Scene::from_json(&text).unwrap(), s);
    }

    #[test]
    fn feature_tokens() {
        assert_eq!(Feature::ALL.len(), 6);
        for f in Feature::ALL {
            assert_eq!(f.token().parse::<Feature>().unwrap(), f);
        }
        assert!("blue".parse::<Feature>().is_err());
    }
}
