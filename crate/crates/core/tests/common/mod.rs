#![allow(dead_code)]

use std::collections::BTreeSet;

use signalgame_core::gridworld::{Agent, BarrierSide, Condition, Item, Position, Scene, UtilityParams};
use signalgame_core::pragmatics::SpeakerAction;

pub fn grid(width: u32, height: u32, barriers: impl IntoIterator<Item = Position>) -> Scene {
    Scene {
        width,
        height,
        items: Vec::new(),
        barrier_cells: barriers.into_iter().collect::<BTreeSet<_>>(),
        signaler_pos: Position::new(0, 0),
        receiver_pos: Position::new(0, 0),
        target_id: 0,
        barrier_side: BarrierSide::NearReceiver,
        condition: Condition::Control,
        pair_id: "fixture".into(),
    }
}

/// All-pairs shortest paths by Floyd–Warshall over passable cells, indexed
/// by `row * width + col`. `None` marks unreachable pairs or barrier cells.
pub fn floyd(scene: &Scene) -> Vec<Vec<Option<u32>>> {
    let (w, h) = (scene.width as usize, scene.height as usize);
    let n = w * h;
    let pos = |i: usize| Position::new((i % w) as u32, (i / w) as u32);
    let mut d = vec![vec![None; n]; n];
    for i in 0..n {
        if scene.is_barrier(pos(i)) {
            continue;
        }
        d[i][i] = Some(0);
        for j in 0..n {
            if i != j && !scene.is_barrier(pos(j)) && pos(i).manhattan(pos(j)) == 1 {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(kj) = d[k][j] {
                    if d[i][j].is_none_or(|cur| ik + kj < cur) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

pub fn cell_index(scene: &Scene, p: Position) -> usize {
    (p.row * scene.width + p.col) as usize
}

/// Expected utility in cents by direct enumeration: the receiver picks each
/// item consistent with the signal with equal chance.
pub fn brute_expected_utility(scene: &Scene, action: SpeakerAction, params: &UtilityParams) -> f64 {
    let d = floyd(scene);
    let cost = |agent: Agent, item: &Item| {
        let from = cell_index(scene, scene.agent_pos(agent));
        d[from][cell_index(scene, item.pos)].expect("reachable") as i64
    };
    let value = |agent, item: &Item| {
        let reward = if item.id == scene.target_id { params.reward.0 } else { 0 };
        (reward - params.step_cost.0 * cost(agent, item)) as f64
    };
    match action {
        SpeakerAction::Do => value(Agent::Signaler, scene.target().unwrap()),
        SpeakerAction::Send(f) => {
            let consistent: Vec<&Item> = scene.items.iter().filter(|it| it.color_or_shape(f)).collect();
            consistent.iter().map(|it| value(Agent::Receiver, it)).sum::<f64>() / consistent.len() as f64
        }
    }
}

pub trait FeatureMatch {
    fn color_or_shape(&self, f: signalgame_core::gridworld::Feature) -> bool;
}

impl FeatureMatch for Item {
    fn color_or_shape(&self, f: signalgame_core::gridworld::Feature) -> bool {
        use signalgame_core::gridworld::Feature;
        match f {
            Feature::Color(c) => self.color == c,
            Feature::Shape(s) => self.shape == s,
        }
    }
}
