//! The session state machine driven directly, without HTTP.

mod common;

use chrono::{DateTime, TimeDelta, Utc};
use proptest::prelude::*;

use signalgame_core::gridworld::{Agent, Cents, UtilityParams};
use signalgame_core::pragmatics::{action_utilities, valid_actions, SpeakerAction, SpeakerConfig};
use signalgame_core::trial_factory::TrialSuite;
use signalgame_protocol::{Phase, QuizSubmission};
use signalgame_service::content::correct_answers;
use signalgame_service::receiver::ReceiverBehavior;
use signalgame_service::session::{replay, Catalog, Event, EventRecord, SessionState};

use common::catalog;

const CAP: Cents = Cents(525);

struct Driver {
    state: Option<SessionState>,
    records: Vec<EventRecord>,
    cap: Cents,
    origin: DateTime<Utc>,
}

impl Driver {
    fn new(code: &str, seed: u64, catalog: &Catalog, practice: u32, cap: Cents) -> Self {
        let mut d = Driver { state: None, records: Vec::new(), cap, origin: Utc::now() };
        d.commit(vec![SessionState::create(code, seed, catalog, practice).unwrap()]);
        d
    }

    fn state(&self) -> &SessionState {
        self.state.as_ref().unwrap()
    }

    fn commit(&mut self, events: Vec<Event>) {
        for event in events {
            let seq = self.records.len() as u64;
            let record = EventRecord {
                session_id: "s".into(),
                seq,
                timestamp: self.origin + TimeDelta::microseconds(seq as i64),
                event,
            };
            self.state = Some(SessionState::apply(self.state.take(), &record, self.cap).unwrap());
            self.records.push(record);
        }
    }

    fn enter_trials(&mut self) {
        let e = self.state().finish_instructions().unwrap();
        self.commit(e);
        let e = self.state().answer_quiz(&correct_answers()).unwrap();
        self.commit(e);
    }

    fn act(&mut self, catalog: &Catalog, action: SpeakerAction, rt: f64) -> Vec<Event> {
        let s = self.state();
        let events = s
            .submit_action(s.index, action, rt, catalog, &ReceiverBehavior::new(1.5).unwrap(), &UtilityParams::default())
            .unwrap();
        self.commit(events.clone());
        events
    }
}

fn current_actions(d: &Driver, catalog: &Catalog) -> Vec<(SpeakerAction, f64)> {
    let s = d.state();
    let scene = catalog.scene(s.phase, s.current_ref().unwrap()).unwrap();
    action_utilities(scene, &SpeakerConfig::default(), &UtilityParams::default()).unwrap()
}

fn outcome_utility(events: &[Event]) -> Cents {
    events
        .iter()
        .find_map(|e| match e {
            Event::OutcomeShown { outcome, .. } | Event::PracticeResult { outcome, .. } => Some(outcome.utility),
            _ => None,
        })
        .unwrap()
}

#[test]
fn two_referent_signal_splits_evenly_and_delays_are_exponential() {
    let full = catalog();
    // a pair whose scenes both contain a feature shared by exactly two items
    let (pair, feature) = full
        .suite
        .pairs
        .iter()
        .find_map(|p| {
            let f = p.near_receiver.present_features().into_iter().find(|f| {
                p.scenes().iter().all(|s| s.referents(*f).len() == 2)
            })?;
            Some((p.clone(), f))
        })
        .expect("suite has a two-referent feature");
    let small = Catalog { suite: TrialSuite { pairs: vec![pair.clone()] }, practice: TrialSuite { pairs: vec![] } };
    let referents = pair.near_receiver.referents(feature);

    let draws = 10_000;
    let (mut first, mut delays) = (0u32, 0.0);
    for seed in 0..draws {
        let mut d = Driver::new("freq", seed, &small, 0, CAP);
        d.enter_trials();
        assert_eq!(d.state().phase, Phase::Experiment);
        let events = d.act(&small, SpeakerAction::Send(feature), 1.0);
        let Event::OutcomeShown { outcome, .. } = &events[1] else { panic!("{events:?}") };
        assert_eq!(outcome.mover, Agent::Receiver);
        assert!(referents.contains(&outcome.reached_item));
        first += u32::from(outcome.reached_item == referents[0]);
        delays += outcome.receiver_delay.unwrap();
    }
    let share = first as f64 / draws as f64;
    assert!((share - 0.5).abs() < 0.02, "first referent share {share}");
    let mean = delays / draws as f64;
    assert!((mean - 1.5).abs() <= 0.05 * 1.5, "mean delay {mean}");
}

#[test]
fn ledger_floors_at_zero_and_caps() {
    let cat = catalog();
    // always the worst action: the running sum goes negative, the bonus stays at zero
    let mut d = Driver::new("worst", 1, &cat, 0, CAP);
    d.enter_trials();
    let mut sum = Cents::ZERO;
    while d.state().phase == Phase::Experiment {
        let worst = current_actions(&d, &cat).into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        sum += outcome_utility(&d.act(&cat, worst, 1.0));
        assert_eq!(d.state().bonus, sum.clamp(Cents::ZERO, CAP));
    }
    assert!(sum < Cents::ZERO, "{sum}");
    assert_eq!(d.state().bonus, Cents::ZERO);

    // the best action every time with a small cap pins the bonus to the cap
    let cap = Cents(30);
    let mut d = Driver::new("best", 1, &cat, 0, cap);
    d.enter_trials();
    while d.state().phase == Phase::Experiment {
        let best = current_actions(&d, &cat).into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        d.act(&cat, best, 1.0);
    }
    assert!(d.state().earned > cap);
    assert_eq!(d.state().bonus, cap);
}

#[test]
fn duplicate_creation_and_out_of_order_records_are_corrupt() {
    let cat = catalog();
    let mut d = Driver::new("x", 0, &cat, 10, CAP);
    d.enter_trials();
    let mut bad = d.records.clone();
    bad.swap(1, 2);
    assert!(replay(&bad, CAP).is_err());
    let mut stale_time = d.records.clone();
    stale_time[2].timestamp = stale_time[1].timestamp;
    assert!(replay(&stale_time, CAP).is_err());
    let mut twice = d.records.clone();
    let mut again = twice[0].clone();
    again.seq = 3;
    again.timestamp = twice[2].timestamp + TimeDelta::seconds(1);
    twice.push(again);
    assert!(replay(&twice, CAP).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any accepted command sequence replays to the same state, the ledger
    /// is always the clamped sum of experiment utilities, and phases only
    /// move forward.
    #[test]
    fn replay_round_trip_and_ledger(
        seed in any::<u64>(),
        choices in prop::collection::vec(any::<prop::sample::Index>(), 46),
        quiz_misses in 0u32..4,
        cap in prop::sample::select(vec![0i64, 100, 525, 100_000]),
        stop in 0usize..50,
    ) {
        let cat = catalog();
        let cap = Cents(cap);
        let mut d = Driver::new("prop", seed, &cat, 10, cap);
        let e = d.state().finish_instructions().unwrap();
        d.commit(e);
        for _ in 0..quiz_misses {
            let e = d.state().answer_quiz(&QuizSubmission::default()).unwrap();
            d.commit(e);
        }
        let e = d.state().answer_quiz(&correct_answers()).unwrap();
        d.commit(e);
        let mut sum = Cents::ZERO;
        let mut last_phase = d.state().phase;
        for (i, choice) in choices.iter().enumerate().take(stop) {
            let s = d.state();
            if !matches!(s.phase, Phase::Practice | Phase::Experiment) {
                break;
            }
            let phase = s.phase;
            let scene = cat.scene(phase, s.current_ref().unwrap()).unwrap();
            let actions = valid_actions(scene);
            let e = d.state().show_trial(d.state().index).unwrap();
            d.commit(e);
            let events = d.act(&cat, *choice.get(&actions), 0.5 + i as f64);
            if phase == Phase::Experiment {
                sum += outcome_utility(&events);
            }
            prop_assert_eq!(d.state().bonus, sum.clamp(Cents::ZERO, cap));
            prop_assert!(d.state().phase >= last_phase);
            last_phase = d.state().phase;
        }
        prop_assert_eq!(d.state().quiz_failures, quiz_misses);
        let rebuilt = replay(&d.records, cap).unwrap();
        prop_assert_eq!(&rebuilt["s"], d.state());
        let exported = d.state().export(&cat).unwrap();
        prop_assert_eq!(exported.trials.len(), d.state().results.len());
    }
}
