use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::mac::{
    bs_ack_epoch, downlink_failover, node_step, short_id, AckEpoch, BsState, MacAction, MacConfig, MacEvent,
    NodeMacState, NodeMode, NoiseReport,
};
use snow_core::{Error, SpectrumPlan};

fn step(s: &NodeMacState, ev: MacEvent, now: u64, rng: &mut ChaCha8Rng) -> (NodeMacState, MacAction) {
    node_step(s, ev, now, &MacConfig::default(), rng).unwrap()
}

#[test]
fn node_walks_through_a_busy_channel_to_an_ack() {
    let cfg = MacConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = NodeMacState::new(5);

    let (s, a) = step(&s, MacEvent::Wake, 1000, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::InitialBackoff, MacAction::None));
    let d = s.backoff_deadline.unwrap();
    assert!(d >= 1000 && d < 1000 + (cfg.initial_backoff_ms * cfg.ticks_per_ms) as u64);

    let (s, a) = step(&s, MacEvent::Timer, d, &mut rng);
    assert_eq!((s.mode, a, s.backoff_deadline), (NodeMode::Cca, MacAction::StartCca, None));

    let (s, a) = step(&s, MacEvent::CcaResult { busy: true }, d, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::CongestionBackoff, MacAction::None));
    let d2 = s.backoff_deadline.unwrap();
    assert!(d2 >= d && d2 < d + (cfg.congestion_backoff_ms * cfg.ticks_per_ms) as u64);

    let (s, _) = step(&s, MacEvent::Timer, d2, &mut rng);
    let (s, a) = step(&s, MacEvent::CcaResult { busy: false }, d2, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::Transmit, MacAction::Transmit));
    let (s, a) = step(&s, MacEvent::Timer, d2 + 100, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::AwaitAck, MacAction::ListenDownlink));
    let (s, a) = step(&s, MacEvent::AckBit { set: false }, d2 + 200, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::AwaitAck, MacAction::None));
    let (s, a) = step(&s, MacEvent::AckBit { set: true }, d2 + 300, &mut rng);
    assert_eq!((s.mode, a, s.retry_count), (NodeMode::Sleep, MacAction::Sleep, 0));
}

#[test]
fn retry_budget_then_drop() {
    let cfg = MacConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = NodeMacState { mode: NodeMode::AwaitAck, ..NodeMacState::new(1) };
    for retry in 1..=cfg.max_retries {
        let (n, a) = step(&s, MacEvent::AckTimeout, 0, &mut rng);
        assert_eq!((n.mode, a, n.retry_count), (NodeMode::CongestionBackoff, MacAction::None, retry));
        s = NodeMacState { mode: NodeMode::AwaitAck, ..n };
    }
    let (n, a) = step(&s, MacEvent::AckTimeout, 0, &mut rng);
    assert_eq!((n.mode, a, n.retry_count), (NodeMode::Sleep, MacAction::Sleep, 0));
}

#[test]
fn downlink_listen_cycle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (s, a) = step(&NodeMacState::new(2), MacEvent::Listen, 0, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::Receive, MacAction::ListenDownlink));
    let (s, a) = step(&s, MacEvent::Timer, 10, &mut rng);
    assert_eq!((s.mode, a), (NodeMode::Sleep, MacAction::Sleep));
}

#[test]
fn out_of_order_events_are_protocol_violations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = MacConfig::default();
    let sleeping = NodeMacState::new(1);
    for ev in
        [MacEvent::Timer, MacEvent::CcaResult { busy: false }, MacEvent::AckBit { set: true }, MacEvent::AckTimeout]
    {
        assert!(matches!(node_step(&sleeping, ev, 0, &cfg, &mut rng), Err(Error::ProtocolViolation { .. })));
    }
    let cca = NodeMacState { mode: NodeMode::Cca, ..sleeping };
    assert!(node_step(&cca, MacEvent::Wake, 0, &cfg, &mut rng).is_err());
}

#[test]
fn ack_vector_sets_exactly_the_decoded_subcarriers() {
    let plan = SpectrumPlan::default();
    let decoded: BTreeSet<u16> = [3, 7, 25].into();
    let v = bs_ack_epoch(&decoded, &plan).unwrap();
    assert_eq!(v.bits.len(), plan.num_subcarriers as usize);
    assert_eq!(v.ones(), vec![3, 7, 25]);
    assert!(!v.is_set(0) && !v.is_set(4) && !v.is_set(100));
    assert_eq!(v.to_bytes().len(), (plan.num_subcarriers as usize).div_ceil(8));
    assert_eq!(v.to_bytes()[0], 0b0010_0010);

    for reserved in [plan.join_index, plan.downlink_index] {
        assert!(bs_ack_epoch(&[reserved].into(), &plan).is_err());
    }
    assert!(bs_ack_epoch(&BTreeSet::new(), &plan).unwrap().ones().is_empty());
}

#[test]
fn assignment_fills_every_data_subcarrier_before_sharing() {
    let plan = SpectrumPlan::default();
    let data = plan.data_subcarriers();
    let mut bs = BsState::new(&plan);
    let mut used = BTreeSet::new();
    for node in 0..data.len() {
        let s = bs.assign(node, &plan).unwrap();
        assert!(data.contains(&s) && s != plan.downlink_index && s != plan.join_index);
        assert!(used.insert(s), "subcarrier {s} handed out twice");
    }
    let extra = bs.assign(data.len(), &plan).unwrap();
    assert_eq!(bs.sharers(extra), 2);
    assert_eq!(bs.assign(0, &plan).unwrap(), bs.subcarrier_assignments[&0]);
}

#[test]
fn shared_subcarrier_acks_name_the_node() {
    let plan = SpectrumPlan::default();
    let data = plan.data_subcarriers();
    let mut bs = BsState::new(&plan);
    for node in 0..=data.len() {
        bs.assign(node, &plan).unwrap();
    }
    let newcomer = data.len();
    let shared = bs.subcarrier_assignments[&newcomer];
    let partner = *bs.subcarrier_assignments.iter().find(|(&n, &s)| s == shared && n != newcomer).unwrap().0;
    let lone = bs.subcarrier_assignments[&1];
    assert_ne!(lone, shared);

    let epoch = AckEpoch::build(&[(shared, newcomer), (lone, 1)], &bs, &plan).unwrap();
    assert!(epoch.acknowledges(shared, newcomer));
    assert!(!epoch.acknowledges(shared, partner));
    assert!(epoch.acknowledges(lone, 1));
    assert_eq!(epoch.shared.len(), 1);
    let payload = epoch.payload();
    assert_eq!(&payload[payload.len() - 2..], &[shared as u8, short_id(newcomer)]);
    assert_eq!(short_id(300), 44);
}

fn with_backups() -> SpectrumPlan {
    SpectrumPlan { backup_indices: vec![25, 24], ..SpectrumPlan::default() }
}

#[test]
fn failover_walks_the_backups() {
    let plan = with_backups();
    let bs = BsState::new(&plan);
    assert_eq!(downlink_failover(&bs, NoiseReport::new(0.9)).unwrap(), bs);
    let mut cur = bs.clone();
    for &b in &plan.backup_indices {
        let old = cur.downlink_index;
        cur = downlink_failover(&cur, NoiseReport::new(0.1)).unwrap();
        assert_eq!(cur.downlink_index, b);
        assert!(cur.retired.contains(&old));
    }
    assert_eq!(cur.downlink_index, 24);
    assert_eq!(downlink_failover(&cur, NoiseReport::new(0.1)), Err(Error::BackupsExhausted));
    let none = BsState::new(&SpectrumPlan::default());
    assert_eq!(downlink_failover(&none, NoiseReport::new(0.1)), Err(Error::BackupsExhausted));
}

#[test]
fn retired_downlink_is_never_assigned() {
    let plan = with_backups();
    let mut bs = downlink_failover(&BsState::new(&plan), NoiseReport::new(0.0)).unwrap();
    for node in 0..3 * plan.data_subcarriers().len() {
        let s = bs.assign(node, &plan).unwrap();
        assert!(!bs.retired.contains(&s) && s != bs.downlink_index);
    }
}

fn any_event() -> impl Strategy<Value = MacEvent> {
    prop_oneof![
        Just(MacEvent::Wake),
        Just(MacEvent::Timer),
        any::<bool>().prop_map(|busy| MacEvent::CcaResult { busy }),
        any::<bool>().prop_map(|set| MacEvent::AckBit { set }),
        Just(MacEvent::AckTimeout),
        Just(MacEvent::Listen),
    ]
}

proptest! {
    #[test]
    fn transmit_only_after_clear_cca(events in proptest::collection::vec((any_event(), 0u64..1_000_000), 1..200), seed: u64) {
        let cfg = MacConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = NodeMacState::new(4);
        let mut now = 0;
        for (ev, dt) in events {
            now += dt;
            let Ok((n, a)) = node_step(&s, ev, now, &cfg, &mut rng) else { continue };
            if a == MacAction::Transmit {
                prop_assert_eq!(s.mode, NodeMode::Cca);
                prop_assert_eq!(ev, MacEvent::CcaResult { busy: false });
            }
            if let Some(d) = n.backoff_deadline {
                prop_assert!(d >= now || n.backoff_deadline == s.backoff_deadline);
            }
            prop_assert!(n.retry_count <= cfg.max_retries);
            prop_assert_eq!(n.assigned_subcarrier, 4);
            s = n;
        }
    }
}
