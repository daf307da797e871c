use std::collections::BTreeMap;
use std::net::{SocketAddr, UdpSocket};
use std::time::Duration;

use netedu::linksim::{
    chop_stream, proxy, simulate, Action, Direction, DirectionFilter, ImpairmentConfig, Ingress, ProxyConfig,
};
use proptest::prelude::*;

fn schedule(n: usize, dir: Direction) -> Vec<Ingress<u64>> {
    (0..n)
        .map(|i| Ingress {
            t: i as f64 * 0.5,
            direction: dir,
            payload: i as u64,
        })
        .collect()
}

#[test]
fn loss_fraction_is_near_configured() {
    for seed in [1, 2, 3] {
        let cfg = ImpairmentConfig {
            seed,
            loss_prob: 0.1,
            ..Default::default()
        };
        let (_, log) = simulate(&schedule(10_000, Direction::AToB), &cfg);
        let dropped = log.count(Direction::AToB, Action::Drop) as f64 / 10_000.0;
        assert!((0.08..=0.12).contains(&dropped), "seed {seed}: {dropped}");
    }
}

#[test]
fn delays_stay_in_bounds() {
    let cfg = ImpairmentConfig {
        seed: 9,
        base_delay: 10.0,
        jitter: 5.0,
        dup_prob: 0.1,
        ..Default::default()
    };
    let input = schedule(5_000, Direction::AToB);
    let (out, log) = simulate(&input, &cfg);
    for d in &out {
        let sent = input[d.ordinal as usize - 1].t;
        let delay = d.at - sent;
        assert!((10.0..=15.0).contains(&delay), "ordinal {} delay {delay}", d.ordinal);
    }
    for e in &log.entries {
        if matches!(e.action, Action::Deliver | Action::Duplicate) {
            assert!((10.0..=15.0).contains(&e.delay));
        }
    }
}

#[test]
fn log_time_never_decreases() {
    let cfg = ImpairmentConfig {
        seed: 4,
        base_delay: 3.0,
        jitter: 2.0,
        loss_prob: 0.1,
        dup_prob: 0.1,
        reorder_prob: 0.2,
        ..Default::default()
    };
    let mut input = schedule(2_000, Direction::AToB);
    input.extend(schedule(2_000, Direction::BToA));
    let (_, log) = simulate(&input, &cfg);
    assert!(log.entries.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn direction_filter_spares_other_direction() {
    let cfg = ImpairmentConfig {
        seed: 1,
        loss_prob: 1.0,
        base_delay: 4.0,
        direction: DirectionFilter::AToB,
        ..Default::default()
    };
    let mut input = schedule(100, Direction::AToB);
    input.extend(schedule(100, Direction::BToA));
    let (out, _) = simulate(&input, &cfg);
    assert!(out.iter().all(|d| d.direction == Direction::BToA));
    assert_eq!(out.len(), 100);
    assert!(out.iter().all(|d| d.at - input[100 + d.ordinal as usize - 1].t == 4.0));
}

proptest! {
    #[test]
    fn conservation(seed in any::<u64>(), loss in 0.0..0.5f64, dup in 0.0..0.5f64, reorder in 0.0..0.5f64, n in 0usize..300) {
        let cfg = ImpairmentConfig {
            seed,
            base_delay: 1.0,
            jitter: 2.0,
            loss_prob: loss,
            dup_prob: dup,
            reorder_prob: reorder,
            ..Default::default()
        };
        let input = schedule(n, Direction::AToB);
        let (out, log) = simulate(&input, &cfg);
        let mut copies: BTreeMap<u64, usize> = BTreeMap::new();
        for d in &out {
            prop_assert_eq!(d.payload + 1, d.ordinal);
            *copies.entry(d.ordinal).or_default() += 1;
        }
        for ord in 1..=n as u64 {
            let c = copies.get(&ord).copied().unwrap_or(0);
            let dropped = log.entries.iter().any(|e| e.ordinal == ord && e.action == Action::Drop);
            let duped = log.entries.iter().any(|e| e.ordinal == ord && e.action == Action::Duplicate);
            prop_assert!(log.entries.iter().any(|e| e.ordinal == ord));
            prop_assert_eq!(c, if dropped { 0 } else if duped { 2 } else { 1 });
        }
        let (out2, log2) = simulate(&input, &cfg);
        prop_assert_eq!(log.to_text(), log2.to_text());
        prop_assert_eq!(out.len(), out2.len());
    }

    #[test]
    fn chop_conserves(data in proptest::collection::vec(any::<u8>(), 0..500), seed in any::<u64>(), max in 1usize..32) {
        let chunks = chop_stream(&data, seed, max);
        prop_assert!(chunks.iter().all(|c| !c.is_empty() && c.len() <= max));
        prop_assert_eq!(chunks.concat(), data);
    }
}

#[test]
fn proxy_forwards_and_drops_first_datagram() {
    let b = UdpSocket::bind("127.0.0.1:0").unwrap();
    b.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let handle = proxy(ProxyConfig {
        listen: SocketAddr::from(([127, 0, 0, 1], 0)),
        peer_a: None,
        peer_b: b.local_addr().unwrap(),
        impairment: ImpairmentConfig {
            drop_ordinals: [1].into(),
            direction: DirectionFilter::AToB,
            ..Default::default()
        },
        log_path: None,
    })
    .unwrap();
    let a = UdpSocket::bind("127.0.0.1:0").unwrap();
    a.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    a.send_to(b"first", handle.local_addr()).unwrap();
    a.send_to(b"second", handle.local_addr()).unwrap();
    let mut buf = [0u8; 64];
    let (n, from) = b.recv_from(&mut buf).unwrap();
    assert_eq!(&buf[..n], b"second");
    b.send_to(b"reply", from).unwrap();
    let (n, _) = a.recv_from(&mut buf).unwrap();
    assert_eq!(&buf[..n], b"reply");
    let log = handle.shutdown().unwrap();
    assert_eq!(log.count(Direction::AToB, Action::Drop), 1);
    assert_eq!(log.count(Direction::BToA, Action::Deliver), 1);
}
