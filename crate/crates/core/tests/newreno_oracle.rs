//! A millisecond-stepped New Reno model checked against `predict` and
//! `measure` on a grid of scenarios.

use std::collections::{BTreeMap, BTreeSet};

use netedu::newreno::{compare, measure, predict, EventKind, Scenario, Timeline};
use netedu::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
struct Ev {
    t: u64,
    kind: EventKind,
    seg: u32,
    cwnd: f64,
    ssthresh: f64,
}

/// Integer-time model: data takes rtt/2 each way, ACKs carry the next
/// expected segment. Within one millisecond: receiver arrivals, then ACK
/// arrivals at the sender, then the retransmission timer.
fn stepped(rtt: u64, n: u32, cwnd0: f64, ssthresh0: f64, rto: u64, losses: &BTreeSet<u64>) -> Option<Vec<Ev>> {
    assert_eq!(rtt % 2, 0);
    let half = rtt / 2;
    let mut out = Vec::new();
    let mut data_at: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    let mut ack_at: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    let mut got = vec![false; n as usize + 2];
    let mut rcv_next = 1u32;

    let mut una = 1u32;
    let mut nxt = 1u32;
    let mut cwnd = cwnd0;
    let mut ssthresh = ssthresh0;
    let mut dups = 0;
    let mut recover: Option<u32> = None;
    let mut timer: Option<u64> = None;
    let mut sent = 0u64;

    let mut xmit = |t: u64,
                    seg: u32,
                    kind: EventKind,
                    cwnd: f64,
                    ssthresh: f64,
                    timer: &mut Option<u64>,
                    out: &mut Vec<Ev>,
                    data_at: &mut BTreeMap<u64, Vec<u32>>| {
        sent += 1;
        out.push(Ev { t, kind, seg, cwnd, ssthresh });
        if timer.is_none() {
            *timer = Some(t + rto);
        }
        if !losses.contains(&sent) {
            data_at.entry(t + half).or_default().push(seg);
        }
    };

    let fill = |t: u64,
                una: u32,
                nxt: &mut u32,
                cwnd: f64,
                ssthresh: f64,
                timer: &mut Option<u64>,
                out: &mut Vec<Ev>,
                data_at: &mut BTreeMap<u64, Vec<u32>>,
                xmit: &mut dyn FnMut(u64, u32, EventKind, f64, f64, &mut Option<u64>, &mut Vec<Ev>, &mut BTreeMap<u64, Vec<u32>>)| {
        while *nxt <= n && ((*nxt - una) as f64) < cwnd.floor() {
            xmit(t, *nxt, EventKind::Send, cwnd, ssthresh, timer, out, data_at);
            *nxt += 1;
        }
    };

    if n == 0 {
        return Some(out);
    }
    fill(0, una, &mut nxt, cwnd, ssthresh, &mut timer, &mut out, &mut data_at, &mut xmit);
    let guard = 100 * rtt;
    for t in 0..=guard {
        if let Some(segs) = data_at.remove(&t) {
            for s in segs {
                got[s as usize] = true;
                while rcv_next <= n && got[rcv_next as usize] {
                    rcv_next += 1;
                }
                ack_at.entry(t + half).or_default().push(rcv_next);
            }
        }
        if let Some(acks) = ack_at.remove(&t) {
            for a in acks {
                if una > n {
                    break;
                }
                if a > una {
                    let newly = a - una;
                    una = a;
                    dups = 0;
                    if let Some(r) = recover {
                        if a > r {
                            cwnd = ssthresh;
                            recover = None;
                            out.push(Ev { t, kind: EventKind::AckRcvd, seg: a - 1, cwnd, ssthresh });
                            out.push(Ev { t, kind: EventKind::ExitFastRecovery, seg: a - 1, cwnd, ssthresh });
                        } else {
                            cwnd = (cwnd - newly as f64 + 1.0).max(1.0);
                            out.push(Ev { t, kind: EventKind::AckRcvd, seg: a - 1, cwnd, ssthresh });
                            xmit(t, una, EventKind::Retransmit, cwnd, ssthresh, &mut timer, &mut out, &mut data_at);
                        }
                    } else {
                        cwnd += if cwnd < ssthresh { 1.0 } else { 1.0 / cwnd };
                        out.push(Ev { t, kind: EventKind::AckRcvd, seg: a - 1, cwnd, ssthresh });
                    }
                    timer = if una < nxt { Some(t + rto) } else { None };
                } else if a == una && una < nxt {
                    if recover.is_some() {
                        cwnd += 1.0;
                        out.push(Ev { t, kind: EventKind::DupackRcvd, seg: a - 1, cwnd, ssthresh });
                    } else {
                        dups += 1;
                        out.push(Ev { t, kind: EventKind::DupackRcvd, seg: a - 1, cwnd, ssthresh });
                        if dups == 3 {
                            ssthresh = (((nxt - una) as f64) / 2.0).max(2.0);
                            cwnd = ssthresh + 3.0;
                            recover = Some(nxt - 1);
                            out.push(Ev { t, kind: EventKind::EnterFastRecovery, seg: una, cwnd, ssthresh });
                            xmit(t, una, EventKind::Retransmit, cwnd, ssthresh, &mut timer, &mut out, &mut data_at);
                        }
                    }
                }
                if una <= n {
                    fill(t, una, &mut nxt, cwnd, ssthresh, &mut timer, &mut out, &mut data_at, &mut xmit);
                }
            }
        }
        if una > n {
            return Some(out);
        }
        if timer == Some(t) {
            ssthresh = (((nxt - una) as f64) / 2.0).max(2.0);
            cwnd = 1.0;
            recover = None;
            dups = 0;
            out.push(Ev { t, kind: EventKind::RtoFire, seg: una, cwnd, ssthresh });
            timer = None;
            xmit(t, una, EventKind::Retransmit, cwnd, ssthresh, &mut timer, &mut out, &mut data_at);
            fill(t, una, &mut nxt, cwnd, ssthresh, &mut timer, &mut out, &mut data_at, &mut xmit);
        }
    }
    None
}

fn as_evs(tl: &Timeline) -> Vec<Ev> {
    tl.events
        .iter()
        .map(|e| Ev {
            t: e.t.round() as u64,
            kind: e.kind,
            seg: e.seg,
            cwnd: e.cwnd_after,
            ssthresh: e.ssthresh_after,
        })
        .collect()
}

fn scenario(rtt: u64, n: u32, cwnd: f64, ssthresh: f64, rto: u64, losses: &BTreeSet<u64>) -> Scenario {
    Scenario {
        rtt: rtt as f64,
        num_segments: n,
        init_cwnd: cwnd,
        ssthresh0: ssthresh,
        rto: rto as f64,
        loss_ordinals: losses.clone(),
        ..Scenario::default()
    }
}

fn check(rtt: u64, n: u32, cwnd: f64, ssthresh: f64, rto: u64, losses: &BTreeSet<u64>) -> bool {
    let s = scenario(rtt, n, cwnd, ssthresh, rto, losses);
    let oracle = stepped(rtt, n, cwnd, ssthresh, rto, losses);
    let p = predict(&s);
    let m = measure(&s);
    match (oracle, p, m) {
        (None, Err(_), Err(_)) => false,
        (Some(o), Ok(p), Ok(m)) => {
            assert_eq!(as_evs(&p), o, "predict vs oracle for {s:?}");
            assert!(compare(&p, &m, 1e-9).is_empty(), "predict vs measure for {s:?}");
            assert_eq!(as_evs(&m), o, "measure vs oracle for {s:?}");
            true
        }
        (o, p, m) => panic!(
            "termination disagrees for {s:?}: oracle {} predict {} measure {}",
            o.is_some(),
            p.is_ok(),
            m.is_ok()
        ),
    }
}

#[test]
fn lab_scenario_matches_oracle() {
    assert!(check(20, 8, 1.0, 64.0, 200, &[6, 8].into()));
}

#[test]
fn lossless_grid() {
    for rtt in [2, 10, 20, 40] {
        for n in 0..40 {
            for cwnd in [1.0, 2.0, 3.0, 10.0] {
                for ssthresh in [2.0, 4.0, 64.0] {
                    check(rtt, n, cwnd, ssthresh, 200, &BTreeSet::new());
                }
            }
        }
    }
}

#[test]
fn random_loss_grid() {
    let mut rng = SplitMix64::new(0x5eed);
    let mut completed = 0;
    for _ in 0..2000 {
        let rtt = [10, 20, 40][rng.next_index(3)];
        let n = 1 + rng.next_index(40) as u32;
        let cwnd = [1.0, 2.0, 4.0][rng.next_index(3)];
        let ssthresh = [2.0, 8.0, 64.0][rng.next_index(3)];
        let rto = [3 * rtt, 100, 200][rng.next_index(3)];
        let losses: BTreeSet<u64> = (0..rng.next_index(5))
            .map(|_| 1 + rng.next_index(n as usize + 8) as u64)
            .collect();
        if check(rtt, n, cwnd, ssthresh, rto, &losses) {
            completed += 1;
        }
    }
    assert!(completed > 1500, "only {completed} scenarios completed");
}

#[test]
fn fast_retransmit_when_enough_dupacks() {
    // 20 segments, lose the 10th transmission: the window is large enough
    // for three duplicate ACKs to come back.
    let s = scenario(20, 20, 1.0, 64.0, 200, &[10].into());
    let tl = predict(&s).unwrap();
    assert_eq!(tl.of_kind(EventKind::EnterFastRecovery).count(), 1);
    assert_eq!(tl.of_kind(EventKind::RtoFire).count(), 0);
    let enter = tl
        .events
        .iter()
        .position(|e| e.kind == EventKind::EnterFastRecovery)
        .unwrap();
    let dups = tl.events[..enter]
        .iter()
        .filter(|e| e.kind == EventKind::DupackRcvd)
        .count();
    assert_eq!(dups, 3);
    assert_eq!(tl.events[enter + 1].kind, EventKind::Retransmit);
}
