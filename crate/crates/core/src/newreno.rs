//! Segment-level TCP New Reno send timelines.
//!
//! [`predict`] computes the timeline a New Reno sender produces in an
//! idealized scenario: one ACK per segment, no delayed ACKs, zero
//! transmission time, one-way delay of `rtt / 2` in each direction, and
//! losses given as 1-indexed transmission ordinals. [`measure`] runs an
//! independently written event-driven sender across the link simulator
//! with the same losses, and [`compare`] diffs the two.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::{Direction, DirectionFilter, Impairer, ImpairmentConfig, Millis};

/// Prediction gives up after this many round-trip times of simulated time.
pub const GUARD_RTTS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewRenoError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario did not complete within {0} ms of simulated time")]
    NonTerminating(Millis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub rtt: Millis,
    pub num_segments: u32,
    pub init_cwnd: f64,
    pub ssthresh0: f64,
    pub rto: Millis,
    pub loss_ordinals: BTreeSet<u64>,
    /// Segment size in bytes; informational only.
    pub mss: u32,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            rtt: 20.0,
            num_segments: 8,
            init_cwnd: 1.0,
            ssthresh0: 64.0,
            rto: 200.0,
            loss_ordinals: BTreeSet::new(),
            mss: 1460,
        }
    }
}

impl Scenario {
    /// The lab scenario: 20 ms RTT, 8 segments, the 6th and 8th lost.
    pub fn lab() -> Self {
        Self {
            loss_ordinals: [6, 8].into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NewRenoError> {
        if !(self.rtt > 0.0) {
            return Err(NewRenoError::InvalidScenario("rtt must be positive".into()));
        }
        if !(self.init_cwnd >= 1.0) {
            return Err(NewRenoError::InvalidScenario("init_cwnd must be at least 1".into()));
        }
        if !(self.rto > 0.0) {
            return Err(NewRenoError::InvalidScenario("rto must be positive".into()));
        }
        if self.loss_ordinals.contains(&0) {
            return Err(NewRenoError::InvalidScenario("loss ordinals are 1-indexed".into()));
        }
        Ok(())
    }

    fn guard(&self) -> Millis {
        GUARD_RTTS * self.rtt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Retransmit,
    AckRcvd,
    DupackRcvd,
    RtoFire,
    EnterFastRecovery,
    ExitFastRecovery,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Send => "send",
            EventKind::Retransmit => "retransmit",
            EventKind::AckRcvd => "ack_rcvd",
            EventKind::DupackRcvd => "dupack_rcvd",
            EventKind::RtoFire => "rto_fire",
            EventKind::EnterFastRecovery => "enter_fast_recovery",
            EventKind::ExitFastRecovery => "exit_fast_recovery",
        })
    }
}

/// One timeline entry. For ACK events `seg` is the highest cumulatively
/// acknowledged segment; for the other kinds it is the segment concerned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub t: Millis,
    pub kind: EventKind,
    pub seg: u32,
    pub cwnd_after: f64,
    pub ssthresh_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
}

impl Timeline {
    /// Tab-separated `t_ms kind seg cwnd ssthresh`, three decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&format!(
                "{:.3}\t{}\t{}\t{:.3}\t{:.3}\n",
                e.t, e.kind, e.seg, e.cwnd_after, e.ssthresh_after
            ));
        }
        s
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Time of the last event, i.e. when the final ACK arrived.
    pub fn completion_time(&self) -> Millis {
        self.events.last().map_or(0.0, |e| e.t)
    }
}

fn loss_floor(flight: u32) -> f64 {
    (f64::from(flight) / 2.0).max(2.0)
}

/// Pending ACK arrival at the sender.
#[derive(Debug, Clone, Copy)]
struct PendingAck {
    at: Millis,
    order: u64,
    next_expected: u32,
}

impl PartialEq for PendingAck {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for PendingAck {}
impl PartialOrd for PendingAck {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingAck {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then(other.order.cmp(&self.order))
    }
}

/// Predicts the New Reno timeline for `s`.
///
/// The channel is FIFO with a fixed delay, so the receiver's cumulative ACK
/// for each transmission is known the moment it is sent and arrives one RTT
/// later. ACK arrivals that coincide with a timer expiry are processed first.
#[allow(unused_assignments)]
pub fn predict(s: &Scenario) -> Result<Timeline, NewRenoError> {
    s.validate()?;
    let n = s.num_segments;
    let mut tl = Timeline::default();
    if n == 0 {
        return Ok(tl);
    }

    let mut cwnd = s.init_cwnd;
    let mut ssthresh = s.ssthresh0;
    let mut snd_una: u32 = 1;
    let mut snd_nxt: u32 = 1;
    let mut dupacks = 0u32;
    let mut recovery: Option<u32> = None;
    let mut deadline: Option<Millis> = None;
    let mut ordinal = 0u64;
    let mut acks: BinaryHeap<PendingAck> = BinaryHeap::new();
    let mut ack_order = 0u64;

    // receiver side
    let mut received = vec![false; n as usize + 2];
    let mut rcv_next: u32 = 1;

    let push = |tl: &mut Timeline, t, kind, seg, cwnd, ssthresh| {
        tl.events.push(TimelineEvent {
            t,
            kind,
            seg,
            cwnd_after: cwnd,
            ssthresh_after: ssthresh,
        })
    };

    // transmit one segment; returns nothing, schedules the ACK if delivered
    macro_rules! transmit {
        ($t:expr, $seg:expr, $kind:expr) => {{
            let seg: u32 = $seg;
            ordinal += 1;
            push(&mut tl, $t, $kind, seg, cwnd, ssthresh);
            if deadline.is_none() {
                deadline = Some($t + s.rto);
            }
            if !s.loss_ordinals.contains(&ordinal) {
                received[seg as usize] = true;
                while rcv_next <= n && received[rcv_next as usize] {
                    rcv_next += 1;
                }
                ack_order += 1;
                acks.push(PendingAck {
                    at: $t + s.rtt,
                    order: ack_order,
                    next_expected: rcv_next,
                });
            }
        }};
    }

    macro_rules! send_new {
        ($t:expr) => {{
            while snd_nxt <= n && f64::from(snd_nxt - snd_una) < cwnd.floor() {
                transmit!($t, snd_nxt, EventKind::Send);
                snd_nxt += 1;
            }
        }};
    }

    send_new!(0.0);

    while snd_una <= n {
        let next_ack = acks.peek().map(|a| a.at);
        let take_ack = match (next_ack, deadline) {
            (Some(a), Some(d)) => a <= d,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => return Err(NewRenoError::NonTerminating(s.guard())),
        };
        let now = if take_ack {
            next_ack.unwrap()
        } else {
            deadline.unwrap()
        };
        if now > s.guard() {
            return Err(NewRenoError::NonTerminating(s.guard()));
        }

        if take_ack {
            let ack = acks.pop().unwrap().next_expected;
            if ack > snd_una {
                let newly = ack - snd_una;
                snd_una = ack;
                dupacks = 0;
                match recovery {
                    Some(recover) if ack > recover => {
                        cwnd = ssthresh;
                        recovery = None;
                        push(&mut tl, now, EventKind::AckRcvd, ack - 1, cwnd, ssthresh);
                        push(&mut tl, now, EventKind::ExitFastRecovery, ack - 1, cwnd, ssthresh);
                    }
                    Some(_) => {
                        // partial ACK: deflate by the amount acked, add one back
                        cwnd = (cwnd - f64::from(newly) + 1.0).max(1.0);
                        push(&mut tl, now, EventKind::AckRcvd, ack - 1, cwnd, ssthresh);
                        transmit!(now, snd_una, EventKind::Retransmit);
                    }
                    None => {
                        if cwnd < ssthresh {
                            cwnd += 1.0;
                        } else {
                            cwnd += 1.0 / cwnd;
                        }
                        push(&mut tl, now, EventKind::AckRcvd, ack - 1, cwnd, ssthresh);
                    }
                }
                deadline = (snd_una < snd_nxt).then_some(now + s.rto);
            } else if ack == snd_una && snd_una < snd_nxt {
                if recovery.is_some() {
                    cwnd += 1.0;
                    push(&mut tl, now, EventKind::DupackRcvd, ack - 1, cwnd, ssthresh);
                } else {
                    dupacks += 1;
                    push(&mut tl, now, EventKind::DupackRcvd, ack - 1, cwnd, ssthresh);
                    if dupacks == 3 {
                        ssthresh = loss_floor(snd_nxt - snd_una);
                        cwnd = ssthresh + 3.0;
                        recovery = Some(snd_nxt - 1);
                        push(&mut tl, now, EventKind::EnterFastRecovery, snd_una, cwnd, ssthresh);
                        transmit!(now, snd_una, EventKind::Retransmit);
                    }
                }
            }
        } else {
            ssthresh = loss_floor(snd_nxt - snd_una);
            cwnd = 1.0;
            recovery = None;
            dupacks = 0;
            push(&mut tl, now, EventKind::RtoFire, snd_una, cwnd, ssthresh);
            deadline = None;
            transmit!(now, snd_una, EventKind::Retransmit);
        }
        if snd_una <= n {
            send_new!(now);
        }
    }
    Ok(tl)
}

/// Event-driven New Reno sender used by [`measure`].
#[derive(Debug, Clone)]
pub struct NewRenoSender {
    num_segments: u32,
    rto: Millis,
    cwnd: f64,
    ssthresh: f64,
    /// Lowest unacknowledged segment.
    una: u32,
    /// Next never-sent segment.
    nxt: u32,
    dup_count: u32,
    recover: Option<u32>,
    timer: Option<Millis>,
    timeline: Timeline,
}

impl NewRenoSender {
    pub fn new(s: &Scenario) -> Self {
        Self {
            num_segments: s.num_segments,
            rto: s.rto,
            cwnd: s.init_cwnd,
            ssthresh: s.ssthresh0,
            una: 1,
            nxt: 1,
            dup_count: 0,
            recover: None,
            timer: None,
            timeline: Timeline::default(),
        }
    }

    pub fn done(&self) -> bool {
        self.una > self.num_segments
    }

    pub fn timer(&self) -> Option<Millis> {
        self.timer
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn into_timeline(self) -> Timeline {
        self.timeline
    }

    fn log(&mut self, t: Millis, kind: EventKind, seg: u32) {
        self.timeline.events.push(TimelineEvent {
            t,
            kind,
            seg,
            cwnd_after: self.cwnd,
            ssthresh_after: self.ssthresh,
        });
    }

    fn emit(&mut self, now: Millis, seg: u32, kind: EventKind, out: &mut Vec<u32>) {
        self.log(now, kind, seg);
        if self.timer.is_none() {
            self.timer = Some(now + self.rto);
        }
        out.push(seg);
    }

    fn outstanding(&self) -> u32 {
        self.nxt - self.una
    }

    fn pump(&mut self, now: Millis, out: &mut Vec<u32>) {
        if self.done() {
            return;
        }
        while self.nxt <= self.num_segments && f64::from(self.outstanding()) < self.cwnd.floor() {
            let seg = self.nxt;
            self.nxt += 1;
            self.emit(now, seg, EventKind::Send, out);
        }
    }

    /// Initial window at time zero.
    pub fn start(&mut self, now: Millis) -> Vec<u32> {
        let mut out = Vec::new();
        self.pump(now, &mut out);
        out
    }

    /// Handles a cumulative ACK naming the next segment the receiver expects.
    pub fn on_ack(&mut self, now: Millis, next_expected: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let acked_upto = next_expected - 1;
        if next_expected > self.una {
            let newly = next_expected - self.una;
            self.una = next_expected;
            self.dup_count = 0;
            if let Some(recover) = self.recover {
                if next_expected > recover {
                    self.recover = None;
                    self.cwnd = self.ssthresh;
                    self.log(now, EventKind::AckRcvd, acked_upto);
                    self.log(now, EventKind::ExitFastRecovery, acked_upto);
                } else {
                    self.cwnd = (self.cwnd - f64::from(newly) + 1.0).max(1.0);
                    self.log(now, EventKind::AckRcvd, acked_upto);
                    let hole = self.una;
                    self.emit(now, hole, EventKind::Retransmit, &mut out);
                }
            } else {
                self.cwnd += if self.cwnd < self.ssthresh {
                    1.0
                } else {
                    1.0 / self.cwnd
                };
                self.log(now, EventKind::AckRcvd, acked_upto);
            }
            self.timer = if self.outstanding() > 0 {
                Some(now + self.rto)
            } else {
                None
            };
        } else if next_expected == self.una && self.outstanding() > 0 {
            if self.recover.is_some() {
                self.cwnd += 1.0;
                self.log(now, EventKind::DupackRcvd, acked_upto);
            } else {
                self.dup_count += 1;
                self.log(now, EventKind::DupackRcvd, acked_upto);
                if self.dup_count == 3 {
                    self.ssthresh = loss_floor(self.outstanding());
                    self.cwnd = self.ssthresh + 3.0;
                    self.recover = Some(self.nxt - 1);
                    self.log(now, EventKind::EnterFastRecovery, self.una);
                    let hole = self.una;
                    self.emit(now, hole, EventKind::Retransmit, &mut out);
                }
            }
        }
        self.pump(now, &mut out);
        out
    }

    pub fn on_timeout(&mut self, now: Millis) -> Vec<u32> {
        let mut out = Vec::new();
        self.ssthresh = loss_floor(self.outstanding());
        self.cwnd = 1.0;
        self.recover = None;
        self.dup_count = 0;
        self.timer = None;
        self.log(now, EventKind::RtoFire, self.una);
        let hole = self.una;
        self.emit(now, hole, EventKind::Retransmit, &mut out);
        self.pump(now, &mut out);
        out
    }
}

/// Cumulative-ACK receiver for [`measure`].
#[derive(Debug, Clone)]
struct SegmentReceiver {
    have: BTreeSet<u32>,
    next: u32,
}

impl SegmentReceiver {
    fn on_segment(&mut self, seg: u32) -> u32 {
        self.have.insert(seg);
        while self.have.contains(&self.next) {
            self.next += 1;
        }
        self.next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Packet {
    Data(u32),
    Ack(u32),
}

struct Queued {
    at: Millis,
    timer: bool,
    order: u64,
    packet: Packet,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then(other.timer.cmp(&self.timer))
            .then(other.order.cmp(&self.order))
    }
}

/// Runs [`NewRenoSender`] over the link simulator: data goes a→b with the
/// scenario's ordinal drops, ACKs come back b→a untouched, each direction
/// delayed by `rtt / 2`.
pub fn measure(s: &Scenario) -> Result<Timeline, NewRenoError> {
    s.validate()?;
    if s.num_segments == 0 {
        return Ok(Timeline::default());
    }
    let mut link: Impairer<Packet> = Impairer::new(ImpairmentConfig {
        base_delay: s.rtt / 2.0,
        drop_ordinals: s.loss_ordinals.clone(),
        direction: DirectionFilter::AToB,
        ..ImpairmentConfig::default()
    });
    let mut sender = NewRenoSender::new(s);
    let mut receiver = SegmentReceiver {
        have: BTreeSet::new(),
        next: 1,
    };
    let mut queue: BinaryHeap<Queued> = BinaryHeap::new();
    let mut armed: Option<Millis> = None;
    let mut timer_order = 0u64;

    fn forward(link: &mut Impairer<Packet>, queue: &mut BinaryHeap<Queued>, now: Millis, dir: Direction, p: Packet) {
        for d in link.ingress(now, dir, p) {
            queue.push(Queued {
                at: d.at,
                timer: false,
                order: d.order,
                packet: d.payload,
            });
        }
    }

    for seg in sender.start(0.0) {
        forward(&mut link, &mut queue, 0.0, Direction::AToB, Packet::Data(seg));
    }
    while !sender.done() {
        if let Some(t) = sender.timer() {
            if armed != Some(t) {
                armed = Some(t);
                timer_order += 1;
                queue.push(Queued {
                    at: t,
                    timer: true,
                    order: timer_order,
                    packet: Packet::Ack(0),
                });
            }
        } else {
            armed = None;
        }
        let Some(ev) = queue.pop() else {
            return Err(NewRenoError::NonTerminating(s.guard()));
        };
        let now = ev.at;
        if now > s.guard() {
            return Err(NewRenoError::NonTerminating(s.guard()));
        }
        if ev.timer {
            if armed == Some(now) && sender.timer() == Some(now) {
                armed = None;
                for seg in sender.on_timeout(now) {
                    forward(&mut link, &mut queue, now, Direction::AToB, Packet::Data(seg));
                }
            }
            continue;
        }
        match ev.packet {
            Packet::Data(seg) => {
                let ack = receiver.on_segment(seg);
                forward(&mut link, &mut queue, now, Direction::BToA, Packet::Ack(ack));
            }
            Packet::Ack(next) => {
                for seg in sender.on_ack(now, next) {
                    forward(&mut link, &mut queue, now, Direction::AToB, Packet::Data(seg));
                }
            }
        }
    }
    Ok(sender.into_timeline())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TimelineDiff {
    pub missing: Vec<TimelineEvent>,
    pub extra: Vec<TimelineEvent>,
    /// `(predicted, measured)` pairs whose times differ by more than the
    /// tolerance.
    pub mistimed: Vec<(TimelineEvent, TimelineEvent)>,
}

impl TimelineDiff {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.mistimed.is_empty()
    }
}

/// Aligns events by `(kind, seg)` occurrence order and reports differences.
pub fn compare(predicted: &Timeline, measured: &Timeline, tol: Millis) -> TimelineDiff {
    use std::collections::HashMap;
    let mut by_key: HashMap<(EventKind, u32), Vec<&TimelineEvent>> = HashMap::new();
    for e in &measured.events {
        by_key.entry((e.kind, e.seg)).or_default().push(e);
    }
    let mut used: HashMap<(EventKind, u32), usize> = HashMap::new();
    let mut diff = TimelineDiff::default();
    for p in &predicted.events {
        let key = (p.kind, p.seg);
        let idx = used.entry(key).or_insert(0);
        match by_key.get(&key).and_then(|v| v.get(*idx)) {
            Some(m) => {
                if (p.t - m.t).abs() > tol {
                    diff.mistimed.push((p.clone(), (*m).clone()));
                }
            }
            None => diff.missing.push(p.clone()),
        }
        *idx += 1;
    }
    for (key, events) in &by_key {
        let matched = used.get(key).copied().unwrap_or(0);
        diff.extra.extend(events.iter().skip(matched).map(|e| (*e).clone()));
    }
    diff.extra.sort_by(|a, b| a.t.total_cmp(&b.t));
    diff
}
