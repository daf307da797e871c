//! MTP, a small reliable transport over UDP.
//!
//! Wire format (all integers big-endian):
//!
//! ```text
//!  0                   1                   2                   3
//!  +-----+---------+---------------+-------------------------------+
//!  |type | window  |      seq      |            length             |
//!  +-----+---------+---------------+-------------------------------+
//!  |                 payload (0..=512 bytes) ...                   |
//!  +---------------------------------------------------------------+
//!  |                 CRC-32 of header and payload                  |
//!  +---------------------------------------------------------------+
//! ```
//!
//! Sequence numbers are 8 bits, windows at most 31 frames. ACKs are
//! cumulative and carry the next expected sequence number. Losses are
//! repaired by a fixed retransmission timeout and by fast retransmit on the
//! third duplicate ACK. The receiver buffers out-of-order frames within its
//! window and delivers bytes to the application strictly in order.
//!
//! The state machines hold no I/O and no clock: every input carries `now`.

use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::{self, Write};
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::codec::crc32;
use crate::linksim::{Direction, EventLog, Impairer, ImpairmentConfig, Millis};

pub const MAX_PAYLOAD: usize = 512;
pub const MAX_WINDOW: u8 = 31;
pub const HEADER_LEN: usize = 4;
pub const CRC_LEN: usize = 4;
pub const DEFAULT_RTO: Millis = 200.0;
pub const FAST_RETRANSMIT_THRESHOLD: u32 = 3;
pub const MAX_RETRANSMISSIONS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MtpError {
    #[error("integrity error: crc {actual:#010x} does not match {expected:#010x}")]
    Integrity { expected: u32, actual: u32 },
    #[error("framing error: {0}")]
    Framing(String),
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("invalid frame: {0}")]
    InvalidFrame(&'static str),
    #[error("connection already closed for sending")]
    Closed,
    #[error("connection aborted: frame {seq} expired {expiries} times")]
    Aborted { seq: u8, expiries: u32 },
    #[error("transfer stalled with no pending events")]
    Stalled,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for MtpError {
    fn from(e: io::Error) -> Self {
        MtpError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Data = 0,
    Ack = 1,
    Fin = 2,
}

impl TryFrom<u8> for FrameType {
    type Error = MtpError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(FrameType::Data),
            1 => Ok(FrameType::Ack),
            2 => Ok(FrameType::Fin),
            other => Err(MtpError::UnknownType(other)),
        }
    }
}

/// A decoded frame. The length and CRC fields are derived on encode and
/// checked on decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MtpFrame {
    pub ftype: FrameType,
    pub window: u8,
    pub seq: u8,
    pub payload: Vec<u8>,
}

impl MtpFrame {
    pub fn data(seq: u8, window: u8, payload: Vec<u8>) -> Self {
        Self {
            ftype: FrameType::Data,
            window,
            seq,
            payload,
        }
    }

    pub fn ack(seq: u8, window: u8) -> Self {
        Self {
            ftype: FrameType::Ack,
            window,
            seq,
            payload: Vec::new(),
        }
    }

    pub fn fin(seq: u8, window: u8) -> Self {
        Self {
            ftype: FrameType::Fin,
            window,
            seq,
            payload: Vec::new(),
        }
    }

    pub fn length(&self) -> u16 {
        self.payload.len() as u16
    }

    fn header(&self) -> [u8; HEADER_LEN] {
        let len = self.length().to_be_bytes();
        [((self.ftype as u8) << 5) | self.window, self.seq, len[0], len[1]]
    }

    pub fn crc(&self) -> u32 {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.payload.len());
        buf.extend_from_slice(&self.header());
        buf.extend_from_slice(&self.payload);
        crc32(&buf)
    }

    pub fn validate(&self) -> Result<(), MtpError> {
        if self.window > MAX_WINDOW {
            return Err(MtpError::InvalidFrame("window exceeds 31"));
        }
        if self.payload.len() > MAX_PAYLOAD {
            return Err(MtpError::InvalidFrame("payload exceeds 512 bytes"));
        }
        if self.ftype != FrameType::Data && !self.payload.is_empty() {
            return Err(MtpError::InvalidFrame("ACK and FIN frames carry no payload"));
        }
        Ok(())
    }
}

pub fn encode_frame(f: &MtpFrame) -> Result<Vec<u8>, MtpError> {
    f.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + f.payload.len() + CRC_LEN);
    out.extend_from_slice(&f.header());
    out.extend_from_slice(&f.payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<MtpFrame, MtpError> {
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(MtpError::Framing(format!(
            "datagram of {} bytes is shorter than the 8 byte minimum",
            bytes.len()
        )));
    }
    let length = usize::from(u16::from_be_bytes([bytes[2], bytes[3]]));
    if length > MAX_PAYLOAD || HEADER_LEN + length + CRC_LEN != bytes.len() {
        return Err(MtpError::Framing(format!(
            "length field {length} inconsistent with datagram of {} bytes",
            bytes.len()
        )));
    }
    let body = &bytes[..HEADER_LEN + length];
    let tail = &bytes[HEADER_LEN + length..];
    let expected = u32::from_be_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let actual = crc32(body);
    if expected != actual {
        return Err(MtpError::Integrity { expected, actual });
    }
    let ftype = FrameType::try_from(bytes[0] >> 5)?;
    let frame = MtpFrame {
        ftype,
        window: bytes[0] & 0x1F,
        seq: bytes[1],
        payload: bytes[HEADER_LEN..HEADER_LEN + length].to_vec(),
    };
    if ftype != FrameType::Data && length != 0 {
        return Err(MtpError::Framing("ACK/FIN frame with non-zero length".into()));
    }
    Ok(frame)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub ftype: FrameType,
    pub payload: Vec<u8>,
    pub send_time: Millis,
    pub retransmit_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenderConfig {
    /// Upper bound on frames in flight, independent of the peer's window.
    pub max_window: u8,
    /// Window assumed before the first ACK arrives.
    pub initial_peer_window: u8,
    pub rto: Millis,
}

impl Default for SenderConfig {
    fn default() -> Self {
        Self {
            max_window: MAX_WINDOW,
            initial_peer_window: MAX_WINDOW,
            rto: DEFAULT_RTO,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SenderStats {
    pub data_frames: u64,
    pub fin_frames: u64,
    pub retransmissions: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    pub acks_received: u64,
    pub acks_ignored: u64,
    pub max_in_flight: usize,
}

/// Sliding-window sender.
#[derive(Debug, Clone)]
pub struct SenderState {
    cfg: SenderConfig,
    base_seq: u8,
    next_seq: u8,
    in_flight: VecDeque<InFlight>,
    peer_window: u8,
    dup_ack_count: u32,
    queue: VecDeque<u8>,
    fin_requested: bool,
    fin_sent: bool,
    finished: bool,
    stats: SenderStats,
}

impl SenderState {
    pub fn new(cfg: SenderConfig) -> Self {
        Self {
            cfg,
            base_seq: 0,
            next_seq: 0,
            in_flight: VecDeque::new(),
            peer_window: cfg.initial_peer_window.min(MAX_WINDOW),
            dup_ack_count: 0,
            queue: VecDeque::new(),
            fin_requested: false,
            fin_sent: false,
            finished: false,
            stats: SenderStats::default(),
        }
    }

    pub fn next_seq(&self) -> u8 {
        self.next_seq
    }

    pub fn peer_window(&self) -> u8 {
        self.peer_window
    }

    pub fn dup_ack_count(&self) -> u32 {
        self.dup_ack_count
    }

    pub fn queued_bytes(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> SenderStats {
        self.stats
    }

    /// In-flight frames with their sequence numbers, oldest first.
    pub fn in_flight(&self) -> impl Iterator<Item = (u8, &InFlight)> {
        self.in_flight
            .iter()
            .enumerate()
            .map(move |(i, f)| (self.base_seq.wrapping_add(i as u8), f))
    }

    pub fn in_flight_len(&self) -> usize {
        self.in_flight.len()
    }

    /// True once the FIN has been acknowledged.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Current limit on frames in flight.
    pub fn effective_window(&self) -> usize {
        usize::from(self.peer_window.min(self.cfg.max_window).min(MAX_WINDOW))
    }

    /// Earliest time at which [`SenderState::on_tick`] has work to do.
    pub fn next_timeout(&self) -> Option<Millis> {
        self.in_flight
            .iter()
            .map(|f| f.send_time + self.cfg.rto)
            .min_by(f64::total_cmp)
    }

    pub fn on_app_data(&mut self, data: &[u8], now: Millis) -> Result<Vec<MtpFrame>, MtpError> {
        if self.fin_requested {
            return Err(MtpError::Closed);
        }
        self.queue.extend(data);
        Ok(self.fill_window(now))
    }

    /// Requests an orderly close; the FIN goes out once queued data is sent.
    pub fn close(&mut self, now: Millis) -> Vec<MtpFrame> {
        self.fin_requested = true;
        self.fill_window(now)
    }

    fn fill_window(&mut self, now: Millis) -> Vec<MtpFrame> {
        let mut out = Vec::new();
        while self.in_flight.len() < self.effective_window() {
            let frame = if !self.queue.is_empty() {
                let n = self.queue.len().min(MAX_PAYLOAD);
                let payload: Vec<u8> = self.queue.drain(..n).collect();
                self.stats.data_frames += 1;
                MtpFrame::data(self.next_seq, self.cfg.max_window, payload)
            } else if self.fin_requested && !self.fin_sent {
                self.fin_sent = true;
                self.stats.fin_frames += 1;
                MtpFrame::fin(self.next_seq, self.cfg.max_window)
            } else {
                break;
            };
            self.in_flight.push_back(InFlight {
                ftype: frame.ftype,
                payload: frame.payload.clone(),
                send_time: now,
                retransmit_count: 0,
            });
            self.next_seq = self.next_seq.wrapping_add(1);
            out.push(frame);
        }
        self.stats.max_in_flight = self.stats.max_in_flight.max(self.in_flight.len());
        out
    }

    fn rebuild(&self, index: usize) -> MtpFrame {
        let f = &self.in_flight[index];
        MtpFrame {
            ftype: f.ftype,
            window: self.cfg.max_window,
            seq: self.base_seq.wrapping_add(index as u8),
            payload: f.payload.clone(),
        }
    }

    fn retransmit(&mut self, index: usize, now: Millis) -> MtpFrame {
        let f = &mut self.in_flight[index];
        f.send_time = now;
        f.retransmit_count += 1;
        self.stats.retransmissions += 1;
        self.rebuild(index)
    }

    /// Processes a cumulative ACK carrying the next expected sequence.
    pub fn on_ack(&mut self, ack: &MtpFrame, now: Millis) -> Vec<MtpFrame> {
        if ack.ftype != FrameType::Ack {
            return Vec::new();
        }
        self.stats.acks_received += 1;
        let advance = usize::from(ack.seq.wrapping_sub(self.base_seq));
        if advance > self.in_flight.len() {
            log::debug!(
                "ignoring ack {} outside in-flight span [{}, {})",
                ack.seq,
                self.base_seq,
                self.next_seq
            );
            self.stats.acks_ignored += 1;
            return Vec::new();
        }
        self.peer_window = ack.window.min(MAX_WINDOW);
        let mut out = Vec::new();
        if advance > 0 {
            self.in_flight.drain(..advance);
            self.base_seq = ack.seq;
            self.dup_ack_count = 0;
            if self.fin_sent && self.in_flight.is_empty() && self.queue.is_empty() {
                self.finished = true;
            }
        } else if !self.in_flight.is_empty() {
            self.dup_ack_count += 1;
            if self.dup_ack_count == FAST_RETRANSMIT_THRESHOLD {
                self.dup_ack_count = 0;
                self.stats.fast_retransmits += 1;
                out.push(self.retransmit(0, now));
            }
        }
        out.extend(self.fill_window(now));
        out
    }

    /// Retransmits every in-flight frame whose timer has expired.
    ///
    /// The connection aborts on the expiry that would be the
    /// [`MAX_RETRANSMISSIONS`]-th retransmission of one frame.
    pub fn on_tick(&mut self, now: Millis) -> Result<Vec<MtpFrame>, MtpError> {
        let mut out = Vec::new();
        for i in 0..self.in_flight.len() {
            let f = &self.in_flight[i];
            if now >= f.send_time + self.cfg.rto {
                if f.retransmit_count + 1 >= MAX_RETRANSMISSIONS {
                    return Err(MtpError::Aborted {
                        seq: self.base_seq.wrapping_add(i as u8),
                        expiries: f.retransmit_count + 1,
                    });
                }
                self.stats.timeouts += 1;
                out.push(self.retransmit(i, now));
            }
        }
        Ok(out)
    }
}

/// Receiver with in-window reordering buffer and in-order delivery.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    expected_seq: u8,
    buffer: HashMap<u8, Vec<u8>>,
    local_window: u8,
    delivered_bytes: u64,
    fin_received: bool,
}

impl ReceiverState {
    pub fn new(local_window: u8) -> Self {
        Self {
            expected_seq: 0,
            buffer: HashMap::new(),
            local_window: local_window.min(MAX_WINDOW),
            delivered_bytes: 0,
            fin_received: false,
        }
    }

    pub fn expected_seq(&self) -> u8 {
        self.expected_seq
    }

    pub fn local_window(&self) -> u8 {
        self.local_window
    }

    pub fn buffered(&self) -> impl Iterator<Item = u8> + '_ {
        self.buffer.keys().copied()
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    /// True after an in-order FIN: the peer has finished sending.
    pub fn is_closed(&self) -> bool {
        self.fin_received
    }

    fn current_ack(&self) -> MtpFrame {
        MtpFrame::ack(self.expected_seq, self.local_window)
    }

    /// Handles a frame that already passed its CRC check. Returns the ACK to
    /// send (none for incoming ACKs) and bytes released to the application.
    pub fn on_frame(&mut self, f: &MtpFrame) -> (Option<MtpFrame>, Vec<u8>) {
        let offset = f.seq.wrapping_sub(self.expected_seq);
        let mut delivered = Vec::new();
        match f.ftype {
            FrameType::Ack => return (None, delivered),
            FrameType::Fin => {
                if offset == 0 && !self.fin_received {
                    self.fin_received = true;
                    self.expected_seq = self.expected_seq.wrapping_add(1);
                }
            }
            FrameType::Data if self.fin_received => {}
            FrameType::Data => {
                if offset == 0 {
                    delivered.extend_from_slice(&f.payload);
                    self.expected_seq = self.expected_seq.wrapping_add(1);
                    while let Some(p) = self.buffer.remove(&self.expected_seq) {
                        delivered.extend_from_slice(&p);
                        self.expected_seq = self.expected_seq.wrapping_add(1);
                    }
                } else if offset < self.local_window {
                    self.buffer.entry(f.seq).or_insert_with(|| f.payload.clone());
                }
            }
        }
        self.delivered_bytes += delivered.len() as u64;
        (Some(self.current_ack()), delivered)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferOptions {
    pub sender: SenderConfig,
    pub receiver_window: u8,
    /// Simulated-time guard against runaway runs.
    pub max_sim_time: Millis,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            sender: SenderConfig::default(),
            receiver_window: MAX_WINDOW,
            max_sim_time: 3_600_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    #[serde(skip)]
    pub delivered: Vec<u8>,
    pub delivered_len: usize,
    pub sender: SenderStats,
    pub acks_sent: u64,
    pub completion_time: Millis,
    #[serde(skip)]
    pub log: EventLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventClass {
    Arrival = 0,
    Tick = 1,
}

#[derive(Debug)]
struct SimEvent {
    at: Millis,
    class: EventClass,
    order: u64,
    direction: Direction,
    data: Vec<u8>,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for SimEvent {}
impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then(other.class.cmp(&self.class))
            .then(other.order.cmp(&self.order))
    }
}

/// Transfers `file` from a sender (endpoint a) to a receiver (endpoint b)
/// across a simulated impaired link, in simulated time.
pub fn transfer(
    file: &[u8],
    impairment: &ImpairmentConfig,
    opts: &TransferOptions,
) -> Result<TransferReport, MtpError> {
    impairment
        .validate()
        .map_err(|e| MtpError::Io(e.to_string()))?;
    let mut link: Impairer<Vec<u8>> = Impairer::new(impairment.clone());
    let mut sender = SenderState::new(opts.sender);
    let mut receiver = ReceiverState::new(opts.receiver_window);
    let mut delivered = Vec::with_capacity(file.len());
    let mut acks_sent = 0u64;
    let mut events = BinaryHeap::new();
    let mut tick_order = 0u64;
    let mut scheduled_tick: Option<Millis> = None;

    let send = |link: &mut Impairer<Vec<u8>>,
                    events: &mut BinaryHeap<SimEvent>,
                    now: Millis,
                    dir: Direction,
                    frames: Vec<MtpFrame>| {
        for f in frames {
            let bytes = encode_frame(&f).expect("state machines emit valid frames");
            for d in link.ingress(now, dir, bytes) {
                events.push(SimEvent {
                    at: d.at,
                    class: EventClass::Arrival,
                    order: d.order,
                    direction: d.direction,
                    data: d.payload,
                });
            }
        }
    };

    let mut now = 0.0;
    let mut frames = sender.on_app_data(file, now)?;
    frames.extend(sender.close(now));
    send(&mut link, &mut events, now, Direction::AToB, frames);

    while !sender.is_finished() {
        if let Some(t) = sender.next_timeout() {
            if scheduled_tick != Some(t) {
                scheduled_tick = Some(t);
                tick_order += 1;
                events.push(SimEvent {
                    at: t,
                    class: EventClass::Tick,
                    order: tick_order,
                    direction: Direction::AToB,
                    data: Vec::new(),
                });
            }
        }
        let Some(ev) = events.pop() else {
            if link.has_held() {
                let out = link.flush(now);
                for d in out {
                    events.push(SimEvent {
                        at: d.at,
                        class: EventClass::Arrival,
                        order: d.order,
                        direction: d.direction,
                        data: d.payload,
                    });
                }
                continue;
            }
            return Err(MtpError::Stalled);
        };
        now = ev.at;
        if now > opts.max_sim_time {
            return Err(MtpError::Stalled);
        }
        match (ev.class, ev.direction) {
            (EventClass::Tick, _) => {
                if scheduled_tick != Some(ev.at) {
                    continue;
                }
                scheduled_tick = None;
                let frames = sender.on_tick(now)?;
                send(&mut link, &mut events, now, Direction::AToB, frames);
            }
            (EventClass::Arrival, Direction::AToB) => {
                let Ok(frame) = decode_frame(&ev.data) else {
                    continue;
                };
                let (ack, bytes) = receiver.on_frame(&frame);
                delivered.extend_from_slice(&bytes);
                if let Some(ack) = ack {
                    acks_sent += 1;
                    send(&mut link, &mut events, now, Direction::BToA, vec![ack]);
                }
            }
            (EventClass::Arrival, Direction::BToA) => {
                let Ok(frame) = decode_frame(&ev.data) else {
                    continue;
                };
                let frames = sender.on_ack(&frame, now);
                send(&mut link, &mut events, now, Direction::AToB, frames);
            }
        }
    }

    Ok(TransferReport {
        delivered_len: delivered.len(),
        delivered,
        sender: sender.stats(),
        acks_sent,
        completion_time: now,
        log: link.into_log(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UdpSendReport {
    pub bytes: u64,
    pub stats: SenderStats,
    pub integrity_errors: u64,
    pub framing_errors: u64,
}

/// Sends `data` to `peer` over `socket` and waits for the FIN to be acked.
pub fn udp_send(
    socket: &UdpSocket,
    peer: SocketAddr,
    data: &[u8],
    cfg: SenderConfig,
) -> Result<UdpSendReport, (MtpError, UdpSendReport)> {
    let mut report = UdpSendReport {
        bytes: data.len() as u64,
        ..Default::default()
    };
    let start = Instant::now();
    let clock = || start.elapsed().as_secs_f64() * 1000.0;
    let mut sender = SenderState::new(cfg);
    let tx = |frames: Vec<MtpFrame>| -> io::Result<()> {
        for f in frames {
            socket.send_to(&encode_frame(&f).expect("valid frame"), peer)?;
        }
        Ok(())
    };
    let io_err = |e: io::Error, r: &UdpSendReport| (MtpError::from(e), *r);

    let mut frames = sender
        .on_app_data(data, clock())
        .map_err(|e| (e, report))?;
    frames.extend(sender.close(clock()));
    tx(frames).map_err(|e| io_err(e, &report))?;

    let mut buf = [0u8; 2048];
    while !sender.is_finished() {
        let wait = sender
            .next_timeout()
            .map(|t| (t - clock()).max(1.0))
            .unwrap_or(50.0)
            .min(50.0);
        socket
            .set_read_timeout(Some(Duration::from_secs_f64(wait / 1000.0)))
            .map_err(|e| io_err(e, &report))?;
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => match decode_frame(&buf[..n]) {
                Ok(ack) => {
                    let frames = sender.on_ack(&ack, clock());
                    tx(frames).map_err(|e| io_err(e, &report))?;
                }
                Err(MtpError::Integrity { .. }) => report.integrity_errors += 1,
                Err(_) => report.framing_errors += 1,
            },
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
            Err(e) => return Err(io_err(e, &report)),
        }
        report.stats = sender.stats();
        match sender.on_tick(clock()) {
            Ok(frames) => tx(frames).map_err(|e| io_err(e, &report))?,
            Err(e) => return Err((e, report)),
        }
    }
    report.stats = sender.stats();
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UdpRecvReport {
    pub bytes: u64,
    pub frames: u64,
    pub acks_sent: u64,
    pub integrity_errors: u64,
    pub framing_errors: u64,
}

/// Receives one transfer on `socket`, writing in-order bytes to `out`.
///
/// Returns after the FIN has been seen and `linger` has passed with no
/// further traffic, re-acknowledging retransmitted FINs meanwhile. An
/// `idle_timeout` bounds the wait for traffic before the FIN.
pub fn udp_recv<W: Write>(
    socket: &UdpSocket,
    out: &mut W,
    window: u8,
    linger: Duration,
    idle_timeout: Option<Duration>,
) -> Result<UdpRecvReport, MtpError> {
    let mut receiver = ReceiverState::new(window);
    let mut report = UdpRecvReport::default();
    let mut buf = [0u8; 2048];
    let mut last_activity = Instant::now();
    socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    loop {
        if receiver.is_closed() && last_activity.elapsed() >= linger {
            break;
        }
        if !receiver.is_closed() && idle_timeout.is_some_and(|t| last_activity.elapsed() >= t) {
            return Err(MtpError::Io("idle timeout waiting for data".into()));
        }
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                continue
            }
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => continue,
            Err(e) => return Err(e.into()),
        };
        last_activity = Instant::now();
        let frame = match decode_frame(&buf[..n]) {
            Ok(f) => f,
            Err(MtpError::Integrity { .. }) => {
                report.integrity_errors += 1;
                continue;
            }
            Err(_) => {
                report.framing_errors += 1;
                continue;
            }
        };
        report.frames += 1;
        let (ack, bytes) = receiver.on_frame(&frame);
        if !bytes.is_empty() {
            out.write_all(&bytes)?;
            report.bytes += bytes.len() as u64;
        }
        if let Some(ack) = ack {
            socket.send_to(&encode_frame(&ack).expect("valid ack"), from)?;
            report.acks_sent += 1;
        }
    }
    out.flush()?;
    Ok(report)
}
