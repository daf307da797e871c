//! C ABI for netedu.
//!
//! Every fallible function returns a [`NeteduStatus`]. On failure a message
//! is kept per thread and can be read with [`netedu_last_error`] until the
//! next failing call on that thread.
//!
//! Memory handed out by the library belongs to the caller: buffers are
//! released with [`netedu_buffer_free`], strings with [`netedu_string_free`]
//! and handles with their own `_free` function. Passing NULL to any `_free`
//! function is a no-op.

use std::cell::RefCell;
use std::collections::{BTreeSet, VecDeque};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use netedu::codec::{self, StuffedFrame};
use netedu::dissect::{self, LinkType};
use netedu::exercises::{Bank, ExerciseError, Submission};
use netedu::mtp::{
    decode_frame, encode_frame, FrameType, MtpError, MtpFrame, ReceiverState, SenderConfig, SenderState,
    MAX_WINDOW,
};
use netedu::newreno::{self, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeteduStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed input: bad framing, unknown frame type, bad escape.
    Decode = 3,
    /// CRC mismatch.
    Integrity = 4,
    /// The operation is not valid in the handle's current state.
    State = 5,
    NotFound = 6,
    Io = 7,
    /// A bug inside the library; the handle involved should be dropped.
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeteduLinkType {
    Ethernet = 0,
    RawIp = 1,
}

/// Library-owned byte buffer. An empty buffer has `data == NULL`.
#[repr(C)]
#[derive(Debug)]
pub struct NeteduBuffer {
    pub data: *mut u8,
    pub len: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NeteduFrameInfo {
    /// 0 = DATA, 1 = ACK, 2 = FIN.
    pub ftype: u8,
    pub seq: u8,
    pub window: u8,
}

/// Segment-level New Reno scenario. `losses` lists 1-based transmission
/// ordinals that the link drops.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NeteduScenario {
    pub rtt_ms: f64,
    pub num_segments: u32,
    pub init_cwnd: f64,
    pub ssthresh0: f64,
    pub rto_ms: f64,
    pub losses: *const u64,
    pub num_losses: usize,
}

/// MTP sender state plus a queue of encoded datagrams waiting to be sent.
pub struct NeteduSender {
    state: SenderState,
    outbox: VecDeque<Vec<u8>>,
}

pub struct NeteduReceiver {
    state: ReceiverState,
}

pub struct NeteduBank {
    bank: Bank,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NeteduStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn fail<T>(status: NeteduStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

impl From<MtpError> for Failure {
    fn from(e: MtpError) -> Self {
        let status = match e {
            MtpError::Integrity { .. } => NeteduStatus::Integrity,
            MtpError::Framing(_) | MtpError::UnknownType(_) => NeteduStatus::Decode,
            MtpError::InvalidFrame(_) => NeteduStatus::InvalidArgument,
            MtpError::Closed | MtpError::Aborted { .. } | MtpError::Stalled => NeteduStatus::State,
            MtpError::Io(_) => NeteduStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<ExerciseError> for Failure {
    fn from(e: ExerciseError) -> Self {
        let status = match e {
            ExerciseError::NotFound(_) => NeteduStatus::NotFound,
            ExerciseError::Input(_) => NeteduStatus::InvalidArgument,
            ExerciseError::Io { .. } => NeteduStatus::Io,
            ExerciseError::Config { .. } | ExerciseError::Parse { .. } | ExerciseError::Dissect(_) => {
                NeteduStatus::Decode
            }
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn run(f: impl FnOnce() -> FfiResult) -> NeteduStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NeteduStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NeteduStatus::Panic
        }
    }
}

unsafe fn input<'a>(data: *const u8, len: usize) -> FfiResult<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return fail(NeteduStatus::NullPointer, "input buffer is NULL");
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn input_str<'a>(s: *const c_char, what: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return fail(NeteduStatus::NullPointer, format!("{what} is NULL"));
    }
    CStr::from_ptr(s)
        .to_str()
        .or_else(|_| fail(NeteduStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    // SAFETY: callers pass either NULL or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(NeteduStatus::NullPointer, format!("{what} is NULL")))
}

fn handle<'a, T>(p: *mut T) -> FfiResult<&'a mut T> {
    out_ptr(p, "handle")
}

fn to_buffer(v: Vec<u8>) -> NeteduBuffer {
    if v.is_empty() {
        return NeteduBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
    }
    let len = v.len();
    let data = Box::into_raw(v.into_boxed_slice()) as *mut u8;
    NeteduBuffer { data, len }
}

fn empty_buffer() -> NeteduBuffer {
    to_buffer(Vec::new())
}

fn to_cstring(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failure on this thread, or NULL. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn netedu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn netedu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `buf` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn netedu_buffer_free(buf: NeteduBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn netedu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// CRC-32 (IEEE 802.3) of `len` bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_crc32(data: *const u8, len: usize, out: *mut u32) -> NeteduStatus {
    run(|| {
        let bytes = input(data, len)?;
        *out_ptr(out, "out")? = codec::crc32(bytes);
        Ok(())
    })
}

/// Wraps `payload` in FLAG bytes with ESC stuffing.
///
/// # Safety
/// `payload` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_stuff(payload: *const u8, len: usize, out: *mut NeteduBuffer) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let frame = codec::stuff(input(payload, len)?).or_else(|e| fail(NeteduStatus::InvalidArgument, e.to_string()))?;
        *out = to_buffer(frame.into_bytes());
        Ok(())
    })
}

/// Inverse of [`netedu_stuff`]; `frame` includes both FLAG bytes.
///
/// # Safety
/// `frame` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_destuff(frame: *const u8, len: usize, out: *mut NeteduBuffer) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let raw = StuffedFrame::from_raw(input(frame, len)?.to_vec());
        let payload = codec::destuff(&raw).or_else(|e| fail(NeteduStatus::Decode, e.to_string()))?;
        *out = to_buffer(payload);
        Ok(())
    })
}

/// Encodes one MTP frame (header, payload, CRC-32).
///
/// # Safety
/// `payload` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_frame_encode(
    info: NeteduFrameInfo,
    payload: *const u8,
    len: usize,
    out: *mut NeteduBuffer,
) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let ftype = FrameType::try_from(info.ftype)?;
        let frame = MtpFrame {
            ftype,
            window: info.window,
            seq: info.seq,
            payload: input(payload, len)?.to_vec(),
        };
        *out = to_buffer(encode_frame(&frame)?);
        Ok(())
    })
}

/// Decodes and CRC-checks one MTP datagram. `payload` may be NULL when the
/// caller does not need it.
///
/// # Safety
/// `data` must point to `len` readable bytes; `info` must be writable and
/// `payload` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_frame_decode(
    data: *const u8,
    len: usize,
    info: *mut NeteduFrameInfo,
    payload: *mut NeteduBuffer,
) -> NeteduStatus {
    run(|| {
        let info = out_ptr(info, "info")?;
        let f = decode_frame(input(data, len)?)?;
        *info = NeteduFrameInfo {
            ftype: f.ftype as u8,
            seq: f.seq,
            window: f.window,
        };
        if let Some(p) = payload.as_mut() {
            *p = to_buffer(f.payload);
        }
        Ok(())
    })
}

/// Creates a sender. `window` is capped at 31; `rto_ms <= 0` selects the
/// default of 200 ms.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_new(window: u8, rto_ms: f64, out: *mut *mut NeteduSender) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        if window == 0 {
            return fail(NeteduStatus::InvalidArgument, "window must be at least 1");
        }
        let defaults = SenderConfig::default();
        let cfg = SenderConfig {
            max_window: window.min(MAX_WINDOW),
            rto: if rto_ms > 0.0 { rto_ms } else { defaults.rto },
            ..defaults
        };
        *out = Box::into_raw(Box::new(NeteduSender {
            state: SenderState::new(cfg),
            outbox: VecDeque::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a live sender.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_free(s: *mut NeteduSender) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn queue(s: &mut NeteduSender, frames: Vec<MtpFrame>) -> FfiResult {
    for f in frames {
        s.outbox.push_back(encode_frame(&f)?);
    }
    Ok(())
}

/// Queues application bytes for sending. Times are milliseconds on any
/// monotonic clock chosen by the caller.
///
/// # Safety
/// `s` must be a live sender; `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_write(
    s: *mut NeteduSender,
    data: *const u8,
    len: usize,
    now_ms: f64,
) -> NeteduStatus {
    run(|| {
        let s = handle(s)?;
        let frames = s.state.on_app_data(input(data, len)?, now_ms)?;
        queue(s, frames)
    })
}

/// Ends the stream; a FIN follows the queued data.
///
/// # Safety
/// `s` must be a live sender.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_close(s: *mut NeteduSender, now_ms: f64) -> NeteduStatus {
    run(|| {
        let s = handle(s)?;
        let frames = s.state.close(now_ms);
        queue(s, frames)
    })
}

/// Feeds a datagram received from the peer. Corrupted datagrams are
/// reported as `NETEDU_STATUS_INTEGRITY` and otherwise ignored.
///
/// # Safety
/// `s` must be a live sender; `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_on_datagram(
    s: *mut NeteduSender,
    data: *const u8,
    len: usize,
    now_ms: f64,
) -> NeteduStatus {
    run(|| {
        let s = handle(s)?;
        let f = decode_frame(input(data, len)?)?;
        if f.ftype == FrameType::Ack {
            let frames = s.state.on_ack(&f, now_ms);
            queue(s, frames)?;
        }
        Ok(())
    })
}

/// Runs the retransmission timer. Returns `NETEDU_STATUS_STATE` once a frame
/// has expired too often and the connection is aborted.
///
/// # Safety
/// `s` must be a live sender.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_on_tick(s: *mut NeteduSender, now_ms: f64) -> NeteduStatus {
    run(|| {
        let s = handle(s)?;
        let frames = s.state.on_tick(now_ms)?;
        queue(s, frames)
    })
}

/// Time of the next timer expiry, or a negative value when nothing is in
/// flight.
///
/// # Safety
/// `s` must be NULL or a live sender.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_next_timeout(s: *const NeteduSender) -> f64 {
    s.as_ref().and_then(|s| s.state.next_timeout()).unwrap_or(-1.0)
}

/// Pops the next datagram to send. Returns false, leaving `out` untouched,
/// when the queue is empty.
///
/// # Safety
/// `s` must be a live sender; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_poll(s: *mut NeteduSender, out: *mut NeteduBuffer) -> bool {
    let (Some(s), Some(out)) = (s.as_mut(), out.as_mut()) else {
        return false;
    };
    match s.outbox.pop_front() {
        Some(d) => {
            *out = to_buffer(d);
            true
        }
        None => false,
    }
}

/// True once every byte and the FIN have been acknowledged.
///
/// # Safety
/// `s` must be NULL or a live sender.
#[no_mangle]
pub unsafe extern "C" fn netedu_sender_is_finished(s: *const NeteduSender) -> bool {
    s.as_ref().is_some_and(|s| s.state.is_finished())
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_receiver_new(window: u8, out: *mut *mut NeteduReceiver) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        if window == 0 {
            return fail(NeteduStatus::InvalidArgument, "window must be at least 1");
        }
        *out = Box::into_raw(Box::new(NeteduReceiver {
            state: ReceiverState::new(window),
        }));
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a live receiver.
#[no_mangle]
pub unsafe extern "C" fn netedu_receiver_free(r: *mut NeteduReceiver) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Feeds a datagram from the sender. On success `ack` holds the encoded ACK
/// to send back (empty for incoming ACKs) and `data` the bytes released in
/// order. On failure both are set empty.
///
/// # Safety
/// `r` must be a live receiver; `data_in` must point to `len` readable
/// bytes; `ack` and `data` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_receiver_on_datagram(
    r: *mut NeteduReceiver,
    data_in: *const u8,
    len: usize,
    ack: *mut NeteduBuffer,
    data: *mut NeteduBuffer,
) -> NeteduStatus {
    run(|| {
        let r = handle(r)?;
        let ack = out_ptr(ack, "ack")?;
        let data = out_ptr(data, "data")?;
        *ack = empty_buffer();
        *data = empty_buffer();
        let f = decode_frame(input(data_in, len)?)?;
        let (reply, delivered) = r.state.on_frame(&f);
        if let Some(reply) = reply {
            *ack = to_buffer(encode_frame(&reply)?);
        }
        *data = to_buffer(delivered);
        Ok(())
    })
}

/// True after the FIN has been received in order.
///
/// # Safety
/// `r` must be NULL or a live receiver.
#[no_mangle]
pub unsafe extern "C" fn netedu_receiver_is_closed(r: *const NeteduReceiver) -> bool {
    r.as_ref().is_some_and(|r| r.state.is_closed())
}

unsafe fn scenario(s: *const NeteduScenario) -> FfiResult<Scenario> {
    let Some(s) = s.as_ref() else {
        return fail(NeteduStatus::NullPointer, "scenario is NULL");
    };
    let losses: BTreeSet<u64> = if s.num_losses == 0 {
        BTreeSet::new()
    } else if s.losses.is_null() {
        return fail(NeteduStatus::NullPointer, "losses is NULL");
    } else {
        std::slice::from_raw_parts(s.losses, s.num_losses).iter().copied().collect()
    };
    Ok(Scenario {
        rtt: s.rtt_ms,
        num_segments: s.num_segments,
        init_cwnd: s.init_cwnd,
        ssthresh0: s.ssthresh0,
        rto: s.rto_ms,
        loss_ordinals: losses,
        ..Scenario::default()
    })
}

unsafe fn timeline(
    s: *const NeteduScenario,
    out: *mut *mut c_char,
    f: fn(&Scenario) -> Result<newreno::Timeline, newreno::NewRenoError>,
) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let sc = scenario(s)?;
        let tl = f(&sc).or_else(|e| fail(NeteduStatus::InvalidArgument, e.to_string()))?;
        *out = to_cstring(tl.to_text());
        Ok(())
    })
}

/// Analytic New Reno timeline as text, one event per line.
///
/// # Safety
/// `s` must point to a valid scenario; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_newreno_predict(s: *const NeteduScenario, out: *mut *mut c_char) -> NeteduStatus {
    timeline(s, out, newreno::predict)
}

/// Timeline measured by simulating the scenario over a lossy link.
///
/// # Safety
/// `s` must point to a valid scenario; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_newreno_measure(s: *const NeteduScenario, out: *mut *mut c_char) -> NeteduStatus {
    timeline(s, out, newreno::measure)
}

/// Loads every exercise in `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_bank_open(dir: *const c_char, out: *mut *mut NeteduBank) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let bank = Bank::load(input_str(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(NeteduBank { bank }));
        Ok(())
    })
}

/// # Safety
/// `b` must be NULL or a live bank.
#[no_mangle]
pub unsafe extern "C" fn netedu_bank_free(b: *mut NeteduBank) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Student view of exercise `id` instantiated with `seed`, as JSON.
///
/// # Safety
/// `b` must be a live bank; `id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_bank_render(
    b: *mut NeteduBank,
    id: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> NeteduStatus {
    run(|| {
        let b = handle(b)?;
        let out = out_ptr(out, "out")?;
        let ex = b.bank.get(input_str(id, "id")?)?;
        let view = ex.render(&ex.instantiate(seed)?)?;
        *out = to_cstring(view.to_string());
        Ok(())
    })
}

/// Grades a JSON submission such as `{"choice":2}` against the instance of
/// `id` drawn with `seed`; writes the verdict as JSON.
///
/// # Safety
/// `b` must be a live bank; `id` and `submission` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_bank_grade(
    b: *mut NeteduBank,
    id: *const c_char,
    seed: u64,
    submission: *const c_char,
    out: *mut *mut c_char,
) -> NeteduStatus {
    run(|| {
        let b = handle(b)?;
        let out = out_ptr(out, "out")?;
        let ex = b.bank.get(input_str(id, "id")?)?;
        let sub: Submission = serde_json::from_str(input_str(submission, "submission")?)
            .or_else(|e| fail(NeteduStatus::InvalidArgument, format!("malformed submission: {e}")))?;
        let verdict = ex.grade(&ex.instantiate(seed)?, &sub)?;
        let json = serde_json::to_string(&verdict).or_else(|e| fail(NeteduStatus::Io, e.to_string()))?;
        *out = to_cstring(json);
        Ok(())
    })
}

/// Dissects one packet and writes the canonical field tree as text.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn netedu_dissect(
    data: *const u8,
    len: usize,
    link: NeteduLinkType,
    out: *mut *mut c_char,
) -> NeteduStatus {
    run(|| {
        let out = out_ptr(out, "out")?;
        let link = match link {
            NeteduLinkType::Ethernet => LinkType::Ethernet,
            NeteduLinkType::RawIp => LinkType::RawIp,
        };
        *out = to_cstring(dissect::dissect_packet(input(data, len)?, link).render());
        Ok(())
    })
}
