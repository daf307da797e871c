use std::ffi::{CStr, CString};
use std::ptr;

use netedu::newreno::{predict, Scenario};
use netedu_ffi::*;

fn bytes(b: &NeteduBuffer) -> Vec<u8> {
    if b.data.is_null() {
        Vec::new()
    } else {
        unsafe { std::slice::from_raw_parts(b.data, b.len) }.to_vec()
    }
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { netedu_string_free(p) };
    s
}

fn empty() -> NeteduBuffer {
    NeteduBuffer { data: ptr::null_mut(), len: 0 }
}

/// Drives a sender/receiver pair through a channel that drops, duplicates
/// and corrupts datagrams on a fixed pattern.
#[test]
fn transfer_through_handles() {
    let file: Vec<u8> = (0..120_000u32).map(|i| (i ^ (i >> 7)) as u8).collect();
    let mut tx = ptr::null_mut();
    let mut rx = ptr::null_mut();
    unsafe {
        assert_eq!(netedu_sender_new(8, 0.0, &mut tx), NeteduStatus::Ok);
        assert_eq!(netedu_receiver_new(31, &mut rx), NeteduStatus::Ok);
        assert_eq!(netedu_sender_write(tx, file.as_ptr(), file.len(), 0.0), NeteduStatus::Ok);
        assert_eq!(netedu_sender_close(tx, 0.0), NeteduStatus::Ok);
        assert_eq!(netedu_sender_write(tx, file.as_ptr(), 1, 0.0), NeteduStatus::State);
    }
    let mut got = Vec::new();
    let mut now = 0.0;
    let mut n = 0u32;
    let mut integrity = 0;
    while !unsafe { netedu_sender_is_finished(tx) } {
        assert!(now < 1e7, "transfer stalled");
        let mut moved = false;
        let mut d = empty();
        while unsafe { netedu_sender_poll(tx, &mut d) } {
            moved = true;
            n += 1;
            let mut wire = bytes(&d);
            unsafe { netedu_buffer_free(std::mem::replace(&mut d, empty())) };
            if n.is_multiple_of(11) {
                continue;
            }
            if n.is_multiple_of(13) {
                wire[5] ^= 0x40;
            }
            let copies = if n.is_multiple_of(17) { 2 } else { 1 };
            for _ in 0..copies {
                let (mut ack, mut data) = (empty(), empty());
                let s = unsafe { netedu_receiver_on_datagram(rx, wire.as_ptr(), wire.len(), &mut ack, &mut data) };
                if s == NeteduStatus::Integrity {
                    integrity += 1;
                    assert!(ack.data.is_null() && data.data.is_null());
                    continue;
                }
                assert_eq!(s, NeteduStatus::Ok);
                got.extend(bytes(&data));
                let a = bytes(&ack);
                unsafe {
                    netedu_buffer_free(ack);
                    netedu_buffer_free(data);
                    assert_eq!(netedu_sender_on_datagram(tx, a.as_ptr(), a.len(), now), NeteduStatus::Ok);
                }
            }
        }
        if !moved {
            let t = unsafe { netedu_sender_next_timeout(tx) };
            assert!(t >= 0.0);
            now = f64::max(now, t);
            assert_eq!(unsafe { netedu_sender_on_tick(tx, now) }, NeteduStatus::Ok);
        }
    }
    assert!(integrity > 0);
    assert_eq!(got, file);
    assert!(unsafe { netedu_receiver_is_closed(rx) });
    unsafe {
        netedu_sender_free(tx);
        netedu_receiver_free(rx);
        netedu_sender_free(ptr::null_mut());
    }
}

#[test]
fn sender_aborts_after_repeated_expiry() {
    let mut tx = ptr::null_mut();
    unsafe {
        assert_eq!(netedu_sender_new(4, 100.0, &mut tx), NeteduStatus::Ok);
        assert_eq!(netedu_sender_write(tx, b"x".as_ptr(), 1, 0.0), NeteduStatus::Ok);
        let mut status = NeteduStatus::Ok;
        let mut now = 0.0;
        for _ in 0..20 {
            now = netedu_sender_next_timeout(tx).max(now);
            status = netedu_sender_on_tick(tx, now);
            if status != NeteduStatus::Ok {
                break;
            }
        }
        assert_eq!(status, NeteduStatus::State);
        let msg = CStr::from_ptr(netedu_last_error()).to_string_lossy();
        assert!(msg.contains("aborted"), "{msg}");
        netedu_sender_free(tx);
    }
}

#[test]
fn newreno_text_matches_library() {
    let losses = [6u64, 8];
    let sc = NeteduScenario {
        rtt_ms: 20.0,
        num_segments: 8,
        init_cwnd: 1.0,
        ssthresh0: 64.0,
        rto_ms: 200.0,
        losses: losses.as_ptr(),
        num_losses: 2,
    };
    let mut p = ptr::null_mut();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(netedu_newreno_predict(&sc, &mut p), NeteduStatus::Ok);
        assert_eq!(netedu_newreno_measure(&sc, &mut m), NeteduStatus::Ok);
    }
    let want = predict(&Scenario::lab()).unwrap().to_text();
    assert_eq!(take_string(p), want);
    assert_eq!(take_string(m), want);
    let bad = NeteduScenario { rtt_ms: -1.0, ..sc };
    assert_eq!(unsafe { netedu_newreno_predict(&bad, &mut p) }, NeteduStatus::InvalidArgument);
}

#[test]
fn bank_render_and_grade() {
    let dir = CString::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/bank")).unwrap();
    let mut bank = ptr::null_mut();
    assert_eq!(unsafe { netedu_bank_open(dir.as_ptr(), &mut bank) }, NeteduStatus::Ok);
    let id = CString::new("reorder-handshake").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { netedu_bank_render(bank, id.as_ptr(), 4, &mut out) }, NeteduStatus::Ok);
    let view: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(view["packets"].as_array().unwrap().len(), 3);
    let mut correct = 0;
    for order in ["[0,1,2]", "[0,2,1]", "[1,0,2]", "[1,2,0]", "[2,0,1]", "[2,1,0]"] {
        let sub = CString::new(format!("{{\"order\":{order}}}")).unwrap();
        assert_eq!(unsafe { netedu_bank_grade(bank, id.as_ptr(), 4, sub.as_ptr(), &mut out) }, NeteduStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
        correct += usize::from(v["correct"] == true);
    }
    assert_eq!(correct, 1);
    let junk = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { netedu_bank_grade(bank, id.as_ptr(), 4, junk.as_ptr(), &mut out) },
        NeteduStatus::InvalidArgument
    );
    let missing = CString::new("nope").unwrap();
    assert_eq!(unsafe { netedu_bank_render(bank, missing.as_ptr(), 0, &mut out) }, NeteduStatus::NotFound);
    unsafe { netedu_bank_free(bank) };

    let nowhere = CString::new("/nonexistent/bank").unwrap();
    assert_eq!(unsafe { netedu_bank_open(nowhere.as_ptr(), &mut bank) }, NeteduStatus::Io);
}

#[test]
fn dissect_text() {
    let pcap = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/bank/captures/handshake.pcap")).unwrap();
    let cap = netedu::dissect::read_pcap(&pcap).unwrap();
    let pkt = &cap.packets[0].data;
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { netedu_dissect(pkt.as_ptr(), pkt.len(), NeteduLinkType::Ethernet, &mut out) },
        NeteduStatus::Ok
    );
    let text = take_string(out);
    assert_eq!(text, netedu::dissect::dissect_packet(pkt, netedu::dissect::LinkType::Ethernet).render());
    assert!(text.contains("tcp"));
}
