//! Answer-key leak scanner shared by the bank and HTTP tests.
#![allow(dead_code)]

use netedu::dissect::{dissect_packet, mask_fields, MASK};
use netedu::exercises::{Exercise, ExerciseDef, Grader};
use serde_json::Value;

/// Keys that only ever belong to answer keys or verdicts.
const FORBIDDEN_KEYS: &[&str] = &[
    "correct",
    "incorrect",
    "comment",
    "comments",
    "expected",
    "true_order",
    "grader",
    "feedback",
    "feedback_wrong",
];

/// Values shorter than this are too generic to search for globally ("1",
/// "0x2"); they are checked only in the masked field's own entry.
pub const MIN_GLOBAL_LEN: usize = 4;

fn strings<'a>(v: &'a Value, out: &mut Vec<&'a str>) {
    match v {
        Value::String(s) => out.push(s),
        Value::Array(a) => a.iter().for_each(|x| strings(x, out)),
        Value::Object(o) => o.values().for_each(|x| strings(x, out)),
        _ => {}
    }
}

fn keys(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Array(a) => a.iter().for_each(|x| keys(x, out)),
        Value::Object(o) => {
            for (k, x) in o {
                out.push(k.clone());
                keys(x, out);
            }
        }
        _ => {}
    }
}

/// Returns one description per leak found in a student-facing response.
pub fn scan(ex: &Exercise, response: &Value) -> Vec<String> {
    let mut leaks = Vec::new();
    let mut ks = Vec::new();
    keys(response, &mut ks);
    for k in ks.iter().filter(|k| FORBIDDEN_KEYS.contains(&k.as_str())) {
        leaks.push(format!("key `{k}` present"));
    }
    let mut ss = Vec::new();
    strings(response, &mut ss);
    let contains = |needle: &str| ss.iter().any(|s| s.contains(needle));

    match &ex.def {
        ExerciseDef::Mcq(q) => {
            for a in q.correct.iter().chain(&q.incorrect) {
                if contains(&a.comment) {
                    leaks.push(format!("comment `{}` present", a.comment));
                }
            }
        }
        ExerciseDef::Short(q) => {
            let expected = match &q.grader {
                Grader::ExactText { expected } | Grader::HexBytes { expected } => expected.clone(),
                Grader::Integer { expected } => expected.to_string(),
                Grader::Stuffing { payload } => {
                    let bytes: Vec<u8> = payload
                        .split_whitespace()
                        .map(|b| u8::from_str_radix(b, 16).unwrap())
                        .collect();
                    let framed = netedu::codec::stuff(&bytes).unwrap();
                    framed.as_bytes().iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
                }
            };
            if contains(&expected) || contains(&expected.to_lowercase()) {
                leaks.push(format!("expected answer `{expected}` present"));
            }
        }
        ExerciseDef::TraceMask(q) => {
            let cap = ex.capture.as_ref().expect("trace exercise has a capture");
            let pkt = &cap.packets[q.packet].data;
            let tree = dissect_packet(pkt, cap.link_type);
            for (path, field, _) in tree.flatten() {
                let under_mask = q
                    .masked
                    .iter()
                    .any(|m| path == *m || path.starts_with(&format!("{m}.")));
                if !under_mask {
                    continue;
                }
                if field.display.len() >= MIN_GLOBAL_LEN && contains(&field.display) {
                    leaks.push(format!("value of {path} (`{}`) present", field.display));
                }
                for entry in response.pointer("/trace/fields").and_then(Value::as_array).into_iter().flatten() {
                    if entry["path"] == path.as_str() && entry["display"] != MASK {
                        leaks.push(format!("field entry for {path} not masked"));
                    }
                }
            }
            let Some(hex) = response.pointer("/trace/hex").and_then(Value::as_str) else {
                return leaks;
            };
            let masked = mask_fields(&tree, &q.masked).unwrap().masked_bytes();
            let tokens: Vec<&str> = hex
                .lines()
                .flat_map(|l| l.split_whitespace().skip(1))
                .collect();
            if tokens.len() != pkt.len() {
                leaks.push(format!("hex dump has {} bytes, packet has {}", tokens.len(), pkt.len()));
            }
            for (i, t) in tokens.iter().enumerate() {
                if masked.get(i).copied().unwrap_or(false) && *t != "??" {
                    leaks.push(format!("masked byte {i} shown as {t}"));
                }
            }
        }
        ExerciseDef::TraceReorder(_) => {}
    }
    leaks
}

/// The reference implementation and the two mutants used as negative
/// fixtures: a client that never retransmits and a server whose ACKs carry
/// a corrupted CRC.
pub fn impls() -> [netedu::interop::ImplSpec; 3] {
    use netedu::interop::ImplSpec;
    let netedu = env!("CARGO_BIN_EXE_netedu");
    let mutant = env!("CARGO_BIN_EXE_netedu-mutant");
    let reference = ImplSpec::reference(std::path::Path::new(netedu));
    [
        reference.clone(),
        ImplSpec {
            name: "no-retransmit".into(),
            client: format!("{mutant} send --mode no-retransmit --peer {{peer}} --file {{file}}"),
            server: reference.server.clone(),
        },
        ImplSpec {
            name: "bad-crc".into(),
            client: reference.client.clone(),
            server: format!("{mutant} recv --mode bad-crc --listen 127.0.0.1:{{port}} --out {{out}}"),
        },
    ]
}
