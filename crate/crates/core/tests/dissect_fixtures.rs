use std::collections::BTreeMap;
use std::path::PathBuf;

use netedu::dissect::{
    dissect_packet, hex_dump, mask_fields, read_pcap, verify_checksums, write_pcap, Capture, ChecksumVerdict,
    FieldValue, LinkType, MASK,
};
use netedu::rng::SplitMix64;
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    len: usize,
    fields: BTreeMap<String, u64>,
    displays: BTreeMap<String, String>,
    padding: Option<usize>,
}

fn fixture(name: &str) -> PathBuf {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    if name == "handshake.pcap" {
        root.join("bank/captures").join(name)
    } else {
        root.join("tests/fixtures").join(name)
    }
}

fn load(name: &str) -> Capture {
    read_pcap(&std::fs::read(fixture(name)).unwrap()).unwrap()
}

fn expected() -> BTreeMap<String, Vec<Expected>> {
    let text = std::fs::read_to_string(fixture("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn fixtures_match_independent_builder() {
    for (name, packets) in expected() {
        let cap = load(&name);
        assert_eq!(cap.packets.len(), packets.len(), "{name}");
        for (i, (p, exp)) in cap.packets.iter().zip(&packets).enumerate() {
            assert_eq!(p.data.len(), exp.len, "{name}#{i}");
            let tree = dissect_packet(&p.data, cap.link_type);
            for (path, want) in &exp.fields {
                let f = tree.field(path).unwrap_or_else(|| panic!("{name}#{i}: no {path}"));
                assert_eq!(f.as_u64(), Some(*want), "{name}#{i} {path}");
            }
            for (path, want) in &exp.displays {
                assert_eq!(&tree.field(path).unwrap().display, want, "{name}#{i} {path}");
            }
            match exp.padding {
                Some(0) => assert!(tree.layer("trailer").is_none(), "{name}#{i}"),
                Some(n) => match &tree.field("trailer.padding").unwrap().value {
                    FieldValue::Bytes(b) => assert_eq!(b.len(), n),
                    other => panic!("padding value {other:?}"),
                },
                None => {}
            }
        }
    }
}

#[test]
fn reserialization_is_byte_exact() {
    for name in ["handshake.pcap", "mixed.pcap", "rawip.pcap"] {
        let cap = load(name);
        for (i, p) in cap.packets.iter().enumerate() {
            let tree = dissect_packet(&p.data, cap.link_type);
            assert_eq!(tree.reserialize(), p.data, "{name}#{i}");
        }
        assert_eq!(read_pcap(&write_pcap(&cap)).unwrap(), cap);
    }
}

#[test]
fn handshake_flag_patterns() {
    let cap = load("handshake.pcap");
    let flags: Vec<(u64, u64)> = cap
        .packets
        .iter()
        .map(|p| {
            let t = dissect_packet(&p.data, cap.link_type);
            (
                t.field("tcp.flags.syn").unwrap().as_u64().unwrap(),
                t.field("tcp.flags.ack").unwrap().as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(flags, vec![(1, 0), (1, 1), (0, 1)]);
}

#[test]
fn fixture_checksums_verify() {
    for name in ["handshake.pcap", "mixed.pcap", "rawip.pcap"] {
        let cap = load(name);
        for (i, p) in cap.packets.iter().enumerate() {
            let tree = dissect_packet(&p.data, cap.link_type);
            for (path, v) in verify_checksums(&tree, &p.data) {
                assert!(
                    matches!(v, ChecksumVerdict::Valid | ChecksumVerdict::Disabled),
                    "{name}#{i} {path}: {v:?}"
                );
            }
        }
    }
}

#[test]
fn masked_render_hides_values() {
    let cap = load("handshake.pcap");
    let p = &cap.packets[1];
    let tree = mask_fields(&dissect_packet(&p.data, cap.link_type), &["tcp.ack", "tcp.seq"]).unwrap();
    let text = tree.render();
    assert!(text.contains(&format!("tcp.ack = {MASK}")));
    assert!(!text.contains("1001"));
    assert!(!text.contains("5000"));
    let dump = hex_dump(&p.data, Some(&tree.masked_bytes()));
    // seq and ack occupy bytes 38..46
    assert_eq!(dump.matches("??").count(), 8);
    assert!(mask_fields(&tree, &["tcp.nope"]).is_err());
}

#[test]
fn fuzz_never_panics() {
    let mut rng = SplitMix64::new(42);
    let seeds: Vec<Vec<u8>> = ["handshake.pcap", "mixed.pcap"]
        .iter()
        .flat_map(|n| load(n).packets.into_iter().map(|p| p.data))
        .collect();
    for i in 0..10_000 {
        let data: Vec<u8> = if i % 2 == 0 {
            let len = rng.next_index(120);
            (0..len).map(|_| rng.next_u64() as u8).collect()
        } else {
            // mutate a real packet: flip bytes and truncate
            let mut d = seeds[rng.next_index(seeds.len())].clone();
            for _ in 0..1 + rng.next_index(4) {
                let k = rng.next_index(d.len());
                d[k] = rng.next_u64() as u8;
            }
            d.truncate(rng.next_index(d.len() + 1));
            d
        };
        let link = if i % 3 == 0 { LinkType::RawIp } else { LinkType::Ethernet };
        let tree = dissect_packet(&data, link);
        assert_eq!(tree.reserialize(), data);
        let _ = verify_checksums(&tree, &data);
        let _ = tree.render();
        let _ = read_pcap(&data);
    }
}
