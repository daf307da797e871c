mod common;

use std::process::Command;
use std::time::Duration;

use netedu::codec::{sum_vector, IntVector};
use netedu::interop::{
    run_matrix, run_pair, sumvec_roundtrip, write_workload, CellVerdict, InteropMatrix, PairOptions, SumvecServer,
    SumvecTransport,
};
use netedu::linksim::ImpairmentConfig;
use netedu::rng::SplitMix64;

fn lossy(seed: u64) -> PairOptions {
    PairOptions {
        impairment: ImpairmentConfig {
            seed,
            base_delay: 10.0,
            loss_prob: 0.1,
            ..Default::default()
        },
        timeout: Duration::from_secs(30),
    }
}

#[test]
fn reference_self_interop_clean_link() {
    let dir = tempfile::tempdir().unwrap();
    let work = write_workload(&dir.path().join("w.bin"), 150_000, 3).unwrap();
    let [reference, ..] = common::impls();
    let opts = PairOptions {
        impairment: ImpairmentConfig::default(),
        timeout: Duration::from_secs(30),
    };
    let cell = run_pair(&reference, &reference, &work, &opts);
    assert_eq!(cell.verdict, CellVerdict::Pass, "{}", cell.detail);
    assert_eq!(cell.bytes_transferred, 150_000);
    assert_eq!(cell.received_sha256.as_deref(), Some(cell.expected_sha256.as_str()));
}

#[test]
fn reference_self_interop_lossy() {
    let dir = tempfile::tempdir().unwrap();
    let work = write_workload(&dir.path().join("w.bin"), 100_000, 4).unwrap();
    let [reference, ..] = common::impls();
    for seed in [3, 11] {
        let cell = run_pair(&reference, &reference, &work, &lossy(seed));
        assert_eq!(cell.verdict, CellVerdict::Pass, "seed {seed}: {}", cell.detail);
    }
}

#[test]
fn mutants_fail_with_expected_detail() {
    let dir = tempfile::tempdir().unwrap();
    let work = write_workload(&dir.path().join("w.bin"), 100_000, 5).unwrap();
    let [reference, no_retx, bad_crc] = common::impls();
    let opts = PairOptions {
        timeout: Duration::from_secs(8),
        ..lossy(1)
    };
    let cell = run_pair(&no_retx, &reference, &work, &opts);
    assert_eq!(cell.verdict, CellVerdict::Timeout, "{}", cell.detail);
    assert_ne!(cell.received_sha256.as_deref(), Some(cell.expected_sha256.as_str()));

    let cell = run_pair(&reference, &bad_crc, &work, &opts);
    assert_eq!(cell.verdict, CellVerdict::Fail, "{}", cell.detail);
    assert!(cell.detail.contains("integrity errors"), "{}", cell.detail);
}

#[test]
fn matrix_runs_every_cell_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let work = write_workload(&dir.path().join("w.bin"), 60_000, 6).unwrap();
    let impls_path = dir.path().join("impls.json");
    std::fs::write(&impls_path, serde_json::to_string(&common::impls()).unwrap()).unwrap();
    let out = dir.path().join("matrix.json");
    let status = Command::new(env!("CARGO_BIN_EXE_netedu"))
        .args(["interop", "--seed", "2", "--loss", "0.1", "--timeout", "8", "--width", "9"])
        .arg("--impls")
        .arg(&impls_path)
        .arg("--file")
        .arg(&work)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let table = String::from_utf8(status.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);

    let m: InteropMatrix = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(m.impls, ["reference", "no-retransmit", "bad-crc"]);
    assert_eq!(m.cells.iter().flatten().count(), 9);
    for (i, row) in m.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            assert_eq!((c.client.as_str(), c.server.as_str()), (m.impls[i].as_str(), m.impls[j].as_str()));
        }
    }
    let v = |c: &str, s: &str| m.cell(c, s).unwrap().verdict;
    assert_eq!(v("reference", "reference"), CellVerdict::Pass);
    // the broken side is isolated: every pairing with it fails, others pass
    assert_eq!(v("bad-crc", "reference"), CellVerdict::Pass);
    assert_eq!(v("reference", "no-retransmit"), CellVerdict::Pass);
    assert_eq!(v("no-retransmit", "reference"), CellVerdict::Timeout);
    assert_eq!(v("reference", "bad-crc"), CellVerdict::Fail);
}

#[test]
fn matrix_with_one_impl_is_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let work = write_workload(&dir.path().join("w.bin"), 10_000, 7).unwrap();
    let [reference, ..] = common::impls();
    let m = run_matrix(&[reference], &work, &lossy(1), 4);
    assert_eq!(m.cells.len(), 1);
    assert_eq!(m.cells[0][0].verdict, CellVerdict::Pass);
}

#[test]
fn sumvec_over_chopped_streams() {
    let server = SumvecServer::spawn([127, 0, 0, 1]).unwrap();
    let mut rng = SplitMix64::new(46);
    let t = Duration::from_secs(5);
    for i in 0..100 {
        let len = rng.next_index(400);
        let v = IntVector((0..len).map(|_| rng.next_u64() as i32 >> 12).collect());
        let want = sum_vector(&v);
        for max_chunk in [1, 3, 7] {
            let transport = SumvecTransport::ChoppedStream { seed: i, max_chunk };
            assert_eq!(sumvec_roundtrip(server.tcp_addr(), &v, transport, t).unwrap(), want);
        }
        if len <= 300 {
            assert_eq!(sumvec_roundtrip(server.udp_addr(), &v, SumvecTransport::Udp, t).unwrap(), want);
        }
    }
}
