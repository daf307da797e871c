//! Interoperability harness and the vector-sum reference workload.
//!
//! An [`ImplSpec`] describes how to launch one MTP implementation as client
//! and as server. [`run_pair`] launches a server, an in-process impairing
//! proxy and a client, then compares what the server wrote against the
//! workload. [`run_matrix`] runs every ordered pair.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{decode_vector, encode_vector, encode_vector_message, sum_vector, IntVector, VectorStreamDecoder};
use crate::linksim::{self, chop_stream, ImpairmentConfig, ProxyConfig};

pub const DEFAULT_WIDTH: usize = 4;
/// How long a server may keep running after its client has exited.
const SERVER_GRACE: Duration = Duration::from_secs(3);

#[derive(Debug, Error)]
pub enum InteropError {
    #[error("invalid implementation spec `{name}`: {reason}")]
    Spec { name: String, reason: String },
    #[error("timed out")]
    Timeout,
    #[error("malformed reply: {0}")]
    Reply(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Default impairment for interop runs: 5% loss, 2% reordering, 10 ms delay.
pub fn default_impairment(seed: u64) -> ImpairmentConfig {
    ImpairmentConfig {
        seed,
        base_delay: 10.0,
        loss_prob: 0.05,
        reorder_prob: 0.02,
        ..Default::default()
    }
}

/// Command templates. Client placeholders: `{peer}` and `{file}`; server
/// placeholders: `{port}` and `{out}`. Arguments are split on whitespace and
/// run without a shell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplSpec {
    pub name: String,
    pub client: String,
    pub server: String,
}

impl ImplSpec {
    pub fn validate(&self) -> Result<(), InteropError> {
        let missing = |tpl: &str, keys: &[&str]| keys.iter().find(|k| !tpl.contains(*k)).map(|k| k.to_string());
        let err = |reason: String| InteropError::Spec {
            name: self.name.clone(),
            reason,
        };
        if let Some(k) = missing(&self.client, &["{peer}", "{file}"]) {
            return Err(err(format!("client template lacks {k}")));
        }
        if let Some(k) = missing(&self.server, &["{port}", "{out}"]) {
            return Err(err(format!("server template lacks {k}")));
        }
        if self.client.split_whitespace().next().is_none() || self.server.split_whitespace().next().is_none() {
            return Err(err("empty command".into()));
        }
        Ok(())
    }

    /// The reference implementation, launched through the `netedu` binary.
    pub fn reference(exe: &Path) -> Self {
        let exe = exe.display();
        ImplSpec {
            name: "reference".into(),
            client: format!("{exe} mtp-send --peer {{peer}} --file {{file}}"),
            server: format!("{exe} mtp-recv --listen 127.0.0.1:{{port}} --out {{out}}"),
        }
    }

    pub fn load_list(path: &Path) -> Result<Vec<ImplSpec>, InteropError> {
        let text = fs::read_to_string(path)?;
        let list: Vec<ImplSpec> = serde_json::from_str(&text).map_err(|e| InteropError::Spec {
            name: path.display().to_string(),
            reason: e.to_string(),
        })?;
        for s in &list {
            s.validate()?;
        }
        Ok(list)
    }
}

fn expand(template: &str, vars: &[(&str, String)]) -> Vec<String> {
    template
        .split_whitespace()
        .map(|tok| {
            vars.iter()
                .fold(tok.to_string(), |acc, (k, v)| acc.replace(k, v))
        })
        .collect()
}

fn spawn(argv: &[String], dir: &Path, tag: &str) -> io::Result<Child> {
    let (prog, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    Command::new(prog)
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(fs::File::create(dir.join(format!("{tag}.stdout")))?)
        .stderr(fs::File::create(dir.join(format!("{tag}.stderr")))?)
        .spawn()
}

fn free_udp_port() -> io::Result<u16> {
    Ok(UdpSocket::bind("127.0.0.1:0")?.local_addr()?.port())
}

fn tail(path: &Path, lines: usize) -> String {
    let text = fs::read_to_string(path).unwrap_or_default();
    let all: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    all[all.len().saturating_sub(lines)..].join(" | ")
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVerdict {
    Pass,
    Fail,
    Timeout,
}

impl std::fmt::Display for CellVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellVerdict::Pass => "pass",
            CellVerdict::Fail => "fail",
            CellVerdict::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub client: String,
    pub server: String,
    pub verdict: CellVerdict,
    pub detail: String,
    pub bytes_transferred: u64,
    pub duration_ms: u64,
    pub expected_sha256: String,
    pub received_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PairOptions {
    pub impairment: ImpairmentConfig,
    pub timeout: Duration,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            impairment: default_impairment(1),
            timeout: Duration::from_secs(60),
        }
    }
}

fn wait_or_kill(child: &mut Child, deadline: Instant) -> Option<ExitStatus> {
    loop {
        match child.try_wait() {
            Ok(Some(s)) => return Some(s),
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(10)),
            Err(_) => return None,
        }
    }
}

/// Runs one client/server pairing through an impairing proxy.
///
/// Never returns an error: launch failures and timeouts become failing
/// cells.
pub fn run_pair(client: &ImplSpec, server: &ImplSpec, workload: &Path, opts: &PairOptions) -> Cell {
    let start = Instant::now();
    let expected = fs::read(workload).unwrap_or_default();
    let mut cell = Cell {
        client: client.name.clone(),
        server: server.name.clone(),
        verdict: CellVerdict::Fail,
        detail: String::new(),
        bytes_transferred: 0,
        duration_ms: 0,
        expected_sha256: sha256_hex(&expected),
        received_sha256: None,
    };
    let finish = |mut cell: Cell, verdict, detail: String| {
        cell.verdict = verdict;
        cell.detail = detail;
        cell.duration_ms = start.elapsed().as_millis() as u64;
        cell
    };
    if let Err(e) = client.validate().and_then(|_| server.validate()) {
        return finish(cell, CellVerdict::Fail, e.to_string());
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return finish(cell, CellVerdict::Fail, format!("temp dir: {e}")),
    };
    let workload = fs::canonicalize(workload).unwrap_or_else(|_| workload.to_path_buf());
    let out = dir.path().join("received.bin");
    let port = match free_udp_port() {
        Ok(p) => p,
        Err(e) => return finish(cell, CellVerdict::Fail, format!("no free port: {e}")),
    };
    let server_argv = expand(
        &server.server,
        &[("{port}", port.to_string()), ("{out}", out.display().to_string())],
    );
    let mut server_child = match spawn(&server_argv, dir.path(), "server") {
        Ok(c) => c,
        Err(e) => return finish(cell, CellVerdict::Fail, format!("cannot start server: {e}")),
    };
    let proxy = match linksim::proxy(ProxyConfig {
        listen: SocketAddr::from(([127, 0, 0, 1], 0)),
        peer_a: None,
        peer_b: SocketAddr::from(([127, 0, 0, 1], port)),
        impairment: opts.impairment.clone(),
        log_path: None,
    }) {
        Ok(p) => p,
        Err(e) => {
            let _ = server_child.kill();
            let _ = server_child.wait();
            return finish(cell, CellVerdict::Fail, format!("cannot start proxy: {e}"));
        }
    };
    let client_argv = expand(
        &client.client,
        &[
            ("{peer}", proxy.local_addr().to_string()),
            ("{file}", workload.display().to_string()),
        ],
    );
    let deadline = start + opts.timeout;
    let (client_status, server_status) = match spawn(&client_argv, dir.path(), "client") {
        Ok(mut c) => {
            let cs = wait_or_kill(&mut c, deadline);
            let server_deadline = if cs.is_some() {
                (Instant::now() + SERVER_GRACE).min(deadline.max(Instant::now()))
            } else {
                Instant::now()
            };
            (cs.map(Ok), wait_or_kill(&mut server_child, server_deadline))
        }
        Err(e) => {
            let _ = server_child.kill();
            let _ = server_child.wait();
            (Some(Err(e)), None)
        }
    };
    let _ = proxy.shutdown();

    let received = fs::read(&out).unwrap_or_default();
    cell.bytes_transferred = received.len() as u64;
    let digest = sha256_hex(&received);
    cell.received_sha256 = Some(digest.clone());
    let client_tail = tail(&dir.path().join("client.stderr"), 2);
    let server_tail = tail(&dir.path().join("server.stderr"), 2);
    let describe = |what: &str| {
        format!(
            "{what}; received {} of {} bytes; client: [{client_tail}]; server: [{server_tail}]",
            received.len(),
            expected.len()
        )
    };
    if digest == cell.expected_sha256 {
        return finish(cell, CellVerdict::Pass, format!("sha256 {digest}"));
    }
    match client_status {
        Some(Err(e)) => finish(cell, CellVerdict::Fail, format!("cannot start client: {e}")),
        None => finish(cell, CellVerdict::Timeout, describe("timed out")),
        Some(Ok(st)) => {
            let what = match (st.success(), server_status) {
                (false, _) => format!("client exited with {st}"),
                (true, None) => "server did not finish".to_string(),
                (true, Some(ss)) if !ss.success() => format!("server exited with {ss}"),
                _ => "received file differs from workload".to_string(),
            };
            finish(cell, CellVerdict::Fail, describe(&what))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteropMatrix {
    pub impls: Vec<String>,
    /// `cells[i][j]`: implementation `i` as client, `j` as server.
    pub cells: Vec<Vec<Cell>>,
}

impl InteropMatrix {
    pub fn cell(&self, client: &str, server: &str) -> Option<&Cell> {
        let i = self.impls.iter().position(|n| n == client)?;
        let j = self.impls.iter().position(|n| n == server)?;
        Some(&self.cells[i][j])
    }

    /// Rows are clients, columns servers.
    pub fn to_table(&self) -> String {
        let width = self
            .impls
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(0)
            .max("client \\ server".len());
        let col = self.impls.iter().map(|n| n.len()).max().unwrap_or(0).max(7);
        let mut s = format!("{:width$}", "client \\ server");
        for n in &self.impls {
            let _ = write!(s, "  {n:col$}");
        }
        s.push('\n');
        for (name, row) in self.impls.iter().zip(&self.cells) {
            let _ = write!(s, "{name:width$}");
            for c in row {
                let _ = write!(s, "  {:col$}", c.verdict.to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// Runs all ordered pairs with at most `width` cells in flight.
pub fn run_matrix(impls: &[ImplSpec], workload: &Path, opts: &PairOptions, width: usize) -> InteropMatrix {
    let n = impls.len();
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let results: Mutex<Vec<Option<Cell>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..width.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, j)) = jobs.get(k) else { break };
                log::info!("interop cell {} -> {}", impls[i].name, impls[j].name);
                let cell = run_pair(&impls[i], &impls[j], workload, opts);
                results.lock().unwrap()[k] = Some(cell);
            });
        }
    });
    let mut flat = results.into_inner().unwrap().into_iter();
    let cells = (0..n)
        .map(|_| (0..n).map(|_| flat.next().flatten().expect("every cell runs")).collect())
        .collect();
    InteropMatrix {
        impls: impls.iter().map(|s| s.name.clone()).collect(),
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumvecTransport {
    Udp,
    /// TCP stream written in fragments from [`chop_stream`].
    ChoppedStream { seed: u64, max_chunk: usize },
}

/// Reference vector-sum server, UDP and TCP on the same port number.
pub struct SumvecServer {
    udp_addr: SocketAddr,
    tcp_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl SumvecServer {
    pub fn spawn(ip: [u8; 4]) -> io::Result<Self> {
        let tcp = TcpListener::bind(SocketAddr::from((ip, 0)))?;
        let tcp_addr = tcp.local_addr()?;
        let udp = UdpSocket::bind(SocketAddr::from((ip, 0)))?;
        let udp_addr = udp.local_addr()?;
        udp.set_read_timeout(Some(Duration::from_millis(20)))?;
        tcp.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let mut threads = Vec::new();

        let s = stop.clone();
        threads.push(thread::spawn(move || {
            let mut buf = vec![0u8; linksim::MAX_DATAGRAM];
            while !s.load(Ordering::SeqCst) {
                let Ok((n, from)) = udp.recv_from(&mut buf) else { continue };
                match decode_vector(&buf[..n]) {
                    Ok(v) => {
                        let _ = udp.send_to(&sum_vector(&v).to_be_bytes(), from);
                    }
                    Err(e) => log::debug!("sumvec: bad datagram from {from}: {e}"),
                }
            }
        }));

        let s = stop.clone();
        threads.push(thread::spawn(move || {
            while !s.load(Ordering::SeqCst) {
                match tcp.accept() {
                    Ok((stream, _)) => {
                        let s = s.clone();
                        thread::spawn(move || serve_stream(stream, &s));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5))
                    }
                    Err(_) => break,
                }
            }
        }));
        Ok(SumvecServer {
            udp_addr,
            tcp_addr,
            stop,
            threads,
        })
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp_addr
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }
}

impl Drop for SumvecServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn serve_stream(mut stream: TcpStream, stop: &AtomicBool) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut decoder = VectorStreamDecoder::new();
    let mut buf = [0u8; 4096];
    while !stop.load(Ordering::SeqCst) {
        match stream.read(&mut buf) {
            Ok(0) => break,
            // a single read may hold part of a message or several of them
            Ok(n) => {
                for v in decoder.push(&buf[..n]) {
                    if stream.write_all(&sum_vector(&v).to_be_bytes()).is_err() {
                        return;
                    }
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
}

/// Sends `v` to a sum server and returns the reply.
pub fn sumvec_roundtrip(
    server: SocketAddr,
    v: &IntVector,
    transport: SumvecTransport,
    timeout: Duration,
) -> Result<i32, InteropError> {
    let timed_out = |e: io::Error| match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => InteropError::Timeout,
        _ => InteropError::Io(e),
    };
    match transport {
        SumvecTransport::Udp => {
            let sock = UdpSocket::bind(SocketAddr::from(([127, 0, 0, 1], 0)))?;
            sock.set_read_timeout(Some(timeout))?;
            sock.send_to(&encode_vector(v), server)?;
            let mut buf = [0u8; 16];
            let (n, _) = sock.recv_from(&mut buf).map_err(timed_out)?;
            let reply: [u8; 4] = buf[..n]
                .try_into()
                .map_err(|_| InteropError::Reply(format!("expected 4 bytes, got {n}")))?;
            Ok(i32::from_be_bytes(reply))
        }
        SumvecTransport::ChoppedStream { seed, max_chunk } => {
            let mut stream = TcpStream::connect_timeout(&server, timeout)?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(timeout))?;
            for chunk in chop_stream(&encode_vector_message(v), seed, max_chunk) {
                stream.write_all(&chunk)?;
                stream.flush()?;
            }
            let mut reply = [0u8; 4];
            stream.read_exact(&mut reply).map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => InteropError::Reply("connection closed early".into()),
                _ => timed_out(e),
            })?;
            Ok(i32::from_be_bytes(reply))
        }
    }
}

/// Writes a deterministic pseudo-random workload file.
pub fn write_workload(path: &Path, len: usize, seed: u64) -> io::Result<PathBuf> {
    let mut rng = crate::rng::SplitMix64::new(seed);
    let mut data = Vec::with_capacity(len + 8);
    while data.len() < len {
        data.extend_from_slice(&rng.next_u64().to_le_bytes());
    }
    data.truncate(len);
    fs::write(path, &data)?;
    Ok(path.to_path_buf())
}
