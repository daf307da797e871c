//! Deliberately broken MTP endpoints used as negative interop fixtures.
//!
//! * `send --mode no-retransmit`: never resends anything.
//! * `send --mode window-violation`: ignores the window and bursts the whole
//!   file, letting sequence numbers wrap past the receiver's window.
//! * `recv --mode bad-crc`: a correct receiver whose ACKs carry a corrupted
//!   CRC.

use std::fs;
use std::io::{self, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use netedu::mtp::{
    decode_frame, encode_frame, FrameType, MtpFrame, ReceiverState, SenderConfig, SenderState, MAX_PAYLOAD,
    MAX_WINDOW,
};

#[derive(Parser)]
#[command(name = "netedu-mutant", about = "Faulty MTP endpoints for interop testing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SendMode {
    NoRetransmit,
    WindowViolation,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecvMode {
    BadCrc,
}

#[derive(Subcommand)]
enum Cmd {
    Send {
        #[arg(long, value_enum)]
        mode: SendMode,
        #[arg(long)]
        peer: SocketAddr,
        #[arg(long)]
        file: PathBuf,
        /// Give up after this long without finishing.
        #[arg(long, default_value_t = 600.0)]
        give_up: f64,
    },
    Recv {
        #[arg(long, value_enum)]
        mode: RecvMode,
        #[arg(long)]
        listen: SocketAddr,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        idle_timeout: f64,
    },
}

fn recv_ack(socket: &UdpSocket) -> Option<MtpFrame> {
    let mut buf = [0u8; 2048];
    let (n, _) = socket.recv_from(&mut buf).ok()?;
    decode_frame(&buf[..n]).ok()
}

fn send_no_retransmit(socket: &UdpSocket, peer: SocketAddr, data: &[u8], give_up: Duration) -> io::Result<bool> {
    let start = Instant::now();
    let clock = || start.elapsed().as_secs_f64() * 1000.0;
    let mut sender = SenderState::new(SenderConfig::default());
    // frames are sent once, in sequence order; anything else is a resend
    let mut next_new: u8 = 0;
    let mut tx = |frames: Vec<MtpFrame>| -> io::Result<()> {
        for f in frames {
            if f.seq == next_new {
                socket.send_to(&encode_frame(&f).expect("valid frame"), peer)?;
                next_new = next_new.wrapping_add(1);
            }
        }
        Ok(())
    };
    let mut first = sender.on_app_data(data, clock()).expect("fresh sender");
    first.extend(sender.close(clock()));
    tx(first)?;
    socket.set_read_timeout(Some(Duration::from_millis(50)))?;
    while !sender.is_finished() && start.elapsed() < give_up {
        if let Some(ack) = recv_ack(socket) {
            tx(sender.on_ack(&ack, clock()))?;
        }
    }
    Ok(sender.is_finished())
}

fn send_window_violation(socket: &UdpSocket, peer: SocketAddr, data: &[u8], give_up: Duration) -> io::Result<bool> {
    let mut frames: Vec<MtpFrame> = data
        .chunks(MAX_PAYLOAD)
        .enumerate()
        .map(|(i, c)| MtpFrame::data(i as u8, MAX_WINDOW, c.to_vec()))
        .collect();
    frames.push(MtpFrame::fin(frames.len() as u8, MAX_WINDOW));
    let fin_ack = frames.len() as u8;
    socket.set_read_timeout(Some(Duration::from_millis(200)))?;
    let start = Instant::now();
    while start.elapsed() < give_up {
        for f in &frames {
            socket.send_to(&encode_frame(f).expect("valid frame"), peer)?;
        }
        let round = Instant::now();
        while round.elapsed() < Duration::from_millis(200) {
            if let Some(a) = recv_ack(socket) {
                if a.ftype == FrameType::Ack && a.seq == fin_ack {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn recv_bad_crc(socket: &UdpSocket, out: &mut impl Write, idle: Duration) -> io::Result<u64> {
    let mut receiver = ReceiverState::new(MAX_WINDOW);
    let mut buf = [0u8; 2048];
    let mut last = Instant::now();
    let mut bytes = 0u64;
    socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    while last.elapsed() < idle {
        let Ok((n, from)) = socket.recv_from(&mut buf) else { continue };
        last = Instant::now();
        let Ok(frame) = decode_frame(&buf[..n]) else { continue };
        let (ack, data) = receiver.on_frame(&frame);
        out.write_all(&data)?;
        bytes += data.len() as u64;
        if let Some(ack) = ack {
            let mut wire = encode_frame(&ack).expect("valid ack");
            let last = wire.len() - 1;
            wire[last] ^= 0xFF;
            socket.send_to(&wire, from)?;
        }
    }
    out.flush()?;
    Ok(bytes)
}

fn run(cli: Cli) -> io::Result<bool> {
    match cli.cmd {
        Cmd::Send {
            mode,
            peer,
            file,
            give_up,
        } => {
            let data = fs::read(file)?;
            let socket = UdpSocket::bind("127.0.0.1:0")?;
            let give_up = Duration::from_secs_f64(give_up);
            let done = match mode {
                SendMode::NoRetransmit => send_no_retransmit(&socket, peer, &data, give_up)?,
                SendMode::WindowViolation => send_window_violation(&socket, peer, &data, give_up)?,
            };
            eprintln!("netedu-mutant send: finished={done}");
            Ok(done)
        }
        Cmd::Recv {
            mode: RecvMode::BadCrc,
            listen,
            out,
            idle_timeout,
        } => {
            let socket = UdpSocket::bind(listen)?;
            let mut f = io::BufWriter::new(fs::File::create(out)?);
            let n = recv_bad_crc(&socket, &mut f, Duration::from_secs_f64(idle_timeout))?;
            eprintln!("netedu-mutant recv: wrote {n} bytes, all acks corrupted");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
