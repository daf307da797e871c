use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use netedu::dissect::{dissect_packet, mask_fields, read_pcap};
use netedu::exercises::{Bank, Submission};
use netedu::interop::{self, ImplSpec, PairOptions};
use netedu::linksim::{self, DirectionFilter, ImpairmentConfig, ProxyConfig};
use netedu::mtp::{self, SenderConfig, DEFAULT_RTO, MAX_WINDOW};
use netedu::newreno::{self, Scenario};
use netedu::peerreview::{self, Roster, Strategy};
use netedu::service::{self, ServeConfig, TEACHER_SECRET_ENV};

#[derive(Parser)]
#[command(name = "netedu", version, about = "Networking lab toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the exercise HTTP API.
    Serve {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Journal file; sessions are kept in memory when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Render an exercise instance, or grade an answer to it.
    Grade {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        exercise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Submission JSON, e.g. '{"choice":2}' or '{"text":"7E 7D 5E 7E"}'.
        #[arg(long)]
        answer: Option<String>,
    },
    /// Run the impairing UDP proxy until interrupted.
    Linksim {
        #[arg(long, value_parser = parse_listen)]
        listen: SocketAddr,
        /// Address of endpoint b (the server side).
        #[arg(long = "b")]
        peer_b: SocketAddr,
        /// Address of endpoint a; learned from traffic when omitted.
        #[arg(long = "a")]
        peer_a: Option<SocketAddr>,
        #[command(flatten)]
        imp: ImpairArgs,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Send a file with MTP.
    MtpSend {
        #[arg(long)]
        peer: SocketAddr,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = MAX_WINDOW)]
        window: u8,
        #[arg(long, default_value_t = DEFAULT_RTO)]
        rto: f64,
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: SocketAddr,
    },
    /// Receive one MTP transfer into a file.
    MtpRecv {
        #[arg(long, value_parser = parse_listen)]
        listen: SocketAddr,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = MAX_WINDOW)]
        window: u8,
        /// Quiet period after the FIN before exiting.
        #[arg(long, default_value_t = 600)]
        linger_ms: u64,
        /// Give up when no traffic arrives for this long before the FIN.
        #[arg(long, default_value_t = 30.0)]
        idle_timeout: f64,
    },
    /// Print the predicted (or measured) New Reno timeline.
    Newreno {
        #[arg(long, default_value_t = 20.0)]
        rtt: f64,
        #[arg(long, default_value_t = 8)]
        segments: u32,
        /// Comma-separated 1-based transmission ordinals to drop.
        #[arg(long = "loss", alias = "losses", value_delimiter = ',', default_value = "6,8")]
        losses: Vec<u64>,
        #[arg(long = "cwnd0", alias = "cwnd", default_value_t = 1.0)]
        cwnd: f64,
        #[arg(long, default_value_t = 64.0)]
        ssthresh: f64,
        #[arg(long, default_value_t = 200.0)]
        rto: f64,
        /// Run the sender through the link simulator instead.
        #[arg(long)]
        measure: bool,
        /// Print the difference between prediction and measurement.
        #[arg(long)]
        compare: bool,
    },
    /// Run the interoperability matrix.
    Interop {
        #[arg(long)]
        impls: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        loss: f64,
        #[arg(long, default_value_t = 0.02)]
        reorder: f64,
        #[arg(long, default_value_t = 10.0)]
        delay: f64,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long, default_value_t = interop::DEFAULT_WIDTH)]
        width: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allocate peer reviews.
    Allocate {
        #[arg(long)]
        roster: PathBuf,
        #[arg(long, default_value = "balanced")]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the field tree of every packet in a pcap file.
    Dissect {
        file: PathBuf,
        /// Field paths to mask, e.g. tcp.seq,tcp.ack.
        #[arg(long, value_delimiter = ',')]
        mask: Vec<String>,
    },
}

#[derive(Args)]
struct ImpairArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    delay: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,
    /// Comma-separated 1-based ordinals to drop in each covered direction.
    #[arg(long = "drop", value_delimiter = ',')]
    drop_ordinals: Vec<u64>,
    #[arg(long, default_value = "both")]
    direction: DirectionFilter,
}

impl ImpairArgs {
    fn config(&self) -> ImpairmentConfig {
        ImpairmentConfig {
            seed: self.seed,
            base_delay: self.delay,
            jitter: self.jitter,
            loss_prob: self.loss,
            dup_prob: self.dup,
            reorder_prob: self.reorder,
            drop_ordinals: self.drop_ordinals.iter().copied().collect(),
            direction: self.direction,
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

/// `PORT` binds all interfaces; `HOST:PORT` binds that address.
fn parse_listen(s: &str) -> Result<SocketAddr, String> {
    if let Ok(port) = s.parse::<u16>() {
        return Ok(SocketAddr::from(([0, 0, 0, 0], port)));
    }
    s.parse().map_err(|e| format!("expected PORT or HOST:PORT: {e}"))
}

fn write_out(path: Option<&PathBuf>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Serve { bank, listen, state } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(ServeConfig {
                bank,
                listen,
                state,
                teacher_secret: std::env::var(TEACHER_SECRET_ENV).ok(),
            }))?;
        }
        Cmd::Grade {
            bank,
            exercise,
            seed,
            answer,
        } => {
            let bank = Bank::load(bank)?;
            let ex = bank.get(&exercise)?;
            let inst = ex.instantiate(seed)?;
            let out = match answer {
                None => ex.render(&inst)?,
                Some(a) => {
                    let sub: Submission = serde_json::from_str(&a)?;
                    serde_json::to_value(ex.grade(&inst, &sub)?)?
                }
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Linksim {
            listen,
            peer_b,
            peer_a,
            imp,
            log,
            duration,
        } => {
            let handle = linksim::proxy(ProxyConfig {
                listen,
                peer_a,
                peer_b,
                impairment: imp.config(),
                log_path: log,
            })?;
            eprintln!("linksim listening on {}", handle.local_addr());
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
            rt.block_on(async {
                match duration {
                    Some(d) => {
                        tokio::select! {
                            _ = tokio::time::sleep(Duration::from_secs_f64(d)) => {}
                            _ = tokio::signal::ctrl_c() => {}
                        }
                    }
                    None => {
                        let _ = tokio::signal::ctrl_c().await;
                    }
                }
            });
            let log = handle.shutdown()?;
            eprintln!("linksim: {} events", log.entries.len());
        }
        Cmd::MtpSend {
            peer,
            file,
            window,
            rto,
            bind,
        } => {
            let data = fs::read(&file)?;
            let socket = UdpSocket::bind(bind)?;
            let cfg = SenderConfig {
                max_window: window.min(MAX_WINDOW),
                initial_peer_window: window.min(MAX_WINDOW),
                rto,
            };
            match mtp::udp_send(&socket, peer, &data, cfg) {
                Ok(r) => eprintln!(
                    "mtp-send: sent {} bytes; retransmissions: {}; integrity errors: {}",
                    r.bytes, r.stats.retransmissions, r.integrity_errors
                ),
                Err((e, r)) => {
                    eprintln!(
                        "mtp-send: failed after {} retransmissions; integrity errors: {}",
                        r.stats.retransmissions, r.integrity_errors
                    );
                    return Err(e.into());
                }
            }
        }
        Cmd::MtpRecv {
            listen,
            out,
            window,
            linger_ms,
            idle_timeout,
        } => {
            let socket = UdpSocket::bind(listen)?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            let r = mtp::udp_recv(
                &socket,
                &mut w,
                window.min(MAX_WINDOW),
                Duration::from_millis(linger_ms),
                Some(Duration::from_secs_f64(idle_timeout)),
            )?;
            eprintln!(
                "mtp-recv: received {} bytes in {} frames; integrity errors: {}",
                r.bytes, r.frames, r.integrity_errors
            );
        }
        Cmd::Newreno {
            rtt,
            segments,
            losses,
            cwnd,
            ssthresh,
            rto,
            measure,
            compare,
        } => {
            let s = Scenario {
                rtt,
                num_segments: segments,
                init_cwnd: cwnd,
                ssthresh0: ssthresh,
                rto,
                loss_ordinals: losses.into_iter().collect::<BTreeSet<_>>(),
                ..Scenario::default()
            };
            if compare {
                let diff = newreno::compare(&newreno::predict(&s)?, &newreno::measure(&s)?, 1.0);
                println!("{}", serde_json::to_string_pretty(&diff)?);
            } else {
                let tl = if measure {
                    newreno::measure(&s)?
                } else {
                    newreno::predict(&s)?
                };
                print!("{}", tl.to_text());
            }
        }
        Cmd::Interop {
            impls,
            file,
            seed,
            loss,
            reorder,
            delay,
            timeout,
            width,
            out,
        } => {
            let impls = ImplSpec::load_list(&impls)?;
            if impls.is_empty() {
                return Err("implementation list is empty".into());
            }
            let opts = PairOptions {
                impairment: ImpairmentConfig {
                    seed,
                    base_delay: delay,
                    loss_prob: loss,
                    reorder_prob: reorder,
                    ..Default::default()
                },
                timeout: Duration::from_secs_f64(timeout),
            };
            let m = interop::run_matrix(&impls, &file, &opts, width);
            print!("{}", m.to_table());
            if let Some(out) = out {
                fs::write(out, serde_json::to_string_pretty(&m)?)?;
            }
        }
        Cmd::Allocate {
            roster,
            strategy,
            seed,
            out,
        } => {
            let roster: Roster = serde_json::from_str(&fs::read_to_string(roster)?)?;
            let alloc = peerreview::allocate(&roster, strategy, seed)?;
            let mut text = serde_json::to_string_pretty(&alloc)?;
            text.push('\n');
            write_out(out.as_ref(), &text)?;
        }
        Cmd::Dissect { file, mask } => {
            let cap = read_pcap(&fs::read(file)?)?;
            for (i, p) in cap.packets.iter().enumerate() {
                let tree = mask_fields(&dissect_packet(&p.data, cap.link_type), &mask)?;
                println!("# packet {i}");
                print!("{}", tree.render());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
