//! Threaded TCP front end for [`SmpService`].
//!
//! Each connection gets a reader thread that interprets commands as they
//! arrive and a writer thread that releases each reply batch once its
//! injected delay has elapsed. Batches leave in arrival order.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver};
use parking_lot::Mutex;
use rand::SeedableRng;

use super::smp::TIMEOUT_REPLY;
use super::{LatencyModel, Session, SmpService};

#[derive(Debug, Clone, Copy)]
pub struct ServerOptions {
    pub latency: LatencyModel,
    pub idle_timeout: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            latency: LatencyModel::fixed(0.0),
            idle_timeout: Duration::from_secs(30),
        }
    }
}

pub struct SmpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl SmpServer {
    pub fn serve(
        service: Arc<SmpService>,
        addr: impl ToSocketAddrs,
        opts: ServerOptions,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let acceptor = {
            let stop = stop.clone();
            let conns = conns.clone();
            std::thread::Builder::new()
                .name("smp-accept".into())
                .spawn(move || {
                    let mut seed = 0u64;
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(stream) = stream else { continue };
                        if let Ok(c) = stream.try_clone() {
                            conns.lock().push(c);
                        }
                        seed += 1;
                        let service = service.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = serve_connection(stream, &service, opts, seed) {
                                log::debug!("smp connection ended: {e}");
                            }
                        });
                    }
                })?
        };
        Ok(Self {
            addr,
            stop,
            conns,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and drops every open connection.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for c in self.conns.lock().drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for SmpServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

enum Outgoing {
    Lines { due: Instant, lines: Vec<String> },
    Close { due: Instant },
}

fn writer_loop(mut stream: TcpStream, rx: Receiver<Outgoing>) -> std::io::Result<()> {
    let mut buf = String::new();
    for msg in rx {
        let due = match &msg {
            Outgoing::Lines { due, .. } | Outgoing::Close { due } => *due,
        };
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        match msg {
            Outgoing::Lines { lines, .. } => {
                buf.clear();
                for l in lines {
                    buf.push_str(&l);
                    buf.push('\n');
                }
                stream.write_all(buf.as_bytes())?;
            }
            Outgoing::Close { .. } => {
                let _ = stream.shutdown(Shutdown::Both);
                break;
            }
        }
    }
    Ok(())
}

fn serve_connection(
    stream: TcpStream,
    service: &SmpService,
    opts: ServerOptions,
    seed: u64,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(opts.idle_timeout))?;
    let (tx, rx) = unbounded();
    let writer = {
        let w = stream.try_clone()?;
        std::thread::spawn(move || writer_loop(w, rx))
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut reader = BufReader::new(stream);
    let mut session = Session::default();
    let mut last_due = Instant::now();
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                let _ = tx.send(Outgoing::Lines {
                    due: last_due.max(Instant::now()),
                    lines: vec![TIMEOUT_REPLY.into()],
                });
                let _ = tx.send(Outgoing::Close { due: last_due });
                break;
            }
            Err(e) => {
                drop(tx);
                let _ = writer.join();
                return Err(e);
            }
        }
        let arrived = Instant::now();
        let lines = service.handle(&mut session, &line);
        let delay = opts.latency.sample_us(&mut rng) + opts.latency.sample_us(&mut rng);
        let due = (arrived + Duration::from_micros(delay)).max(last_due);
        last_due = due;
        if tx.send(Outgoing::Lines { due, lines }).is_err() {
            break;
        }
        if session.closing {
            let _ = tx.send(Outgoing::Close { due });
            break;
        }
    }
    drop(tx);
    let _ = writer.join();
    Ok(())
}
