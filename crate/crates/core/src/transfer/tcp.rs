//! A channel over a real TCP connection.
//!
//! One driver thread owns connecting and writing; one reader thread per
//! connection feeds reply lines into the matrix. All matrix access goes
//! through a single mutex, which is the ordering authority for the channel.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender};
use parking_lot::{Condvar, Mutex};

use super::{
    protocol_by_id, Completion, FailReason, Matrix, MetaOp, Outcome, Protocol, RequestId, RequestTemplate,
    TransferError,
};

#[derive(Debug, Clone, Copy)]
pub struct TcpChannelConfig {
    pub capacity: usize,
    pub retry_budget: u32,
    pub connect_timeout: Duration,
    /// Consecutive failed connects before queued requests are failed.
    pub max_connect_attempts: u32,
    pub reconnect_backoff: Duration,
}

impl Default for TcpChannelConfig {
    fn default() -> Self {
        Self {
            capacity: 5,
            retry_budget: super::matrix::DEFAULT_RETRY_BUDGET,
            connect_timeout: Duration::from_secs(2),
            max_connect_attempts: 3,
            reconnect_backoff: Duration::from_millis(20),
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TcpChannelStats {
    pub connects: u64,
    pub connect_failures: u64,
    pub commands_sent: u64,
    pub desyncs: u64,
}

struct State {
    matrix: Matrix,
    waiters: HashMap<RequestId, Sender<Completion>>,
    writer: Option<TcpStream>,
    generation: u64,
    closed: bool,
    handshake: Option<RequestId>,
    failed_connects: u32,
    stats: TcpChannelStats,
}

struct Inner {
    addr: SocketAddr,
    protocol: Arc<dyn Protocol>,
    cfg: TcpChannelConfig,
    state: Mutex<State>,
    wake: Condvar,
}

pub struct TcpChannel {
    inner: Arc<Inner>,
    driver: Option<JoinHandle<()>>,
}

impl TcpChannel {
    /// Opens a lazily connecting channel; the first send connects.
    pub fn open(addr: SocketAddr, protocol_id: &str, cfg: TcpChannelConfig) -> Result<Self, TransferError> {
        Self::with_protocol(addr, protocol_by_id(protocol_id)?, cfg)
    }

    pub fn with_protocol(
        addr: SocketAddr,
        protocol: Arc<dyn Protocol>,
        cfg: TcpChannelConfig,
    ) -> Result<Self, TransferError> {
        let matrix = Matrix::new(cfg.capacity)?.with_retry_budget(cfg.retry_budget);
        let inner = Arc::new(Inner {
            addr,
            protocol,
            cfg,
            state: Mutex::new(State {
                matrix,
                waiters: HashMap::new(),
                writer: None,
                generation: 0,
                closed: false,
                handshake: None,
                failed_connects: 0,
                stats: TcpChannelStats::default(),
            }),
            wake: Condvar::new(),
        });
        let driver = {
            let inner = inner.clone();
            std::thread::Builder::new()
                .name("tcp-channel".into())
                .spawn(move || drive(inner))
                .map_err(|e| TransferError::Io(e.to_string()))?
        };
        Ok(Self {
            inner,
            driver: Some(driver),
        })
    }

    pub fn protocol(&self) -> &Arc<dyn Protocol> {
        &self.inner.protocol
    }

    /// Queues a request and returns a receiver for its completion.
    pub fn send(&self, template: RequestTemplate, tag: u64) -> Receiver<Completion> {
        let (tx, rx) = bounded(1);
        let mut st = self.inner.state.lock();
        if st.closed {
            let _ = tx.send(Completion {
                id: 0,
                tag,
                outcome: Outcome::Failed(FailReason::Connection("channel closed".into())),
                space: Default::default(),
                retries: 0,
            });
            return rx;
        }
        let id = st.matrix.submit(template, tag);
        st.waiters.insert(id, tx);
        deliver(&mut st);
        self.inner.wake.notify_all();
        rx
    }

    pub fn send_wait(&self, template: RequestTemplate, tag: u64) -> Completion {
        self.send(template, tag)
            .recv()
            .expect("every accepted request completes")
    }

    pub fn request(&self, op: &MetaOp) -> Completion {
        self.send_wait(self.inner.protocol.template(op), 0)
    }

    pub fn stats(&self) -> TcpChannelStats {
        self.inner.state.lock().stats
    }

    pub fn is_connected(&self) -> bool {
        self.inner.state.lock().writer.is_some()
    }
}

impl Drop for TcpChannel {
    fn drop(&mut self) {
        {
            let mut st = self.inner.state.lock();
            st.closed = true;
            if let Some(w) = st.writer.take() {
                let _ = w.shutdown(Shutdown::Both);
            }
            st.matrix.fail_all(FailReason::Connection("channel closed".into()));
            deliver(&mut st);
        }
        self.inner.wake.notify_all();
        if let Some(h) = self.driver.take() {
            let _ = h.join();
        }
    }
}

fn deliver(st: &mut State) {
    for c in st.matrix.take_completions() {
        if Some(c.id) == st.handshake {
            st.handshake = None;
            if c.outcome != Outcome::Success {
                st.matrix
                    .fail_all(FailReason::Connection(format!("handshake failed: {:?}", c.outcome)));
                if let Some(w) = st.writer.take() {
                    let _ = w.shutdown(Shutdown::Both);
                }
            }
            continue;
        }
        if let Some(tx) = st.waiters.remove(&c.id) {
            let _ = tx.send(c);
        }
    }
    // completions produced by a failed handshake
    for c in st.matrix.take_completions() {
        if let Some(tx) = st.waiters.remove(&c.id) {
            let _ = tx.send(c);
        }
    }
}

fn drop_connection(st: &mut State) {
    if let Some(w) = st.writer.take() {
        let _ = w.shutdown(Shutdown::Both);
    }
    st.generation += 1;
    st.handshake = None;
    st.matrix.on_disconnect();
}

fn drive(inner: Arc<Inner>) {
    let mut buf = String::new();
    loop {
        let mut st = inner.state.lock();
        if st.closed {
            return;
        }
        if st.writer.is_none() {
            if st.matrix.is_idle() {
                inner.wake.wait(&mut st);
                continue;
            }
            drop(st);
            let conn = TcpStream::connect_timeout(&inner.addr, inner.cfg.connect_timeout);
            let mut st = inner.state.lock();
            if st.closed {
                return;
            }
            match conn.and_then(|s| s.set_nodelay(true).map(|_| s)) {
                Ok(stream) => {
                    st.stats.connects += 1;
                    st.failed_connects = 0;
                    st.generation += 1;
                    let generation = st.generation;
                    match stream.try_clone() {
                        Ok(reader) => {
                            st.writer = Some(stream);
                            if let Some(t) = inner.protocol.handshake() {
                                st.handshake = Some(st.matrix.submit_front(t, u64::MAX));
                            }
                            let inner2 = inner.clone();
                            std::thread::spawn(move || read_loop(inner2, reader, generation));
                        }
                        Err(e) => log::warn!("cannot clone stream: {e}"),
                    }
                }
                Err(e) => {
                    st.stats.connect_failures += 1;
                    st.failed_connects += 1;
                    if st.failed_connects >= inner.cfg.max_connect_attempts {
                        st.failed_connects = 0;
                        st.matrix.fail_all(FailReason::Connection(e.to_string()));
                        deliver(&mut st);
                    } else {
                        drop(st);
                        std::thread::sleep(inner.cfg.reconnect_backoff);
                    }
                }
            }
            continue;
        }
        let sends = st.matrix.drain_sends();
        if sends.is_empty() {
            inner.wake.wait(&mut st);
            continue;
        }
        st.stats.commands_sent += sends.len() as u64;
        let generation = st.generation;
        let mut writer = match st.writer.as_ref().map(TcpStream::try_clone) {
            Some(Ok(w)) => w,
            _ => {
                drop_connection(&mut st);
                continue;
            }
        };
        drop(st);
        buf.clear();
        for s in &sends {
            buf.push_str(&s.line);
        }
        if let Err(e) = writer.write_all(buf.as_bytes()) {
            log::debug!("write failed: {e}");
            let mut st = inner.state.lock();
            if st.generation == generation {
                drop_connection(&mut st);
            }
        }
    }
}

fn read_loop(inner: Arc<Inner>, stream: TcpStream, generation: u64) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).unwrap_or(0);
        let mut st = inner.state.lock();
        if st.generation != generation {
            return;
        }
        if n == 0 {
            drop_connection(&mut st);
            inner.wake.notify_all();
            return;
        }
        let l = line.trim_end_matches(['\r', '\n']);
        if l.starts_with("421") && st.matrix.awaiting_replies() == 0 {
            // idle close announced by the server
            drop_connection(&mut st);
            inner.wake.notify_all();
            return;
        }
        if st.matrix.on_line(l).is_err() {
            st.stats.desyncs += 1;
            drop_connection(&mut st);
            deliver(&mut st);
            inner.wake.notify_all();
            return;
        }
        deliver(&mut st);
        inner.wake.notify_all();
    }
}
