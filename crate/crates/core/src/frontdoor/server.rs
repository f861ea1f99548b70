//! Control-protocol server. One controller thread owns the machine; each
//! connection gets a reader and a bounded outbox drained by a writer.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::Message;

use super::protocol::{self, Command, Outbound, Request, RequestError};
use crate::machine::{Input, Machine, MachineEvent, RunLimits, StepOutcome, StopReason};

/// Instructions executed between checks of the command queue.
const SLICE: u64 = 20_000;
/// Events held per client before the oldest non-ack messages are dropped.
pub const OUTBOX_CAPACITY: usize = 1024;
const MAX_LINE: u64 = 1 << 20;
const SNIFF_TIMEOUT: Duration = Duration::from_millis(150);
const WS_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    pub port: u16,
    /// Directory served for plain HTTP GET requests.
    pub panel: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            bind: "127.0.0.1".into(),
            port: super::config::DEFAULT_PORT,
            panel: None,
        }
    }
}

struct OutboxState {
    queue: VecDeque<(bool, String)>,
    seq: u64,
    dropped: u64,
    closed: bool,
}

/// Per-connection outbound queue with per-connection sequence numbers.
pub struct Outbox {
    state: Mutex<OutboxState>,
    ready: Condvar,
    capacity: usize,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox {
            state: Mutex::new(OutboxState {
                queue: VecDeque::new(),
                seq: 0,
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
            capacity,
        }
    }

    /// Stamp `msg` with the next seq and queue it. Never blocks on the
    /// client: when full, the oldest non-ack message is discarded.
    pub fn push(&self, mut msg: Outbound) {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return;
        }
        s.seq += 1;
        msg.insert("seq".into(), s.seq.into());
        let keep = matches!(msg.get("event").and_then(Value::as_str), Some("ack" | "error"));
        if s.queue.len() >= self.capacity {
            if let Some(pos) = s.queue.iter().position(|(k, _)| !k) {
                s.queue.remove(pos);
                s.dropped += 1;
            }
        }
        s.queue.push_back((keep, Value::Object(msg).to_string()));
        self.ready.notify_one();
    }

    /// Wait up to `timeout` for messages and take them all. `None` once
    /// closed and empty.
    pub fn take(&self, timeout: Duration) -> Option<Vec<String>> {
        let mut s = self.state.lock().unwrap();
        if s.queue.is_empty() && !s.closed {
            s = self.ready.wait_timeout(s, timeout).unwrap().0;
        }
        if s.queue.is_empty() && s.closed {
            return None;
        }
        Some(s.queue.drain(..).map(|(_, line)| line).collect())
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    /// Messages discarded because the client fell behind.
    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }

    pub fn overflowed(&self) -> bool {
        self.dropped() > 0
    }
}

enum Control {
    Connect { client: u64, outbox: Arc<Outbox> },
    Disconnect { client: u64 },
    Request { client: u64, request: Request },
    Reply { client: u64, msg: Outbound },
    Shutdown,
}

struct Controller {
    machine: Machine,
    clients: BTreeMap<u64, Arc<Outbox>>,
    /// `Some(remaining)` while running; `None` inside means unbounded.
    running: Option<Option<u64>>,
    waiting_for_input: bool,
}

fn outcome_name(o: &StepOutcome) -> &'static str {
    match o {
        StepOutcome::Retired => "retired",
        StepOutcome::Trapped(_) => "trapped",
        StepOutcome::HitBreakpoint(_) => "breakpoint",
        StepOutcome::DebugHalt(_) => "debug_halt",
        StepOutcome::WfiIdle => "wfi_idle",
        StepOutcome::FaultStop(_) => "fault",
    }
}

/// Merge adjacent LED updates and adjacent UART output chunks.
fn coalesce(events: Vec<MachineEvent>) -> Vec<MachineEvent> {
    let mut out: Vec<MachineEvent> = Vec::with_capacity(events.len());
    for e in events {
        match (out.last_mut(), e) {
            (Some(MachineEvent::Led { value }), MachineEvent::Led { value: v }) => *value = v,
            (Some(MachineEvent::UartOut { bytes }), MachineEvent::UartOut { bytes: b }) => bytes.extend_from_slice(&b),
            (_, e) => out.push(e),
        }
    }
    out
}

impl Controller {
    fn send(&self, client: u64, msg: Outbound) {
        if let Some(o) = self.clients.get(&client) {
            o.push(msg);
        }
    }

    fn broadcast(&self, msg: &Outbound) {
        for o in self.clients.values() {
            o.push(msg.clone());
        }
    }

    fn publish_events(&mut self) {
        for e in coalesce(self.machine.drain_events()) {
            self.broadcast(&protocol::machine_event(&e));
        }
    }

    fn snapshot_msg(&self, full: bool, ram: bool) -> Outbound {
        protocol::snapshot(&self.machine.snapshot(ram), self.running.is_some(), full)
    }

    fn halt(&mut self, reason: &StopReason) {
        self.running = None;
        self.waiting_for_input = false;
        let r = self.machine.report();
        let msg = protocol::halted(reason, self.machine.hart.pc, r.retired, r.total_cycles);
        self.broadcast(&msg);
    }

    fn handle(&mut self, client: u64, req: Request) {
        let id = req.id;
        match req.command {
            Command::Run { max_instret } => {
                self.running = Some(max_instret);
                self.waiting_for_input = false;
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
            }
            Command::Pause => {
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
                if self.running.is_some() {
                    self.halt(&StopReason::Paused);
                }
            }
            Command::Step { n } => {
                if self.running.is_some() {
                    self.send(
                        client,
                        protocol::ack(&id, Err("machine is running; pause first".into())),
                    );
                    return;
                }
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
                let mut last = StepOutcome::Retired;
                let mut done = 0;
                while done < n {
                    last = self.machine.step();
                    // a step issued at a breakpoint steps over it
                    if matches!(last, StepOutcome::HitBreakpoint(_)) && done == 0 {
                        last = self.machine.step();
                    }
                    done += 1;
                    if matches!(
                        last,
                        StepOutcome::HitBreakpoint(_) | StepOutcome::DebugHalt(_) | StepOutcome::FaultStop(_)
                    ) {
                        break;
                    }
                }
                self.publish_events();
                let r = self.machine.report();
                let msg = protocol::stepped(
                    self.machine.hart.pc,
                    done,
                    outcome_name(&last),
                    r.retired,
                    r.total_cycles,
                );
                self.broadcast(&msg);
            }
            Command::Reset => {
                self.running = None;
                self.machine.reset();
                self.machine.drain_events();
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
                let snap = self.snapshot_msg(false, false);
                self.broadcast(&snap);
            }
            Command::SetSwitches { value } => {
                self.machine.apply_input(Input::SetSwitches { value });
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
            }
            Command::SetGpio { port, value } => {
                self.machine.apply_input(Input::SetGpio { port, value });
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
            }
            Command::UartIn { bytes } => {
                let n = bytes.len();
                self.machine.apply_input(Input::UartIn { bytes });
                self.send(client, protocol::ack(&id, Ok(json!({"queued": n}))));
            }
            Command::SetBreakpoint { pc } => {
                let added = self.machine.set_breakpoint(pc);
                self.send(client, protocol::ack(&id, Ok(json!({"added": added}))));
            }
            Command::ClearBreakpoint { pc } => {
                let removed = self.machine.clear_breakpoint(pc);
                self.send(client, protocol::ack(&id, Ok(json!({"removed": removed}))));
            }
            Command::GetSnapshot { full, ram } => {
                self.send(client, protocol::ack(&id, Ok(Value::Null)));
                let snap = self.snapshot_msg(full, ram);
                self.send(client, snap);
            }
        }
        self.waiting_for_input = false;
    }

    /// Returns false on shutdown.
    fn dispatch(&mut self, msg: Control) -> bool {
        match msg {
            Control::Connect { client, outbox } => {
                outbox.push(self.snapshot_msg(false, false));
                self.clients.insert(client, outbox);
            }
            Control::Disconnect { client } => {
                if let Some(o) = self.clients.remove(&client) {
                    o.close();
                }
            }
            Control::Request { client, request } => self.handle(client, request),
            Control::Reply { client, msg } => self.send(client, msg),
            Control::Shutdown => return false,
        }
        true
    }

    fn run_slice(&mut self) {
        let Some(budget) = self.running else { return };
        let n = budget.map_or(SLICE, |b| b.min(SLICE));
        let before = self.machine.instret();
        let reason = if n == 0 {
            StopReason::InstretLimit
        } else {
            self.machine.run(RunLimits {
                max_instret: Some(n),
                max_cycles: None,
            })
        };
        let ran = self.machine.instret() - before;
        self.publish_events();
        let remaining = budget.map(|b| b - ran.min(b));
        match reason {
            StopReason::InstretLimit if remaining == Some(0) => self.halt(&reason),
            StopReason::InstretLimit => self.running = Some(remaining),
            StopReason::Idle => {
                self.running = Some(remaining);
                self.waiting_for_input = true;
            }
            other => self.halt(&other),
        }
    }

    fn main_loop(mut self, rx: Receiver<Control>) -> Machine {
        loop {
            let busy = self.running.is_some() && !self.waiting_for_input;
            let first = if busy {
                match rx.try_recv() {
                    Ok(m) => Some(m),
                    Err(TryRecvError::Empty) => None,
                    Err(TryRecvError::Disconnected) => break,
                }
            } else {
                match rx.recv_timeout(Duration::from_millis(50)) {
                    Ok(m) => Some(m),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            };
            if let Some(msg) = first {
                if !self.dispatch(msg) {
                    break;
                }
                let mut stop = false;
                while let Ok(msg) = rx.try_recv() {
                    if !self.dispatch(msg) {
                        stop = true;
                        break;
                    }
                }
                if stop {
                    break;
                }
            }
            self.run_slice();
        }
        for o in self.clients.values() {
            o.close();
        }
        self.machine
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    ctl: Sender<Control>,
    accept: JoinHandle<()>,
    controller: JoinHandle<Machine>,
    sockets: Arc<Mutex<Vec<TcpStream>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the server stops on its own (it normally does not).
    pub fn join(self) -> Machine {
        let _ = self.accept.join();
        self.controller.join().expect("controller thread panicked")
    }

    /// Stop accepting, close every connection and hand back the machine.
    pub fn shutdown(self) -> Machine {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.ctl.send(Control::Shutdown);
        let _ = TcpStream::connect(self.addr);
        let _ = self.accept.join();
        for s in self.sockets.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        self.controller.join().expect("controller thread panicked")
    }
}

/// Bind and start serving in background threads.
pub fn start(mut machine: Machine, opts: &ServeOptions) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind((opts.bind.as_str(), opts.port))?;
    let addr = listener.local_addr()?;
    machine.set_debug_attached(true);
    // Live inputs exist from now on, so WFI waits rather than deadlocking.
    let _ = machine.input_handle();
    let (ctl, rx) = mpsc::channel();
    let controller = thread::Builder::new().name("rvmcu-controller".into()).spawn(move || {
        Controller {
            machine,
            clients: BTreeMap::new(),
            running: None,
            waiting_for_input: false,
        }
        .main_loop(rx)
    })?;
    let stop = Arc::new(AtomicBool::new(false));
    let sockets = Arc::new(Mutex::new(Vec::new()));
    let accept = {
        let (stop, ctl, sockets) = (stop.clone(), ctl.clone(), sockets.clone());
        let panel = opts.panel.clone();
        thread::Builder::new().name("rvmcu-accept".into()).spawn(move || {
            let next_id = AtomicU64::new(1);
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Ok(clone) = stream.try_clone() {
                    let mut list = sockets.lock().unwrap();
                    list.retain(|s: &TcpStream| s.peer_addr().is_ok());
                    list.push(clone);
                }
                let client = next_id.fetch_add(1, Ordering::Relaxed);
                let (ctl, panel) = (ctl.clone(), panel.clone());
                let _ = thread::Builder::new()
                    .name(format!("rvmcu-client-{client}"))
                    .spawn(move || connection(stream, client, ctl, panel.as_deref()));
            }
        })?
    };
    Ok(ServerHandle {
        addr,
        stop,
        ctl,
        accept,
        controller,
        sockets,
    })
}

/// Serve until the process exits.
pub fn serve(machine: Machine, opts: &ServeOptions) -> io::Result<()> {
    start(machine, opts)?.join();
    Ok(())
}

fn forward(ctl: &Sender<Control>, client: u64, line: &str) {
    let msg = match protocol::parse_request(line) {
        Ok(request) => Control::Request { client, request },
        Err(RequestError::Malformed(e)) => Control::Reply {
            client,
            msg: protocol::error(&e),
        },
        Err(RequestError::Rejected { id, message }) => Control::Reply {
            client,
            msg: protocol::ack(&id, Err(message)),
        },
    };
    let _ = ctl.send(msg);
}

/// Peek at the first bytes to tell HTTP from a raw protocol client. A
/// client that stays silent is a protocol client.
fn sniff_http(stream: &TcpStream) -> bool {
    let _ = stream.set_read_timeout(Some(SNIFF_TIMEOUT));
    let mut buf = [0u8; 4];
    let mut http = false;
    for _ in 0..10 {
        match stream.peek(&mut buf) {
            Ok(4) => {
                http = &buf == b"GET ";
                break;
            }
            Ok(n) if n > 0 && buf[..n] == b"GET "[..n] => thread::sleep(Duration::from_millis(10)),
            _ => break,
        }
    }
    let _ = stream.set_read_timeout(None);
    http
}

fn peek_header(stream: &TcpStream) -> Option<String> {
    let mut buf = vec![0u8; 8192];
    for _ in 0..50 {
        let n = stream.peek(&mut buf).ok()?;
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            return Some(String::from_utf8_lossy(&buf[..end + 4]).into_owned());
        }
        if n == buf.len() {
            return None;
        }
        thread::sleep(Duration::from_millis(10));
    }
    None
}

/// Handle one connection, then shut the socket down explicitly: the accept
/// loop holds a clone, so dropping ours would not close it.
fn connection(stream: TcpStream, client: u64, ctl: Sender<Control>, panel: Option<&Path>) {
    let closer = stream.try_clone();
    serve_connection(stream, client, ctl, panel);
    if let Ok(s) = closer {
        let _ = s.shutdown(Shutdown::Both);
    }
}

fn serve_connection(stream: TcpStream, client: u64, ctl: Sender<Control>, panel: Option<&Path>) {
    let _ = stream.set_nodelay(true);
    if sniff_http(&stream) {
        let Some(header) = peek_header(&stream) else { return };
        let upgrade = header.lines().any(|l| {
            let l = l.to_ascii_lowercase();
            l.starts_with("upgrade:") && l.contains("websocket")
        });
        if upgrade {
            websocket(stream, client, ctl);
        } else {
            let mut stream = stream;
            let mut consumed = vec![0u8; header.len()];
            if stream.read_exact(&mut consumed).is_ok() {
                let _ = serve_static(&mut stream, &header, panel);
            }
        }
        return;
    }
    ndjson(stream, client, ctl);
}

fn ndjson(stream: TcpStream, client: u64, ctl: Sender<Control>) {
    let outbox = Arc::new(Outbox::new(OUTBOX_CAPACITY));
    let Ok(mut out) = stream.try_clone() else { return };
    let writer = {
        let outbox = outbox.clone();
        thread::spawn(move || {
            while let Some(lines) = outbox.take(Duration::from_millis(200)) {
                for line in lines {
                    if out
                        .write_all(line.as_bytes())
                        .and_then(|_| out.write_all(b"\n"))
                        .is_err()
                    {
                        outbox.close();
                        return;
                    }
                }
                let _ = out.flush();
            }
        })
    };
    let _ = ctl.send(Control::Connect {
        client,
        outbox: outbox.clone(),
    });
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match (&mut reader).take(MAX_LINE).read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if buf.len() as u64 >= MAX_LINE && buf.last() != Some(&b'\n') {
            let _ = ctl.send(Control::Reply {
                client,
                msg: protocol::error("line exceeds 1 MiB; closing"),
            });
            break;
        }
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim();
        if !line.is_empty() {
            forward(&ctl, client, line);
        }
    }
    let _ = ctl.send(Control::Disconnect { client });
    outbox.close();
    let _ = writer.join();
}

fn websocket(stream: TcpStream, client: u64, ctl: Sender<Control>) {
    let Ok(mut ws) = tungstenite::accept(stream) else {
        return;
    };
    let _ = ws.get_ref().set_read_timeout(Some(WS_POLL));
    let outbox = Arc::new(Outbox::new(OUTBOX_CAPACITY));
    let _ = ctl.send(Control::Connect {
        client,
        outbox: outbox.clone(),
    });
    'conn: loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.as_str().lines().map(str::trim).filter(|l| !l.is_empty()) {
                    forward(&ctl, client, line);
                }
            }
            Ok(Message::Binary(bytes)) => {
                forward(&ctl, client, &String::from_utf8_lossy(&bytes));
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        match outbox.take(Duration::ZERO) {
            None => break,
            Some(lines) => {
                for line in lines {
                    if ws.send(Message::text(line)).is_err() {
                        break 'conn;
                    }
                }
                let _ = ws.flush();
            }
        }
    }
    let _ = ctl.send(Control::Disconnect { client });
    outbox.close();
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") | Some("htm") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Map a request target onto a file below `root`, refusing escapes.
pub fn resolve_static(root: &Path, target: &str) -> Option<PathBuf> {
    let path = target.split(['?', '#']).next()?;
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

fn serve_static(stream: &mut TcpStream, header: &str, panel: Option<&Path>) -> io::Result<()> {
    let target = header.split_whitespace().nth(1).unwrap_or("/");
    let file = panel.and_then(|root| resolve_static(root, target));
    let (status, ctype, body) = match file.as_deref().map(|p| (p, std::fs::read(p))) {
        Some((p, Ok(body))) => ("200 OK", content_type(p), body),
        _ => (
            "404 Not Found",
            "text/plain; charset=utf-8",
            if panel.is_none() {
                b"no panel directory configured; protocol clients connect to this port directly\n".to_vec()
            } else {
                b"not found\n".to_vec()
            },
        ),
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(&body)?;
    stream.flush()
}
