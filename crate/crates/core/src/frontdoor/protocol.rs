//! Newline-delimited JSON control protocol.

use serde_json::{json, Map, Value};

use crate::machine::{parse_u32, MachineEvent, Snapshot, StopReason};

pub const COMMANDS: [&str; 10] = [
    "run",
    "pause",
    "step",
    "reset",
    "set_switches",
    "set_gpio",
    "uart_in",
    "set_breakpoint",
    "clear_breakpoint",
    "get_snapshot",
];

/// Upper bound on `step.n`, so one command cannot monopolize the machine.
pub const MAX_STEP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Run { max_instret: Option<u64> },
    Pause,
    Step { n: u64 },
    Reset,
    SetSwitches { value: u16 },
    SetGpio { port: u8, value: u8 },
    UartIn { bytes: Vec<u8> },
    SetBreakpoint { pc: u32 },
    ClearBreakpoint { pc: u32 },
    GetSnapshot { full: bool, ram: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Value,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequestError {
    /// Not a JSON object. No id can be recovered.
    Malformed(String),
    /// Valid JSON that is not an acceptable command.
    Rejected { id: Value, message: String },
}

fn number(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => parse_u32(s).map(u64::from),
        _ => None,
    }
}

fn port(v: &Value) -> Option<u8> {
    match v {
        Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "a" => Some(0),
            "b" => Some(1),
            "c" => Some(2),
            _ => None,
        },
        _ => number(v).filter(|n| *n < 3).map(|n| n as u8),
    }
}

pub fn parse_request(line: &str) -> Result<Request, RequestError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| RequestError::Malformed(format!("malformed JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(RequestError::Malformed("malformed JSON: expected an object".into()));
    };
    let id = obj.get("id").cloned().unwrap_or(Value::Null);
    let reject = |message: String| RequestError::Rejected {
        id: id.clone(),
        message,
    };
    let cmd = match obj.get("cmd") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(reject("cmd must be a string".into())),
        None => return Err(reject("missing cmd".into())),
    };
    let arg = |key: &str| obj.get(key);
    let required = |key: &str, max: u64| {
        arg(key)
            .and_then(number)
            .filter(|v| *v <= max)
            .ok_or_else(|| reject(format!("{cmd}: `{key}` must be an integer in 0..={max}")))
    };
    let flag = |key: &str| arg(key).and_then(Value::as_bool).unwrap_or(false);

    let command = match cmd {
        "run" => Command::Run {
            max_instret: match arg("max_instret") {
                None | Some(Value::Null) => None,
                Some(_) => Some(required("max_instret", u64::MAX)?),
            },
        },
        "pause" => Command::Pause,
        "step" => Command::Step {
            n: match arg("n") {
                None => 1,
                Some(_) => required("n", MAX_STEP)?,
            },
        },
        "reset" => Command::Reset,
        "set_switches" => Command::SetSwitches {
            value: required("value", 0xFFFF)? as u16,
        },
        "set_gpio" => Command::SetGpio {
            port: arg("port")
                .and_then(port)
                .ok_or_else(|| reject("set_gpio: `port` must be \"a\", \"b\", \"c\" or 0..=2".into()))?,
            value: required("value", 0xFF)? as u8,
        },
        "uart_in" => {
            let bytes = match (arg("data"), arg("bytes")) {
                (Some(Value::String(s)), None) => s.as_bytes().to_vec(),
                (None, Some(Value::Array(items))) => items
                    .iter()
                    .map(|b| number(b).filter(|v| *v <= 0xFF).map(|v| v as u8))
                    .collect::<Option<Vec<u8>>>()
                    .ok_or_else(|| reject("uart_in: `bytes` must be integers in 0..=255".into()))?,
                _ => {
                    return Err(reject(
                        "uart_in: give exactly one of `data` (string) or `bytes` (array)".into(),
                    ))
                }
            };
            Command::UartIn { bytes }
        }
        "set_breakpoint" => Command::SetBreakpoint {
            pc: required("pc", u32::MAX as u64)? as u32,
        },
        "clear_breakpoint" => Command::ClearBreakpoint {
            pc: required("pc", u32::MAX as u64)? as u32,
        },
        "get_snapshot" => Command::GetSnapshot {
            full: flag("full"),
            ram: flag("ram"),
        },
        other => return Err(reject(format!("unknown cmd `{other}`"))),
    };
    Ok(Request { id, command })
}

/// Server-to-client message before a sequence number is attached.
pub type Outbound = Map<String, Value>;

fn object(v: Value) -> Outbound {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

pub fn ack(id: &Value, result: Result<Value, String>) -> Outbound {
    match result {
        Ok(Value::Null) => object(json!({"event": "ack", "id": id, "ok": true})),
        Ok(extra) => object(json!({"event": "ack", "id": id, "ok": true, "result": extra})),
        Err(e) => object(json!({"event": "ack", "id": id, "ok": false, "error": e})),
    }
}

pub fn error(message: &str) -> Outbound {
    object(json!({"event": "error", "id": Value::Null, "error": message}))
}

pub fn machine_event(e: &MachineEvent) -> Outbound {
    match e {
        MachineEvent::Led { value } => object(json!({"event": "led", "value": value})),
        MachineEvent::Gpio { port, dir, out } => object(json!({"event": "gpio", "port": port, "dir": dir, "out": out})),
        MachineEvent::UartOut { bytes } => object(json!({
            "event": "uart_out",
            "bytes": bytes,
            "text": String::from_utf8_lossy(bytes),
        })),
    }
}

pub fn halted(reason: &StopReason, pc: u32, instret: u64, cycles: u64) -> Outbound {
    let mut m = object(json!({
        "event": "halted",
        "reason": reason.name(),
        "pc": pc,
        "instret": instret,
        "cycles": cycles,
    }));
    if let StopReason::Fault { message } = reason {
        m.insert("message".into(), message.clone().into());
    }
    m
}

pub fn stepped(pc: u32, executed: u64, outcome: &str, instret: u64, cycles: u64) -> Outbound {
    object(json!({
        "event": "stepped",
        "pc": pc,
        "steps": executed,
        "outcome": outcome,
        "instret": instret,
        "cycles": cycles,
    }))
}

pub fn snapshot(s: &Snapshot, running: bool, full: bool) -> Outbound {
    let gpio: Vec<Value> = s
        .gpio
        .iter()
        .map(|p| {
            json!({
                "dir": p.dir,
                "out": p.out,
                "ext_in": p.ext_in,
                "pins": p.effective_in(),
                "int_en": p.int_en,
                "int_level": p.int_level,
            })
        })
        .collect();
    let c = &s.hart.csr;
    let mut m = object(json!({
        "event": "snapshot",
        "pc": s.hart.pc,
        "regs": s.hart.x,
        "csr": {
            "mstatus": c.mstatus, "mie": c.mie, "mip": c.mip, "mtvec": c.mtvec,
            "mscratch": c.mscratch, "mepc": c.mepc, "mcause": c.mcause, "mtval": c.mtval,
        },
        "leds": s.leds,
        "switches": s.switches,
        "gpio": gpio,
        "uart_rx_pending": s.uart.rx_fifo.len(),
        "instret": s.report.retired,
        "cycles": s.report.total_cycles,
        "mtime": s.clint.mtime,
        "breakpoints": s.breakpoints,
        "halted_reason": s.hart.halted,
        "running": running,
    }));
    if full {
        m.insert("machine".into(), serde_json::to_value(s).expect("snapshot serializes"));
    }
    m
}
