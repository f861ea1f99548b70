//! External inputs: live commands from a queue and scripted stimulus.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    SetSwitches {
        value: u16,
    },
    /// Drive the external levels of a GPIO port (0 = A).
    SetGpio {
        port: u8,
        value: u8,
    },
    UartIn {
        bytes: Vec<u8>,
    },
    SetBreakpoint {
        pc: u32,
    },
    ClearBreakpoint {
        pc: u32,
    },
    Pause,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusEntry {
    /// Applied once minstret reaches this value.
    pub at: u64,
    pub input: Input,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("stimulus line {line}: {msg}")]
pub struct StimulusError {
    pub line: usize,
    pub msg: String,
}

/// Scripted inputs sorted by instruction index; ties keep file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stimulus {
    entries: VecDeque<StimulusEntry>,
}

pub fn parse_u32(text: &str) -> Option<u32> {
    let t = text.replace('_', "");
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = t.strip_prefix("0b") {
        u32::from_str_radix(bin, 2).ok()
    } else {
        t.parse().ok()
    }
}

/// Decode `\n`, `\r`, `\t`, `\s` (space), `\\` and `\xHH`.
fn unescape(text: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut bytes = text.bytes();
    while let Some(b) = bytes.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        match bytes.next() {
            Some(b'n') => out.push(b'\n'),
            Some(b'r') => out.push(b'\r'),
            Some(b't') => out.push(b'\t'),
            Some(b's') => out.push(b' '),
            Some(b'\\') => out.push(b'\\'),
            Some(b'x') => {
                let hi = bytes.next();
                let lo = bytes.next();
                let pair = [hi.unwrap_or(b'?'), lo.unwrap_or(b'?')];
                let s = std::str::from_utf8(&pair).map_err(|_| "bad \\x escape")?;
                out.push(u8::from_str_radix(s, 16).map_err(|_| format!("bad \\x escape `{s}`"))?);
            }
            other => return Err(format!("unknown escape {:?}", other.map(char::from))),
        }
    }
    Ok(out)
}

fn parse_port(text: &str) -> Option<u8> {
    match text.to_ascii_lowercase().as_str() {
        "a" | "0" => Some(0),
        "b" | "1" => Some(1),
        "c" | "2" => Some(2),
        _ => None,
    }
}

impl Stimulus {
    /// Parse `<index> <command> <args>` lines. `#` starts a comment line.
    ///
    /// Commands: `switches <v>`, `gpio <a|b|c> <v>`, `uart <text>` (with
    /// escapes), `uart_hex <hh hh ..>`, `break <pc>`, `unbreak <pc>`, `pause`.
    pub fn parse(text: &str) -> Result<Self, StimulusError> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |msg: String| StimulusError { line, msg };
            let trimmed = raw.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (index, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            let at: u64 = index
                .parse()
                .map_err(|_| err(format!("bad instruction index `{index}`")))?;
            let rest = rest.trim_start();
            let (cmd, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let num = |s: &str, max: u32| {
                parse_u32(s.trim())
                    .filter(|v| *v <= max)
                    .ok_or_else(|| err(format!("bad value `{}`", s.trim())))
            };
            let input = match cmd {
                "switches" => Input::SetSwitches {
                    value: num(args, 0xFFFF)? as u16,
                },
                "gpio" => {
                    let mut it = args.split_whitespace();
                    let port = it
                        .next()
                        .and_then(parse_port)
                        .ok_or_else(|| err("gpio needs a port a, b or c".into()))?;
                    let value = num(it.next().unwrap_or(""), 0xFF)? as u8;
                    Input::SetGpio { port, value }
                }
                "uart" => Input::UartIn {
                    bytes: unescape(args.trim_end_matches(['\r', '\n'])).map_err(err)?,
                },
                "uart_hex" => Input::UartIn {
                    bytes: args
                        .split_whitespace()
                        .map(|h| u8::from_str_radix(h, 16).map_err(|_| err(format!("bad hex byte `{h}`"))))
                        .collect::<Result<_, _>>()?,
                },
                "break" => Input::SetBreakpoint {
                    pc: num(args, u32::MAX)?,
                },
                "unbreak" => Input::ClearBreakpoint {
                    pc: num(args, u32::MAX)?,
                },
                "pause" => Input::Pause,
                other => return Err(err(format!("unknown command `{other}`"))),
            };
            entries.push(StimulusEntry { at, input });
        }
        entries.sort_by_key(|e| e.at);
        Ok(Stimulus {
            entries: entries.into(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn next_index(&self) -> Option<u64> {
        self.entries.front().map(|e| e.at)
    }

    /// Remove and return every entry due at `instret`.
    pub fn due(&mut self, instret: u64) -> Vec<Input> {
        let mut out = Vec::new();
        while self.entries.front().is_some_and(|e| e.at <= instret) {
            out.push(self.entries.pop_front().unwrap().input);
        }
        out
    }

    /// Remove and return the entries sharing the earliest index.
    pub fn pop_next_batch(&mut self) -> Vec<Input> {
        match self.next_index() {
            Some(at) => self.due(at),
            None => Vec::new(),
        }
    }
}
