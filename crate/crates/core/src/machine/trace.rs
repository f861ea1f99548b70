use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::bus::AccessKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemNote {
    pub addr: u32,
    pub value: u32,
    pub write: bool,
}

/// Observable effects of one retired instruction or taken trap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub pc: u32,
    pub raw: u32,
    pub rd: Option<(u8, u32)>,
    pub mem: Option<MemNote>,
    /// mcause value of a trap taken at this record.
    pub trap: Option<u32>,
}

impl TraceRecord {
    pub fn mem_from(kind: AccessKind, addr: u32, value: u32) -> MemNote {
        MemNote {
            addr,
            value,
            write: kind == AccessKind::Write,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C:{} PC:{:08x} I:{:08x}", self.cycle, self.pc, self.raw)?;
        if let Some((rd, value)) = self.rd {
            write!(f, " x{rd}={value:08x}")?;
        }
        if let Some(m) = self.mem {
            let rw = if m.write { 'W' } else { 'R' };
            write!(f, " M[{:08x}]={:08x}:{rw}", m.addr, m.value)?;
        }
        if let Some(cause) = self.trap {
            write!(f, " TRAP:{cause:08x}")?;
        }
        Ok(())
    }
}

/// Where trace records go when tracing is on.
pub enum TraceSink {
    Writer(Box<dyn Write + Send>),
    Memory(Vec<TraceRecord>),
}

impl TraceSink {
    pub fn emit(&mut self, record: &TraceRecord) -> io::Result<()> {
        match self {
            TraceSink::Writer(w) => writeln!(w, "{record}"),
            TraceSink::Memory(v) => {
                v.push(*record);
                Ok(())
            }
        }
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            TraceSink::Writer(w) => w.flush(),
            TraceSink::Memory(_) => Ok(()),
        }
    }
}

impl fmt::Debug for TraceSink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSink::Writer(_) => f.write_str("TraceSink::Writer"),
            TraceSink::Memory(v) => write!(f, "TraceSink::Memory({} records)", v.len()),
        }
    }
}
