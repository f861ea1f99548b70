//! C ABI for the rvmcu simulator.
//!
//! Every function returns an [`RvmcuStatus`]. Machines are opaque handles
//! created by [`rvmcu_new`] and released by [`rvmcu_free`]. On failure the
//! handle keeps a message readable through [`rvmcu_last_error`]. Panics
//! never cross the boundary; they surface as `RVMCU_STATUS_PANIC`.
//!
//! # Safety
//!
//! Handle arguments must be null or a live pointer from [`rvmcu_new`], used
//! by one thread at a time. Buffer arguments must be null or valid for the
//! stated length, and string arguments NUL-terminated. Null is reported as
//! `RVMCU_STATUS_NULL_POINTER` wherever a value is required.
#![allow(clippy::missing_safety_doc)]

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use rvmcu::bus::{Width, DEFAULT_BANK_SIZE};
use rvmcu::frontdoor::protocol;
use rvmcu::machine::{
    Firmware, ImageFormat, Machine, MachineConfig, MachineEvent, RunLimits, StepOutcome, Stimulus, StopReason,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvmcuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LoadError = 3,
    ConfigError = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvmcuStep {
    Retired = 0,
    Trapped = 1,
    Breakpoint = 2,
    DebugHalt = 3,
    WfiIdle = 4,
    Fault = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvmcuStop {
    InstretLimit = 0,
    CycleLimit = 1,
    Breakpoint = 2,
    DebugHalt = 3,
    Paused = 4,
    WfiDeadlock = 5,
    Idle = 6,
    Fault = 7,
}

/// Opaque machine handle.
pub struct RvmcuMachine {
    machine: Machine,
    uart_out: Vec<u8>,
    last_error: CString,
}

impl RvmcuMachine {
    fn fail(&mut self, status: RvmcuStatus, message: impl Into<String>) -> RvmcuStatus {
        let text = message.into().replace('\0', " ");
        self.last_error = CString::new(text).unwrap_or_default();
        status
    }

    /// Move pending machine events into host-visible buffers.
    fn collect(&mut self) {
        for e in self.machine.drain_events() {
            if let MachineEvent::UartOut { bytes } = e {
                self.uart_out.extend(bytes);
            }
        }
    }
}

fn guard(f: impl FnOnce() -> RvmcuStatus) -> RvmcuStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(RvmcuStatus::Panic)
}

/// Run `f` on a live handle.
fn with(m: *mut RvmcuMachine, f: impl FnOnce(&mut RvmcuMachine) -> RvmcuStatus) -> RvmcuStatus {
    guard(|| match unsafe { m.as_mut() } {
        Some(h) => f(h),
        None => RvmcuStatus::NullPointer,
    })
}

/// Store `value` through an out-pointer.
fn put<T>(out: *mut T, value: T) -> RvmcuStatus {
    match unsafe { out.as_mut() } {
        Some(slot) => {
            *slot = value;
            RvmcuStatus::Ok
        }
        None => RvmcuStatus::NullPointer,
    }
}

/// Borrow `len` bytes at `data`. A zero length accepts a null pointer.
fn bytes<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(unsafe { slice::from_raw_parts(data, len) })
    }
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn rvmcu_status_str(status: RvmcuStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RvmcuStatus::Ok => c"ok",
        RvmcuStatus::NullPointer => c"null pointer",
        RvmcuStatus::InvalidArgument => c"invalid argument",
        RvmcuStatus::LoadError => c"firmware load error",
        RvmcuStatus::ConfigError => c"configuration error",
        RvmcuStatus::OutOfRange => c"address or index out of range",
        RvmcuStatus::BufferTooSmall => c"buffer too small",
        RvmcuStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rvmcu_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Create a machine. `bank_size` 0 selects the default. With `timing`
/// false every instruction costs one cycle.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_new(bank_size: u32, timing: bool, out: *mut *mut RvmcuMachine) -> RvmcuStatus {
    guard(|| {
        if out.is_null() {
            return RvmcuStatus::NullPointer;
        }
        let config = MachineConfig {
            bank_size: if bank_size == 0 { DEFAULT_BANK_SIZE } else { bank_size },
            timing_enabled: timing,
            ..MachineConfig::default()
        };
        let status = match Machine::new(config) {
            Ok(machine) => {
                let h = Box::new(RvmcuMachine {
                    machine,
                    uart_out: Vec::new(),
                    last_error: CString::default(),
                });
                put(out, Box::into_raw(h))
            }
            Err(_) => RvmcuStatus::ConfigError,
        };
        if status != RvmcuStatus::Ok {
            put(out, ptr::null_mut());
        }
        status
    })
}

/// Release a machine. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_free(m: *mut RvmcuMachine) {
    if !m.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(m) })));
    }
}

/// Message for the last failed call on this handle, or "". Valid until the
/// next call on the same handle.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_last_error(m: *const RvmcuMachine) -> *const c_char {
    match unsafe { m.as_ref() } {
        Some(h) => h.last_error.as_ptr(),
        None => c"".as_ptr(),
    }
}

fn load(h: &mut RvmcuMachine, fw: Result<Firmware, rvmcu::machine::LoadError>, entry: *mut u32) -> RvmcuStatus {
    match fw.and_then(|fw| h.machine.load(fw)) {
        Ok(pc) => {
            h.uart_out.clear();
            if entry.is_null() {
                RvmcuStatus::Ok
            } else {
                put(entry, pc)
            }
        }
        Err(e) => h.fail(RvmcuStatus::LoadError, e.to_string()),
    }
}

/// Load an ELF32 image from memory. `entry` may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_load_elf(
    m: *mut RvmcuMachine,
    data: *const u8,
    len: usize,
    entry: *mut u32,
) -> RvmcuStatus {
    with(m, |h| match bytes(data, len) {
        Some(b) => load(h, Firmware::from_bytes(b, ImageFormat::Elf), entry),
        None => RvmcuStatus::NullPointer,
    })
}

/// Load a flat binary at `base`. `entry` may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_load_bin(
    m: *mut RvmcuMachine,
    data: *const u8,
    len: usize,
    base: u32,
    entry: *mut u32,
) -> RvmcuStatus {
    with(m, |h| match bytes(data, len) {
        Some(b) => load(h, Firmware::from_bytes(b, ImageFormat::Flat { base }), entry),
        None => RvmcuStatus::NullPointer,
    })
}

/// Load firmware from a file. `is_elf` false loads a flat binary at `base`.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_load_file(
    m: *mut RvmcuMachine,
    path: *const c_char,
    is_elf: bool,
    base: u32,
    entry: *mut u32,
) -> RvmcuStatus {
    with(m, |h| {
        if path.is_null() {
            return RvmcuStatus::NullPointer;
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return h.fail(RvmcuStatus::InvalidArgument, "path is not UTF-8");
        };
        let format = if is_elf {
            ImageFormat::Elf
        } else {
            ImageFormat::Flat { base }
        };
        load(h, Firmware::from_path(Path::new(path), format), entry)
    })
}

/// Install an instruction-indexed stimulus script (same text format as the
/// command line).
#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_stimulus(m: *mut RvmcuMachine, script: *const c_char) -> RvmcuStatus {
    with(m, |h| {
        if script.is_null() {
            return RvmcuStatus::NullPointer;
        }
        let text = unsafe { CStr::from_ptr(script) }.to_string_lossy();
        match Stimulus::parse(&text) {
            Ok(s) => {
                h.machine.set_stimulus(s);
                RvmcuStatus::Ok
            }
            Err(e) => h.fail(RvmcuStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Back to power-on state with the firmware reloaded.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_reset(m: *mut RvmcuMachine) -> RvmcuStatus {
    with(m, |h| {
        h.machine.reset();
        h.machine.drain_events();
        h.uart_out.clear();
        RvmcuStatus::Ok
    })
}

/// EBREAK halts instead of trapping while a debugger is attached.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_debug(m: *mut RvmcuMachine, attached: bool) -> RvmcuStatus {
    with(m, |h| {
        h.machine.set_debug_attached(attached);
        RvmcuStatus::Ok
    })
}

/// One step boundary. `result` may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_step(m: *mut RvmcuMachine, result: *mut RvmcuStep) -> RvmcuStatus {
    with(m, |h| {
        let r = match h.machine.step() {
            StepOutcome::Retired => RvmcuStep::Retired,
            StepOutcome::Trapped(_) => RvmcuStep::Trapped,
            StepOutcome::HitBreakpoint(_) => RvmcuStep::Breakpoint,
            StepOutcome::DebugHalt(_) => RvmcuStep::DebugHalt,
            StepOutcome::WfiIdle => RvmcuStep::WfiIdle,
            StepOutcome::FaultStop(msg) => {
                h.fail(RvmcuStatus::Ok, msg);
                RvmcuStep::Fault
            }
        };
        h.collect();
        if result.is_null() {
            RvmcuStatus::Ok
        } else {
            put(result, r)
        }
    })
}

/// Run until a limit or a halt. A zero limit means unbounded; with both
/// zero the run ends only on a halt. `reason` may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_run(
    m: *mut RvmcuMachine,
    max_instret: u64,
    max_cycles: u64,
    reason: *mut RvmcuStop,
) -> RvmcuStatus {
    with(m, |h| {
        let limits = RunLimits {
            max_instret: (max_instret > 0).then_some(max_instret),
            max_cycles: (max_cycles > 0).then_some(max_cycles),
        };
        let stop = h.machine.run(limits);
        h.collect();
        let r = match stop {
            StopReason::InstretLimit => RvmcuStop::InstretLimit,
            StopReason::CycleLimit => RvmcuStop::CycleLimit,
            StopReason::Breakpoint { .. } => RvmcuStop::Breakpoint,
            StopReason::DebugHalt { .. } => RvmcuStop::DebugHalt,
            StopReason::Paused => RvmcuStop::Paused,
            StopReason::WfiDeadlock => RvmcuStop::WfiDeadlock,
            StopReason::Idle => RvmcuStop::Idle,
            StopReason::Fault { message } => {
                h.fail(RvmcuStatus::Ok, message);
                RvmcuStop::Fault
            }
        };
        if reason.is_null() {
            RvmcuStatus::Ok
        } else {
            put(reason, r)
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rvmcu_pc(m: *mut RvmcuMachine, out: *mut u32) -> RvmcuStatus {
    with(m, |h| put(out, h.machine.hart.pc))
}

/// Read general-purpose register `index` (0..=31).
#[no_mangle]
pub unsafe extern "C" fn rvmcu_reg(m: *mut RvmcuMachine, index: u32, out: *mut u32) -> RvmcuStatus {
    with(m, |h| match h.machine.hart.x.get(index as usize) {
        Some(v) => put(out, *v),
        None => RvmcuStatus::OutOfRange,
    })
}

/// Write general-purpose register `index`. Writes to x0 are ignored.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_reg(m: *mut RvmcuMachine, index: u32, value: u32) -> RvmcuStatus {
    with(m, |h| {
        if index >= 32 {
            return RvmcuStatus::OutOfRange;
        }
        h.machine.hart.set_reg(index as u8, value);
        RvmcuStatus::Ok
    })
}

/// Retired instructions and elapsed cycles. Either pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_counters(m: *mut RvmcuMachine, instret: *mut u64, cycles: *mut u64) -> RvmcuStatus {
    with(m, |h| {
        let r = h.machine.report();
        let (i, c) = (r.retired, r.total_cycles);
        if !instret.is_null() {
            put(instret, i);
        }
        if !cycles.is_null() {
            put(cycles, c);
        }
        RvmcuStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_switches(m: *mut RvmcuMachine, value: u16) -> RvmcuStatus {
    with(m, |h| {
        h.machine.bus.gp_special.switches = value;
        RvmcuStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rvmcu_leds(m: *mut RvmcuMachine, out: *mut u16) -> RvmcuStatus {
    with(m, |h| put(out, h.machine.bus.gp_special.led))
}

/// Drive the external input pins of GPIO port 0..=2 (A..C).
#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_gpio(m: *mut RvmcuMachine, port: u32, value: u8) -> RvmcuStatus {
    with(m, |h| match h.machine.bus.gpio.get_mut(port as usize) {
        Some(p) => {
            p.ext_in = value;
            RvmcuStatus::Ok
        }
        None => RvmcuStatus::OutOfRange,
    })
}

/// Direction and output latches of a GPIO port. Either pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_gpio(m: *mut RvmcuMachine, port: u32, dir: *mut u8, out: *mut u8) -> RvmcuStatus {
    with(m, |h| match h.machine.bus.gpio.get(port as usize) {
        Some(p) => {
            let (d, o) = (p.dir, p.out);
            if !dir.is_null() {
                put(dir, d);
            }
            if !out.is_null() {
                put(out, o);
            }
            RvmcuStatus::Ok
        }
        None => RvmcuStatus::OutOfRange,
    })
}

/// Queue bytes on the UART receiver. `accepted` (may be null) receives how
/// many fit in the receive FIFO.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_uart_push(
    m: *mut RvmcuMachine,
    data: *const u8,
    len: usize,
    accepted: *mut usize,
) -> RvmcuStatus {
    with(m, |h| {
        let Some(b) = bytes(data, len) else {
            return RvmcuStatus::NullPointer;
        };
        let n = b.iter().take_while(|&&byte| h.machine.bus.uart.inject(byte)).count();
        if !accepted.is_null() {
            put(accepted, n);
        }
        RvmcuStatus::Ok
    })
}

/// Take up to `cap` bytes of UART output. `written` receives the count.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_uart_take(
    m: *mut RvmcuMachine,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> RvmcuStatus {
    with(m, |h| {
        if written.is_null() || (buf.is_null() && cap > 0) {
            return RvmcuStatus::NullPointer;
        }
        h.collect();
        let n = cap.min(h.uart_out.len());
        if n > 0 {
            unsafe { ptr::copy_nonoverlapping(h.uart_out.as_ptr(), buf, n) };
        }
        h.uart_out.drain(..n);
        put(written, n)
    })
}

/// `added` (may be null) is false when the breakpoint already existed.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_set_breakpoint(m: *mut RvmcuMachine, pc: u32, added: *mut bool) -> RvmcuStatus {
    with(m, |h| {
        let a = h.machine.set_breakpoint(pc);
        if !added.is_null() {
            put(added, a);
        }
        RvmcuStatus::Ok
    })
}

/// `removed` (may be null) is false when no breakpoint was set there.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_clear_breakpoint(m: *mut RvmcuMachine, pc: u32, removed: *mut bool) -> RvmcuStatus {
    with(m, |h| {
        let r = h.machine.clear_breakpoint(pc);
        if !removed.is_null() {
            put(removed, r);
        }
        RvmcuStatus::Ok
    })
}

/// Copy RAM into `buf` without side effects. The whole range must be RAM.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_read_mem(m: *mut RvmcuMachine, addr: u32, buf: *mut u8, len: usize) -> RvmcuStatus {
    with(m, |h| {
        if buf.is_null() && len > 0 {
            return RvmcuStatus::NullPointer;
        }
        let Ok(n) = u32::try_from(len) else {
            return RvmcuStatus::OutOfRange;
        };
        if n > 0 && h.machine.bus.ram_offset(addr, n).is_none() {
            return h.fail(RvmcuStatus::OutOfRange, format!("{addr:#010x}+{len} is not RAM"));
        }
        let out = unsafe { slice::from_raw_parts_mut(buf, len) };
        for (i, b) in out.iter_mut().enumerate() {
            *b = h.machine.bus.peek(addr + i as u32, Width::Byte).unwrap_or(0) as u8;
        }
        RvmcuStatus::Ok
    })
}

/// Write bytes into RAM. The whole range must be RAM.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_write_mem(m: *mut RvmcuMachine, addr: u32, data: *const u8, len: usize) -> RvmcuStatus {
    with(m, |h| {
        let Some(b) = bytes(data, len) else {
            return RvmcuStatus::NullPointer;
        };
        match h.machine.bus.load_bytes(addr, b) {
            Ok(()) => RvmcuStatus::Ok,
            Err(at) => h.fail(RvmcuStatus::OutOfRange, format!("{at:#010x} is not RAM")),
        }
    })
}

/// Machine state as the JSON `snapshot` message of the control protocol,
/// NUL-terminated. `needed` receives the size including the terminator;
/// when `cap` is smaller nothing is written and the call reports
/// `RVMCU_STATUS_BUFFER_TOO_SMALL`.
#[no_mangle]
pub unsafe extern "C" fn rvmcu_snapshot_json(
    m: *mut RvmcuMachine,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> RvmcuStatus {
    with(m, |h| {
        let msg = protocol::snapshot(&h.machine.snapshot(false), false, false);
        let text = serde_json::Value::Object(msg).to_string();
        let size = text.len() + 1;
        if !needed.is_null() {
            put(needed, size);
        }
        if cap < size {
            return RvmcuStatus::BufferTooSmall;
        }
        if buf.is_null() {
            return RvmcuStatus::NullPointer;
        }
        unsafe {
            ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
            *buf.add(text.len()) = 0;
        }
        RvmcuStatus::Ok
    })
}
