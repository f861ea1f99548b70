//! The simulation loop: interrupts, breakpoints, fetch/decode/execute,
//! cycle charging, trace and device events.

mod input;
mod loader;
mod trace;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};

pub use input::{parse_u32, Input, Stimulus, StimulusEntry, StimulusError};
pub use loader::{Firmware, ImageFormat, LoadError, Segment};
pub use trace::{MemNote, TraceRecord, TraceSink};

use crate::bus::{Bus, MapError, Width, DEFAULT_BANK_SIZE};
use crate::hart::{cause, ExecOutcome, HaltReason, HartState, TrapCause};
use crate::irq::{Clint, Plic, MIP_MTIP};
use crate::isa::{decode, InstrClass, Op};
use crate::periph::{GpSpecial, GpioPort, Spi, Uart};
use crate::timing::{CycleReport, TimingConstants, TimingContext};

/// Longest stretch of idle cycles skipped in one go while waiting in WFI.
const IDLE_CHUNK: u64 = 4096;
const EVENT_BACKLOG: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub bank_size: u32,
    pub timing: TimingConstants,
    /// When false every instruction and trap costs one cycle and there is
    /// no pipeline fill.
    pub timing_enabled: bool,
    /// EBREAK halts the machine instead of trapping.
    pub debug_attached: bool,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            bank_size: DEFAULT_BANK_SIZE,
            timing: TimingConstants::default(),
            timing_enabled: true,
            debug_attached: false,
        }
    }
}

impl MachineConfig {
    fn effective_timing(&self) -> TimingConstants {
        if self.timing_enabled {
            self.timing
        } else {
            TimingConstants {
                fill: 0,
                flush: 0,
                load_use: 0,
                mul_extra: 0,
                div_extra: 0,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Paused,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Retired,
    Trapped(TrapCause),
    HitBreakpoint(u32),
    /// EBREAK retired with a debugger attached.
    DebugHalt(u32),
    WfiIdle,
    FaultStop(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Breakpoint {
        pc: u32,
    },
    DebugHalt {
        pc: u32,
    },
    InstretLimit,
    CycleLimit,
    Paused,
    /// Waiting in WFI with nothing that could ever wake the hart.
    WfiDeadlock,
    /// Waiting in WFI for live input.
    Idle,
    Fault {
        message: String,
    },
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::Breakpoint { .. } => "breakpoint",
            StopReason::DebugHalt { .. } => "debug_halt",
            StopReason::InstretLimit => "instret_limit",
            StopReason::CycleLimit => "cycle_limit",
            StopReason::Paused => "paused",
            StopReason::WfiDeadlock => "wfi_deadlock",
            StopReason::Idle => "idle",
            StopReason::Fault { .. } => "fault",
        }
    }

    /// A stop the caller asked for or that leaves the guest resumable.
    pub fn is_clean(&self) -> bool {
        !matches!(self, StopReason::Fault { .. })
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Breakpoint { pc } | StopReason::DebugHalt { pc } => {
                write!(f, "{} at {pc:#010x}", self.name())
            }
            StopReason::Fault { message } => write!(f, "fault: {message}"),
            _ => f.write_str(self.name()),
        }
    }
}

/// Limits relative to the start of a `run` call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunLimits {
    pub max_instret: Option<u64>,
    pub max_cycles: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MachineEvent {
    Led { value: u16 },
    Gpio { port: u8, dir: u8, out: u8 },
    UartOut { bytes: Vec<u8> },
}

/// Serializable copy of all guest-visible state except, optionally, RAM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub hart: HartState,
    pub clint: Clint,
    pub plic: Plic,
    pub gpio: [GpioPort; 3],
    pub gp_special: GpSpecial,
    pub uart: Uart,
    pub spi: Spi,
    pub report: CycleReport,
    pub prev_load_rd: Option<u8>,
    pub skip_breakpoint: Option<u32>,
    pub breakpoints: Vec<u32>,
    pub leds: u16,
    pub switches: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ram: Option<Vec<u8>>,
}

pub type EventSink = Box<dyn FnMut(MachineEvent) + Send>;

pub struct Machine {
    pub hart: HartState,
    pub bus: Bus,
    config: MachineConfig,
    report: CycleReport,
    prev_load_rd: Option<u8>,
    breakpoints: BTreeSet<u32>,
    skip_breakpoint: Option<u32>,
    run_state: RunState,
    trace: Option<TraceSink>,
    trace_error: Option<std::io::Error>,
    input_tx: Sender<Input>,
    input_rx: Receiver<Input>,
    live_inputs: bool,
    stimulus: Stimulus,
    stimulus_script: Stimulus,
    pause_requested: bool,
    events: VecDeque<MachineEvent>,
    events_dropped: u64,
    event_sink: Option<EventSink>,
    firmware: Option<Firmware>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("pc", &self.hart.pc)
            .field("run_state", &self.run_state)
            .field("instret", &self.report.retired)
            .field("cycles", &self.report.total_cycles)
            .finish_non_exhaustive()
    }
}

impl Machine {
    pub fn new(config: MachineConfig) -> Result<Self, MapError> {
        let (input_tx, input_rx) = channel();
        let report = CycleReport::new(config.effective_timing());
        let mut m = Machine {
            hart: HartState::default(),
            bus: Bus::new(config.bank_size)?,
            config,
            report,
            prev_load_rd: None,
            breakpoints: BTreeSet::new(),
            skip_breakpoint: None,
            run_state: RunState::Paused,
            trace: None,
            trace_error: None,
            input_tx,
            input_rx,
            live_inputs: false,
            stimulus: Stimulus::default(),
            stimulus_script: Stimulus::default(),
            pause_requested: false,
            events: VecDeque::new(),
            events_dropped: 0,
            event_sink: None,
            firmware: None,
        };
        m.power_on();
        Ok(m)
    }

    fn power_on(&mut self) {
        let fill = self.report.constants.fill;
        self.hart.mcycle = fill;
        self.bus.clint.tick(fill);
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn set_debug_attached(&mut self, attached: bool) {
        self.config.debug_attached = attached;
    }

    pub fn report(&self) -> &CycleReport {
        &self.report
    }

    pub fn run_state(&self) -> RunState {
        self.run_state
    }

    pub fn instret(&self) -> u64 {
        self.report.retired
    }

    /// Copy a firmware image into RAM and jump to its entry point.
    pub fn load(&mut self, fw: Firmware) -> Result<u32, LoadError> {
        fw.install(&mut self.bus)?;
        self.hart.pc = fw.entry;
        let entry = fw.entry;
        self.firmware = Some(fw);
        Ok(entry)
    }

    pub fn load_flat(&mut self, bytes: &[u8], base: u32) -> Result<u32, LoadError> {
        self.load(Firmware::flat(bytes, base))
    }

    pub fn load_elf(&mut self, bytes: &[u8]) -> Result<u32, LoadError> {
        self.load(Firmware::parse_elf(bytes)?)
    }

    /// Back to power-on state with the firmware reloaded. Breakpoints,
    /// trace sink and scripted stimulus are kept; the stimulus restarts.
    pub fn reset(&mut self) {
        let bank_size = self.config.bank_size;
        self.hart = HartState::default();
        self.bus = Bus::new(bank_size).expect("validated at construction");
        self.report = CycleReport::new(self.config.effective_timing());
        self.prev_load_rd = None;
        self.skip_breakpoint = None;
        self.run_state = RunState::Paused;
        self.pause_requested = false;
        self.stimulus = self.stimulus_script.clone();
        self.power_on();
        if let Some(fw) = self.firmware.clone() {
            fw.install(&mut self.bus).expect("image loaded before");
            self.hart.pc = fw.entry;
        }
    }

    pub fn set_stimulus(&mut self, stimulus: Stimulus) {
        self.stimulus_script = stimulus.clone();
        self.stimulus = stimulus;
    }

    pub fn set_trace(&mut self, sink: Option<TraceSink>) {
        self.trace = sink;
        self.trace_error = None;
    }

    pub fn take_trace(&mut self) -> Option<TraceSink> {
        if let Some(t) = self.trace.as_mut() {
            let _ = t.flush();
        }
        self.trace.take()
    }

    pub fn flush_trace(&mut self) -> std::io::Result<()> {
        if let Some(e) = self.trace_error.take() {
            return Err(e);
        }
        match self.trace.as_mut() {
            Some(t) => t.flush(),
            None => Ok(()),
        }
    }

    /// Sender for live inputs, applied at the next step boundary.
    pub fn input_handle(&mut self) -> Sender<Input> {
        self.live_inputs = true;
        self.input_tx.clone()
    }

    pub fn set_event_sink(&mut self, sink: Option<EventSink>) {
        self.event_sink = sink;
    }

    pub fn drain_events(&mut self) -> Vec<MachineEvent> {
        self.events.drain(..).collect()
    }

    pub fn events_dropped(&self) -> u64 {
        self.events_dropped
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = u32> + '_ {
        self.breakpoints.iter().copied()
    }

    pub fn set_breakpoint(&mut self, pc: u32) -> bool {
        self.breakpoints.insert(pc)
    }

    pub fn clear_breakpoint(&mut self, pc: u32) -> bool {
        self.breakpoints.remove(&pc)
    }

    pub fn apply_input(&mut self, input: Input) {
        match input {
            Input::SetSwitches { value } => self.bus.gp_special.switches = value,
            Input::SetGpio { port, value } => {
                if let Some(p) = self.bus.gpio.get_mut(port as usize) {
                    p.ext_in = value;
                }
            }
            Input::UartIn { bytes } => {
                for b in bytes {
                    self.bus.uart.inject(b);
                }
            }
            Input::SetBreakpoint { pc } => {
                self.set_breakpoint(pc);
            }
            Input::ClearBreakpoint { pc } => {
                self.clear_breakpoint(pc);
            }
            Input::Pause => self.pause_requested = true,
        }
    }

    fn drain_inputs(&mut self) {
        while let Ok(input) = self.input_rx.try_recv() {
            self.apply_input(input);
        }
        for input in self.stimulus.due(self.report.retired) {
            self.apply_input(input);
        }
    }

    fn refresh_mip(&mut self) {
        let mip = self.bus.mip_view();
        self.hart.set_mip(mip);
    }

    fn advance(&mut self, cycles: u64) {
        self.hart.mcycle = self.hart.mcycle.wrapping_add(cycles);
        self.bus.clint.tick(cycles);
    }

    fn emit_trace(&mut self, record: TraceRecord) {
        if let Some(t) = self.trace.as_mut() {
            if let Err(e) = t.emit(&record) {
                self.trace_error = Some(e);
                self.trace = None;
            }
        }
    }

    fn publish(&mut self, event: MachineEvent) {
        if let Some(sink) = self.event_sink.as_mut() {
            sink(event);
            return;
        }
        if self.events.len() == EVENT_BACKLOG {
            self.events.pop_front();
            self.events_dropped += 1;
        }
        self.events.push_back(event);
    }

    fn collect_events(&mut self) {
        let changes = self.bus.take_changes();
        if changes.led {
            let value = self.bus.gp_special.led;
            self.publish(MachineEvent::Led { value });
        }
        for port in 0..3 {
            if changes.gpio_out[port] {
                let p = &self.bus.gpio[port];
                let (dir, out) = (p.dir, p.out);
                self.publish(MachineEvent::Gpio {
                    port: port as u8,
                    dir,
                    out,
                });
            }
        }
        let tx = self.bus.uart.take_tx();
        if !tx.is_empty() {
            self.publish(MachineEvent::UartOut { bytes: tx });
        }
    }

    /// One step boundary: apply inputs, then take an interrupt, stop at a
    /// breakpoint, idle in WFI, or execute one instruction.
    pub fn step(&mut self) -> StepOutcome {
        self.drain_inputs();
        self.step_core()
    }

    fn step_core(&mut self) -> StepOutcome {
        if self.run_state == RunState::Done {
            return StepOutcome::FaultStop("machine is stopped".into());
        }
        if self.hart.halted == HaltReason::DebugHalt {
            self.hart.halted = HaltReason::None;
        }
        self.refresh_mip();

        if self.hart.halted == HaltReason::WfiWait {
            if self.hart.enabled_pending() == 0 {
                self.idle(1);
                return StepOutcome::WfiIdle;
            }
            self.hart.halted = HaltReason::None;
        }

        let pc = self.hart.pc;
        if let Some(irq) = self.hart.pending_interrupt() {
            self.hart.trap_enter(irq, pc);
            let cost = self.report.record_interrupt();
            self.advance(cost);
            self.prev_load_rd = None;
            self.skip_breakpoint = None;
            if self.trace.is_some() {
                let raw = self.bus.fetch(pc).unwrap_or(0);
                self.emit_trace(TraceRecord {
                    cycle: self.hart.mcycle,
                    pc,
                    raw,
                    rd: None,
                    mem: None,
                    trap: Some(irq.mcause()),
                });
            }
            return StepOutcome::Trapped(irq);
        }

        if self.breakpoints.contains(&pc) && self.skip_breakpoint != Some(pc) {
            self.skip_breakpoint = Some(pc);
            return StepOutcome::HitBreakpoint(pc);
        }
        self.skip_breakpoint = None;

        let raw = match self.bus.fetch(pc) {
            Ok(w) => w,
            Err(_) => {
                let ctx = TimingContext::new(InstrClass::System);
                return self.raise(TrapCause::exception(cause::INSTRUCTION_ACCESS_FAULT, pc), &ctx, pc, 0);
            }
        };
        let instr = match decode(raw) {
            Ok(i) => i,
            Err(_) => {
                let ctx = TimingContext::new(InstrClass::System);
                return self.raise(TrapCause::exception(cause::ILLEGAL_INSTRUCTION, raw), &ctx, pc, raw);
            }
        };
        let class = instr.class();
        let ctx = TimingContext {
            prev_was_load: self.prev_load_rd.is_some(),
            prev_rd: self.prev_load_rd.unwrap_or(0),
            branch_taken: false,
            class,
            sources: instr.sources(),
        };

        if instr.op == Op::Ebreak && self.config.debug_attached {
            self.hart.pc = pc.wrapping_add(4);
            self.hart.halted = HaltReason::DebugHalt;
            self.retire(&ctx, pc, raw, None, None);
            return StepOutcome::DebugHalt(pc);
        }

        match self.hart.execute(&instr, &mut self.bus) {
            ExecOutcome::Retired(r) => {
                let ctx = TimingContext {
                    branch_taken: r.redirected,
                    ..ctx
                };
                let mem = r.mem.map(|m| TraceRecord::mem_from(m.kind, m.addr, m.data));
                self.retire(&ctx, pc, raw, r.rd_write, mem);
                self.prev_load_rd = (class == InstrClass::Load).then_some(instr.rd);
                StepOutcome::Retired
            }
            ExecOutcome::Exception(c) => self.raise(c, &ctx, pc, raw),
        }
    }

    fn retire(&mut self, ctx: &TimingContext, pc: u32, raw: u32, rd: Option<(u8, u32)>, mem: Option<MemNote>) {
        let cost = self.report.record(ctx, true);
        self.advance(cost);
        self.hart.minstret = self.hart.minstret.wrapping_add(1);
        self.prev_load_rd = None;
        if self.trace.is_some() {
            self.emit_trace(TraceRecord {
                cycle: self.hart.mcycle,
                pc,
                raw,
                rd,
                mem,
                trap: None,
            });
        }
        self.collect_events();
    }

    fn raise(&mut self, c: TrapCause, ctx: &TimingContext, pc: u32, raw: u32) -> StepOutcome {
        let cost = self.report.record_exception(ctx);
        self.advance(cost);
        self.hart.trap_enter(c, pc);
        self.prev_load_rd = None;
        if self.trace.is_some() {
            self.emit_trace(TraceRecord {
                cycle: self.hart.mcycle,
                pc,
                raw,
                rd: None,
                mem: None,
                trap: Some(c.mcause()),
            });
        }
        self.collect_events();
        StepOutcome::Trapped(c)
    }

    fn idle(&mut self, cycles: u64) {
        self.report.record_idle(cycles);
        self.advance(cycles);
    }

    /// Cycles that can be skipped while waiting in WFI, if a timer wake
    /// is possible.
    fn idle_budget(&self) -> Option<u64> {
        if self.hart.csr.mie & MIP_MTIP == 0 || self.bus.clint.mtimecmp == u64::MAX {
            return None;
        }
        let until = self.bus.clint.mtimecmp.saturating_sub(self.bus.clint.mtime);
        Some(until.clamp(1, IDLE_CHUNK))
    }

    pub fn run(&mut self, limits: RunLimits) -> StopReason {
        let start_instret = self.report.retired;
        let start_cycles = self.report.total_cycles;
        self.run_state = RunState::Running;
        let reason = loop {
            self.drain_inputs();
            if std::mem::take(&mut self.pause_requested) {
                break StopReason::Paused;
            }
            if limits
                .max_instret
                .is_some_and(|n| self.report.retired - start_instret >= n)
            {
                break StopReason::InstretLimit;
            }
            let used = self.report.total_cycles - start_cycles;
            if limits.max_cycles.is_some_and(|n| used >= n) {
                break StopReason::CycleLimit;
            }

            if self.hart.halted == HaltReason::WfiWait {
                self.refresh_mip();
                if self.hart.enabled_pending() == 0 {
                    match self.idle_budget() {
                        Some(n) => {
                            let room = limits.max_cycles.map_or(u64::MAX, |m| m - used);
                            self.idle(n.min(room));
                        }
                        None if !self.stimulus.is_empty() => {
                            for input in self.stimulus.pop_next_batch() {
                                self.apply_input(input);
                            }
                        }
                        None if self.live_inputs => break StopReason::Idle,
                        None => break StopReason::WfiDeadlock,
                    }
                    continue;
                }
            }

            match self.step_core() {
                StepOutcome::HitBreakpoint(pc) => break StopReason::Breakpoint { pc },
                StepOutcome::DebugHalt(pc) => break StopReason::DebugHalt { pc },
                StepOutcome::FaultStop(message) => break StopReason::Fault { message },
                _ => {}
            }
        };
        self.run_state = match reason {
            StopReason::Fault { .. } => RunState::Done,
            _ => RunState::Paused,
        };
        reason
    }

    pub fn snapshot(&self, with_ram: bool) -> Snapshot {
        Snapshot {
            hart: self.hart.clone(),
            clint: self.bus.clint.clone(),
            plic: self.bus.plic.clone(),
            gpio: self.bus.gpio.clone(),
            gp_special: self.bus.gp_special.clone(),
            uart: self.bus.uart.clone(),
            spi: self.bus.spi.clone(),
            report: self.report.clone(),
            prev_load_rd: self.prev_load_rd,
            skip_breakpoint: self.skip_breakpoint,
            breakpoints: self.breakpoints.iter().copied().collect(),
            leds: self.bus.gp_special.led,
            switches: self.bus.gp_special.switches,
            ram: with_ram.then(|| self.bus.ram.to_vec()),
        }
    }

    /// Restore guest state. RAM is only replaced when the snapshot has it.
    pub fn restore(&mut self, s: &Snapshot) {
        self.hart = s.hart.clone();
        self.bus.clint = s.clint.clone();
        self.bus.plic = s.plic.clone();
        self.bus.gpio = s.gpio.clone();
        self.bus.gp_special = s.gp_special.clone();
        self.bus.uart = s.uart.clone();
        self.bus.spi = s.spi.clone();
        self.report = s.report.clone();
        self.prev_load_rd = s.prev_load_rd;
        self.skip_breakpoint = s.skip_breakpoint;
        self.breakpoints = s.breakpoints.iter().copied().collect();
        if let Some(ram) = &s.ram {
            self.bus.ram.fill_from(ram);
        }
        self.bus.take_changes();
        if self.run_state == RunState::Done {
            self.run_state = RunState::Paused;
        }
    }

    /// Side-effect-free word read for debuggers.
    pub fn peek_word(&self, addr: u32) -> Option<u32> {
        self.bus.peek(addr, Width::Word)
    }
}
