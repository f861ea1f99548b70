//! Cycle accounting for the three-stage (fetch, decode/execute, writeback)
//! pipeline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::isa::InstrClass;

/// Latency constants. All of them are modeling choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConstants {
    pub fill: u64,
    pub flush: u64,
    pub load_use: u64,
    pub mul_extra: u64,
    pub div_extra: u64,
}

impl Default for TimingConstants {
    fn default() -> Self {
        TimingConstants {
            fill: 2,
            flush: 1,
            load_use: 1,
            mul_extra: 2,
            div_extra: 31,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingContext {
    pub prev_was_load: bool,
    pub prev_rd: u8,
    pub branch_taken: bool,
    pub class: InstrClass,
    pub sources: [Option<u8>; 2],
}

impl TimingContext {
    pub fn new(class: InstrClass) -> Self {
        TimingContext {
            prev_was_load: false,
            prev_rd: 0,
            branch_taken: false,
            class,
            sources: [None, None],
        }
    }

    pub fn load_use_hazard(&self) -> bool {
        self.prev_was_load && self.prev_rd != 0 && self.sources.contains(&Some(self.prev_rd))
    }
}

/// Cost of one instruction split by cause.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Charge {
    pub base: u64,
    pub flush: u64,
    pub load_use: u64,
    pub mul: u64,
    pub div: u64,
}

impl Charge {
    pub fn total(&self) -> u64 {
        self.base + self.flush + self.load_use + self.mul + self.div
    }
}

impl TimingConstants {
    pub fn charge(&self, ctx: &TimingContext) -> Charge {
        Charge {
            base: 1,
            flush: if ctx.branch_taken { self.flush } else { 0 },
            load_use: if ctx.load_use_hazard() { self.load_use } else { 0 },
            mul: if ctx.class == InstrClass::Mul {
                self.mul_extra
            } else {
                0
            },
            div: if ctx.class == InstrClass::Div {
                self.div_extra
            } else {
                0
            },
        }
    }

    pub fn cycle_cost(&self, ctx: &TimingContext) -> u64 {
        self.charge(ctx).total()
    }

    pub fn program_cycles<'a>(&self, stream: impl IntoIterator<Item = &'a TimingContext>) -> u64 {
        self.fill + stream.into_iter().map(|c| self.cycle_cost(c)).sum::<u64>()
    }
}

/// Cost of `ctx` under the default constants.
pub fn cycle_cost(ctx: &TimingContext) -> u64 {
    TimingConstants::default().cycle_cost(ctx)
}

/// Total cycles of a context stream under the default constants.
pub fn program_cycles<'a>(stream: impl IntoIterator<Item = &'a TimingContext>) -> u64 {
    TimingConstants::default().program_cycles(stream)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallCounts {
    pub load_use: u64,
    pub control_flow: u64,
    pub mul: u64,
    pub div: u64,
    /// Idle cycles, not events.
    pub wfi_idle: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub constants: TimingConstants,
    pub total_cycles: u64,
    pub retired: u64,
    /// Instructions that entered execute, including ones that raised an
    /// exception.
    pub issued: u64,
    pub retired_by_class: [u64; InstrClass::ALL.len()],
    pub stalls: StallCounts,
    pub traps: u64,
    pub interrupts: u64,
}

impl CycleReport {
    pub fn new(constants: TimingConstants) -> Self {
        CycleReport {
            constants,
            total_cycles: constants.fill,
            retired: 0,
            issued: 0,
            retired_by_class: [0; InstrClass::ALL.len()],
            stalls: StallCounts::default(),
            traps: 0,
            interrupts: 0,
        }
    }

    /// Account one issued instruction. Returns the cycles charged.
    pub fn record(&mut self, ctx: &TimingContext, retired: bool) -> u64 {
        let c = self.constants.charge(ctx);
        self.issued += 1;
        if retired {
            self.retired += 1;
            self.retired_by_class[ctx.class as usize] += 1;
        }
        self.stalls.load_use += (c.load_use > 0) as u64;
        self.stalls.control_flow += (c.flush > 0) as u64;
        self.stalls.mul += (c.mul > 0) as u64;
        self.stalls.div += (c.div > 0) as u64;
        self.total_cycles += c.total();
        c.total()
    }

    /// Account an exception raised by an issued instruction: it costs its
    /// base cycle plus a redirect.
    pub fn record_exception(&mut self, ctx: &TimingContext) -> u64 {
        self.traps += 1;
        self.record(
            &TimingContext {
                branch_taken: true,
                ..*ctx
            },
            false,
        )
    }

    /// Account an interrupt taken between instructions: redirect only.
    pub fn record_interrupt(&mut self) -> u64 {
        self.traps += 1;
        self.interrupts += 1;
        self.stalls.control_flow += 1;
        self.total_cycles += self.constants.flush;
        self.constants.flush
    }

    pub fn record_idle(&mut self, cycles: u64) {
        self.stalls.wfi_idle += cycles;
        self.total_cycles += cycles;
    }

    /// Recompute the total from the counters alone.
    pub fn reconciled_total(&self) -> u64 {
        let k = &self.constants;
        k.fill
            + self.issued
            + self.stalls.load_use * k.load_use
            + self.stalls.control_flow * k.flush
            + self.stalls.mul * k.mul_extra
            + self.stalls.div * k.div_extra
            + self.stalls.wfi_idle
    }

    pub fn cpi(&self) -> f64 {
        if self.retired == 0 {
            0.0
        } else {
            self.total_cycles as f64 / self.retired as f64
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let k = &self.constants;
        let _ = writeln!(
            s,
            "# model: load-use stall {} cycle(s), no writeback forwarding",
            k.load_use
        );
        let _ = writeln!(s, "cycles={}", self.total_cycles);
        let _ = writeln!(s, "instret={}", self.retired);
        let _ = writeln!(s, "issued={}", self.issued);
        let _ = writeln!(s, "traps={}", self.traps);
        let _ = writeln!(s, "interrupts={}", self.interrupts);
        let _ = writeln!(s, "stalls.load_use={}", self.stalls.load_use);
        let _ = writeln!(s, "stalls.control_flow={}", self.stalls.control_flow);
        let _ = writeln!(s, "stalls.mul={}", self.stalls.mul);
        let _ = writeln!(s, "stalls.div={}", self.stalls.div);
        let _ = writeln!(s, "stalls.wfi_idle={}", self.stalls.wfi_idle);
        for class in InstrClass::ALL {
            let _ = writeln!(s, "class.{}={}", class.name(), self.retired_by_class[class as usize]);
        }
        s
    }

    pub fn summary(&self) -> String {
        let k = &self.constants;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} instructions retired in {} cycles (CPI {:.3})",
            self.retired,
            self.total_cycles,
            self.cpi()
        );
        let _ = writeln!(
            s,
            "stalls: load-use {} x{}, control-flow {} x{}, mul {} x{}, div {} x{}, wfi idle {} cycles",
            self.stalls.load_use,
            k.load_use,
            self.stalls.control_flow,
            k.flush,
            self.stalls.mul,
            k.mul_extra,
            self.stalls.div,
            k.div_extra,
            self.stalls.wfi_idle
        );
        let _ = writeln!(s, "traps: {} ({} interrupts)", self.traps, self.interrupts);
        s
    }
}
