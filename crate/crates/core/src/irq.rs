//! Core-local interruptor (software and timer interrupts) and a
//! level-sensitive platform interrupt controller with five sources.

use serde::{Deserialize, Serialize};

pub const MIP_MSIP: u32 = 1 << 3;
pub const MIP_MTIP: u32 = 1 << 7;
pub const MIP_MEIP: u32 = 1 << 11;

pub const CLINT_MSIP: u32 = 0x0000;
pub const CLINT_MTIMECMP_LO: u32 = 0x4000;
pub const CLINT_MTIMECMP_HI: u32 = 0x4004;
pub const CLINT_MTIME_LO: u32 = 0xBFF8;
pub const CLINT_MTIME_HI: u32 = 0xBFFC;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clint {
    pub msip: bool,
    pub mtime: u64,
    pub mtimecmp: u64,
}

impl Default for Clint {
    fn default() -> Self {
        Clint {
            msip: false,
            mtime: 0,
            // No timer interrupt until firmware programs the comparator.
            mtimecmp: u64::MAX,
        }
    }
}

impl Clint {
    pub fn tick(&mut self, cycles: u64) {
        self.mtime = self.mtime.wrapping_add(cycles);
    }

    pub fn mtip(&self) -> bool {
        self.mtime >= self.mtimecmp
    }

    pub fn msip(&self) -> bool {
        self.msip
    }

    pub fn read(&self, offset: u32) -> u32 {
        match offset {
            CLINT_MSIP => self.msip as u32,
            CLINT_MTIMECMP_LO => self.mtimecmp as u32,
            CLINT_MTIMECMP_HI => (self.mtimecmp >> 32) as u32,
            CLINT_MTIME_LO => self.mtime as u32,
            CLINT_MTIME_HI => (self.mtime >> 32) as u32,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        let lo = |old: u64| (old & !0xffff_ffff) | value as u64;
        let hi = |old: u64| (old & 0xffff_ffff) | (value as u64) << 32;
        match offset {
            CLINT_MSIP => self.msip = value & 1 != 0,
            CLINT_MTIMECMP_LO => self.mtimecmp = lo(self.mtimecmp),
            CLINT_MTIMECMP_HI => self.mtimecmp = hi(self.mtimecmp),
            CLINT_MTIME_LO => self.mtime = lo(self.mtime),
            CLINT_MTIME_HI => self.mtime = hi(self.mtime),
            _ => {}
        }
    }
}

/// Number of interrupt sources, excluding the reserved source 0.
pub const PLIC_SOURCES: usize = 5;
pub const PLIC_MAX_PRIORITY: u8 = 7;

pub const PLIC_PRIORITY_BASE: u32 = 0x0000;
pub const PLIC_PENDING: u32 = 0x1000;
pub const PLIC_ENABLE: u32 = 0x2000;
pub const PLIC_THRESHOLD: u32 = 0x20_0000;
pub const PLIC_CLAIM: u32 = 0x20_0004;

/// Fixed source wiring.
pub const IRQ_GPIO_A: u32 = 1;
pub const IRQ_GPIO_B: u32 = 2;
pub const IRQ_GPIO_C: u32 = 3;
pub const IRQ_UART: u32 = 4;
pub const IRQ_SPI: u32 = 5;

const SOURCE_MASK: u32 = ((1 << (PLIC_SOURCES + 1)) - 1) & !1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plic {
    /// Index 0 is the reserved source and always reads 0.
    pub priority: [u8; PLIC_SOURCES + 1],
    /// Bit n enables source n.
    pub enable: u32,
    pub threshold: u8,
    /// Bit n set while source n is claimed and not yet completed.
    pub claimed: u32,
    /// Current input level of each source.
    pub levels: u32,
}

impl Plic {
    pub fn set_level(&mut self, source: u32, asserted: bool) {
        if source == 0 || source as usize > PLIC_SOURCES {
            return;
        }
        if asserted {
            self.levels |= 1 << source;
        } else {
            self.levels &= !(1 << source);
        }
    }

    /// Pending sources: asserted and not currently claimed.
    pub fn pending(&self) -> u32 {
        self.levels & !self.claimed & SOURCE_MASK
    }

    /// The source a claim would return right now, without claiming it.
    pub fn best_candidate(&self) -> Option<u32> {
        let candidates = self.pending() & self.enable;
        let mut best: Option<(u32, u8)> = None;
        for src in 1..=PLIC_SOURCES as u32 {
            if candidates & (1 << src) == 0 {
                continue;
            }
            let prio = self.priority[src as usize];
            if prio == 0 || prio <= self.threshold {
                continue;
            }
            // strict comparison keeps the lowest id on ties
            if best.is_none_or(|(_, p)| prio > p) {
                best = Some((src, prio));
            }
        }
        best.map(|(src, _)| src)
    }

    pub fn claim(&mut self) -> u32 {
        match self.best_candidate() {
            Some(src) => {
                self.claimed |= 1 << src;
                src
            }
            None => 0,
        }
    }

    pub fn complete(&mut self, source: u32) {
        if source == 0 || source as usize > PLIC_SOURCES {
            return;
        }
        self.claimed &= !(1 << source);
    }

    /// External interrupt line into the hart.
    pub fn meip(&self) -> bool {
        self.best_candidate().is_some()
    }

    /// Register read. Reading the claim register performs a claim.
    pub fn read(&mut self, offset: u32) -> u32 {
        match offset {
            PLIC_CLAIM => self.claim(),
            _ => self.peek(offset),
        }
    }

    /// Side-effect-free register read.
    pub fn peek(&self, offset: u32) -> u32 {
        match offset {
            o if o < PLIC_PENDING && o % 4 == 0 => {
                let src = (o / 4) as usize;
                if (1..=PLIC_SOURCES).contains(&src) {
                    self.priority[src] as u32
                } else {
                    0
                }
            }
            PLIC_PENDING => self.pending(),
            PLIC_ENABLE => self.enable,
            PLIC_THRESHOLD => self.threshold as u32,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        match offset {
            o if o < PLIC_PENDING && o % 4 == 0 => {
                let src = (o / 4) as usize;
                if (1..=PLIC_SOURCES).contains(&src) {
                    self.priority[src] = (value as u8) & PLIC_MAX_PRIORITY;
                }
            }
            PLIC_ENABLE => self.enable = value & SOURCE_MASK,
            PLIC_THRESHOLD => self.threshold = (value as u8) & PLIC_MAX_PRIORITY,
            PLIC_CLAIM => self.complete(value),
            _ => {}
        }
    }
}

/// The MSIP/MTIP/MEIP bits the fabric drives into `mip`.
pub fn fabric_mip_view(clint: &Clint, plic: &Plic) -> u32 {
    let mut mip = 0;
    if clint.msip() {
        mip |= MIP_MSIP;
    }
    if clint.mtip() {
        mip |= MIP_MTIP;
    }
    if plic.meip() {
        mip |= MIP_MEIP;
    }
    mip
}
