//! Architectural state of the single machine-mode hart.

use serde::{Deserialize, Serialize};

use crate::bus::{AccessKind, AmoOp, Bus, BusAccess, Width};
use crate::irq::{MIP_MEIP, MIP_MSIP, MIP_MTIP};
use crate::isa::{execute_alu, Instruction, Op, Rv32iOutcome};

pub const RESET_PC: u32 = 0x8000_0000;

pub const CSR_MSTATUS: u16 = 0x300;
pub const CSR_MISA: u16 = 0x301;
pub const CSR_MIE: u16 = 0x304;
pub const CSR_MTVEC: u16 = 0x305;
pub const CSR_MSCRATCH: u16 = 0x340;
pub const CSR_MEPC: u16 = 0x341;
pub const CSR_MCAUSE: u16 = 0x342;
pub const CSR_MTVAL: u16 = 0x343;
pub const CSR_MIP: u16 = 0x344;
pub const CSR_MCYCLE: u16 = 0xB00;
pub const CSR_MINSTRET: u16 = 0xB02;
pub const CSR_MCYCLEH: u16 = 0xB80;
pub const CSR_MINSTRETH: u16 = 0xB82;
pub const CSR_MVENDORID: u16 = 0xF11;
pub const CSR_MARCHID: u16 = 0xF12;
pub const CSR_MIMPID: u16 = 0xF13;
pub const CSR_MHARTID: u16 = 0xF14;

pub const MSTATUS_MIE: u32 = 1 << 3;
pub const MSTATUS_MPIE: u32 = 1 << 7;
pub const MSTATUS_MPP: u32 = 0b11 << 11;

/// MXL = 1 (32-bit), extensions A, I, M.
pub const MISA_VALUE: u32 = (1 << 30) | (1 << 0) | (1 << 8) | (1 << 12);

/// Every implemented CSR and the bits software may change.
const CSR_TABLE: &[(u16, &str, u32)] = &[
    (CSR_MSTATUS, "mstatus", MSTATUS_MIE | MSTATUS_MPIE),
    (CSR_MISA, "misa", 0),
    (CSR_MIE, "mie", MIP_MSIP | MIP_MTIP | MIP_MEIP),
    (CSR_MTVEC, "mtvec", !0b10),
    (CSR_MSCRATCH, "mscratch", !0),
    (CSR_MEPC, "mepc", !0b11),
    (CSR_MCAUSE, "mcause", !0),
    (CSR_MTVAL, "mtval", !0),
    (CSR_MIP, "mip", 0),
    (CSR_MCYCLE, "mcycle", !0),
    (CSR_MINSTRET, "minstret", !0),
    (CSR_MCYCLEH, "mcycleh", !0),
    (CSR_MINSTRETH, "minstreth", !0),
    (CSR_MVENDORID, "mvendorid", 0),
    (CSR_MARCHID, "marchid", 0),
    (CSR_MIMPID, "mimpid", 0),
    (CSR_MHARTID, "mhartid", 0),
];

pub fn csr_name(addr: u16) -> Option<&'static str> {
    CSR_TABLE.iter().find(|e| e.0 == addr).map(|e| e.1)
}

/// Writable-bit mask of an implemented CSR.
pub fn csr_write_mask(addr: u16) -> Option<u32> {
    CSR_TABLE.iter().find(|e| e.0 == addr).map(|e| e.2)
}

pub mod cause {
    pub const INSTRUCTION_MISALIGNED: u32 = 0;
    pub const INSTRUCTION_ACCESS_FAULT: u32 = 1;
    pub const ILLEGAL_INSTRUCTION: u32 = 2;
    pub const BREAKPOINT: u32 = 3;
    pub const LOAD_MISALIGNED: u32 = 4;
    pub const LOAD_ACCESS_FAULT: u32 = 5;
    pub const STORE_MISALIGNED: u32 = 6;
    pub const STORE_ACCESS_FAULT: u32 = 7;
    pub const ECALL_M: u32 = 11;

    pub const MACHINE_SOFTWARE: u32 = 3;
    pub const MACHINE_TIMER: u32 = 7;
    pub const MACHINE_EXTERNAL: u32 = 11;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapCause {
    pub is_interrupt: bool,
    pub code: u32,
    pub tval: u32,
}

impl TrapCause {
    pub fn exception(code: u32, tval: u32) -> Self {
        TrapCause {
            is_interrupt: false,
            code,
            tval,
        }
    }

    pub fn interrupt(code: u32) -> Self {
        TrapCause {
            is_interrupt: true,
            code,
            tval: 0,
        }
    }

    /// Value written to mcause.
    pub fn mcause(&self) -> u32 {
        ((self.is_interrupt as u32) << 31) | self.code
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrOp {
    ReadWrite,
    ReadSet,
    ReadClear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal access to CSR {0:#05x}")]
pub struct IllegalAccess(pub u16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrFile {
    pub mstatus: u32,
    pub mie: u32,
    pub mip: u32,
    pub mtvec: u32,
    pub mscratch: u32,
    pub mepc: u32,
    pub mcause: u32,
    pub mtval: u32,
}

impl Default for CsrFile {
    fn default() -> Self {
        CsrFile {
            mstatus: MSTATUS_MPP,
            mie: 0,
            mip: 0,
            mtvec: RESET_PC,
            mscratch: 0,
            mepc: 0,
            mcause: 0,
            mtval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    #[default]
    None,
    WfiWait,
    DebugHalt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HartState {
    pub x: [u32; 32],
    pub pc: u32,
    pub csr: CsrFile,
    /// Word address reserved by the last LR.W.
    pub reservation: Option<u32>,
    pub mcycle: u64,
    pub minstret: u64,
    pub halted: HaltReason,
}

impl Default for HartState {
    fn default() -> Self {
        HartState {
            x: [0; 32],
            pc: RESET_PC,
            csr: CsrFile::default(),
            reservation: None,
            mcycle: 0,
            minstret: 0,
            halted: HaltReason::None,
        }
    }
}

/// Observable effects of one retired instruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Retired {
    pub rd_write: Option<(u8, u32)>,
    pub mem: Option<BusAccess>,
    /// Control flow left the sequential path (taken branch, jump, MRET).
    pub redirected: bool,
    pub wfi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecOutcome {
    Retired(Retired),
    Exception(TrapCause),
}

fn load_width(op: Op) -> (Width, bool) {
    match op {
        Op::Lb => (Width::Byte, true),
        Op::Lbu => (Width::Byte, false),
        Op::Lh => (Width::Half, true),
        Op::Lhu => (Width::Half, false),
        _ => (Width::Word, false),
    }
}

fn amo_op(op: Op) -> AmoOp {
    match op {
        Op::AmoswapW => AmoOp::Swap,
        Op::AmoaddW => AmoOp::Add,
        Op::AmoxorW => AmoOp::Xor,
        Op::AmoandW => AmoOp::And,
        Op::AmoorW => AmoOp::Or,
        Op::AmominW => AmoOp::Min,
        Op::AmomaxW => AmoOp::Max,
        Op::AmominuW => AmoOp::Minu,
        _ => AmoOp::Maxu,
    }
}

impl HartState {
    pub fn reg(&self, idx: u8) -> u32 {
        self.x[idx as usize]
    }

    pub fn set_reg(&mut self, idx: u8, value: u32) {
        if idx != 0 {
            self.x[idx as usize] = value;
        }
    }

    pub fn mie_enabled(&self) -> bool {
        self.csr.mstatus & MSTATUS_MIE != 0
    }

    fn csr_read(&self, addr: u16) -> u32 {
        match addr {
            CSR_MSTATUS => self.csr.mstatus | MSTATUS_MPP,
            CSR_MISA => MISA_VALUE,
            CSR_MIE => self.csr.mie,
            CSR_MTVEC => self.csr.mtvec,
            CSR_MSCRATCH => self.csr.mscratch,
            CSR_MEPC => self.csr.mepc & !0b11,
            CSR_MCAUSE => self.csr.mcause,
            CSR_MTVAL => self.csr.mtval,
            CSR_MIP => self.csr.mip,
            CSR_MCYCLE => self.mcycle as u32,
            CSR_MCYCLEH => (self.mcycle >> 32) as u32,
            CSR_MINSTRET => self.minstret as u32,
            CSR_MINSTRETH => (self.minstret >> 32) as u32,
            _ => 0,
        }
    }

    fn csr_write(&mut self, addr: u16, value: u32, mask: u32) {
        let merge = |old: u32| (old & !mask) | (value & mask);
        let lo = |old: u64| (old & !0xffff_ffff) | value as u64;
        let hi = |old: u64| (old & 0xffff_ffff) | (value as u64) << 32;
        match addr {
            CSR_MSTATUS => self.csr.mstatus = merge(self.csr.mstatus) | MSTATUS_MPP,
            CSR_MIE => self.csr.mie = merge(self.csr.mie),
            CSR_MTVEC => self.csr.mtvec = merge(self.csr.mtvec),
            CSR_MSCRATCH => self.csr.mscratch = value,
            CSR_MEPC => self.csr.mepc = merge(self.csr.mepc),
            CSR_MCAUSE => self.csr.mcause = value,
            CSR_MTVAL => self.csr.mtval = value,
            CSR_MCYCLE => self.mcycle = lo(self.mcycle),
            CSR_MCYCLEH => self.mcycle = hi(self.mcycle),
            CSR_MINSTRET => self.minstret = lo(self.minstret),
            CSR_MINSTRETH => self.minstret = hi(self.minstret),
            // misa and mip have no writable bits
            _ => {}
        }
    }

    /// Atomic CSR read/modify/write. Returns the prior value.
    ///
    /// Set and clear with a zero-register (or zero uimm) operand never
    /// write, so they are legal on read-only CSRs.
    pub fn csr_access(
        &mut self,
        op: CsrOp,
        addr: u16,
        operand: u32,
        operand_is_zero_register: bool,
    ) -> Result<u32, IllegalAccess> {
        let mask = csr_write_mask(addr).ok_or(IllegalAccess(addr))?;
        let old = self.csr_read(addr);
        let new = match op {
            CsrOp::ReadWrite => Some(operand),
            CsrOp::ReadSet if !operand_is_zero_register => Some(old | operand),
            CsrOp::ReadClear if !operand_is_zero_register => Some(old & !operand),
            _ => None,
        };
        if let Some(new) = new {
            if (addr >> 10) & 0b11 == 0b11 {
                return Err(IllegalAccess(addr));
            }
            self.csr_write(addr, new, mask);
        }
        Ok(old)
    }

    pub fn trap_enter(&mut self, cause: TrapCause, faulting_pc: u32) {
        self.csr.mepc = faulting_pc & !0b11;
        self.csr.mcause = cause.mcause();
        self.csr.mtval = cause.tval;
        let mie = self.csr.mstatus & MSTATUS_MIE != 0;
        self.csr.mstatus &= !(MSTATUS_MIE | MSTATUS_MPIE);
        if mie {
            self.csr.mstatus |= MSTATUS_MPIE;
        }
        let base = self.csr.mtvec & !0b11;
        let vectored = self.csr.mtvec & 0b11 == 1;
        self.pc = if vectored && cause.is_interrupt {
            base.wrapping_add(4 * cause.code)
        } else {
            base
        };
        self.reservation = None;
        self.halted = HaltReason::None;
    }

    pub fn mret(&mut self) {
        self.pc = self.csr.mepc & !0b11;
        let mpie = self.csr.mstatus & MSTATUS_MPIE != 0;
        self.csr.mstatus &= !MSTATUS_MIE;
        if mpie {
            self.csr.mstatus |= MSTATUS_MIE;
        }
        self.csr.mstatus |= MSTATUS_MPIE;
    }

    /// Replace the fabric-driven mip bits.
    pub fn set_mip(&mut self, fabric: u32) {
        self.csr.mip = fabric & (MIP_MSIP | MIP_MTIP | MIP_MEIP);
    }

    /// Enabled and pending interrupts, regardless of the global enable.
    pub fn enabled_pending(&self) -> u32 {
        self.csr.mip & self.csr.mie
    }

    /// Interrupt to take now, in priority order external, software, timer.
    pub fn pending_interrupt(&self) -> Option<TrapCause> {
        if !self.mie_enabled() {
            return None;
        }
        let pending = self.enabled_pending();
        [
            (MIP_MEIP, cause::MACHINE_EXTERNAL),
            (MIP_MSIP, cause::MACHINE_SOFTWARE),
            (MIP_MTIP, cause::MACHINE_TIMER),
        ]
        .into_iter()
        .find(|(bit, _)| pending & bit != 0)
        .map(|(_, code)| TrapCause::interrupt(code))
    }

    pub fn lr(&mut self, addr: u32) {
        self.reservation = Some(addr & !0b11);
    }

    /// True when the store-conditional may proceed. Always clears the
    /// reservation.
    pub fn sc(&mut self, addr: u32) -> bool {
        self.reservation.take() == Some(addr & !0b11)
    }

    pub fn invalidate_reservation(&mut self) {
        self.reservation = None;
    }

    /// Execute one decoded instruction at `self.pc`. On success the pc is
    /// advanced; on exception nothing architectural has changed.
    pub fn execute(&mut self, instr: &Instruction, bus: &mut Bus) -> ExecOutcome {
        use Op::*;
        let pc = self.pc;
        let rs1 = self.reg(instr.rs1);
        let rs2 = self.reg(instr.rs2);
        let mut out = Retired::default();
        let mut next_pc = pc.wrapping_add(4);
        let exc = |code, tval| ExecOutcome::Exception(TrapCause::exception(code, tval));

        match instr.op {
            Lb | Lh | Lw | Lbu | Lhu => {
                let addr = rs1.wrapping_add(instr.imm);
                let (width, signed) = load_width(instr.op);
                if !addr.is_multiple_of(width.bytes()) {
                    return exc(cause::LOAD_MISALIGNED, addr);
                }
                let raw = match bus.read(addr, width) {
                    Ok(v) => v,
                    Err(f) => return exc(f.cause(), addr),
                };
                let value = match (width, signed) {
                    (Width::Byte, true) => raw as u8 as i8 as i32 as u32,
                    (Width::Half, true) => raw as u16 as i16 as i32 as u32,
                    _ => raw,
                };
                out.rd_write = Some((instr.rd, value));
                out.mem = Some(BusAccess {
                    kind: AccessKind::Read,
                    addr,
                    width,
                    data: raw,
                });
            }
            Sb | Sh | Sw => {
                let addr = rs1.wrapping_add(instr.imm);
                let width = match instr.op {
                    Sb => Width::Byte,
                    Sh => Width::Half,
                    _ => Width::Word,
                };
                if !addr.is_multiple_of(width.bytes()) {
                    return exc(cause::STORE_MISALIGNED, addr);
                }
                if let Err(f) = bus.write(addr, width, rs2) {
                    return exc(f.cause(), addr);
                }
                self.invalidate_reservation();
                out.mem = Some(BusAccess {
                    kind: AccessKind::Write,
                    addr,
                    width,
                    data: rs2 & width.mask(),
                });
            }
            LrW => {
                if !rs1.is_multiple_of(4) {
                    return exc(cause::LOAD_MISALIGNED, rs1);
                }
                if bus.ram_offset(rs1, 4).is_none() {
                    return exc(cause::LOAD_ACCESS_FAULT, rs1);
                }
                let value = bus.read(rs1, Width::Word).expect("RAM read");
                self.lr(rs1);
                out.rd_write = Some((instr.rd, value));
                out.mem = Some(BusAccess {
                    kind: AccessKind::Read,
                    addr: rs1,
                    width: Width::Word,
                    data: value,
                });
            }
            ScW => {
                if !rs1.is_multiple_of(4) {
                    return exc(cause::STORE_MISALIGNED, rs1);
                }
                if bus.ram_offset(rs1, 4).is_none() {
                    return exc(cause::STORE_ACCESS_FAULT, rs1);
                }
                if self.sc(rs1) {
                    bus.write(rs1, Width::Word, rs2).expect("RAM write");
                    out.rd_write = Some((instr.rd, 0));
                    out.mem = Some(BusAccess {
                        kind: AccessKind::Write,
                        addr: rs1,
                        width: Width::Word,
                        data: rs2,
                    });
                } else {
                    out.rd_write = Some((instr.rd, 1));
                }
            }
            AmoswapW | AmoaddW | AmoxorW | AmoandW | AmoorW | AmominW | AmomaxW | AmominuW | AmomaxuW => {
                if !rs1.is_multiple_of(4) {
                    return exc(cause::STORE_MISALIGNED, rs1);
                }
                let op = amo_op(instr.op);
                let old = match bus.amo(rs1, op, rs2) {
                    Ok(v) => v,
                    Err(f) => return exc(f.cause(), rs1),
                };
                self.invalidate_reservation();
                out.rd_write = Some((instr.rd, old));
                out.mem = Some(BusAccess {
                    kind: AccessKind::Write,
                    addr: rs1,
                    width: Width::Word,
                    data: op.apply(old, rs2),
                });
            }
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
                let op = match instr.op {
                    Csrrw | Csrrwi => CsrOp::ReadWrite,
                    Csrrs | Csrrsi => CsrOp::ReadSet,
                    _ => CsrOp::ReadClear,
                };
                let operand = match instr.op {
                    Csrrwi | Csrrsi | Csrrci => instr.rs1 as u32,
                    _ => rs1,
                };
                match self.csr_access(op, instr.csr(), operand, instr.rs1 == 0) {
                    Ok(old) => out.rd_write = Some((instr.rd, old)),
                    Err(_) => return exc(cause::ILLEGAL_INSTRUCTION, instr.raw),
                }
            }
            Ecall => return exc(cause::ECALL_M, 0),
            Ebreak => return exc(cause::BREAKPOINT, pc),
            Mret => {
                self.mret();
                next_pc = self.pc;
                out.redirected = true;
            }
            Wfi => out.wfi = true,
            Fence | FenceI => {}
            _ => match execute_alu(instr, rs1, rs2, pc) {
                Some(Rv32iOutcome::Value(r)) => out.rd_write = Some((instr.rd, r.value)),
                Some(Rv32iOutcome::Branch { taken, target }) => {
                    if taken {
                        if target % 4 != 0 {
                            return exc(cause::INSTRUCTION_MISALIGNED, target);
                        }
                        next_pc = target;
                        out.redirected = true;
                    }
                }
                Some(Rv32iOutcome::Jump { link, target }) => {
                    if target % 4 != 0 {
                        return exc(cause::INSTRUCTION_MISALIGNED, target);
                    }
                    out.rd_write = Some((instr.rd, link.value));
                    next_pc = target;
                    out.redirected = true;
                }
                None => return exc(cause::ILLEGAL_INSTRUCTION, instr.raw),
            },
        }

        if let Some((rd, value)) = out.rd_write {
            self.set_reg(rd, value);
            if rd == 0 {
                out.rd_write = None;
            }
        }
        if out.wfi {
            self.halted = HaltReason::WfiWait;
        }
        self.pc = next_pc;
        ExecOutcome::Retired(out)
    }
}
