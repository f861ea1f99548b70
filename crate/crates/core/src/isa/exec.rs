//! State-free semantics of every computational instruction.
//!
//! Each `exec_*` returns `None` when the mnemonic is outside its group.
//! Immediate forms read their second operand from `instr.imm`; the register
//! and immediate variants share one semantic body.

use super::{Instruction, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AluResult {
    pub value: u32,
    /// False when the destination is x0 (the result is discarded).
    pub wrote_rd: bool,
}

impl AluResult {
    fn to(instr: &Instruction, value: u32) -> Self {
        AluResult {
            value,
            wrote_rd: instr.rd != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rv32iOutcome {
    Value(AluResult),
    Branch {
        taken: bool,
        target: u32,
    },
    /// JAL/JALR: `link` is pc + 4, `target` has bit 0 cleared for JALR.
    Jump {
        link: AluResult,
        target: u32,
    },
}

#[inline]
fn operand2(instr: &Instruction, rs2_val: u32) -> u32 {
    if instr.op.uses_imm_operand() {
        instr.imm
    } else {
        rs2_val
    }
}

pub fn exec_rv32i(instr: &Instruction, rs1: u32, rs2: u32, pc: u32) -> Option<Rv32iOutcome> {
    use Op::*;
    let b = operand2(instr, rs2);
    let branch = |taken: bool| {
        Some(Rv32iOutcome::Branch {
            taken,
            target: pc.wrapping_add(instr.imm),
        })
    };
    let value = match instr.op {
        Lui => instr.imm,
        Auipc => pc.wrapping_add(instr.imm),
        Add | Addi => rs1.wrapping_add(b),
        Sub => rs1.wrapping_sub(rs2),
        Sll | Slli => rs1 << (b & 31),
        Srl | Srli => rs1 >> (b & 31),
        Sra | Srai => ((rs1 as i32) >> (b & 31)) as u32,
        Slt | Slti => ((rs1 as i32) < (b as i32)) as u32,
        Sltu | Sltiu => (rs1 < b) as u32,
        Xor | Xori => rs1 ^ b,
        Or | Ori => rs1 | b,
        And | Andi => rs1 & b,
        Beq => return branch(rs1 == rs2),
        Bne => return branch(rs1 != rs2),
        Blt => return branch((rs1 as i32) < (rs2 as i32)),
        Bge => return branch((rs1 as i32) >= (rs2 as i32)),
        Bltu => return branch(rs1 < rs2),
        Bgeu => return branch(rs1 >= rs2),
        Jal => {
            return Some(Rv32iOutcome::Jump {
                link: AluResult::to(instr, pc.wrapping_add(4)),
                target: pc.wrapping_add(instr.imm),
            })
        }
        Jalr => {
            return Some(Rv32iOutcome::Jump {
                link: AluResult::to(instr, pc.wrapping_add(4)),
                target: rs1.wrapping_add(instr.imm) & !1,
            })
        }
        _ => return None,
    };
    Some(Rv32iOutcome::Value(AluResult::to(instr, value)))
}

pub fn exec_m(instr: &Instruction, rs1: u32, rs2: u32) -> Option<AluResult> {
    use Op::*;
    let (sa, sb) = (rs1 as i32 as i64, rs2 as i32 as i64);
    let (ua, ub) = (rs1 as u64, rs2 as u64);
    let value = match instr.op {
        Mul => rs1.wrapping_mul(rs2),
        Mulh => ((sa * sb) >> 32) as u32,
        Mulhsu => ((sa * ub as i64) >> 32) as u32,
        Mulhu => ((ua * ub) >> 32) as u32,
        Div => match (rs1 as i32, rs2 as i32) {
            (_, 0) => u32::MAX,
            (i32::MIN, -1) => rs1,
            (a, b) => (a / b) as u32,
        },
        Divu => rs1.checked_div(rs2).unwrap_or(u32::MAX),
        Rem => match (rs1 as i32, rs2 as i32) {
            (_, 0) => rs1,
            (i32::MIN, -1) => 0,
            (a, b) => (a % b) as u32,
        },
        Remu => rs1.checked_rem(rs2).unwrap_or(rs1),
        _ => return None,
    };
    Some(AluResult::to(instr, value))
}

pub fn exec_zba(instr: &Instruction, rs1: u32, rs2: u32) -> Option<AluResult> {
    let shift = match instr.op {
        Op::Sh1add => 1,
        Op::Sh2add => 2,
        Op::Sh3add => 3,
        _ => return None,
    };
    Some(AluResult::to(instr, (rs1 << shift).wrapping_add(rs2)))
}

fn orc_b(x: u32) -> u32 {
    let mut out = 0;
    for byte in 0..4 {
        if (x >> (byte * 8)) & 0xff != 0 {
            out |= 0xff << (byte * 8);
        }
    }
    out
}

pub fn exec_zbb(instr: &Instruction, rs1: u32, rs2: u32) -> Option<AluResult> {
    use Op::*;
    let b = operand2(instr, rs2);
    let value = match instr.op {
        Andn => rs1 & !b,
        Orn => rs1 | !b,
        Xnor => !(rs1 ^ b),
        Clz => rs1.leading_zeros(),
        Ctz => rs1.trailing_zeros(),
        Cpop => rs1.count_ones(),
        Max => (rs1 as i32).max(b as i32) as u32,
        Maxu => rs1.max(b),
        Min => (rs1 as i32).min(b as i32) as u32,
        Minu => rs1.min(b),
        SextB => rs1 as u8 as i8 as i32 as u32,
        SextH => rs1 as u16 as i16 as i32 as u32,
        ZextH => rs1 & 0xffff,
        Rol => rs1.rotate_left(b & 31),
        Ror | Rori => rs1.rotate_right(b & 31),
        OrcB => orc_b(rs1),
        Rev8 => rs1.swap_bytes(),
        _ => return None,
    };
    Some(AluResult::to(instr, value))
}

/// Full 63-bit carry-less product of two words.
pub fn clmul64(a: u32, b: u32) -> u64 {
    let mut acc = 0u64;
    let mut rest = b;
    while rest != 0 {
        let i = rest.trailing_zeros();
        acc ^= (a as u64) << i;
        rest &= rest - 1;
    }
    acc
}

pub fn exec_zbc(instr: &Instruction, rs1: u32, rs2: u32) -> Option<AluResult> {
    let product = clmul64(rs1, rs2);
    let value = match instr.op {
        Op::Clmul => product as u32,
        Op::Clmulh => (product >> 32) as u32,
        Op::Clmulr => (product >> 31) as u32,
        _ => return None,
    };
    Some(AluResult::to(instr, value))
}

pub fn exec_zbs(instr: &Instruction, rs1: u32, rs2: u32) -> Option<AluResult> {
    use Op::*;
    let bit = 1u32 << (operand2(instr, rs2) & 31);
    let value = match instr.op {
        Bset | Bseti => rs1 | bit,
        Bclr | Bclri => rs1 & !bit,
        Binv | Binvi => rs1 ^ bit,
        Bext | Bexti => (rs1 & bit != 0) as u32,
        _ => return None,
    };
    Some(AluResult::to(instr, value))
}

/// Dispatch any computational instruction to its group's executor.
pub fn execute_alu(instr: &Instruction, rs1: u32, rs2: u32, pc: u32) -> Option<Rv32iOutcome> {
    if let Some(out) = exec_rv32i(instr, rs1, rs2, pc) {
        return Some(out);
    }
    exec_m(instr, rs1, rs2)
        .or_else(|| exec_zba(instr, rs1, rs2))
        .or_else(|| exec_zbb(instr, rs1, rs2))
        .or_else(|| exec_zbc(instr, rs1, rs2))
        .or_else(|| exec_zbs(instr, rs1, rs2))
        .map(Rv32iOutcome::Value)
}
