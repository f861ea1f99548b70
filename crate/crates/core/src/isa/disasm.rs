use std::fmt;

use super::{Format, Instruction, Op};

pub(super) fn write_instruction(f: &mut fmt::Formatter<'_>, i: &Instruction) -> fmt::Result {
    let name = i.op.name();
    let imm = i.imm as i32;
    match i.op.format() {
        Format::R => write!(f, "{name} x{}, x{}, x{}", i.rd, i.rs1, i.rs2),
        Format::Unary => write!(f, "{name} x{}, x{}", i.rd, i.rs1),
        Format::I => match i.op {
            Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu | Op::Jalr => {
                write!(f, "{name} x{}, {imm}(x{})", i.rd, i.rs1)
            }
            _ => write!(f, "{name} x{}, x{}, {imm}", i.rd, i.rs1),
        },
        Format::Shamt => write!(f, "{name} x{}, x{}, {}", i.rd, i.rs1, i.imm),
        Format::S => write!(f, "{name} x{}, {imm}(x{})", i.rs2, i.rs1),
        Format::B => write!(f, "{name} x{}, x{}, {imm}", i.rs1, i.rs2),
        Format::U => write!(f, "{name} x{}, {:#x}", i.rd, i.imm >> 12),
        Format::J => write!(f, "{name} x{}, {imm}", i.rd),
        Format::Csr => write!(f, "{name} x{}, {:#05x}, x{}", i.rd, i.csr(), i.rs1),
        Format::CsrImm => write!(f, "{name} x{}, {:#05x}, {}", i.rd, i.csr(), i.rs1),
        Format::Amo if i.op == Op::LrW => write!(f, "{name} x{}, (x{})", i.rd, i.rs1),
        Format::Amo => write!(f, "{name} x{}, x{}, (x{})", i.rd, i.rs2, i.rs1),
        Format::Fence | Format::Fixed => f.write_str(name),
    }
}
