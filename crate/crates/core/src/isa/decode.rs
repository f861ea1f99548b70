use super::{sext, Illegal, Instruction, Op};

const OPCODE_LOAD: u32 = 0b000_0011;
const OPCODE_MISC_MEM: u32 = 0b000_1111;
const OPCODE_OP_IMM: u32 = 0b001_0011;
const OPCODE_AUIPC: u32 = 0b001_0111;
const OPCODE_STORE: u32 = 0b010_0011;
const OPCODE_AMO: u32 = 0b010_1111;
const OPCODE_OP: u32 = 0b011_0011;
const OPCODE_LUI: u32 = 0b011_0111;
const OPCODE_BRANCH: u32 = 0b110_0011;
const OPCODE_JALR: u32 = 0b110_0111;
const OPCODE_JAL: u32 = 0b110_1111;
const OPCODE_SYSTEM: u32 = 0b111_0011;

pub(super) const RAW_ECALL: u32 = 0x0000_0073;
pub(super) const RAW_EBREAK: u32 = 0x0010_0073;
pub(super) const RAW_MRET: u32 = 0x3020_0073;
pub(super) const RAW_WFI: u32 = 0x1050_0073;

#[inline]
fn rd(w: u32) -> u8 {
    ((w >> 7) & 0x1f) as u8
}
#[inline]
fn rs1(w: u32) -> u8 {
    ((w >> 15) & 0x1f) as u8
}
#[inline]
fn rs2(w: u32) -> u8 {
    ((w >> 20) & 0x1f) as u8
}
#[inline]
fn funct3(w: u32) -> u32 {
    (w >> 12) & 0x7
}
#[inline]
fn funct7(w: u32) -> u32 {
    w >> 25
}

fn imm_i(w: u32) -> u32 {
    sext(w >> 20, 12)
}
fn imm_s(w: u32) -> u32 {
    sext(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12)
}
fn imm_b(w: u32) -> u32 {
    let v = ((w >> 31) & 1) << 12 | ((w >> 7) & 1) << 11 | ((w >> 25) & 0x3f) << 5 | ((w >> 8) & 0xf) << 1;
    sext(v, 13)
}
fn imm_u(w: u32) -> u32 {
    w & 0xffff_f000
}
fn imm_j(w: u32) -> u32 {
    let v = ((w >> 31) & 1) << 20 | ((w >> 12) & 0xff) << 12 | ((w >> 20) & 1) << 11 | ((w >> 21) & 0x3ff) << 1;
    sext(v, 21)
}

/// Decode one 32-bit instruction word.
pub fn decode(w: u32) -> Result<Instruction, Illegal> {
    let (op, rd, rs1, rs2, imm) = match decode_fields(w) {
        Some(d) => d,
        None => return Err(Illegal(w)),
    };
    Ok(Instruction {
        op,
        rd,
        rs1,
        rs2,
        imm,
        raw: w,
    })
}

fn decode_fields(w: u32) -> Option<(Op, u8, u8, u8, u32)> {
    use Op::*;
    // Compressed encodings have low bits != 0b11 and are not supported.
    if w & 0b11 != 0b11 {
        return None;
    }
    let f3 = funct3(w);
    let f7 = funct7(w);
    let d = match w & 0x7f {
        OPCODE_LUI => (Lui, rd(w), 0, 0, imm_u(w)),
        OPCODE_AUIPC => (Auipc, rd(w), 0, 0, imm_u(w)),
        OPCODE_JAL => (Jal, rd(w), 0, 0, imm_j(w)),
        OPCODE_JALR if f3 == 0 => (Jalr, rd(w), rs1(w), 0, imm_i(w)),
        OPCODE_BRANCH => {
            let op = match f3 {
                0b000 => Beq,
                0b001 => Bne,
                0b100 => Blt,
                0b101 => Bge,
                0b110 => Bltu,
                0b111 => Bgeu,
                _ => return None,
            };
            (op, 0, rs1(w), rs2(w), imm_b(w))
        }
        OPCODE_LOAD => {
            let op = match f3 {
                0b000 => Lb,
                0b001 => Lh,
                0b010 => Lw,
                0b100 => Lbu,
                0b101 => Lhu,
                _ => return None,
            };
            (op, rd(w), rs1(w), 0, imm_i(w))
        }
        OPCODE_STORE => {
            let op = match f3 {
                0b000 => Sb,
                0b001 => Sh,
                0b010 => Sw,
                _ => return None,
            };
            (op, 0, rs1(w), rs2(w), imm_s(w))
        }
        OPCODE_OP_IMM => return decode_op_imm(w),
        OPCODE_OP => {
            let op = decode_op(f7, f3, rs2(w))?;
            if op.format() == super::Format::Unary {
                (op, rd(w), rs1(w), 0, 0)
            } else {
                (op, rd(w), rs1(w), rs2(w), 0)
            }
        }
        OPCODE_MISC_MEM => match f3 {
            0b000 => (Fence, rd(w), rs1(w), 0, w >> 20),
            0b001 => (FenceI, rd(w), rs1(w), 0, w >> 20),
            _ => return None,
        },
        OPCODE_SYSTEM => match f3 {
            0b000 => match w {
                RAW_ECALL => (Ecall, 0, 0, 0, 0),
                RAW_EBREAK => (Ebreak, 0, 0, 0, 0),
                RAW_MRET => (Mret, 0, 0, 0, 0),
                RAW_WFI => (Wfi, 0, 0, 0, 0),
                _ => return None,
            },
            0b001 => (Csrrw, rd(w), rs1(w), 0, w >> 20),
            0b010 => (Csrrs, rd(w), rs1(w), 0, w >> 20),
            0b011 => (Csrrc, rd(w), rs1(w), 0, w >> 20),
            0b101 => (Csrrwi, rd(w), rs1(w), 0, w >> 20),
            0b110 => (Csrrsi, rd(w), rs1(w), 0, w >> 20),
            0b111 => (Csrrci, rd(w), rs1(w), 0, w >> 20),
            _ => return None,
        },
        OPCODE_AMO if f3 == 0b010 => {
            let ordering = (w >> 25) & 0b11;
            let op = match w >> 27 {
                0b00010 if rs2(w) == 0 => LrW,
                0b00011 => ScW,
                0b00001 => AmoswapW,
                0b00000 => AmoaddW,
                0b00100 => AmoxorW,
                0b01100 => AmoandW,
                0b01000 => AmoorW,
                0b10000 => AmominW,
                0b10100 => AmomaxW,
                0b11000 => AmominuW,
                0b11100 => AmomaxuW,
                _ => return None,
            };
            (op, rd(w), rs1(w), rs2(w), ordering)
        }
        _ => return None,
    };
    Some(d)
}

fn decode_op_imm(w: u32) -> Option<(Op, u8, u8, u8, u32)> {
    use Op::*;
    let (rd, rs1) = (rd(w), rs1(w));
    let shamt = (w >> 20) & 0x1f;
    let op = match funct3(w) {
        0b000 => Addi,
        0b010 => Slti,
        0b011 => Sltiu,
        0b100 => Xori,
        0b110 => Ori,
        0b111 => Andi,
        0b001 => {
            let op = match (funct7(w), shamt) {
                (0b000_0000, _) => Slli,
                (0b001_0100, _) => Bseti,
                (0b010_0100, _) => Bclri,
                (0b011_0100, _) => Binvi,
                (0b011_0000, 0b00000) => Clz,
                (0b011_0000, 0b00001) => Ctz,
                (0b011_0000, 0b00010) => Cpop,
                (0b011_0000, 0b00100) => SextB,
                (0b011_0000, 0b00101) => SextH,
                _ => return None,
            };
            return Some(shift_form(op, rd, rs1, shamt));
        }
        0b101 => {
            let op = match (funct7(w), shamt) {
                (0b000_0000, _) => Srli,
                (0b010_0000, _) => Srai,
                (0b010_0100, _) => Bexti,
                (0b011_0000, _) => Rori,
                (0b001_0100, 0b00111) => OrcB,
                (0b011_0100, 0b11000) => Rev8,
                _ => return None,
            };
            return Some(shift_form(op, rd, rs1, shamt));
        }
        _ => unreachable!(),
    };
    Some((op, rd, rs1, 0, imm_i(w)))
}

fn shift_form(op: Op, rd: u8, rs1: u8, shamt: u32) -> (Op, u8, u8, u8, u32) {
    if op.format() == super::Format::Unary {
        (op, rd, rs1, 0, 0)
    } else {
        (op, rd, rs1, 0, shamt)
    }
}

fn decode_op(f7: u32, f3: u32, rs2: u8) -> Option<Op> {
    use Op::*;
    let op = match (f7, f3) {
        (0b000_0000, 0b000) => Add,
        (0b000_0000, 0b001) => Sll,
        (0b000_0000, 0b010) => Slt,
        (0b000_0000, 0b011) => Sltu,
        (0b000_0000, 0b100) => Xor,
        (0b000_0000, 0b101) => Srl,
        (0b000_0000, 0b110) => Or,
        (0b000_0000, 0b111) => And,
        (0b010_0000, 0b000) => Sub,
        (0b010_0000, 0b101) => Sra,
        (0b010_0000, 0b111) => Andn,
        (0b010_0000, 0b110) => Orn,
        (0b010_0000, 0b100) => Xnor,
        (0b000_0001, 0b000) => Mul,
        (0b000_0001, 0b001) => Mulh,
        (0b000_0001, 0b010) => Mulhsu,
        (0b000_0001, 0b011) => Mulhu,
        (0b000_0001, 0b100) => Div,
        (0b000_0001, 0b101) => Divu,
        (0b000_0001, 0b110) => Rem,
        (0b000_0001, 0b111) => Remu,
        (0b001_0000, 0b010) => Sh1add,
        (0b001_0000, 0b100) => Sh2add,
        (0b001_0000, 0b110) => Sh3add,
        (0b000_0101, 0b001) => Clmul,
        (0b000_0101, 0b011) => Clmulh,
        (0b000_0101, 0b010) => Clmulr,
        (0b000_0101, 0b100) => Min,
        (0b000_0101, 0b101) => Minu,
        (0b000_0101, 0b110) => Max,
        (0b000_0101, 0b111) => Maxu,
        (0b000_0100, 0b100) if rs2 == 0 => ZextH,
        (0b011_0000, 0b001) => Rol,
        (0b011_0000, 0b101) => Ror,
        (0b001_0100, 0b001) => Bset,
        (0b010_0100, 0b001) => Bclr,
        (0b010_0100, 0b101) => Bext,
        (0b011_0100, 0b001) => Binv,
        _ => return None,
    };
    Some(op)
}
