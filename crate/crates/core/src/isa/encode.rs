use super::decode::{RAW_EBREAK, RAW_ECALL, RAW_MRET, RAW_WFI};
use super::{Format, Instruction, Op};

/// Fixed opcode bits (opcode, funct3, funct7 and any fixed rs2 field) for
/// each mnemonic.
fn fixed_bits(op: Op) -> u32 {
    use Op::*;
    let r = |f7: u32, f3: u32, opc: u32| (f7 << 25) | (f3 << 12) | opc;
    let unary = |f7: u32, sel: u32, f3: u32, opc: u32| (f7 << 25) | (sel << 20) | (f3 << 12) | opc;
    let amo = |f5: u32| (f5 << 27) | (0b010 << 12) | 0b010_1111;
    match op {
        Lui => 0b011_0111,
        Auipc => 0b001_0111,
        Jal => 0b110_1111,
        Jalr => 0b110_0111,
        Beq => r(0, 0b000, 0b110_0011),
        Bne => r(0, 0b001, 0b110_0011),
        Blt => r(0, 0b100, 0b110_0011),
        Bge => r(0, 0b101, 0b110_0011),
        Bltu => r(0, 0b110, 0b110_0011),
        Bgeu => r(0, 0b111, 0b110_0011),
        Lb => r(0, 0b000, 0b000_0011),
        Lh => r(0, 0b001, 0b000_0011),
        Lw => r(0, 0b010, 0b000_0011),
        Lbu => r(0, 0b100, 0b000_0011),
        Lhu => r(0, 0b101, 0b000_0011),
        Sb => r(0, 0b000, 0b010_0011),
        Sh => r(0, 0b001, 0b010_0011),
        Sw => r(0, 0b010, 0b010_0011),
        Addi => r(0, 0b000, 0b001_0011),
        Slti => r(0, 0b010, 0b001_0011),
        Sltiu => r(0, 0b011, 0b001_0011),
        Xori => r(0, 0b100, 0b001_0011),
        Ori => r(0, 0b110, 0b001_0011),
        Andi => r(0, 0b111, 0b001_0011),
        Slli => r(0b000_0000, 0b001, 0b001_0011),
        Srli => r(0b000_0000, 0b101, 0b001_0011),
        Srai => r(0b010_0000, 0b101, 0b001_0011),
        Add => r(0b000_0000, 0b000, 0b011_0011),
        Sub => r(0b010_0000, 0b000, 0b011_0011),
        Sll => r(0b000_0000, 0b001, 0b011_0011),
        Slt => r(0b000_0000, 0b010, 0b011_0011),
        Sltu => r(0b000_0000, 0b011, 0b011_0011),
        Xor => r(0b000_0000, 0b100, 0b011_0011),
        Srl => r(0b000_0000, 0b101, 0b011_0011),
        Sra => r(0b010_0000, 0b101, 0b011_0011),
        Or => r(0b000_0000, 0b110, 0b011_0011),
        And => r(0b000_0000, 0b111, 0b011_0011),
        Fence => r(0, 0b000, 0b000_1111),
        FenceI => r(0, 0b001, 0b000_1111),
        Ecall => RAW_ECALL,
        Ebreak => RAW_EBREAK,
        Mret => RAW_MRET,
        Wfi => RAW_WFI,
        Csrrw => r(0, 0b001, 0b111_0011),
        Csrrs => r(0, 0b010, 0b111_0011),
        Csrrc => r(0, 0b011, 0b111_0011),
        Csrrwi => r(0, 0b101, 0b111_0011),
        Csrrsi => r(0, 0b110, 0b111_0011),
        Csrrci => r(0, 0b111, 0b111_0011),
        Mul => r(0b000_0001, 0b000, 0b011_0011),
        Mulh => r(0b000_0001, 0b001, 0b011_0011),
        Mulhsu => r(0b000_0001, 0b010, 0b011_0011),
        Mulhu => r(0b000_0001, 0b011, 0b011_0011),
        Div => r(0b000_0001, 0b100, 0b011_0011),
        Divu => r(0b000_0001, 0b101, 0b011_0011),
        Rem => r(0b000_0001, 0b110, 0b011_0011),
        Remu => r(0b000_0001, 0b111, 0b011_0011),
        LrW => amo(0b00010),
        ScW => amo(0b00011),
        AmoswapW => amo(0b00001),
        AmoaddW => amo(0b00000),
        AmoxorW => amo(0b00100),
        AmoandW => amo(0b01100),
        AmoorW => amo(0b01000),
        AmominW => amo(0b10000),
        AmomaxW => amo(0b10100),
        AmominuW => amo(0b11000),
        AmomaxuW => amo(0b11100),
        Sh1add => r(0b001_0000, 0b010, 0b011_0011),
        Sh2add => r(0b001_0000, 0b100, 0b011_0011),
        Sh3add => r(0b001_0000, 0b110, 0b011_0011),
        Andn => r(0b010_0000, 0b111, 0b011_0011),
        Orn => r(0b010_0000, 0b110, 0b011_0011),
        Xnor => r(0b010_0000, 0b100, 0b011_0011),
        Clz => unary(0b011_0000, 0b00000, 0b001, 0b001_0011),
        Ctz => unary(0b011_0000, 0b00001, 0b001, 0b001_0011),
        Cpop => unary(0b011_0000, 0b00010, 0b001, 0b001_0011),
        SextB => unary(0b011_0000, 0b00100, 0b001, 0b001_0011),
        SextH => unary(0b011_0000, 0b00101, 0b001, 0b001_0011),
        ZextH => unary(0b000_0100, 0b00000, 0b100, 0b011_0011),
        OrcB => unary(0b001_0100, 0b00111, 0b101, 0b001_0011),
        Rev8 => unary(0b011_0100, 0b11000, 0b101, 0b001_0011),
        Max => r(0b000_0101, 0b110, 0b011_0011),
        Maxu => r(0b000_0101, 0b111, 0b011_0011),
        Min => r(0b000_0101, 0b100, 0b011_0011),
        Minu => r(0b000_0101, 0b101, 0b011_0011),
        Rol => r(0b011_0000, 0b001, 0b011_0011),
        Ror => r(0b011_0000, 0b101, 0b011_0011),
        Rori => r(0b011_0000, 0b101, 0b001_0011),
        Clmul => r(0b000_0101, 0b001, 0b011_0011),
        Clmulh => r(0b000_0101, 0b011, 0b011_0011),
        Clmulr => r(0b000_0101, 0b010, 0b011_0011),
        Bset => r(0b001_0100, 0b001, 0b011_0011),
        Bseti => r(0b001_0100, 0b001, 0b001_0011),
        Bclr => r(0b010_0100, 0b001, 0b011_0011),
        Bclri => r(0b010_0100, 0b001, 0b001_0011),
        Binv => r(0b011_0100, 0b001, 0b011_0011),
        Binvi => r(0b011_0100, 0b001, 0b001_0011),
        Bext => r(0b010_0100, 0b101, 0b011_0011),
        Bexti => r(0b010_0100, 0b101, 0b001_0011),
    }
}

/// Encode an instruction from its fields. `raw` is ignored.
///
/// For every legal word `w`, `encode(&decode(w)?) == w`.
pub fn encode(i: &Instruction) -> u32 {
    let rd = (i.rd as u32 & 0x1f) << 7;
    let rs1 = (i.rs1 as u32 & 0x1f) << 15;
    let rs2 = (i.rs2 as u32 & 0x1f) << 20;
    let imm = i.imm;
    fixed_bits(i.op)
        | match i.op.format() {
            Format::R => rd | rs1 | rs2,
            Format::Unary => rd | rs1,
            Format::I => rd | rs1 | (imm & 0xfff) << 20,
            Format::Shamt => rd | rs1 | (imm & 0x1f) << 20,
            Format::S => rs1 | rs2 | ((imm >> 5) & 0x7f) << 25 | (imm & 0x1f) << 7,
            Format::B => {
                rs1 | rs2
                    | ((imm >> 12) & 1) << 31
                    | ((imm >> 5) & 0x3f) << 25
                    | ((imm >> 1) & 0xf) << 8
                    | ((imm >> 11) & 1) << 7
            }
            Format::U => rd | (imm & 0xffff_f000),
            Format::J => {
                rd | ((imm >> 20) & 1) << 31
                    | ((imm >> 1) & 0x3ff) << 21
                    | ((imm >> 11) & 1) << 20
                    | ((imm >> 12) & 0xff) << 12
            }
            Format::Csr | Format::CsrImm | Format::Fence => rd | rs1 | (imm & 0xfff) << 20,
            Format::Amo if i.op == Op::LrW => rd | rs1 | (imm & 0b11) << 25,
            Format::Amo => rd | rs1 | rs2 | (imm & 0b11) << 25,
            Format::Fixed => 0,
        }
}
