//! Instruction decoding and pure execution for RV32IMA with the Zba, Zbb,
//! Zbc and Zbs bit-manipulation subsets.
//!
//! Decoding is total: every 32-bit word maps to either a valid
//! [`Instruction`] or [`Illegal`]. Nothing in this module touches hart or bus
//! state; loads, stores, CSR accesses and traps are carried out by the hart.

mod decode;
mod disasm;
mod encode;
pub mod exec;

pub use decode::decode;
pub use encode::encode;
pub use exec::{exec_m, exec_rv32i, exec_zba, exec_zbb, exec_zbc, exec_zbs, execute_alu, AluResult, Rv32iOutcome};

use serde::{Deserialize, Serialize};

/// A word that does not encode any instruction this core implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Illegal(pub u32);

impl std::fmt::Display for Illegal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "illegal instruction {:#010x}", self.0)
    }
}

impl std::error::Error for Illegal {}

macro_rules! ops {
    ($($variant:ident => $name:literal,)*) => {
        /// Mnemonic identity, one variant per distinct instruction.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op {
            $($variant,)*
        }

        impl Op {
            pub const ALL: &'static [Op] = &[$(Op::$variant,)*];

            /// Assembler mnemonic, lower case.
            pub fn name(self) -> &'static str {
                match self {
                    $(Op::$variant => $name,)*
                }
            }
        }
    };
}

ops! {
    Lui => "lui", Auipc => "auipc", Jal => "jal", Jalr => "jalr",
    Beq => "beq", Bne => "bne", Blt => "blt", Bge => "bge", Bltu => "bltu", Bgeu => "bgeu",
    Lb => "lb", Lh => "lh", Lw => "lw", Lbu => "lbu", Lhu => "lhu",
    Sb => "sb", Sh => "sh", Sw => "sw",
    Addi => "addi", Slti => "slti", Sltiu => "sltiu", Xori => "xori", Ori => "ori", Andi => "andi",
    Slli => "slli", Srli => "srli", Srai => "srai",
    Add => "add", Sub => "sub", Sll => "sll", Slt => "slt", Sltu => "sltu",
    Xor => "xor", Srl => "srl", Sra => "sra", Or => "or", And => "and",
    Fence => "fence", FenceI => "fence.i",
    Ecall => "ecall", Ebreak => "ebreak", Mret => "mret", Wfi => "wfi",
    Csrrw => "csrrw", Csrrs => "csrrs", Csrrc => "csrrc",
    Csrrwi => "csrrwi", Csrrsi => "csrrsi", Csrrci => "csrrci",
    Mul => "mul", Mulh => "mulh", Mulhsu => "mulhsu", Mulhu => "mulhu",
    Div => "div", Divu => "divu", Rem => "rem", Remu => "remu",
    LrW => "lr.w", ScW => "sc.w",
    AmoswapW => "amoswap.w", AmoaddW => "amoadd.w", AmoxorW => "amoxor.w",
    AmoandW => "amoand.w", AmoorW => "amoor.w", AmominW => "amomin.w",
    AmomaxW => "amomax.w", AmominuW => "amominu.w", AmomaxuW => "amomaxu.w",
    Sh1add => "sh1add", Sh2add => "sh2add", Sh3add => "sh3add",
    Andn => "andn", Orn => "orn", Xnor => "xnor",
    Clz => "clz", Ctz => "ctz", Cpop => "cpop",
    Max => "max", Maxu => "maxu", Min => "min", Minu => "minu",
    SextB => "sext.b", SextH => "sext.h", ZextH => "zext.h",
    Rol => "rol", Ror => "ror", Rori => "rori", OrcB => "orc.b", Rev8 => "rev8",
    Clmul => "clmul", Clmulh => "clmulh", Clmulr => "clmulr",
    Bset => "bset", Bseti => "bseti", Bclr => "bclr", Bclri => "bclri",
    Binv => "binv", Binvi => "binvi", Bext => "bext", Bexti => "bexti",
}

/// Operand layout of an instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    R,
    I,
    /// I-type whose immediate is a 5-bit shift amount or bit index.
    Shamt,
    /// R-type with a fixed rs2 field selecting a unary operation.
    Unary,
    S,
    B,
    U,
    J,
    Csr,
    CsrImm,
    Amo,
    Fence,
    /// Fully fixed encodings (ECALL, EBREAK, MRET, WFI).
    Fixed,
}

/// Execution class used by the timing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrClass {
    Alu,
    Load,
    Store,
    Mul,
    Div,
    Branch,
    Jump,
    System,
    Amo,
}

impl InstrClass {
    pub const ALL: [InstrClass; 9] = [
        InstrClass::Alu,
        InstrClass::Load,
        InstrClass::Store,
        InstrClass::Mul,
        InstrClass::Div,
        InstrClass::Branch,
        InstrClass::Jump,
        InstrClass::System,
        InstrClass::Amo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrClass::Alu => "alu",
            InstrClass::Load => "load",
            InstrClass::Store => "store",
            InstrClass::Mul => "mul",
            InstrClass::Div => "div",
            InstrClass::Branch => "branch",
            InstrClass::Jump => "jump",
            InstrClass::System => "system",
            InstrClass::Amo => "amo",
        }
    }
}

/// ISA subset an instruction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Extension {
    I,
    M,
    A,
    Zba,
    Zbb,
    Zbc,
    Zbs,
}

impl Op {
    pub fn format(self) -> Format {
        use Op::*;
        match self {
            Lui | Auipc => Format::U,
            Jal => Format::J,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => Format::B,
            Sb | Sh | Sw => Format::S,
            Jalr | Lb | Lh | Lw | Lbu | Lhu | Addi | Slti | Sltiu | Xori | Ori | Andi => Format::I,
            Slli | Srli | Srai | Rori | Bseti | Bclri | Binvi | Bexti => Format::Shamt,
            Clz | Ctz | Cpop | SextB | SextH | ZextH | OrcB | Rev8 => Format::Unary,
            Fence | FenceI => Format::Fence,
            Ecall | Ebreak | Mret | Wfi => Format::Fixed,
            Csrrw | Csrrs | Csrrc => Format::Csr,
            Csrrwi | Csrrsi | Csrrci => Format::CsrImm,
            LrW | ScW | AmoswapW | AmoaddW | AmoxorW | AmoandW | AmoorW | AmominW | AmomaxW | AmominuW | AmomaxuW => {
                Format::Amo
            }
            _ => Format::R,
        }
    }

    pub fn extension(self) -> Extension {
        use Op::*;
        match self {
            Mul | Mulh | Mulhsu | Mulhu | Div | Divu | Rem | Remu => Extension::M,
            LrW | ScW | AmoswapW | AmoaddW | AmoxorW | AmoandW | AmoorW | AmominW | AmomaxW | AmominuW | AmomaxuW => {
                Extension::A
            }
            Sh1add | Sh2add | Sh3add => Extension::Zba,
            Andn | Orn | Xnor | Clz | Ctz | Cpop | Max | Maxu | Min | Minu | SextB | SextH | ZextH | Rol | Ror
            | Rori | OrcB | Rev8 => Extension::Zbb,
            Clmul | Clmulh | Clmulr => Extension::Zbc,
            Bset | Bseti | Bclr | Bclri | Binv | Binvi | Bext | Bexti => Extension::Zbs,
            _ => Extension::I,
        }
    }

    pub fn class(self) -> InstrClass {
        use Op::*;
        match self {
            Lb | Lh | Lw | Lbu | Lhu | LrW => InstrClass::Load,
            Sb | Sh | Sw => InstrClass::Store,
            Mul | Mulh | Mulhsu | Mulhu => InstrClass::Mul,
            Div | Divu | Rem | Remu => InstrClass::Div,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => InstrClass::Branch,
            Jal | Jalr => InstrClass::Jump,
            Fence | FenceI | Ecall | Ebreak | Mret | Wfi | Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
                InstrClass::System
            }
            ScW | AmoswapW | AmoaddW | AmoxorW | AmoandW | AmoorW | AmominW | AmomaxW | AmominuW | AmomaxuW => {
                InstrClass::Amo
            }
            _ => InstrClass::Alu,
        }
    }

    /// True when the second ALU operand comes from the immediate field.
    pub fn uses_imm_operand(self) -> bool {
        matches!(self.format(), Format::I | Format::Shamt)
    }
}

/// One decoded instruction.
///
/// Field conventions: `imm` holds the sign-extended immediate for I/S/B/U/J
/// formats, the 5-bit amount for shift and bit-index immediates, the 12-bit
/// CSR address for CSR instructions, bits 31:20 for FENCE, and `aq << 1 | rl`
/// for atomics. CSR-immediate forms carry their 5-bit operand in `rs1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: u32,
    pub raw: u32,
}

impl Instruction {
    pub fn class(&self) -> InstrClass {
        self.op.class()
    }

    /// Register sources read by this instruction, used for hazard detection.
    pub fn sources(&self) -> [Option<u8>; 2] {
        match self.op.format() {
            Format::R | Format::S | Format::B => [Some(self.rs1), Some(self.rs2)],
            Format::Amo if self.op == Op::LrW => [Some(self.rs1), None],
            Format::Amo => [Some(self.rs1), Some(self.rs2)],
            Format::I | Format::Shamt | Format::Unary | Format::Csr => [Some(self.rs1), None],
            Format::U | Format::J | Format::CsrImm | Format::Fence | Format::Fixed => [None, None],
        }
    }

    /// Destination register, if the format has one.
    pub fn dest(&self) -> Option<u8> {
        match self.op.format() {
            Format::S | Format::B | Format::Fence | Format::Fixed => None,
            _ => Some(self.rd),
        }
    }

    pub fn csr(&self) -> u16 {
        (self.imm & 0xfff) as u16
    }
}

impl std::fmt::Display for Instruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        disasm::write_instruction(f, self)
    }
}

/// Sign-extend the low `bits` bits of `value`.
pub(crate) fn sext(value: u32, bits: u32) -> u32 {
    let shift = 32 - bits;
    (((value << shift) as i32) >> shift) as u32
}
