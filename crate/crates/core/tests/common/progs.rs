//! Random trap-free programs. Control flow only goes forward, so every
//! program reaches its final self-loop.

use rand::{Rng, RngCore};
use rvmcu::bus::RAM_BASE;
use rvmcu::isa::Op;

use super::asm::ins;

/// Holds the code base; never written by generated code.
pub const CODE_REG: u8 = 30;
/// Holds the data base; never written by generated code.
pub const DATA_REG: u8 = 31;
pub const DATA_BASE: u32 = RAM_BASE + 0x1_0000;
pub const DATA_SIZE: u32 = 2048;

pub struct Program {
    pub words: Vec<u32>,
    pub regs: [u32; 32],
    pub data: Vec<u8>,
}

impl Program {
    pub fn code_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    /// Address of the terminating self-loop.
    pub fn end_pc(&self) -> u32 {
        RAM_BASE + 4 * (self.words.len() as u32 - 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Mix {
    /// Every supported non-system instruction.
    Full,
    /// Register-register and register-immediate arithmetic only.
    AluOnly,
}

const R_OPS: &[Op] = &[
    Op::Add,
    Op::Sub,
    Op::Sll,
    Op::Slt,
    Op::Sltu,
    Op::Xor,
    Op::Srl,
    Op::Sra,
    Op::Or,
    Op::And,
    Op::Mul,
    Op::Mulh,
    Op::Mulhsu,
    Op::Mulhu,
    Op::Div,
    Op::Divu,
    Op::Rem,
    Op::Remu,
    Op::Sh1add,
    Op::Sh2add,
    Op::Sh3add,
    Op::Andn,
    Op::Orn,
    Op::Xnor,
    Op::Max,
    Op::Maxu,
    Op::Min,
    Op::Minu,
    Op::Rol,
    Op::Ror,
    Op::Clmul,
    Op::Clmulh,
    Op::Clmulr,
    Op::Bset,
    Op::Bclr,
    Op::Binv,
    Op::Bext,
];
const I_OPS: &[Op] = &[Op::Addi, Op::Slti, Op::Sltiu, Op::Xori, Op::Ori, Op::Andi];
const SHAMT_OPS: &[Op] = &[
    Op::Slli,
    Op::Srli,
    Op::Srai,
    Op::Rori,
    Op::Bseti,
    Op::Bclri,
    Op::Binvi,
    Op::Bexti,
];
const UNARY_OPS: &[Op] = &[
    Op::Clz,
    Op::Ctz,
    Op::Cpop,
    Op::SextB,
    Op::SextH,
    Op::ZextH,
    Op::OrcB,
    Op::Rev8,
];
const LOADS: &[(Op, u32)] = &[(Op::Lb, 1), (Op::Lh, 2), (Op::Lw, 4), (Op::Lbu, 1), (Op::Lhu, 2)];
const STORES: &[(Op, u32)] = &[(Op::Sb, 1), (Op::Sh, 2), (Op::Sw, 4)];
const BRANCHES: &[Op] = &[Op::Beq, Op::Bne, Op::Blt, Op::Bge, Op::Bltu, Op::Bgeu];
const AMOS: &[Op] = &[
    Op::AmoswapW,
    Op::AmoaddW,
    Op::AmoxorW,
    Op::AmoandW,
    Op::AmoorW,
    Op::AmominW,
    Op::AmomaxW,
    Op::AmominuW,
    Op::AmomaxuW,
];

/// Values that stress corner cases more often than uniform sampling would.
pub fn interesting(rng: &mut impl RngCore) -> u32 {
    match rng.random_range(0..8) {
        0 => 0,
        1 => u32::MAX,
        2 => 0x8000_0000,
        3 => 0x7fff_ffff,
        4 => 1 << rng.random_range(0..32),
        5 => rng.random_range(0..64),
        _ => rng.random(),
    }
}

fn dest(rng: &mut impl RngCore) -> u8 {
    // Occasionally target x0 to exercise the hardwired zero.
    if rng.random_range(0..32) == 0 {
        0
    } else {
        rng.random_range(1..CODE_REG)
    }
}

fn src(rng: &mut impl RngCore) -> u8 {
    rng.random_range(0..32)
}

/// Index of a random forward target in `(i, end]`.
fn forward(rng: &mut impl RngCore, i: usize, end: usize) -> usize {
    (i + rng.random_range(1..=8)).min(end)
}

pub fn generate(rng: &mut impl RngCore, len: usize, mix: Mix) -> Program {
    assert!((2..500).contains(&len), "jalr offsets must stay within 12 bits");
    let end = len - 1;
    let mut words = Vec::with_capacity(len);
    for i in 0..end {
        let pick = if mix == Mix::AluOnly {
            rng.random_range(0..60)
        } else {
            rng.random_range(0..100)
        };
        let w = match pick {
            0..=29 => ins(
                R_OPS[rng.random_range(0..R_OPS.len())],
                dest(rng),
                src(rng),
                src(rng),
                0,
            ),
            30..=41 => {
                let imm = (rng.random_range(-2048i32..2048)) as u32;
                ins(I_OPS[rng.random_range(0..I_OPS.len())], dest(rng), src(rng), 0, imm)
            }
            42..=49 => ins(
                SHAMT_OPS[rng.random_range(0..SHAMT_OPS.len())],
                dest(rng),
                src(rng),
                0,
                rng.random_range(0..32),
            ),
            50..=55 => ins(
                UNARY_OPS[rng.random_range(0..UNARY_OPS.len())],
                dest(rng),
                src(rng),
                0,
                0,
            ),
            56..=57 => ins(Op::Lui, dest(rng), 0, 0, rng.random::<u32>() & 0xffff_f000),
            58..=59 => ins(Op::Auipc, dest(rng), 0, 0, rng.random::<u32>() & 0xffff_f000),
            60..=69 => {
                let (op, n) = LOADS[rng.random_range(0..LOADS.len())];
                let off = rng.random_range(0..DATA_SIZE / n) * n;
                ins(op, dest(rng), DATA_REG, 0, off)
            }
            70..=77 => {
                let (op, n) = STORES[rng.random_range(0..STORES.len())];
                let off = rng.random_range(0..DATA_SIZE / n) * n;
                ins(op, 0, DATA_REG, src(rng), off)
            }
            78..=85 => {
                let t = forward(rng, i, end);
                ins(
                    BRANCHES[rng.random_range(0..BRANCHES.len())],
                    0,
                    src(rng),
                    src(rng),
                    4 * (t - i) as u32,
                )
            }
            86..=88 => {
                let t = forward(rng, i, end);
                ins(Op::Jal, dest(rng), 0, 0, 4 * (t - i) as u32)
            }
            89..=90 => {
                let t = forward(rng, i, end);
                // Bit 0 of the sum is dropped by the jump.
                let imm = 4 * t as u32 + rng.random_range(0..2);
                ins(Op::Jalr, dest(rng), CODE_REG, 0, imm)
            }
            91..=94 => ins(AMOS[rng.random_range(0..AMOS.len())], dest(rng), DATA_REG, src(rng), 0),
            95..=96 => ins(Op::LrW, dest(rng), DATA_REG, 0, 0),
            97..=98 => ins(Op::ScW, dest(rng), DATA_REG, src(rng), 0),
            _ => ins(Op::Fence, 0, 0, 0, 0x0ff),
        };
        words.push(w);
    }
    words.push(ins(Op::Jal, 0, 0, 0, 0));

    let mut regs = [0u32; 32];
    for r in regs.iter_mut().skip(1) {
        *r = interesting(rng);
    }
    regs[CODE_REG as usize] = RAM_BASE;
    regs[DATA_REG as usize] = DATA_BASE;
    let mut data = vec![0u8; DATA_SIZE as usize];
    rng.fill_bytes(&mut data);
    Program { words, regs, data }
}
