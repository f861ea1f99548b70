//! Reference interpreter: decodes raw instruction bits itself and uses
//! bit-loop definitions for the bit-manipulation ops. No timing.

use std::collections::HashMap;

pub struct Oracle {
    pub x: [u32; 32],
    pub pc: u32,
    mem: HashMap<u32, u8>,
    reservation: Option<u32>,
}

/// What one step touched in memory.
pub struct Effect {
    pub store: Option<u32>,
}

fn bit(v: u32, i: u32) -> u32 {
    (v >> i) & 1
}

fn sx(v: u32, bits: u32) -> u32 {
    let shift = 32 - bits;
    (((v << shift) as i32) >> shift) as u32
}

pub fn naive_clz(v: u32) -> u32 {
    let mut n = 0;
    for i in (0..32).rev() {
        if bit(v, i) == 1 {
            break;
        }
        n += 1;
    }
    n
}

pub fn naive_ctz(v: u32) -> u32 {
    let mut n = 0;
    for i in 0..32 {
        if bit(v, i) == 1 {
            break;
        }
        n += 1;
    }
    n
}

pub fn naive_cpop(v: u32) -> u32 {
    (0..32).map(|i| bit(v, i)).sum()
}

pub fn naive_rol(v: u32, k: u32) -> u32 {
    let mut r = 0;
    for i in 0..32 {
        r |= bit(v, i) << ((i + (k & 31)) % 32);
    }
    r
}

pub fn naive_ror(v: u32, k: u32) -> u32 {
    let mut r = 0;
    for i in 0..32 {
        r |= bit(v, (i + (k & 31)) % 32) << i;
    }
    r
}

pub fn naive_rev8(v: u32) -> u32 {
    let mut r = 0;
    for byte in 0..4 {
        r |= ((v >> (8 * byte)) & 0xff) << (8 * (3 - byte));
    }
    r
}

pub fn naive_orcb(v: u32) -> u32 {
    let mut r = 0;
    for byte in 0..4 {
        if (v >> (8 * byte)) & 0xff != 0 {
            r |= 0xff << (8 * byte);
        }
    }
    r
}

/// Full 64-bit carry-less product by shift-and-xor.
pub fn naive_clmul_wide(a: u32, b: u32) -> u64 {
    let mut r = 0u64;
    for i in 0..32 {
        if bit(b, i) == 1 {
            r ^= (a as u64) << i;
        }
    }
    r
}

pub fn naive_clmul(a: u32, b: u32) -> u32 {
    let mut r = 0u32;
    for i in 0..32 {
        if bit(b, i) == 1 {
            r ^= a << i;
        }
    }
    r
}

pub fn naive_clmulh(a: u32, b: u32) -> u32 {
    let mut r = 0u32;
    for i in 1..32 {
        if bit(b, i) == 1 {
            r ^= a >> (32 - i);
        }
    }
    r
}

pub fn naive_clmulr(a: u32, b: u32) -> u32 {
    let mut r = 0u32;
    for i in 0..32 {
        if bit(b, i) == 1 {
            r ^= a >> (31 - i);
        }
    }
    r
}

pub fn naive_div(a: u32, b: u32) -> u32 {
    let (a, b) = (a as i32, b as i32);
    if b == 0 {
        u32::MAX
    } else if a == i32::MIN && b == -1 {
        a as u32
    } else {
        (a / b) as u32
    }
}

pub fn naive_rem(a: u32, b: u32) -> u32 {
    let (a, b) = (a as i32, b as i32);
    if b == 0 {
        a as u32
    } else if a == i32::MIN && b == -1 {
        0
    } else {
        (a % b) as u32
    }
}

pub fn naive_divu(a: u32, b: u32) -> u32 {
    a.checked_div(b).unwrap_or(u32::MAX)
}

pub fn naive_remu(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        a % b
    }
}

impl Oracle {
    pub fn new(pc: u32) -> Self {
        Oracle {
            x: [0; 32],
            pc,
            mem: HashMap::new(),
            reservation: None,
        }
    }

    pub fn load(&mut self, addr: u32, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.mem.insert(addr.wrapping_add(i as u32), *b);
        }
    }

    pub fn byte(&self, addr: u32) -> u8 {
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    pub fn word(&self, addr: u32) -> u32 {
        self.read(addr, 4)
    }

    fn read(&self, addr: u32, n: u32) -> u32 {
        (0..n).map(|i| (self.byte(addr + i) as u32) << (8 * i)).sum()
    }

    fn write(&mut self, addr: u32, n: u32, v: u32) {
        for i in 0..n {
            self.mem.insert(addr + i, (v >> (8 * i)) as u8);
        }
    }

    fn set(&mut self, rd: u32, v: u32) {
        if rd != 0 {
            self.x[rd as usize] = v;
        }
    }

    /// Execute one instruction. Panics on anything a trap-free program
    /// must not contain.
    pub fn step(&mut self) -> Effect {
        let w = self.read(self.pc, 4);
        let opcode = w & 0x7f;
        let rd = (w >> 7) & 31;
        let f3 = (w >> 12) & 7;
        let rs1 = (w >> 15) & 31;
        let rs2 = (w >> 20) & 31;
        let f7 = w >> 25;
        let a = self.x[rs1 as usize];
        let b = self.x[rs2 as usize];
        let imm_i = sx(w >> 20, 12);
        let imm_s = sx(((w >> 25) << 5) | ((w >> 7) & 31), 12);
        let imm_b = sx(
            (bit(w, 31) << 12) | (bit(w, 7) << 11) | (((w >> 25) & 0x3f) << 5) | (((w >> 8) & 0xf) << 1),
            13,
        );
        let imm_j = sx(
            (bit(w, 31) << 20) | (((w >> 12) & 0xff) << 12) | (bit(w, 20) << 11) | (((w >> 21) & 0x3ff) << 1),
            21,
        );
        let mut next = self.pc.wrapping_add(4);
        let mut effect = Effect { store: None };

        match opcode {
            0x37 => self.set(rd, w & 0xffff_f000),
            0x17 => self.set(rd, self.pc.wrapping_add(w & 0xffff_f000)),
            0x6f => {
                self.set(rd, next);
                next = self.pc.wrapping_add(imm_j);
            }
            0x67 => {
                let t = a.wrapping_add(imm_i) & !1;
                self.set(rd, next);
                next = t;
            }
            0x63 => {
                let taken = match f3 {
                    0 => a == b,
                    1 => a != b,
                    4 => (a as i32) < (b as i32),
                    5 => (a as i32) >= (b as i32),
                    6 => a < b,
                    7 => a >= b,
                    _ => panic!("bad branch {w:08x}"),
                };
                if taken {
                    next = self.pc.wrapping_add(imm_b);
                }
            }
            0x03 => {
                let addr = a.wrapping_add(imm_i);
                let v = match f3 {
                    0 => sx(self.read(addr, 1), 8),
                    1 => sx(self.read(addr, 2), 16),
                    2 => self.read(addr, 4),
                    4 => self.read(addr, 1),
                    5 => self.read(addr, 2),
                    _ => panic!("bad load {w:08x}"),
                };
                self.set(rd, v);
            }
            0x23 => {
                let addr = a.wrapping_add(imm_s);
                let n = 1 << f3;
                self.write(addr, n, b);
                self.reservation = None;
                effect.store = Some(addr & !3);
            }
            0x13 => {
                let sh = rs2;
                let v = match (f3, f7) {
                    (0, _) => a.wrapping_add(imm_i),
                    (2, _) => ((a as i32) < (imm_i as i32)) as u32,
                    (3, _) => (a < imm_i) as u32,
                    (4, _) => a ^ imm_i,
                    (6, _) => a | imm_i,
                    (7, _) => a & imm_i,
                    (1, 0x00) => a << sh,
                    (1, 0x14) => a | (1 << sh),
                    (1, 0x24) => a & !(1 << sh),
                    (1, 0x34) => a ^ (1 << sh),
                    (1, 0x30) => match rs2 {
                        0 => naive_clz(a),
                        1 => naive_ctz(a),
                        2 => naive_cpop(a),
                        4 => sx(a & 0xff, 8),
                        5 => sx(a & 0xffff, 16),
                        _ => panic!("bad unary {w:08x}"),
                    },
                    (5, 0x00) => a >> sh,
                    (5, 0x20) => ((a as i32) >> sh) as u32,
                    (5, 0x30) => naive_ror(a, sh),
                    (5, 0x24) => bit(a, sh),
                    (5, 0x14) if rs2 == 7 => naive_orcb(a),
                    (5, 0x34) if rs2 == 0x18 => naive_rev8(a),
                    _ => panic!("bad op-imm {w:08x}"),
                };
                self.set(rd, v);
            }
            0x33 => {
                let s = b & 31;
                let v = match (f7, f3) {
                    (0x00, 0) => a.wrapping_add(b),
                    (0x20, 0) => a.wrapping_sub(b),
                    (0x00, 1) => a << s,
                    (0x00, 2) => ((a as i32) < (b as i32)) as u32,
                    (0x00, 3) => (a < b) as u32,
                    (0x00, 4) => a ^ b,
                    (0x00, 5) => a >> s,
                    (0x20, 5) => ((a as i32) >> s) as u32,
                    (0x00, 6) => a | b,
                    (0x00, 7) => a & b,
                    (0x01, 0) => (a as u64 * b as u64) as u32,
                    (0x01, 1) => ((a as i32 as i128 * b as i32 as i128) >> 32) as u32,
                    (0x01, 2) => ((a as i32 as i128 * b as i128) >> 32) as u32,
                    (0x01, 3) => ((a as u128 * b as u128) >> 32) as u32,
                    (0x01, 4) => naive_div(a, b),
                    (0x01, 5) => naive_divu(a, b),
                    (0x01, 6) => naive_rem(a, b),
                    (0x01, 7) => naive_remu(a, b),
                    (0x10, 2) => (a << 1).wrapping_add(b),
                    (0x10, 4) => (a << 2).wrapping_add(b),
                    (0x10, 6) => (a << 3).wrapping_add(b),
                    (0x20, 7) => a & !b,
                    (0x20, 6) => a | !b,
                    (0x20, 4) => !(a ^ b),
                    (0x04, 4) if rs2 == 0 => a & 0xffff,
                    (0x05, 4) => {
                        if (a as i32) < (b as i32) {
                            a
                        } else {
                            b
                        }
                    }
                    (0x05, 5) => {
                        if a < b {
                            a
                        } else {
                            b
                        }
                    }
                    (0x05, 6) => {
                        if (a as i32) > (b as i32) {
                            a
                        } else {
                            b
                        }
                    }
                    (0x05, 7) => {
                        if a > b {
                            a
                        } else {
                            b
                        }
                    }
                    (0x30, 1) => naive_rol(a, s),
                    (0x30, 5) => naive_ror(a, s),
                    (0x05, 1) => naive_clmul(a, b),
                    (0x05, 3) => naive_clmulh(a, b),
                    (0x05, 2) => naive_clmulr(a, b),
                    (0x14, 1) => a | (1 << s),
                    (0x24, 1) => a & !(1 << s),
                    (0x34, 1) => a ^ (1 << s),
                    (0x24, 5) => bit(a, s),
                    _ => panic!("bad op {w:08x}"),
                };
                self.set(rd, v);
            }
            0x0f => {}
            0x2f => {
                let f5 = w >> 27;
                match f5 {
                    0b00010 => {
                        let v = self.read(a, 4);
                        self.reservation = Some(a);
                        self.set(rd, v);
                    }
                    0b00011 => {
                        if self.reservation.take() == Some(a) {
                            self.write(a, 4, b);
                            effect.store = Some(a);
                            self.set(rd, 0);
                        } else {
                            self.set(rd, 1);
                        }
                    }
                    _ => {
                        let old = self.read(a, 4);
                        let new = match f5 {
                            0b00001 => b,
                            0b00000 => old.wrapping_add(b),
                            0b00100 => old ^ b,
                            0b01100 => old & b,
                            0b01000 => old | b,
                            0b10000 => (old as i32).min(b as i32) as u32,
                            0b10100 => (old as i32).max(b as i32) as u32,
                            0b11000 => old.min(b),
                            0b11100 => old.max(b),
                            _ => panic!("bad amo {w:08x}"),
                        };
                        self.write(a, 4, new);
                        self.reservation = None;
                        effect.store = Some(a);
                        self.set(rd, old);
                    }
                }
            }
            _ => panic!("unsupported word {w:08x} at {:08x}", self.pc),
        }
        self.pc = next;
        effect
    }
}
