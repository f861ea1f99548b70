//! One check per acceptance criterion. Each returns a one-line detail on
//! success and the first discrepancy on failure.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rvmcu::bus::{CLINT_BASE, GPIO_A_BASE, PLIC_BASE, RAM_BASE};
use rvmcu::frontdoor::{start, ServeOptions};
use rvmcu::hart::{CSR_MCAUSE, CSR_MEPC, CSR_MIE, CSR_MSTATUS, CSR_MTVEC};
use rvmcu::irq::{CLINT_MSIP, CLINT_MTIMECMP_HI, CLINT_MTIMECMP_LO, PLIC_CLAIM, PLIC_ENABLE};
use rvmcu::isa::{decode, execute_alu, InstrClass, Op, Rv32iOutcome};
use rvmcu::machine::{
    Firmware, ImageFormat, Machine, MachineConfig, MachineEvent, RunLimits, StepOutcome, Stimulus, StopReason,
    TraceRecord, TraceSink,
};
use rvmcu::periph::{GPIO_DIR, GPIO_INT_EN, GPIO_INT_LEVEL, GPIO_OUT};

use super::asm::{ins, Asm};
use super::client::{event, Client};
use super::oracle::*;
use super::progs::{generate, interesting, Mix, Program, DATA_BASE, DATA_SIZE};

pub type Outcome = Result<String, String>;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/firmware")
        .join(name)
}

pub fn machine() -> Machine {
    Machine::new(MachineConfig::default()).expect("default map")
}

pub fn functional_machine() -> Machine {
    Machine::new(MachineConfig {
        timing_enabled: false,
        ..MachineConfig::default()
    })
    .expect("default map")
}

/// Machine with `p` loaded and its registers and data preset.
pub fn load_program(m: &mut Machine, p: &Program) {
    m.load_flat(&p.code_bytes(), RAM_BASE).expect("code fits");
    m.bus.load_bytes(DATA_BASE, &p.data).expect("data fits");
    m.hart.x = p.regs;
}

pub fn echo_machine() -> Machine {
    let mut m = machine();
    let fw = Firmware::from_path(&fixture("echo.elf"), ImageFormat::Elf).expect("fixture");
    m.load(fw).expect("fixture fits");
    m
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- ISA oracle

pub fn isa_oracle_equivalence(total: u64, seed: u64) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retired = 0u64;
    let mut programs = 0u64;
    let mut ops = std::collections::BTreeSet::new();
    while retired < total {
        let p = generate(&mut rng, 400, Mix::Full);
        let mut m = machine();
        load_program(&mut m, &p);
        let mut o = Oracle::new(RAM_BASE);
        o.load(RAM_BASE, &p.code_bytes());
        o.load(DATA_BASE, &p.data);
        o.x = p.regs;

        while o.pc != p.end_pc() && retired < total {
            let pc = m.hart.pc;
            let raw = m.peek_word(pc).unwrap_or(0);
            if let Ok(i) = decode(raw) {
                ops.insert(i.op);
            }
            let out = m.step();
            ensure(out == StepOutcome::Retired, || {
                format!("program {programs}: {out:?} at {pc:08x} ({raw:08x})")
            })?;
            let effect = o.step();
            retired += 1;
            let ctx = || format!("program {programs}, pc {pc:08x}, word {raw:08x}");
            ensure(m.hart.pc == o.pc, || {
                format!("{}: pc {:08x} vs oracle {:08x}", ctx(), m.hart.pc, o.pc)
            })?;
            for r in 0..32 {
                ensure(m.hart.x[r] == o.x[r], || {
                    format!("{}: x{r} = {:08x} vs oracle {:08x}", ctx(), m.hart.x[r], o.x[r])
                })?;
            }
            if let Some(addr) = effect.store {
                let got = m.peek_word(addr);
                ensure(got == Some(o.word(addr)), || {
                    format!("{}: M[{addr:08x}] = {got:08x?} vs oracle {:08x}", ctx(), o.word(addr))
                })?;
            }
        }
        for addr in (DATA_BASE..DATA_BASE + DATA_SIZE).step_by(4) {
            let got = m.peek_word(addr);
            ensure(got == Some(o.word(addr)), || {
                format!(
                    "program {programs}: final M[{addr:08x}] = {got:08x?} vs oracle {:08x}",
                    o.word(addr)
                )
            })?;
        }
        programs += 1;
    }
    let elapsed = started.elapsed();
    let covered = [
        (Op::Add, "I"),
        (Op::Mulhsu, "M"),
        (Op::Sh2add, "Zba"),
        (Op::Rev8, "Zbb"),
        (Op::Clmulr, "Zbc"),
        (Op::Bexti, "Zbs"),
    ];
    for (op, ext) in covered {
        ensure(ops.contains(&op), || {
            format!("{ext} never exercised ({} missing)", op.name())
        })?;
    }
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:.1?}, limit 30 s")
    })?;
    Ok(format!(
        "{retired} instructions, {} distinct mnemonics, {programs} programs, 0 mismatches, {elapsed:.1?}",
        ops.len()
    ))
}

// ---------------------------------------------------------- bit manipulation

fn instr(op: Op, imm: u32) -> rvmcu::isa::Instruction {
    decode(ins(op, 1, 2, 3, imm)).expect("legal encoding")
}

/// Register-form result through the crate executors.
pub fn alu(op: Op, a: u32, b: u32) -> u32 {
    match execute_alu(&instr(op, 0), a, b, 0) {
        Some(Rv32iOutcome::Value(r)) => r.value,
        other => panic!("{} produced {other:?}", op.name()),
    }
}

/// Immediate-form result through the crate executors.
pub fn alu_imm(op: Op, a: u32, imm: u32) -> u32 {
    match execute_alu(&instr(op, imm), a, 0, 0) {
        Some(Rv32iOutcome::Value(r)) => r.value,
        other => panic!("{} produced {other:?}", op.name()),
    }
}

/// Number of named invariants checked by [`bitmanip_properties`].
pub const BITMANIP_INVARIANTS: usize = 13;

pub fn bitmanip_properties(cases: u32, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool, detail: &dyn Fn() -> String| {
        if !ok && failures.len() < 5 {
            failures.push(format!("{name}: {}", detail()));
        }
    };
    for _ in 0..cases {
        let (a, b, c) = (interesting(&mut rng), interesting(&mut rng), interesting(&mut rng));
        let k = rng.random_range(0..32u32);
        let i = rng.random_range(0..32u32);

        for (op, s) in [(Op::Sh1add, 1), (Op::Sh2add, 2), (Op::Sh3add, 3)] {
            let want = ((a as u64 * (1u64 << s) + b as u64) % (1u64 << 32)) as u32;
            check("sh-k-add", alu(op, a, b) == want, &|| {
                format!("{} {a:#x} {b:#x}", op.name())
            });
        }
        check(
            "cpop complement",
            alu(Op::Cpop, a, 0) + alu(Op::Cpop, !a, 0) == 32,
            &|| format!("{a:#x}"),
        );
        check("rev8 involution", alu(Op::Rev8, alu(Op::Rev8, a, 0), 0) == a, &|| {
            format!("{a:#x}")
        });
        check("ror(rol) inverse", alu(Op::Ror, alu(Op::Rol, a, k), k) == a, &|| {
            format!("{a:#x} {k}")
        });
        check(
            "rori(rol) inverse",
            alu_imm(Op::Rori, alu(Op::Rol, a, k), k) == a,
            &|| format!("{a:#x} {k}"),
        );
        let o = alu(Op::OrcB, a, 0);
        check("orc.b idempotent", alu(Op::OrcB, o, 0) == o, &|| format!("{a:#x}"));
        for (lo, hi) in [(Op::Min, Op::Max), (Op::Minu, Op::Maxu)] {
            let (mn, mx) = (alu(lo, a, b), alu(hi, a, b));
            let ok = (mn == a || mn == b) && (mx == a || mx == b) && (a == b || mn != mx);
            check("min/max membership", ok, &|| format!("{} {a:#x} {b:#x}", lo.name()));
        }
        check(
            "clmul left-linearity",
            alu(Op::Clmul, a ^ b, c) == alu(Op::Clmul, a, c) ^ alu(Op::Clmul, b, c),
            &|| format!("{a:#x} {b:#x} {c:#x}"),
        );
        check(
            "clmul commutative",
            alu(Op::Clmul, a, b) == alu(Op::Clmul, b, a),
            &|| format!("{a:#x} {b:#x}"),
        );
        let split = ((alu(Op::Clmulh, a, b) as u64) << 32) | alu(Op::Clmul, a, b) as u64;
        check("clmul split", split == naive_clmul_wide(a, b), &|| {
            format!("{a:#x} {b:#x}")
        });
        check("bext(bset(0))", alu(Op::Bext, alu(Op::Bset, 0, i), i) == 1, &|| {
            format!("{i}")
        });
        check("bext(bclr(x))", alu(Op::Bext, alu(Op::Bclr, a, i), i) == 0, &|| {
            format!("{a:#x} {i}")
        });
        if b != 0 {
            let q = alu(Op::Div, a, b);
            let r = alu(Op::Rem, a, b);
            check("signed div/rem", q.wrapping_mul(b).wrapping_add(r) == a, &|| {
                format!("{a:#x} {b:#x}")
            });
            let q = alu(Op::Divu, a, b);
            let r = alu(Op::Remu, a, b);
            check("unsigned div/rem", q.wrapping_mul(b).wrapping_add(r) == a, &|| {
                format!("{a:#x} {b:#x}")
            });
        }
    }
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    let mnemonics = differential(cases, &mut rng)?;
    Ok(format!(
        "{BITMANIP_INVARIANTS} invariants x {cases} cases, {mnemonics} mnemonics x {cases} differential cases, 0 failures"
    ))
}

/// Every value-producing mnemonic against the reference interpreter.
fn differential(cases: u32, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let ops: Vec<Op> = Op::ALL
        .iter()
        .copied()
        .filter(|op| matches!(op.class(), InstrClass::Alu | InstrClass::Mul | InstrClass::Div))
        .collect();
    let mut o = Oracle::new(0);
    for &op in &ops {
        for _ in 0..cases {
            let (a, b) = (interesting(rng), interesting(rng));
            let imm = match op.format() {
                rvmcu::isa::Format::I => rng.random_range(-2048i32..2048) as u32,
                rvmcu::isa::Format::Shamt => rng.random_range(0..32),
                rvmcu::isa::Format::U => rng.random::<u32>() & 0xffff_f000,
                _ => 0,
            };
            let word = ins(op, 1, 2, 3, imm);
            let i = decode(word).map_err(|e| format!("{}: {e}", op.name()))?;
            let pc = rng.random::<u32>() & !3;
            let got = match execute_alu(&i, a, b, pc) {
                Some(Rv32iOutcome::Value(r)) => r.value,
                other => return Err(format!("{}: executor gave {other:?}", op.name())),
            };
            o.pc = pc;
            o.load(pc, &word.to_le_bytes());
            o.x[2] = a;
            o.x[3] = b;
            o.step();
            ensure(got == o.x[1], || {
                format!(
                    "{} a={a:#x} b={b:#x} imm={imm:#x}: {got:#x} vs oracle {:#x}",
                    op.name(),
                    o.x[1]
                )
            })?;
        }
    }
    Ok(ops.len())
}

// ------------------------------------------------------------ M corner rows

/// (mnemonic, rs1, rs2, architecturally mandated rd)
pub const M_CORNERS: [(Op, u32, u32, u32); 6] = [
    (Op::Div, 0x1234_5678, 0, 0xFFFF_FFFF),
    (Op::Rem, 0x1234_5678, 0, 0x1234_5678),
    (Op::Div, 0x8000_0000, 0xFFFF_FFFF, 0x8000_0000),
    (Op::Rem, 0x8000_0000, 0xFFFF_FFFF, 0),
    (Op::Divu, 0x1234_5678, 0, 0xFFFF_FFFF),
    (Op::Remu, 0x1234_5678, 0, 0x1234_5678),
];

/// Runs each row as a real instruction on the machine.
pub fn m_corner_table() -> Outcome {
    for (op, a, b, want) in M_CORNERS {
        let mut asm = Asm::default();
        asm.li(5, a).li(6, b).op(op, 7, 5, 6, 0).halt_loop();
        let mut m = machine();
        m.load_flat(&asm.bytes(), RAM_BASE).unwrap();
        for _ in 0..5 {
            let out = m.step();
            ensure(out == StepOutcome::Retired, || format!("{}: {out:?}", op.name()))?;
        }
        let got = m.hart.x[7];
        ensure(got == want, || {
            format!("{} {a:#x}, {b:#x} = {got:#x}, want {want:#x}", op.name())
        })?;
    }
    Ok(format!(
        "{} rows (div-by-zero and signed overflow) exact",
        M_CORNERS.len()
    ))
}

// --------------------------------------------------------------- interrupts

pub const TIMER_T: u64 = 100;

/// Result of the timer scenario: (cycle at trap entry, instret at trap).
pub fn timer_scenario() -> Result<(u64, u64), String> {
    let mut asm = Asm::default();
    let handler_at = asm.placeholder();
    asm.placeholder();
    asm.csrw(CSR_MTVEC, 5);
    asm.li(6, CLINT_BASE + CLINT_MTIMECMP_HI).sw(0, 6, 0);
    asm.li(6, CLINT_BASE + CLINT_MTIMECMP_LO)
        .li(7, TIMER_T as u32)
        .sw(7, 6, 0);
    asm.li(7, 0x80).csrw(CSR_MIE, 7).csrsi(CSR_MSTATUS, 8);
    let spin = asm.here();
    asm.addi(8, 8, 1).j(spin);
    let handler = asm.here();
    asm.csrr(9, CSR_MCAUSE).halt_loop();
    let li = {
        let mut l = Asm::new(handler_at);
        l.li(5, handler);
        l.words
    };
    asm.patch(handler_at, li[0]);
    asm.patch(handler_at + 4, li[1]);

    let mut m = machine();
    m.load_flat(&asm.bytes(), RAM_BASE).unwrap();
    let mut prev_mtime = 0;
    for _ in 0..1000 {
        let before = m.bus.clint.mtime;
        let out = m.step();
        if let StepOutcome::Trapped(c) = out {
            ensure(c.mcause() == 0x8000_0007, || format!("mcause {:#x}", c.mcause()))?;
            ensure(before >= TIMER_T, || format!("taken early at mtime {before}"))?;
            ensure(prev_mtime < TIMER_T, || {
                format!("taken late: mtime was already {prev_mtime}")
            })?;
            ensure(m.hart.csr.mcause == 0x8000_0007, || "mcause CSR not written".into())?;
            ensure(m.hart.pc == handler, || format!("vectored to {:08x}", m.hart.pc))?;
            return Ok((m.hart.mcycle, m.instret()));
        }
        prev_mtime = before;
    }
    Err("timer interrupt never taken".into())
}

/// Returns the mepc recorded for the software interrupt.
pub fn software_scenario() -> Result<u32, String> {
    let mut asm = Asm::default();
    let handler_at = asm.placeholder();
    asm.placeholder();
    asm.csrw(CSR_MTVEC, 5);
    asm.li(7, 0x8).csrw(CSR_MIE, 7).csrsi(CSR_MSTATUS, 8);
    asm.li(6, CLINT_BASE + CLINT_MSIP).li(7, 1).sw(7, 6, 0);
    let after = asm.here();
    asm.addi(8, 8, 1).halt_loop();
    let handler = asm.here();
    asm.csrr(9, CSR_MCAUSE)
        .csrr(10, CSR_MEPC)
        .sw(0, 6, 0)
        .addi(11, 11, 1)
        .mret();
    let li = {
        let mut l = Asm::new(handler_at);
        l.li(5, handler);
        l.words
    };
    asm.patch(handler_at, li[0]);
    asm.patch(handler_at + 4, li[1]);

    let mut m = machine();
    m.load_flat(&asm.bytes(), RAM_BASE).unwrap();
    let mut trapped_after_store = false;
    for _ in 0..200 {
        let pc = m.hart.pc;
        let out = m.step();
        if let StepOutcome::Trapped(c) = out {
            ensure(c.mcause() == 0x8000_0003, || format!("mcause {:#x}", c.mcause()))?;
            ensure(pc == after, || {
                format!("taken at {pc:08x}, expected the boundary after the msip store")
            })?;
            trapped_after_store = true;
        }
    }
    ensure(trapped_after_store, || "software interrupt never taken".into())?;
    ensure(m.hart.x[11] == 1, || format!("handler ran {} times", m.hart.x[11]))?;
    ensure(m.hart.x[8] == 1, || "did not resume after mret".into())?;
    ensure(!m.bus.clint.msip(), || "msip still set".into())?;
    Ok(m.hart.x[10])
}

pub struct ExternalRun {
    pub claims: Vec<u32>,
    pub trap_cycles: Vec<u64>,
    pub repended_while_held: bool,
    pub first_trap_instret: u64,
}

pub const GPIO_ASSERT_AT: u64 = 200;
pub const GPIO_RELEASE_AT: u64 = 600;

pub fn external_scenario() -> Result<ExternalRun, String> {
    let mut asm = Asm::default();
    let handler_at = asm.placeholder();
    asm.placeholder();
    asm.csrw(CSR_MTVEC, 5);
    asm.li(6, GPIO_A_BASE)
        .li(7, 1)
        .sw(7, 6, GPIO_INT_LEVEL as i32)
        .sw(7, 6, GPIO_INT_EN as i32);
    asm.li(6, PLIC_BASE).sw(7, 6, 4);
    asm.li(6, PLIC_BASE + PLIC_ENABLE).li(7, 2).sw(7, 6, 0);
    asm.li(7, 0x800).csrw(CSR_MIE, 7);
    asm.li(20, DATA_BASE);
    asm.csrsi(CSR_MSTATUS, 8);
    let spin = asm.here();
    asm.addi(8, 8, 1).j(spin);
    let handler = asm.here();
    asm.li(6, PLIC_BASE + PLIC_CLAIM)
        .lw(10, 6, 0)
        .sw(10, 20, 0)
        .addi(20, 20, 4);
    let complete = asm.here();
    asm.sw(10, 6, 0).mret();
    let li = {
        let mut l = Asm::new(handler_at);
        l.li(5, handler);
        l.words
    };
    asm.patch(handler_at, li[0]);
    asm.patch(handler_at + 4, li[1]);

    let mut m = machine();
    m.load_flat(&asm.bytes(), RAM_BASE).unwrap();
    let script = format!("{GPIO_ASSERT_AT} gpio a 0x01\n{GPIO_RELEASE_AT} gpio a 0x00\n");
    m.set_stimulus(Stimulus::parse(&script).map_err(|e| e.to_string())?);

    let mut run = ExternalRun {
        claims: Vec::new(),
        trap_cycles: Vec::new(),
        repended_while_held: false,
        first_trap_instret: 0,
    };
    let mut traps_after_release = 0;
    for _ in 0..2000 {
        let pc = m.hart.pc;
        let instret = m.instret();
        match m.step() {
            StepOutcome::Trapped(c) => {
                ensure(c.mcause() == 0x8000_000B, || format!("mcause {:#x}", c.mcause()))?;
                if run.trap_cycles.is_empty() {
                    run.first_trap_instret = instret;
                }
                run.trap_cycles.push(m.hart.mcycle);
                // one handler pass after the release is still in flight
                if instret > GPIO_RELEASE_AT + 20 {
                    traps_after_release += 1;
                }
            }
            StepOutcome::Retired => {
                if pc == complete && m.bus.gpio[0].ext_in & 1 == 1 {
                    run.repended_while_held |= m.bus.plic.pending() & 2 != 0;
                }
            }
            other => return Err(format!("unexpected {other:?} at {pc:08x}")),
        }
    }
    let logged = (m.hart.x[20] - DATA_BASE) / 4;
    for n in 0..logged {
        run.claims.push(m.peek_word(DATA_BASE + 4 * n).unwrap());
    }
    ensure(traps_after_release == 0, || {
        format!("{traps_after_release} interrupts after the level dropped")
    })?;
    Ok(run)
}

pub fn interrupt_scenarios() -> Outcome {
    let timer = timer_scenario()?;
    ensure(timer_scenario()? == timer, || {
        "timer trap cycle varies between runs".into()
    })?;
    let cycle = timer.0;

    let mepc = software_scenario()?;
    ensure(software_scenario()? == mepc, || {
        "software trap varies between runs".into()
    })?;

    let ext = external_scenario()?;
    ensure(!ext.claims.is_empty() && ext.claims[0] == 1, || {
        format!("claims {:?}", ext.claims)
    })?;
    // the release may land between trap entry and the claim, which then reads 0
    let (last, held) = ext.claims.split_last().unwrap();
    ensure(held.iter().all(|&c| c == 1) && *last <= 1, || {
        format!("claims {:?}", ext.claims)
    })?;
    ensure(ext.claims.len() >= 2, || {
        "no second claim while the level was held".into()
    })?;
    ensure(ext.repended_while_held, || {
        "complete with the level held did not re-pend".into()
    })?;
    ensure(ext.first_trap_instret >= GPIO_ASSERT_AT, || {
        "external trap before the pin was driven".into()
    })?;
    let again = external_scenario()?;
    ensure(again.trap_cycles == ext.trap_cycles, || {
        "external trap cycles vary between runs".into()
    })?;
    Ok(format!(
        "timer at cycle {cycle} (mtimecmp {TIMER_T}), msip taken at next boundary, gpio-a claimed {} times then re-pended, deterministic",
        ext.claims.len()
    ))
}

// ----------------------------------------------------------------- timing

fn steps_cycles(words: &[u32], steps: usize) -> Result<u64, String> {
    let mut m = machine();
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    m.load_flat(&bytes, RAM_BASE).unwrap();
    for _ in 0..steps {
        let out = m.step();
        ensure(out == StepOutcome::Retired, || format!("{out:?}"))?;
    }
    ensure(m.hart.mcycle == m.report().total_cycles, || {
        "mcycle and report disagree".into()
    })?;
    Ok(m.hart.mcycle)
}

fn alu_run(n: usize) -> Vec<u32> {
    (0..n)
        .map(|i| ins(Op::Addi, (1 + i % 28) as u8, 0, 0, i as u32))
        .collect()
}

/// Whether the instruction at the oracle's pc redirects fetch, judged from
/// its register state before execution.
fn redirects(o: &Oracle) -> bool {
    let w = o.word(o.pc);
    let (a, b) = (o.x[((w >> 15) & 31) as usize], o.x[((w >> 20) & 31) as usize]);
    match w & 0x7f {
        0x6f | 0x67 => true,
        0x63 => match (w >> 12) & 7 {
            0 => a == b,
            1 => a != b,
            4 => (a as i32) < (b as i32),
            5 => (a as i32) >= (b as i32),
            6 => a < b,
            _ => a >= b,
        },
        _ => false,
    }
}

/// Cycles for a retired stream, computed from raw words and redirect flags.
pub fn expected_cycles(records: &[TraceRecord], redirected: &[bool], fill: u64) -> u64 {
    let mut total = fill;
    let mut prev_load_rd: Option<u32> = None;
    for (r, &taken) in records.iter().zip(redirected) {
        let w = r.raw;
        let opcode = w & 0x7f;
        let (f3, f7) = ((w >> 12) & 7, w >> 25);
        let (rd, rs1, rs2) = ((w >> 7) & 31, (w >> 15) & 31, (w >> 20) & 31);
        let is_lr = opcode == 0x2f && (w >> 27) == 0b00010;
        let sources: &[u32] = match opcode {
            0x33 | 0x23 | 0x63 => &[rs1, rs2],
            0x2f if is_lr => &[rs1],
            0x2f => &[rs1, rs2],
            0x13 | 0x03 | 0x67 => &[rs1],
            _ => &[],
        };
        total += 1;
        if taken {
            total += 1;
        }
        if prev_load_rd.is_some_and(|p| sources.contains(&p)) {
            total += 1;
        }
        if opcode == 0x33 && f7 == 1 {
            total += if f3 < 4 { 2 } else { 31 };
        }
        prev_load_rd = ((opcode == 0x03 || is_lr) && rd != 0).then_some(rd);
    }
    total
}

/// Runs `p` to its terminating loop. Returns (mcycle, recomputed total).
pub fn timed_program(p: &Program) -> Result<(u64, u64), String> {
    let mut m = machine();
    load_program(&mut m, p);
    m.set_trace(Some(TraceSink::Memory(Vec::new())));
    let mut o = Oracle::new(RAM_BASE);
    o.load(RAM_BASE, &p.code_bytes());
    o.load(DATA_BASE, &p.data);
    o.x = p.regs;
    let mut redirected = Vec::new();
    while m.hart.pc != p.end_pc() {
        redirected.push(redirects(&o));
        o.step();
        let out = m.step();
        ensure(out == StepOutcome::Retired, || format!("{out:?} at {:08x}", m.hart.pc))?;
        ensure(redirected.len() < 10_000, || "program did not terminate".into())?;
    }
    let Some(TraceSink::Memory(records)) = m.take_trace() else {
        return Err("trace sink lost".into());
    };
    let r = m.report();
    ensure(r.total_cycles == r.reconciled_total(), || {
        format!("report total {} vs counters {}", r.total_cycles, r.reconciled_total())
    })?;
    Ok((m.hart.mcycle, expected_cycles(&records, &redirected, r.constants.fill)))
}

pub fn timing_closed_forms(programs: u32, seed: u64) -> Outcome {
    let halt = |mut v: Vec<u32>| {
        v.push(ins(Op::Jal, 0, 0, 0, 0));
        v
    };
    let hundred = steps_cycles(&halt(alu_run(100)), 100)?;
    ensure(hundred == 102, || format!("100 ALU ops took {hundred} cycles"))?;

    let plain = steps_cycles(&halt(alu_run(21)), 21)?;
    let mut jumped = alu_run(10);
    jumped.push(ins(Op::Jal, 0, 0, 0, 4));
    jumped.extend(alu_run(10));
    let jumped = steps_cycles(&halt(jumped), 21)?;
    ensure(jumped == plain + 1, || format!("taken jump: {jumped} vs {plain}"))?;

    let mut div = alu_run(10);
    div.push(ins(Op::Div, 29, 5, 6, 0));
    div.extend(alu_run(10));
    let div = steps_cycles(&halt(div), 21)?;
    ensure(div == plain + 31, || format!("div: {div} vs {plain}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    for n in 0..programs {
        let len = rng.random_range(20..300);
        let p = generate(&mut rng, len, Mix::Full);
        let (mcycle, expected) = timed_program(&p)?;
        ensure(mcycle == expected, || {
            format!("program {n}: mcycle {mcycle}, fill + charges {expected}")
        })?;
        total += mcycle;
    }
    Ok(format!(
        "100 ALU = {hundred}, jump +{}, div +{}, identity holds on {programs} programs ({total} cycles)",
        jumped - plain,
        div - plain
    ))
}

// ------------------------------------------------------------ determinism

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rvmcu"))
}

fn traced_cli_run(dir: &std::path::Path, name: &str, instret: u64) -> Result<Vec<u8>, String> {
    let path = dir.join(name);
    let out = cli()
        .arg("run")
        .arg("--elf")
        .arg(fixture("echo.elf"))
        .arg("--stimulus")
        .arg(fixture("echo.stim"))
        .arg("--max-instret")
        .arg(instret.to_string())
        .arg("--trace")
        .arg(&path)
        .arg("-q")
        .output()
        .map_err(|e| format!("spawn rvmcu: {e}"))?;
    ensure(out.status.success(), || {
        format!(
            "rvmcu exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    std::fs::read(&path).map_err(|e| format!("read trace: {e}"))
}

pub fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 200_000;
    let a = traced_cli_run(dir.path(), "a.trace", n)?;
    let b = traced_cli_run(dir.path(), "b.trace", n)?;
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    ensure(lines as u64 >= n, || format!("trace has only {lines} lines"))?;
    let (ha, hb) = (Sha256::digest(&a), Sha256::digest(&b));
    ensure(ha == hb, || "trace hashes differ".into())?;
    let hex: String = ha.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(format!(
        "two CLI runs, {lines} trace lines each, sha256 {hex}.. identical"
    ))
}

// --------------------------------------------------------- firmware smoke

pub const SMOKE_INSTRET: u64 = 1_000_000;

pub fn firmware_smoke() -> Outcome {
    let mut m = echo_machine();
    let stim = std::fs::read_to_string(fixture("echo.stim")).map_err(|e| e.to_string())?;
    m.set_stimulus(Stimulus::parse(&stim).map_err(|e| e.to_string())?);
    let reason = m.run(RunLimits {
        max_instret: Some(SMOKE_INSTRET),
        max_cycles: None,
    });
    ensure(reason == StopReason::InstretLimit, || {
        format!("stopped early: {reason}")
    })?;
    ensure(m.instret() == SMOKE_INSTRET, || format!("instret {}", m.instret()))?;
    let mut uart = Vec::new();
    let mut leds = Vec::new();
    for e in m.drain_events() {
        match e {
            MachineEvent::UartOut { bytes } => uart.extend(bytes),
            MachineEvent::Led { value } => leds.push(value),
            MachineEvent::Gpio { .. } => {}
        }
    }
    let golden = std::fs::read(fixture("echo.golden")).map_err(|e| e.to_string())?;
    if uart != golden {
        let at = uart
            .iter()
            .zip(&golden)
            .position(|(a, b)| a != b)
            .unwrap_or(uart.len().min(golden.len()));
        return Err(format!(
            "uart output differs from golden at byte {at} (got {} bytes, want {})",
            uart.len(),
            golden.len()
        ));
    }
    ensure(leds == [0x00ff, 0xcafe, 0x8001, 0x0000], || {
        format!("led sequence {leds:04x?}")
    })?;
    Ok(format!(
        "{SMOKE_INSTRET} instructions, {} UART bytes match golden, LEDs mirrored {} switch changes",
        uart.len(),
        leds.len()
    ))
}

// --------------------------------------------------------------- protocol

fn local_opts() -> ServeOptions {
    ServeOptions {
        bind: "127.0.0.1".into(),
        port: 0,
        panel: None,
    }
}

/// An address the echo firmware keeps returning to.
fn echo_loop_pc() -> u32 {
    let mut m = echo_machine();
    m.run(RunLimits {
        max_instret: Some(5000),
        max_cycles: None,
    });
    m.hart.pc
}

pub fn protocol_conformance() -> Outcome {
    let loop_pc = echo_loop_pc();
    let m = echo_machine();
    let entry = m.hart.pc;
    let server = start(m, &local_opts()).map_err(|e| format!("start server: {e}"))?;
    let result = protocol_script(server.local_addr(), entry, loop_pc);
    server.shutdown();
    let pairs = result?;
    let gpio = gpio_event_script()?;
    Ok(format!(
        "{pairs} command/event exchanges plus {gpio}, acks in order, seq contiguous"
    ))
}

fn protocol_script(addr: std::net::SocketAddr, entry: u32, loop_pc: u32) -> Result<usize, String> {
    let mut c = Client::connect(addr)?;
    let hello = c.next()?;
    ensure(event(&hello) == "snapshot" && hello["pc"] == entry, || {
        format!("greeting {hello}")
    })?;

    c.send(json!({"id": 1, "cmd": "get_snapshot"}))?;
    c.ack(1)?;
    let s = c.wait_event("snapshot")?;
    ensure(s["running"] == false && s["instret"] == 0, || {
        format!("initial snapshot {s}")
    })?;

    c.send(json!({"id": 2, "cmd": "step", "n": 5}))?;
    c.ack(2)?;
    let st = c.wait_event("stepped")?;
    ensure(st["steps"] == 5 && st["instret"] == 5, || format!("stepped {st}"))?;

    c.send(json!({"id": 3, "cmd": "set_switches", "value": 0xCAFE}))?;
    c.ack(3)?;
    c.send(json!({"id": 4, "cmd": "get_snapshot"}))?;
    c.ack(4)?;
    let s = c.wait_event("snapshot")?;
    ensure(s["switches"] == 0xCAFE, || {
        format!("switches after set_switches: {}", s["switches"])
    })?;

    c.send(json!({"id": 5, "cmd": "set_breakpoint", "pc": format!("{loop_pc:#x}")}))?;
    let a = c.ack(5)?;
    ensure(a["result"]["added"] == true, || format!("set_breakpoint {a}"))?;
    c.send(json!({"id": 6, "cmd": "run"}))?;
    c.ack(6)?;
    let h = c.wait_event("halted")?;
    ensure(h["reason"] == "breakpoint" && h["pc"] == loop_pc, || {
        format!("halted {h}")
    })?;
    c.send(json!({"id": 7, "cmd": "clear_breakpoint", "pc": loop_pc}))?;
    let a = c.ack(7)?;
    ensure(a["result"]["removed"] == true, || format!("clear_breakpoint {a}"))?;

    c.send(json!({"id": 8, "cmd": "run"}))?;
    c.ack(8)?;
    c.send(json!({"id": 9, "cmd": "set_switches", "value": 0x1234}))?;
    c.ack(9)?;
    let (mut led, mut printed) = (false, Vec::new());
    while !(led && printed.windows(8).any(|w| w == b"sw=1234\n")) {
        let v = c.next()?;
        match event(&v) {
            "led" => led |= v["value"] == 0x1234,
            "uart_out" => printed.extend(
                v["bytes"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|b| b.as_u64())
                    .map(|b| b as u8),
            ),
            _ => {}
        }
    }

    c.send(json!({"id": 10, "cmd": "uart_in", "data": "ping\n"}))?;
    let a = c.ack(10)?;
    ensure(a["result"]["queued"] == 5, || format!("uart_in {a}"))?;
    c.uart_until(b"ping\n")?;
    c.send(json!({"id": 11, "cmd": "uart_in", "bytes": [0x4f, 0x4b, 0x0a]}))?;
    c.ack(11)?;
    c.uart_until(b"OK\n")?;

    c.send(json!({"id": 12, "cmd": "set_gpio", "port": "a", "value": 0x5a}))?;
    c.ack(12)?;

    c.send(json!({"id": 13, "cmd": "step"}))?;
    let n = c.nack(13)?;
    ensure(n["error"].as_str().is_some_and(|e| e.contains("running")), || {
        format!("step while running {n}")
    })?;

    c.send(json!({"id": 14, "cmd": "pause"}))?;
    c.ack(14)?;
    let h = c.wait_event("halted")?;
    ensure(h["reason"] == "paused", || format!("halted {h}"))?;

    c.send(json!({"id": 15, "cmd": "get_snapshot", "full": true}))?;
    c.ack(15)?;
    let s = c.wait_event("snapshot")?;
    ensure(s["running"] == false, || "snapshot says running after pause".into())?;
    ensure(s["switches"] == 0x1234 && s["leds"] == 0x1234, || {
        format!("switches/leds {} {}", s["switches"], s["leds"])
    })?;
    ensure(s["gpio"][0]["ext_in"] == 0x5a, || format!("gpio {}", s["gpio"]))?;
    ensure(s["machine"].is_object(), || "full snapshot lacks machine state".into())?;

    c.send(json!({"id": 16, "cmd": "run", "max_instret": 1000}))?;
    c.ack(16)?;
    let h = c.wait_event("halted")?;
    ensure(h["reason"] == "instret_limit", || format!("halted {h}"))?;

    c.send_line("{not json")?;
    let e = c.wait_event("error")?;
    ensure(e["id"].is_null(), || format!("error {e}"))?;

    c.send(json!({"id": 17, "cmd": "frobnicate"}))?;
    let n = c.nack(17)?;
    ensure(n["error"].as_str().is_some_and(|e| e.contains("frobnicate")), || {
        format!("unknown cmd {n}")
    })?;
    c.send(json!({"id": 18, "cmd": "set_switches", "value": 70000}))?;
    c.nack(18)?;

    c.send(json!({"id": 19, "cmd": "reset"}))?;
    c.ack(19)?;
    let s = c.wait_event("snapshot")?;
    ensure(s["instret"] == 0 && s["pc"] == entry, || {
        format!("snapshot after reset {s}")
    })?;

    let ids: Vec<u64> = c.acks.iter().filter_map(Value::as_u64).collect();
    ensure(ids == (1..=19).collect::<Vec<_>>(), || format!("ack order {ids:?}"))?;
    Ok(ids.len())
}

/// Covers the `gpio` event with a program that drives port A.
fn gpio_event_script() -> Result<String, String> {
    let mut asm = Asm::default();
    asm.li(6, GPIO_A_BASE)
        .li(7, 0xff)
        .sw(7, 6, GPIO_DIR as i32)
        .li(7, 0xa5)
        .sw(7, 6, GPIO_OUT as i32)
        .halt_loop();
    let mut m = machine();
    m.load_flat(&asm.bytes(), RAM_BASE).unwrap();
    let server = start(m, &local_opts()).map_err(|e| format!("start server: {e}"))?;
    let result = (|| {
        let mut c = Client::connect(server.local_addr())?;
        c.wait_event("snapshot")?;
        c.send(json!({"id": 1, "cmd": "step", "n": 20}))?;
        c.ack(1)?;
        let g = c.wait_for("gpio out 0xa5", |v| event(v) == "gpio" && v["out"] == 0xa5)?;
        ensure(g["port"] == 0 && g["dir"] == 0xff, || format!("gpio {g}"))?;
        c.wait_event("stepped")?;
        Ok("gpio event".to_string())
    })();
    server.shutdown();
    result
}
