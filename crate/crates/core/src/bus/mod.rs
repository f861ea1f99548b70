//! System bus: routes physical accesses to the RAM banks or to a
//! peripheral register window.

mod map;
mod memory;

pub use map::*;
pub use memory::MemoryBanks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irq::{self, Clint, Plic};
use crate::periph::{GpSpecial, GpioPort, Spi, Uart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Width {
    Byte = 1,
    Half = 2,
    Word = 4,
}

impl Width {
    pub fn bytes(self) -> u32 {
        self as u32
    }

    pub fn mask(self) -> u32 {
        match self {
            Width::Byte => 0xff,
            Width::Half => 0xffff,
            Width::Word => 0xffff_ffff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
    Fetch,
}

/// One bus transaction as observed by tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusAccess {
    pub kind: AccessKind,
    pub addr: u32,
    pub width: Width,
    pub data: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind:?} access fault at {addr:#010x}")]
pub struct BusFault {
    pub kind: AccessKind,
    pub addr: u32,
}

impl BusFault {
    /// Exception cause for this fault.
    pub fn cause(&self) -> u32 {
        match self.kind {
            AccessKind::Fetch => 1,
            AccessKind::Read => 5,
            AccessKind::Write => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmoOp {
    Swap,
    Add,
    Xor,
    And,
    Or,
    Min,
    Max,
    Minu,
    Maxu,
}

impl AmoOp {
    pub fn apply(self, old: u32, operand: u32) -> u32 {
        match self {
            AmoOp::Swap => operand,
            AmoOp::Add => old.wrapping_add(operand),
            AmoOp::Xor => old ^ operand,
            AmoOp::And => old & operand,
            AmoOp::Or => old | operand,
            AmoOp::Min => (old as i32).min(operand as i32) as u32,
            AmoOp::Max => (old as i32).max(operand as i32) as u32,
            AmoOp::Minu => old.min(operand),
            AmoOp::Maxu => old.max(operand),
        }
    }
}

/// Externally visible device changes since the last `take_changes`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceChanges {
    pub led: bool,
    pub gpio_out: [bool; 3],
}

#[derive(Debug, Clone)]
pub struct Bus {
    map: AddressMap,
    pub ram: MemoryBanks,
    pub clint: Clint,
    pub plic: Plic,
    pub gpio: [GpioPort; 3],
    pub gp_special: GpSpecial,
    pub uart: Uart,
    pub spi: Spi,
    changes: DeviceChanges,
}

impl Bus {
    pub fn new(bank_size: u32) -> Result<Self, MapError> {
        Ok(Bus {
            map: AddressMap::standard(bank_size)?,
            ram: MemoryBanks::new(bank_size),
            clint: Clint::default(),
            plic: Plic::default(),
            gpio: Default::default(),
            gp_special: GpSpecial::default(),
            uart: Uart::default(),
            spi: Spi::default(),
            changes: DeviceChanges::default(),
        })
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn route(&self, addr: u32) -> Option<DeviceId> {
        self.map.lookup(addr).map(|(r, _)| r.device)
    }

    /// Offset into RAM if `[addr, addr+len)` lies entirely in the banks.
    pub fn ram_offset(&self, addr: u32, len: u32) -> Option<u32> {
        let off = addr.checked_sub(RAM_BASE)?;
        self.ram.in_range(off, len).then_some(off)
    }

    fn periph_offset(&self, kind: AccessKind, addr: u32, width: Width) -> Result<(DeviceId, u32), BusFault> {
        let fault = BusFault { kind, addr };
        let (region, off) = self.map.lookup(addr).ok_or(fault)?;
        if region.device.is_ram() || width != Width::Word || !addr.is_multiple_of(4) {
            return Err(fault);
        }
        Ok((region.device, off))
    }

    pub fn read(&mut self, addr: u32, width: Width) -> Result<u32, BusFault> {
        if let Some(off) = self.ram_offset(addr, width.bytes()) {
            return Ok(self.ram.read(off, width.bytes()));
        }
        let (dev, off) = self.periph_offset(AccessKind::Read, addr, width)?;
        if dev == DeviceId::Plic {
            self.refresh_irq_levels();
        }
        Ok(match dev {
            DeviceId::Clint => self.clint.read(off),
            DeviceId::Plic => self.plic.read(off),
            DeviceId::GpioA => self.gpio[0].read(off),
            DeviceId::GpioB => self.gpio[1].read(off),
            DeviceId::GpioC => self.gpio[2].read(off),
            DeviceId::GpSpecial => self.gp_special.read(off),
            DeviceId::Uart => self.uart.read(off),
            DeviceId::Spi => self.spi.read(off),
            DeviceId::Ram(_) => unreachable!(),
        })
    }

    /// Read without device side effects. Returns None for unmapped or
    /// unsupported accesses.
    pub fn peek(&self, addr: u32, width: Width) -> Option<u32> {
        if let Some(off) = self.ram_offset(addr, width.bytes()) {
            return Some(self.ram.read(off, width.bytes()));
        }
        let (dev, off) = self.periph_offset(AccessKind::Read, addr, width).ok()?;
        Some(match dev {
            DeviceId::Clint => self.clint.read(off),
            DeviceId::Plic => self.plic.peek(off),
            DeviceId::GpioA => self.gpio[0].read(off),
            DeviceId::GpioB => self.gpio[1].read(off),
            DeviceId::GpioC => self.gpio[2].read(off),
            DeviceId::GpSpecial => self.gp_special.read(off),
            DeviceId::Uart => self.uart.peek(off),
            DeviceId::Spi => self.spi.peek(off),
            DeviceId::Ram(_) => unreachable!(),
        })
    }

    pub fn write(&mut self, addr: u32, width: Width, value: u32) -> Result<(), BusFault> {
        let value = value & width.mask();
        if let Some(off) = self.ram_offset(addr, width.bytes()) {
            self.ram.write(off, width.bytes(), value);
            return Ok(());
        }
        let (dev, off) = self.periph_offset(AccessKind::Write, addr, width)?;
        match dev {
            DeviceId::Clint => self.clint.write(off, value),
            DeviceId::Plic => self.plic.write(off, value),
            DeviceId::GpioA | DeviceId::GpioB | DeviceId::GpioC => {
                let port = match dev {
                    DeviceId::GpioA => 0,
                    DeviceId::GpioB => 1,
                    _ => 2,
                };
                let before = (self.gpio[port].dir, self.gpio[port].out);
                self.gpio[port].write(off, value);
                if before != (self.gpio[port].dir, self.gpio[port].out) {
                    self.changes.gpio_out[port] = true;
                }
            }
            DeviceId::GpSpecial => {
                if self.gp_special.write(off, value) {
                    self.changes.led = true;
                }
            }
            DeviceId::Uart => self.uart.write(off, value),
            DeviceId::Spi => self.spi.write(off, value),
            DeviceId::Ram(_) => unreachable!(),
        }
        Ok(())
    }

    /// Instruction fetch. Only RAM is executable.
    pub fn fetch(&self, addr: u32) -> Result<u32, BusFault> {
        self.ram_offset(addr, 4)
            .map(|off| self.ram.read(off, 4))
            .ok_or(BusFault {
                kind: AccessKind::Fetch,
                addr,
            })
    }

    /// Read-modify-write of a RAM word. Returns the old value.
    pub fn amo(&mut self, addr: u32, op: AmoOp, operand: u32) -> Result<u32, BusFault> {
        let off = self.ram_offset(addr, 4).ok_or(BusFault {
            kind: AccessKind::Write,
            addr,
        })?;
        let old = self.ram.read(off, 4);
        self.ram.write(off, 4, op.apply(old, operand));
        Ok(old)
    }

    /// Copy bytes into RAM; fails with the first address outside RAM.
    pub fn load_bytes(&mut self, addr: u32, bytes: &[u8]) -> Result<(), u32> {
        let len = u32::try_from(bytes.len()).map_err(|_| addr)?;
        match self.ram_offset(addr, len) {
            Some(off) => {
                self.ram.write_slice(off, bytes);
                Ok(())
            }
            None if self.ram_offset(addr, 1).is_none() => Err(addr),
            None => Err(RAM_BASE.wrapping_add(self.ram.total_size() as u32)),
        }
    }

    /// Push device interrupt levels into the PLIC gateways.
    pub fn refresh_irq_levels(&mut self) {
        self.plic.set_level(irq::IRQ_GPIO_A, self.gpio[0].irq_level());
        self.plic.set_level(irq::IRQ_GPIO_B, self.gpio[1].irq_level());
        self.plic.set_level(irq::IRQ_GPIO_C, self.gpio[2].irq_level());
        self.plic.set_level(irq::IRQ_UART, self.uart.irq_level());
        self.plic.set_level(irq::IRQ_SPI, self.spi.irq_level());
    }

    pub fn mip_view(&mut self) -> u32 {
        self.refresh_irq_levels();
        irq::fabric_mip_view(&self.clint, &self.plic)
    }

    pub fn take_changes(&mut self) -> DeviceChanges {
        std::mem::take(&mut self.changes)
    }
}
