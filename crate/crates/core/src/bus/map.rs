use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Every device that owns a window on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceId {
    Ram(u8),
    Clint,
    Plic,
    GpioA,
    GpioB,
    GpioC,
    GpSpecial,
    Uart,
    Spi,
}

impl DeviceId {
    pub fn label(self) -> String {
        match self {
            DeviceId::Ram(n) => format!("RAM-BANK{n}"),
            DeviceId::Clint => "CLINT".into(),
            DeviceId::Plic => "PLIC".into(),
            DeviceId::GpioA => "GPIO-A".into(),
            DeviceId::GpioB => "GPIO-B".into(),
            DeviceId::GpioC => "GPIO-C".into(),
            DeviceId::GpSpecial => "GP-SPECIAL".into(),
            DeviceId::Uart => "UART".into(),
            DeviceId::Spi => "SPI".into(),
        }
    }

    pub fn is_ram(self) -> bool {
        matches!(self, DeviceId::Ram(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub base: u32,
    pub size: u32,
    pub device: DeviceId,
}

impl Region {
    fn end(&self) -> u64 {
        self.base as u64 + self.size as u64
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr as u64) < self.end()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("region {0} at {1:#010x} is not 4-byte aligned or has zero size")]
    Misaligned(String, u32),
    #[error("region {0} extends past the end of the address space")]
    Wraps(String),
    #[error("regions {0} and {1} overlap")]
    Overlap(String, String),
}

pub const RAM_BASE: u32 = 0x8000_0000;
pub const DEFAULT_BANK_SIZE: u32 = 32 * 1024;
pub const BANK_COUNT: usize = 4;

pub const CLINT_BASE: u32 = 0x0200_0000;
pub const CLINT_SIZE: u32 = 0x0001_0000;
pub const PLIC_BASE: u32 = 0x0C00_0000;
pub const PLIC_SIZE: u32 = 0x0040_0000;
pub const GPIO_A_BASE: u32 = 0x4000_0000;
pub const GPIO_B_BASE: u32 = 0x4000_0100;
pub const GPIO_C_BASE: u32 = 0x4000_0200;
pub const GP_SPECIAL_BASE: u32 = 0x4000_0300;
pub const UART_BASE: u32 = 0x4000_0400;
pub const SPI_BASE: u32 = 0x4000_0500;
pub const PERIPH_WINDOW: u32 = 0x100;

/// Bumped whenever a register layout changes.
pub const LAYOUT_VERSION: u32 = 1;

/// Validated, sorted list of non-overlapping regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    regions: Vec<Region>,
}

impl AddressMap {
    pub fn new(mut regions: Vec<Region>) -> Result<Self, MapError> {
        for r in &regions {
            if r.size == 0 || r.base % 4 != 0 || r.size % 4 != 0 {
                return Err(MapError::Misaligned(r.device.label(), r.base));
            }
            if r.end() > 1 << 32 {
                return Err(MapError::Wraps(r.device.label()));
            }
        }
        regions.sort_by_key(|r| r.base);
        for pair in regions.windows(2) {
            if pair[0].end() > pair[1].base as u64 {
                return Err(MapError::Overlap(pair[0].device.label(), pair[1].device.label()));
            }
        }
        Ok(AddressMap { regions })
    }

    /// The standard layout: four RAM banks of `bank_size` bytes at
    /// 0x8000_0000 plus the fixed peripheral windows.
    pub fn standard(bank_size: u32) -> Result<Self, MapError> {
        let mut regions: Vec<Region> = (0..BANK_COUNT as u32)
            .map(|n| Region {
                base: RAM_BASE.wrapping_add(n.wrapping_mul(bank_size)),
                size: bank_size,
                device: DeviceId::Ram(n as u8),
            })
            .collect();
        let periph = [
            (CLINT_BASE, CLINT_SIZE, DeviceId::Clint),
            (PLIC_BASE, PLIC_SIZE, DeviceId::Plic),
            (GPIO_A_BASE, PERIPH_WINDOW, DeviceId::GpioA),
            (GPIO_B_BASE, PERIPH_WINDOW, DeviceId::GpioB),
            (GPIO_C_BASE, PERIPH_WINDOW, DeviceId::GpioC),
            (GP_SPECIAL_BASE, PERIPH_WINDOW, DeviceId::GpSpecial),
            (UART_BASE, PERIPH_WINDOW, DeviceId::Uart),
            (SPI_BASE, PERIPH_WINDOW, DeviceId::Spi),
        ];
        regions.extend(periph.iter().map(|&(base, size, device)| Region { base, size, device }));
        if (RAM_BASE as u64) + (bank_size as u64) * BANK_COUNT as u64 > 1 << 32 {
            return Err(MapError::Wraps("RAM".into()));
        }
        Self::new(regions)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region containing `addr` and the offset into it.
    pub fn lookup(&self, addr: u32) -> Option<(&Region, u32)> {
        let idx = self.regions.partition_point(|r| r.base <= addr);
        let r = self.regions.get(idx.checked_sub(1)?)?;
        r.contains(addr).then(|| (r, addr - r.base))
    }

    /// Markdown rendering of the map and every register offset.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# rvmcu memory map\n");
        let _ = writeln!(s, "layout-version: {LAYOUT_VERSION}\n");
        let _ = writeln!(s, "| Base / device | Size | Last byte | PLIC source |");
        let _ = writeln!(s, "|---|---|---|---|");
        for r in &self.regions {
            let irq = match r.device {
                DeviceId::GpioA => "1",
                DeviceId::GpioB => "2",
                DeviceId::GpioC => "3",
                DeviceId::Uart => "4",
                DeviceId::Spi => "5",
                _ => "-",
            };
            let _ = writeln!(
                s,
                "| {:#010x} {} | {:#x} | {:#010x} | {} |",
                r.base,
                r.device.label(),
                r.size,
                r.end() - 1,
                irq
            );
        }
        s.push_str(REGISTER_TABLES);
        s
    }
}

const REGISTER_TABLES: &str = "
All peripheral registers are 32 bits wide and accept only aligned word
accesses. Undefined offsets read as 0 and ignore writes. RAM is
byte-addressable and little-endian.

## CLINT

| Offset | Register | Access |
|---|---|---|
| 0x0000 | msip (bit 0) | RW |
| 0x4000 | mtimecmp low | RW |
| 0x4004 | mtimecmp high | RW |
| 0xBFF8 | mtime low | RW |
| 0xBFFC | mtime high | RW |

mtime advances by one per core cycle.

## PLIC

| Offset | Register | Access |
|---|---|---|
| 0x000004 + 4*(n-1) | priority of source n (1..5, 3 bits) | RW |
| 0x001000 | pending bitmap (bit n = source n) | R |
| 0x002000 | enable bitmap | RW |
| 0x200000 | threshold (3 bits) | RW |
| 0x200004 | claim (read) / complete (write) | RW |

Sources: 1 GPIO-A, 2 GPIO-B, 3 GPIO-C, 4 UART, 5 SPI. All sources are
level-sensitive; a completed source that is still asserted pends again.

## GPIO-A / GPIO-B / GPIO-C

| Offset | Register | Access |
|---|---|---|
| 0x00 | DIR (1 = output) | RW |
| 0x04 | OUT | RW |
| 0x08 | IN (output pins read back OUT) | R |
| 0x0C | INT_EN | RW |
| 0x10 | INT_LEVEL (1 = active high) | RW |
| 0x14 | INT_STATUS = INT_EN & ~(IN ^ INT_LEVEL) | R |

## GP-SPECIAL

| Offset | Register | Access |
|---|---|---|
| 0x0 | LED (16 bits) | RW |
| 0x4 | SWITCH (16 bits) | R |

## UART

| Offset | Register | Access |
|---|---|---|
| 0x0 | TXDATA | W |
| 0x4 | RXDATA (pops; 0 when empty) | R |
| 0x8 | STATUS: bit0 tx_ready (always 1), bit1 rx_valid | R |
| 0xC | CTRL: bit0 rx irq enable, bit1 tx irq enable | RW |

Receive FIFO depth is 64 bytes; overflow drops the newest byte.

## SPI

| Offset | Register | Access |
|---|---|---|
| 0x00 | CTRL: bit0 enable, bits 2:1 mode, bit3 irq enable | RW |
| 0x04 | DIV (stored, no timing effect) | RW |
| 0x08 | TXDATA (write starts a transfer) | W |
| 0x0C | RXDATA (last response; read clears rx_valid) | R |
| 0x10 | STATUS: bit0 ready, bit1 rx_valid | R |
";
