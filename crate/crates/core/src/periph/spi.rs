use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub const SPI_CTRL: u32 = 0x00;
pub const SPI_DIV: u32 = 0x04;
pub const SPI_TXDATA: u32 = 0x08;
pub const SPI_RXDATA: u32 = 0x0C;
pub const SPI_STATUS: u32 = 0x10;

const CTRL_ENABLE: u32 = 1 << 0;
const CTRL_MODE: u32 = 0b11 << 1;
const CTRL_IRQ: u32 = 1 << 3;
const STATUS_READY: u32 = 1 << 0;
const STATUS_RX_VALID: u32 = 1 << 1;

/// Device on the other end of the bus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpiSlave {
    #[default]
    Loopback,
    /// Replays the given bytes in order, then 0xFF.
    Scripted(VecDeque<u8>),
}

impl SpiSlave {
    fn exchange(&mut self, byte: u8) -> u8 {
        match self {
            SpiSlave::Loopback => byte,
            SpiSlave::Scripted(script) => script.pop_front().unwrap_or(0xFF),
        }
    }
}

/// SPI master without clock timing. The divider is storage only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spi {
    pub ctrl: u32,
    pub div: u32,
    pub rx: u8,
    pub rx_valid: bool,
    pub slave: SpiSlave,
}

impl Spi {
    pub fn enabled(&self) -> bool {
        self.ctrl & CTRL_ENABLE != 0
    }

    /// Shift one byte out and one byte in. An idle bus reads 0xFF.
    pub fn transfer(&mut self, byte: u8) -> u8 {
        let resp = if self.enabled() {
            self.slave.exchange(byte)
        } else {
            0xFF
        };
        self.rx = resp;
        self.rx_valid = true;
        resp
    }

    pub fn irq_level(&self) -> bool {
        self.rx_valid && self.ctrl & CTRL_IRQ != 0
    }

    pub fn read(&mut self, offset: u32) -> u32 {
        let v = self.peek(offset);
        if offset == SPI_RXDATA {
            self.rx_valid = false;
        }
        v
    }

    pub fn peek(&self, offset: u32) -> u32 {
        match offset {
            SPI_CTRL => self.ctrl,
            SPI_DIV => self.div,
            SPI_RXDATA => self.rx as u32,
            SPI_STATUS => STATUS_READY | if self.rx_valid { STATUS_RX_VALID } else { 0 },
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        match offset {
            SPI_CTRL => self.ctrl = value & (CTRL_ENABLE | CTRL_MODE | CTRL_IRQ),
            SPI_DIV => self.div = value,
            SPI_TXDATA => {
                self.transfer(value as u8);
            }
            _ => {}
        }
    }
}
