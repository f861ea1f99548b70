use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub const UART_TXDATA: u32 = 0x0;
pub const UART_RXDATA: u32 = 0x4;
pub const UART_STATUS: u32 = 0x8;
pub const UART_CTRL: u32 = 0xC;

pub const UART_RX_CAPACITY: usize = 64;

const STATUS_TX_READY: u32 = 1 << 0;
const STATUS_RX_VALID: u32 = 1 << 1;
const CTRL_RX_IRQ: u32 = 1 << 0;
const CTRL_TX_IRQ: u32 = 1 << 1;

/// Byte-level UART with instantaneous transmission.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uart {
    pub ctrl: u32,
    pub rx_fifo: VecDeque<u8>,
    /// Host bytes discarded because the receive FIFO was full.
    pub rx_dropped: u64,
    /// Transmitted bytes not yet collected by the host.
    #[serde(skip)]
    pub tx_pending: Vec<u8>,
    pub tx_total: u64,
}

impl Uart {
    pub fn rx_valid(&self) -> bool {
        !self.rx_fifo.is_empty()
    }

    /// Queue a byte from the host. Drops the byte when the FIFO is full.
    pub fn inject(&mut self, byte: u8) -> bool {
        if self.rx_fifo.len() >= UART_RX_CAPACITY {
            self.rx_dropped += 1;
            return false;
        }
        self.rx_fifo.push_back(byte);
        true
    }

    pub fn take_tx(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.tx_pending)
    }

    pub fn irq_level(&self) -> bool {
        (self.rx_valid() && self.ctrl & CTRL_RX_IRQ != 0) || self.ctrl & CTRL_TX_IRQ != 0
    }

    pub fn status(&self) -> u32 {
        STATUS_TX_READY | if self.rx_valid() { STATUS_RX_VALID } else { 0 }
    }

    /// Register read; RXDATA pops the FIFO.
    pub fn read(&mut self, offset: u32) -> u32 {
        match offset {
            UART_RXDATA => self.rx_fifo.pop_front().unwrap_or(0) as u32,
            _ => self.peek(offset),
        }
    }

    pub fn peek(&self, offset: u32) -> u32 {
        match offset {
            UART_RXDATA => self.rx_fifo.front().copied().unwrap_or(0) as u32,
            UART_STATUS => self.status(),
            UART_CTRL => self.ctrl,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        match offset {
            UART_TXDATA => {
                self.tx_pending.push(value as u8);
                self.tx_total += 1;
            }
            UART_CTRL => self.ctrl = value & (CTRL_RX_IRQ | CTRL_TX_IRQ),
            _ => {}
        }
    }
}
