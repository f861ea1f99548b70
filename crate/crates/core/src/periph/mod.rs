//! Device models behind the peripheral register windows.
//!
//! All registers are 32-bit and word addressed. Undefined offsets inside a
//! window read as zero and ignore writes.

mod gp_special;
mod gpio;
mod spi;
mod uart;

pub use gp_special::{GpSpecial, GP_LED, GP_SWITCH};
pub use gpio::{GpioPort, GPIO_DIR, GPIO_IN, GPIO_INT_EN, GPIO_INT_LEVEL, GPIO_INT_STATUS, GPIO_OUT};
pub use spi::{Spi, SpiSlave, SPI_CTRL, SPI_DIV, SPI_RXDATA, SPI_STATUS, SPI_TXDATA};
pub use uart::{Uart, UART_CTRL, UART_RXDATA, UART_RX_CAPACITY, UART_STATUS, UART_TXDATA};
