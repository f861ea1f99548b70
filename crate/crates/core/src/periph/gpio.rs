use serde::{Deserialize, Serialize};

pub const GPIO_DIR: u32 = 0x00;
pub const GPIO_OUT: u32 = 0x04;
pub const GPIO_IN: u32 = 0x08;
pub const GPIO_INT_EN: u32 = 0x0C;
pub const GPIO_INT_LEVEL: u32 = 0x10;
pub const GPIO_INT_STATUS: u32 = 0x14;

/// One 8-pin port. A set `dir` bit makes the pin an output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpioPort {
    pub dir: u8,
    pub out: u8,
    /// Levels driven onto the pins from outside the chip.
    pub ext_in: u8,
    pub int_en: u8,
    /// Per-pin active level: 1 = active high.
    pub int_level: u8,
}

impl GpioPort {
    /// Input readback: output pins return the OUT latch.
    pub fn effective_in(&self) -> u8 {
        (self.out & self.dir) | (self.ext_in & !self.dir)
    }

    pub fn int_status(&self) -> u8 {
        self.int_en & !(self.effective_in() ^ self.int_level)
    }

    pub fn irq_level(&self) -> bool {
        self.int_status() != 0
    }

    pub fn read(&self, offset: u32) -> u32 {
        let v = match offset {
            GPIO_DIR => self.dir,
            GPIO_OUT => self.out,
            GPIO_IN => self.effective_in(),
            GPIO_INT_EN => self.int_en,
            GPIO_INT_LEVEL => self.int_level,
            GPIO_INT_STATUS => self.int_status(),
            _ => 0,
        };
        v as u32
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        let v = value as u8;
        match offset {
            GPIO_DIR => self.dir = v,
            GPIO_OUT => self.out = v,
            GPIO_INT_EN => self.int_en = v,
            GPIO_INT_LEVEL => self.int_level = v,
            _ => {}
        }
    }
}
