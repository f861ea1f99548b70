use serde::{Deserialize, Serialize};

pub const GP_LED: u32 = 0x0;
pub const GP_SWITCH: u32 = 0x4;

/// Sixteen LEDs driven by firmware and sixteen switches driven by the host.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpSpecial {
    pub led: u16,
    pub switches: u16,
}

impl GpSpecial {
    pub fn read(&self, offset: u32) -> u32 {
        match offset {
            GP_LED => self.led as u32,
            GP_SWITCH => self.switches as u32,
            _ => 0,
        }
    }

    /// Returns true when the LED state changed.
    pub fn write(&mut self, offset: u32, value: u32) -> bool {
        if offset == GP_LED {
            let old = self.led;
            self.led = value as u16;
            return old != self.led;
        }
        false
    }
}
