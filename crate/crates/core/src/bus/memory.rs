use serde::{Deserialize, Serialize};

use super::map::BANK_COUNT;

/// Four equally sized, contiguous, byte-addressable RAM banks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBanks {
    bank_size: u32,
    banks: Vec<Vec<u8>>,
}

impl MemoryBanks {
    pub fn new(bank_size: u32) -> Self {
        MemoryBanks {
            bank_size,
            banks: vec![vec![0; bank_size as usize]; BANK_COUNT],
        }
    }

    pub fn bank_size(&self) -> u32 {
        self.bank_size
    }

    pub fn total_size(&self) -> u64 {
        self.bank_size as u64 * BANK_COUNT as u64
    }

    /// Bank index and in-bank offset for a RAM offset.
    pub fn locate(&self, offset: u32) -> (usize, usize) {
        ((offset / self.bank_size) as usize, (offset % self.bank_size) as usize)
    }

    pub fn in_range(&self, offset: u32, len: u32) -> bool {
        offset as u64 + len as u64 <= self.total_size()
    }

    pub fn read_byte(&self, offset: u32) -> u8 {
        let (bank, at) = self.locate(offset);
        self.banks[bank][at]
    }

    pub fn write_byte(&mut self, offset: u32, value: u8) {
        let (bank, at) = self.locate(offset);
        self.banks[bank][at] = value;
    }

    /// Little-endian read of `len` (1..=4) bytes. Caller checks the range.
    pub fn read(&self, offset: u32, len: u32) -> u32 {
        (0..len).fold(0, |acc, i| acc | (self.read_byte(offset + i) as u32) << (8 * i))
    }

    pub fn write(&mut self, offset: u32, len: u32, value: u32) {
        for i in 0..len {
            self.write_byte(offset + i, (value >> (8 * i)) as u8);
        }
    }

    pub fn write_slice(&mut self, offset: u32, bytes: &[u8]) {
        for (i, &b) in bytes.iter().enumerate() {
            self.write_byte(offset + i as u32, b);
        }
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.banks.concat()
    }

    pub fn fill_from(&mut self, image: &[u8]) {
        let n = image.len().min(self.total_size() as usize);
        self.write_slice(0, &image[..n]);
    }

    pub fn clear(&mut self) {
        for b in &mut self.banks {
            b.fill(0);
        }
    }
}
