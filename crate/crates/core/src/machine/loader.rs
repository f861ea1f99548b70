//! Firmware images: little-endian ELF32 executables and flat binaries.

use std::path::Path;

use thiserror::Error;

use crate::bus::Bus;

const EM_RISCV: u16 = 0xF3;
const PT_LOAD: u32 = 1;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed ELF: {0}")]
    Malformed(&'static str),
    #[error("segment at {addr:#010x} (size {size:#x}) lies outside RAM")]
    SegmentOutsideRam { addr: u32, size: u32 },
    #[error("image of {size} bytes at {addr:#010x} does not fit in RAM")]
    ImageTooLarge { addr: u32, size: usize },
}

impl LoadError {
    /// Guest address the error refers to, if any.
    pub fn addr(&self) -> Option<u32> {
        match self {
            LoadError::SegmentOutsideRam { addr, .. } | LoadError::ImageTooLarge { addr, .. } => Some(*addr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub addr: u32,
    /// File bytes followed by zero fill up to the memory size.
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firmware {
    pub entry: u32,
    pub segments: Vec<Segment>,
    flat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Elf,
    Flat { base: u32 },
}

fn u16_at(b: &[u8], off: usize) -> Result<u16, LoadError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(LoadError::Malformed("truncated header"))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32, LoadError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or(LoadError::Malformed("truncated header"))
}

impl Firmware {
    pub fn flat(bytes: &[u8], base: u32) -> Self {
        Firmware {
            entry: base,
            segments: vec![Segment {
                addr: base,
                data: bytes.to_vec(),
            }],
            flat: true,
        }
    }

    pub fn parse_elf(b: &[u8]) -> Result<Self, LoadError> {
        if b.get(..4) != Some(b"\x7fELF") {
            return Err(LoadError::Malformed("bad magic"));
        }
        if b.len() < 52 {
            return Err(LoadError::Malformed("truncated header"));
        }
        if b[4] != 1 {
            return Err(LoadError::Malformed("not a 32-bit image"));
        }
        if b[5] != 1 {
            return Err(LoadError::Malformed("not little-endian"));
        }
        if u16_at(b, 18)? != EM_RISCV {
            return Err(LoadError::Malformed("not a RISC-V image"));
        }
        let entry = u32_at(b, 24)?;
        let phoff = u32_at(b, 28)? as usize;
        let phentsize = u16_at(b, 42)? as usize;
        let phnum = u16_at(b, 44)? as usize;
        if phnum > 0 && phentsize < 32 {
            return Err(LoadError::Malformed("program header entry too small"));
        }
        let mut segments = Vec::new();
        for i in 0..phnum {
            let ph = phoff
                .checked_add(i * phentsize)
                .ok_or(LoadError::Malformed("program header offset overflows"))?;
            if u32_at(b, ph)? != PT_LOAD {
                continue;
            }
            let offset = u32_at(b, ph + 4)? as usize;
            let paddr = u32_at(b, ph + 12)?;
            let filesz = u32_at(b, ph + 16)? as usize;
            let memsz = u32_at(b, ph + 20)? as usize;
            if memsz == 0 {
                continue;
            }
            if filesz > memsz {
                return Err(LoadError::Malformed("segment file size exceeds memory size"));
            }
            let file = offset
                .checked_add(filesz)
                .and_then(|end| b.get(offset..end))
                .ok_or(LoadError::Malformed("segment data past end of file"))?;
            let mut data = file.to_vec();
            data.resize(memsz, 0);
            segments.push(Segment { addr: paddr, data });
        }
        if segments.is_empty() {
            return Err(LoadError::Malformed("no loadable segments"));
        }
        Ok(Firmware {
            entry,
            segments,
            flat: false,
        })
    }

    pub fn from_bytes(bytes: &[u8], format: ImageFormat) -> Result<Self, LoadError> {
        match format {
            ImageFormat::Elf => Self::parse_elf(bytes),
            ImageFormat::Flat { base } => Ok(Self::flat(bytes, base)),
        }
    }

    pub fn from_path(path: &Path, format: ImageFormat) -> Result<Self, LoadError> {
        let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes, format)
    }

    /// Check that every byte lands in RAM.
    pub fn validate(&self, bus: &Bus) -> Result<(), LoadError> {
        for s in &self.segments {
            let size = s.data.len();
            let fits = u32::try_from(size)
                .ok()
                .is_some_and(|len| len == 0 || bus.ram_offset(s.addr, len).is_some());
            if !fits {
                return Err(if self.flat && bus.ram_offset(s.addr, 1).is_some() {
                    LoadError::ImageTooLarge { addr: s.addr, size }
                } else {
                    LoadError::SegmentOutsideRam {
                        addr: s.addr,
                        size: size as u32,
                    }
                });
            }
        }
        Ok(())
    }

    /// Copy the image into RAM.
    pub fn install(&self, bus: &mut Bus) -> Result<(), LoadError> {
        self.validate(bus)?;
        for s in &self.segments {
            bus.load_bytes(s.addr, &s.data).expect("validated segment");
        }
        Ok(())
    }
}
