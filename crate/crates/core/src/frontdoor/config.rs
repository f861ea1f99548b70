use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{AddressMap, BANK_COUNT, DEFAULT_BANK_SIZE};
use crate::machine::{ImageFormat, MachineConfig};
use crate::timing::TimingConstants;

pub const DEFAULT_PORT: u16 = 9800;
pub const PORT_ENV: &str = "RVMCU_PORT";
/// Upper bound on one bank, to keep host allocations sane.
pub const MAX_BANK_SIZE: u32 = 64 << 20;
pub const MIN_BANK_SIZE: u32 = 4 << 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirmwareFormat {
    #[default]
    Elf,
    Bin,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmwareConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: FirmwareFormat,
    pub base: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub bank_size: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// `false` selects the functional model (one cycle per instruction).
    pub enabled: Option<bool>,
    pub fill: Option<u64>,
    pub flush: Option<u64>,
    pub load_use: Option<u64>,
    pub mul_extra: Option<u64>,
    pub div_extra: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trace: Option<PathBuf>,
    pub stimulus: Option<PathBuf>,
    pub max_instret: Option<u64>,
    pub max_cycles: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub port: Option<u16>,
    pub bind: Option<String>,
    pub panel: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub firmware: Option<FirmwareConfig>,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

impl FirmwareConfig {
    pub fn image_format(&self) -> ImageFormat {
        match self.format {
            FirmwareFormat::Elf => ImageFormat::Elf,
            FirmwareFormat::Bin => ImageFormat::Flat {
                base: self.base.unwrap_or(crate::bus::RAM_BASE),
            },
        }
    }
}

impl Config {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_string(),
            source,
        })?;
        // Relative paths inside the file are relative to the file.
        if let Some(dir) = Path::new(path).parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() && !dir.as_os_str().is_empty() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(fw) = cfg.firmware.as_mut() {
                fix(&mut fw.path);
            }
            cfg.run.trace.as_mut().map(fix);
            cfg.run.stimulus.as_mut().map(fix);
            cfg.serve.panel.as_mut().map(fix);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn bank_size(&self) -> u32 {
        self.memory.bank_size.unwrap_or(DEFAULT_BANK_SIZE)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let size = self.bank_size();
        if !size.is_power_of_two() || !(MIN_BANK_SIZE..=MAX_BANK_SIZE).contains(&size) {
            return Err(ConfigError::Invalid(format!(
                "memory.bank_size {size:#x} must be a power of two between {MIN_BANK_SIZE:#x} and {MAX_BANK_SIZE:#x}"
            )));
        }
        AddressMap::standard(size)
            .map_err(|e| ConfigError::Invalid(format!("memory.bank_size {size:#x} x {BANK_COUNT}: {e}")))?;
        if let Some(fw) = &self.firmware {
            if fw.base.is_some() && fw.format == FirmwareFormat::Elf {
                return Err(ConfigError::Invalid(
                    "firmware.base only applies to format = \"bin\"".into(),
                ));
            }
        }
        if self.timing.fill == Some(0) && self.timing.enabled != Some(false) {
            return Err(ConfigError::Invalid("timing.fill must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timing_constants(&self) -> TimingConstants {
        let d = TimingConstants::default();
        let t = &self.timing;
        TimingConstants {
            fill: t.fill.unwrap_or(d.fill),
            flush: t.flush.unwrap_or(d.flush),
            load_use: t.load_use.unwrap_or(d.load_use),
            mul_extra: t.mul_extra.unwrap_or(d.mul_extra),
            div_extra: t.div_extra.unwrap_or(d.div_extra),
        }
    }

    pub fn machine_config(&self) -> MachineConfig {
        MachineConfig {
            bank_size: self.bank_size(),
            timing: self.timing_constants(),
            timing_enabled: self.timing.enabled.unwrap_or(true),
            debug_attached: false,
        }
    }

    /// Port precedence: explicit value, then the environment, then the
    /// config file, then the default.
    pub fn resolve_port(&self, explicit: Option<u16>) -> Result<u16, ConfigError> {
        if let Some(p) = explicit {
            return Ok(p);
        }
        if let Ok(v) = std::env::var(PORT_ENV) {
            return v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{PORT_ENV}={v:?} is not a port number")));
        }
        Ok(self.serve.port.unwrap_or(DEFAULT_PORT))
    }
}
