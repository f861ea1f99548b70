use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rvmcu::bus::AddressMap;
use rvmcu::frontdoor::config::{FirmwareConfig, FirmwareFormat};
use rvmcu::frontdoor::{Config, ConfigError, ServeOptions};
use rvmcu::isa::decode;
use rvmcu::machine::{
    parse_u32, Firmware, ImageFormat, Input, LoadError, Machine, MachineEvent, RunLimits, Stimulus, TraceSink,
};

const EXIT_FAULT: u8 = 1;
const EXIT_LOAD: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "rvmcu", version, about = "RV32IMA microcontroller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load firmware and run it to a limit or halt.
    Run(RunArgs),
    /// Print the memory map.
    Map {
        #[arg(long, value_parser = number)]
        bank_size: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the control protocol (NDJSON over TCP, or WebSocket).
    Serve(ServeArgs),
    /// Disassemble a flat binary.
    Disasm {
        path: PathBuf,
        #[arg(long, value_parser = number, default_value = "0x80000000")]
        base: u32,
    },
}

#[derive(Args)]
struct FirmwareArgs {
    /// Flat binary image.
    #[arg(long, conflicts_with = "elf")]
    bin: Option<PathBuf>,
    /// ELF32 executable.
    #[arg(long)]
    elf: Option<PathBuf>,
    /// Load address of a flat binary.
    #[arg(long, value_parser = number, requires = "bin")]
    base: Option<u32>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    fw: FirmwareArgs,
    #[arg(long)]
    max_instret: Option<u64>,
    #[arg(long)]
    max_cycles: Option<u64>,
    /// Write one trace line per retired instruction or trap.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Instruction-indexed input script.
    #[arg(long)]
    stimulus: Option<PathBuf>,
    /// Also write the key=value report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Feed standard input to the UART receiver before starting.
    #[arg(long)]
    uart_stdin: bool,
    /// Halt at these addresses.
    #[arg(long = "break", value_parser = number)]
    breakpoints: Vec<u32>,
    /// Halt on EBREAK instead of trapping.
    #[arg(long)]
    debug: bool,
    /// One cycle per instruction, no pipeline model.
    #[arg(long)]
    functional: bool,
    /// Suppress the human-readable summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    fw: FirmwareArgs,
    /// Port to listen on (default 9800, or RVMCU_PORT).
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bind: Option<String>,
    /// Directory of static files for the board panel.
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn number(s: &str) -> Result<u32, String> {
    parse_u32(s).ok_or_else(|| format!("`{s}` is not a 32-bit number"))
}

enum Failure {
    Config(String),
    Load(String),
    Fault(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

/// Command-line firmware flags override the config file.
fn firmware_choice(args: &FirmwareArgs, cfg: &Config) -> Option<FirmwareConfig> {
    match (&args.bin, &args.elf) {
        (Some(path), _) => Some(FirmwareConfig {
            path: path.clone(),
            format: FirmwareFormat::Bin,
            base: args.base,
        }),
        (None, Some(path)) => Some(FirmwareConfig {
            path: path.clone(),
            format: FirmwareFormat::Elf,
            base: None,
        }),
        (None, None) => cfg.firmware.clone(),
    }
}

fn boot(args: &FirmwareArgs, cfg: &Config, required: bool) -> Result<Machine, Failure> {
    let mut m = Machine::new(cfg.machine_config()).map_err(|e| Failure::Config(e.to_string()))?;
    match firmware_choice(args, cfg) {
        Some(fw) => {
            let image = Firmware::from_path(&fw.path, fw.image_format())
                .and_then(|img| m.load(img).map(|_| ()))
                .map_err(|e| match e {
                    LoadError::Io { .. } => Failure::Load(e.to_string()),
                    _ => Failure::Load(format!("{}: {e}", fw.path.display())),
                });
            image?;
        }
        None if required => {
            return Err(Failure::Config(
                "no firmware: pass --bin, --elf or a config with [firmware]".into(),
            ))
        }
        None => {}
    }
    Ok(m)
}

fn open_trace(path: &Path) -> Result<TraceSink, Failure> {
    let f = File::create(path).map_err(|e| Failure::Config(format!("cannot create trace {}: {e}", path.display())))?;
    Ok(TraceSink::Writer(Box::new(BufWriter::with_capacity(1 << 16, f))))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.fw.config.as_deref())?;
    if args.functional {
        cfg.timing.enabled = Some(false);
    }
    let mut m = boot(&args.fw, &cfg, true)?;
    m.set_debug_attached(args.debug);

    if let Some(path) = args.stimulus.as_ref().or(cfg.run.stimulus.as_ref()) {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read stimulus {}: {e}", path.display())))?;
        let s = Stimulus::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        m.set_stimulus(s);
    }
    if let Some(path) = args.trace.as_ref().or(cfg.run.trace.as_ref()) {
        m.set_trace(Some(open_trace(path)?));
    }
    for pc in &args.breakpoints {
        m.set_breakpoint(*pc);
    }
    if args.uart_stdin {
        let mut bytes = Vec::new();
        io::stdin()
            .read_to_end(&mut bytes)
            .map_err(|e| Failure::Config(format!("reading stdin: {e}")))?;
        m.apply_input(Input::UartIn { bytes });
    }
    m.set_event_sink(Some(Box::new(|e| {
        if let MachineEvent::UartOut { bytes } = e {
            let mut out = io::stdout().lock();
            let _ = out.write_all(&bytes);
            let _ = out.flush();
        }
    })));

    let limits = RunLimits {
        max_instret: args.max_instret.or(cfg.run.max_instret),
        max_cycles: args.max_cycles.or(cfg.run.max_cycles),
    };
    let reason = m.run(limits);
    if let Err(e) = m.flush_trace() {
        eprintln!("rvmcu: trace write failed: {e}");
    }

    let report = m.report();
    let mut kv = report.to_kv();
    kv.push_str(&format!("stop={}\npc={:08x}\n", reason.name(), m.hart.pc));
    if !args.quiet {
        eprint!("{}", report.summary());
        eprintln!("stopped: {reason}");
    }
    eprint!("{kv}");
    if let Some(path) = &args.report {
        std::fs::write(path, &kv)
            .map_err(|e| Failure::Config(format!("cannot write report {}: {e}", path.display())))?;
    }
    if reason.is_clean() {
        Ok(())
    } else {
        Err(Failure::Fault(reason.to_string()))
    }
}

fn cmd_map(bank_size: Option<u32>, config: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config.as_deref())?;
    let size = bank_size.unwrap_or(cfg.bank_size());
    let map = AddressMap::standard(size).map_err(|e| Failure::Config(e.to_string()))?;
    print!("{}", map.to_markdown());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    let cfg = load_config(args.fw.config.as_deref())?;
    let mut m = boot(&args.fw, &cfg, false)?;
    if let Some(path) = args.trace.as_ref().or(cfg.run.trace.as_ref()) {
        m.set_trace(Some(open_trace(path)?));
    }
    let opts = ServeOptions {
        bind: args
            .bind
            .or(cfg.serve.bind.clone())
            .unwrap_or_else(|| "127.0.0.1".into()),
        port: cfg.resolve_port(args.port)?,
        panel: args.panel.or(cfg.serve.panel.clone()),
    };
    let handle = rvmcu::frontdoor::start(m, &opts)
        .map_err(|e| Failure::Config(format!("cannot listen on {}:{}: {e}", opts.bind, opts.port)))?;
    eprintln!("rvmcu: serving on {}", handle.local_addr());
    handle.join();
    Ok(())
}

fn cmd_disasm(path: PathBuf, base: u32) -> Result<(), Failure> {
    let bytes = std::fs::read(&path).map_err(|e| Failure::Load(format!("{}: {e}", path.display())))?;
    let fw = Firmware::from_bytes(&bytes, ImageFormat::Flat { base }).map_err(|e| Failure::Load(e.to_string()))?;
    let mut out = io::stdout().lock();
    for seg in &fw.segments {
        for (i, chunk) in seg.data.chunks(4).enumerate() {
            let mut w = [0u8; 4];
            w[..chunk.len()].copy_from_slice(chunk);
            let word = u32::from_le_bytes(w);
            let text = decode(word).map_or_else(|_| "<illegal>".to_string(), |i| i.to_string());
            let addr = seg.addr.wrapping_add(4 * i as u32);
            if writeln!(out, "{addr:08x}: {word:08x}  {text}").is_err() {
                return Ok(());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Map { bank_size, config } => cmd_map(bank_size, config),
        Cmd::Serve(a) => cmd_serve(a),
        Cmd::Disasm { path, base } => cmd_disasm(path, base),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("rvmcu: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Load(e)) => {
            eprintln!("rvmcu: {e}");
            ExitCode::from(EXIT_LOAD)
        }
        Err(Failure::Fault(e)) => {
            eprintln!("rvmcu: {e}");
            ExitCode::from(EXIT_FAULT)
        }
    }
}
