use std::path::PathBuf;

use loom_core::dynprec::{ActivationDistribution, FileActivations, SyntheticActivations};
use loom_core::engines::{Engine, EngineError, EngineGeometry, GroupSource};
use loom_core::netspec::{builtin_networks, resolve_network, NetspecError, NetworkSpec, Tier};

use crate::{DynamicMode, Format, SimulateArgs};

pub const PEAK_MACS: [u64; 5] = [32, 64, 128, 256, 512];

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<NetspecError> for CliError {
    fn from(e: NetspecError) -> Self {
        match e {
            NetspecError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::MissingActivations { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Footprint,
    Sweep,
    Dynamic,
}

#[derive(Debug, Clone)]
pub enum Dynamic {
    Off,
    Synthetic {
        seed: u64,
        distribution: ActivationDistribution,
    },
    File {
        dir: PathBuf,
    },
}

impl Dynamic {
    pub fn source(&self, network: &str) -> Option<Box<dyn GroupSource>> {
        match self {
            Dynamic::Off => None,
            Dynamic::Synthetic { seed, distribution } => Some(Box::new(SyntheticActivations::new(
                network,
                *seed,
                *distribution,
            ))),
            Dynamic::File { dir } => Some(Box::new(FileActivations::new(dir.clone(), network))),
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        match self {
            Dynamic::Off => serde_json::json!({ "mode": "off" }),
            Dynamic::Synthetic { seed, distribution } => serde_json::json!({
                "mode": "synthetic",
                "seed": seed,
                "distribution": distribution.to_string(),
            }),
            Dynamic::File { dir } => serde_json::json!({
                "mode": "file",
                "dir": dir.display().to_string(),
            }),
        }
    }
}

#[derive(Debug)]
pub struct Config {
    pub networks: Vec<NetworkSpec>,
    pub engines: Vec<Engine>,
    pub bits: u8,
    pub tier: Tier,
    pub peak_macs: Vec<u64>,
    pub dynamic: Dynamic,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Config {
    pub fn geometry(&self, peak_macs: u64) -> Result<EngineGeometry, CliError> {
        Ok(EngineGeometry::new(peak_macs, self.bits)?)
    }

    pub fn metadata(&self, command: &str) -> serde_json::Value {
        serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "networks": self.networks.iter().map(|n| n.name.clone()).collect::<Vec<_>>(),
            "engines": self.engines.iter().map(|e| e.name()).collect::<Vec<_>>(),
            "bits_per_cycle": self.bits,
            "tier": self.tier.label(),
            "peak_macs": self.peak_macs,
            "dynamic": self.dynamic.describe(),
        })
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn resolve(args: SimulateArgs, mode: Mode) -> Result<Config, CliError> {
    let mut networks = Vec::new();
    for name in args
        .networks
        .iter()
        .map(|n| n.trim())
        .filter(|n| !n.is_empty())
    {
        if name.eq_ignore_ascii_case("all") {
            networks.extend(builtin_networks());
        } else {
            networks.push(resolve_network(name)?);
        }
    }
    if networks.is_empty() {
        return Err(invalid("no networks selected"));
    }
    networks.sort_by(|a, b| a.name.cmp(&b.name));
    networks.dedup_by(|a, b| a.name == b.name);

    let dynamic = match args.dynamic {
        DynamicMode::Off => Dynamic::Off,
        DynamicMode::Synthetic => Dynamic::Synthetic {
            seed: args
                .seed
                .ok_or_else(|| invalid("--dynamic synthetic needs --seed"))?,
            distribution: args.dist.parse().map_err(invalid)?,
        },
        DynamicMode::File => Dynamic::File {
            dir: args
                .activations
                .clone()
                .ok_or_else(|| invalid("--dynamic file needs --activations DIR"))?,
        },
    };
    let dynamic_on = !matches!(dynamic, Dynamic::Off);
    if mode == Mode::Dynamic && !dynamic_on {
        return Err(invalid(
            "the dynamic command needs --dynamic synthetic or --dynamic file",
        ));
    }

    let engines = match &args.engines {
        Some(list) => {
            let mut engines = list
                .iter()
                .filter(|e| !e.trim().is_empty())
                .map(|e| e.parse::<Engine>())
                .collect::<Result<Vec<_>, _>>()?;
            engines.sort();
            engines.dedup();
            engines
        }
        None => match mode {
            Mode::Simulate | Mode::Footprint if dynamic_on => {
                vec![
                    Engine::Dpnn,
                    Engine::DStripes,
                    Engine::Loom,
                    Engine::Stripes,
                ]
            }
            Mode::Simulate | Mode::Footprint => vec![Engine::Dpnn, Engine::Loom, Engine::Stripes],
            Mode::Sweep => vec![Engine::Loom],
            Mode::Dynamic => vec![Engine::DStripes, Engine::Loom],
        },
    };
    if engines.is_empty() {
        return Err(invalid("no engines selected"));
    }
    if engines.contains(&Engine::DStripes) && !dynamic_on {
        return Err(invalid(
            "dstripes needs --dynamic synthetic or --dynamic file",
        ));
    }
    if mode == Mode::Dynamic {
        if let Some(e) = engines
            .iter()
            .find(|e| !matches!(e, Engine::Loom | Engine::DStripes))
        {
            return Err(invalid(format!(
                "engine {e} has no dynamic mode; use loom or dstripes"
            )));
        }
    }

    let peak_macs = match (mode, args.peak_macs) {
        (Mode::Sweep, None) => PEAK_MACS.to_vec(),
        (_, None) => vec![128],
        (Mode::Sweep, Some(list)) => list,
        (_, Some(list)) if list.len() == 1 => list,
        (_, Some(_)) => {
            return Err(invalid(
                "give one --peak-macs value; use `sweep` for several",
            ))
        }
    };
    if let Some(m) = peak_macs.iter().find(|m| !PEAK_MACS.contains(m)) {
        return Err(invalid(format!(
            "--peak-macs {m} is not one of {PEAK_MACS:?}"
        )));
    }
    if peak_macs.is_empty() {
        return Err(invalid("no --peak-macs values"));
    }
    let mut peak_macs = peak_macs;
    peak_macs.sort_unstable();
    peak_macs.dedup();

    if !matches!(args.bits, 1 | 2 | 4) {
        return Err(invalid(format!(
            "--bits must be 1, 2 or 4, got {}",
            args.bits
        )));
    }

    Ok(Config {
        networks,
        engines,
        bits: args.bits,
        tier: args.tier.parse().map_err(invalid)?,
        peak_macs,
        dynamic,
        out: args.output.out,
        format: args.output.format,
    })
}
