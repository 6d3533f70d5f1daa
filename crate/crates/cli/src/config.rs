//! Run configuration: a TOML file with `master_seed` and one table per
//! subcommand. Flags override file values; the resolved configuration is
//! written next to the outputs as `run_config.toml`.

use std::path::{Path, PathBuf};

use entcert::protocol_sim::Variant;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SIDECAR: &str = "run_config.toml";
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "seed_format")]
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chsh: Option<ChshSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dice: Option<DiceSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torre: Option<TorreSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSettings>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: DEFAULT_SEED,
            chsh: None,
            dice: None,
            torre: None,
            protocol: None,
            audit: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

// TOML integers are signed 64-bit; seeds above i64::MAX are written as strings.
mod seed_format {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("seed must be non-negative")),
            Raw::Text(t) => t.trim().parse().map_err(de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChshSettings {
    /// `singlet`, `werner:<w>`, `mixed-demo`, `aligned:<deg>` or
    /// `convex:<w>@x,y,z|x,y,z;...` (Bloch vectors per term).
    pub state: String,
    pub optimize: bool,
    pub grid_step_deg: f64,
    /// a, a′, b, b′ in degrees, used when not optimizing.
    pub angles_deg: [f64; 4],
    pub scan_step_deg: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        Self {
            state: "singlet".into(),
            optimize: false,
            grid_step_deg: 1.0,
            angles_deg: [0.0, 90.0, 45.0, 135.0],
            scan_step_deg: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiceSettings {
    pub trials: u64,
    pub runs: u64,
}

impl Default for DiceSettings {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            runs: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorreSettings {
    /// Truncation of the position operators.
    pub levels: usize,
    /// Random product states in the position demo.
    pub samples: usize,
    /// k, n, m, l of cov(kX₁ + nX₂, mX₁ + lX₂).
    pub coefficients: [f64; 4],
    /// Both spins along this z–x angle in the spin demo.
    pub spin_theta_deg: f64,
}

impl Default for TorreSettings {
    fn default() -> Self {
        Self {
            levels: entcert::hilbert::DEFAULT_POSITION_LEVELS,
            samples: 5,
            coefficients: [1.0, 1.0, 1.0, -1.0],
            spin_theta_deg: 45.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Named(String),
    Custom {
        p1: Vec<f64>,
        p2: Vec<f64>,
        outcome: Vec<Vec<f64>>,
    },
}

pub const LOOPHOLE_DEFAULT: &str = "loophole-default";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSettings {
    #[serde(with = "variant_format")]
    pub variant: Variant,
    pub n1: usize,
    pub n2: usize,
    pub runs: u64,
    /// Consecutive runs pooled into one audited sample.
    pub pool: u64,
    pub bins: usize,
    pub alpha: f64,
    pub model: ModelChoice,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            variant: Variant::BlockFixedM,
            n1: 4,
            n2: 2500,
            runs: 100,
            pool: 10,
            bins: 100,
            alpha: 0.05,
            model: ModelChoice::Named(LOOPHOLE_DEFAULT.into()),
        }
    }
}

pub mod variant_format {
    use entcert::protocol_sim::Variant;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn name(v: Variant) -> &'static str {
        match v {
            Variant::Iid => "iid",
            Variant::BlockFixedM => "blockm",
            Variant::BlockFixedN => "blockn",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "iid" => Some(Variant::Iid),
            "blockm" => Some(Variant::BlockFixedM),
            "blockn" => Some(Variant::BlockFixedN),
            _ => None,
        }
    }

    pub fn serialize<S: Serializer>(v: &Variant, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(name(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Variant, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).ok_or_else(|| de::Error::custom(format!("unknown variant `{s}` (iid, blockm, blockn)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub input: PathBuf,
    pub bins: usize,
    pub alpha: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            input: PathBuf::from("outcomes.txt"),
            bins: 100,
            alpha: 0.05,
        }
    }
}
