//! Run configuration, read from TOML.
//!
//! ```toml
//! [model]            # any DemonParams field; omitted fields keep defaults
//! coupling_gamma_x = 0.5
//! coupling_gamma_y = 0.5
//!
//! [run]
//! horizon = 3.0
//! n_trajectories = 100000
//! seed = 1
//! threads = "auto"   # or a positive integer
//! output_dir = "out"
//! grid_dt = 0.01
//!
//! [run.histogram]
//! low = -12.0
//! high = 12.0
//! bin_width = 0.25
//!
//! [sweep]            # optional
//! gamma_x = [0.0, 0.5, 1.0]
//! gamma_y = [0.0, 0.5, 1.0]
//! diagonal = false   # true: pair gamma_x[i] with itself, gamma_y unused
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use hidden_entropy::DemonParams;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Worker count: a fixed number or whatever the machine offers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl Threads {
    pub fn count(self) -> Option<usize> {
        match self {
            Threads::Auto => None,
            Threads::Count(n) => Some(n),
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => s.serialize_str("auto"),
            Threads::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ThreadsVisitor;
        impl Visitor<'_> for ThreadsVisitor {
            type Value = Threads;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\" or a positive integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Threads, E> {
                if v == "auto" {
                    Ok(Threads::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Threads, E> {
                if v >= 1 {
                    Ok(Threads::Count(v as usize))
                } else {
                    Err(E::invalid_value(de::Unexpected::Signed(v), &self))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Threads, E> {
                if v >= 1 {
                    Ok(Threads::Count(v as usize))
                } else {
                    Err(E::invalid_value(de::Unexpected::Unsigned(v), &self))
                }
            }
        }
        d.deserialize_any(ThreadsVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSpec {
    pub low: f64,
    pub high: f64,
    pub bin_width: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            low: -12.0,
            high: 12.0,
            bin_width: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub n_trajectories: u64,
    pub seed: u64,
    pub threads: Threads,
    pub output_dir: PathBuf,
    pub grid_dt: f64,
    pub histogram: HistogramSpec,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            n_trajectories: 100_000,
            seed: 1,
            threads: Threads::Auto,
            output_dir: PathBuf::from("out"),
            grid_dt: 0.01,
            histogram: HistogramSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub gamma_x: Vec<f64>,
    pub gamma_y: Vec<f64>,
    pub diagonal: bool,
}

impl SweepSpec {
    /// Grid points in output order: `gamma_x` outer, `gamma_y` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        if self.diagonal {
            self.gamma_x.iter().map(|&g| (g, g)).collect()
        } else {
            self.gamma_x
                .iter()
                .flat_map(|&gx| self.gamma_y.iter().map(move |&gy| (gx, gy)))
                .collect()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: DemonParams,
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| invalid("model", e.to_string()))?;
        let run = &self.run;
        if !(run.horizon.is_finite() && run.horizon > 0.0) {
            return Err(invalid("run.horizon", format!("must be positive, got {}", run.horizon)));
        }
        if run.n_trajectories == 0 {
            return Err(invalid("run.n_trajectories", "must be at least 1"));
        }
        if !(run.grid_dt.is_finite() && run.grid_dt > 0.0) {
            return Err(invalid("run.grid_dt", format!("must be positive, got {}", run.grid_dt)));
        }
        let h = &run.histogram;
        if !(h.bin_width.is_finite() && h.bin_width > 0.0) {
            return Err(invalid("run.histogram.bin_width", "must be positive"));
        }
        if !(h.low.is_finite() && h.high.is_finite() && h.low < h.high) {
            return Err(invalid("run.histogram", "need finite low < high"));
        }
        if let Some(s) = &self.sweep {
            for (key, list) in [("sweep.gamma_x", &s.gamma_x), ("sweep.gamma_y", &s.gamma_y)] {
                if let Some(bad) = list.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                    return Err(invalid(key, format!("grid values must lie in [0, 1], got {bad}")));
                }
            }
        }
        Ok(())
    }

    /// The model parameters at one sweep point.
    pub fn at(&self, gx: f64, gy: f64) -> DemonParams {
        self.model.clone().with_gammas(gx, gy)
    }
}
