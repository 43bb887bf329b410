//! Flat `key = value` configuration files (TOML syntax) with command-line
//! overrides.

use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::params::{ParamSpec, RepeaterParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: expected {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

/// Parsed key-value configuration. Nested tables are not used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    table: Table,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn from_table(table: Table) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    /// Applies `key=value` overrides. Values use TOML syntax; anything that
    /// does not parse as a TOML value is taken as a bare string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(o.to_string()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::BadOverride(o.to_string()));
            }
            let value = format!("v = {}", raw.trim())
                .parse::<Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(raw.trim().to_string()));
            self.table.insert(key.to_string(), value);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.table.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Result<&Value, ConfigError> {
        self.table
            .get(key)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        match self.get(key)? {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::WrongType {
                key: key.to_string(),
                expected: "a number",
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        if self.contains(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        match self.get(key)? {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::Float(x) if *x >= 0.0 && x.fract() == 0.0 && *x < 2f64.powi(63) => Ok(*x as u64),
            _ => Err(ConfigError::WrongType {
                key: key.to_string(),
                expected: "a non-negative integer",
            }),
        }
    }

    pub fn u32(&self, key: &str) -> Result<u32, ConfigError> {
        u32::try_from(self.u64(key)?).map_err(|_| ConfigError::WrongType {
            key: key.to_string(),
            expected: "an integer below 2^32",
        })
    }

    pub fn u32_or(&self, key: &str, default: u32) -> Result<u32, ConfigError> {
        if self.contains(key) {
            self.u32(key)
        } else {
            Ok(default)
        }
    }

    pub fn string(&self, key: &str) -> Result<String, ConfigError> {
        match self.get(key)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(ConfigError::WrongType {
                key: key.to_string(),
                expected: "a string",
            }),
        }
    }

    pub fn opt_string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        if self.contains(key) {
            self.string(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let wrong = || ConfigError::WrongType {
            key: key.to_string(),
            expected: "an array of numbers",
        };
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(wrong()),
                })
                .collect(),
            _ => Err(wrong()),
        }
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>, ConfigError> {
        let wrong = || ConfigError::WrongType {
            key: key.to_string(),
            expected: "an array of non-negative integers",
        };
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => u32::try_from(*i).map_err(|_| wrong()),
                    Value::Float(x) if x.fract() == 0.0 && *x >= 0.0 && *x <= f64::from(u32::MAX) => Ok(*x as u32),
                    _ => Err(wrong()),
                })
                .collect(),
            _ => Err(wrong()),
        }
    }

    pub fn string_list(&self, key: &str) -> Result<Vec<String>, ConfigError> {
        let wrong = || ConfigError::WrongType {
            key: key.to_string(),
            expected: "an array of strings",
        };
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(wrong))
                .collect(),
            _ => Err(wrong()),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.table).expect("flat tables always serialise")
    }
}

pub const PARAM_KEYS: [&str; 10] = [
    "total_length_km",
    "num_links",
    "num_spectral_modes",
    "attenuation_db_per_km",
    "pair_emission_prob",
    "detector_eff_center",
    "detector_eff_swap",
    "memory_eff",
    "total_bandwidth_hz",
    "bandwidth_inefficiency",
];

/// Reads every [`RepeaterParams`] field. Keys listed in `defaults` may be
/// absent and then take the given value.
pub fn param_spec(cfg: &KvConfig, defaults: &[(&str, f64)]) -> Result<ParamSpec, ConfigError> {
    let num = |key: &str| match defaults.iter().find(|(k, _)| *k == key) {
        Some(&(_, d)) => cfg.f64_or(key, d),
        None => cfg.f64(key),
    };
    let int = |key: &str| match defaults.iter().find(|(k, _)| *k == key) {
        Some(&(_, d)) => cfg.u32_or(key, d as u32),
        None => cfg.u32(key),
    };
    Ok(ParamSpec {
        total_length_km: num("total_length_km")?,
        num_links: int("num_links")?,
        num_spectral_modes: int("num_spectral_modes")?,
        attenuation_db_per_km: num("attenuation_db_per_km")?,
        pair_emission_prob: num("pair_emission_prob")?,
        detector_eff_center: num("detector_eff_center")?,
        detector_eff_swap: num("detector_eff_swap")?,
        memory_eff: num("memory_eff")?,
        total_bandwidth_hz: num("total_bandwidth_hz")?,
        bandwidth_inefficiency: num("bandwidth_inefficiency")?,
    })
}

/// Writes `params` back as config keys.
pub fn params_to_config(params: &RepeaterParams, cfg: &mut KvConfig) {
    let s = params.spec();
    cfg.set("total_length_km", s.total_length_km);
    cfg.set("num_links", i64::from(s.num_links));
    cfg.set("num_spectral_modes", i64::from(s.num_spectral_modes));
    cfg.set("attenuation_db_per_km", s.attenuation_db_per_km);
    cfg.set("pair_emission_prob", s.pair_emission_prob);
    cfg.set("detector_eff_center", s.detector_eff_center);
    cfg.set("detector_eff_swap", s.detector_eff_swap);
    cfg.set("memory_eff", s.memory_eff);
    cfg.set("total_bandwidth_hz", s.total_bandwidth_hz);
    cfg.set("bandwidth_inefficiency", s.bandwidth_inefficiency);
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
total_length_km = 100
num_links = 2
num_spectral_modes = 100
attenuation_db_per_km = 0.2
pair_emission_prob = 0.9
detector_eff_center = 0.9
detector_eff_swap = 0.9
memory_eff = 0.9
total_bandwidth_hz = 3e11
bandwidth_inefficiency = 10
"#;

    #[test]
    fn reads_params() {
        let spec = param_spec(&KvConfig::parse(FULL).unwrap(), &[]).unwrap();
        assert_eq!(spec, ParamSpec::standard(100.0, 2, 100));
    }

    #[test]
    fn missing_key_is_named() {
        let text = FULL.replace("memory_eff = 0.9\n", "");
        let err = param_spec(&KvConfig::parse(&text).unwrap(), &[]).unwrap_err();
        assert_eq!(err, ConfigError::MissingKey("memory_eff".into()));
        assert!(err.to_string().contains("memory_eff"));
        let spec = param_spec(&KvConfig::parse(&text).unwrap(), &[("memory_eff", 0.5)]).unwrap();
        assert_eq!(spec.memory_eff, 0.5);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = KvConfig::parse(FULL).unwrap();
        cfg.apply_overrides(&["num_links=3", "memory_eff = 0.75", "preset=calgary-2014", "xs=[1, 2]"])
            .unwrap();
        assert_eq!(cfg.u32("num_links").unwrap(), 3);
        assert_eq!(cfg.f64("memory_eff").unwrap(), 0.75);
        assert_eq!(cfg.string("preset").unwrap(), "calgary-2014");
        assert_eq!(cfg.f64_list("xs").unwrap(), vec![1.0, 2.0]);
        assert!(cfg.apply_overrides(&["novalue"]).is_err());
    }

    #[test]
    fn type_errors() {
        let cfg = KvConfig::parse("a = \"x\"\nb = -1\nc = [1, \"y\"]").unwrap();
        assert!(matches!(cfg.f64("a"), Err(ConfigError::WrongType { .. })));
        assert!(cfg.u64("b").is_err());
        assert!(cfg.f64_list("c").is_err());
        assert!(KvConfig::parse("a = ").is_err());
        assert_eq!(cfg.check_keys(&["a", "b"]), Err(ConfigError::UnknownKey("c".into())));
    }

    #[test]
    fn params_round_trip_through_text() {
        let params = ParamSpec::standard(12.5, 3, 7).validate().unwrap();
        let mut cfg = KvConfig::default();
        params_to_config(&params, &mut cfg);
        let back = KvConfig::parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(param_spec(&back, &[]).unwrap().validate().unwrap(), params);
    }
}
