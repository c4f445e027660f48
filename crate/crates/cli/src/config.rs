//! `--config` files: a JSON object with one section per subcommand plus a
//! shared `cache` section. Section keys are flag names (`tile-width` or
//! `tile_width`). Flags given on the command line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use vslide_core::cache::CacheConfig;

use crate::error::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile(Map<String, Value>);

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        match serde_json::from_slice(&bytes) {
            Ok(Value::Object(m)) => Ok(ConfigFile(m)),
            Ok(_) => Err(CliError::usage(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(CliError::usage(format!("{}: {e}", path.display()))),
        }
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        self.0.get(name).or_else(|| self.0.get(&name.replace('-', "_")))
    }

    pub fn cache(&self) -> Result<CacheConfig, CliError> {
        match self.section("cache") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::usage(format!("cache: {e}"))),
            None => Ok(CacheConfig::default()),
        }
    }

    /// `flags` on top of the `name` section. Unset flags (null, false or
    /// empty lists) fall through to the file.
    pub fn layered<A: Serialize + DeserializeOwned>(&self, name: &str, flags: &A) -> Result<A, CliError> {
        let mut merged = Map::new();
        match self.section(name) {
            Some(Value::Object(m)) => {
                for (k, v) in m {
                    merged.insert(k.replace('-', "_"), v.clone());
                }
            }
            Some(_) => return Err(CliError::usage(format!("config section `{name}` must be an object"))),
            None => {}
        }
        if let Value::Object(m) = serde_json::to_value(flags)? {
            for (k, v) in m {
                let unset = match &v {
                    Value::Null | Value::Bool(false) => true,
                    Value::Array(a) => a.is_empty(),
                    _ => false,
                };
                if !unset || !merged.contains_key(&k) {
                    merged.insert(k, v);
                }
            }
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("{name}: {e}")))
    }
}
