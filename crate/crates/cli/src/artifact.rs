//! Artifact writing: provenance stamping, sorted-key JSON and CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

/// Hash of the run configuration and the library version, stamped on every
/// artifact.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub config: Value,
    pub config_hash: String,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(config: &impl Serialize) -> Outcome<Self> {
        // serde_json maps are ordered, so this text is canonical
        let config = serde_json::to_value(config).map_err(|e| Failure::config(e.to_string()))?;
        let digest = Sha256::digest(config.to_string().as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Provenance { config, config_hash, version: bilimor::VERSION })
    }

    pub fn tags(&self) -> Vec<(String, String)> {
        vec![("config_hash".into(), self.config_hash.clone()), ("version".into(), self.version.to_string())]
    }

    fn csv_header(&self) -> String {
        format!("# config_hash={} version={}\n", self.config_hash, self.version)
    }
}

/// Output directory with provenance; every write goes through here.
pub struct Artifacts {
    dir: PathBuf,
    pub provenance: Provenance,
}

impl Artifacts {
    pub fn new(dir: &Path, provenance: Provenance) -> Outcome<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), provenance })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `payload` merged with `config`, `config_hash` and `version`.
    pub fn json(&self, name: &str, payload: Value) -> Outcome<()> {
        let mut obj = match payload {
            Value::Object(map) => map,
            other => {
                let mut map = serde_json::Map::new();
                map.insert("result".into(), other);
                map
            }
        };
        obj.insert("config".into(), self.provenance.config.clone());
        obj.insert("config_hash".into(), Value::String(self.provenance.config_hash.clone()));
        obj.insert("version".into(), Value::String(self.provenance.version.into()));
        let text = serde_json::to_string_pretty(&Value::Object(obj)).map_err(|e| Failure::config(e.to_string()))?;
        fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    /// Writes `body` preceded by a provenance comment line.
    pub fn csv(&self, name: &str, body: &str) -> Outcome<()> {
        fs::write(self.path(name), self.provenance.csv_header() + body)?;
        Ok(())
    }

    pub fn bundle(&self, name: &str, sys: &bilimor::sysmodel::BilinearSystem) -> Outcome<PathBuf> {
        Ok(bilimor::io::write_bundle_with(&self.path(name), sys, &self.provenance.tags())?)
    }
}

/// JSON number, or `null` for non-finite values.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Cli;
    use clap::Parser;

    fn hash(argv: &[&str]) -> String {
        Provenance::new(&Cli::parse_from(argv).command).unwrap().config_hash
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = hash(&["bilimor", "gen", "toy", "--out", "a"]);
        assert_eq!(a, hash(&["bilimor", "gen", "toy", "--out", "b"]));
        assert_ne!(a, hash(&["bilimor", "gen", "toy", "--seed", "1", "--out", "a"]));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn json_artifacts_carry_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new(&Cli::parse_from(["bilimor", "validate", "--out", "x"]).command).unwrap();
        let out = Artifacts::new(dir.path(), prov.clone()).unwrap();
        out.json("r.json", serde_json::json!({ "z": 1, "a": num(f64::NAN) })).unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(v["config_hash"], prov.config_hash.as_str());
        assert_eq!(v["config"]["subcommand"], "validate");
        assert!(v["a"].is_null());
    }
}
