//! JSON run manifests written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Manifest {
    fields: Map<String, Value>,
    dir: PathBuf,
    outputs: Map<String, Value>,
}

impl Manifest {
    pub fn start(command: &str, dir: &Path) -> Self {
        let mut fields = Map::new();
        fields.insert("tool".into(), json!("stocs"));
        fields.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        fields.insert("command".into(), json!(command));
        fields.insert("argv".into(), json!(std::env::args().collect::<Vec<_>>()));
        fields.insert("started".into(), json!(now()));
        Manifest {
            fields,
            dir: dir.to_path_buf(),
            outputs: Map::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        self.fields.insert(key.into(), value);
        self
    }

    /// Records the model source and the effective rate configuration.
    pub fn inputs(&mut self, model_path: Option<&str>, model_text: &[u8], config_path: Option<&str>, config_json: &str) {
        self.set("model", json!(model_path));
        self.set("model_sha256", json!(sha256(model_text)));
        self.set("config", json!(config_path));
        self.set("config_sha256", json!(sha256(config_json.as_bytes())));
        let parsed: Value = serde_json::from_str(config_json).unwrap_or(Value::Null);
        self.set("rate_config", parsed);
    }

    /// Writes `name` under the output directory and records its hash.
    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.outputs.insert(name.into(), json!(sha256(contents.as_bytes())));
        Ok(path)
    }

    pub fn finish(mut self, name: &str) -> std::io::Result<PathBuf> {
        self.fields.insert("finished".into(), json!(now()));
        self.fields.insert("outputs".into(), Value::Object(self.outputs));
        let path = self.dir.join(name);
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string_pretty(&Value::Object(self.fields)).expect("serializable");
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
