//! Report envelope shared by every subcommand.

use std::path::Path;
use std::time::Instant;

use cutchoose::engine::Outcome;
use cutchoose::rational::fmt_rational;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::{Fail, Res};

pub struct Report {
    command: &'static str,
    inputs: Map<String, Value>,
    body: Map<String, Value>,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Report { command, inputs: Map::new(), body: Map::new() }
    }

    /// Records an input file by name and content hash.
    pub fn input(&mut self, role: &str, path: &Path) -> Res<()> {
        let bytes = std::fs::read(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(role.into(), json!({"path": path.display().to_string(), "sha256": digest}));
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.body.insert(key.into(), value);
    }

    pub fn finish(mut self, started: Instant) -> String {
        self.body.insert("command".into(), json!(self.command));
        self.body.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        self.body.insert("inputs".into(), Value::Object(self.inputs));
        self.body.insert("wall_time_ms".into(), json!(started.elapsed().as_millis() as u64));
        serde_json::to_string_pretty(&Value::Object(self.body)).unwrap() + "\n"
    }
}

pub fn outcome_json(o: &Outcome) -> Value {
    let allocation: Vec<Value> = o
        .allocation
        .iter()
        .map(|p| Value::Array(p.intervals().iter().map(|iv| json!([fmt_rational(iv.lo()), fmt_rational(iv.hi())])).collect()))
        .collect();
    json!({
        "allocation": allocation,
        "utilities": o.utilities.iter().map(fmt_rational).collect::<Vec<_>>(),
    })
}
