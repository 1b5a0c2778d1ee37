//! JSON-lines records tagged with a run identifier.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Stable 16-hex-digit identifier (FNV-1a 64) of the inputs that define a run.
pub fn run_id(parts: &[&[u8]]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.iter().chain(std::iter::once(&0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Writes one JSON object per line, each starting with `run_id` and `record`.
pub struct JsonLines<W: Write> {
    run_id: String,
    writer: W,
}

impl<W: Write> JsonLines<W> {
    pub fn new(run_id: impl Into<String>, writer: W) -> Self {
        Self {
            run_id: run_id.into(),
            writer,
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    /// `payload` must serialize to an object; its fields follow the tags.
    pub fn emit<T: Serialize>(&mut self, record: &str, payload: &T) -> Result<()> {
        let value = serde_json::to_value(payload).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let Value::Object(fields) = value else {
            return Err(Error::InvalidInput(format!("{record} payload is not an object")));
        };
        let mut obj = Map::new();
        obj.insert("run_id".into(), Value::String(self.run_id.clone()));
        obj.insert("record".into(), Value::String(record.into()));
        for (k, v) in fields {
            obj.insert(k, v);
        }
        serde_json::to_writer(&mut self.writer, &Value::Object(obj)).map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        iteration: usize,
        residual: f64,
    }

    #[test]
    fn lines_are_tagged_objects() {
        let mut log = JsonLines::new("abc", Vec::new());
        log.emit(
            "iteration",
            &Row {
                iteration: 1,
                residual: 0.5,
            },
        )
        .unwrap();
        log.emit(
            "iteration",
            &Row {
                iteration: 2,
                residual: 0.25,
            },
        )
        .unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            r#"{"run_id":"abc","record":"iteration","iteration":1,"residual":0.5}"#
        );
    }

    #[test]
    fn non_object_payload_is_rejected() {
        let mut log = JsonLines::new("abc", Vec::new());
        assert!(log.emit("x", &3.0).is_err());
    }

    #[test]
    fn run_id_is_stable_and_separates_parts() {
        assert_eq!(run_id(&[b"a", b"b"]), run_id(&[b"a", b"b"]));
        assert_ne!(run_id(&[b"ab", b""]), run_id(&[b"a", b"b"]));
        assert_eq!(run_id(&[]).len(), 16);
    }
}
