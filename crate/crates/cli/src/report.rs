//! Run reports and their byte-stable JSON encoding.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;
use sha2::{Digest, Sha256};

use modfisher::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub model_digest: String,
    pub inputs: Value,
    pub outputs: Value,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// Compact JSON with every float written to 17 significant digits.
struct FloatFormatter;

impl Formatter for FloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FloatFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// SHA-256 of the model's canonical JSON encoding.
pub fn model_digest(m: &ModelSpec) -> String {
    let json = to_json(m).expect("model serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(to_json(&25.0f64).unwrap(), "2.5000000000000000e1");
        assert_eq!(to_json(&vec![0.1f64]).unwrap(), "[1.0000000000000001e-1]");
        assert_eq!(to_json(&f64::NAN).unwrap(), "null");
    }

    #[test]
    fn report_round_trips() {
        let report = RunReport {
            command: "bound".into(),
            model_digest: model_digest(&ModelSpec::two_atom()),
            inputs: serde_json::json!({ "alpha": 0.1 + 0.2 }),
            outputs: serde_json::json!({ "value": std::f64::consts::PI / 3.0, "tiny": 5e-324 }),
            tolerances: BTreeMap::from([("tol".to_string(), 1e-9)]),
            checks: BTreeMap::from([("ok".to_string(), true)]),
            passed: true,
            wall_time_seconds: None,
        };
        let text = to_json(&report).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(to_json(&back).unwrap(), text);
    }

    #[test]
    fn digest_is_stable() {
        let a = model_digest(&ModelSpec::two_atom());
        assert_eq!(a, model_digest(&ModelSpec::two_atom()));
        assert_ne!(a, model_digest(&ModelSpec::tracial(1.0)));
        assert_eq!(a.len(), 64);
    }
}
