use std::collections::BTreeMap;
use std::hash::Hasher;

use convlab::converse::{CHAIN_TOL, DEGRADING_TOL, DUALITY_TOL};
use convlab::sdp::DEFAULT_TOL;
use fnv::FnvHasher;
use serde_json::{json, Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

/// Provenance attached to every emitted record.
#[derive(Debug, Clone)]
pub struct Meta {
    pub seed: u64,
    pub tolerances: BTreeMap<&'static str, f64>,
    pub inputs: BTreeMap<String, String>,
}

impl Meta {
    /// `argv` excludes the program name; it is hashed NUL-separated.
    pub fn new(seed: u64, argv: &[String]) -> Self {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("sdp", DEFAULT_TOL);
        tolerances.insert("chain", CHAIN_TOL);
        tolerances.insert("duality", DUALITY_TOL);
        tolerances.insert("degrading", DEGRADING_TOL);
        let mut inputs = BTreeMap::new();
        inputs.insert("argv".to_string(), fnv1a64(argv.join("\0").as_bytes()));
        Meta { seed, tolerances, inputs }
    }

    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), fnv1a64(bytes));
    }

    pub fn value(&self) -> Value {
        json!({
            "version": VERSION,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "inputs": self.inputs,
        })
    }
}

/// One JSON object per line, with `meta` merged in.
pub fn record(meta: &Meta, body: Value) -> String {
    let mut map = match body {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    map.insert("meta".into(), meta.value());
    Value::Object(map).to_string()
}

/// `v` with 9 significant digits, without exponent for the magnitudes the
/// region curve produces.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let prec = (8 - exp).max(0) as usize;
    format!("{v:.prec$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a64(b"foobar"), "85944171f73967e8");
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.75f64.sqrt()), "0.866025404");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.0141067), "0.0141067000");
    }
}
