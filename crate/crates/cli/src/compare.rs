use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA: &str = "horolab-golden/1";
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenField {
    pub value: Value,
    /// Relative tolerance for numbers, scaled by `max(1, |golden|)`.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Golden {
    pub schema: String,
    pub experiment: String,
    pub fields: BTreeMap<String, GoldenField>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Value { path: String, expected: Value, actual: Value, tol: f64 },
    Missing { path: String },
    Type { path: String, expected: Value, actual: Value },
}

/// Leaves of a JSON tree keyed by dotted paths; array indices are path segments.
pub fn flatten(v: &Value) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(&join(k), x, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(&join(&i.to_string()), x, out)),
            leaf => {
                out.insert(prefix.to_string(), leaf.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", v, &mut out);
    out
}

/// Golden file built from a results payload; series are left out.
pub fn bless(results: &Value, tol: f64) -> Golden {
    let experiment = results["experiment"].as_str().unwrap_or_default().to_string();
    let fields = flatten(results)
        .into_iter()
        .filter(|(k, _)| !k.starts_with("series."))
        .map(|(k, value)| (k, GoldenField { value, tol }))
        .collect();
    Golden { schema: SCHEMA.into(), experiment, fields }
}

pub fn parse_golden(v: Value) -> Result<Golden, CliError> {
    let schema = v.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
    if schema != SCHEMA {
        return Err(CliError::Usage(format!("incompatible baseline: schema {schema:?}, expected {SCHEMA:?}")));
    }
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("incompatible baseline: {e}")))
}

pub fn compare(results: &Value, golden: &Golden) -> Vec<Drift> {
    let flat = flatten(results);
    let mut drifts = Vec::new();
    for (path, field) in &golden.fields {
        let Some(actual) = flat.get(path) else {
            drifts.push(Drift::Missing { path: path.clone() });
            continue;
        };
        let expected = &field.value;
        let drift = match (expected, actual) {
            (Value::Number(e), Value::Number(a)) => {
                let (e, a) = (e.as_f64().unwrap_or(f64::NAN), a.as_f64().unwrap_or(f64::NAN));
                !((a - e).abs() <= field.tol * e.abs().max(1.0))
            }
            (e, a) if std::mem::discriminant(e) == std::mem::discriminant(a) => e != a,
            _ => {
                drifts.push(Drift::Type { path: path.clone(), expected: expected.clone(), actual: actual.clone() });
                continue;
            }
        };
        if drift {
            drifts.push(Drift::Value { path: path.clone(), expected: expected.clone(), actual: actual.clone(), tol: field.tol });
        }
    }
    drifts
}
