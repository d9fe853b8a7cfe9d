//! Minimal JSON Schema checker covering the keywords used in `docs/`:
//! type, required, properties, additionalProperties, items, enum, minimum,
//! maximum.

use serde_json::Value;

pub fn validate(schema: &Value, doc: &Value) -> Result<(), String> {
    check(schema, doc, "$")
}

fn check(schema: &Value, doc: &Value, at: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        let ok = match t {
            "object" => doc.is_object(),
            "array" => doc.is_array(),
            "string" => doc.is_string(),
            "number" => doc.is_number(),
            "integer" => doc.is_u64() || doc.is_i64(),
            "boolean" => doc.is_boolean(),
            other => return Err(format!("{at}: unsupported schema type {other}")),
        };
        if !ok {
            return Err(format!("{at}: expected {t}, found {doc}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(doc) {
            return Err(format!("{at}: {doc} not in {options:?}"));
        }
    }
    if let Some(x) = doc.as_f64() {
        if let Some(lo) = schema.get("minimum").and_then(Value::as_f64) {
            if x < lo {
                return Err(format!("{at}: {x} below {lo}"));
            }
        }
        if let Some(hi) = schema.get("maximum").and_then(Value::as_f64) {
            if x > hi {
                return Err(format!("{at}: {x} above {hi}"));
            }
        }
    }
    if let Some(obj) = doc.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{at}: missing `{key}`"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, value) in obj {
            let path = format!("{at}.{key}");
            match (props.and_then(|p| p.get(key)), schema.get("additionalProperties")) {
                (Some(sub), _) => check(sub, value, &path)?,
                (None, Some(Value::Bool(false))) => return Err(format!("{path}: not allowed")),
                (None, Some(sub)) if sub.is_object() => check(sub, value, &path)?,
                _ => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), doc.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            check(items, v, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

pub fn load(name: &str) -> Value {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}
