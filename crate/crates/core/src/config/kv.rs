//! Flat key-value config format.
//!
//! Config files are plain text with one `dotted.key = value` pair per line.
//! `#` starts a comment (full line or trailing). Values are typed:
//!
//! * booleans: `true` / `false`
//! * integers: `42`, `-3`
//! * floats: `8.5e3`, `0.25`, `1e-9`
//! * strings: bare identifiers (`mram`, `sigmoid`) or `"quoted text"`
//! * arrays: `[400, 120, 84, 10]`, nested arrays allowed (`[[2,1],[1,1]]`)
//!
//! The same value grammar is used for `--set key=value` overrides and for
//! sweep grid files, so anything writable in a config file is sweepable.

use std::collections::BTreeMap;
use std::fmt;

use super::ConfigError;

/// A parsed config value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Value>),
}

impl Value {
    /// Numeric view: integers widen to f64.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Value]> {
        match self {
            Value::Array(v) => Some(v),
            _ => None,
        }
    }

    /// Human-readable type name for error messages.
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Array(_) => "array",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Array(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// An ordered map of dotted keys to values, as read from a config file plus
/// any later overrides. Keys are unique; a later `set` replaces.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, Value>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse a whole config file.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut map = Self::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value_text) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !is_valid_key(key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("invalid key `{key}`"),
                });
            }
            if map.entries.contains_key(key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let value = parse_value(value_text.trim()).map_err(|message| ConfigError::Parse {
                line: line_no,
                message: format!("key `{key}`: {message}"),
            })?;
            map.entries.insert(key.to_string(), value);
        }
        Ok(map)
    }

    /// Apply one `key=value` override (the `--set` grammar).
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value_text) = pair.split_once('=').ok_or_else(|| ConfigError::BadOverride {
            pair: pair.to_string(),
            message: "expected `key=value`".into(),
        })?;
        let key = key.trim();
        if !is_valid_key(key) {
            return Err(ConfigError::BadOverride {
                pair: pair.to_string(),
                message: format!("invalid key `{key}`"),
            });
        }
        let value = parse_value(value_text.trim()).map_err(|message| ConfigError::BadOverride {
            pair: pair.to_string(),
            message,
        })?;
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merge `other` on top of `self` (other wins on conflicts).
    pub fn overlaid_with(&self, other: &KvMap) -> KvMap {
        let mut merged = self.clone();
        for (k, v) in other.iter() {
            merged.set(k, v.clone());
        }
        merged
    }
}

fn is_valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
        && !key.starts_with('.')
        && !key.ends_with('.')
}

/// Drop a trailing `#` comment, respecting double quotes.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parse one value. Errors are plain messages; the caller attaches context.
pub fn parse_value(text: &str) -> Result<Value, String> {
    let (value, rest) = parse_value_prefix(text)?;
    if !rest.trim().is_empty() {
        return Err(format!("trailing input after value: `{}`", rest.trim()));
    }
    Ok(value)
}

/// Parse a value at the head of `text`, returning the remainder.
fn parse_value_prefix(text: &str) -> Result<(Value, &str), String> {
    let text = text.trim_start();
    if text.is_empty() {
        return Err("empty value".into());
    }
    if let Some(rest) = text.strip_prefix('[') {
        return parse_array(rest);
    }
    if let Some(rest) = text.strip_prefix('"') {
        let end = rest.find('"').ok_or("unterminated string")?;
        return Ok((Value::Str(rest[..end].to_string()), &rest[end + 1..]));
    }
    // Bare token: up to a delimiter.
    let end = text
        .find(|c| c == ',' || c == ']' || c == ' ' || c == '\t')
        .unwrap_or(text.len());
    let token = &text[..end];
    let rest = &text[end..];
    Ok((parse_scalar(token)?, rest))
}

fn parse_array(mut rest: &str) -> Result<(Value, &str), String> {
    let mut items = Vec::new();
    loop {
        rest = rest.trim_start();
        if let Some(after) = rest.strip_prefix(']') {
            return Ok((Value::Array(items), after));
        }
        if rest.is_empty() {
            return Err("unterminated array".into());
        }
        let (item, after) = parse_value_prefix(rest)?;
        items.push(item);
        rest = after.trim_start();
        if let Some(after) = rest.strip_prefix(',') {
            rest = after;
        } else if !rest.starts_with(']') {
            return Err("expected `,` or `]` in array".into());
        }
    }
}

fn parse_scalar(token: &str) -> Result<Value, String> {
    match token {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    // Integer first so `42` stays an int; anything with `.`, `e`, `E`
    // falls through to float.
    if let Ok(i) = token.parse::<i64>() {
        return Ok(Value::Int(i));
    }
    if let Ok(f) = token.parse::<f64>() {
        if f.is_finite() {
            return Ok(Value::Float(f));
        }
        return Err(format!("non-finite number `{token}`"));
    }
    if token
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' || c == '/')
    {
        return Ok(Value::Str(token.to_string()));
    }
    Err(format!("cannot parse value `{token}`"))
}
