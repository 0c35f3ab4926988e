//! Surface syntax of API call messages, e.g. `get_order_details(order_id=812)`.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ModelError;

/// A parsed API invocation: the function name plus its named arguments in
/// the order they were written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCall {
    pub name: String,
    #[serde(default)]
    pub args: IndexMap<String, Value>,
}

impl ApiCall {
    pub fn new(name: impl Into<String>, args: IndexMap<String, Value>) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }

    /// Parses `name(key=value, ...)`. Values are read as JSON literals when
    /// possible, then as Python-style literals (`'text'`, `True`, `None`),
    /// and otherwise kept as bare strings.
    pub fn parse(surface: &str) -> Result<Self, ModelError> {
        let bad = |why: &str| ModelError::BadCall {
            surface: surface.to_string(),
            reason: why.to_string(),
        };
        let text = surface.trim().trim_end_matches(';').trim_end();
        let open = text.find('(').ok_or_else(|| bad("missing '('"))?;
        if !text.ends_with(')') {
            return Err(bad("missing closing ')'"));
        }
        let name = text[..open].trim();
        if !is_identifier(name) {
            return Err(bad("function name is not an identifier"));
        }
        let inner = &text[open + 1..text.len() - 1];
        let mut args = IndexMap::new();
        for piece in split_top_level(inner, ',').map_err(|e| bad(e))? {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let eq = find_top_level(piece, '=').ok_or_else(|| bad("positional arguments are not supported"))?;
            let key = piece[..eq].trim();
            if !is_identifier(key) {
                return Err(bad("argument name is not an identifier"));
            }
            let value = parse_literal(piece[eq + 1..].trim());
            if args.insert(key.to_string(), value).is_some() {
                return Err(bad("duplicate argument"));
            }
        }
        Ok(Self {
            name: name.to_string(),
            args,
        })
    }
}

impl fmt::Display for ApiCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Reads a literal argument value.
pub fn parse_literal(raw: &str) -> Value {
    if raw.is_empty() {
        return Value::String(String::new());
    }
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    match raw {
        "True" => return Value::Bool(true),
        "False" => return Value::Bool(false),
        "None" => return Value::Null,
        _ => {}
    }
    if raw.len() >= 2 && raw.starts_with('\'') && raw.ends_with('\'') {
        return Value::String(raw[1..raw.len() - 1].replace("\\'", "'"));
    }
    Value::String(raw.to_string())
}

// Split on `sep` outside of quotes and brackets.
fn split_top_level(s: &str, sep: char) -> Result<Vec<&str>, &'static str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '[' | '{' | '(' => depth += 1,
            ']' | '}' | ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced brackets");
                }
            }
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if quote.is_some() {
        return Err("unterminated string");
    }
    if depth != 0 {
        return Err("unbalanced brackets");
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn find_top_level(s: &str, target: char) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == target => return Some(i),
            None => {}
        }
    }
    None
}
