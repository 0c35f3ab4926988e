//! Lenient JSON extraction for model output.

use serde_json::Value;

/// Pulls a JSON value out of completion text.
///
/// Handles the usual ways model output deviates from plain JSON: code
/// fences, prose around the payload, and trailing commas before `]` or `}`.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let body = strip_fences(text.trim());
    if let Ok(v) = serde_json::from_str(body) {
        return Ok(v);
    }
    let start = body.find(['[', '{']).ok_or("no JSON array or object in text")?;
    let close = if body.as_bytes()[start] == b'[' { ']' } else { '}' };
    let end = body.rfind(close).filter(|&e| e > start).ok_or("unterminated JSON value")?;
    let slice = &body[start..=end];
    let cleaned = remove_trailing_commas(slice);
    serde_json::from_str(&cleaned).map_err(|e| e.to_string())
}

fn strip_fences(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    // drop the language tag line
    let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or("");
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Removes commas that directly precede a closing bracket, ignoring string
/// contents.
pub fn remove_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some(']') | Some('}')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}
