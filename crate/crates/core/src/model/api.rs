use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ModelError;

/// A named, typed slot. Types use Python-style notation (`int`,
/// `list[dict[str, str]]`, `Optional[str]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParam {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl ApiParam {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }

    pub fn is_optional(&self) -> bool {
        self.ty.trim_start().starts_with("Optional[")
    }
}

/// An agent-side API extracted from a procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    #[serde(default)]
    pub desc: String,
    #[serde(default)]
    pub params: Vec<ApiParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<ApiParam>,
}

impl ApiSpec {
    pub fn param(&self, name: &str) -> Option<&ApiParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ApiParam> {
        self.params.iter().filter(|p| !p.is_optional())
    }
}

fn snake_case() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z][a-z0-9_]*$").unwrap())
}

pub fn is_snake_case(name: &str) -> bool {
    snake_case().is_match(name)
}

const DEFAULT_PARAM_TYPE: &str = "str";

/// Validates one API record and normalizes it to [`ApiSpec`].
///
/// Params may arrive as `{"name": .., "type": ..}` objects, as single-key
/// `{"order_id": "int"}` maps, or as bare name strings. A missing type
/// defaults to `str` with a warning. The output may be a `{name, type}`
/// object or a bare type string.
pub fn validate_api_spec(raw: &Value) -> Result<ApiSpec, ModelError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| ModelError::MalformedApiJson("API record is not an object".into()))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| ModelError::MalformedApiJson("API record has no string \"name\"".into()))?
        .trim();
    if !is_snake_case(name) {
        return Err(ModelError::BadName(name.to_string()));
    }
    let desc = match obj.get("desc").or_else(|| obj.get("description")) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };

    let params = match obj.get("params").or_else(|| obj.get("parameters")) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| parse_param(name, item))
            .collect::<Result<Vec<_>, _>>()?,
        // {"order_id": "int", "email": "str"}
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| param_from_pair(name, k, v))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => {
            return Err(ModelError::MalformedApiJson(format!(
                "params of {name} is neither a list nor an object"
            )))
        }
    };
    let mut seen = HashSet::new();
    for p in &params {
        if !seen.insert(p.name.as_str()) {
            return Err(ModelError::DuplicateParam {
                api: name.to_string(),
                param: p.name.clone(),
            });
        }
    }

    let output = match obj.get("output") {
        None | Some(Value::Null) => None,
        Some(Value::String(ty)) => {
            if ty.trim().is_empty() {
                return Err(ModelError::EmptyParamType {
                    api: name.to_string(),
                    param: "output".into(),
                });
            }
            Some(ApiParam::new("output", ty.trim()))
        }
        Some(Value::Object(map)) => Some(parse_object_param(name, map, "output")?),
        Some(_) => {
            return Err(ModelError::MalformedApiJson(format!(
                "output of {name} is neither a string nor an object"
            )))
        }
    };

    Ok(ApiSpec {
        name: name.to_string(),
        desc,
        params,
        output,
    })
}

fn parse_param(api: &str, item: &Value) -> Result<ApiParam, ModelError> {
    match item {
        Value::String(s) if !s.trim().is_empty() => {
            tracing::warn!(api, param = s.as_str(), "parameter without type, defaulting to str");
            Ok(ApiParam::new(s.trim(), DEFAULT_PARAM_TYPE))
        }
        Value::Object(map) => parse_object_param(api, map, "param"),
        _ => Err(ModelError::MalformedApiJson(format!(
            "parameter of {api} is not an object"
        ))),
    }
}

fn parse_object_param(api: &str, map: &Map<String, Value>, what: &str) -> Result<ApiParam, ModelError> {
    if let Some(Value::String(pname)) = map.get("name") {
        let ty = match map.get("type") {
            None | Some(Value::Null) => {
                tracing::warn!(api, param = pname.as_str(), "parameter without type, defaulting to str");
                DEFAULT_PARAM_TYPE.to_string()
            }
            Some(Value::String(t)) => t.trim().to_string(),
            Some(other) => other.to_string(),
        };
        if ty.is_empty() {
            return Err(ModelError::EmptyParamType {
                api: api.to_string(),
                param: pname.clone(),
            });
        }
        return Ok(ApiParam::new(pname.trim(), ty));
    }
    if map.len() == 1 {
        let (k, v) = map.iter().next().unwrap();
        return param_from_pair(api, k, v);
    }
    Err(ModelError::MalformedApiJson(format!(
        "{what} of {api} has neither a \"name\" field nor a single name: type pair"
    )))
}

fn param_from_pair(api: &str, name: &str, ty: &Value) -> Result<ApiParam, ModelError> {
    let ty = match ty {
        Value::String(t) => t.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    if ty.is_empty() {
        return Err(ModelError::EmptyParamType {
            api: api.to_string(),
            param: name.to_string(),
        });
    }
    Ok(ApiParam::new(name.trim(), ty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn conversation_prompt_shape() {
        let raw = json!({
            "name": "get_order_details",
            "params": [{"order_id": "int"}],
            "output": {"name": "sent_status", "type": "list[dict[str, str]]"}
        });
        let spec = validate_api_spec(&raw).unwrap();
        assert_eq!(spec.name, "get_order_details");
        assert_eq!(spec.params, vec![ApiParam::new("order_id", "int")]);
        assert_eq!(spec.output.unwrap().ty, "list[dict[str, str]]");
    }

    #[test]
    fn extraction_schema_shape_defaults_type() {
        let raw = json!({"name": "cancel_order", "desc": "Cancel", "params": [{"name": "order_id"}],
                         "output": {"name": "ok", "type": "bool"}});
        let spec = validate_api_spec(&raw).unwrap();
        assert_eq!(spec.params, vec![ApiParam::new("order_id", "str")]);
        assert_eq!(spec.desc, "Cancel");
    }

    #[test]
    fn output_as_bare_type() {
        let raw = json!({"name": "get_order_details", "params": [{"order_id": "int"}], "output": "bool"});
        assert_eq!(validate_api_spec(&raw).unwrap().output.unwrap().ty, "bool");
    }

    #[test]
    fn bad_name() {
        assert!(matches!(
            validate_api_spec(&json!({"name": "GetOrder"})),
            Err(ModelError::BadName(_))
        ));
        assert!(matches!(
            validate_api_spec(&json!({"name": "get-order"})),
            Err(ModelError::BadName(_))
        ));
    }

    #[test]
    fn malformed() {
        assert!(matches!(
            validate_api_spec(&json!({"apis": "oops"})),
            Err(ModelError::MalformedApiJson(_))
        ));
        assert!(matches!(
            validate_api_spec(&json!("get_order")),
            Err(ModelError::MalformedApiJson(_))
        ));
    }

    #[test]
    fn empty_param_type() {
        let raw = json!({"name": "f", "params": [{"order_id": ""}]});
        assert!(matches!(validate_api_spec(&raw), Err(ModelError::EmptyParamType { .. })));
        let raw = json!({"name": "f", "params": [{"name": "x", "type": "  "}]});
        assert!(matches!(validate_api_spec(&raw), Err(ModelError::EmptyParamType { .. })));
    }

    #[test]
    fn duplicate_param() {
        let raw = json!({"name": "f", "params": [{"a": "int"}, {"name": "a", "type": "str"}]});
        assert!(matches!(validate_api_spec(&raw), Err(ModelError::DuplicateParam { .. })));
    }

    #[test]
    fn optional_params_are_not_required() {
        let raw = json!({"name": "f", "params": [{"a": "int"}, {"b": "Optional[str]"}]});
        let spec = validate_api_spec(&raw).unwrap();
        let required: Vec<_> = spec.required_params().map(|p| p.name.as_str()).collect();
        assert_eq!(required, ["a"]);
    }
}
