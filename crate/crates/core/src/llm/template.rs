use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

struct Template {
    id: &'static str,
    system: &'static str,
    user: &'static str,
}

macro_rules! template {
    ($id:literal) => {
        Template {
            id: $id,
            system: include_str!(concat!("../../templates/", $id, ".system.txt")),
            user: include_str!(concat!("../../templates/", $id, ".user.txt")),
        }
    };
}

static TEMPLATES: &[Template] = &[
    template!("intent"),
    template!("procedure"),
    template!("api_extraction"),
    template!("flowgraph"),
    template!("convgraph"),
    template!("conversation"),
    template!("direct_conversation"),
    template!("agent"),
    template!("noise_pool"),
];

/// Ids of every bundled template.
pub fn template_ids() -> impl Iterator<Item = &'static str> {
    TEMPLATES.iter().map(|t| t.id)
}

fn lookup(id: &str) -> Result<&'static Template, LlmError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| LlmError::UnknownTemplate(id.to_string()))
}

/// sha256 over the system and user text of a template, hex encoded.
pub fn template_checksum(id: &str) -> Result<String, LlmError> {
    let t = lookup(id)?;
    let mut h = Sha256::new();
    h.update(t.system.as_bytes());
    h.update([0u8]);
    h.update(t.user.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap())
}

/// A rendered system + user prompt pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_id: String,
    pub system: String,
    pub user: String,
    /// Every variable passed in, including ones the template does not use.
    /// They all take part in the fixture key.
    pub variables: BTreeMap<String, String>,
}

/// Key under which a scripted completion is stored: the template id plus a
/// hash of the variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FixtureKey {
    pub template_id: String,
    pub vars_hash: String,
}

impl FixtureKey {
    pub fn new(template_id: impl Into<String>, variables: &BTreeMap<String, String>) -> Self {
        Self {
            template_id: template_id.into(),
            vars_hash: hash_vars(variables),
        }
    }
}

impl std::fmt::Display for FixtureKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.template_id, self.vars_hash)
    }
}

/// First 16 hex chars of sha256 over the sorted variables.
pub fn hash_vars(variables: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in variables {
        h.update((k.len() as u64).to_le_bytes());
        h.update(k.as_bytes());
        h.update((v.len() as u64).to_le_bytes());
        h.update(v.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl PromptBundle {
    pub fn fixture_key(&self) -> FixtureKey {
        FixtureKey::new(self.template_id.clone(), &self.variables)
    }
}

fn fill(template_id: &str, text: &str, vars: &BTreeMap<String, String>) -> Result<String, LlmError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in placeholder().captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let name = &caps[1];
        let value = vars.get(name).ok_or_else(|| LlmError::MissingVariable {
            template: template_id.to_string(),
            variable: name.to_string(),
        })?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Renders a bundled template. Substituted values are inserted verbatim and
/// never re-scanned for placeholders.
pub fn render_prompt<K, V>(template_id: &str, variables: impl IntoIterator<Item = (K, V)>) -> Result<PromptBundle, LlmError>
where
    K: Into<String>,
    V: Into<String>,
{
    let t = lookup(template_id)?;
    let variables: BTreeMap<String, String> = variables.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
    Ok(PromptBundle {
        template_id: t.id.to_string(),
        system: fill(t.id, t.system, &variables)?,
        user: fill(t.id, t.user, &variables)?,
        variables,
    })
}
