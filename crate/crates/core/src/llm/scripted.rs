use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::RwLock;

use super::{Backend, Completion, FixtureKey, GenerationParams, LlmError, PromptBundle};

/// Computes a completion from the rendered prompt. Returning `None` means
/// the responder has nothing for this prompt.
pub type Responder = Box<dyn Fn(&PromptBundle) -> Option<String> + Send + Sync>;

/// Deterministic backend for tests and offline runs.
///
/// Lookups try an exact fixture for `(template_id, hash(vars))` first, then
/// the responder registered for the template. Anything else is a
/// [`LlmError::FixtureMiss`].
#[derive(Default)]
pub struct ScriptedBackend {
    fixtures: RwLock<HashMap<FixtureKey, String>>,
    responders: HashMap<String, Responder>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.fixtures.read().map(|m| m.len()).unwrap_or(0);
        f.debug_struct("ScriptedBackend")
            .field("fixtures", &n)
            .field("responders", &self.responders.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_fixture(&self, key: FixtureKey, text: impl Into<String>) -> Result<(), LlmError> {
        let mut map = self.fixtures.write().unwrap_or_else(|e| e.into_inner());
        if map.contains_key(&key) {
            return Err(LlmError::DuplicateKey(key));
        }
        map.insert(key, text.into());
        Ok(())
    }

    /// Registers a fixture for the prompt that `template_id` renders to with
    /// these variables.
    pub fn register_for<K, V>(
        &self,
        template_id: &str,
        variables: impl IntoIterator<Item = (K, V)>,
        text: impl Into<String>,
    ) -> Result<FixtureKey, LlmError>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let vars: BTreeMap<String, String> = variables.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        let key = FixtureKey::new(template_id, &vars);
        self.register_fixture(key.clone(), text)?;
        Ok(key)
    }

    pub fn with_responder(
        mut self,
        template_id: impl Into<String>,
        f: impl Fn(&PromptBundle) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responders.insert(template_id.into(), Box::new(f));
        self
    }

    /// Loads `<dir>/<template_id>/<vars_hash>.txt` files.
    pub fn load_dir(&self, dir: &Path) -> Result<usize, LlmError> {
        let mut n = 0;
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let template_id = entry.file_name().to_string_lossy().into_owned();
            for file in std::fs::read_dir(entry.path())? {
                let path = file?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let key = FixtureKey {
                    template_id: template_id.clone(),
                    vars_hash: stem.to_string(),
                };
                self.register_fixture(key, std::fs::read_to_string(&path)?)?;
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn len(&self) -> usize {
        self.fixtures.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, bundle: &PromptBundle, _params: &GenerationParams) -> Result<Completion, LlmError> {
        let key = bundle.fixture_key();
        let hit = self
            .fixtures
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&key)
            .cloned();
        let text = match hit {
            Some(t) => t,
            None => self
                .responders
                .get(&bundle.template_id)
                .and_then(|f| f(bundle))
                .ok_or(LlmError::FixtureMiss(key))?,
        };
        Ok(Completion {
            text,
            provider_meta: BTreeMap::from([("backend".to_string(), "scripted".into())]),
            latency_ms: 0,
        })
    }
}
