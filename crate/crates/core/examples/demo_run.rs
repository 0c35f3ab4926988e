//! Run the whole pipeline offline with the bundled order-support backend.
//!
//! `cargo run --example demo_run -- runs` keeps the artifacts under `runs/`;
//! without an argument they go to a temporary directory.

use std::sync::Arc;

use convtest::demo::{demo_config, order_support_backend};
use convtest::llm::LlmClient;
use convtest::model::TestCase;
use convtest::pipeline::{run_pipeline, ArtifactStore};

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let client = LlmClient::new(Arc::new(order_support_backend()), 4);
    let stats = run_pipeline(&root, demo_config("demo"), client)?;
    println!("{}", stats.render());

    let store = ArtifactStore::open(&root, "demo")?;
    let tests: Vec<TestCase> = store.read_jsonl("tests.jsonl")?;
    println!("{} tests written to {}", tests.len(), store.dir().display());
    if let Some(t) = tests.iter().find(|t| !t.expected.is_reply()) {
        println!("\nfirst api test {}:", t.id);
        for m in &t.context {
            println!("  [{}] {}", m.role, m.content);
        }
        println!("  expected {}", serde_json::to_string(&t.expected)?);
    }
    Ok(())
}
