//! Serve prompts from recorded fixtures instead of a live model.

use std::sync::Arc;

use convtest::llm::{render_prompt, GenerationParams, LlmClient, ScriptedBackend};

fn main() -> anyhow::Result<()> {
    let backend = ScriptedBackend::new();
    let vars = [("number_issues", "1"), ("platform", "an online shop")];
    let key = backend.register_for(
        "intent",
        vars,
        r#"[{"client": "an online shop", "issue": "My parcel never arrived.", "name": "parcel_missing"}]"#,
    )?;
    println!("fixture key: {key}");

    let client = LlmClient::new(Arc::new(backend), 2);
    let bundle = render_prompt("intent", vars)?;
    println!("prompt starts with: {:?}", bundle.user.lines().next().unwrap_or_default());
    let completion = client.complete(&bundle, &GenerationParams::default())?;
    println!("completion: {}", completion.text);

    let other = render_prompt("intent", [("number_issues", "2"), ("platform", "an online shop")])?;
    match client.complete(&other, &GenerationParams::default()) {
        Ok(_) => println!("unexpected hit"),
        Err(e) => println!("unrecorded prompt: {e}"),
    }
    Ok(())
}
