//! A scripted backend for the order-support scenario.
//!
//! Every template has a responder, so a whole run works offline: intents
//! cycle through a fixed list, every procedure is the bundled order
//! procedure, graphs are the bundled samples, and conversations are written
//! mechanically from the sampled path. Outputs depend only on the prompt, so
//! runs are reproducible.

use indexmap::IndexMap;
use serde_json::{json, Value};

use crate::dsl::{parse_graph, GraphKind, NodeType};
use crate::llm::{PromptBundle, ScriptedBackend};
use crate::model::{ApiCall, ApiSpec};
use crate::pipeline::{ProviderKind, ProviderSettings, RunConfig};
use crate::samples::{CONVGRAPH_EXEMPLAR, DIRECT_CONVERSATION_JSON, NOISE_POOL, ORDER_APIS_JSON, ORDER_PROCEDURE, SIMPLE_FLOWGRAPH};

const INTENTS: &[(&str, &str, &str)] = &[
    ("an online shop", "The customer paid for an order two weeks ago and it never arrived.", "order_not_received"),
    ("a furniture retailer", "A delivered table is missing and the tracking page says it was handed over.", "missing_delivery"),
    ("an electronics store", "The customer wants to cancel an order that has not shipped yet.", "cancel_pending_order"),
    ("a grocery delivery app", "Groceries were never delivered but the card was charged.", "charged_not_delivered"),
];

fn var<'a>(bundle: &'a PromptBundle, name: &str) -> &'a str {
    bundle.variables.get(name).map(String::as_str).unwrap_or_default()
}

fn intents(bundle: &PromptBundle) -> String {
    let n: usize = var(bundle, "number_issues").parse().unwrap_or(1);
    let list: Vec<Value> = (0..n)
        .map(|i| {
            let (client, issue, name) = INTENTS[i % INTENTS.len()];
            let round = i / INTENTS.len();
            let name = if round == 0 { name.to_string() } else { format!("{name}_{round}") };
            json!({"client": client, "issue": issue, "name": name})
        })
        .collect();
    serde_json::to_string_pretty(&list).unwrap_or_default()
}

fn procedure(bundle: &PromptBundle) -> String {
    let body = ORDER_PROCEDURE.split_once('\n').map_or(ORDER_PROCEDURE, |(_, rest)| rest);
    format!("# Procedure for: {}\n{body}", var(bundle, "issue"))
}

fn example_value(ty: &str) -> Value {
    let ty = ty.trim().trim_start_matches("Optional[").trim_end_matches(']');
    match ty {
        "int" => json!(812),
        "float" => json!(812.0),
        "bool" => json!(true),
        _ => json!("812"),
    }
}

/// Writes the conversation for the path by turning each node into a
/// message. Api nodes become a call with example arguments followed by an
/// output named after the edge taken next.
fn conversation(bundle: &PromptBundle) -> Option<String> {
    let graph = parse_graph(var(bundle, "conversation_graph"), GraphKind::Conversation).ok()?;
    let apis: Vec<ApiSpec> = serde_json::from_str(var(bundle, "apis")).unwrap_or_default();
    let path: Vec<String> = var(bundle, "path")
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let mut messages = Vec::new();
    for (i, id) in path.iter().enumerate() {
        let node = graph.node(id)?;
        match node.node_type {
            NodeType::User => messages.push(json!({"role": "user", "content": node.description})),
            NodeType::Assistant => messages.push(json!({"role": "assistant", "content": node.description})),
            NodeType::Api => {
                let spec = apis.iter().find(|a| node.description.contains(&a.name))?;
                let args: IndexMap<String, Value> =
                    spec.params.iter().map(|p| (p.name.clone(), example_value(&p.ty))).collect();
                messages.push(json!({"role": "api", "content": ApiCall::new(&spec.name, args).to_string()}));
                let label = path
                    .get(i + 1)
                    .and_then(|next| graph.edge_between(id, next))
                    .map(|e| e.description.clone())
                    .filter(|d| !d.is_empty())
                    .unwrap_or_else(|| "done".into());
                messages.push(json!({"role": "api_output", "content": json!({"result": label}).to_string()}));
            }
            _ => return None,
        }
    }
    serde_json::to_string_pretty(&messages).ok()
}

fn direct(bundle: &PromptBundle) -> String {
    let sample: u64 = var(bundle, "sample").parse().unwrap_or(0);
    DIRECT_CONVERSATION_JSON.replace("812", &(812 + sample).to_string())
}

/// A rule-based agent: calls the lookup API when the customer has just
/// mentioned an order id, asks for one otherwise.
fn agent(bundle: &PromptBundle) -> String {
    let msgs: Vec<Value> = serde_json::from_str(var(bundle, "conversation")).unwrap_or_default();
    let last = msgs.last();
    let role = last.and_then(|m| m["role"].as_str()).unwrap_or_default();
    let content = last.and_then(|m| m["content"].as_str()).unwrap_or_default();
    let number: String = content.chars().filter(char::is_ascii_digit).collect();
    let reply = |m: &str| json!({"type": "reply", "parameters": {"message": m}}).to_string();
    match role {
        "user" if !number.is_empty() || content.to_lowercase().contains("order id") => json!({
            "type": "get_order_details",
            "parameters": {"order_id": number.parse::<u64>().unwrap_or(812)}
        })
        .to_string(),
        "api_output" => reply("Do you want to cancel or refund the order?"),
        _ => reply("Can you give me the order ID?"),
    }
}

fn noise_pool(_: &PromptBundle) -> String {
    let list: Vec<Value> = NOISE_POOL.iter().map(|(k, t)| json!({"kind": k, "text": t})).collect();
    serde_json::to_string_pretty(&list).unwrap_or_default()
}

/// Backend with a responder for every template.
pub fn order_support_backend() -> ScriptedBackend {
    ScriptedBackend::new()
        .with_responder("intent", |b| Some(intents(b)))
        .with_responder("procedure", |b| Some(procedure(b)))
        .with_responder("api_extraction", |_| Some(ORDER_APIS_JSON.to_string()))
        .with_responder("flowgraph", |_| Some(SIMPLE_FLOWGRAPH.to_string()))
        .with_responder("convgraph", |_| Some(CONVGRAPH_EXEMPLAR.to_string()))
        .with_responder("conversation", conversation)
        .with_responder("direct_conversation", |b| Some(direct(b)))
        .with_responder("agent", |b| Some(agent(b)))
        .with_responder("noise_pool", |b| Some(noise_pool(b)))
}

/// A small run over the demo backend: 2 intents, 1 procedure each, 3 paths
/// per graph, seed 7.
pub fn demo_config(run_id: &str) -> RunConfig {
    RunConfig {
        run_id: run_id.to_string(),
        seed: 7,
        provider: ProviderSettings {
            kind: ProviderKind::Demo,
            max_in_flight: 4,
            ..ProviderSettings::default()
        },
        n_intents: 2,
        procedures_per_intent: 1,
        paths_per_graph: 3,
        direct_per_procedure: 2,
        ..RunConfig::default()
    }
}
