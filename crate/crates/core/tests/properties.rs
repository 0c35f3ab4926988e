use indexmap::IndexMap;
use proptest::prelude::*;
use rand::Rng;
use serde_json::{json, Value};

use convtest::augment::{derive_rng, extract_tests, sample_paths, SamplerConfig};
use convtest::dsl::{parse_graph, serialize_graph, validate_conversation_graph, Graph, GraphKind, NodeType};
use convtest::eval::{aggregate_metrics, classify_action, evaluate_test, EvalConfig, TokenF1};
use convtest::generators::{Discard, Stage, StageOutcome};
use convtest::model::{ApiCall, ApiParam, ApiSpec, Conversation, ExpectedAction, Message, Role, TestCase};

fn lookup_api() -> ApiSpec {
    ApiSpec {
        name: "lookup".into(),
        desc: "Look something up".into(),
        params: vec![ApiParam::new("key", "int")],
        output: None,
    }
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9][a-zA-Z0-9 ,.?'!]{0,24}"
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        text().prop_map(Message::user),
        text().prop_map(Message::assistant),
        text().prop_map(Message::api_output),
        (0i64..10_000).prop_map(|k| Message::api(format!("lookup(key={k})")).unwrap()),
    ]
}

/// Role sequences accepted by the conversation rules: user turns answered
/// by the assistant, optionally after one api call and its output.
fn valid_conversation() -> impl Strategy<Value = Vec<Message>> {
    prop::collection::vec((text(), prop::option::of(0i64..1000), text()), 1..6).prop_map(|turns| {
        let mut msgs = Vec::new();
        for (user, call, reply) in turns {
            msgs.push(Message::user(user));
            if let Some(k) = call {
                msgs.push(Message::api(format!("lookup(key={k})")).unwrap());
                msgs.push(Message::api_output(format!("{{\"value\": {k}}}")));
            }
            msgs.push(Message::assistant(reply));
        }
        msgs
    })
}

fn node_type() -> impl Strategy<Value = NodeType> {
    prop::sample::select(vec![
        NodeType::Assistant,
        NodeType::User,
        NodeType::Api,
        NodeType::StartMessage,
        NodeType::Message,
        NodeType::EndMessage,
    ])
}

fn any_graph() -> impl Strategy<Value = Graph> {
    (1usize..10)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((node_type(), "[^\n\r]{0,30}"), n),
                prop::collection::vec((0..n, 0..n, "[^\n\r]{0,20}"), 0..15),
            )
        })
        .prop_map(|(nodes, edges)| {
            let mut g = Graph::new(GraphKind::Conversation);
            for (i, (ty, desc)) in nodes.into_iter().enumerate() {
                g.add_node(format!("N{i}"), ty, desc);
            }
            for (i, (s, t, desc)) in edges.into_iter().enumerate() {
                g.add_edge(format!("E{i}"), format!("N{s}"), format!("N{t}"), desc);
            }
            g
        })
}

/// A random conversation graph that passes validation: assistant nodes
/// branch into user nodes, user nodes go to the assistant directly or via an
/// api node, and the tree stops at assistant leaves.
fn valid_convgraph(seed: u64) -> Graph {
    let mut rng = derive_rng(seed, "convgraph");
    let mut g = Graph::new(GraphKind::Conversation);
    let mut next = 0usize;
    let mut edge = 0usize;
    let mut new_node = |g: &mut Graph, ty: NodeType| {
        let id = format!("N{next}");
        next += 1;
        g.add_node(id.clone(), ty, format!("node {id}"));
        id
    };
    let root = new_node(&mut g, NodeType::Assistant);
    let mut frontier = vec![(root, 0)];
    while let Some((a, depth)) = frontier.pop() {
        if depth >= 3 {
            continue;
        }
        for _ in 0..rng.gen_range(0..3) {
            let u = new_node(&mut g, NodeType::User);
            g.add_edge(format!("E{edge}"), a.clone(), u.clone(), "");
            edge += 1;
            let reply = new_node(&mut g, NodeType::Assistant);
            if rng.gen_bool(0.5) {
                let api = new_node(&mut g, NodeType::Api);
                g.add_edge(format!("E{edge}"), u, api.clone(), "");
                g.add_edge(format!("E{}", edge + 1), api, reply.clone(), "ok");
                edge += 2;
            } else {
                g.add_edge(format!("E{edge}"), u, reply.clone(), "");
                edge += 1;
            }
            frontier.push((reply, depth + 1));
        }
    }
    g
}

fn expected_for(kind: bool, k: i64) -> ExpectedAction {
    if kind {
        ExpectedAction::Reply {
            reply_text: format!("your order {k} is on its way"),
        }
    } else {
        ExpectedAction::ApiCall {
            api_name: "lookup".into(),
            param_bindings: [("key".to_string(), json!(k))].into_iter().collect(),
        }
    }
}

/// Agent outputs of varying quality for one test.
fn agent_output(choice: u8, k: i64) -> String {
    match choice {
        0 => json!({"type": "reply", "parameters": {"message": format!("your order {k} is on its way")}}),
        1 => json!({"type": "reply", "parameters": {"message": "hello there"}}),
        2 => json!({"type": "lookup", "parameters": {"key": k}}),
        3 => json!({"type": "lookup", "parameters": {"key": k + 1}}),
        4 => json!({"type": "cancel", "parameters": {}}),
        _ => Value::String("no idea".into()),
    }
    .to_string()
}

fn test_case(i: usize, expected: ExpectedAction) -> TestCase {
    TestCase {
        id: format!("t{i}"),
        conversation_id: format!("c{}", i / 3),
        step_index: 1,
        context: vec![Message::user("where is my order")],
        expected,
        procedure_text: String::new(),
        apis: vec![lookup_api()],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn message_json_round_trip(m in message()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: Message = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn api_call_surface_round_trip(name in "[a-z][a-z_]{0,10}", k in -1000i64..1000, s in "[a-zA-Z ]{0,10}") {
        let args: IndexMap<String, Value> = [("k".to_string(), json!(k)), ("s".to_string(), json!(s))].into_iter().collect();
        let call = ApiCall::new(&name, args);
        prop_assert_eq!(ApiCall::parse(&call.to_string()).unwrap(), call);
    }

    #[test]
    fn dsl_round_trip(g in any_graph()) {
        let again = parse_graph(&serialize_graph(&g), GraphKind::Conversation).unwrap();
        prop_assert!(g.is_isomorphic(&again));
        prop_assert_eq!(serialize_graph(&again), serialize_graph(&g));
    }

    #[test]
    fn extraction_counts(msgs in valid_conversation()) {
        let users = msgs.iter().filter(|m| m.role == Role::User).count();
        let outputs = msgs.windows(2).filter(|w| w[0].role == Role::ApiOutput && w[1].role == Role::Assistant).count();
        let conv = Conversation {
            id: "c".into(),
            conv_graph_id: None,
            procedure_id: "p".into(),
            path: Vec::new(),
            messages: msgs.clone(),
        };
        let tests = extract_tests(&conv, "p", &[lookup_api()]).unwrap();
        prop_assert_eq!(tests.len(), users + outputs);
        for t in &tests {
            prop_assert_eq!(&t.context[..], &msgs[..t.step_index]);
            prop_assert!(matches!(t.context.last().unwrap().role, Role::User | Role::ApiOutput));
        }
    }

    #[test]
    fn metric_denominators(cases in prop::collection::vec((any::<bool>(), 0u8..6, 0i64..100), 1..30)) {
        let config = EvalConfig::default();
        let apis = vec![lookup_api()];
        let outcomes: Vec<_> = cases
            .iter()
            .enumerate()
            .map(|(i, (kind, choice, k))| {
                let t = test_case(i, expected_for(*kind, *k));
                let a = classify_action(&agent_output(*choice, *k), &apis, false);
                evaluate_test(&t, &a, &config, &TokenF1).unwrap()
            })
            .collect();
        let r = aggregate_metrics(&outcomes).unwrap();
        let replies = cases.iter().filter(|c| c.0).count();
        prop_assert_eq!(r.reply_recall.denominator, replies);
        prop_assert_eq!(r.api_recall.denominator, cases.len() - replies);
        prop_assert_eq!(r.reply_correct.denominator, r.reply_recall.numerator);
        prop_assert_eq!(r.api_correct.denominator, r.api_recall.numerator);
        prop_assert_eq!(r.api_params_correct.denominator, r.api_correct.numerator);
        prop_assert_eq!(r.test_correct.denominator, cases.len());
        prop_assert_eq!(r.test_correct.numerator, r.reply_correct.numerator + r.api_params_correct.numerator);
        for ratio in [r.reply_recall, r.reply_correct, r.api_recall, r.api_correct, r.api_params_correct, r.test_correct, r.conversation_correct] {
            prop_assert_eq!(ratio.value.is_none(), ratio.denominator == 0);
            prop_assert!(ratio.numerator <= ratio.denominator);
        }
    }

    #[test]
    fn fixing_one_answer_never_lowers_scores(
        cases in prop::collection::vec((any::<bool>(), 0u8..6, 0i64..100), 1..20),
        pick in any::<prop::sample::Index>(),
    ) {
        let config = EvalConfig::default();
        let apis = vec![lookup_api()];
        let run = |cases: &[(bool, u8, i64)]| {
            let outcomes: Vec<_> = cases
                .iter()
                .enumerate()
                .map(|(i, (kind, choice, k))| {
                    let t = test_case(i, expected_for(*kind, *k));
                    evaluate_test(&t, &classify_action(&agent_output(*choice, *k), &apis, false), &config, &TokenF1).unwrap()
                })
                .collect();
            aggregate_metrics(&outcomes).unwrap()
        };
        let before = run(&cases);
        let mut fixed = cases.clone();
        let i = pick.index(fixed.len());
        fixed[i].1 = if fixed[i].0 { 0 } else { 2 };
        let after = run(&fixed);
        prop_assert!(after.test_correct.numerator >= before.test_correct.numerator);
        prop_assert!(after.conversation_correct.numerator >= before.conversation_correct.numerator);
        prop_assert!(after.reply_recall.numerator >= before.reply_recall.numerator);
        prop_assert!(after.api_recall.numerator >= before.api_recall.numerator);
    }

    #[test]
    fn sampler_is_deterministic_and_counts_visits(seed in any::<u64>(), paths in 1usize..15) {
        let g = valid_convgraph(seed);
        prop_assert!(validate_conversation_graph(&g).is_clean());
        let config = SamplerConfig { paths, ..SamplerConfig::default() };
        let a = sample_paths(&g, &config, &mut derive_rng(seed, "walk")).unwrap();
        let b = sample_paths(&g, &config, &mut derive_rng(seed, "walk")).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.abandoned, 0);
        prop_assert_eq!(a.walks, paths);
        for id in g.nodes.keys() {
            let visits = a.paths.iter().flatten().filter(|n| *n == id).count() as u64;
            prop_assert_eq!(a.weight(id) - 1, visits);
        }
        for p in &a.paths {
            prop_assert_eq!(p.first().map(String::as_str), Some("N0"));
            prop_assert!(g.is_leaf(p.last().unwrap()));
            for w in p.windows(2) {
                prop_assert!(g.edge_between(&w[0], &w[1]).is_some());
            }
        }
    }

    #[test]
    fn stage_outcomes_stay_conserved(parts in prop::collection::vec(prop::collection::vec(any::<bool>(), 0..10), 0..6)) {
        let mut total = StageOutcome::<usize>::default();
        let (mut kept, mut dropped) = (0, 0);
        for part in parts {
            let mut o = StageOutcome::default();
            for (i, keep) in part.into_iter().enumerate() {
                if keep {
                    o.keep(i);
                    kept += 1;
                } else {
                    o.discard(Discard::new(Stage::Conversations, None, "Test", "dropped", ""));
                    dropped += 1;
                }
            }
            prop_assert!(o.is_conserved());
            total = total.merge(o);
        }
        prop_assert!(total.is_conserved());
        prop_assert_eq!(total.counters.generated, kept + dropped);
        prop_assert_eq!(total.counters.auto_filtered, dropped);
    }
}
