use super::AugmentError;
use crate::model::{validate_conversation, ApiSpec, Conversation, ExpectedAction, Message, Role, TestCase};

/// Expected action for the message that follows a cut point, if it is an
/// agent action.
fn expected_from(next: &Message) -> Option<ExpectedAction> {
    match next.role {
        Role::Assistant => Some(ExpectedAction::Reply {
            reply_text: next.content.clone(),
        }),
        Role::Api => next.call.as_ref().map(|c| ExpectedAction::ApiCall {
            api_name: c.name.clone(),
            param_bindings: c.args.clone(),
        }),
        _ => None,
    }
}

/// Slices a conversation into tests.
///
/// A cut is made after every user message and after every api_output
/// message followed by an assistant message. The context is the prefix up
/// to and including the cut message; the expected action is the next
/// message. `step_index` is the position of the expected message.
pub fn extract_tests(
    conversation: &Conversation,
    procedure_text: &str,
    apis: &[ApiSpec],
) -> Result<Vec<TestCase>, AugmentError> {
    let report = validate_conversation(&conversation.messages);
    if !report.is_clean() {
        return Err(AugmentError::MalformedConversation {
            id: conversation.id.clone(),
            rules: report.summary(),
        });
    }
    let msgs = &conversation.messages;
    let mut tests = Vec::new();
    for (i, pair) in msgs.windows(2).enumerate() {
        let cut = match pair[0].role {
            Role::User => true,
            Role::ApiOutput => pair[1].role == Role::Assistant,
            _ => false,
        };
        if !cut {
            continue;
        }
        let Some(expected) = expected_from(&pair[1]) else {
            continue;
        };
        tests.push(TestCase {
            id: format!("{}-t{}", conversation.id, tests.len()),
            conversation_id: conversation.id.clone(),
            step_index: i + 1,
            context: msgs[..=i].to_vec(),
            expected,
            procedure_text: procedure_text.to_string(),
            apis: apis.to_vec(),
        });
    }
    Ok(tests)
}
