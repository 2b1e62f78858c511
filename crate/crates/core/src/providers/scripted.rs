//! Deterministic providers for tests and offline runs.

use std::sync::Mutex;

use super::{
    last_user_message, validate_messages, ChatMessage, ChatProvider, ChatSettings, ProviderError,
    ProviderResponse, Role,
};

/// A condition a scripted entry places on the prompt it answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// The last user message contains the text.
    Contains(String),
    /// The last user message does not contain the text.
    Absent(String),
    /// The last user message contains the text exactly `n` times.
    Count(String, usize),
    /// Some message of the conversation (any role) contains the text.
    AnyMessageContains(String),
    /// No message of the conversation contains the text.
    NoMessageContains(String),
}

impl Expectation {
    fn check(&self, messages: &[ChatMessage]) -> Result<(), String> {
        let last = last_user_message(messages).unwrap_or("");
        let ok = match self {
            Expectation::Contains(s) => last.contains(s.as_str()),
            Expectation::Absent(s) => !last.contains(s.as_str()),
            Expectation::Count(s, n) => last.matches(s.as_str()).count() == *n,
            Expectation::AnyMessageContains(s) => {
                messages.iter().any(|m| m.content.contains(s.as_str()))
            }
            Expectation::NoMessageContains(s) => {
                !messages.iter().any(|m| m.content.contains(s.as_str()))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{self:?} not satisfied"))
        }
    }
}

/// One scripted turn: the reply plus optional conditions on the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub expect: Vec<Expectation>,
    pub reply: String,
}

impl TranscriptEntry {
    pub fn reply(reply: impl Into<String>) -> Self {
        Self {
            expect: Vec::new(),
            reply: reply.into(),
        }
    }

    /// Requires the last user message to contain `needle`.
    pub fn matching(mut self, needle: impl Into<String>) -> Self {
        self.expect.push(Expectation::Contains(needle.into()));
        self
    }

    pub fn expecting(mut self, e: Expectation) -> Self {
        self.expect.push(e);
        self
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    cursor: usize,
    calls: Vec<Vec<ChatMessage>>,
}

/// Replays a fixed transcript, one entry per call, and records every
/// prompt it receives. Calls are serialized on an internal cursor.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Vec<TranscriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedProvider {
    /// A provider answering with `replies` in order, without conditions.
    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            entries: replies.into_iter().map(TranscriptEntry::reply).collect(),
            state: Mutex::default(),
        }
    }

    pub fn from_transcript(entries: Vec<TranscriptEntry>) -> Result<Self, ProviderError> {
        if entries.is_empty() {
            return Err(ProviderError::InvalidRequest("empty transcript".into()));
        }
        Ok(Self {
            entries,
            state: Mutex::default(),
        })
    }

    /// Every prompt received so far, in call order.
    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("script state").calls.clone()
    }

    pub fn remaining(&self) -> usize {
        let st = self.state.lock().expect("script state");
        self.entries.len().saturating_sub(st.cursor)
    }
}

/// Convenience constructor matching the transcript-driven factory.
pub fn scripted_from_transcript(
    entries: Vec<TranscriptEntry>,
) -> Result<ScriptedProvider, ProviderError> {
    ScriptedProvider::from_transcript(entries)
}

impl ChatProvider for ScriptedProvider {
    fn chat(
        &self,
        messages: &[ChatMessage],
        _settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        validate_messages(messages)?;
        let mut st = self.state.lock().expect("script state");
        st.calls.push(messages.to_vec());
        let index = st.cursor;
        let Some(entry) = self.entries.get(index) else {
            return Err(ProviderError::ScriptExhausted(index + 1));
        };
        st.cursor += 1;
        for e in &entry.expect {
            e.check(messages)
                .map_err(|reason| ProviderError::TranscriptMismatch { index, reason })?;
        }
        Ok(ProviderResponse::immediate(entry.reply.clone()))
    }
}

type ReplyFn = dyn Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync;

/// A provider whose replies are computed from the prompt by a closure.
pub struct FnProvider {
    reply: Box<ReplyFn>,
    log: Mutex<Vec<Vec<ChatMessage>>>,
}

impl FnProvider {
    pub fn new<F>(reply: F) -> Self
    where
        F: Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        Self {
            reply: Box::new(reply),
            log: Mutex::default(),
        }
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.log.lock().expect("call log").clone()
    }
}

impl std::fmt::Debug for FnProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnProvider").finish_non_exhaustive()
    }
}

impl ChatProvider for FnProvider {
    fn chat(
        &self,
        messages: &[ChatMessage],
        _settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        validate_messages(messages)?;
        self.log.lock().expect("call log").push(messages.to_vec());
        (self.reply)(messages).map(ProviderResponse::immediate)
    }
}

/// Concatenates all message contents of a role, for grep-style assertions.
pub fn transcript_text(calls: &[Vec<ChatMessage>], role: Option<Role>) -> String {
    let mut out = String::new();
    for call in calls {
        for m in call {
            if role.is_none_or(|r| r == m.role) {
                out.push_str(&m.content);
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ChatSettings {
        ChatSettings::new("scripted", 0.0)
    }

    #[test]
    fn replays_queue() {
        let p = ScriptedProvider::from_replies(["hello"]);
        let r = p.chat(&[ChatMessage::user("hi")], &settings()).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(
            p.chat(&[ChatMessage::user("hi")], &settings()),
            Err(ProviderError::ScriptExhausted(2))
        );
    }

    #[test]
    fn empty_queue_is_exhausted() {
        let p = ScriptedProvider::from_replies(Vec::<String>::new());
        assert_eq!(
            p.chat(&[ChatMessage::user("hi")], &settings()),
            Err(ProviderError::ScriptExhausted(1))
        );
    }

    #[test]
    fn predicate_on_last_user_message() {
        let entry = TranscriptEntry::reply("ok").matching("LESSON FROM AGENT 2");
        let p = scripted_from_transcript(vec![entry.clone()]).unwrap();
        let r = p
            .chat(
                &[ChatMessage::user("... LESSON FROM AGENT 2 ...")],
                &settings(),
            )
            .unwrap();
        assert_eq!(r.text, "ok");

        let p = scripted_from_transcript(vec![entry]).unwrap();
        let err = p
            .chat(
                &[
                    ChatMessage::user("LESSON FROM AGENT 2"),
                    ChatMessage::assistant("x"),
                    ChatMessage::user("nothing here"),
                ],
                &settings(),
            )
            .unwrap_err();
        assert!(matches!(
            err,
            ProviderError::TranscriptMismatch { index: 0, .. }
        ));
    }

    #[test]
    fn two_entries_then_exhausted() {
        let p = scripted_from_transcript(vec![
            TranscriptEntry::reply("a"),
            TranscriptEntry::reply("b"),
        ])
        .unwrap();
        let m = [ChatMessage::user("q")];
        assert_eq!(p.chat(&m, &settings()).unwrap().text, "a");
        assert_eq!(p.chat(&m, &settings()).unwrap().text, "b");
        assert_eq!(
            p.chat(&m, &settings()),
            Err(ProviderError::ScriptExhausted(3))
        );
        assert!(scripted_from_transcript(vec![]).is_err());
    }

    #[test]
    fn count_and_any_message_expectations() {
        let p = scripted_from_transcript(vec![TranscriptEntry::reply("ok")
            .expecting(Expectation::Count("LESSON".into(), 2))
            .expecting(Expectation::AnyMessageContains("KNOW".into()))])
        .unwrap();
        let msgs = [
            ChatMessage::user("KNOW"),
            ChatMessage::assistant("a"),
            ChatMessage::user("LESSON LESSON"),
        ];
        assert_eq!(p.chat(&msgs, &settings()).unwrap().text, "ok");
    }

    #[test]
    fn identical_call_sequences_give_identical_responses() {
        let make = || ScriptedProvider::from_replies(["x", "y", "z"]);
        let (a, b) = (make(), make());
        for q in ["1", "2", "3", "4"] {
            let m = [ChatMessage::user(q)];
            assert_eq!(a.chat(&m, &settings()), b.chat(&m, &settings()));
        }
    }

    #[test]
    fn fn_provider_logs_calls() {
        let p = FnProvider::new(|m| Ok(format!("{} msgs", m.len())));
        assert_eq!(
            p.chat(&[ChatMessage::user("a")], &settings()).unwrap().text,
            "1 msgs"
        );
        assert_eq!(p.calls().len(), 1);
    }
}
