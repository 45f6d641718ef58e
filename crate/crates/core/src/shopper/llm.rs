//! Shopper played by a chat model using the role-play prompt.

use super::{CandidateSummary, Confirmation, Shopper, ShopperError, ShopperSpec, Speaker, Turn};
use crate::chat::{ChatClient, ChatMessage};
use crate::prompts::shopper_system_prompt;
use crate::tasks::{Scenario, Task};
use crate::text;

/// Stand-in for the agent's first turn, which the shopper model answers
/// with its vague opening request.
pub const GREETING: &str = "Hello! What can I help you find today?";

const REFUSAL_MARKERS: &[&str] = &["not yet", "no,", "don't", "do not", "refuse", "wait", "haven't", "not right"];
const APPROVAL_MARKERS: &[&str] = &["yes", "confirm", "go ahead", "proceed", "buy it", "sounds good"];

pub struct LlmShopper {
    client: ChatClient,
    system: String,
    multi_turn: bool,
    opener: Option<String>,
    /// Every completion with its attempt count, for trace logging.
    pub transcript: Vec<(String, usize)>,
}

impl LlmShopper {
    pub fn new(client: ChatClient, task: &Task, scenario: Scenario) -> Self {
        Self {
            client,
            system: shopper_system_prompt(task),
            multi_turn: scenario.is_multi_turn(),
            opener: None,
            transcript: Vec::new(),
        }
    }

    /// Agent turns are the model's "user" side.
    fn messages(&self, dialogue: &[Turn], next: &str) -> Vec<ChatMessage> {
        let mut out = vec![ChatMessage::system(&self.system), ChatMessage::user(GREETING)];
        let mut turns = dialogue.iter().peekable();
        if let Some(first) = turns.peek() {
            if first.speaker == Speaker::Shopper {
                out.push(ChatMessage::assistant(&first.text));
                turns.next();
            }
        } else if let Some(opener) = &self.opener {
            out.push(ChatMessage::assistant(opener));
        }
        for turn in turns {
            out.push(match turn.speaker {
                Speaker::Agent => ChatMessage::user(&turn.text),
                Speaker::Shopper => ChatMessage::assistant(&turn.text),
            });
        }
        if out.last().map(|m| m.content.as_str()) != Some(next) {
            out.push(ChatMessage::user(next));
        }
        out
    }

    fn ask(&mut self, messages: Vec<ChatMessage>) -> Result<String, ShopperError> {
        let completion = self.client.complete(&messages)?;
        self.transcript.push((completion.content.clone(), completion.attempts));
        Ok(completion.content.trim().to_string())
    }
}

/// Reads a free-text answer to a purchase confirmation request.
pub fn classify_confirmation(answer: &str) -> bool {
    let lower = text::squash_whitespace(answer);
    let refuses = REFUSAL_MARKERS.iter().any(|m| lower.contains(m));
    let approves = APPROVAL_MARKERS.iter().any(|m| lower.contains(m));
    approves && !refuses
}

impl Shopper for LlmShopper {
    fn open(&mut self) -> Result<String, ShopperError> {
        if !self.multi_turn {
            return Err(ShopperError::SingleTurn);
        }
        let messages = vec![ChatMessage::system(&self.system), ChatMessage::user(GREETING)];
        let opener = self.ask(messages)?;
        self.opener = Some(opener.clone());
        Ok(opener)
    }

    fn reply(&mut self, dialogue: &[Turn], message: &str) -> Result<String, ShopperError> {
        let messages = self.messages(dialogue, message);
        self.ask(messages)
    }

    fn confirm_purchase(
        &mut self,
        dialogue: &[Turn],
        candidate: &CandidateSummary,
    ) -> Result<Confirmation, ShopperError> {
        let last_agent = dialogue.iter().rev().find(|t| t.speaker == Speaker::Agent).map(|t| t.text.clone());
        let question = format!(
            "{} (Candidate: {})",
            last_agent.unwrap_or_else(|| "Shall I buy this for you?".into()),
            candidate.describe()
        );
        let mut messages = self.messages(dialogue, &question);
        if let Some(last) = messages.last_mut() {
            last.content = question;
        }
        let answer = self.ask(messages)?;
        Ok(if classify_confirmation(&answer) {
            Confirmation::Approve(answer)
        } else {
            Confirmation::Refuse { slot: None, reason: answer }
        })
    }

    fn spec(&self) -> ShopperSpec {
        ShopperSpec::Llm { model: self.client.model().to_string() }
    }
}
