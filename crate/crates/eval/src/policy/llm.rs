use shopsim_core::chat::{ChatClient, ChatMessage};
use shopsim_core::prompts::{personalized_preamble, AGENT_SYSTEM};

use super::{EpisodeInfo, Policy, PolicyContext, PolicyError, PolicyFactory};

/// Chat-model agent. Each observation becomes a user turn and each reply
/// an assistant turn; the raw reply is the action.
pub struct LlmPolicy {
    client: ChatClient,
    messages: Vec<ChatMessage>,
}

impl LlmPolicy {
    pub fn new(client: ChatClient, episode: &EpisodeInfo<'_>) -> Self {
        let mut system = AGENT_SYSTEM.to_string();
        if let Some(profile) = episode.profile.filter(|_| episode.scenario.is_personalized()) {
            system.push_str("\n\n");
            system.push_str(&personalized_preamble(profile));
        }
        Self { client, messages: vec![ChatMessage::system(system)] }
    }
}

impl Policy for LlmPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError> {
        self.messages.push(ChatMessage::user(ctx.observation.display()));
        let reply = self.client.complete(&self.messages)?.content;
        self.messages.push(ChatMessage::assistant(reply.clone()));
        Ok(reply)
    }
}

pub struct LlmPolicyFactory {
    pub client: ChatClient,
}

impl PolicyFactory for LlmPolicyFactory {
    fn name(&self) -> String {
        format!("llm:{}", self.client.model())
    }

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(LlmPolicy::new(self.client.clone(), episode))
    }
}
