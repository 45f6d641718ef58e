//! The simulated shopper behind multi-turn scenarios.

pub mod audit;
pub mod llm;
pub mod scripted;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::catalog::Product;
use crate::chat::ChatError;
use crate::tasks::Slot;

pub use llm::LlmShopper;
pub use scripted::{ScriptedConfig, ScriptedShopper, ShopperMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Agent,
    Shopper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn agent(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Agent, text: text.into() }
    }

    pub fn shopper(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Shopper, text: text.into() }
    }
}

/// What the agent is about to buy.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSummary {
    pub product: Product,
    pub selected_options: IndexMap<String, String>,
    pub effective_price: f64,
}

impl CandidateSummary {
    pub fn describe(&self) -> String {
        let opts: Vec<String> = self.selected_options.iter().map(|(g, v)| format!("{g}: {v}")).collect();
        format!(
            "{} ({}), {}, price {}",
            self.product.title,
            self.product.product_id,
            if opts.is_empty() { "no options selected".to_string() } else { opts.join(", ") },
            crate::catalog::format_compact_price(self.effective_price)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Confirmation {
    Approve(String),
    Refuse { slot: Option<Slot>, reason: String },
}

impl Confirmation {
    pub fn is_approved(&self) -> bool {
        matches!(self, Confirmation::Approve(_))
    }

    pub fn utterance(&self) -> &str {
        match self {
            Confirmation::Approve(text) => text,
            Confirmation::Refuse { reason, .. } => reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShopperError {
    #[error("the shopper only takes part in multi-turn scenarios")]
    SingleTurn,
    #[error(transparent)]
    Backend(#[from] ChatError),
}

/// Backend description stored in traces so sessions can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum ShopperSpec {
    Scripted(ScriptedConfig),
    Llm { model: String },
}

pub trait Shopper: Send {
    fn open(&mut self) -> Result<String, ShopperError>;

    fn reply(&mut self, dialogue: &[Turn], message: &str) -> Result<String, ShopperError>;

    fn confirm_purchase(&mut self, dialogue: &[Turn], candidate: &CandidateSummary)
        -> Result<Confirmation, ShopperError>;

    fn spec(&self) -> ShopperSpec;
}

const CONFIRM_WORDS: &[&str] = &["buy", "purchase", "proceed", "confirm", "order", "checkout"];

/// Whether an agent message asks the shopper to sign off on a purchase.
pub fn is_confirmation_request(message: &str) -> bool {
    let tokens = crate::text::basic_tokens(message);
    tokens.iter().any(|t| CONFIRM_WORDS.contains(&t.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confirmation_lexicon() {
        assert!(is_confirmation_request("Would you like to proceed with this purchase?"));
        assert!(is_confirmation_request("Shall I buy it?"));
        assert!(!is_confirmation_request("What's your budget range?"));
        assert!(!is_confirmation_request("Any buyer reviews you care about?"));
    }
}
