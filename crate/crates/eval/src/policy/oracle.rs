//! Ground-truth-aware baseline: searches the canonical query, pages to the
//! target, selects the required options and buys. In multi-turn scenarios
//! it first asks one question covering every topic and asks for
//! confirmation before buying.
//!
//! The policy is reactive: it reads the page kind from the observation and
//! keeps track of selections made on the target item, so random detours
//! injected by [`NoisyOracleFactory`] are recovered from.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shopsim_core::catalog::Product;
use shopsim_core::env::{parse_action, ActionKind};
use shopsim_core::reward::TargetSpec;

use super::{page_kind, EpisodeInfo, PageKind, Policy, PolicyContext, PolicyError, PolicyFactory};

pub const DISCOVERY_QUESTION: &str =
    "Could you tell me your budget, size, color, brand, material, required features and which options you prefer?";

pub struct OraclePolicy {
    target: TargetSpec,
    product: Product,
    multi_turn: bool,
    asked: bool,
    confirmed: bool,
    current_item: Option<String>,
    selected: IndexMap<String, String>,
}

impl OraclePolicy {
    pub fn new(episode: &EpisodeInfo<'_>) -> Self {
        let target = episode.task.target.clone();
        let product = episode.catalog.get_product(&target.product_id).expect("target is in the catalog").clone();
        Self {
            target,
            product,
            multi_turn: episode.scenario.is_multi_turn(),
            asked: false,
            confirmed: false,
            current_item: None,
            selected: IndexMap::new(),
        }
    }

    fn choose(&self, ctx: &PolicyContext<'_>) -> String {
        let obs = ctx.observation;
        if self.multi_turn && !self.asked {
            return format!("Action_type: ask_shopper\nAction_content: {DISCOVERY_QUESTION}");
        }
        match page_kind(obs) {
            PageKind::Home => format!("search[{}]", self.target.canonical_query),
            PageKind::Results => {
                if obs.clickable.iter().any(|c| c == &self.target.product_id) {
                    format!("click[{}]", self.target.product_id)
                } else if obs.clickable.iter().any(|c| c == "next >") {
                    "click[next >]".into()
                } else {
                    "click[back to search]".into()
                }
            }
            PageKind::Item => {
                if self.current_item.as_deref() != Some(self.target.product_id.as_str()) {
                    return "click[< prev]".into();
                }
                let pending = self.target.options.iter().find(|(g, v)| self.selected.get(*g) != Some(*v));
                if let Some((_, value)) = pending {
                    return format!("click[{value}]");
                }
                if self.multi_turn && !self.confirmed {
                    return format!(
                        "Action_type: ask_shopper\nAction_content: I found \"{}\" with your options. Shall I buy it?",
                        self.product.title
                    );
                }
                "click[buy now]".into()
            }
        }
    }

    /// Updates internal state for an action about to be taken on the page
    /// described by `ctx`.
    fn track(&mut self, ctx: &PolicyContext<'_>, raw: &str) {
        let Ok(action) = parse_action(raw) else { return };
        let kind = page_kind(ctx.observation);
        match action.kind {
            ActionKind::AskShopper(message) => {
                if kind == PageKind::Item && shopsim_core::shopper::is_confirmation_request(&message) {
                    self.confirmed = true;
                } else {
                    self.asked = true;
                }
            }
            ActionKind::Search(_) => {}
            ActionKind::Click(value) => {
                let v = value.to_lowercase();
                match kind {
                    PageKind::Results if v != "next >" && v != "< prev" && v != "back to search" => {
                        self.current_item = Some(value);
                        self.selected.clear();
                    }
                    PageKind::Item if v == "< prev" || v == "back to search" => self.current_item = None,
                    PageKind::Item if self.current_item.as_deref() == Some(self.product.product_id.as_str()) => {
                        if let Some(group) = self.product.group_of(&value) {
                            let exact = self.product.options[group]
                                .iter()
                                .find(|o| o.eq_ignore_ascii_case(&value))
                                .cloned()
                                .unwrap_or(value);
                            self.selected.insert(group.to_string(), exact);
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

impl Policy for OraclePolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError> {
        let raw = self.choose(ctx);
        self.track(ctx, &raw);
        Ok(raw)
    }
}

pub struct OracleFactory;

impl PolicyFactory for OracleFactory {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(OraclePolicy::new(episode))
    }
}

/// Oracle that takes a uniformly random clickable instead with
/// probability `epsilon`.
pub struct NoisyOracleFactory {
    pub epsilon: f64,
}

struct NoisyOracle {
    inner: OraclePolicy,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl Policy for NoisyOracle {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError> {
        let obs = ctx.observation;
        let raw = if !obs.clickable.is_empty() && self.rng.gen_bool(self.epsilon) {
            format!("click[{}]", obs.clickable.choose(&mut self.rng).expect("non-empty"))
        } else {
            self.inner.choose(ctx)
        };
        self.inner.track(ctx, &raw);
        Ok(raw)
    }
}

impl PolicyFactory for NoisyOracleFactory {
    fn name(&self) -> String {
        format!("noisy-oracle-{}", self.epsilon)
    }

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(NoisyOracle {
            inner: OraclePolicy::new(episode),
            epsilon: self.epsilon,
            rng: ChaCha8Rng::seed_from_u64(episode.seed ^ 0x6f72_6163_6c65),
        })
    }
}
