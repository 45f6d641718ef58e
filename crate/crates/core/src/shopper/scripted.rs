//! Deterministic lexicon-driven shopper.
//!
//! Each agent question is matched against per-topic keyword lists. Every
//! reveal-plan item whose topic is hit gets disclosed (or restated). In
//! strict mode nothing else is ever said; leaky mode also volunteers the
//! first undisclosed item on each reply.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CandidateSummary, Confirmation, Shopper, ShopperError, ShopperSpec, Turn};
use crate::reward::{attribute_matches, selected_value};
use crate::tasks::{RevealItem, Scenario, Slot, Task, Topic};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShopperMode {
    #[default]
    Strict,
    Leaky,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedConfig {
    pub mode: ShopperMode,
    /// Feature attributes the opener mentions besides the category.
    pub opener_attributes: usize,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self { mode: ShopperMode::Strict, opener_attributes: 1 }
    }
}

fn lexicon(topic: Topic) -> &'static [&'static str] {
    match topic {
        Topic::Budget => &[
            "budget", "price", "prices", "cost", "costs", "spend", "afford", "expensive", "cheap", "yuan", "money",
            "预算", "价格", "多少钱",
        ],
        Topic::Size => &["size", "sizes", "sizing", "fit", "eu", "尺码", "尺寸"],
        Topic::Color => &["color", "colors", "colour", "colours", "colorway", "shade", "颜色", "配色"],
        Topic::Brand => &["brand", "brands", "make", "manufacturer", "品牌"],
        Topic::Material => &["material", "materials", "fabric", "made", "材质", "材料"],
        Topic::Feature => &[
            "feature", "features", "function", "functions", "functionality", "attribute", "attributes",
            "requirement", "requirements", "characteristics", "properties", "功能", "特点",
        ],
        Topic::Option => &[
            "option", "options", "variant", "variants", "version", "versions", "edition", "editions",
            "specification", "specifications", "spec", "specs", "规格", "版本",
        ],
        Topic::Category => &[],
    }
}

fn hits(message: &str, words: &[&str]) -> bool {
    let lower = message.to_lowercase();
    let tokens: HashSet<String> = text::basic_tokens(message).into_iter().collect();
    words.iter().any(|w| if w.is_ascii() { tokens.contains(*w) } else { lower.contains(w) })
}

/// Whether `message` asks about `item`.
pub fn asks_about(message: &str, item: &RevealItem) -> bool {
    if hits(message, lexicon(item.topic)) {
        return true;
    }
    match (&item.topic, &item.slot) {
        (Topic::Option, Slot::Option(group)) => {
            let group_tokens = text::basic_tokens(group);
            let msg: HashSet<String> = text::basic_tokens(message).into_iter().collect();
            group_tokens.iter().any(|t| msg.contains(t))
        }
        _ => false,
    }
}

pub fn slot_name(item: &RevealItem) -> String {
    match (&item.topic, &item.slot) {
        (Topic::Budget, _) => "budget".into(),
        (Topic::Size, _) => "size".into(),
        (Topic::Color, _) => "color".into(),
        (Topic::Brand, _) => "brand".into(),
        (Topic::Material, _) => "material".into(),
        (Topic::Feature, _) => "feature requirements".into(),
        (Topic::Option, Slot::Option(g)) => format!("{} choice", g.to_lowercase()),
        (Topic::Option, _) => "option choice".into(),
        (Topic::Category, _) => "product type".into(),
    }
}

const DEFLECTIONS: &[&str] = &[
    "I'm not sure what you mean. Could you ask me something more specific?",
    "Hmm, I don't have anything to add on that.",
    "Could you be more specific about what you need to know?",
];

/// One agent question and the slots it unlocked.
#[derive(Debug, Clone, PartialEq)]
pub struct Disclosure {
    pub message: String,
    pub slots: Vec<Slot>,
    pub volunteered: bool,
}

pub struct ScriptedShopper {
    plan: Vec<RevealItem>,
    fine_category: String,
    price_cap: Option<f64>,
    disclosed: HashSet<Slot>,
    log: Vec<Disclosure>,
    config: ScriptedConfig,
    rng: ChaCha8Rng,
    multi_turn: bool,
}

impl ScriptedShopper {
    pub fn new(task: &Task, scenario: Scenario, seed: u64, config: ScriptedConfig) -> Self {
        let mut disclosed = HashSet::new();
        if scenario.is_personalized() {
            disclosed.extend(task.reveal_plan.iter().filter(|i| i.in_profile).map(|i| i.slot.clone()));
        }
        Self {
            plan: task.reveal_plan.clone(),
            fine_category: task.target.category.fine_category.clone(),
            price_cap: task.target.price_cap,
            disclosed,
            log: Vec::new(),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            multi_turn: scenario.is_multi_turn(),
        }
    }

    pub fn disclosed(&self) -> &HashSet<Slot> {
        &self.disclosed
    }

    pub fn undisclosed(&self) -> Vec<&RevealItem> {
        self.plan.iter().filter(|i| !self.disclosed.contains(&i.slot)).collect()
    }

    pub fn disclosure_log(&self) -> &[Disclosure] {
        &self.log
    }

    fn violation(&self, item: &RevealItem, candidate: &CandidateSummary) -> bool {
        let product = &candidate.product;
        match &item.slot {
            Slot::Category => text::normalize(&product.category.fine_category) != text::normalize(&item.value),
            Slot::Attribute(a) => attribute_matches(std::slice::from_ref(a), product).is_empty(),
            Slot::Option(group) => selected_value(&candidate.selected_options, group)
                .is_none_or(|v| text::normalize(v) != text::normalize(&item.value)),
            Slot::PriceCap => self.price_cap.is_some_and(|cap| candidate.effective_price > cap),
        }
    }
}

impl Shopper for ScriptedShopper {
    fn open(&mut self) -> Result<String, ShopperError> {
        if !self.multi_turn {
            return Err(ShopperError::SingleTurn);
        }
        self.disclosed.insert(Slot::Category);
        let extras: Vec<RevealItem> = self
            .plan
            .iter()
            .filter(|i| i.topic == Topic::Feature && !self.disclosed.contains(&i.slot))
            .take(self.config.opener_attributes)
            .cloned()
            .collect();
        let mut opener = format!("I want to buy {}", self.fine_category.to_lowercase());
        if !extras.is_empty() {
            let words: Vec<String> = extras.iter().map(|i| i.value.to_lowercase()).collect();
            opener.push_str(", preferably ");
            opener.push_str(&words.join(" and "));
        }
        opener.push('.');
        let slots: Vec<Slot> = extras.into_iter().map(|i| i.slot).collect();
        self.disclosed.extend(slots.iter().cloned());
        self.log.push(Disclosure { message: String::new(), slots, volunteered: true });
        Ok(opener)
    }

    fn reply(&mut self, _dialogue: &[Turn], message: &str) -> Result<String, ShopperError> {
        let asked: Vec<RevealItem> = self.plan.iter().filter(|i| asks_about(message, i)).cloned().collect();
        let mut sentences: Vec<String> = asked.iter().map(|i| i.text.clone()).collect();
        let mut slots: Vec<Slot> = asked
            .iter()
            .filter(|i| !self.disclosed.contains(&i.slot))
            .map(|i| i.slot.clone())
            .collect();
        let mut volunteered = false;
        if self.config.mode == ShopperMode::Leaky {
            if let Some(extra) = self
                .plan
                .iter()
                .find(|i| !self.disclosed.contains(&i.slot) && !slots.contains(&i.slot))
            {
                sentences.push(extra.text.clone());
                slots.push(extra.slot.clone());
                volunteered = true;
            }
        }
        if sentences.is_empty() {
            let topics_asked: Vec<Topic> = [
                Topic::Budget,
                Topic::Size,
                Topic::Color,
                Topic::Brand,
                Topic::Material,
                Topic::Feature,
                Topic::Option,
            ]
            .into_iter()
            .filter(|t| hits(message, lexicon(*t)))
            .collect();
            sentences.push(if topics_asked.is_empty() {
                DEFLECTIONS.choose(&mut self.rng).expect("non-empty").to_string()
            } else {
                "I don't have a particular preference on that.".to_string()
            });
        }
        self.disclosed.extend(slots.iter().cloned());
        self.log.push(Disclosure { message: message.to_string(), slots, volunteered });
        Ok(sentences.join(" "))
    }

    fn confirm_purchase(
        &mut self,
        _dialogue: &[Turn],
        candidate: &CandidateSummary,
    ) -> Result<Confirmation, ShopperError> {
        if let Some(item) = self.plan.iter().find(|i| !self.disclosed.contains(&i.slot)) {
            return Ok(Confirmation::Refuse {
                slot: Some(item.slot.clone()),
                reason: format!("Not yet. You haven't asked about my {}.", slot_name(item)),
            });
        }
        if let Some(item) = self.plan.iter().find(|i| self.violation(i, candidate)) {
            return Ok(Confirmation::Refuse {
                slot: Some(item.slot.clone()),
                reason: format!("That's not right, the {} doesn't match what I told you.", slot_name(item)),
            });
        }
        Ok(Confirmation::Approve("Yes, that's exactly what I'm looking for. Please go ahead and buy it.".into()))
    }

    fn spec(&self) -> ShopperSpec {
        ShopperSpec::Scripted(self.config.clone())
    }
}
