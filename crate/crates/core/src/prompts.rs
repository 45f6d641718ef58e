//! Prompt assets for LLM-backed agents and shoppers.

use crate::catalog::format_compact_price;
use crate::profile::UserProfile;
use crate::tasks::Task;

pub const AGENT_SYSTEM: &str = include_str!("../prompts/agent_system.txt");
pub const SHOPPER_SYSTEM: &str = include_str!("../prompts/shopper_system.txt");
pub const PERSONALIZED_PREAMBLE: &str = include_str!("../prompts/personalized_preamble.txt");

/// Canonical rendering of a task's structured goal for `{goal}`.
pub fn render_goal(task: &Task) -> String {
    let target = &task.target;
    let mut parts = vec![format!("buy {}", target.category.fine_category.to_lowercase())];
    if !target.attributes.is_empty() {
        parts.push(format!("required attributes: {}", target.attributes.join(", ")));
    }
    if !target.options.is_empty() {
        let opts: Vec<String> = target.options.iter().map(|(g, v)| format!("{g} = {v}")).collect();
        parts.push(format!("required options: {}", opts.join("; ")));
    }
    if let Some(cap) = target.price_cap {
        parts.push(format!("budget: within {} yuan", format_compact_price(cap)));
    }
    parts.push(format!("the item is \"{}\"", target.title));
    let mut goal = parts.join(". ");
    goal.push('.');
    goal
}

pub fn shopper_system_prompt(task: &Task) -> String {
    SHOPPER_SYSTEM.replace("{goal}", &render_goal(task))
}

/// Preamble shown to agents in personalized scenarios.
pub fn personalized_preamble(profile: &UserProfile) -> String {
    let pretty = serde_json::to_string_pretty(profile).expect("profile serializes");
    PERSONALIZED_PREAMBLE.replace("{profile}", &pretty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_carry_placeholders() {
        assert!(SHOPPER_SYSTEM.trim_end().ends_with("{goal}"));
        assert!(AGENT_SYSTEM.contains("Action_type: ask_shopper | interact_with_env"));
        assert!(PERSONALIZED_PREAMBLE.contains("{profile}"));
    }
}
