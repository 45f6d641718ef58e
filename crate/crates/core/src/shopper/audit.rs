//! Transcript validators for LLM-played shoppers.

use serde::{Deserialize, Serialize};

use super::scripted::asks_about;
use super::{Speaker, Turn};
use crate::catalog::format_compact_price;
use crate::generate::Vocabulary;
use crate::tasks::{Task, Topic};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShopperIssue {
    #[serde(rename = "Adding extra intent")]
    AddingExtraIntent,
    #[serde(rename = "Distorting target intent")]
    DistortingTargetIntent,
    #[serde(rename = "Silent on key goal")]
    SilentOnKeyGoal,
}

impl ShopperIssue {
    pub fn label(self) -> &'static str {
        match self {
            ShopperIssue::AddingExtraIntent => "Adding extra intent",
            ShopperIssue::DistortingTargetIntent => "Distorting target intent",
            ShopperIssue::SilentOnKeyGoal => "Silent on key goal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub issue: ShopperIssue,
    pub turn: usize,
    pub detail: String,
}

fn numbers(s: &str) -> Vec<f64> {
    text::basic_tokens(s).iter().filter_map(|t| t.parse::<f64>().ok()).collect()
}

fn mentions(utterance: &str, phrase: &str) -> bool {
    text::contains_tokens(utterance, phrase)
}

/// Checks shopper turns against the task goal.
///
/// * extra intent: a vocabulary brand, feature, material or color the
///   target does not have;
/// * distortion: a budget or size figure other than the target's;
/// * silence: an agent question about a slot never answered with its
///   value in any later shopper turn.
pub fn audit_transcript(task: &Task, vocab: &Vocabulary, dialogue: &[Turn]) -> Vec<AuditFinding> {
    let mut findings = Vec::new();
    let target_values: Vec<String> = task
        .target
        .attributes
        .iter()
        .chain(task.target.options.values())
        .map(|v| text::normalize(v))
        .collect();
    let cap = task.target.price_cap;
    let size = task
        .reveal_plan
        .iter()
        .find(|i| i.topic == Topic::Size)
        .map(|i| i.value.clone());

    for (i, turn) in dialogue.iter().enumerate().filter(|(_, t)| t.speaker == Speaker::Shopper) {
        let pools = vocab.brands.iter().chain(&vocab.features).chain(&vocab.materials).chain(&vocab.colors);
        for word in pools {
            let norm = text::normalize(word);
            let covered = target_values.iter().any(|v| v.contains(&norm));
            if !covered && mentions(&turn.text, word) {
                findings.push(AuditFinding {
                    issue: ShopperIssue::AddingExtraIntent,
                    turn: i,
                    detail: format!("mentions {word:?}, which the goal does not include"),
                });
            }
        }
        for sentence in turn.text.split(['.', '!', '?', ';']) {
            let lower = sentence.to_lowercase();
            if let Some(cap) = cap {
                if lower.contains("budget") || lower.contains("yuan") || lower.contains("price") {
                    for n in numbers(sentence) {
                        if (n - cap).abs() > 1e-9 {
                            findings.push(AuditFinding {
                                issue: ShopperIssue::DistortingTargetIntent,
                                turn: i,
                                detail: format!("states budget {n} instead of {}", format_compact_price(cap)),
                            });
                        }
                    }
                }
            }
            if let Some(size) = &size {
                if lower.contains("size") {
                    for n in numbers(sentence) {
                        if size.parse::<f64>().is_ok_and(|s| (s - n).abs() > 1e-9) {
                            findings.push(AuditFinding {
                                issue: ShopperIssue::DistortingTargetIntent,
                                turn: i,
                                detail: format!("states size {n} instead of {size}"),
                            });
                        }
                    }
                }
            }
        }
    }

    for item in task.reveal_plan.iter().filter(|i| !i.in_profile && i.topic != Topic::Category) {
        let asked_at = dialogue
            .iter()
            .position(|t| t.speaker == Speaker::Agent && asks_about(&t.text, item));
        let Some(asked_at) = asked_at else { continue };
        let answered = dialogue[asked_at..]
            .iter()
            .any(|t| t.speaker == Speaker::Shopper && mentions(&t.text, &item.value));
        if !answered {
            findings.push(AuditFinding {
                issue: ShopperIssue::SilentOnKeyGoal,
                turn: asked_at,
                detail: format!("never states {} after being asked", item.slot),
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_catalog, GenerationSpec};
    use crate::shopper::scripted::{ScriptedConfig, ScriptedShopper};
    use crate::shopper::Shopper;
    use crate::tasks::{generate_tasks, Scenario, TaskGenConfig};

    fn task() -> Task {
        let c = generate_catalog(3, &GenerationSpec::new(1, 1, 1, 40)).unwrap();
        let cfg = TaskGenConfig { personalized_fraction: 0.0, ..Default::default() };
        generate_tasks(&c, 3, 1, &cfg).unwrap().tasks.remove(0)
    }

    #[test]
    fn scripted_transcript_is_clean() {
        let task = task();
        let mut s = ScriptedShopper::new(&task, Scenario::MultiTurn, 1, ScriptedConfig::default());
        let mut dialogue = vec![Turn::shopper(s.open().unwrap())];
        let q = "What brand, features, material, color, size, version and budget?";
        dialogue.push(Turn::agent(q));
        let r = s.reply(&dialogue, q).unwrap();
        dialogue.push(Turn::shopper(r));
        assert_eq!(audit_transcript(&task, &Vocabulary::default(), &dialogue), vec![]);
    }

    #[test]
    fn flags_each_issue() {
        let task = task();
        let wrong = format_compact_price(task.target.price_cap.unwrap() + 100.0);
        let vocab = Vocabulary::default();
        let extra = vocab
            .colors
            .iter()
            .find(|c| !task.target.options.values().any(|v| text::normalize(v).contains(&text::normalize(c))))
            .unwrap();
        let dialogue = vec![
            Turn::shopper("I want something."),
            Turn::agent("What's your budget?"),
            Turn::shopper(format!("My budget is {wrong} yuan. Also it must be {extra}.")),
            Turn::agent("And your size?"),
            Turn::shopper("Whatever works."),
        ];
        let found = audit_transcript(&task, &vocab, &dialogue);
        let issues: Vec<ShopperIssue> = found.iter().map(|f| f.issue).collect();
        assert!(issues.contains(&ShopperIssue::AddingExtraIntent), "{found:?}");
        assert!(issues.contains(&ShopperIssue::DistortingTargetIntent), "{found:?}");
        assert!(issues.contains(&ShopperIssue::SilentOnKeyGoal), "{found:?}");
    }
}
