//! Agent action grammar.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ActionKind {
    Search(String),
    Click(String),
    AskShopper(String),
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Search(q) => write!(f, "search[{q}]"),
            ActionKind::Click(v) => write!(f, "click[{v}]"),
            ActionKind::AskShopper(m) => write!(f, "ask_shopper[{m}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub raw_text: String,
}

impl Action {
    pub fn search(q: impl Into<String>) -> Self {
        let kind = ActionKind::Search(q.into());
        Self { raw_text: kind.to_string(), kind }
    }

    pub fn click(v: impl Into<String>) -> Self {
        let kind = ActionKind::Click(v.into());
        Self { raw_text: kind.to_string(), kind }
    }

    pub fn ask(m: impl Into<String>) -> Self {
        let m = m.into();
        Self {
            raw_text: format!("Action_type: ask_shopper\nAction_content: {m}"),
            kind: ActionKind::AskShopper(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse an action from {raw:?}: {reason}")]
pub struct ParseError {
    pub raw: String,
    pub reason: String,
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// Parses `search[...]` or `click[...]` from the first command marker to
/// the last closing bracket.
fn parse_command(text: &str) -> Result<ActionKind, String> {
    let s_pos = find_ci(text, "search[");
    let c_pos = find_ci(text, "click[");
    let (start, is_search) = match (s_pos, c_pos) {
        (Some(s), Some(c)) if s < c => (s + "search[".len(), true),
        (Some(_), Some(c)) => (c + "click[".len(), false),
        (Some(s), None) => (s + "search[".len(), true),
        (None, Some(c)) => (c + "click[".len(), false),
        (None, None) => return Err("expected search[...] or click[...]".into()),
    };
    let rest = &text[start..];
    let end = rest.rfind(']').ok_or_else(|| "missing closing bracket".to_string())?;
    let value = rest[..end].trim();
    if value.is_empty() {
        return Err("empty action argument".into());
    }
    Ok(if is_search { ActionKind::Search(value.to_string()) } else { ActionKind::Click(value.to_string()) })
}

fn after_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    let lower = trimmed.to_ascii_lowercase();
    lower.starts_with(label).then(|| trimmed[label.len()..].trim())
}

/// Accepts, in order of preference: an `Action_type`/`Action_content`
/// block, an `Action:` line, or the last line containing a bare command.
pub fn parse_action(raw: &str) -> Result<Action, ParseError> {
    let fail = |reason: String| ParseError { raw: raw.to_string(), reason };
    let lines: Vec<&str> = raw.lines().collect();

    if let Some(idx) = lines.iter().position(|l| after_label(l, "action_type:").is_some()) {
        let head = after_label(lines[idx], "action_type:").unwrap_or_default();
        let (type_part, inline_content) = match find_ci(head, "action_content:") {
            Some(pos) => (&head[..pos], Some(head[pos + "action_content:".len()..].trim())),
            None => (head, None),
        };
        let action_type = type_part.trim().trim_end_matches(['/', '|', ',']).trim().to_ascii_lowercase();
        let content = match inline_content {
            Some(c) => c.to_string(),
            None => {
                let pos = lines[idx + 1..]
                    .iter()
                    .position(|l| after_label(l, "action_content:").is_some())
                    .map(|p| p + idx + 1)
                    .ok_or_else(|| fail("Action_type without Action_content".into()))?;
                let first = after_label(lines[pos], "action_content:").unwrap_or_default();
                std::iter::once(first)
                    .chain(lines[pos + 1..].iter().map(|l| l.trim()))
                    .filter(|l| !l.is_empty())
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        };
        let kind = match action_type.as_str() {
            "ask_shopper" => {
                if content.trim().is_empty() {
                    return Err(fail("empty question".into()));
                }
                ActionKind::AskShopper(content.trim().to_string())
            }
            "interact_with_env" => parse_command(&content).map_err(fail)?,
            other => return Err(fail(format!("unknown action type {other:?}"))),
        };
        return Ok(Action { kind, raw_text: raw.to_string() });
    }

    if let Some(rest) = lines.iter().rev().find_map(|l| after_label(l, "action:")) {
        let kind = parse_command(rest).map_err(fail)?;
        return Ok(Action { kind, raw_text: raw.to_string() });
    }

    let line = lines
        .iter()
        .rev()
        .find(|l| find_ci(l, "search[").is_some() || find_ci(l, "click[").is_some())
        .ok_or_else(|| fail("no action found".into()))?;
    let kind = parse_command(line).map_err(fail)?;
    Ok(Action { kind, raw_text: raw.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(raw: &str) -> ActionKind {
        parse_action(raw).unwrap().kind
    }

    #[test]
    fn action_line() {
        assert_eq!(kind("Action: click[buy now]"), ActionKind::Click("buy now".into()));
        assert_eq!(
            kind("Thought: search\nAction:search[YONEX badminton shoes size 40]"),
            ActionKind::Search("YONEX badminton shoes size 40".into())
        );
    }

    #[test]
    fn typed_block() {
        assert_eq!(
            kind("Action_type: ask_shopper / Action_content: What's your budget?"),
            ActionKind::AskShopper("What's your budget?".into())
        );
        assert_eq!(
            kind("Thought: x\nAction_type: interact_with_env\nAction_content: click[< prev]"),
            ActionKind::Click("< prev".into())
        );
        assert_eq!(
            kind("Action_type: ask_shopper\nAction_content: What size?\nAnd color?"),
            ActionKind::AskShopper("What size?\nAnd color?".into())
        );
    }

    #[test]
    fn bare_command_keeps_inner_brackets() {
        assert_eq!(kind("click[Size [EU] 40]"), ActionKind::Click("Size [EU] 40".into()));
        assert_eq!(kind("I will now\nsearch[shoes]"), ActionKind::Search("shoes".into()));
    }

    #[test]
    fn unparseable() {
        let err = parse_action("do something").unwrap_err();
        assert_eq!(err.raw, "do something");
        assert!(parse_action("click[]").is_err());
        assert!(parse_action("search[shoes").is_err());
        assert!(parse_action("Action_type: dance\nAction_content: x").is_err());
    }

    #[test]
    fn constructors_round_trip() {
        for a in [Action::search("red shoes"), Action::click("buy now"), Action::ask("What size?")] {
            assert_eq!(parse_action(&a.raw_text).unwrap().kind, a.kind);
        }
    }
}
