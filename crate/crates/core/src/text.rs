//! Script-neutral text normalization shared by search and reward matching.
//!
//! Latin, digit and other alphabetic runs become lowercase word tokens.
//! CJK characters have no word boundaries, so each one is its own basic
//! token; the search tokenizer additionally emits character bigrams inside
//! a contiguous CJK run.

/// True for Han, kana and Hangul code points.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // CJK compatibility
        | 0x20000..=0x2A6DF) // CJK ext B
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece<'a> {
    Word(&'a str),
    Cjk(&'a str),
}

/// Splits text into maximal word runs and maximal CJK runs; everything
/// else (punctuation, whitespace, symbols) separates pieces.
fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut start: Option<(usize, bool)> = None;
    for (i, c) in text.char_indices() {
        let class = if is_cjk(c) {
            Some(true)
        } else if c.is_alphanumeric() {
            Some(false)
        } else {
            None
        };
        match (start, class) {
            (Some((_, cjk)), Some(k)) if cjk == k => {}
            (Some((s, cjk)), next) => {
                out.push(if cjk { Piece::Cjk(&text[s..i]) } else { Piece::Word(&text[s..i]) });
                start = next.map(|k| (i, k));
            }
            (None, next) => start = next.map(|k| (i, k)),
        }
    }
    if let Some((s, cjk)) = start {
        let rest = &text[s..];
        out.push(if cjk { Piece::Cjk(rest) } else { Piece::Word(rest) });
    }
    out
}

/// Search tokens in text order. Word runs are lowercased; within a CJK run
/// every character is emitted followed by the bigram starting at it.
///
/// `"YONEX 40"` gives `["yonex", "40"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for piece in pieces(text) {
        match piece {
            Piece::Word(w) => tokens.push(w.to_lowercase()),
            Piece::Cjk(run) => {
                let chars: Vec<char> = run.chars().collect();
                for (i, c) in chars.iter().enumerate() {
                    tokens.push(c.to_string());
                    if let Some(next) = chars.get(i + 1) {
                        tokens.push([*c, *next].iter().collect());
                    }
                }
            }
        }
    }
    tokens
}

/// Word tokens plus single CJK characters, in text order, no bigrams.
pub fn basic_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for piece in pieces(text) {
        match piece {
            Piece::Word(w) => tokens.push(w.to_lowercase()),
            Piece::Cjk(run) => tokens.extend(run.chars().map(|c| c.to_string())),
        }
    }
    tokens
}

/// Canonical comparison form: basic tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    basic_tokens(text).join(" ")
}

/// Whole-token containment of `needle` inside `haystack` after
/// normalization. An empty needle is never contained.
pub fn contains_tokens(haystack: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    if needle.is_empty() {
        return false;
    }
    let hay = normalize(haystack);
    format!(" {hay} ").contains(&format!(" {needle} "))
}

/// Lowercase and collapse whitespace; used for matching button labels.
pub fn squash_whitespace(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_and_digits() {
        assert_eq!(tokenize("YONEX 40"), vec!["yonex", "40"]);
        assert_eq!(tokenize("Wear-resistant, Unisex!"), vec!["wear", "resistant", "unisex"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ,.;  ").is_empty());
    }

    #[test]
    fn mixed_cjk_latin_hand_enumerated() {
        // 羽毛球鞋 = four CJK chars, then a Latin run, then two more.
        let got = tokenize("YONEX羽毛球鞋 SHB510 白蓝");
        let expected = vec![
            "yonex", "羽", "羽毛", "毛", "毛球", "球", "球鞋", "鞋", "shb510", "白", "白蓝", "蓝",
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn basic_tokens_skip_bigrams() {
        assert_eq!(basic_tokens("白蓝 Size40"), vec!["白", "蓝", "size40"]);
    }

    #[test]
    fn containment_is_whole_token() {
        assert!(contains_tokens("shb510wcr White/Blue (Wide last)", "white/blue"));
        assert!(!contains_tokens("40", "4"));
        assert!(contains_tokens("men's wear-resistant shoes", "Wear-resistant"));
        assert!(!contains_tokens("anything", "  "));
    }
}
