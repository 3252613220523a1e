//! Tweet tokenization.
//!
//! With the default settings URLs and `@mentions` are dropped, hashtags keep
//! their body, text is lowercased and split on every character that is not a
//! Unicode letter or digit (so apostrophes split `l'affaire` into `l`,
//! `affaire`).

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
// The leading group keeps e-mail addresses and `a@b` from being read as mentions.
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^\w@])@\w+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^\w#])#\w+").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub strip_urls: bool,
    pub strip_mentions: bool,
    /// Keep `#topic` as `topic`; when false the whole hashtag is dropped.
    pub keep_hashtag_body: bool,
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            strip_urls: true,
            strip_mentions: true,
            keep_hashtag_body: true,
            lowercase: true,
        }
    }
}

/// Split a tweet into tokens.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut cleaned = std::borrow::Cow::Borrowed(text);
    if config.strip_urls {
        cleaned = URL.replace_all(&cleaned, " ").into_owned().into();
    }
    if config.strip_mentions {
        cleaned = MENTION.replace_all(&cleaned, "$1 ").into_owned().into();
    }
    if !config.keep_hashtag_body {
        cleaned = HASHTAG.replace_all(&cleaned, "$1 ").into_owned().into();
    }
    cleaned
        .split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(|token| {
            if config.lowercase {
                token.to_lowercase()
            } else {
                token.to_owned()
            }
        })
        .collect()
}

const STOPWORDS_EN: &str = include_str!("../resources/stopwords/en.txt");
const STOPWORDS_FR: &str = include_str!("../resources/stopwords/fr.txt");

/// Built-in stopword list for a language tag (`en`, `fr`).
pub fn builtin_stopwords(language: &str) -> Option<HashSet<String>> {
    let raw = match language.to_ascii_lowercase().as_str() {
        "en" | "english" => STOPWORDS_EN,
        "fr" | "french" => STOPWORDS_FR,
        _ => return None,
    };
    Some(parse_stopwords(raw))
}

/// Read a stopword list, one word per line; `#` starts a comment line.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&raw))
}

fn parse_stopwords(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text, &TokenizerConfig::default())
    }

    #[test]
    fn defaults_drop_urls_and_mentions() {
        assert_eq!(
            toks("Check https://t.co/x #Breaking @user News"),
            ["check", "breaking", "news"]
        );
        assert!(toks("").is_empty());
        assert_eq!(toks("L'affaire Benalla!!!"), ["l", "affaire", "benalla"]);
    }

    #[test]
    fn flags_can_be_turned_off() {
        let text = "See https://t.co/x #Breaking @User News";
        let keep_all = TokenizerConfig {
            strip_urls: false,
            strip_mentions: false,
            keep_hashtag_body: true,
            lowercase: false,
        };
        assert_eq!(
            tokenize(text, &keep_all),
            ["See", "https", "t", "co", "x", "Breaking", "User", "News"]
        );
        let no_hashtags = TokenizerConfig {
            keep_hashtag_body: false,
            ..TokenizerConfig::default()
        };
        assert_eq!(tokenize(text, &no_hashtags), ["see", "news"]);
    }

    #[test]
    fn stopword_lists_are_available() {
        let en = builtin_stopwords("en").unwrap();
        assert!(en.contains("the") && en.contains("and"));
        let fr = builtin_stopwords("FR").unwrap();
        assert!(fr.contains("le") && fr.contains("l"));
        assert!(builtin_stopwords("xx").is_none());
    }

    proptest! {
        #[test]
        fn clean_text_is_a_fixed_point(words in prop::collection::vec("[a-z0-9àéèçœ]{1,12}", 0..20)) {
            let joined = words.join(" ");
            prop_assert_eq!(toks(&joined), words);
        }

        #[test]
        fn no_token_looks_like_url_or_mention(text in "[a-zA-Z@#:/. ]{0,60}") {
            for token in toks(&text) {
                prop_assert!(!token.is_empty());
                prop_assert!(!token.contains('@') && !token.contains("://"));
                prop_assert!(!token.chars().any(char::is_whitespace));
            }
        }
    }
}
