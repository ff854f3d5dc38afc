use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// What to do with characters outside the configured charset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    #[default]
    Drop,
    Error,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharsetPolicy {
    /// If set, only these characters are in the charset.
    pub allowed: Option<String>,
    /// Always outside the charset.
    pub excluded: String,
    /// Restrict the charset to lowercase alphabetic characters.
    pub lowercase_alpha_only: bool,
    pub unknown: UnknownPolicy,
}

impl CharsetPolicy {
    pub fn contains(&self, c: char) -> bool {
        if self.excluded.contains(c) {
            return false;
        }
        if self.lowercase_alpha_only && !(c.is_alphabetic() && c.is_lowercase()) {
            return false;
        }
        self.allowed
            .as_ref()
            .is_none_or(|a| a.nfc().any(|x| x == c))
    }
}

/// NFC-compose `text`, drop whitespace, and apply the charset policy.
/// Case is preserved.
pub fn normalize_transcription(text: &str, policy: &CharsetPolicy) -> Result<Vec<char>> {
    let mut out = Vec::new();
    for c in text.nfc().filter(|c| !c.is_whitespace()) {
        if policy.contains(c) {
            out.push(c);
            continue;
        }
        match policy.unknown {
            UnknownPolicy::Drop => {}
            UnknownPolicy::Passthrough => out.push(c),
            UnknownPolicy::Error => {
                return Err(Error::OutsideCharset {
                    character: c,
                    code: c as u32,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_word() {
        let got = normalize_transcription("domine", &CharsetPolicy::default()).unwrap();
        assert_eq!(got, vec!['d', 'o', 'm', 'i', 'n', 'e']);
    }

    #[test]
    fn excluded_letters_are_dropped() {
        let policy = CharsetPolicy {
            excluded: "jkvxyz".into(),
            ..Default::default()
        };
        assert_eq!(
            normalize_transcription("kalends", &policy).unwrap(),
            "alends".chars().collect::<Vec<_>>()
        );
    }

    #[test]
    fn decomposed_accent_composes() {
        let got = normalize_transcription("e\u{301}", &CharsetPolicy::default()).unwrap();
        assert_eq!(got, vec!['\u{e9}']);
    }

    #[test]
    fn error_policy_reports_code_point() {
        let policy = CharsetPolicy {
            excluded: "k".into(),
            unknown: UnknownPolicy::Error,
            ..Default::default()
        };
        match normalize_transcription("ok", &policy) {
            Err(Error::OutsideCharset {
                character: 'k',
                code: 0x6b,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lowercase_filter_and_passthrough() {
        let policy = CharsetPolicy {
            lowercase_alpha_only: true,
            ..Default::default()
        };
        assert_eq!(
            normalize_transcription("Ab, c7", &policy).unwrap(),
            vec!['b', 'c']
        );
        let policy = CharsetPolicy {
            allowed: Some("ab".into()),
            unknown: UnknownPolicy::Passthrough,
            ..Default::default()
        };
        assert_eq!(
            normalize_transcription("A b", &policy).unwrap(),
            vec!['A', 'b']
        );
    }
}
