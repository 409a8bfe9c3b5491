//! Username anonymization for `@` mentions.

/// Replacement emitted for every mention.
pub const USERNAME_PLACEHOLDER: &str = "@[USERNAME]";

/// Rewrites every `@` that is immediately followed by a non-whitespace
/// character, together with the maximal non-whitespace run after it, to
/// `@[USERNAME]`. Everything else is copied byte for byte.
///
/// ```
/// use rubricate_core::corpus::anonymize;
/// assert_eq!(anonymize("@alice Actually, k=1"), "@[USERNAME] Actually, k=1");
/// assert_eq!(anonymize("great lecture"), "great lecture");
/// ```
pub fn anonymize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find('@') {
        out.push_str(&rest[..at]);
        let after = &rest[at + 1..];
        let run = after.find(char::is_whitespace).unwrap_or(after.len());
        if run == 0 {
            out.push('@');
        } else {
            out.push_str(USERNAME_PLACEHOLDER);
        }
        rest = &after[run..];
    }
    out.push_str(rest);
    out
}

/// True when `anonymize` would leave the text unchanged.
pub fn is_anonymized(text: &str) -> bool {
    anonymize(text) == text
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clarification_example() {
        assert_eq!(
            anonymize("@alice Actually, if a constant k=1/1m is used"),
            "@[USERNAME] Actually, if a constant k=1/1m is used"
        );
    }

    #[test]
    fn edge_cases() {
        assert_eq!(anonymize(""), "");
        assert_eq!(anonymize("email me at @"), "email me at @");
        assert_eq!(anonymize("@ bob"), "@ bob");
        assert_eq!(anonymize("hi @bob, and @carol!"), "hi @[USERNAME] and @[USERNAME]");
        assert_eq!(anonymize("x@y.com"), "x@[USERNAME]");
        assert_eq!(anonymize("@@a\t@b\n"), "@[USERNAME]\t@[USERNAME]\n");
        assert_eq!(anonymize("@Zoë über"), "@[USERNAME] über");
    }

    /// Independent oracle: split on whitespace boundaries by hand and
    /// rebuild from tokens.
    fn oracle(text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::new();
        let mut i = 0;
        while i < chars.len() {
            if chars[i] == '@' && i + 1 < chars.len() && !chars[i + 1].is_whitespace() {
                let mut j = i + 1;
                while j < chars.len() && !chars[j].is_whitespace() {
                    j += 1;
                }
                out.push_str("@[USERNAME]");
                i = j;
            } else {
                out.push(chars[i]);
                i += 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_idempotent(s in "[a-z@ \t\n\\[\\]é.,]{0,40}") {
            let once = anonymize(&s);
            prop_assert_eq!(&once, &oracle(&s));
            prop_assert_eq!(anonymize(&once), once.clone());
            prop_assert!(is_anonymized(&once));
        }
    }
}
