use std::sync::LazyLock;

use regex::Regex;

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
static WORD_CHAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\w$").unwrap());

/// A mention starts at an `@` not preceded by a word character, `@`, or the
/// closing `>` of an earlier placeholder.
fn replace_mentions(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for m in MENTION.find_iter(s) {
        let prev = s[..m.start()].chars().next_back();
        let blocked = prev.is_some_and(|c| c == '>' || c == '@' || WORD_CHAR.is_match(c.encode_utf8(&mut [0; 4])));
        if !blocked {
            out.push_str(&s[last..m.start()]);
            out.push_str("<user>");
            last = m.end();
        }
    }
    out.push_str(&s[last..]);
    out
}

/// Lowercases, replaces URLs with `<url>` and @-mentions with `<user>`,
/// collapses whitespace runs and trims.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let no_urls = URL.replace_all(&lower, "<url>");
    let no_users = replace_mentions(&no_urls);
    no_users.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_text("I am HAPPY!!"), "i am happy!!");
        assert_eq!(normalize_text("see https://x.co/ab now"), "see <url> now");
        assert_eq!(normalize_text("  @sam   hi "), "<user> hi");
        assert_eq!(normalize_text("mail me at a@b.com"), "mail me at a@b.com");
        assert_eq!(normalize_text("go to www.Example.org\tplease"), "go to <url> please");
        assert_eq!(normalize_text(" \n "), "");
        assert_eq!(normalize_text("@0@a (@bob)"), "<user>@a (<user>)");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,60}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn idempotent_on_tweetlike(words in proptest::collection::vec(
            prop_oneof![
                "[A-Za-z]{1,8}",
                "@[A-Za-z0-9_]{1,8}",
                "https?://[a-z]{1,5}\\.[a-z]{2,3}/[A-Za-z0-9]{0,5}",
                "[!?.,:;]{1,3}",
            ], 0..12)) {
            let s = words.join("  ");
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.contains("  "));
        }
    }
}
