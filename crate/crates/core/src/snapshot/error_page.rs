use regex::{Regex, RegexBuilder};

use super::PageSnapshot;

/// Error-page patterns, matched case-insensitively against title and body.
///
/// File form: one pattern per line. A line starting with `^` is an anchored
/// regular expression; anything else is a plain substring. Blank lines and
/// lines starting with `#` are ignored.
#[derive(Debug, Clone)]
pub struct ErrorPatterns {
    substrings: Vec<String>,
    regexes: Vec<Regex>,
}

const DEFAULT_PATTERNS: &str = "\
# HTTP status pages
400 bad request
401 unauthorized
403 forbidden
404 not found
410 gone
429 too many requests
500 internal server error
502 bad gateway
503 service unavailable
504 gateway timeout
page not found
^\\s*(error\\s+)?[45]\\d\\d\\b
";

impl Default for ErrorPatterns {
    fn default() -> Self {
        Self::from_lines(DEFAULT_PATTERNS).expect("default patterns compile")
    }
}

impl ErrorPatterns {
    pub fn from_lines(src: &str) -> Result<Self, regex::Error> {
        let mut substrings = Vec::new();
        let mut regexes = Vec::new();
        for line in src.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('^') {
                regexes.push(RegexBuilder::new(line).case_insensitive(true).build()?);
            } else {
                substrings.push(line.to_lowercase());
            }
        }
        Ok(Self { substrings, regexes })
    }

    pub fn matches(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.substrings.iter().any(|p| lower.contains(p.as_str()))
            || self.regexes.iter().any(|r| r.is_match(text))
    }
}

pub fn is_error_page(snapshot: &PageSnapshot, patterns: &ErrorPatterns) -> bool {
    [snapshot.title.as_deref(), snapshot.body_text.as_deref()]
        .into_iter()
        .flatten()
        .any(|t| patterns.matches(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::load_snapshot;

    fn snap(title: &str, body: &str) -> PageSnapshot {
        let src = serde_json::json!({
            "id": "p", "platform": "web", "page_size": [10, 10], "viewport": [10, 10],
            "title": title, "body_text": body, "root": 0,
            "nodes": [{"id": 0, "role": "document", "bbox": [0, 0, 10, 10]}]
        });
        load_snapshot(src.to_string().as_bytes()).unwrap()
    }

    #[test]
    fn title_404() {
        assert!(is_error_page(
            &snap("404 Not Found", ""),
            &ErrorPatterns::default()
        ));
    }

    #[test]
    fn normal_page() {
        let p = snap("Welcome", "Latest news and 404 reasons to read on");
        assert!(!is_error_page(&p, &ErrorPatterns::default()));
    }

    #[test]
    fn standard_status_strings_in_body() {
        let pats = ErrorPatterns::default();
        for body in [
            "503 Service Unavailable",
            "Error 500: Internal Server Error",
            "502 Bad Gateway - nginx",
            "HTTP 403 Forbidden",
            "Sorry, page not found.",
        ] {
            assert!(is_error_page(&snap("x", body), &pats), "{body}");
        }
    }

    #[test]
    fn custom_pattern_file() {
        let pats = ErrorPatterns::from_lines("# c\n\ndomain expired\n^oops").unwrap();
        assert!(pats.matches("This Domain Expired"));
        assert!(pats.matches("OOPS something"));
        assert!(!pats.matches("well oops"));
        assert!(ErrorPatterns::from_lines("^(").is_err());
    }
}
