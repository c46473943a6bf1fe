//! Structured output grammar shared by every prompt.
//!
//! A reply must contain exactly one fenced block opened by a line reading
//! `` ```record `` and closed by a line reading `` ``` ``. Inside, every
//! non-blank line is `key: value` with `key` in `[a-z0-9_.]+` and a non-empty
//! single-line value. Keys may not repeat. Text outside the block is ignored.
//! Nothing is ever repaired: any deviation is a parse error.

use std::collections::BTreeMap;

pub const FENCE_OPEN: &str = "```record";
pub const FENCE_CLOSE: &str = "```";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    fields: BTreeMap<String, String>,
}

impl Record {
    pub fn parse(reply: &str) -> Result<Self, String> {
        let lines: Vec<&str> = reply.lines().map(|l| l.trim_end_matches('\r')).collect();
        let opens: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.trim() == FENCE_OPEN)
            .map(|(i, _)| i)
            .collect();
        let start = match opens.as_slice() {
            [one] => *one,
            [] => return Err("no ```record block".into()),
            _ => return Err("more than one ```record block".into()),
        };
        let end = lines[start + 1..]
            .iter()
            .position(|l| l.trim() == FENCE_CLOSE)
            .map(|p| p + start + 1)
            .ok_or("unterminated ```record block")?;

        let mut fields = BTreeMap::new();
        for (offset, line) in lines[start + 1..end].iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = start + offset + 2;
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| format!("line {lineno}: expected `key: value`"))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
            {
                return Err(format!("line {lineno}: bad key {key:?}"));
            }
            if value.is_empty() {
                return Err(format!("line {lineno}: empty value for {key}"));
            }
            if fields.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("line {lineno}: duplicate key {key}"));
            }
        }
        Ok(Self { fields })
    }

    pub fn get(&self, key: &str) -> Result<&str, String> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format!("missing key {key}"))
    }

    /// Fail when any key outside `allowed` is present.
    pub fn only(&self, allowed: &[String]) -> Result<(), String> {
        match self.fields.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(format!("unexpected key {k}")),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Render key/value pairs as a fenced record (used by fixtures and docs).
pub fn render_record<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::from(FENCE_OPEN);
    out.push('\n');
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v.replace(['\n', '\r'], " "));
        out.push('\n');
    }
    out.push_str(FENCE_CLOSE);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_block_with_surrounding_prose() {
        let r = Record::parse("Sure.\n```record\na: 1\nb.c: two words: yes\n```\nbye").unwrap();
        assert_eq!(r.get("a").unwrap(), "1");
        assert_eq!(r.get("b.c").unwrap(), "two words: yes");
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn rejects_deviations() {
        for bad in [
            "a: 1",
            "```record\na: 1",
            "```record\na: 1\n```\n```record\nb: 2\n```",
            "```record\nA: 1\n```",
            "```record\na 1\n```",
            "```record\na:\n```",
            "```record\na: 1\na: 2\n```",
        ] {
            assert!(Record::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn render_parses_back() {
        let text = render_record([("x", "one\ntwo".to_string()), ("y", "z".to_string())]);
        let r = Record::parse(&text).unwrap();
        assert_eq!(r.get("x").unwrap(), "one two");
        assert!(r.only(&["x".into(), "y".into()]).is_ok());
        assert!(r.only(&["x".into()]).is_err());
    }
}
