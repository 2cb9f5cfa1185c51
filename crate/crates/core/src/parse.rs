//! Tokenizer for the small `name(key=value, ...)` spec strings used by
//! distributions and activations.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Call<'a> {
    pub name: &'a str,
    /// Raw text between the outer parentheses, empty if there were none.
    pub inner: &'a str,
}

pub(crate) fn call(s: &str) -> Result<Call<'_>> {
    let s = s.trim();
    match s.find('(') {
        None => {
            if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::parse(s, "expected an identifier"));
            }
            Ok(Call { name: s, inner: "" })
        }
        Some(open) => {
            if !s.ends_with(')') {
                return Err(Error::parse(s, "missing closing parenthesis"));
            }
            let name = s[..open].trim();
            if name.is_empty() {
                return Err(Error::parse(s, "missing name before '('"));
            }
            Ok(Call { name, inner: &s[open + 1..s.len() - 1] })
        }
    }
}

/// Split on `sep` at parenthesis depth zero.
pub(crate) fn split_top_level(s: &str, sep: char) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::parse(s, "unbalanced parentheses"));
                }
            }
            c if c == sep && depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::parse(s, "unbalanced parentheses"));
    }
    parts.push(s[start..].trim());
    Ok(parts)
}

/// Parse `key=value` pairs separated by commas.
pub(crate) fn key_values(inner: &str) -> Result<Vec<(&str, &str)>> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    split_top_level(inner, ',')?
        .into_iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(kv, "expected key=value"))?;
            Ok((k.trim(), v.trim()))
        })
        .collect()
}

pub(crate) fn number(context: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::parse(context, format!("'{v}' is not a finite number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_only_at_depth_zero() {
        let parts = split_top_level("0.5*a(x=1,y=2)+0.5*b", '+').unwrap();
        assert_eq!(parts, vec!["0.5*a(x=1,y=2)", "0.5*b"]);
        assert!(split_top_level("a(b", ',').is_err());
    }

    #[test]
    fn parses_calls() {
        assert_eq!(call("cos(alpha=1.5)").unwrap(), Call { name: "cos", inner: "alpha=1.5" });
        assert_eq!(call(" identity ").unwrap(), Call { name: "identity", inner: "" });
        assert!(call("cos(alpha=1").is_err());
        assert_eq!(key_values("a=1, b = 2").unwrap(), vec![("a", "1"), ("b", "2")]);
    }
}
