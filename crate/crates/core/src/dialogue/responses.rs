use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Response templates keyed by action label, e.g. `ask(customer.city)`,
/// `confirm`, `inform_result`. Placeholders are written `{name}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Responses {
    templates: BTreeMap<String, Vec<String>>,
}

impl Responses {
    pub fn from_json_str(source: &str, origin: &str) -> Result<Self> {
        let templates: BTreeMap<String, Vec<String>> =
            serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
        let empty: Vec<String> = templates
            .iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(k, _)| format!("response `{k}` has no templates"))
            .collect();
        if !empty.is_empty() {
            return Err(Error::Validation(empty));
        }
        Ok(Responses { templates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&source, &path.display().to_string())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.templates.contains_key(key)
    }

    /// Fills the first template for `key`. Unknown placeholders are kept as written.
    pub fn render(&self, key: &str, params: &[(&str, String)]) -> Result<String> {
        let template = self
            .templates
            .get(key)
            .and_then(|v| v.first())
            .ok_or_else(|| Error::MissingTemplate(key.to_string()))?;
        Ok(fill(template, params))
    }

    /// Renders `specific` if present, otherwise `general`.
    pub fn render_either(&self, specific: &str, general: &str, params: &[(&str, String)]) -> Result<String> {
        if self.contains(specific) {
            self.render(specific, params)
        } else {
            self.render(general, params)
        }
    }
}

fn fill(template: &str, params: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match params.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + close + 2]),
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn renders_specific_then_general() {
        let r = Responses::from_json_str(fixture::CINEMA_RESPONSES, "r").unwrap();
        assert_eq!(
            r.render_either("ask(customer.city)", "ask", &[("attribute", "city".into())])
                .unwrap(),
            "Which city do you live in?"
        );
        assert_eq!(
            r.render_either("ask(customer.nickname)", "ask", &[("attribute", "nickname".into())])
                .unwrap(),
            "What is the nickname?"
        );
        assert!(matches!(r.render("dance", &[]), Err(Error::MissingTemplate(k)) if k == "dance"));
    }

    #[test]
    fn fill_keeps_unknown_placeholders() {
        assert_eq!(fill("a {x} b {y} {", &[("x", "1".into())]), "a 1 b {y} {");
    }
}
