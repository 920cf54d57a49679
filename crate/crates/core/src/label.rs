use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{}";
pub const DEFAULT_TEMPLATE: &str = "This is a photo of a {}.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Seen,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub name: String,
    pub kind: LabelKind,
}

impl Label {
    pub fn new(name: impl Into<String>, kind: LabelKind) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidLabel("label name is empty".into()));
        }
        Ok(Self { name, kind })
    }

    pub fn seen(name: impl Into<String>) -> Result<Self> {
        Self::new(name, LabelKind::Seen)
    }

    pub fn generated(name: impl Into<String>) -> Result<Self> {
        Self::new(name, LabelKind::Generated)
    }

    /// Key used for case-insensitive comparisons between labels.
    pub fn fold(&self) -> String {
        fold_case(&self.name)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub(crate) fn fold_case(s: &str) -> String {
    s.to_lowercase()
}

/// Builds seen labels from class names, rejecting case-insensitive duplicates.
pub fn seen_labels<S: AsRef<str>>(names: &[S]) -> Result<Vec<Label>> {
    let mut folded = std::collections::HashSet::new();
    names
        .iter()
        .map(|n| {
            let label = Label::seen(n.as_ref())?;
            if !folded.insert(label.fold()) {
                return Err(Error::DuplicateLabel(label.name));
            }
            Ok(label)
        })
        .collect()
}

/// Sentence frame with exactly one `{}` marker for the label name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.matches(PLACEHOLDER).count() != 1 {
            return Err(Error::InvalidTemplate(template));
        }
        Ok(Self(template))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Substitutes `name` for the marker; nothing else is touched.
    pub fn render(&self, name: &str) -> String {
        self.0.replacen(PLACEHOLDER, name, 1)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(DEFAULT_TEMPLATE.to_owned())
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> Self {
        t.0
    }
}

pub fn render_prompt(template: &PromptTemplate, label: &Label) -> String {
    template.render(&label.name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_examples() {
        let t = PromptTemplate::default();
        assert_eq!(
            render_prompt(&t, &Label::seen("dog").unwrap()),
            "This is a photo of a dog."
        );
        assert_eq!(
            render_prompt(&t, &Label::seen("frying pan").unwrap()),
            "This is a photo of a frying pan."
        );
        let id = PromptTemplate::new("{}").unwrap();
        assert_eq!(render_prompt(&id, &Label::generated("cat").unwrap()), "cat");
    }

    #[test]
    fn render_keeps_case_and_whitespace() {
        let t = PromptTemplate::new("<{}>").unwrap();
        assert_eq!(t.render(" Big Cat "), "< Big Cat >");
    }

    #[test]
    fn template_needs_exactly_one_marker() {
        assert!(PromptTemplate::new("no marker").is_err());
        assert!(PromptTemplate::new("{} and {}").is_err());
        assert!(serde_json::from_str::<PromptTemplate>("\"x {} y\"").is_ok());
        assert!(serde_json::from_str::<PromptTemplate>("\"x y\"").is_err());
    }

    #[test]
    fn empty_name_rejected() {
        assert!(matches!(Label::seen(""), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn seen_labels_dedup_case_insensitively() {
        assert!(seen_labels(&["cat", "dog"]).is_ok());
        assert!(matches!(
            seen_labels(&["cat", "Cat"]),
            Err(Error::DuplicateLabel(n)) if n == "Cat"
        ));
    }
}
