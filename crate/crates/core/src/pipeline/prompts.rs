//! Prompt templates and documentation assembly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case::DocumentationBundle;

pub const DOCUMENTATION_PLACEHOLDER: &str = "{documentation}";
pub const RAW_RESPONSE_PLACEHOLDER: &str = "{raw_response}";

pub const NOTE_HEADING: &str = "Anesthesia Pre-procedure Evaluation Note:";
pub const MEDICATIONS_HEADING: &str = "Active Medication List:";
pub const NOT_AVAILABLE: &str = "NOT AVAILABLE";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("cannot read prompt template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{template} template must contain {placeholder} exactly once")]
    Placeholder {
        template: &'static str,
        placeholder: &'static str,
    },
}

/// The system, classification and parsing prompts. User-prompt templates
/// carry exactly one placeholder each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    system: String,
    classification: String,
    parsing: String,
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self::new(
            include_str!("../../prompts/system.txt"),
            include_str!("../../prompts/classification.txt"),
            include_str!("../../prompts/parsing.txt"),
        )
        .expect("bundled prompts are valid")
    }

    pub fn new(
        system: impl Into<String>,
        classification: impl Into<String>,
        parsing: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let templates = Self {
            system: system.into(),
            classification: classification.into(),
            parsing: parsing.into(),
        };
        if templates
            .classification
            .matches(DOCUMENTATION_PLACEHOLDER)
            .count()
            != 1
        {
            return Err(PromptError::Placeholder {
                template: "classification",
                placeholder: DOCUMENTATION_PLACEHOLDER,
            });
        }
        if templates.parsing.matches(RAW_RESPONSE_PLACEHOLDER).count() != 1 {
            return Err(PromptError::Placeholder {
                template: "parsing",
                placeholder: RAW_RESPONSE_PLACEHOLDER,
            });
        }
        Ok(templates)
    }

    /// Load `system.txt`, `classification.txt` and `parsing.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::new(
            read("system.txt")?,
            read("classification.txt")?,
            read("parsing.txt")?,
        )
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn classification_template(&self) -> &str {
        &self.classification
    }

    pub fn parsing_template(&self) -> &str {
        &self.parsing
    }

    pub fn classification_prompt(&self, documentation: &str) -> String {
        substitute(
            &self.classification,
            DOCUMENTATION_PLACEHOLDER,
            documentation,
        )
    }

    pub fn parsing_prompt(&self, raw_response: &str) -> String {
        substitute(&self.parsing, RAW_RESPONSE_PLACEHOLDER, raw_response)
    }

    /// Recover the documentation from a dispatched classification prompt.
    pub fn documentation_in<'a>(&self, prompt: &'a str) -> Option<&'a str> {
        unwrap_template(&self.classification, DOCUMENTATION_PLACEHOLDER, prompt)
    }

    /// Recover the passage from a dispatched parsing prompt.
    pub fn raw_response_in<'a>(&self, prompt: &'a str) -> Option<&'a str> {
        unwrap_template(&self.parsing, RAW_RESPONSE_PLACEHOLDER, prompt)
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

// Single pass: text substituted in is never rescanned for placeholders.
fn substitute(template: &str, placeholder: &str, value: &str) -> String {
    let (head, tail) = template
        .split_once(placeholder)
        .expect("placeholder presence is validated on construction");
    let mut out = String::with_capacity(template.len() + value.len());
    out.push_str(head);
    out.push_str(value);
    out.push_str(tail);
    out
}

fn unwrap_template<'a>(template: &str, placeholder: &str, prompt: &'a str) -> Option<&'a str> {
    let (head, tail) = template.split_once(placeholder)?;
    let inner = prompt.strip_prefix(head)?.strip_suffix(tail)?;
    Some(inner)
}

/// Prompts as dispatched for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub user_prompt: String,
    pub parse_prompt: String,
}

impl PromptBundle {
    pub fn assemble(templates: &PromptTemplates, documentation: &str, raw_response: &str) -> Self {
        Self {
            system_prompt: templates.system().to_string(),
            user_prompt: templates.classification_prompt(documentation),
            parse_prompt: templates.parsing_prompt(raw_response),
        }
    }
}

/// Render the note and medication list under labeled headings. Missing
/// sections become explicit `NOT AVAILABLE` markers.
pub fn build_documentation(bundle: &DocumentationBundle) -> String {
    let mut out = String::new();
    out.push_str(NOTE_HEADING);
    out.push('\n');
    match bundle.preop_note.as_deref().map(str::trim) {
        Some(note) if !note.is_empty() => out.push_str(note),
        _ => out.push_str(NOT_AVAILABLE),
    }
    out.push_str("\n\n");
    out.push_str(MEDICATIONS_HEADING);
    out.push('\n');
    let meds: Vec<&str> = bundle
        .medications
        .iter()
        .map(|m| m.trim())
        .filter(|m| !m.is_empty())
        .collect();
    if meds.is_empty() {
        out.push_str(NOT_AVAILABLE);
    } else {
        for (i, m) in meds.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str("- ");
            out.push_str(&m.replace(['\n', '\r'], " "));
        }
    }
    out
}

/// Inverse of [`build_documentation`] for text produced by it. Sections
/// marked `NOT AVAILABLE` come back absent.
pub fn parse_documentation(text: &str) -> Option<DocumentationBundle> {
    let rest = text.strip_prefix(NOTE_HEADING)?.strip_prefix('\n')?;
    let marker = format!("\n\n{MEDICATIONS_HEADING}\n");
    let split = rest.rfind(&marker)?;
    let note = &rest[..split];
    let meds = &rest[split + marker.len()..];
    let preop_note = (note != NOT_AVAILABLE).then(|| note.to_string());
    let medications = if meds == NOT_AVAILABLE {
        Vec::new()
    } else {
        meds.lines()
            .map(|l| l.strip_prefix("- ").unwrap_or(l).to_string())
            .collect()
    };
    Some(DocumentationBundle {
        preop_note,
        medications,
    })
}
