//! Prompt templates.
//!
//! Each template is a text asset containing few-shot exemplars and `{}`
//! slots. A slot's name is the label that precedes it on its line, so
//! `Q: {}` is the `Q` slot and `Knowledge Triplets: {}` the
//! `Knowledge Triplets` slot. The built-in copies are compiled in; a
//! directory of edited copies can be loaded at startup instead.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: missing binding for placeholder {placeholder:?}")]
    MissingBinding {
        template: TemplateId,
        placeholder: String,
    },
    #[error("template {template}: slot {index} has no `Name: ` label before it")]
    UnnamedSlot { template: TemplateId, index: usize },
    #[error("prompt asset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    /// Task decomposition into sub-objectives.
    Decompose,
    /// Relation exploration for one tail entity.
    SelectRelations,
    /// Entity exploration over candidate triplets.
    SelectEntities,
    /// Sub-objective status update.
    UpdateMemory,
    /// Sufficiency check and answer.
    Answer,
    /// Reflection: whether to add entities.
    Reflect,
    /// Reflection: which entities to backtrack to.
    SelectBacktrack,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Decompose,
        TemplateId::SelectRelations,
        TemplateId::SelectEntities,
        TemplateId::UpdateMemory,
        TemplateId::Answer,
        TemplateId::Reflect,
        TemplateId::SelectBacktrack,
    ];

    /// Identifier used in asset file names (`<id>.txt`).
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Decompose => "A1",
            TemplateId::SelectRelations => "A2_1",
            TemplateId::SelectEntities => "A2_2",
            TemplateId::UpdateMemory => "A3",
            TemplateId::Answer => "A4_1",
            TemplateId::Reflect => "A4_2_reflect",
            TemplateId::SelectBacktrack => "A4_2_select",
        }
    }

    pub fn parse(id: &str) -> Option<Self> {
        let id = match id {
            "A4_1_answer" => "A4_1",
            other => other,
        };
        Self::ALL.into_iter().find(|t| t.as_str() == id)
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::Decompose => include_str!("../../prompts/A1.txt"),
            TemplateId::SelectRelations => include_str!("../../prompts/A2_1.txt"),
            TemplateId::SelectEntities => include_str!("../../prompts/A2_2.txt"),
            TemplateId::UpdateMemory => include_str!("../../prompts/A3.txt"),
            TemplateId::Answer => include_str!("../../prompts/A4_1.txt"),
            TemplateId::Reflect => include_str!("../../prompts/A4_2_reflect.txt"),
            TemplateId::SelectBacktrack => include_str!("../../prompts/A4_2_select.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    id: TemplateId,
    /// Literal text around the slots; `pieces.len() == slots.len() + 1`.
    pieces: Vec<String>,
    slots: Vec<String>,
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, text: &str) -> Result<Self, PromptError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        let text = text.strip_suffix('\r').unwrap_or(text);
        let pieces: Vec<String> = text.split("{}").map(str::to_string).collect();
        let mut slots = Vec::with_capacity(pieces.len() - 1);
        for (index, before) in pieces[..pieces.len() - 1].iter().enumerate() {
            let line = before.rsplit('\n').next().unwrap_or(before);
            let name = line.trim_end().trim_end_matches(':').trim();
            if name.is_empty() {
                return Err(PromptError::UnnamedSlot {
                    template: id,
                    index,
                });
            }
            slots.push(name.to_string());
        }
        Ok(Self { id, pieces, slots })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            out.push_str(piece);
            if let Some(slot) = self.slots.get(i) {
                let value = bindings
                    .iter()
                    .find(|(name, _)| *name == slot)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::MissingBinding {
                        template: self.id,
                        placeholder: slot.clone(),
                    })?;
                out.push_str(value);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: HashMap<TemplateId, PromptTemplate>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| {
                let t = PromptTemplate::parse(id, id.builtin()).expect("built-in templates parse");
                (id, t)
            })
            .collect();
        Self { templates }
    }

    /// Load `<id>.txt` for every template from `dir`. Files that are absent
    /// keep the built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut registry = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            registry
                .templates
                .insert(id, PromptTemplate::parse(id, &text)?);
        }
        Ok(registry)
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        self.template(id).render(bindings)
    }
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_slot_names() {
        let r = PromptRegistry::builtin();
        let names = |id| r.template(id).slots().to_vec();
        assert_eq!(names(TemplateId::Decompose), ["Q"]);
        assert_eq!(
            names(TemplateId::SelectRelations),
            ["Q", "Sub-Objectives", "Topic Entity", "Relations"]
        );
        assert_eq!(names(TemplateId::SelectEntities), ["Q", "Triplets"]);
        assert_eq!(
            names(TemplateId::UpdateMemory),
            ["Q", "Sub-Objectives", "Memory", "Knowledge Triplets"]
        );
        assert_eq!(
            names(TemplateId::Answer),
            ["Q", "Memory", "Knowledge Triplets"]
        );
        assert_eq!(
            names(TemplateId::Reflect),
            [
                "Q",
                "Entities set to be retrieved",
                "Memory",
                "Knowledge Triplets"
            ]
        );
        assert_eq!(
            names(TemplateId::SelectBacktrack),
            ["Q", "Reason", "Candidate Entities", "Memory"]
        );
    }

    #[test]
    fn decompose_render() {
        let out = PromptRegistry::builtin()
            .render(TemplateId::Decompose, &[("Q", "x")])
            .unwrap();
        assert!(out.starts_with("Please break down the process of answering the question"));
        assert!(out.ends_with("\nQ: x"));
    }

    #[test]
    fn reflect_render_asks_about_additional_entities() {
        let out = PromptRegistry::builtin()
            .render(
                TemplateId::Reflect,
                &[
                    ("Q", "q"),
                    ("Entities set to be retrieved", "[]"),
                    ("Memory", "{}"),
                    ("Knowledge Triplets", ""),
                ],
            )
            .unwrap();
        assert!(out.contains("is it necessary to add additional entities"));
        assert!(out.contains("must include \"Add\" and \"Reason\""));
    }

    #[test]
    fn missing_memory_binding_is_named() {
        let err = PromptRegistry::builtin()
            .render(
                TemplateId::Answer,
                &[("Q", "q"), ("Knowledge Triplets", "")],
            )
            .unwrap_err();
        match err {
            PromptError::MissingBinding { placeholder, .. } => assert_eq!(placeholder, "Memory"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::parse(TemplateId::Decompose, "A: {}\nB: {}").unwrap();
        assert_eq!(t.render(&[("A", "{}"), ("B", "b")]).unwrap(), "A: {}\nB: b");
    }

    #[test]
    fn unnamed_slot_rejected() {
        assert!(matches!(
            PromptTemplate::parse(TemplateId::Decompose, "prefix\n{}"),
            Err(PromptError::UnnamedSlot { index: 0, .. })
        ));
    }

    #[test]
    fn directory_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("A1.txt"), "Custom.\nQ: {}\n").unwrap();
        let r = PromptRegistry::from_dir(dir.path()).unwrap();
        assert_eq!(
            r.render(TemplateId::Decompose, &[("Q", "z")]).unwrap(),
            "Custom.\nQ: z"
        );
        assert!(r
            .render(TemplateId::SelectEntities, &[("Q", "q"), ("Triplets", "t")])
            .unwrap()
            .contains("minimum possible number of entities"));
    }

    #[test]
    fn template_ids_parse() {
        assert_eq!(TemplateId::parse("A4_1_answer"), Some(TemplateId::Answer));
        assert_eq!(
            TemplateId::parse("A4_2_select"),
            Some(TemplateId::SelectBacktrack)
        );
        assert_eq!(TemplateId::parse("B1"), None);
    }
}
