//! Model-facing serialization of retrieved context and prompt rendering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{ContextBundle, Query};
use crate::kg::Triple;

pub const DEFAULT_SEP: &str = "<SEP>";

/// Joins triples as `(h, r, t) <SEP> (h, r, t)`. Fails if any field
/// contains the separator.
pub fn serialize_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I, sep: &str) -> Result<String> {
    let joiner = format!(" {sep} ");
    let mut out = String::new();
    for (i, triple) in triples.into_iter().enumerate() {
        if let Some(field) = triple.fields().into_iter().find(|f| !sep.is_empty() && f.contains(sep)) {
            return Err(Error::SeparatorInField {
                sep: sep.to_owned(),
                field: field.to_owned(),
            });
        }
        if i > 0 {
            out.push_str(&joiner);
        }
        out.push_str(&triple.to_string());
    }
    Ok(out)
}

pub fn serialize_context(bundle: &ContextBundle, sep: &str) -> Result<String> {
    serialize_triples(bundle.triples(), sep)
}

/// Inverse of [`serialize_triples`].
pub fn parse_context(context: &str, sep: &str) -> Result<Vec<Triple>> {
    if context.is_empty() {
        return Ok(Vec::new());
    }
    context.split(&format!(" {sep} ")).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    ImageRef,
    Question,
    Entities,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

/// `image <SEP> question <SEP> [entities] <SEP> context`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledInput {
    pub segments: Vec<Segment>,
    pub sep_token: String,
    pub rendered: String,
}

/// Entities as `[Kangana Ranaut, R. Madhavan]`.
pub fn entity_list(query: &Query) -> String {
    let names: Vec<&str> = query.entities.iter().map(|e| e.raw()).collect();
    format!("[{}]", names.join(", "))
}

pub fn assemble_input(image_ref: &str, query: &Query, context: &str, sep: &str) -> AssembledInput {
    let segments = vec![
        Segment {
            kind: SegmentKind::ImageRef,
            text: image_ref.to_owned(),
        },
        Segment {
            kind: SegmentKind::Question,
            text: query.question.clone(),
        },
        Segment {
            kind: SegmentKind::Entities,
            text: entity_list(query),
        },
        Segment {
            kind: SegmentKind::Context,
            text: context.to_owned(),
        },
    ];
    let rendered = segments
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(&format!(" {sep} "));
    AssembledInput {
        segments,
        sep_token: sep.to_owned(),
        rendered,
    }
}

pub const PLACEHOLDER_QUESTION: &str = "<question>";
pub const PLACEHOLDER_ENTITIES: &str = "<named entities>";
pub const PLACEHOLDER_TRIPLES: &str = "<triples string>";

const ZERO_SHOT_PLAIN: &str = "Please answer concisely in one or two words:\nQuestion: <question>\nNamed Entities: <named entities>\n";

const ZERO_SHOT_KNOWLEDGE: &str = "Please answer the question concisely in one or two words. We also provide Named Entities and knowledge triples separated by <sep> token for your assistance:\nQuestion: <question>\nNamed Entities: <named entities>\nTriples: <triples string>\n";

const SPATIAL_NORMALIZED: &str = "Please answer concisely in one or two words:\nQuestion: <question>\nNamed Entities: <named entities>\nDon\u{2019}t give named entities in the answer instead provide the answer in form Person in Center, Person in Left, Person in Right.\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateName {
    ZeroShotPlain,
    ZeroShotKnowledge,
    SpatialNormalized,
}

impl TemplateName {
    pub const ALL: [TemplateName; 3] = [Self::ZeroShotPlain, Self::ZeroShotKnowledge, Self::SpatialNormalized];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ZeroShotPlain => "zero-shot-plain",
            Self::ZeroShotKnowledge => "zero-shot-knowledge",
            Self::SpatialNormalized => "spatial-normalized",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown template {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
}

impl PromptTemplate {
    pub fn builtin(name: TemplateName) -> Self {
        let body = match name {
            TemplateName::ZeroShotPlain => ZERO_SHOT_PLAIN,
            TemplateName::ZeroShotKnowledge => ZERO_SHOT_KNOWLEDGE,
            TemplateName::SpatialNormalized => SPATIAL_NORMALIZED,
        };
        Self {
            name,
            body: body.to_owned(),
        }
    }
}

/// Fills the template placeholders in one left-to-right pass, so values
/// that happen to contain placeholder text are copied verbatim.
pub fn render_prompt(template: &PromptTemplate, query: &Query, context: Option<&str>) -> Result<String> {
    let entities: Vec<&str> = query.entities.iter().map(|e| e.raw()).collect();
    let entities = entities.join(", ");
    let value = |placeholder: &str| -> Result<&str> {
        match placeholder {
            PLACEHOLDER_QUESTION => Ok(&query.question),
            PLACEHOLDER_ENTITIES => Ok(&entities),
            _ => context.ok_or_else(|| Error::UnfilledPlaceholder(placeholder.to_owned())),
        }
    };

    let mut out = String::with_capacity(template.body.len() + 64);
    let mut rest = template.body.as_str();
    loop {
        let next = [PLACEHOLDER_QUESTION, PLACEHOLDER_ENTITIES, PLACEHOLDER_TRIPLES]
            .into_iter()
            .filter_map(|p| rest.find(p).map(|i| (i, p)))
            .min();
        let Some((idx, placeholder)) = next else {
            out.push_str(rest);
            break;
        };
        out.push_str(&rest[..idx]);
        out.push_str(value(placeholder)?);
        rest = &rest[idx + placeholder.len()..];
    }
    Ok(out)
}
