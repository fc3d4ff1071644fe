//! Entity label normalization.
//!
//! Labels are compared after lowercasing, trimming, collapsing internal
//! whitespace runs to one space, and dropping whitespace that follows a
//! period, so `"R. Madhavan"`, `"r.madhavan"` and `" R.  Madhavan "` all
//! normalize to `"r.madhavan"`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A surface-form entity label paired with its normalized key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityLabel {
    raw: String,
    normalized: String,
}

impl EntityLabel {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let normalized = normalize(&raw);
        Self { raw, normalized }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }
}

impl From<&str> for EntityLabel {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl From<String> for EntityLabel {
    fn from(s: String) -> Self {
        Self::new(s)
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for EntityLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for EntityLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer).map(EntityLabel::new)
    }
}

/// Normalized key for an entity label (or any other text compared the same way).
pub fn normalize(text: &str) -> String {
    NormalizedView::new(text).text
}

/// The normalized form of a text together with, for every normalized
/// character, the byte range in the source it came from.
#[derive(Debug)]
pub(crate) struct NormalizedView {
    pub(crate) text: String,
    /// One entry per `char` of `text`.
    pub(crate) spans: Vec<Range<usize>>,
}

impl NormalizedView {
    pub(crate) fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut spans = Vec::with_capacity(source.len());
        // Start offset of a whitespace run not yet emitted.
        let mut pending_space: Option<usize> = None;
        let mut last: Option<char> = None;

        for (offset, ch) in source.char_indices() {
            if ch.is_whitespace() {
                pending_space.get_or_insert(offset);
                continue;
            }
            if let Some(start) = pending_space.take() {
                if last.is_some_and(|c| c != '.') {
                    text.push(' ');
                    spans.push(start..offset);
                }
            }
            let end = offset + ch.len_utf8();
            for lower in ch.to_lowercase() {
                text.push(lower);
                spans.push(offset..end);
                last = Some(lower);
            }
        }
        Self { text, spans }
    }

    /// Byte offset in `text` of each char, plus the total length.
    pub(crate) fn char_offsets(&self) -> Vec<usize> {
        let mut offsets: Vec<usize> = self.text.char_indices().map(|(i, _)| i).collect();
        offsets.push(self.text.len());
        offsets
    }
}
