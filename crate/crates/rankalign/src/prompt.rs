//! Instruction-style serialization of query-candidate pairs.
//!
//! Each labeled pair becomes a three-message chat example: a system message
//! restricting the output to a two-label vocabulary, a user message holding
//! the query and candidate behind explicit delimiters (with an `<image>`
//! placeholder for visual candidates), and an optional assistant message
//! carrying the gold label. The numeric feature view consumed by the scorer
//! is carried alongside the rendered text in [`PromptContext`].
//!
//! The vocabulary is swappable (for example `yes`/`no` or
//! `high-risk`/`low-risk`); it affects rendered strings only, never feature
//! vectors or anything computed from them.

use serde::{Deserialize, Serialize};

use crate::corpus::{Candidate, Modality, Query};
use crate::error::{Error, Result};

pub const QUERY_DELIMITER: &str = "<QUERY>: ";
pub const DOCUMENT_DELIMITER: &str = " <DOCUMENT>: ";
pub const IMAGE_PLACEHOLDER: &str = "<image>";

/// The two possible judgments, independent of how they are spelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_bit(bit: u8) -> Label {
        if bit == 1 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// Index into two-element logit/probability arrays (positive first).
    pub fn index(self) -> usize {
        match self {
            Label::Positive => 0,
            Label::Negative => 1,
        }
    }

    /// One-hot encoding in (positive, negative) order.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Positive => [1.0, 0.0],
            Label::Negative => [0.0, 1.0],
        }
    }
}

/// The configurable two-label output vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    pub positive: String,
    pub negative: String,
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self {
            positive: "yes".into(),
            negative: "no".into(),
        }
    }
}

impl LabelVocabulary {
    pub fn new(positive: impl Into<String>, negative: impl Into<String>) -> Result<Self> {
        let v = Self {
            positive: positive.into(),
            negative: negative.into(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::InvalidConfig(
                "vocabulary labels must be nonempty".into(),
            ));
        }
        if self.positive == self.negative {
            return Err(Error::InvalidConfig(
                "vocabulary labels must be distinct".into(),
            ));
        }
        Ok(())
    }

    pub fn render(&self, label: Label) -> &str {
        match label {
            Label::Positive => &self.positive,
            Label::Negative => &self.negative,
        }
    }

    pub fn parse(&self, text: &str) -> Option<Label> {
        if text == self.positive {
            Some(Label::Positive)
        } else if text == self.negative {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

/// A three-message chat example; the assistant slot is empty at inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExample {
    pub system: String,
    pub user: String,
    pub assistant: Option<String>,
}

/// Scorer-facing view of a serialized pair: ids, the numeric feature vector
/// `[query features || candidate features || modality one-hot]`, and the
/// rendered (system, user) text.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub query_id: String,
    pub cand_id: String,
    pub features: Vec<f64>,
    pub system: String,
    pub user: String,
}

/// System instruction, parameterized by the vocabulary.
pub fn system_prompt(vocab: &LabelVocabulary) -> String {
    format!(
        "You are a multimodal relevance judge. Given a query and a candidate \
         document (text, image, or table), decide whether the candidate is \
         relevant to the query. Respond with exactly one label: '{}' or '{}'. \
         Do not output anything else.",
        vocab.positive, vocab.negative
    )
}

fn render_candidate(c: &Candidate) -> String {
    match c.modality {
        Modality::Text => c.cand_id.clone(),
        Modality::Image | Modality::Table => format!("{IMAGE_PLACEHOLDER} {}", c.cand_id),
    }
}

/// Serialize a (query, candidate, optional label) triple into chat form.
///
/// The user message contains each delimiter exactly once; image and table
/// candidates carry exactly one `<image>` placeholder.
pub fn serialize_example(
    q: &Query,
    c: &Candidate,
    vocab: &LabelVocabulary,
    label: Option<Label>,
) -> ChatExample {
    let user = format!(
        "{QUERY_DELIMITER}{}{DOCUMENT_DELIMITER}{}",
        q.query_id,
        render_candidate(c)
    );
    ChatExample {
        system: system_prompt(vocab),
        user,
        assistant: label.map(|l| vocab.render(l).to_string()),
    }
}

/// Recover `(query_id, cand_id, label)` from a serialized example.
pub fn parse_example(
    example: &ChatExample,
    vocab: &LabelVocabulary,
) -> Result<(String, String, Option<Label>)> {
    let rest = example
        .user
        .strip_prefix(QUERY_DELIMITER)
        .ok_or_else(|| Error::InvalidConfig("user message lacks query delimiter".into()))?;
    let (query_id, doc) = rest
        .split_once(DOCUMENT_DELIMITER)
        .ok_or_else(|| Error::InvalidConfig("user message lacks document delimiter".into()))?;
    let cand_id = doc
        .strip_prefix(IMAGE_PLACEHOLDER)
        .map(|s| s.trim_start())
        .unwrap_or(doc);
    let label = match &example.assistant {
        None => None,
        Some(text) => Some(vocab.parse(text).ok_or_else(|| {
            Error::InvalidConfig(format!("assistant label {text:?} not in vocabulary"))
        })?),
    };
    Ok((query_id.to_string(), cand_id.to_string(), label))
}

/// Build the numeric + rendered context for one pair.
pub fn build_prompt_context(q: &Query, c: &Candidate) -> Result<PromptContext> {
    if q.features.len() != c.features.len() {
        return Err(Error::DimensionMismatch {
            expected: q.features.len(),
            got: c.features.len(),
        });
    }
    let mut features = Vec::with_capacity(2 * q.features.len() + 3);
    features.extend_from_slice(&q.features);
    features.extend_from_slice(&c.features);
    features.extend_from_slice(&c.modality.one_hot());
    let rendered = serialize_example(q, c, &LabelVocabulary::default(), None);
    Ok(PromptContext {
        query_id: q.query_id.clone(),
        cand_id: c.cand_id.clone(),
        features,
        system: rendered.system,
        user: rendered.user,
    })
}

/// One line of `sft.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub messages: Vec<ChatMessage>,
    pub query_id: String,
    pub cand_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl SftRecord {
    pub fn from_example(example: &ChatExample, query_id: &str, cand_id: &str) -> Self {
        let mut messages = vec![
            ChatMessage {
                role: "system".into(),
                content: example.system.clone(),
            },
            ChatMessage {
                role: "user".into(),
                content: example.user.clone(),
            },
        ];
        if let Some(assistant) = &example.assistant {
            messages.push(ChatMessage {
                role: "assistant".into(),
                content: assistant.clone(),
            });
        }
        Self {
            messages,
            query_id: query_id.into(),
            cand_id: cand_id.into(),
        }
    }

    pub fn assistant_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == "assistant")
            .map(|m| m.content.as_str())
    }
}
