//! Prompting baseline: chat templates, strict label parsing and scoring.

use crate::io_util::write_atomic;
use crate::model::{ModelError, Transformer};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("text is empty")]
    EmptyText,
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("example {index} has label {label}, outside the {task} label set")]
    LabelOutOfRange { index: usize, label: i64, task: Task },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("failed to load model: {0}")]
    ModelLoadFailure(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PromptError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Emotion,
}

impl Task {
    pub fn num_labels(self) -> i64 {
        match self {
            Task::Binary => 2,
            Task::Emotion => 6,
        }
    }

    pub fn contains(self, label: i64) -> bool {
        (0..self.num_labels()).contains(&label)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::Emotion => "emotion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ZsBinary,
    ZsEmotion,
    FsBinary,
    FsEmotion,
    CotBinary,
    CotEmotion,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::ZsBinary,
        TemplateId::ZsEmotion,
        TemplateId::FsBinary,
        TemplateId::FsEmotion,
        TemplateId::CotBinary,
        TemplateId::CotEmotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::ZsBinary => "zs_binary",
            TemplateId::ZsEmotion => "zs_emotion",
            TemplateId::FsBinary => "fs_binary",
            TemplateId::FsEmotion => "fs_emotion",
            TemplateId::CotBinary => "cot_binary",
            TemplateId::CotEmotion => "cot_emotion",
        }
    }

    pub fn task(self) -> Task {
        match self {
            TemplateId::ZsBinary | TemplateId::FsBinary | TemplateId::CotBinary => Task::Binary,
            _ => Task::Emotion,
        }
    }

    pub fn is_chain_of_thought(self) -> bool {
        matches!(self, TemplateId::CotBinary | TemplateId::CotEmotion)
    }

    /// 8 tokens for direct answers, 256 when the template asks for reasoning.
    pub fn default_max_new_tokens(self) -> usize {
        if self.is_chain_of_thought() {
            256
        } else {
            8
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

macro_rules! template_files {
    ($dir:literal) => {
        (
            include_str!(concat!("../fixtures/templates/", $dir, "/system.txt")),
            include_str!(concat!("../fixtures/templates/", $dir, "/user.txt")),
            include_str!(concat!("../fixtures/templates/", $dir, "/assistant.txt")),
        )
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub system: String,
    /// Contains exactly one `{text}` slot.
    pub user: String,
    pub assistant: String,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> Self {
        let (system, user, assistant) = match id {
            TemplateId::ZsBinary => template_files!("zs_binary"),
            TemplateId::ZsEmotion => template_files!("zs_emotion"),
            TemplateId::FsBinary => template_files!("fs_binary"),
            TemplateId::FsEmotion => template_files!("fs_emotion"),
            TemplateId::CotBinary => template_files!("cot_binary"),
            TemplateId::CotEmotion => template_files!("cot_emotion"),
        };
        Self { id, system: system.into(), user: user.into(), assistant: assistant.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

pub const TEXT_SLOT: &str = "{text}";

/// System, user and assistant messages with the text placed in the user slot.
pub fn render_prompt(template: &PromptTemplate, text: &str) -> Result<Vec<ChatMessage>> {
    if text.trim().is_empty() {
        return Err(PromptError::EmptyText);
    }
    Ok(vec![
        ChatMessage { role: Role::System, content: template.system.clone() },
        ChatMessage { role: Role::User, content: template.user.replacen(TEXT_SLOT, text, 1) },
        ChatMessage { role: Role::Assistant, content: template.assistant.clone() },
    ])
}

/// Llama 3 header format, ending with an open assistant turn for generation.
/// The leading begin-of-text marker is left to the tokenizer.
pub fn format_chat(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str("<|start_header_id|>");
        out.push_str(m.role.as_str());
        out.push_str("<|end_header_id|>\n\n");
        out.push_str(&m.content);
        out.push_str("<|eot_id|>");
    }
    out.push_str("<|start_header_id|>assistant<|end_header_id|>\n\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Value(i64),
    Unparseable(UnparseableTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnparseableTag {
    #[serde(rename = "UNPARSEABLE")]
    Unparseable,
}

pub const UNPARSEABLE: Label = Label::Unparseable(UnparseableTag::Unparseable);

impl Label {
    pub fn value(self) -> Option<i64> {
        match self {
            Label::Value(v) => Some(v),
            Label::Unparseable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub raw: String,
    pub label: Label,
    pub task: Task,
}

fn number_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?[0-9]+(?:\.[0-9]+)?").unwrap())
}

/// Reads the first numeric token of the trimmed output. Negative, fractional,
/// out-of-range or missing numbers give `UNPARSEABLE`. Never fails.
pub fn parse_label(raw: &str, task: Task) -> ParsedPrediction {
    let label = number_token()
        .find(raw.trim())
        .and_then(|m| {
            let tok = m.as_str();
            if tok.starts_with('-') || tok.contains('.') {
                return None;
            }
            tok.trim_start_matches('+').parse::<i64>().ok()
        })
        .filter(|&v| task.contains(v))
        .map_or(UNPARSEABLE, Label::Value);
    ParsedPrediction { raw: raw.to_string(), label, task }
}

/// Anything that can answer a chat prompt.
pub trait ChatModel {
    fn generate(&self, messages: &[ChatMessage], max_new_tokens: usize) -> Result<String>;
}

impl<F> ChatModel for F
where
    F: Fn(&[ChatMessage], usize) -> String,
{
    fn generate(&self, messages: &[ChatMessage], max_new_tokens: usize) -> Result<String> {
        Ok(self(messages, max_new_tokens))
    }
}

/// Always answers with the same string.
#[derive(Debug, Clone)]
pub struct ConstantModel(pub String);

impl ChatModel for ConstantModel {
    fn generate(&self, _: &[ChatMessage], _: usize) -> Result<String> {
        Ok(self.0.clone())
    }
}

/// Greedy decoding with a local transformer and its word tokenizer.
pub struct TransformerChat<'a> {
    pub model: &'a Transformer,
}

impl ChatModel for TransformerChat<'_> {
    fn generate(&self, messages: &[ChatMessage], max_new_tokens: usize) -> Result<String> {
        let tok = self.model.tokenizer();
        let ids = tok.encode(&format_chat(messages));
        let out = self.model.generate_greedy(&ids, max_new_tokens)?;
        Ok(tok.decode(&out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_new_tokens: usize,
}

impl Decoding {
    pub fn for_template(id: TemplateId) -> Self {
        Self { max_new_tokens: id.default_max_new_tokens() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub index: usize,
    pub raw: String,
    pub label: Label,
    pub gold: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEval {
    pub template_id: TemplateId,
    pub n: usize,
    pub correct: usize,
    pub unparseable: usize,
    pub accuracy: f64,
    pub unparseable_rate: f64,
    pub records: Vec<PromptRecord>,
}

impl PromptEval {
    /// One JSON object per line: `{index, raw, label, gold}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

/// Prompts the model once per example and scores the parsed labels.
/// Unparseable outputs count as wrong and are tallied separately.
pub fn evaluate_prompting(
    model: &dyn ChatModel,
    examples: &[(String, i64)],
    template_id: TemplateId,
    decoding: Decoding,
) -> Result<PromptEval> {
    if examples.is_empty() {
        return Err(PromptError::EmptyDataset);
    }
    let task = template_id.task();
    if let Some((index, &(_, label))) = examples.iter().enumerate().find(|(_, (_, l))| !task.contains(*l)) {
        return Err(PromptError::LabelOutOfRange { index, label, task });
    }
    let template = PromptTemplate::get(template_id);
    let mut records = Vec::with_capacity(examples.len());
    let (mut correct, mut unparseable) = (0, 0);
    for (index, (text, gold)) in examples.iter().enumerate() {
        let messages = render_prompt(&template, text)?;
        let raw = model.generate(&messages, decoding.max_new_tokens)?;
        let parsed = parse_label(&raw, task);
        match parsed.label.value() {
            Some(v) if v == *gold => correct += 1,
            Some(_) => {}
            None => unparseable += 1,
        }
        records.push(PromptRecord { index, raw, label: parsed.label, gold: *gold });
    }
    let n = examples.len();
    Ok(PromptEval {
        template_id,
        n,
        correct,
        unparseable,
        accuracy: correct as f64 / n as f64,
        unparseable_rate: unparseable as f64 / n as f64,
        records,
    })
}
