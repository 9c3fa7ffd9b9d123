use std::collections::HashSet;

use thiserror::Error;

use crate::corpus::{validate_length, Document, DocumentSource, LengthWindow, DEFAULT_DOCUMENT_WINDOW, TARGET_DOCUMENT_WORDS};
use crate::gateway::{ChatProvider, ChatRequest, GatewayError, GENERATION_TEMPERATURE};
use crate::prompts::{render, TEMPLATE_PROMPT};
use crate::text::{first_tagged, windows_joined};

use super::DocRunObserver;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("document {index} rejected twice: {reason}")]
    Rejected { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateConfig {
    pub domain: String,
    pub target_words: usize,
    pub window: LengthWindow,
    pub id_prefix: String,
    /// Shared run length, in words, that counts as verbatim copying.
    pub guard_words: usize,
    pub seed_count: usize,
}

impl TemplateConfig {
    pub fn new(domain: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            target_words: TARGET_DOCUMENT_WORDS,
            window: DEFAULT_DOCUMENT_WINDOW,
            id_prefix: "tpl".into(),
            guard_words: 50,
            seed_count: 5,
        }
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// True when `text` shares a run of at least `min_words` consecutive
/// whitespace-delimited words with `source`.
pub fn verbatim_overlap(text: &str, source: &str, min_words: usize) -> bool {
    let (a, b) = (words(text), words(source));
    if min_words == 0 || a.len() < min_words || b.len() < min_words {
        return false;
    }
    let seen: HashSet<String> = windows_joined(&b, min_words).collect();
    let found = windows_joined(&a, min_words).any(|w| seen.contains(&w));
    found
}

fn document_block(docs: &[Document]) -> String {
    if docs.is_empty() {
        return "(none yet)".into();
    }
    docs.iter().map(|d| format!("<document> {} </document>", d.text.trim())).collect::<Vec<_>>().join("\n")
}

/// The prompt for the next baseline document, carrying every earlier one.
pub fn template_prompt(seeds: &[Document], previous: &[Document], config: &TemplateConfig) -> String {
    let target = config.target_words.to_string();
    let seed_block = document_block(seeds);
    let prev_block = document_block(previous);
    render(
        TEMPLATE_PROMPT,
        &[
            ("seed_documents", seed_block.as_str()),
            ("domain", config.domain.as_str()),
            ("target_words", target.as_str()),
            ("previous_documents", prev_block.as_str()),
        ],
    )
}

fn check_reply(reply: &str, seeds: &[Document], previous: &[Document], config: &TemplateConfig) -> Result<String, String> {
    let text = first_tagged(reply, "document").ok_or("reply has no <document> block")?;
    let check = validate_length(&text, config.target_words, config.window);
    if !check.pass {
        return Err(format!("document has {} words, outside {}..={}", check.words, config.window.min, config.window.max));
    }
    if let Some(src) = seeds.iter().chain(previous).find(|d| verbatim_overlap(&text, &d.text, config.guard_words)) {
        return Err(format!("document copies {} or more words verbatim from {}", config.guard_words, src.id));
    }
    Ok(text)
}

/// Generate `n` documents by repeated template prompting, one call each.
///
/// A reply that fails the tag, length or verbatim checks is retried once;
/// a second failure aborts the run.
pub fn template_generate(
    seeds: &[Document],
    n: usize,
    config: &TemplateConfig,
    provider: &dyn ChatProvider,
    observer: &mut dyn DocRunObserver,
) -> Result<Vec<Document>, TemplateError> {
    if seeds.len() != config.seed_count {
        return Err(TemplateError::Precondition(format!(
            "template prompting needs exactly {} seed documents, got {}",
            config.seed_count,
            seeds.len()
        )));
    }
    let mut out: Vec<Document> = Vec::with_capacity(n);
    for index in 1..=n {
        let prompt = template_prompt(seeds, &out, config);
        let request = ChatRequest::user(prompt).with_temperature(GENERATION_TEMPERATURE);
        let mut last = String::new();
        let mut accepted = None;
        for _ in 0..2 {
            let reply = provider.complete(&request)?;
            match check_reply(&reply.content, seeds, &out, config) {
                Ok(text) => {
                    accepted = Some(text);
                    break;
                }
                Err(reason) => {
                    log::warn!("template document {index}: {reason}");
                    last = reason;
                }
            }
        }
        let text = accepted.ok_or(TemplateError::Rejected { index, reason: last })?;
        let mut doc = Document::new(format!("{}-d{index}", config.id_prefix), text, DocumentSource::Template, config.domain.clone());
        doc.created_round = index as u64;
        observer.accepted(&doc);
        out.push(doc);
    }
    Ok(out)
}
