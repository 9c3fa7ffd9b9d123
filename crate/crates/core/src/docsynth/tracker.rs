use crate::corpus::{validate_length, Document, DocumentSource};
use crate::engine::{ExecutionHistory, HistoryEntry, Orchestrator, DEFAULT_INJECTED_INSTRUCTION};
use crate::text::{count_words, first_tagged, normalize_whitespace, parse_keyword_list};

use super::{expand_seeds, DocRunConfig, DocRunObserver, InstanceMemory, MemoryRow, SeedState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertRole {
    KeywordExtraction,
    KeywordExpansion,
    Summarizer,
    ContentAnalyst,
    Reviewer,
    Advisory,
    Writer,
}

/// Map an expert name to the role its replies play in a document run.
pub fn classify_expert(name: &str) -> ExpertRole {
    let n = name.to_lowercase();
    if n.contains("keyword") && n.contains("extract") {
        ExpertRole::KeywordExtraction
    } else if n.contains("keyword") && n.contains("expan") {
        ExpertRole::KeywordExpansion
    } else if n.contains("summar") {
        ExpertRole::Summarizer
    } else if n.contains("content analyst") {
        ExpertRole::ContentAnalyst
    } else if ["writing", "linguist", "review", "critic", "editor", "quality"].iter().any(|w| n.contains(w)) {
        ExpertRole::Reviewer
    } else if ["topic label", "fact check", "verif"].iter().any(|w| n.contains(w)) {
        ExpertRole::Advisory
    } else {
        ExpertRole::Writer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Distinct,
    Rewrite,
    Unclear,
}

/// Read a judgement from an analyst or reviewer reply. An explicit
/// `<verdict>` tag wins; otherwise common phrasings are recognised.
pub fn parse_verdict(reply: &str) -> Verdict {
    if let Some(tag) = first_tagged(reply, "verdict") {
        let t = tag.to_lowercase();
        if ["rewrite", "re-write", "reject", "similar"].iter().any(|w| t.contains(w)) {
            return Verdict::Rewrite;
        }
        if ["distinct", "accept", "approve", "diverse"].iter().any(|w| t.contains(w)) {
            return Verdict::Distinct;
        }
    }
    let t = reply.to_lowercase();
    let negative = [
        "not sufficiently distinct",
        "not distinct enough",
        "too similar",
        "should be re-written",
        "should be rewritten",
        "needs to be rewritten",
        "not sufficiently diverse",
    ];
    if negative.iter().any(|p| t.contains(p)) {
        return Verdict::Rewrite;
    }
    let positive = ["sufficiently distinct", "distinct enough", "sufficiently diverse", "approved"];
    if positive.iter().any(|p| t.contains(p)) {
        return Verdict::Distinct;
    }
    Verdict::Unclear
}

#[derive(Debug, Clone)]
struct Draft {
    text: String,
    summary: Option<String>,
    analyst_ok: bool,
    category: Option<String>,
    reviewer_ok: bool,
}

pub(super) struct DocTracker<'a> {
    config: &'a DocRunConfig,
    seeds: SeedState,
    memory: InstanceMemory,
    accepted: Vec<Document>,
    rejected: Vec<Document>,
    pending: Option<Draft>,
    extracted: bool,
    expansions_this_cycle: usize,
    observer: &'a mut dyn DocRunObserver,
}

impl<'a> DocTracker<'a> {
    pub(super) fn new(config: &'a DocRunConfig, seeds: SeedState, observer: &'a mut dyn DocRunObserver) -> Self {
        Self {
            config,
            seeds,
            memory: InstanceMemory::default(),
            accepted: Vec::new(),
            rejected: Vec::new(),
            pending: None,
            extracted: false,
            expansions_this_cycle: 0,
            observer,
        }
    }

    pub(super) fn finish(mut self) -> (Vec<Document>, Vec<Document>, InstanceMemory, SeedState) {
        if let Some(draft) = self.pending.take() {
            self.reject(draft, "not accepted before the run ended".into(), 0);
        }
        (self.accepted, self.rejected, self.memory, self.seeds)
    }

    fn reject(&mut self, draft: Draft, reason: String, round: u32) {
        let id = format!("{}-r{}", self.config.id_prefix, self.rejected.len() + 1);
        let mut doc = Document::new(id, draft.text, DocumentSource::Metasynth, self.config.domain.clone());
        doc.seed_snapshot = self.seeds.keywords.clone();
        doc.summary = draft.summary;
        doc.category = draft.category;
        doc.created_round = round as u64;
        doc.rejection_reason = Some(reason);
        self.observer.rejected(&doc);
        self.rejected.push(doc);
    }

    /// Replace any accepted full text in a Content Analyst instruction by its
    /// summary, then attach the memory table and current keywords.
    fn analyst_instruction(&self, instruction: &str) -> String {
        let mut text = instruction.to_string();
        for (doc, row) in self.accepted.iter().zip(&self.memory.rows) {
            let stand_in = format!("[summary of {}: {}]", row.instance_id, row.summary.trim());
            if text.contains(doc.text.trim()) {
                text = text.replace(doc.text.trim(), &stand_in);
            } else {
                let flat = normalize_whitespace(&doc.text);
                if normalize_whitespace(&text).contains(&flat) {
                    text = normalize_whitespace(&text).replace(&flat, &stand_in);
                }
            }
            for paragraph in doc.text.lines().map(str::trim).filter(|p| count_words(p) >= 8) {
                text = text.replace(paragraph, &stand_in);
            }
        }
        let mut out = text;
        if !self.memory.is_empty() {
            out.push_str("\n\nSummaries of all previously accepted documents:\n");
            out.push_str(&self.memory.render_table());
        }
        out.push_str(&format!("\n\nCurrent seed keywords: {}", self.seeds.render_keywords()));
        out
    }

    fn accept(&mut self, payload: &str, round: u32) -> Result<(), String> {
        let n = self.config.n_documents;
        if self.accepted.len() >= n {
            return Err(format!("All {n} documents have already been presented; output {} now.", self.config.engine.end_token));
        }
        let Some(draft) = self.pending.as_ref() else {
            return Err("No draft is awaiting acceptance. Have an expert write a new document first.".into());
        };
        if draft.summary.is_none() {
            return Err("The presented document has not been summarised. Consult Summarizer Expert before presenting it.".into());
        }
        if !draft.analyst_ok {
            return Err("Content Analyst Expert has not confirmed that the presented document is distinct. Consult it before presenting the document.".into());
        }
        if self.config.require_reviewer && !draft.reviewer_ok {
            return Err("A reviewer expert must also confirm the document before it is presented.".into());
        }
        let check = validate_length(payload, self.config.target_words, self.config.window);
        if !check.pass {
            return Err(format!(
                "The presented document has {} words; documents must have between {} and {} words. Present the full text of the document.",
                check.words, self.config.window.min, self.config.window.max
            ));
        }
        let draft = self.pending.take().expect("checked above");
        let id = format!("{}-d{}", self.config.id_prefix, self.accepted.len() + 1);
        let summary = draft.summary.expect("checked above");
        let category = draft.category.unwrap_or_else(|| "uncategorized".into());
        let mut doc = Document::new(id.clone(), payload.trim(), DocumentSource::Metasynth, self.config.domain.clone());
        doc.seed_snapshot = self.seeds.keywords.clone();
        doc.summary = Some(summary.clone());
        doc.category = Some(category.clone());
        doc.created_round = round as u64;
        self.memory.rows.push(MemoryRow { instance_id: id, summary, category });
        self.seeds.generation += 1;
        self.expansions_this_cycle = 0;
        self.observer.accepted(&doc);
        self.accepted.push(doc);
        Ok(())
    }
}

fn keywords_from(reply: &str, tags: &[&str]) -> Vec<String> {
    let body = tags.iter().find_map(|t| first_tagged(reply, t)).unwrap_or_else(|| reply.to_string());
    parse_keyword_list(&body)
}

impl Orchestrator for DocTracker<'_> {
    fn injected_instruction(&mut self, _history: &ExecutionHistory) -> String {
        let mut out = format!(
            "{DEFAULT_INJECTED_INSTRUCTION}\nDocuments presented so far: {} of {}.",
            self.accepted.len(),
            self.config.n_documents
        );
        if !self.memory.is_empty() {
            out.push('\n');
            out.push_str(&self.memory.render_table());
        }
        out
    }

    fn prepare_expert_call(&mut self, name: &str, instruction: &str, _round: u32) -> Result<String, String> {
        let role = classify_expert(name);
        if !self.seeds.seed_documents.is_empty() && !self.extracted && role != ExpertRole::KeywordExtraction {
            return Err("Seed keywords have not been extracted yet. Consult Seed Keyword Extraction Expert first, giving it the full texts of all seed documents.".into());
        }
        match role {
            ExpertRole::KeywordExpansion if self.expansions_this_cycle >= self.config.max_expansions_per_draft => Err(format!(
                "The keyword set was already expanded {} times for this draft. Have an expert write a new document first.",
                self.config.max_expansions_per_draft
            )),
            ExpertRole::ContentAnalyst => Ok(self.analyst_instruction(instruction)),
            _ => Ok(instruction.to_string()),
        }
    }

    fn on_expert_result(&mut self, name: &str, _instruction: &str, reply: &str, round: u32) -> Option<String> {
        match classify_expert(name) {
            ExpertRole::KeywordExtraction => {
                let keywords = keywords_from(reply, &["seed keywords", "keywords"]);
                if keywords.is_empty() {
                    return Some("No keywords could be read from the extraction reply. Ask for them in <seed keywords>[...]</seed keywords> format.".into());
                }
                self.seeds.add_keywords(keywords);
                self.extracted = true;
                None
            }
            ExpertRole::KeywordExpansion => {
                let suggested = keywords_from(reply, &["new keywords", "seed keywords", "keywords"]);
                self.seeds = expand_seeds(&self.seeds, &suggested, round);
                self.expansions_this_cycle += 1;
                None
            }
            ExpertRole::Summarizer => {
                if let Some(draft) = self.pending.as_mut() {
                    draft.summary = Some(reply.trim().to_string());
                }
                None
            }
            ExpertRole::ContentAnalyst => {
                let verdict = parse_verdict(reply);
                let Some(draft) = self.pending.as_mut() else { return None };
                match verdict {
                    Verdict::Distinct => {
                        draft.analyst_ok = true;
                        draft.category = first_tagged(reply, "category")
                            .map(|c| c.trim().to_lowercase())
                            .filter(|c| !c.is_empty());
                        None
                    }
                    Verdict::Rewrite => {
                        let draft = self.pending.take().expect("checked above");
                        self.reject(draft, reply.trim().to_string(), round);
                        None
                    }
                    Verdict::Unclear => Some(
                        "Content Analyst Expert's verdict was unclear. Ask it to answer with <verdict>distinct</verdict> or <verdict>rewrite</verdict>."
                            .into(),
                    ),
                }
            }
            ExpertRole::Reviewer => {
                if let Some(draft) = self.pending.as_mut() {
                    draft.reviewer_ok = parse_verdict(reply) != Verdict::Rewrite;
                }
                None
            }
            ExpertRole::Advisory => None,
            ExpertRole::Writer => {
                let text = first_tagged(reply, "document").unwrap_or_else(|| reply.trim().to_string());
                if text.is_empty() {
                    return None;
                }
                if let Some(previous) = self.pending.take() {
                    let reason = format!("superseded by a new draft from {name} before acceptance");
                    self.reject(previous, reason, round);
                }
                self.pending = Some(Draft {
                    text,
                    summary: None,
                    analyst_ok: false,
                    category: None,
                    reviewer_ok: false,
                });
                self.expansions_this_cycle = 0;
                None
            }
        }
    }

    fn on_payloads(&mut self, payloads: &[String], round: u32) -> Option<String> {
        let notes: Vec<String> = payloads.iter().filter_map(|p| self.accept(p, round).err()).collect();
        (!notes.is_empty()).then(|| notes.join("\n"))
    }

    fn accept_end(&mut self) -> Result<(), String> {
        let (done, n) = (self.accepted.len(), self.config.n_documents);
        if done < n {
            return Err(format!("Only {done} of {n} documents have been presented. Continue until all {n} are presented."));
        }
        Ok(())
    }

    fn on_entry(&mut self, entry: &HistoryEntry) {
        self.observer.entry(entry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles() {
        assert_eq!(classify_expert("Seed Keyword Extraction Expert"), ExpertRole::KeywordExtraction);
        assert_eq!(classify_expert("Seed Keyword Expansion Expert"), ExpertRole::KeywordExpansion);
        assert_eq!(classify_expert("Summarizer Expert"), ExpertRole::Summarizer);
        assert_eq!(classify_expert("Content Analyst Expert"), ExpertRole::ContentAnalyst);
        assert_eq!(classify_expert("Writing/Linguistics Expert"), ExpertRole::Reviewer);
        assert_eq!(classify_expert("Venture Capitalist Expert"), ExpertRole::Writer);
        assert_eq!(classify_expert("Domain Expert"), ExpertRole::Writer);
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("<verdict>distinct</verdict>"), Verdict::Distinct);
        assert_eq!(parse_verdict("<verdict>rewrite</verdict> it is close"), Verdict::Rewrite);
        assert_eq!(parse_verdict("The new document is too similar to document 1."), Verdict::Rewrite);
        assert_eq!(parse_verdict("These are sufficiently distinct."), Verdict::Distinct);
        assert_eq!(parse_verdict("Interesting."), Verdict::Unclear);
    }
}
