use std::sync::Arc;

use metasynth::corpus::{Document, DocumentSource};
use metasynth::docsynth::{
    synthesize_documents, template_generate, DocRunConfig, DocRunObserver, SeedState, TemplateConfig, TemplateError,
};
use metasynth::engine::{EntryKind, HistoryEntry, RunStatus};
use metasynth::gateway::ScriptedProvider;

fn prose(tag: &str, words: usize) -> String {
    (0..words).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
}

fn call(name: &str, instruction: &str) -> String {
    format!("{name}:\n\"\"\"{instruction}\"\"\"")
}

#[derive(Default)]
struct Recorder {
    accepted: Vec<String>,
    rejected: Vec<String>,
    entries: usize,
}

impl DocRunObserver for Recorder {
    fn accepted(&mut self, doc: &Document) {
        self.accepted.push(doc.id.clone());
    }
    fn rejected(&mut self, doc: &Document) {
        self.rejected.push(doc.id.clone());
    }
    fn entry(&mut self, _entry: &HistoryEntry) {
        self.entries += 1;
    }
}

#[test]
fn replays_a_full_generate_verify_trace() {
    let (d1, d2, d3) = (prose("alpha", 400), prose("beta", 400), prose("gamma", 400));
    let meta = Arc::new(ScriptedProvider::new(vec![
        call("Seed Keyword Extraction Expert", "Extract seed keywords from: <seed text>"),
        call("Domain Expert", "Write a 400-word document on fraud detection."),
        call("Summarizer Expert", "Summarize the draft."),
        call("Content Analyst Expert", "Is the draft distinct?"),
        format!("<document>{d1}</document>"),
        call("Domain Expert", "Write another document."),
        call("Summarizer Expert", "Summarize the draft."),
        call("Content Analyst Expert", "Is the draft distinct?"),
        call("Seed Keyword Expansion Expert", "Suggest new keywords."),
        call("Venture Capitalist Expert", "Write a document on regulatory sandboxes."),
        call("Summarizer Expert", "Summarize the draft."),
        call("Content Analyst Expert", &format!("Compare against the earlier one: {d1}")),
        call("Writing/Linguistics Expert", "Check the style."),
        format!("<document>{d3}</document>\n<END>"),
    ]));
    let experts = Arc::new(ScriptedProvider::new(vec![
        "<seed keywords>[fraud detection, KYC]</seed keywords>".to_string(),
        format!("<document>{d1}</document>"),
        "line one\nline two\nline three".into(),
        "<verdict>distinct</verdict><category>Fraud</category>".into(),
        format!("<document>{d2}</document>"),
        "s1\ns2\ns3".into(),
        "<verdict>rewrite</verdict> Too similar to doc-d1.".into(),
        "<new keywords>[regulatory sandboxes, kyc]</new keywords>".into(),
        d3.clone(),
        "t1\nt2\nt3".into(),
        "These documents are sufficiently distinct. <category>Regulation</category>".into(),
        "<verdict>distinct</verdict>".into(),
    ]));
    let seeds = SeedState::from_documents(vec![Document::new("seed-1", "seed text", DocumentSource::Real, "finance")]);
    let config = DocRunConfig::new(2, "finance");
    let mut rec = Recorder::default();
    let out = synthesize_documents(seeds, &config, meta.clone(), experts.clone(), &mut rec).unwrap();

    assert_eq!(out.status, RunStatus::Completed);
    assert_eq!(meta.calls(), 14);
    assert_eq!(experts.remaining(), 0);
    assert_eq!(out.accepted.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["doc-d1", "doc-d2"]);
    assert_eq!(out.accepted[0].text, d1);
    assert_eq!(out.accepted[1].text, d3);
    assert_eq!(out.accepted[1].category.as_deref(), Some("regulation"));
    assert_eq!(out.accepted[0].category.as_deref(), Some("fraud"));
    assert_eq!(out.rejected.len(), 1);
    assert_eq!(out.rejected[0].text, d2);
    assert!(out.rejected[0].rejection_reason.as_deref().unwrap().contains("Too similar"));
    assert_eq!(out.seeds.expansion_log.len(), 1);
    assert_eq!(out.seeds.expansion_log[0].added, vec!["regulatory sandboxes"]);
    assert_eq!(out.seeds.keywords, vec!["fraud detection", "KYC", "regulatory sandboxes"]);
    assert_eq!(out.accepted[1].seed_snapshot, out.seeds.keywords);
    assert_eq!(out.memory.len(), 2);
    assert_eq!(out.seeds.generation, 2);
    assert_eq!(rec.accepted, ["doc-d1", "doc-d2"]);
    assert_eq!(rec.rejected, ["doc-r1"]);
    assert_eq!(rec.entries, out.history.entries().len());

    // The second analyst call sees the summary table, not the first document.
    let analyst = &experts.captured()[10];
    let text = &analyst.messages[0].content;
    assert!(!text.contains(&d1));
    assert!(text.contains("[summary of doc-d1: line one\nline two\nline three]"));
    assert!(text.contains("<instance classification table>"));
}

#[test]
fn presenting_without_verification_is_refused() {
    let d = prose("w", 300);
    let meta = Arc::new(ScriptedProvider::new(vec![
        call("Domain Expert", "Write."),
        format!("<document>{d}</document>"),
        call("Summarizer Expert", "Summarize."),
        format!("<document>{d}</document>"),
        call("Content Analyst Expert", "Distinct?"),
        format!("<document>{d}</document><END>"),
    ]));
    let experts = Arc::new(ScriptedProvider::new(vec![d.clone(), "a\nb\nc".into(), "<verdict>distinct</verdict>".into()]));
    let config = DocRunConfig::new(1, "finance");
    let out = synthesize_documents(SeedState::from_keywords(["kyc"]), &config, meta.clone(), experts, &mut ()).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    assert_eq!(out.accepted.len(), 1);
    let injected: Vec<&str> = out
        .history
        .entries()
        .iter()
        .filter(|e| e.kind == EntryKind::InjectedInstruction)
        .map(|e| e.content.as_str())
        .collect();
    assert!(injected[2].contains("has not been summarised"));
    assert!(injected[4].contains("Content Analyst Expert has not confirmed"));
}

#[test]
fn early_end_and_bad_length_are_refused() {
    let short = prose("s", 50);
    let meta = Arc::new(ScriptedProvider::new(vec![
        "<END>".to_string(),
        call("Domain Expert", "Write."),
        call("Summarizer Expert", "Summarize."),
        call("Content Analyst Expert", "Distinct?"),
        format!("<document>{short}</document>"),
        "<END>".to_string(),
    ]));
    let experts = Arc::new(ScriptedProvider::new(vec![short.clone(), "a".into(), "<verdict>distinct</verdict>".into()]));
    let mut config = DocRunConfig::new(1, "finance");
    config.engine.round_limit = 6;
    let out = synthesize_documents(SeedState::from_keywords(["kyc"]), &config, meta, experts, &mut ()).unwrap();
    assert_eq!(out.status, RunStatus::Incomplete);
    assert!(out.accepted.is_empty());
    assert_eq!(out.rejected.len(), 1, "pending draft is kept as rejected");
    let notes: String = out.history.entries().iter().map(|e| e.content.clone()).collect();
    assert!(notes.contains("Only 0 of 1 documents have been presented"));
    assert!(notes.contains("The presented document has 50 words"));
}

#[test]
fn extraction_comes_first_with_seed_documents() {
    let meta = Arc::new(ScriptedProvider::new(vec![call("Domain Expert", "Write."), "<END>".into()]));
    let experts = Arc::new(ScriptedProvider::new(Vec::<String>::new()));
    let seeds = SeedState::from_documents(vec![Document::new("s", "seed", DocumentSource::Real, "finance")]);
    let mut config = DocRunConfig::new(1, "finance");
    config.engine.round_limit = 2;
    let out = synthesize_documents(seeds, &config, meta, experts.clone(), &mut ()).unwrap();
    assert_eq!(experts.calls(), 0);
    assert!(out.history.entries()[3].content.contains("Consult Seed Keyword Extraction Expert first"));
}

#[test]
fn expansion_is_capped_per_draft() {
    let mut script: Vec<String> = (0..4).map(|_| call("Seed Keyword Expansion Expert", "More.")).collect();
    script.push("<END>".into());
    let meta = Arc::new(ScriptedProvider::new(script));
    let experts = Arc::new(ScriptedProvider::new(vec!["[a]", "[b]", "[c]"]));
    let mut config = DocRunConfig::new(1, "finance");
    config.engine.round_limit = 5;
    let out = synthesize_documents(SeedState::from_keywords(["kyc"]), &config, meta, experts.clone(), &mut ()).unwrap();
    assert_eq!(experts.calls(), 3);
    assert_eq!(out.seeds.expansion_log.len(), 3);
    assert_eq!(out.seeds.keywords, vec!["kyc", "a", "b", "c"]);
}

#[test]
fn always_rejecting_analyst_hits_round_limit() {
    let mut script = Vec::new();
    for _ in 0..7 {
        script.push(call("Domain Expert", "Write."));
        script.push(call("Content Analyst Expert", "Distinct?"));
        script.push(call("Summarizer Expert", "Summarize."));
    }
    let meta = Arc::new(ScriptedProvider::new(script));
    let mut replies = Vec::new();
    for i in 0..7 {
        replies.push(prose(&format!("d{i}x"), 400));
        replies.push("<verdict>rewrite</verdict>".into());
        replies.push("sum".into());
    }
    let experts = Arc::new(ScriptedProvider::new(replies));
    let mut config = DocRunConfig::new(1, "finance");
    config.engine.round_limit = 20;
    let out = synthesize_documents(SeedState::from_keywords(["kyc"]), &config, meta.clone(), experts, &mut ()).unwrap();
    assert_eq!(out.status, RunStatus::Incomplete);
    assert_eq!(meta.calls(), 20);
    assert!(out.accepted.is_empty());
    assert_eq!(out.rejected.len(), 7);
}

#[test]
fn bad_inputs_fail_fast() {
    let p = Arc::new(ScriptedProvider::new(Vec::<String>::new()));
    let cfg = DocRunConfig::new(1, "finance");
    assert!(synthesize_documents(SeedState::default(), &cfg, p.clone(), p.clone(), &mut ()).is_err());
    let zero = DocRunConfig::new(0, "finance");
    assert!(synthesize_documents(SeedState::from_keywords(["a"]), &zero, p.clone(), p.clone(), &mut ()).is_err());
    assert_eq!(p.calls(), 0);
}

fn seeds5() -> Vec<Document> {
    (0..5).map(|i| Document::new(format!("s{i}"), prose(&format!("seed{i}x"), 300), DocumentSource::Real, "finance")).collect()
}

#[test]
fn template_baseline_accumulates_previous_documents() {
    let replies: Vec<String> = (0..3).map(|i| format!("<document>{}</document>", prose(&format!("t{i}x"), 400))).collect();
    let p = ScriptedProvider::new(replies);
    let docs = template_generate(&seeds5(), 3, &TemplateConfig::new("finance"), &p, &mut ()).unwrap();
    assert_eq!(docs.len(), 3);
    assert!(docs.iter().all(|d| d.source == DocumentSource::Template));
    let prompts = p.captured();
    assert!(prompts[2].messages[0].content.contains(&docs[0].text));
    assert!(prompts[2].messages[0].content.contains(&docs[1].text));
    assert!(!prompts[1].messages[0].content.contains(&docs[1].text));
}

#[test]
fn template_baseline_retries_once_then_fails() {
    let seeds = seeds5();
    let copy = format!("<document>{} {}</document>", seeds[0].text, prose("extra", 50));
    let good = format!("<document>{}</document>", prose("ok", 400));
    let p = ScriptedProvider::new(vec![copy.clone(), good]);
    assert_eq!(template_generate(&seeds, 1, &TemplateConfig::new("finance"), &p, &mut ()).unwrap().len(), 1);

    let p = ScriptedProvider::new(vec![copy, "no tags".to_string()]);
    let err = template_generate(&seeds, 1, &TemplateConfig::new("finance"), &p, &mut ()).unwrap_err();
    assert!(matches!(err, TemplateError::Rejected { index: 1, .. }));
    assert!(template_generate(&seeds[..4], 1, &TemplateConfig::new("finance"), &p, &mut ()).is_err());
}
