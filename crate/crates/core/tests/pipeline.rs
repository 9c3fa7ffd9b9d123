use std::collections::HashSet;
use std::path::{Path, PathBuf};

use metasynth::corpus::{Document, Instruction, ResponseRecord};
use metasynth::pipeline::{
    collect_accepted, parse_config, resume, run, run_dir, worker_dir, LoadedConfig, PipelineError, RunManifest, RunOptions,
    WorkerStatus, ACCEPTED_FILE, MANIFEST_FILE, REJECTED_FILE, REPORT_CSV, REPORT_FILE, TRANSCRIPT_FILE,
};

fn prose(tag: &str, words: usize) -> String {
    (0..words).map(|i| format!("{tag}x{i}")).collect::<Vec<_>>().join(" ")
}

fn call(name: &str, instruction: &str) -> String {
    format!("{name}:\n\"\"\"{instruction}\"\"\"")
}

/// One interleaved meta/expert script producing `n` accepted documents.
fn doc_script(n: usize) -> Vec<String> {
    let mut s = Vec::new();
    for d in 1..=n {
        let text = prose(&format!("w{{worker}}d{d}"), 300);
        s.push(call("Domain Expert", "Write a document."));
        s.push(format!("<document>{text}</document>"));
        s.push(call("Summarizer Expert", "Summarize the draft."));
        s.push(format!("summary {d}\nline two\nline three"));
        s.push(call("Content Analyst Expert", "Is it distinct?"));
        s.push(format!("<verdict>distinct</verdict><category>topic {d}</category>"));
        let end = if d == n { "\n<END>" } else { "" };
        s.push(format!("<document>{text}</document>{end}"));
    }
    s
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let body: String = items.iter().map(|i| serde_json::to_string(i).unwrap() + "\n").collect();
    std::fs::write(path, body).unwrap();
}

fn docs_config(dir: &Path, workers: usize, per_set: usize) -> LoadedConfig {
    let script = dir.join("script.jsonl");
    write_jsonl(&script, &doc_script(per_set));
    let text = format!(
        r#"
domain = "finance"
mode = "metasynth_docs"
workers = {workers}
docs_per_seed_set = {per_set}
rng_seed = 7
output_dir = "out"
[provider]
kind = "scripted"
script_path = "script.jsonl"
[seed_source]
kind = "keywords"
keywords = ["fraud detection", "credit risk"]
"#
    );
    parse_config(&text, &[], dir).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn worker_files(run: &Path, workers: usize) -> Vec<Vec<u8>> {
    (0..workers)
        .flat_map(|w| [ACCEPTED_FILE, REJECTED_FILE, TRANSCRIPT_FILE].map(|f| read(&worker_dir(run, w).join(f))))
        .collect()
}

#[test]
fn four_workers_two_documents_each() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = docs_config(tmp.path(), 4, 2);
    let manifest = run(&loaded, RunOptions::default()).unwrap();
    assert_eq!(manifest.accepted, 8);
    assert_eq!(manifest.rejected, 0);
    assert!(manifest.finished);
    assert_eq!(manifest.exit_code(), 0);
    assert!(manifest.input_tokens > 0 && manifest.output_tokens > 0);
    let docs: Vec<Document> = collect_accepted(&run_dir(&loaded)).unwrap();
    assert_eq!(docs.len(), 8);
    let ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids.len(), 8);
    assert!(ids.contains("w3-d2"));
    let texts: HashSet<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    assert_eq!(texts.len(), 8);
    assert_eq!(RunManifest::load(&run_dir(&loaded)).unwrap(), manifest);
    assert!(matches!(run(&loaded, RunOptions::default()), Err(PipelineError::RunExists(_))));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let la = docs_config(a.path(), 6, 3);
    let lb = docs_config(b.path(), 6, 3);
    run(&la, RunOptions::default()).unwrap();
    run(&lb, RunOptions::default()).unwrap();
    assert_eq!(worker_files(&run_dir(&la), 6), worker_files(&run_dir(&lb), 6));
}

#[test]
fn interrupted_run_resumes_to_the_uninterrupted_result() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let full = docs_config(a.path(), 4, 2);
    run(&full, RunOptions::default()).unwrap();

    let cut = docs_config(b.path(), 4, 2);
    let partial = run(&cut, RunOptions { worker_limit: Some(1) }).unwrap();
    assert!(!partial.finished);
    assert_eq!(partial.exit_code(), 4);
    let done: Vec<usize> = partial.workers.iter().filter(|w| w.status == WorkerStatus::Completed).map(|w| w.index).collect();
    assert_eq!(done, [0]);
    let dir = run_dir(&cut);
    let first = worker_files(&dir, 1);
    let on_disk = RunManifest::load(&dir).unwrap();
    assert_eq!(on_disk.workers[1].status, WorkerStatus::Pending);

    // Leftovers from a worker killed mid-run are discarded on resume.
    std::fs::create_dir_all(worker_dir(&dir, 2)).unwrap();
    std::fs::write(worker_dir(&dir, 2).join(ACCEPTED_FILE), "{\"garbage\":true}\n").unwrap();

    let resumed = resume(&dir, RunOptions::default()).unwrap();
    assert!(resumed.finished);
    assert_eq!(resumed.exit_code(), 0);
    assert_eq!(resumed.accepted, 8);
    assert_eq!(resumed.workers.iter().map(|w| w.resumed).collect::<Vec<_>>(), [false, true, true, true]);
    assert_eq!(worker_files(&dir, 1), first);
    assert_eq!(worker_files(&dir, 4), worker_files(&run_dir(&full), 4));
    let docs: Vec<Document> = collect_accepted(&dir).unwrap();
    assert_eq!(docs.iter().map(|d| &d.id).collect::<HashSet<_>>().len(), docs.len());
}

#[test]
fn resume_of_a_complete_run_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = docs_config(tmp.path(), 2, 1);
    run(&loaded, RunOptions::default()).unwrap();
    let dir = run_dir(&loaded);
    let before = read(&dir.join(MANIFEST_FILE));
    resume(&dir, RunOptions::default()).unwrap();
    assert_eq!(read(&dir.join(MANIFEST_FILE)), before);
}

#[test]
fn resume_restarts_only_unfinished_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = docs_config(tmp.path(), 4, 1);
    let dir = run_dir(&loaded);
    let mut m = run(&loaded, RunOptions::default()).unwrap();
    m.workers[2].status = WorkerStatus::Incomplete;
    m.store(&dir).unwrap();
    let m = resume(&dir, RunOptions::default()).unwrap();
    let restarted: Vec<usize> = m.workers.iter().filter(|w| w.resumed).map(|w| w.index).collect();
    assert_eq!(restarted, [2]);
    assert!(m.all_completed());
}

#[test]
fn corrupt_manifest_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = docs_config(tmp.path(), 1, 1);
    run(&loaded, RunOptions::default()).unwrap();
    let dir = run_dir(&loaded);
    std::fs::write(dir.join(MANIFEST_FILE), "{ not json").unwrap();
    assert!(matches!(resume(&dir, RunOptions::default()), Err(PipelineError::CorruptManifest(_))));
}

#[test]
fn discarded_workers_make_a_partial_run() {
    let tmp = tempfile::tempdir().unwrap();
    write_jsonl(&tmp.path().join("script.jsonl"), &["no call here", "still nothing", "nothing again"]);
    let text = r#"
domain = "finance"
mode = "metasynth_docs"
workers = 2
output_dir = "out"
[provider]
kind = "scripted"
script_path = "script.jsonl"
[seed_source]
kind = "keywords"
keywords = ["bonds"]
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert!(m.workers.iter().all(|w| w.status == WorkerStatus::Discarded));
    assert_eq!(m.exit_code(), 4);
}

#[test]
fn missing_credentials_fail_before_any_worker() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
domain = "finance"
mode = "metasynth_docs"
output_dir = "out"
[provider]
kind = "http_api"
endpoint = "http://127.0.0.1:9/v1/chat"
credentials_env_var = "METASYNTH_TEST_NEVER_SET"
[seed_source]
kind = "keywords"
keywords = ["bonds"]
"#;
    let loaded = parse_config(text, &[], tmp.path()).unwrap();
    let err = run(&loaded, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(!run_dir(&loaded).exists());
}

#[test]
fn config_errors_exit_with_two() {
    let err = parse_config("mode = \"metasynth_docs\"\noutput_dir = \"o\"\nworkers = 0", &[], Path::new(".")).unwrap_err();
    let PipelineError::Config(problems) = &err else { panic!("{err}") };
    assert!(problems.len() >= 3, "{problems:?}");
    assert_eq!(err.exit_code(), 2);
}

fn corpus_file(dir: &Path) -> PathBuf {
    let docs: Vec<Document> = (0..3)
        .map(|i| Document::new(format!("doc-{i}"), prose(&format!("c{i}"), 250), metasynth::corpus::DocumentSource::Metasynth, "finance"))
        .collect();
    let path = dir.join("docs.jsonl");
    write_jsonl(&path, &docs);
    path
}

#[test]
fn instruction_and_response_modes() {
    let tmp = tempfile::tempdir().unwrap();
    corpus_file(tmp.path());
    let script = [
        call("Persona Suggestion Expert", "Who reads this?"),
        "1. Analysts\n2. Regulators".to_string(),
        "<questions><question>Why would an analyst revisit a stress test after a rate shock?</question><question>According to the document, what failed?</question></questions><END>".to_string(),
    ];
    // Two documents fall to worker 0, so its script runs twice.
    let script: Vec<String> = script.iter().chain(script.iter()).cloned().collect();
    write_jsonl(&tmp.path().join("iscript.jsonl"), &script);
    let text = r#"
mode = "instructions"
workers = 2
output_dir = "out"
run_id = "ins"
[provider]
kind = "scripted"
script_path = "iscript.jsonl"
[inputs]
documents = "docs.jsonl"
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(m.exit_code(), 0, "{m:?}");
    assert_eq!((m.accepted, m.rejected), (3, 3));
    let ins: Vec<Instruction> = collect_accepted(&tmp.path().join("out/ins")).unwrap();
    assert_eq!(ins.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["doc-0-q1", "doc-2-q1", "doc-1-q1"]);
    write_jsonl(&tmp.path().join("ins.jsonl"), &ins);

    let answer = "<answer>Because the shock moves every input.</answer>";
    write_jsonl(&tmp.path().join("rscript.jsonl"), &[answer, answer, answer]);
    let text = r#"
mode = "responses"
workers = 1
output_dir = "out"
run_id = "resp"
[provider]
kind = "scripted"
script_path = "rscript.jsonl"
[inputs]
documents = "docs.jsonl"
instructions = "ins.jsonl"
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(m.exit_code(), 0, "{m:?}");
    let responses: Vec<ResponseRecord> = collect_accepted(&tmp.path().join("out/resp")).unwrap();
    assert_eq!(responses.len(), 3);
}

#[test]
fn template_mode_uses_five_pool_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let pool: Vec<serde_json::Value> =
        (0..8).map(|i| serde_json::json!({"id": format!("p{i}"), "text": prose(&format!("pool{i}"), 80)})).collect();
    write_jsonl(&tmp.path().join("pool.jsonl"), &pool);
    let replies: Vec<String> = (1..=2).map(|i| format!("<document>{}</document>", prose(&format!("t{{worker}}n{i}"), 300))).collect();
    write_jsonl(&tmp.path().join("script.jsonl"), &replies);
    let text = r#"
domain = "finance"
mode = "template_docs"
workers = 3
docs_per_seed_set = 2
output_dir = "out"
run_id = "tpl"
[provider]
kind = "scripted"
script_path = "script.jsonl"
[seed_source]
kind = "documents"
path = "pool.jsonl"
per_worker = 5
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(m.exit_code(), 0, "{m:?}");
    assert_eq!(m.accepted, 6);
}

#[test]
fn analysis_modes_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    corpus_file(tmp.path());
    write_jsonl(&tmp.path().join("refs.jsonl"), &[serde_json::json!({"text": "c1x3 c1x4 c1x5"}), serde_json::json!({"text": "unseen words only"})]);
    let text = r#"
mode = "measure"
output_dir = "out"
run_id = "m"
[inputs]
documents = "docs.jsonl"
[embedder]
kind = "scripted"
hash_dim = 32
[analysis]
n_resamples = 200
level = 0.9
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert!(m.workers.is_empty() && m.finished);
    let report: serde_json::Value = serde_json::from_slice(&read(&tmp.path().join("out/m").join(REPORT_FILE))).unwrap();
    assert!(report["metrics"]["remote_clique"]["point_estimate"].is_number());
    assert_eq!(std::fs::read_to_string(tmp.path().join("out/m").join(REPORT_CSV)).unwrap().lines().count(), 2);

    let text = r#"
mode = "contaminate"
output_dir = "out"
run_id = "c"
[inputs]
references = "refs.jsonl"
targets = "docs.jsonl"
[analysis]
n_values = [1, 3, 4]
"#;
    run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&read(&tmp.path().join("out/c").join(REPORT_FILE))).unwrap();
    assert_eq!(report["fractions"]["EM-3"], 0.5);
    assert_eq!(report["fractions"]["EM-4"], 0.0);
}

#[test]
fn seed_sets_refresh_from_the_embedded_pool() {
    use metasynth::gateway::hashed_embedding;
    let tmp = tempfile::tempdir().unwrap();
    let pool: Vec<serde_json::Value> = (0..10)
        .map(|i| {
            let text = prose(&format!("pool{i}"), 60);
            let topic = if i < 5 { "payments" } else { "lending" };
            serde_json::json!({"id": format!("p{i}"), "text": text, "topic": topic, "embedding": hashed_embedding(&text, 16)})
        })
        .collect();
    write_jsonl(&tmp.path().join("pool.jsonl"), &pool);
    let extraction = [call("Seed Keyword Extraction Expert", "Extract keywords."), "<seed keywords>[fees, loans]</seed keywords>".to_string()];
    let mut script: Vec<String> = extraction.to_vec();
    script.extend(doc_script(2));
    script.extend(["Payments".to_string(), "Payments".to_string()]);
    script.extend(extraction.iter().cloned());
    script.extend(doc_script(2).into_iter().map(|s| s.replace("{worker}d", "{worker}e")));
    write_jsonl(&tmp.path().join("script.jsonl"), &script);
    let text = r#"
domain = "finance"
mode = "metasynth_docs"
workers = 2
docs_per_seed_set = 2
seed_sets_per_worker = 2
output_dir = "out"
run_id = "r"
[provider]
kind = "scripted"
script_path = "script.jsonl"
[embedder]
kind = "scripted"
hash_dim = 16
[seed_source]
kind = "documents"
path = "pool.jsonl"
per_worker = 2
refresh = true
"#;
    let m = run(&parse_config(text, &[], tmp.path()).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(m.exit_code(), 0, "{m:?}");
    assert_eq!(m.accepted, 8);
    let docs: Vec<Document> = collect_accepted(&tmp.path().join("out/r")).unwrap();
    let second: Vec<&Document> = docs.iter().filter(|d| d.id.starts_with("w0s2")).collect();
    assert_eq!(second.len(), 2);
}
