use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Instruction, PromptFormat, ResponseRecord};
use crate::gateway::{ChatProvider, ChatRequest, GatewayError, GENERATION_TEMPERATURE};
use crate::text::extract_tagged;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptItem {
    pub instruction_id: String,
    pub format: PromptFormat,
    pub word_limit: Option<u32>,
}

/// One context followed by one or more formatted instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePrompt {
    pub prompt: String,
    pub items: Vec<PromptItem>,
}

/// An instruction rendered in the given response format.
pub fn format_instruction(text: &str, format: PromptFormat, word_limit: Option<u32>) -> String {
    match (format, word_limit) {
        (PromptFormat::FreeForm, _) => text.trim().to_string(),
        (PromptFormat::Cot, _) => format!("{}\nLet's think step by step.", text.trim()),
        (PromptFormat::ConstrainedCot, limit) => format!(
            "{}\nLet's think step by step and limit the answer length to {} words.",
            text.trim(),
            limit.unwrap_or(500)
        ),
    }
}

/// Assign each instruction a format, shuffle them, and group them into
/// prompts of one to three instructions behind the shared context. Every
/// instruction lands in exactly one prompt. Deterministic in `rng_seed`.
pub fn build_response_prompts(context: &Document, instructions: &[Instruction], rng_seed: u64) -> Vec<ResponsePrompt> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let assigned: Vec<(usize, PromptFormat, Option<u32>)> = instructions
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let format = PromptFormat::ALL[rng.gen_range(0..PromptFormat::ALL.len())];
            let limit = (format == PromptFormat::ConstrainedCot).then(|| 50 * rng.gen_range(1..=10u32));
            (i, format, limit)
        })
        .collect();
    let mut order = assigned;
    order.shuffle(&mut rng);

    let mut prompts = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let size = rng.gen_range(1..=3usize).min(rest.len());
        let (group, tail) = rest.split_at(size);
        rest = tail;
        let mut prompt = format!("Context:\n{}\n", context.text.trim());
        let mut items = Vec::with_capacity(group.len());
        for (n, &(i, format, limit)) in group.iter().enumerate() {
            let inst = &instructions[i];
            prompt.push_str(&format!("\nInstruction {}:\n{}\n", n + 1, format_instruction(&inst.text, format, limit)));
            items.push(PromptItem { instruction_id: inst.id.clone(), format, word_limit: limit });
        }
        prompt.push_str("\nAnswer each instruction in order. Wrap each answer in <answer> </answer> tags.");
        prompts.push(ResponsePrompt { prompt, items });
    }
    prompts
}

#[derive(Debug, Clone, Default)]
pub struct ResponseSynthesis {
    pub records: Vec<ResponseRecord>,
    /// Prompts whose reply could not be split into one answer per item.
    pub skipped: Vec<String>,
}

/// Query `provider` once per prompt and split replies into per-instruction
/// answers.
pub fn synthesize_responses(prompts: &[ResponsePrompt], provider: &dyn ChatProvider) -> Result<ResponseSynthesis, GatewayError> {
    let mut out = ResponseSynthesis::default();
    for p in prompts {
        let reply = provider.complete(&ChatRequest::user(p.prompt.clone()).with_temperature(GENERATION_TEMPERATURE))?.content;
        let mut answers: Vec<String> = extract_tagged(&reply, "answer");
        if answers.is_empty() && p.items.len() == 1 && !reply.trim().is_empty() {
            answers.push(reply.trim().to_string());
        }
        if answers.len() != p.items.len() || answers.iter().any(|a| a.is_empty()) {
            let ids: Vec<&str> = p.items.iter().map(|i| i.instruction_id.as_str()).collect();
            log::warn!("reply for {} had {} answers for {} instructions", ids.join(","), answers.len(), p.items.len());
            out.skipped.push(ids.join(","));
            continue;
        }
        for (item, answer) in p.items.iter().zip(answers) {
            out.records.push(ResponseRecord {
                instruction_id: item.instruction_id.clone(),
                prompt_format: item.format,
                word_limit: item.word_limit,
                response_text: answer,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentSource;

    fn inst(i: usize) -> Instruction {
        Instruction {
            id: format!("q{i}"),
            text: format!("Question {i}?"),
            parent_document_id: "d".into(),
            persona: None,
            evolution_trace: vec![],
            word_count: 2,
        }
    }

    #[test]
    fn single_instruction() {
        let doc = Document::new("d", "The context.", DocumentSource::Metasynth, "finance");
        let p = build_response_prompts(&doc, &[inst(1)], 7);
        assert_eq!(p.len(), 1);
        assert!(p[0].prompt.contains("The context.") && p[0].prompt.contains("Question 1?"));
    }

    #[test]
    fn deterministic() {
        let doc = Document::new("d", "ctx", DocumentSource::Metasynth, "finance");
        let insts: Vec<_> = (0..6).map(inst).collect();
        assert_eq!(build_response_prompts(&doc, &insts, 3), build_response_prompts(&doc, &insts, 3));
    }
}
