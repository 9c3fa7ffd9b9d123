use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatProvider, ChatRequest, GatewayError, Message, Role, JUDGE_TEMPERATURE};
use crate::prompts::{render, JUDGE_ACCURACY, JUDGE_CATEGORY, JUDGE_RELEVANCE, JUDGE_WINRATE_SYSTEM, JUDGE_WINRATE_USER};

/// Task categories offered to the category judge unless configured.
pub const DEFAULT_CATEGORIES: &[&str] = &[
    "Question Answering",
    "Summarization",
    "Text Categorization",
    "Sentiment Analysis",
    "Information Extraction",
    "Question Generation",
    "Text Completion",
    "Text Matching",
    "Textual Entailment",
    "Commonsense Classification",
    "Fill in The Blank",
    "Data to Text",
    "Title Generation",
    "Paraphrasing",
    "Program Execution",
    "Misc.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Accuracy,
    Relevance,
    Category,
    Winrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WinrateChoice {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum JudgeVerdict {
    Accuracy(u8),
    Relevance(u8),
    Category(String),
    Winrate(WinrateChoice),
}

impl JudgeVerdict {
    pub fn kind(&self) -> JudgeKind {
        match self {
            Self::Accuracy(_) => JudgeKind::Accuracy,
            Self::Relevance(_) => JudgeKind::Relevance,
            Self::Category(_) => JudgeKind::Category,
            Self::Winrate(_) => JudgeKind::Winrate,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum JudgeInputs<'a> {
    /// Accuracy and relevance.
    Graded { context: &'a str, instruction: &'a str, response: &'a str },
    Category { instruction: &'a str, response: &'a str, categories: &'a [String] },
    Pair { question: &'a str, response_a: &'a str, response_b: &'a str },
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("inputs do not match judge kind {0:?}")]
    WrongInputs(JudgeKind),
    #[error("judge reply unparseable after re-ask: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn parse_binary(reply: &str) -> Option<u8> {
    match reply.trim() {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

fn parse_winrate(reply: &str) -> Option<WinrateChoice> {
    let found: Vec<WinrateChoice> = [("[[A]]", WinrateChoice::A), ("[[B]]", WinrateChoice::B), ("[[C]]", WinrateChoice::C)]
        .into_iter()
        .filter(|(m, _)| reply.contains(m))
        .map(|(_, c)| c)
        .collect();
    match found.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

fn parse_category(reply: &str, categories: &[String]) -> Option<String> {
    let r = reply.trim();
    categories.iter().find(|c| c.trim().eq_ignore_ascii_case(r)).cloned()
}

fn reminder(kind: JudgeKind) -> &'static str {
    match kind {
        JudgeKind::Accuracy | JudgeKind::Relevance => "Reply with a single digit, 1 or 0, and nothing else.",
        JudgeKind::Category => "Reply with exactly one category name from the list and nothing else.",
        JudgeKind::Winrate => "End with exactly one verdict: \"[[A]]\", \"[[B]]\", or \"[[C]]\".",
    }
}

/// Ask a judge at temperature 0 and parse its verdict strictly, re-asking
/// once on a malformed reply.
pub fn judge(kind: JudgeKind, inputs: JudgeInputs<'_>, provider: &dyn ChatProvider) -> Result<JudgeVerdict, JudgeError> {
    let request = match (kind, inputs) {
        (JudgeKind::Accuracy | JudgeKind::Relevance, JudgeInputs::Graded { context, instruction, response }) => {
            let template = if kind == JudgeKind::Accuracy { JUDGE_ACCURACY } else { JUDGE_RELEVANCE };
            ChatRequest::user(render(template, &[("context", context), ("instruction", instruction), ("response", response)]))
        }
        (JudgeKind::Category, JudgeInputs::Category { instruction, response, categories }) => {
            let list = categories.join(", ");
            ChatRequest::user(render(
                JUDGE_CATEGORY,
                &[("categories", list.as_str()), ("instruction", instruction), ("response", response)],
            ))
        }
        (JudgeKind::Winrate, JudgeInputs::Pair { question, response_a, response_b }) => ChatRequest::user(render(
            JUDGE_WINRATE_USER,
            &[("question", question), ("response_a", response_a), ("response_b", response_b)],
        ))
        .with_system(JUDGE_WINRATE_SYSTEM.trim()),
        _ => return Err(JudgeError::WrongInputs(kind)),
    }
    .with_temperature(JUDGE_TEMPERATURE);

    let parse = |reply: &str| -> Option<JudgeVerdict> {
        match (kind, inputs) {
            (JudgeKind::Accuracy, _) => parse_binary(reply).map(JudgeVerdict::Accuracy),
            (JudgeKind::Relevance, _) => parse_binary(reply).map(JudgeVerdict::Relevance),
            (JudgeKind::Category, JudgeInputs::Category { categories, .. }) => {
                parse_category(reply, categories).map(JudgeVerdict::Category)
            }
            (JudgeKind::Winrate, _) => parse_winrate(reply).map(JudgeVerdict::Winrate),
            _ => None,
        }
    };

    let first = provider.complete(&request)?.content;
    if let Some(v) = parse(&first) {
        return Ok(v);
    }
    let mut again = request.clone();
    again.messages.push(Message { role: Role::Assistant, content: first });
    again.messages.push(Message {
        role: Role::User,
        content: format!("Your reply did not follow the required format. {}", reminder(kind)),
    });
    let second = provider.complete(&again)?.content;
    parse(&second).ok_or(JudgeError::Unparseable(second))
}

/// Judge the pair in both orders. A win counts only when both orders agree.
pub fn judge_winrate_swapped(
    question: &str,
    response_a: &str,
    response_b: &str,
    provider: &dyn ChatProvider,
) -> Result<WinrateChoice, JudgeError> {
    let verdict = |a: &str, b: &str| -> Result<WinrateChoice, JudgeError> {
        match judge(JudgeKind::Winrate, JudgeInputs::Pair { question, response_a: a, response_b: b }, provider)? {
            JudgeVerdict::Winrate(c) => Ok(c),
            _ => unreachable!("winrate judge returns winrate verdicts"),
        }
    };
    let forward = verdict(response_a, response_b)?;
    let swapped = verdict(response_b, response_a)?;
    Ok(match (forward, swapped) {
        (WinrateChoice::A, WinrateChoice::B) => WinrateChoice::A,
        (WinrateChoice::B, WinrateChoice::A) => WinrateChoice::B,
        _ => WinrateChoice::C,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinrateReport {
    pub a: f64,
    pub b: f64,
    pub tie: f64,
    pub n: usize,
}

/// Fractions of A wins, B wins and ties. `tie` is computed as the
/// remainder so the three sum to one.
pub fn aggregate_winrate(choices: &[WinrateChoice]) -> WinrateReport {
    let n = choices.len();
    if n == 0 {
        return WinrateReport { a: 0.0, b: 0.0, tie: 1.0, n };
    }
    let count = |c| choices.iter().filter(|&&x| x == c).count() as f64;
    let a = count(WinrateChoice::A) / n as f64;
    let b = count(WinrateChoice::B) / n as f64;
    WinrateReport { a, b, tie: 1.0 - (a + b), n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedProvider;

    fn graded() -> JudgeInputs<'static> {
        JudgeInputs::Graded { context: "c", instruction: "i", response: "r" }
    }

    #[test]
    fn strict_binary() {
        let p = ScriptedProvider::new(["1"]);
        assert_eq!(judge(JudgeKind::Accuracy, graded(), &p).unwrap(), JudgeVerdict::Accuracy(1));
        assert_eq!(p.captured()[0].temperature, 0.0);
        let p = ScriptedProvider::new(["The answer is correct: 1", "1"]);
        assert_eq!(judge(JudgeKind::Accuracy, graded(), &p).unwrap(), JudgeVerdict::Accuracy(1));
        assert_eq!(p.calls(), 2);
        let p = ScriptedProvider::new(["yes", "yes"]);
        assert!(matches!(judge(JudgeKind::Relevance, graded(), &p), Err(JudgeError::Unparseable(_))));
    }

    #[test]
    fn winrate_markers() {
        assert_eq!(parse_winrate("Reasoning... [[B]]"), Some(WinrateChoice::B));
        assert_eq!(parse_winrate("[[A]] or [[B]]"), None);
        assert_eq!(parse_winrate("A"), None);
    }

    #[test]
    fn category_membership() {
        let cats = vec!["Summarization".to_string(), "Question Answering".to_string()];
        let inputs = JudgeInputs::Category { instruction: "i", response: "r", categories: &cats };
        let p = ScriptedProvider::new(["question answering"]);
        assert_eq!(judge(JudgeKind::Category, inputs, &p).unwrap(), JudgeVerdict::Category("Question Answering".into()));
        assert!(matches!(judge(JudgeKind::Winrate, inputs, &p), Err(JudgeError::WrongInputs(_))));
    }

    #[test]
    fn swapped_order_needs_agreement() {
        let p = ScriptedProvider::new(["[[A]]", "[[B]]", "[[A]]", "[[A]]"]);
        assert_eq!(judge_winrate_swapped("q", "x", "y", &p).unwrap(), WinrateChoice::A);
        assert_eq!(judge_winrate_swapped("q", "x", "y", &p).unwrap(), WinrateChoice::C);
        let reqs = p.captured();
        assert!(reqs[0].messages[0].content.find("x").unwrap() < reqs[0].messages[0].content.find("y").unwrap());
        let second = &reqs[1].messages[0].content;
        assert!(second.find("[The Start of Assistant A's Answer]\ny").is_some());
    }
}
