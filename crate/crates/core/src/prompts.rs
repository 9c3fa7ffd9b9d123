//! Prompt assets and a minimal placeholder renderer.
//!
//! Templates use `{name}` placeholders, where `name` is lowercase ASCII
//! letters and underscores. `{{` and `}}` produce literal braces. Unknown
//! placeholders and any other braces are copied through unchanged.
//! Substituted values are never re-scanned, so text pasted into a prompt
//! cannot inject placeholders of its own.

use std::collections::HashMap;

pub const DOC_META_SYSTEM: &str = include_str!("../assets/doc_meta_system.txt");
pub const DOC_META_USER: &str = include_str!("../assets/doc_meta_user.txt");
pub const DOC_TASK: &str = include_str!("../assets/doc_task.txt");
pub const INSTRUCT_META_SYSTEM: &str = include_str!("../assets/instruct_meta_system.txt");
pub const INSTRUCT_META_USER: &str = include_str!("../assets/instruct_meta_user.txt");
pub const TEMPLATE_PROMPT: &str = include_str!("../assets/template_prompt.txt");
pub const JUDGE_WINRATE_SYSTEM: &str = include_str!("../assets/judges/winrate.txt");
pub const JUDGE_WINRATE_USER: &str = include_str!("../assets/judges/winrate_user.txt");
pub const JUDGE_ACCURACY: &str = include_str!("../assets/judges/accuracy.txt");
pub const JUDGE_RELEVANCE: &str = include_str!("../assets/judges/relevance.txt");
pub const JUDGE_CATEGORY: &str = include_str!("../assets/judges/category.txt");

/// Shipped task descriptions for instruction synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPreset {
    ComplexQuestions,
    Headlines,
    FiqaAbsa,
    Fpb,
}

impl TaskPreset {
    pub const ALL: [TaskPreset; 4] = [Self::ComplexQuestions, Self::Headlines, Self::FiqaAbsa, Self::Fpb];

    pub fn name(self) -> &'static str {
        match self {
            Self::ComplexQuestions => "complex-questions",
            Self::Headlines => "headlines",
            Self::FiqaAbsa => "fiqa-absa",
            Self::Fpb => "fpb",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Self::ComplexQuestions => include_str!("../assets/tasks/complex_questions.txt"),
            Self::Headlines => include_str!("../assets/tasks/headlines.txt"),
            Self::FiqaAbsa => include_str!("../assets/tasks/fiqa_absa.txt"),
            Self::Fpb => include_str!("../assets/tasks/fpb.txt"),
        }
    }

    /// Accepts the preset name with `-` or `_` separators.
    pub fn from_name(name: &str) -> Option<Self> {
        let wanted = name.trim().replace('_', "-").to_lowercase();
        Self::ALL.into_iter().find(|p| p.name() == wanted)
    }
}

/// Substitute `{key}` placeholders from `vars` in one pass.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let lookup: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
        } else if tail.starts_with('}') {
            out.push('}');
            rest = &tail[1..];
        } else {
            let name_len = tail[1..].find(|c: char| !(c.is_ascii_lowercase() || c == '_')).unwrap_or(tail.len() - 1);
            let name = &tail[1..1 + name_len];
            match (tail[1 + name_len..].starts_with('}'), lookup.get(name)) {
                (true, Some(value)) if !name.is_empty() => {
                    out.push_str(value);
                    rest = &tail[name_len + 2..];
                }
                _ => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_known_keys_only() {
        assert_eq!(render("a {x} {y} {Z}", &[("x", "1")]), "a 1 {y} {Z}");
        assert_eq!(render("{{x}} {x}", &[("x", "v")]), "{x} v");
        assert_eq!(render("sentence: {text of sentence}", &[]), "sentence: {text of sentence}");
    }

    #[test]
    fn values_are_not_rescanned() {
        assert_eq!(render("{a}{b}", &[("a", "{b}"), ("b", "B")]), "{b}B");
    }

    #[test]
    fn doc_prompts_have_no_unfilled_slots() {
        let user = render(DOC_META_USER, &[("domain", "finance"), ("target_words", "400"), ("round_limit", "256")]);
        assert!(user.contains("exactly 400 words"));
        assert!(user.contains("within 256 rounds"));
        assert!(!user.contains("{domain}"));
        assert!(user.contains("{text of each seed document}"));
    }

    #[test]
    fn presets_resolve() {
        for p in TaskPreset::ALL {
            assert_eq!(TaskPreset::from_name(p.name()), Some(p));
            assert!(p.text().contains("<task>"));
        }
        assert_eq!(TaskPreset::from_name("complex_questions"), Some(TaskPreset::ComplexQuestions));
        assert!(TaskPreset::FiqaAbsa.text().contains("sentence: {text of sentence}"));
    }
}
