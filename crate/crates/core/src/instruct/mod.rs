//! Instruction synthesis from accepted documents, response prompt
//! construction, and LLM judges.

mod judge;
mod questions;
mod responses;

pub use judge::{
    aggregate_winrate, judge, judge_winrate_swapped, JudgeError, JudgeInputs, JudgeKind, JudgeVerdict, WinrateChoice,
    WinrateReport, DEFAULT_CATEGORIES,
};
pub use questions::{
    banned_reason, parse_questions, parse_questions_with_warnings, synthesize_instructions, FilteredQuestion,
    InstructRunConfig, InstructRunOutput, InstructionRole,
};
pub use responses::{build_response_prompts, format_instruction, synthesize_responses, PromptItem, ResponsePrompt, ResponseSynthesis};
