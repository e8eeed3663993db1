//! Prompt construction for the first pass, the re-ask pass and the
//! prompt-only ablation. Builders take a [`QuestionView`], which carries no
//! gold label.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::InferenceError;
use crate::dataset::{option_letter, QuestionView};

pub const FIRST_PASS_SYSTEM: &str = include_str!("../../templates/first_pass_system.v1.txt");
pub const REASK_INSTRUCTION: &str = include_str!("../../templates/reask_instruction.v1.txt");
pub const PROMPT_ONLY_SYSTEM: &str = include_str!("../../templates/prompt_only_system.v1.txt");

pub const PREVIOUS_ANSWER_HEADER: &str = "Your previous answer was:";
pub const INSTRUCTION_HEADER: &str = "Instruction:";

/// Template asset names with the hex SHA-256 of their contents.
pub fn template_hashes() -> BTreeMap<String, String> {
    [
        ("first_pass_system.v1", FIRST_PASS_SYSTEM),
        ("reask_instruction.v1", REASK_INSTRUCTION),
        ("prompt_only_system.v1", PROMPT_ONLY_SYSTEM),
    ]
    .into_iter()
    .map(|(name, body)| (name.to_string(), sha256_hex(body.as_bytes())))
    .collect()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

impl PromptPair {
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

fn system_for(template: &str, subject: &str) -> String {
    template.replace("{subject}", subject)
}

/// `Question: ...` followed by the lettered options.
pub fn question_block(q: &QuestionView<'_>) -> String {
    let mut s = format!("Question: {}\nOptions:\n", q.stem);
    for (i, opt) in q.options.iter().enumerate() {
        let _ = writeln!(s, "{}. {}", option_letter(i), opt);
    }
    s
}

pub fn build_first_pass_prompt(q: &QuestionView<'_>) -> PromptPair {
    PromptPair {
        system: system_for(FIRST_PASS_SYSTEM, q.subject),
        user: question_block(q),
    }
}

/// Question block, then the full first-pass output, then the fixed
/// uncertainty instruction. Says nothing about correctness.
pub fn build_reask_prompt(q: &QuestionView<'_>, first_output: &str) -> Result<PromptPair, InferenceError> {
    if first_output.trim().is_empty() {
        return Err(InferenceError::PromptConstruction(
            "first-pass output is empty".into(),
        ));
    }
    let mut user = question_block(q);
    user.push('\n');
    user.push_str(PREVIOUS_ANSWER_HEADER);
    user.push('\n');
    user.push_str(first_output);
    user.push_str("\n\n");
    user.push_str(INSTRUCTION_HEADER);
    user.push('\n');
    user.push_str(REASK_INSTRUCTION);
    Ok(PromptPair {
        system: system_for(FIRST_PASS_SYSTEM, q.subject),
        user,
    })
}

/// Single pass with the re-ask wording folded into the system prompt.
pub fn build_prompt_only_prompt(q: &QuestionView<'_>) -> PromptPair {
    PromptPair {
        system: system_for(PROMPT_ONLY_SYSTEM, q.subject),
        user: question_block(q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Question;

    fn question(k: usize) -> Question {
        Question {
            id: "q1".into(),
            subject: "law".into(),
            stem: "Which clause applies?".into(),
            options: (0..k).map(|i| format!("clause {i}")).collect(),
            gold: 2,
        }
    }

    #[test]
    fn first_pass_layout() {
        let q = question(10);
        let p = build_first_pass_prompt(&q.view());
        assert!(p.system.contains("multiple choice questions (with answers) about law."));
        assert!(p.system.contains("output the answer in the format of \"The answer is (X)\" at the end"));
        assert!(p.user.starts_with("Question: Which clause applies?\nOptions:\nA. clause 0\n"));
        assert!(p.user.contains("J. clause 9\n"));
        assert!(!p.user.contains("K. "));

        let p4 = build_first_pass_prompt(&question(4).view());
        assert!(p4.user.contains("D. clause 3\n"));
        assert!(!p4.user.contains("E. "));
        assert_eq!(build_first_pass_prompt(&q.view()), p);
    }

    #[test]
    fn reask_layout() {
        let q = question(10);
        let out = "Step 1... The answer is (B)";
        let p = build_reask_prompt(&q.view(), out).unwrap();
        let qpos = p.user.find("Question:").unwrap();
        let apos = p.user.find("Your previous answer was:\nStep 1... The answer is (B)").unwrap();
        let ipos = p.user.find("Instruction:\nYour last output had high entropy").unwrap();
        assert!(qpos < apos && apos < ipos);
        assert!(p.user.contains("Discard the prior answer and recompute the solution from first principles. Think step by step"));
        assert_eq!(build_reask_prompt(&q.view(), out).unwrap(), p);
        assert!(matches!(build_reask_prompt(&q.view(), ""), Err(InferenceError::PromptConstruction(_))));
        assert!(matches!(build_reask_prompt(&q.view(), " \n"), Err(InferenceError::PromptConstruction(_))));
    }

    #[test]
    fn reask_prompt_independent_of_gold() {
        let mut q = question(10);
        let out = "The answer is (D)";
        let base = build_reask_prompt(&q.view(), out).unwrap();
        for gold in 0..10 {
            q.gold = gold;
            assert_eq!(build_reask_prompt(&q.view(), out).unwrap(), base);
        }
        let lower = base.user.to_lowercase();
        for leak in ["correct answer", "was wrong", "incorrect", "gold", "answer key"] {
            assert!(!lower.contains(leak), "{leak}");
        }
    }

    #[test]
    fn prompt_only_uses_reask_wording() {
        let p = build_prompt_only_prompt(&question(10).view());
        assert!(p.system.starts_with("The following are multiple choice questions (with answers) about law. Your last output had high entropy"));
        assert!(!p.user.contains(PREVIOUS_ANSWER_HEADER));
    }

    #[test]
    fn template_hashes_are_stable_hex() {
        let h = template_hashes();
        assert_eq!(h.len(), 3);
        assert!(h.values().all(|v| v.len() == 64));
    }
}
