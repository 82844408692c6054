use sha2::{Digest, Sha256};

pub const PROMPT_VERSION: &str = "1";
pub const SYSTEM_PROMPT: &str = include_str!("prompts/system.txt");
pub const PLANNER_PROMPT: &str = include_str!("prompts/planner.txt");
pub const SUMMARIZER_PROMPT: &str = include_str!("prompts/summarizer.txt");

/// Hex SHA-256 over the version and all three prompts; cited in traces and reports.
pub fn prompt_hash() -> String {
    let mut h = Sha256::new();
    for part in [PROMPT_VERSION, SYSTEM_PROMPT, PLANNER_PROMPT, SUMMARIZER_PROMPT] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}
