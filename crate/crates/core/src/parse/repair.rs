use super::{Issue, ParseOutcome, Severity};
use crate::prompt::{PromptText, RawResponse};

/// Result of a parse with bounded re-prompting.
#[derive(Debug, Clone)]
pub struct RepairOutcome<T> {
    pub outcome: ParseOutcome<T>,
    /// Transport calls made, the first one included.
    pub attempts: u32,
    /// Every prompt sent and the response it got, in order.
    pub history: Vec<(PromptText, RawResponse)>,
}

/// The original prompt prefixed with the fatal issues of the last answer.
pub fn correction_prompt(original: &PromptText, issues: &[Issue]) -> PromptText {
    let listed: Vec<String> = issues
        .iter()
        .filter(|i| i.severity == Severity::Fatal)
        .map(|i| format!("- {i}"))
        .collect();
    let body = format!(
        "Your previous answer could not be used:\n{}\nAnswer again, following the OUTPUT REQUIREMENTS exactly.\n\n{}",
        listed.join("\n"),
        original.body
    );
    PromptText {
        stage_kind: original.stage_kind,
        body,
        substitutions: original.substitutions.clone(),
    }
}

/// Parses `first`; while the parse is fatal and fewer than `max_attempts`
/// calls have been made, asks again through `complete` with a correction
/// prompt. The call that produced `first` counts as attempt one.
pub fn repair_or_fail<T, E>(
    prompt: &PromptText,
    first: RawResponse,
    parse: impl Fn(&RawResponse) -> ParseOutcome<T>,
    mut complete: impl FnMut(&PromptText) -> Result<RawResponse, E>,
    max_attempts: u32,
) -> Result<RepairOutcome<T>, E> {
    let mut outcome = parse(&first);
    let mut history = vec![(prompt.clone(), first)];
    let mut attempts = 1;
    while outcome.is_fatal() && attempts < max_attempts {
        let retry = correction_prompt(prompt, outcome.issues());
        let raw = complete(&retry)?;
        attempts += 1;
        outcome = parse(&raw);
        history.push((retry, raw));
    }
    Ok(RepairOutcome { outcome, attempts, history })
}
