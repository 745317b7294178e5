#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no ```plan block found in the completion")]
    NoPlanBlock,
    #[error("found {0} ```plan blocks; expected exactly one")]
    MultiplePlanBlocks(usize),
}

/// Returns the interior of the single ```` ```plan ```` fenced block in `completion`.
///
/// An unterminated block runs to the end of the text.
pub fn extract_plan(completion: &str) -> Result<String, ExtractError> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    let mut other_fence = false;
    for line in completion.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            Some(body) => {
                if trimmed == "```" {
                    blocks.push(current.take().unwrap_or_default());
                } else {
                    body.push(line);
                }
            }
            None if other_fence => {
                if trimmed == "```" {
                    other_fence = false;
                }
            }
            None => {
                if let Some(tag) = trimmed.strip_prefix("```") {
                    if tag.trim() == "plan" {
                        current = Some(Vec::new());
                    } else if !tag.is_empty() {
                        other_fence = true;
                    }
                }
            }
        }
    }
    if let Some(body) = current {
        blocks.push(body);
    }
    match blocks.len() {
        0 => Err(ExtractError::NoPlanBlock),
        1 => Ok(blocks.remove(0).join("\n")),
        n => Err(ExtractError::MultiplePlanBlocks(n)),
    }
}
