/// Trim, lowercase, and collapse internal whitespace runs to one space.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Exact match after normalization against any gold answer or alias.
pub fn hits_at_1<S: AsRef<str>>(predicted: &str, gold: &[S]) -> bool {
    let p = normalize_answer(predicted);
    gold.iter().any(|g| normalize_answer(g.as_ref()) == p)
}
