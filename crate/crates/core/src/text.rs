//! Small text utilities shared by the store and the NLU.

/// Case-folded form used for fuzzy comparisons.
pub fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Damerau-Levenshtein distance between two strings, counted in characters.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::damerau_levenshtein(a, b)
}

/// Largest edit distance at which a stored value of `len` characters still
/// matches: `min(2, ceil(len / 5))`.
pub fn fuzzy_threshold(len: usize) -> usize {
    len.div_ceil(5).min(2)
}

/// Splits text into word tokens with their byte ranges. A token is a run of
/// alphanumeric characters, possibly joined by inner apostrophes, hyphens,
/// colons or periods (so `19:30`, `2024-05-01` and `o'neil` stay whole).
pub fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        loop {
            if j < chars.len() && chars[j].1.is_alphanumeric() {
                j += 1;
            } else if j + 1 < chars.len()
                && matches!(chars[j].1, '\'' | '-' | ':' | '.')
                && chars[j + 1].1.is_alphanumeric()
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        out.push((start, end));
        i = j;
    }
    out
}
