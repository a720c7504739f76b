//! Phrase matching over free text.
//!
//! Matching is ASCII case-insensitive and anchored on word boundaries, so
//! `STEMI` does not match inside `NSTEMI` and `diabetes` does not match
//! inside `prediabetes`. Offsets always index the original text.

use std::ops::Range;

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

/// All non-overlapping, word-bounded occurrences of `phrase` in `text`.
pub(crate) fn find_all(text: &str, phrase: &str) -> Vec<Range<usize>> {
    let hay = text.as_bytes();
    let needle = phrase.as_bytes();
    let mut out = Vec::new();
    if needle.is_empty() || needle.len() > hay.len() {
        return out;
    }
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if hay[i..i + needle.len()].eq_ignore_ascii_case(needle) {
            let end = i + needle.len();
            let left_ok = i == 0 || !is_word_byte(hay[i - 1]) || !is_word_byte(needle[0]);
            let right_ok = end == hay.len()
                || !is_word_byte(hay[end])
                || !is_word_byte(needle[needle.len() - 1]);
            if left_ok && right_ok {
                out.push(i..end);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub(crate) fn contains_phrase(text: &str, phrase: &str) -> bool {
    !find_all(text, phrase).is_empty()
}

/// The sentence (bounded by line breaks and `. `) that contains `span`,
/// trimmed of whitespace and list bullets. Always a substring of `text`.
pub(crate) fn sentence_around<'a>(text: &'a str, span: &Range<usize>) -> &'a str {
    let bytes = text.as_bytes();
    let mut start = span.start;
    while start > 0 {
        let prev = bytes[start - 1];
        if prev == b'\n' {
            break;
        }
        if start >= 2 && bytes[start - 2] == b'.' && prev == b' ' {
            break;
        }
        start -= 1;
    }
    let mut end = span.end;
    while end < bytes.len() {
        let b = bytes[end];
        if b == b'\n' || b == b'\r' {
            break;
        }
        if b == b'.' && (end + 1 == bytes.len() || bytes[end + 1].is_ascii_whitespace()) {
            end += 1;
            break;
        }
        end += 1;
    }
    let slice = &text[start..end];
    slice.trim().trim_start_matches(['-', '*']).trim_start()
}

pub(crate) fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Truncate to at most `max` characters on a char boundary, appending an
/// ellipsis when anything was cut.
pub(crate) fn excerpt(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        None => text.to_string(),
        Some((idx, _)) => format!("{}…", text[..idx].trim_end()),
    }
}

/// First sentence of `text`, up to and including its terminator.
pub(crate) fn first_sentence(text: &str) -> &str {
    let trimmed = text.trim_start();
    let bytes = trimmed.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?' | b'\n')
            && (i + 1 == bytes.len() || bytes[i + 1].is_ascii_whitespace())
        {
            return &trimmed[..=i];
        }
    }
    trimmed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_boundaries() {
        assert!(find_all("s/p NSTEMI in 2018", "STEMI").is_empty());
        assert_eq!(find_all("s/p NSTEMI in 2018", "nstemi"), vec![4..10]);
        assert!(find_all("Prediabetes, diet controlled.", "diabetes").is_empty());
        assert_eq!(find_all("Diabetes, diet controlled.", "diabetes").len(), 1);
        assert!(!contains_phrase("particular concern", "icu"));
        assert!(contains_phrase("going to ICU postop", "icu"));
    }

    #[test]
    fn punctuated_phrases_match() {
        let text = "Hypertension, well-controlled on amlodipine.";
        assert_eq!(find_all(text, "hypertension, well-controlled"), vec![0..29]);
        assert!(contains_phrase(
            "Crohn's disease with resection",
            "crohn's disease"
        ));
    }

    #[test]
    fn sentence_extraction() {
        let text = "PMH:\n- History of atrial fibrillation on apixaban.\n- GERD.";
        let span = find_all(text, "atrial fibrillation")[0].clone();
        assert_eq!(
            sentence_around(text, &span),
            "History of atrial fibrillation on apixaban."
        );
        let inline = "Pleasant man. Diabetes, A1c 7.2%. Lives alone.";
        let span = find_all(inline, "diabetes")[0].clone();
        assert_eq!(sentence_around(inline, &span), "Diabetes, A1c 7.2%.");
    }

    #[test]
    fn excerpt_respects_char_boundaries() {
        assert_eq!(excerpt("abc", 5), "abc");
        assert_eq!(excerpt("héllo wörld", 5), "héllo…");
    }

    #[test]
    fn first_sentence_stops_at_terminator() {
        assert_eq!(first_sentence("  Review this. Then more."), "Review this.");
        assert_eq!(first_sentence("No terminator"), "No terminator");
        assert_eq!(first_sentence("EF 2.5 ok. Next"), "EF 2.5 ok.");
    }
}
