//! Sentence boundaries and word tokens.
//!
//! One rule set is shared by glossary normalization and the readability
//! statistics so that "one sentence" means the same thing everywhere:
//!
//! * `.`, `!` and `?` end a sentence when followed by whitespace or the end of
//!   the text. A run of terminators (`?!`, `...`) acts as one, and closing
//!   quotes or brackets right after the run stay with the sentence.
//! * A period after one of the abbreviations in [`ABBREVIATIONS`] never ends a
//!   sentence.
//! * A period after a lone capital letter (an initial) does not end a sentence
//!   when the next token is another initial or a capitalized word of at least
//!   two characters, so `J. R. R. Tolkien` stays together while `A. B? C!`
//!   still splits three ways.

/// Abbreviations whose trailing period is not a sentence terminator.
pub const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "etc.", "cf.", "vs."];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{201c}', '\u{2018}', '\u{ab}'];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits `text` into trimmed sentences. Trailing text without a terminator
/// forms the last sentence; whitespace-only input yields no sentences.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    for end in boundaries(text) {
        push_trimmed(&mut sentences, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

/// Byte offsets just past each sentence (terminator run plus closers).
fn boundaries(text: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
            j += 1;
        }
        let run_len = j - run_start + 1;
        while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);
        let followed_by_break = chars.get(j + 1).is_none_or(|&(_, n)| n.is_whitespace());
        if followed_by_break && !(run_len == 1 && c == '.' && period_is_exempt(text, chars[run_start].0, end)) {
            out.push(end);
        }
        i = j + 1;
    }
    out
}

/// `dot` is the byte offset of a lone period; `after` the offset just past it.
fn period_is_exempt(text: &str, dot: usize, after: usize) -> bool {
    let before = &text[..dot];
    let token_start = before
        .char_indices()
        .rev()
        .find(|&(_, c)| c.is_whitespace())
        .map_or(0, |(b, c)| b + c.len_utf8());
    let token = before[token_start..].trim_start_matches(OPENERS);

    let with_dot = format!("{}.", token.to_lowercase());
    if ABBREVIATIONS.contains(&with_dot.as_str()) {
        return true;
    }

    let mut tc = token.chars();
    let is_initial = matches!((tc.next(), tc.next()), (Some(c), None) if c.is_uppercase());
    if !is_initial {
        return false;
    }
    let next = text[after..].split_whitespace().next();
    match next {
        None => false,
        Some(tok) => {
            let mut nc = tok.chars();
            let first = nc.next();
            let second = nc.next();
            if matches!((first, second, nc.next()), (Some(f), Some('.'), _) if f.is_uppercase()) {
                return true;
            }
            let word = tok.trim_end_matches(|c: char| !c.is_alphanumeric());
            word.chars().next().is_some_and(char::is_uppercase) && word.chars().count() >= 2
        }
    }
}

/// True when `text` is exactly one sentence under [`split_sentences`].
pub fn is_single_sentence(text: &str) -> bool {
    split_sentences(text).len() == 1
}

/// Word tokens: maximal runs of alphanumeric characters, keeping apostrophes
/// that sit between two alphanumerics (`don't`, `Earth's`). Hyphens and all
/// other punctuation separate words.
pub fn words(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &(b, c)) in chars.iter().enumerate() {
        let inner_apostrophe = matches!(c, '\'' | '\u{2019}')
            && start.is_some()
            && chars.get(k + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            start.get_or_insert(b);
        } else if let Some(s) = start.take() {
            out.push(&text[s..b]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}
