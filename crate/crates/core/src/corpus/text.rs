//! Tag normalization and word-level tokenization.

/// Reserved bracketed tags, emitted by the tokenizer as atomic tokens.
pub const SPECIAL_TAGS: [&str; 6] = [
    "[URL]",
    "[HASHTAG]",
    "[USER]",
    "[RT]",
    "[POSTSTART]",
    "[POSTEND]",
];

pub const POST_START: &str = "[POSTSTART]";
pub const POST_END: &str = "[POSTEND]";

const TAG_REPLACEMENTS: [(&str, &str); 3] = [
    ("#URL#", "[URL]"),
    ("#HASHTAG#", "[HASHTAG]"),
    ("#USER#", "[USER]"),
];

/// Rewrites the anonymization placeholders of PAN feeds into bracketed tags.
/// `RT` is only replaced when it is a whole whitespace-delimited token.
pub fn normalize_tags(text: &str) -> String {
    let mut replaced = text.to_owned();
    for (from, to) in TAG_REPLACEMENTS {
        if replaced.contains(from) {
            replaced = replaced.replace(from, to);
        }
    }
    let mut out = String::with_capacity(replaced.len() + 8);
    for piece in replaced.split_inclusive(char::is_whitespace) {
        let word_end = piece
            .char_indices()
            .last()
            .filter(|(_, c)| c.is_whitespace())
            .map_or(piece.len(), |(i, _)| i);
        let (word, ws) = piece.split_at(word_end);
        out.push_str(if word == "RT" { "[RT]" } else { word });
        out.push_str(ws);
    }
    out
}

/// Lowercased word-level split. Runs of alphanumeric characters form words,
/// every other non-space character is a token of its own, and the reserved
/// tags survive intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut word = String::new();
        while let Some(c) = rest.chars().next() {
            if let Some(tag) = SPECIAL_TAGS.iter().find(|t| rest.starts_with(**t)) {
                flush(&mut word, &mut tokens);
                tokens.push((*tag).to_owned());
                rest = &rest[tag.len()..];
                continue;
            }
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
            } else {
                flush(&mut word, &mut tokens);
                tokens.push(c.to_lowercase().collect());
            }
            rest = &rest[c.len_utf8()..];
        }
        flush(&mut word, &mut tokens);
    }
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}
