//! Word-level tokenization with hyphen splitting.
//!
//! Normalization is NFC + lowercase; punctuation becomes standalone
//! tokens; hyphens between word characters split into the `@-@` marker
//! so they can be stitched back before evaluation. This approximates the
//! usual Moses preprocessing without external scripts.

use unicode_normalization::UnicodeNormalization;

/// Marker emitted for an intra-word hyphen.
pub const HYPHEN_MARKER: &str = "@-@";

/// The mask token's literal surface form.
pub const MASK_TOKEN: &str = "[v]";

/// Lowercase, NFC-normalize, isolate punctuation, split intra-word
/// hyphens as `w1 @-@ w2`, and collapse whitespace. The mask token
/// `[v]` is kept intact so degraded corpora re-tokenize losslessly.
pub fn tokenize(raw: &str) -> Vec<String> {
    let text: String = raw.nfc().collect::<String>().to_lowercase();
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        // keep "[v]" atomic
        if c == '[' && i + 2 < chars.len() && chars[i + 1] == 'v' && chars[i + 2] == ']' {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(MASK_TOKEN.to_string());
            i += 3;
            continue;
        }
        if c.is_alphanumeric() {
            word.push(c);
        } else if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if c == '-'
            && !word.is_empty()
            && i + 1 < chars.len()
            && chars[i + 1].is_alphanumeric()
        {
            // intra-word hyphen
            tokens.push(std::mem::take(&mut word));
            tokens.push(HYPHEN_MARKER.to_string());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        }
        i += 1;
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Collapse every `w1 @-@ w2` back into `w1-w2`. A marker at a sequence
/// edge (no word on one side) is left verbatim.
pub fn stitch_hyphens(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t == HYPHEN_MARKER
            && i + 1 < tokens.len()
            && tokens[i + 1] != HYPHEN_MARKER
            && out.last().is_some_and(|p| p != HYPHEN_MARKER)
        {
            let prev = out.pop().unwrap();
            out.push(format!("{prev}-{}", tokens[i + 1]));
            i += 2;
        } else {
            out.push(t.clone());
            i += 1;
        }
    }
    out
}
