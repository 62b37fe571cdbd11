//! Text normalization and tokenization shared by matching, hashing and BM25.

use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// NFC, case-fold and collapse runs of whitespace to a single space.
pub fn normalize(text: &str) -> String {
    let folded: String = text.nfc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Unicode word segmentation over the normalized text.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text)
        .unicode_words()
        .map(str::to_owned)
        .collect()
}

/// Whitespace-delimited tokens of the raw text; the chunker's budget unit.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Exact substring match after normalizing both sides.
pub fn contains_normalized(haystack_normalized: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    !needle.is_empty() && haystack_normalized.contains(&needle)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
