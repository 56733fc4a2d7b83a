//! Small text helpers shared by the mock backends and the lexical scorer.

/// 64-bit FNV-1a. Stable across processes and platforms, which the mock
/// encoders rely on for bit-identical output.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased whitespace tokens with leading/trailing punctuation stripped.
/// Tokens that are pure punctuation are dropped.
pub fn lexical_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|raw| {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            None
        } else {
            Some(t.to_lowercase())
        }
    })
}
