//! Character vocabulary for the autoregressive text reconstruction heads.

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const FIRST_PRINTABLE: u32 = 4;

/// Printable ASCII plus the four control ids.
pub const VOCAB_SIZE: usize = 4 + 95;

pub fn char_id(c: char) -> u32 {
    match c {
        ' '..='~' => FIRST_PRINTABLE + (c as u32 - ' ' as u32),
        _ => UNK,
    }
}

/// Decoder targets: character ids followed by `EOS`, truncated to `max_len`.
pub fn encode_targets(s: &str, max_len: usize) -> Vec<u32> {
    s.chars()
        .map(char_id)
        .chain(std::iter::once(EOS))
        .take(max_len)
        .collect()
}

/// Teacher-forcing inputs: `BOS` followed by the targets shifted right.
pub fn encode_inputs(s: &str, max_len: usize) -> Vec<u32> {
    std::iter::once(BOS)
        .chain(s.chars().map(char_id))
        .take(max_len)
        .collect()
}
