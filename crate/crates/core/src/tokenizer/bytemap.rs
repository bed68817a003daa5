//! Reversible byte <-> printable-char mapping for storing byte tokens as JSON
//! strings. Printable Latin-1 bytes map to themselves, the rest to U+0100 onward.

use std::sync::OnceLock;

fn printable(b: u8) -> bool {
    matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF)
}

fn tables() -> &'static ([char; 256], std::collections::HashMap<char, u8>) {
    static TABLES: OnceLock<([char; 256], std::collections::HashMap<char, u8>)> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut fwd = ['\0'; 256];
        let mut extra = 0u32;
        for b in 0..=255u8 {
            fwd[b as usize] = if printable(b) {
                char::from(b)
            } else {
                extra += 1;
                char::from_u32(255 + extra).expect("valid scalar")
            };
        }
        let back = fwd.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        (fwd, back)
    })
}

pub(crate) fn bytes_to_string(bytes: &[u8]) -> String {
    let (fwd, _) = tables();
    bytes.iter().map(|&b| fwd[b as usize]).collect()
}

pub(crate) fn string_to_bytes(s: &str) -> Option<Vec<u8>> {
    let (_, back) = tables();
    s.chars().map(|c| back.get(&c).copied()).collect()
}
