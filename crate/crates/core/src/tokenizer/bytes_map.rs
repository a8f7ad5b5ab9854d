//! Reversible byte → printable-char mapping used for the vocab file.
//!
//! Printable Latin-1 bytes (`!`..=`~`, `¡`..=`¬`, `®`..=`ÿ`) map to
//! themselves; the remaining 68 bytes map to U+0100 onward in byte order.
//! No mapped char is whitespace, so tabs and newlines never appear in a
//! piece's printable form.

use std::sync::OnceLock;

fn tables() -> &'static ([char; 256], std::collections::HashMap<char, u8>) {
    static TABLES: OnceLock<([char; 256], std::collections::HashMap<char, u8>)> = OnceLock::new();
    TABLES.get_or_init(|| {
        let printable = |b: u8| (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || b >= 0xAE;
        let mut forward = ['\0'; 256];
        let mut next = 256u32;
        for b in 0..=255u8 {
            forward[b as usize] = if printable(b) {
                char::from(b)
            } else {
                let c = char::from_u32(next).expect("valid scalar");
                next += 1;
                c
            };
        }
        let back = forward.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        (forward, back)
    })
}

pub fn encode_piece(bytes: &[u8]) -> String {
    let (forward, _) = tables();
    bytes.iter().map(|&b| forward[b as usize]).collect()
}

pub fn decode_piece(s: &str) -> Option<Vec<u8>> {
    let (_, back) = tables();
    let bytes: Option<Vec<u8>> = s.chars().map(|c| back.get(&c).copied()).collect();
    bytes.filter(|b| !b.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_byte_roundtrips_and_is_visible() {
        for b in 0..=255u8 {
            let s = encode_piece(&[b]);
            assert_eq!(s.chars().count(), 1);
            assert!(!s.chars().next().unwrap().is_whitespace(), "byte {b}");
            assert_eq!(decode_piece(&s), Some(vec![b]));
        }
        assert_eq!(encode_piece(b" a"), "\u{120}a");
    }
}
