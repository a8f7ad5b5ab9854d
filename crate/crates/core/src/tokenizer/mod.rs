//! Byte-level BPE vocabulary and model-input assembly.
//!
//! Ids 0..5 are the special tokens, ids 5..261 are the 256 single bytes in
//! byte order, and every id after that is a learned merge. Text is split into
//! chunks at each whitespace character that follows a non-whitespace one
//! (`"ab cd"` → `"ab"`, `" cd"`); merges never cross chunk boundaries.

mod bpe;
mod bytes_map;
mod input;

pub use bpe::train_vocab;
pub use input::{build_input_pair, InputSequence};

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const NUM_SPECIALS: u32 = 5;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
/// Smallest possible vocabulary: specials plus every byte.
pub const BASE_VOCAB_SIZE: usize = NUM_SPECIALS as usize + 256;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {0} is below the {BASE_VOCAB_SIZE}-entry base alphabet")]
    TargetTooSmall(usize),
    #[error("max_len {max_len} cannot hold {needed} special tokens")]
    SequenceTooShort { max_len: usize, needed: usize },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    /// Raw bytes of each piece; specials hold their literal text.
    pieces: Vec<Vec<u8>>,
    piece_to_id: HashMap<String, u32>,
    /// Ordered merge list; rank is the index.
    merges: Vec<(u32, u32)>,
    merge_lookup: HashMap<(u32, u32), (usize, u32)>,
}

impl Vocab {
    /// Specials plus the 256 byte pieces, no merges.
    pub fn base() -> Self {
        let mut pieces: Vec<Vec<u8>> = SPECIAL_TOKENS.iter().map(|s| s.as_bytes().to_vec()).collect();
        pieces.extend((0..=255u8).map(|b| vec![b]));
        Self::from_parts(pieces, Vec::new())
    }

    fn from_parts(pieces: Vec<Vec<u8>>, merges: Vec<(u32, u32)>) -> Self {
        let piece_to_id = pieces
            .iter()
            .enumerate()
            .map(|(id, p)| (display_piece(id as u32, p), id as u32))
            .collect();
        let by_bytes: HashMap<&[u8], u32> = pieces
            .iter()
            .enumerate()
            .skip(NUM_SPECIALS as usize)
            .map(|(id, p)| (p.as_slice(), id as u32))
            .collect();
        let merge_lookup = merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r))| {
                let mut joined = pieces[l as usize].clone();
                joined.extend_from_slice(&pieces[r as usize]);
                ((l, r), (rank, by_bytes[joined.as_slice()]))
            })
            .collect();
        Self {
            pieces,
            piece_to_id,
            merges,
            merge_lookup,
        }
    }

    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn piece_bytes(&self, id: u32) -> Option<&[u8]> {
        self.pieces.get(id as usize).map(Vec::as_slice)
    }

    /// Printable form of a piece, as written to the vocab file.
    pub fn piece(&self, id: u32) -> Option<String> {
        self.pieces.get(id as usize).map(|p| display_piece(id, p))
    }

    pub fn id_of(&self, piece: &str) -> Option<u32> {
        self.piece_to_id.get(piece).copied()
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIALS
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, text: &[u8]) -> Vec<u32> {
        let mut out = Vec::new();
        for chunk in split_chunks(text) {
            let mut ids: Vec<u32> = chunk.iter().map(|&b| b as u32 + NUM_SPECIALS).collect();
            self.apply_merges(&mut ids);
            out.extend(ids);
        }
        out
    }

    fn apply_merges(&self, ids: &mut Vec<u32>) {
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.merge_lookup.get(&(w[0], w[1])))
                .min_by_key(|(rank, _)| *rank);
            let Some(&(rank, merged)) = best else { break };
            let (l, r) = self.merges[rank];
            let mut i = 0;
            let mut next = Vec::with_capacity(ids.len());
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(ids[i]);
                    i += 1;
                }
            }
            *ids = next;
        }
    }

    /// Concatenated bytes of `ids`. Out-of-range ids decode as `[UNK]`.
    pub fn decode_bytes(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            match self.pieces.get(id as usize) {
                Some(p) => out.extend_from_slice(p),
                None => out.extend_from_slice(SPECIAL_TOKENS[UNK_ID as usize].as_bytes()),
            }
        }
        out
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        String::from_utf8_lossy(&self.decode_bytes(ids)).into_owned()
    }

    /// Writes `piece<TAB>id` lines and the ordered `left<TAB>right` merge list.
    pub fn save(&self, vocab_path: &Path, merges_path: &Path) -> Result<(), TokenizerError> {
        let mut w = BufWriter::new(fs::File::create(vocab_path)?);
        for (id, p) in self.pieces.iter().enumerate() {
            writeln!(w, "{}\t{}", display_piece(id as u32, p), id)?;
        }
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(merges_path)?);
        for &(l, r) in &self.merges {
            writeln!(
                w,
                "{}\t{}",
                display_piece(l, &self.pieces[l as usize]),
                display_piece(r, &self.pieces[r as usize])
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self, TokenizerError> {
        let vocab_text = fs::read_to_string(vocab_path)?;
        let merges_text = fs::read_to_string(merges_path)?;
        Self::parse(
            &vocab_text,
            &merges_text,
            &vocab_path.display().to_string(),
            &merges_path.display().to_string(),
        )
    }

    pub fn parse(
        vocab_text: &str,
        merges_text: &str,
        vocab_name: &str,
        merges_name: &str,
    ) -> Result<Self, TokenizerError> {
        let err = |path: &str, line: usize, message: String| TokenizerError::Format {
            path: path.to_string(),
            line,
            message,
        };
        let mut pieces = Vec::new();
        let mut seen = HashMap::new();
        for (n, line) in vocab_text.lines().enumerate() {
            let lineno = n + 1;
            let (piece, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| err(vocab_name, lineno, "expected piece<TAB>id".into()))?;
            let id: usize = id
                .parse()
                .map_err(|_| err(vocab_name, lineno, format!("bad id {id:?}")))?;
            if id != pieces.len() {
                return Err(err(vocab_name, lineno, format!("id {id} out of sequence")));
            }
            if seen.insert(piece.to_string(), id).is_some() {
                return Err(err(vocab_name, lineno, format!("duplicate piece {piece:?}")));
            }
            let bytes = if id < NUM_SPECIALS as usize {
                if piece != SPECIAL_TOKENS[id] {
                    return Err(err(vocab_name, lineno, format!("expected {} at id {id}", SPECIAL_TOKENS[id])));
                }
                piece.as_bytes().to_vec()
            } else {
                bytes_map::decode_piece(piece)
                    .ok_or_else(|| err(vocab_name, lineno, format!("unmappable piece {piece:?}")))?
            };
            if (NUM_SPECIALS as usize..BASE_VOCAB_SIZE).contains(&id)
                && bytes != [(id - NUM_SPECIALS as usize) as u8]
            {
                return Err(err(vocab_name, lineno, "byte pieces must be in byte order".into()));
            }
            pieces.push(bytes);
        }
        if pieces.len() < BASE_VOCAB_SIZE {
            return Err(err(vocab_name, pieces.len(), "vocabulary lacks the byte alphabet".into()));
        }
        let mut merges = Vec::new();
        let by_bytes: HashMap<&[u8], u32> = pieces
            .iter()
            .enumerate()
            .skip(NUM_SPECIALS as usize)
            .map(|(id, p)| (p.as_slice(), id as u32))
            .collect();
        for (n, line) in merges_text.lines().enumerate() {
            let lineno = n + 1;
            let (l, r) = line
                .split_once('\t')
                .ok_or_else(|| err(merges_name, lineno, "expected left<TAB>right".into()))?;
            let lookup = |s: &str| {
                seen.get(s)
                    .map(|&id| id as u32)
                    .filter(|&id| id >= NUM_SPECIALS)
                    .ok_or_else(|| err(merges_name, lineno, format!("unknown piece {s:?}")))
            };
            let (li, ri) = (lookup(l)?, lookup(r)?);
            let mut joined = pieces[li as usize].clone();
            joined.extend_from_slice(&pieces[ri as usize]);
            if !by_bytes.contains_key(joined.as_slice()) {
                return Err(err(merges_name, lineno, "merge result missing from vocabulary".into()));
            }
            merges.push((li, ri));
        }
        Ok(Self::from_parts(pieces, merges))
    }
}

fn display_piece(id: u32, bytes: &[u8]) -> String {
    if id < NUM_SPECIALS {
        SPECIAL_TOKENS[id as usize].to_string()
    } else {
        bytes_map::encode_piece(bytes)
    }
}

/// Splits at each whitespace byte that follows a non-whitespace byte.
pub(crate) fn split_chunks(text: &[u8]) -> Vec<&[u8]> {
    let mut chunks = Vec::new();
    let mut start = 0;
    for i in 1..text.len() {
        if text[i].is_ascii_whitespace() && !text[i - 1].is_ascii_whitespace() {
            chunks.push(&text[start..i]);
            start = i;
        }
    }
    if start < text.len() {
        chunks.push(&text[start..]);
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_vocab_layout() {
        let v = Vocab::base();
        assert_eq!(v.size(), BASE_VOCAB_SIZE);
        assert_eq!(v.id_of("[PAD]"), Some(PAD_ID));
        assert_eq!(v.id_of("[MASK]"), Some(MASK_ID));
        assert_eq!(v.id_of("a"), Some(b'a' as u32 + NUM_SPECIALS));
    }

    #[test]
    fn chunking() {
        let c: Vec<&[u8]> = split_chunks(b"ab cd  e");
        assert_eq!(c, vec![&b"ab"[..], b" cd", b"  e"]);
        assert!(split_chunks(b"").is_empty());
        assert_eq!(split_chunks(b" x"), vec![&b" x"[..]]);
    }

    #[test]
    fn encode_empty() {
        assert!(Vocab::base().encode("").is_empty());
    }

    #[test]
    fn save_load_roundtrip() {
        let v = train_vocab("the cat sat on the mat\nthe cat ate\n", 300).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (vp, mp) = (dir.path().join("vocab.txt"), dir.path().join("merges.txt"));
        v.save(&vp, &mp).unwrap();
        let text = fs::read_to_string(&vp).unwrap();
        assert!(text.starts_with("[PAD]\t0\n[UNK]\t1\n[CLS]\t2\n[SEP]\t3\n[MASK]\t4\n"));
        let loaded = Vocab::load(&vp, &mp).unwrap();
        assert_eq!(loaded, v);
    }

    #[test]
    fn parse_rejects_duplicates_and_gaps() {
        let v = Vocab::base();
        let dir = tempfile::tempdir().unwrap();
        let (vp, mp) = (dir.path().join("v"), dir.path().join("m"));
        v.save(&vp, &mp).unwrap();
        let text = fs::read_to_string(&vp).unwrap();
        let dup = format!("{text}a\t261\n");
        assert!(matches!(
            Vocab::parse(&dup, "", "v", "m"),
            Err(TokenizerError::Format { line: 262, .. })
        ));
        let gap = text.replace("[CLS]\t2", "[CLS]\t7");
        assert!(Vocab::parse(&gap, "", "v", "m").is_err());
        assert!(Vocab::parse(&text, "x\ty\n", "v", "m").is_err());
    }
}
