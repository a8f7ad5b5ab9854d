use rayon::prelude::*;

use super::CorpusError;

/// Lines with fewer characters than this (after trimming trailing whitespace)
/// are dropped.
pub const MIN_SENTENCE_CHARS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub sentences: Vec<String>,
}

/// Cleans one raw document: drops blank lines and lines shorter than
/// [`MIN_SENTENCE_CHARS`] characters.
fn clean_document(raw: &str) -> Document {
    let sentences = raw
        .split('\n')
        .map(str::trim_end)
        .filter(|l| !l.is_empty() && l.chars().count() >= MIN_SENTENCE_CHARS)
        .map(str::to_string)
        .collect();
    Document { sentences }
}

/// Sentence-per-line corpus with a single blank line between documents.
/// Documents left empty by filtering are omitted.
pub fn preprocess_documents<S: AsRef<str> + Sync>(docs: &[S]) -> String {
    let cleaned: Vec<Document> = docs.par_iter().map(|d| clean_document(d.as_ref())).collect();
    let blocks: Vec<String> = cleaned
        .into_iter()
        .filter(|d| !d.sentences.is_empty())
        .map(|d| {
            let mut s = d.sentences.join("\n");
            s.push('\n');
            s
        })
        .collect();
    blocks.join("\n")
}

/// Like [`preprocess_documents`], for raw files given as `(name, bytes)`.
pub fn preprocess_raw<N: AsRef<str>, B: AsRef<[u8]>>(files: &[(N, B)]) -> Result<String, CorpusError> {
    let texts = files
        .iter()
        .map(|(name, bytes)| {
            std::str::from_utf8(bytes.as_ref()).map_err(|e| CorpusError::InvalidUtf8 {
                file: name.as_ref().to_string(),
                offset: e.valid_up_to(),
            })
        })
        .collect::<Result<Vec<&str>, _>>()?;
    Ok(preprocess_documents(&texts))
}

/// Splits a sentence-per-line corpus at blank lines.
pub fn split_documents(corpus: &str) -> Vec<Document> {
    let mut docs = Vec::new();
    let mut current = Document::default();
    for line in corpus.lines() {
        if line.trim().is_empty() {
            if !current.sentences.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
        } else {
            current.sentences.push(line.to_string());
        }
    }
    if !current.sentences.is_empty() {
        docs.push(current);
    }
    docs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub words: usize,
}

impl std::ops::Add for CorpusStats {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            documents: self.documents + o.documents,
            sentences: self.sentences + o.sentences,
            words: self.words + o.words,
        }
    }
}

impl std::iter::Sum for CorpusStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn corpus_stats(corpus: &str) -> CorpusStats {
    let docs = split_documents(corpus);
    CorpusStats {
        documents: docs.len(),
        sentences: docs.iter().map(|d| d.sentences.len()).sum(),
        words: docs
            .iter()
            .flat_map(|d| &d.sentences)
            .map(|s| s.split_whitespace().count())
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LONG: &str = "This sentence is longer than twenty characters.";

    #[test]
    fn drops_short_and_blank_lines() {
        let raw = format!("Too short.\n\n{LONG}\n");
        assert_eq!(preprocess_documents(&[raw]), format!("{LONG}\n"));
    }

    #[test]
    fn blank_line_between_documents() {
        let line = "abcdefghij klmnopqrstuvw"; // 24 chars
        let line25 = format!("{line}x");
        assert_eq!(line25.chars().count(), 25);
        let out = preprocess_documents(&[line25.clone(), line25.clone()]);
        assert_eq!(out, format!("{line25}\n\n{line25}\n"));
    }

    #[test]
    fn empty_document_omitted() {
        let out = preprocess_documents(&[LONG, "short\n\n", LONG]);
        assert_eq!(out, format!("{LONG}\n\n{LONG}\n"));
        assert_eq!(preprocess_documents(&["tiny"]), "");
    }

    #[test]
    fn threshold_counts_characters_not_bytes() {
        // 19 characters, 38 bytes
        let greek = "αβγδεζηθικλμνξοπρστ";
        assert_eq!(greek.chars().count(), 19);
        assert_eq!(preprocess_documents(&[greek]), "");
        let twenty = format!("{greek}υ");
        assert_eq!(preprocess_documents(&[twenty.as_str()]), format!("{twenty}\n"));
        // trailing whitespace does not count
        assert_eq!(preprocess_documents(&[format!("{greek}   \r")]), "");
    }

    #[test]
    fn invalid_utf8_names_file_and_offset() {
        let files = [("a.txt", b"good line that is long enough\n".to_vec()), ("b.txt", b"ok\xFFbad".to_vec())];
        match preprocess_raw(&files) {
            Err(CorpusError::InvalidUtf8 { file, offset }) => {
                assert_eq!(file, "b.txt");
                assert_eq!(offset, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stats_examples() {
        assert_eq!(
            corpus_stats("aa bb\n\ncc"),
            CorpusStats {
                documents: 2,
                sentences: 2,
                words: 3
            }
        );
        assert_eq!(corpus_stats(""), CorpusStats::default());
    }

    #[test]
    fn stats_constructed_fixture() {
        let sentence = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
        let doc = format!("{sentence}\n{sentence}\n");
        let corpus = [doc.clone(), doc.clone(), doc].join("\n");
        let s = corpus_stats(&corpus);
        assert_eq!((s.documents, s.sentences, s.words), (3, 6, 60));
        assert_eq!((s + s).words, 120);
    }
}
