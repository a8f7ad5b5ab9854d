use std::path::Path;

use super::conll::{read_conll, NerExample};
use super::spans::decode_spans;
use super::NerError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub sentences: usize,
    pub tokens: usize,
    /// Decoded gold entity spans.
    pub annotations: usize,
}

pub fn example_stats(examples: &[NerExample]) -> DatasetStats {
    DatasetStats {
        sentences: examples.len(),
        tokens: examples.iter().map(|e| e.words.len()).sum(),
        annotations: examples.iter().map(|e| decode_spans(&e.labels).len()).sum(),
    }
}

pub fn dataset_stats(path: &Path) -> Result<DatasetStats, NerError> {
    Ok(example_stats(&read_conll(path)?.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::parse_conll;

    #[test]
    fn hand_counted() {
        let (ex, _) = parse_conll("a B\nb I\nc O\n\nd B\n", "t").unwrap();
        let s = example_stats(&ex);
        assert_eq!((s.sentences, s.tokens, s.annotations), (2, 4, 2));
        let (ex, _) = parse_conll("", "t").unwrap();
        assert_eq!(example_stats(&ex), DatasetStats::default());
    }
}
