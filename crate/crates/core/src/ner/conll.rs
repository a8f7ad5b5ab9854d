use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::spans::Tag;
use super::NerError;

/// One sentence: words and their BIO labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerExample {
    pub words: Vec<String>,
    pub labels: Vec<String>,
}

/// Ordered labels: "O" first, then `B-t`, `I-t` per type in type order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    /// Builds the set from observed labels. Fails on an `I` tag whose `B`
    /// counterpart is absent or on anything that is not a BIO tag.
    pub fn from_labels<'a>(observed: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        let mut b_types = BTreeSet::new();
        let mut i_types = BTreeSet::new();
        for label in observed {
            match Tag::parse(label).ok_or_else(|| format!("not a BIO label: {label:?}"))? {
                Tag::O => {}
                Tag::B(t) => {
                    b_types.insert(t.to_string());
                }
                Tag::I(t) => {
                    i_types.insert(t.to_string());
                }
            }
        }
        if let Some(t) = i_types.difference(&b_types).next() {
            return Err(format!("{} present without {}", Tag::I(t).render(), Tag::B(t).render()));
        }
        let mut labels = vec!["O".to_string()];
        for t in &b_types {
            labels.push(Tag::B(t).render());
            if i_types.contains(t) {
                labels.push(Tag::I(t).render());
            }
        }
        Ok(Self::from_ordered(labels))
    }

    fn from_ordered(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    /// Parses the comma-separated form written by [`to_list`](Self::to_list).
    pub fn from_list(list: &str) -> Result<Self, String> {
        let labels: Vec<String> = list.split(',').map(str::to_string).collect();
        let set = Self::from_labels(labels.iter().map(String::as_str))?;
        if set.labels != labels {
            return Err(format!("label list {list:?} is not in canonical order"));
        }
        Ok(set)
    }

    pub fn to_list(&self) -> String {
        self.labels.join(",")
    }

    /// Union with `other`, keeping canonical order.
    pub fn union(&self, other: &LabelSet) -> LabelSet {
        let all = self.labels.iter().chain(&other.labels).map(String::as_str);
        Self::from_labels(all).expect("union of valid sets is valid")
    }

    pub fn contains_all(&self, other: &LabelSet) -> bool {
        other.labels.iter().all(|l| self.index.contains_key(l))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

pub fn read_conll(path: &Path) -> Result<(Vec<NerExample>, LabelSet), NerError> {
    let text = std::fs::read_to_string(path)?;
    parse_conll(&text, &path.display().to_string())
}

/// Parses CoNLL text; `source` names the input in errors.
pub fn parse_conll(text: &str, source: &str) -> Result<(Vec<NerExample>, LabelSet), NerError> {
    let err = |line: usize, message: String| NerError::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let mut examples = Vec::new();
    let mut current = NerExample {
        words: Vec::new(),
        labels: Vec::new(),
    };
    let mut b_seen = BTreeSet::new();
    let mut first_i: Vec<(String, usize)> = Vec::new();
    let mut observed = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !current.words.is_empty() {
                examples.push(std::mem::replace(
                    &mut current,
                    NerExample {
                        words: Vec::new(),
                        labels: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if cols.len() < 2 {
            return Err(err(line_no, format!("label column missing in {line:?}")));
        }
        let label = cols[cols.len() - 1];
        match Tag::parse(label) {
            None => return Err(err(line_no, format!("not a BIO label: {label:?}"))),
            Some(Tag::B(t)) => {
                b_seen.insert(t.to_string());
            }
            Some(Tag::I(t)) => {
                if !first_i.iter().any(|(x, _)| x == t) {
                    first_i.push((t.to_string(), line_no));
                }
            }
            Some(Tag::O) => {}
        }
        observed.insert(label.to_string());
        current.words.push(cols[0].to_string());
        current.labels.push(label.to_string());
    }
    if !current.words.is_empty() {
        examples.push(current);
    }
    if let Some((t, line)) = first_i.iter().find(|(t, _)| !b_seen.contains(t)) {
        return Err(err(
            *line,
            format!("{} without any {}", Tag::I(t).render(), Tag::B(t).render()),
        ));
    }
    let labels = LabelSet::from_labels(observed.iter().map(String::as_str)).map_err(|m| err(0, m))?;
    Ok((examples, labels))
}

/// CoNLL text for `examples` with one `word label` line per word.
pub fn write_conll(examples: &[NerExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        for (w, l) in ex.words.iter().zip(&ex.labels) {
            out.push_str(w);
            out.push(' ');
            out.push_str(l);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_parse() {
        let (ex, labels) = parse_conll("aspirin B\nhelps O\n\n", "t").unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].words, ["aspirin", "helps"]);
        assert_eq!(ex[0].labels, ["B", "O"]);
        assert_eq!(labels.labels(), ["O", "B"]);
    }

    #[test]
    fn sentences_docstart_and_extra_columns() {
        let text = "-DOCSTART- O\n\na NN O\nb NN B-Chem\n\n\nc NN I-Chem\nd NN B-Dis\n";
        let (ex, labels) = parse_conll(text, "t").unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].labels, ["I-Chem", "B-Dis"]);
        assert_eq!(labels.labels(), ["O", "B-Chem", "I-Chem", "B-Dis"]);
        assert_eq!(LabelSet::from_list(&labels.to_list()).unwrap(), labels);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_conll("a O\nlonely\n", "f.conll") {
            Err(NerError::Parse { line, .. }) => assert_eq!(line, 2),
            r => panic!("{r:?}"),
        }
        match parse_conll("a O\n\nb I-Gene\nc I-Gene\n", "f.conll") {
            Err(NerError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("B-Gene"));
            }
            r => panic!("{r:?}"),
        }
        assert!(parse_conll("a X\n", "f").is_err());
    }

    #[test]
    fn write_then_parse() {
        let text = "a B\nb I\nc O\n\nd O\n\n";
        let (ex, _) = parse_conll(text, "t").unwrap();
        assert_eq!(write_conll(&ex), text);
    }
}
