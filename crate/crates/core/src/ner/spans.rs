/// A parsed BIO tag; the type is empty for untyped corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    O,
    B(&'a str),
    I(&'a str),
}

impl<'a> Tag<'a> {
    pub fn parse(label: &'a str) -> Option<Self> {
        match label {
            "O" => Some(Tag::O),
            "B" => Some(Tag::B("")),
            "I" => Some(Tag::I("")),
            _ => {
                let (head, t) = label.split_once('-')?;
                if t.is_empty() {
                    return None;
                }
                match head {
                    "B" => Some(Tag::B(t)),
                    "I" => Some(Tag::I(t)),
                    _ => None,
                }
            }
        }
    }

    pub fn render(&self) -> String {
        match self {
            Tag::O => "O".to_string(),
            Tag::B("") => "B".to_string(),
            Tag::I("") => "I".to_string(),
            Tag::B(t) => format!("B-{t}"),
            Tag::I(t) => format!("I-{t}"),
        }
    }
}

/// Half-open word range `[start, end)` with an entity type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// Spans in start order. An `I` that does not continue a span of its own
/// type opens a new one. Unparsable labels count as `O`.
pub fn decode_spans<S: AsRef<str>>(labels: &[S]) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, label) in labels.iter().enumerate() {
        let tag = Tag::parse(label.as_ref()).unwrap_or(Tag::O);
        match tag {
            Tag::I(t) if open.as_ref().is_some_and(|s| s.kind == t) => {
                open.as_mut().expect("checked").end = i + 1;
            }
            Tag::B(t) | Tag::I(t) => {
                spans.extend(open.take());
                open = Some(EntitySpan {
                    start: i,
                    end: i + 1,
                    kind: t.to_string(),
                });
            }
            Tag::O => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// BIO labels of length `len` for non-overlapping `spans`.
pub fn encode_spans(spans: &[EntitySpan], len: usize) -> Vec<String> {
    let mut out = vec!["O".to_string(); len];
    for s in spans {
        out[s.start] = Tag::B(&s.kind).render();
        for l in &mut out[s.start + 1..s.end] {
            *l = Tag::I(&s.kind).render();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, kind: &str) -> EntitySpan {
        EntitySpan {
            start,
            end,
            kind: kind.to_string(),
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(decode_spans(&["B", "I", "O", "B"]), [span(0, 2, ""), span(3, 4, "")]);
        assert_eq!(decode_spans(&["O", "I", "I"]), [span(1, 3, "")]);
        assert_eq!(
            decode_spans(&["B-Chem", "I-Dis"]),
            [span(0, 1, "Chem"), span(1, 2, "Dis")]
        );
        assert_eq!(decode_spans(&["B", "B", "I"]), [span(0, 1, ""), span(1, 3, "")]);
        assert!(decode_spans::<&str>(&[]).is_empty());
    }

    #[test]
    fn tag_parsing() {
        assert_eq!(Tag::parse("B-Gene"), Some(Tag::B("Gene")));
        assert_eq!(Tag::parse("I"), Some(Tag::I("")));
        assert_eq!(Tag::parse("B-"), None);
        assert_eq!(Tag::parse("S-x"), None);
        assert_eq!(Tag::parse("I-a-b"), Some(Tag::I("a-b")));
    }

    #[test]
    fn encode_inverts_decode() {
        let labels = ["B-x", "I-x", "O", "B-y", "B-y", "I-y"];
        assert_eq!(encode_spans(&decode_spans(&labels), 6), labels);
    }
}
