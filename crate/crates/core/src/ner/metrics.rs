use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use rayon::prelude::*;

use super::spans::{decode_spans, EntitySpan};
use super::NerError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpanCounts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanCounts {
    fn add(&mut self, o: SpanCounts) {
        self.true_positives += o.true_positives;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Micro-averaged entity scores plus a per-type breakdown.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub overall: SpanCounts,
    pub per_type: BTreeMap<String, SpanCounts>,
}

impl Evaluation {
    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    /// `key=value` lines, four decimals.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |prefix: &str, c: &SpanCounts| {
            let _ = writeln!(out, "{prefix}precision={:.4}", c.precision());
            let _ = writeln!(out, "{prefix}recall={:.4}", c.recall());
            let _ = writeln!(out, "{prefix}f1={:.4}", c.f1());
        };
        put("", &self.overall);
        for (t, c) in &self.per_type {
            let name = if t.is_empty() { "untyped" } else { t };
            put(&format!("{name}."), c);
        }
        out
    }

    pub fn to_report(&self) -> String {
        let mut out = String::from("entity-level exact match, micro-averaged over types\n");
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "type", "precision", "recall", "f1", "tp", "pred", "gold"
        );
        let mut row = |name: &str, c: &SpanCounts| {
            let _ = writeln!(
                out,
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
                name,
                c.precision(),
                c.recall(),
                c.f1(),
                c.true_positives,
                c.predicted,
                c.gold
            );
        };
        for (t, c) in &self.per_type {
            row(if t.is_empty() { "(untyped)" } else { t }, c);
        }
        row("overall", &self.overall);
        out
    }
}

fn sentence_counts(gold: &[String], pred: &[String]) -> BTreeMap<String, SpanCounts> {
    let g = decode_spans(gold);
    let p = decode_spans(pred);
    let gset: HashSet<&EntitySpan> = g.iter().collect();
    let mut out: BTreeMap<String, SpanCounts> = BTreeMap::new();
    for s in &g {
        out.entry(s.kind.clone()).or_default().gold += 1;
    }
    for s in &p {
        let c = out.entry(s.kind.clone()).or_default();
        c.predicted += 1;
        if gset.contains(s) {
            c.true_positives += 1;
        }
    }
    out
}

/// Exact-match scoring on (start, end, type) over aligned label sequences.
pub fn evaluate_entities(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<Evaluation, NerError> {
    if gold.len() != pred.len() {
        return Err(NerError::LengthMismatch(format!(
            "{} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if let Some(i) = gold.iter().zip(pred).position(|(g, p)| g.len() != p.len()) {
        return Err(NerError::LengthMismatch(format!(
            "sentence {i}: {} gold labels vs {} predicted",
            gold[i].len(),
            pred[i].len()
        )));
    }
    let per_sentence: Vec<BTreeMap<String, SpanCounts>> =
        gold.par_iter().zip(pred).map(|(g, p)| sentence_counts(g, p)).collect();
    let mut eval = Evaluation::default();
    for counts in per_sentence {
        for (t, c) in counts {
            eval.overall.add(c);
            eval.per_type.entry(t).or_default().add(c);
        }
    }
    Ok(eval)
}
