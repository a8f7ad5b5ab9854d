use std::collections::{BTreeMap, HashMap, HashSet};

use super::{bytes_map, split_chunks, TokenizerError, Vocab, BASE_VOCAB_SIZE, NUM_SPECIALS, SPECIAL_TOKENS};

/// Learns merges greedily by pair frequency until the vocabulary reaches
/// `target_size` or no adjacent pair occurs at least twice.
///
/// Ties between equally frequent pairs go to the lexicographically smallest
/// `(left bytes, right bytes)`. A merge whose bytes already exist as a piece
/// reuses that id instead of adding a new one.
pub fn train_vocab(corpus: &str, target_size: usize) -> Result<Vocab, TokenizerError> {
    if corpus.trim().is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if target_size < BASE_VOCAB_SIZE {
        return Err(TokenizerError::TargetTooSmall(target_size));
    }

    let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
    for line in corpus.lines() {
        for chunk in split_chunks(line.as_bytes()) {
            *counts.entry(chunk).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<u32>, usize)> = counts
        .into_iter()
        .map(|(w, c)| (w.iter().map(|&b| b as u32 + NUM_SPECIALS).collect(), c))
        .collect();

    let mut vocab = Vocab::base();
    let mut pieces = vocab.pieces.clone();
    let mut by_bytes: HashMap<Vec<u8>, u32> = pieces
        .iter()
        .enumerate()
        .skip(NUM_SPECIALS as usize)
        .map(|(id, p)| (p.clone(), id as u32))
        .collect();
    let reserved: HashSet<&str> = SPECIAL_TOKENS.into_iter().collect();
    let mut merges = Vec::new();

    while pieces.len() < target_size {
        let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (ids, c) in &words {
            for w in ids.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += c;
            }
        }
        let best = pair_counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .filter(|&((l, r), _)| {
                let joined = [pieces[l as usize].as_slice(), &pieces[r as usize]].concat();
                !reserved.contains(bytes_map::encode_piece(&joined).as_str())
            })
            .max_by(|&((l1, r1), c1), &((l2, r2), c2)| {
                c1.cmp(&c2).then_with(|| {
                    // smaller bytes win, so reverse for max_by
                    (&pieces[l2 as usize], &pieces[r2 as usize])
                        .cmp(&(&pieces[l1 as usize], &pieces[r1 as usize]))
                })
            });
        let Some(((l, r), _)) = best else { break };

        let joined = [pieces[l as usize].as_slice(), &pieces[r as usize]].concat();
        let merged = match by_bytes.get(&joined) {
            Some(&id) => id,
            None => {
                let id = pieces.len() as u32;
                by_bytes.insert(joined.clone(), id);
                pieces.push(joined);
                id
            }
        };
        merges.push((l, r));
        for (ids, _) in &mut words {
            merge_in_place(ids, l, r, merged);
        }
    }

    vocab = Vocab::from_parts(pieces, merges);
    Ok(vocab)
}

fn merge_in_place(ids: &mut Vec<u32>, l: u32, r: u32, merged: u32) {
    if ids.len() < 2 {
        return;
    }
    let mut out = 0;
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
            ids[out] = merged;
            i += 2;
        } else {
            ids[out] = ids[i];
            i += 1;
        }
        out += 1;
    }
    ids.truncate(out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece_pair(v: &Vocab, i: usize) -> (String, String) {
        let (l, r) = v.merges()[i];
        (v.piece(l).unwrap(), v.piece(r).unwrap())
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let v = train_vocab("abab abab", 262).unwrap();
        assert_eq!(piece_pair(&v, 0), ("a".into(), "b".into()));
        assert_eq!(v.size(), 262);
    }

    #[test]
    fn single_repeated_byte() {
        let v = train_vocab("zzzz", 262).unwrap();
        assert_eq!(piece_pair(&v, 0), ("z".into(), "z".into()));
    }

    #[test]
    fn base_budget_means_no_merges() {
        let v = train_vocab("any corpus at all, repeated repeated", 261).unwrap();
        assert_eq!(v.size(), 261);
        assert!(v.merges().is_empty());
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // (c,d) and (a,b) both occur twice; (a,b) sorts first.
        let v = train_vocab("cdabcdab", 262).unwrap();
        assert_eq!(piece_pair(&v, 0), ("a".into(), "b".into()));
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let v = train_vocab("abc", 400).unwrap();
        assert_eq!(v.size(), BASE_VOCAB_SIZE);
    }

    #[test]
    fn errors() {
        assert!(matches!(train_vocab("", 300), Err(TokenizerError::EmptyCorpus)));
        assert!(matches!(train_vocab("ab", 260), Err(TokenizerError::TargetTooSmall(260))));
    }

    #[test]
    fn learned_merge_encodes_to_single_piece() {
        let v = train_vocab("abab abab", 262).unwrap();
        let ab = v.id_of("ab").unwrap();
        assert_eq!(v.encode("ab"), vec![ab]);
    }

    #[test]
    fn never_learns_special_token_text() {
        let v = train_vocab(&"[PAD] ".repeat(50), 300).unwrap();
        assert!((NUM_SPECIALS..v.size() as u32).all(|id| v.piece(id).unwrap() != "[PAD]"));
        assert_eq!(v.decode(&v.encode("[PAD]")), "[PAD]");
    }
}
